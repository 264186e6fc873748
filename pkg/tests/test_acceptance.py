"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one ``ACCEPTANCE <name>: PASS/FAIL`` line (run pytest -s to
watch them).  Long runs are shared through module-scoped fixtures; the whole
module stays well inside the stated runtime budgets.
"""

import math
import shutil
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from ylab.backgrounds import (
    bump_source,
    decay_order_estimate,
    flat_data,
    gaussian_bump_data,
    make_flat_background,
    make_profile_background,
    make_synthetic_background,
    newtonian_data,
    schwarzschild_data,
)
from ylab.cli import cmd_report, cmd_simulate, parse_config_text
from ylab.diagnostics import (
    NONDECREASING,
    NONINCREASING,
    audit_monotone,
    convergence_to_limit,
    fit_decay_exponent,
    mass_drop_report,
)
from ylab.elliptic import (
    NON_POSITIVE,
    POSITIVE,
    compute_R,
    prescribe_scalar_curvature,
    solve_scalar_flat,
    yamabe_sign,
)
from ylab.flow import FlowConfig, adm_mass, run_flow
from ylab.grids import (
    LOG_STRETCHED,
    UNIFORM,
    RadialField,
    build_grid,
)


def _criterion(name: str, ok: bool, detail: str = ""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{name} failed: {detail}"


def heat_kernel(r, s):
    return (4.0 * math.pi * s) ** -1.5 * np.exp(-(r**2) / (4.0 * s))


@pytest.fixture(scope="module")
def bump_run():
    """Gaussian-bump Y>0 run shared by criteria 3, 4, 5."""
    g = build_grid(3, 0.0, 512.0, 4096, LOG_STRETCHED)
    bg = make_flat_background(3, g)
    init = gaussian_bump_data(g, eps=0.2, sigma=1.0)
    cfg = FlowConfig(
        dt0=1e-3, dt_max=0.25, safety=1.2, t_end=50.0,
        monitor_every=2, checkpoint_every=10,
    )
    res = run_flow(bg, init, cfg)
    assert not res.halted
    return g, bg, res


@pytest.fixture(scope="module")
def newtonian_run():
    """Nonnegative integrable-curvature run shared by criteria 4, 5, 6."""
    g = build_grid(3, 0.0, 4096.0, 8192, LOG_STRETCHED)
    bg = make_flat_background(3, g)
    init = newtonian_data(g, bump_source(g, total=4.0 * math.pi, radius=4.0))
    cfg = FlowConfig(
        dt0=1e-3, dt_max=1.0, safety=1.25, t_end=200.0,
        monitor_every=2, checkpoint_every=25,
    )
    res = run_flow(bg, init, cfg)
    assert not res.halted
    return g, bg, res


class TestCriterion1FixedPoints:
    def test_flat_identity_thousand_steps(self):
        g = build_grid(3, 0.0, 256.0, 1024, LOG_STRETCHED)
        bg = make_flat_background(3, g)
        cfg = FlowConfig(
            dt0=0.01, dt_max=0.01, safety=1.0, t_end=10.0,
            monitor_every=100, checkpoint_every=10**9,
        )
        res = run_flow(bg, flat_data(g), cfg)
        dev = float(np.max(np.abs(res.final.u.values - 1.0)))
        dev = max(dev, max(abs(r.max_u - 1.0) for r in res.records))
        _criterion(
            "1a flat fixed point (1000 steps)",
            res.final.step_index == 1000 and dev <= 1e-12,
            f"steps={res.final.step_index} deviation={dev:.3e}",
        )

    def test_schwarzschild_stationary(self):
        g = build_grid(3, 0.5, 1000.0, 4096, LOG_STRETCHED)
        bg = make_flat_background(3, g)
        init = schwarzschild_data(3, 1.0, g)
        cfg = FlowConfig(dt0=0.01, t_end=10.0, monitor_every=1, safety=1.5)
        res = run_flow(bg, init, cfg)
        sup_r = max(r.sup_R for r in res.records)
        mass_err = max(abs(r.mass - 1.0) for r in res.records)
        _criterion(
            "1b Schwarzschild stationary",
            sup_r <= 10.0 * g.h**2 and mass_err <= 1e-2,
            f"sup_R={sup_r:.3e} (bound {10 * g.h**2:.3e}) mass_err={mass_err:.3e}",
        )


class TestCriterion2Linearization:
    def test_heat_kernel_oracle(self):
        g = build_grid(3, 0.0, 64.0, 2048, LOG_STRETCHED)
        bg = make_flat_background(3, g)
        eps = 1e-4
        from ylab.backgrounds import InitialData

        init = InitialData(RadialField(g, 1.0 + eps * heat_kernel(g.nodes, 1.0)), "custom")
        errs = {}
        for dt in (0.02, 0.01, 0.00125):
            cfg = FlowConfig(
                dt0=dt, dt_max=dt, safety=1.0, t_end=1.0,
                monitor_every=10**9, checkpoint_every=10**9, newton_tol=1e-13,
            )
            res = run_flow(bg, init, cfg)
            exact = 1.0 + eps * heat_kernel(g.nodes, 1.0 + 2.0 * res.final.t)
            errs[dt] = float(np.max(np.abs(res.final.u.values - exact)))
        bound = 5.0 * (1e-8 + 0.01 + g.h**2)
        floor = errs[0.00125]
        ratio = (errs[0.02] - floor) / (errs[0.01] - floor)
        _criterion(
            "2 heat-kernel linearization",
            errs[0.01] <= bound and ratio >= 1.8,
            f"err(dt=0.01)={errs[0.01]:.3e} (bound {bound:.3e}) dt-part ratio={ratio:.2f}",
        )


class TestCriterion3MonotoneInvariants:
    def test_lp_monotonicity(self, bump_run):
        g, bg, res = bump_run
        ok = True
        detail = []
        for p in (1.4, 1.5, 1.6):
            series = [r.lp_R[p] for r in res.records[5:]]
            audit = audit_monotone(series, NONINCREASING, 1e-8, quantity=f"p={p}")
            ok = ok and audit.violations == 0
            detail.append(f"p={p}: {audit.violations} violations")
        _criterion("3a Lp monotone (p = 1.4, 1.5, 1.6)", ok, "; ".join(detail))

    def test_min_r_nondecreasing(self, bump_run):
        g, bg, res = bump_run
        audit = audit_monotone(
            [r.min_R for r in res.records], NONDECREASING, 10.0 * g.h**2, quantity="min_R"
        )
        _criterion(
            "3b min R nondecreasing",
            audit.violations == 0,
            f"violations={audit.violations} worst={audit.worst_violation:.3e}",
        )


class TestCriterion4SupNormDecay:
    def test_bump_rate(self, bump_run):
        g, bg, res = bump_run
        ts = [r.t for r in res.records]
        ys = [r.sup_R for r in res.records]
        t_hi = min(ts[-1], res.valid_t_max)
        fit = fit_decay_exponent(ts, ys, window=(t_hi / 2.0, t_hi))
        _criterion(
            "4a sup R decay (bump run)",
            fit.exponent <= -1.0 and fit.r_squared >= 0.9,
            f"exponent={fit.exponent:.3f} r2={fit.r_squared:.4f}",
        )

    def test_newtonian_rate(self, newtonian_run):
        g, bg, res = newtonian_run
        ts = [r.t for r in res.records]
        ys = [r.sup_R for r in res.records]
        t_hi = min(ts[-1], res.valid_t_max)
        fit = fit_decay_exponent(ts, ys, window=(t_hi / 2.0, t_hi))
        _criterion(
            "4b sup R decay (nonnegative integrable curvature)",
            fit.exponent <= -1.1,
            f"exponent={fit.exponent:.3f} (alpha < 3/2 shape; asserting <= -1.1)",
        )


class TestCriterion5Convergence:
    def test_weighted_convergence_to_limit(self, bump_run):
        g, bg, res = bump_run
        u_inf, report = solve_scalar_flat(bg)
        rep = convergence_to_limit(
            res.checkpoints, u_inf, tau_prime=0.0, valid_t_max=res.valid_t_max
        )
        norms = np.array(rep.norms)
        decreasing = bool(np.all(np.diff(norms[1:]) <= 1e-12))
        _criterion(
            "5a convergence to the scalar-flat limit",
            (not rep.zero_series) and decreasing and rep.fit.exponent < 0.0,
            f"exponent={rep.fit.exponent:.3f} terminal={norms[-1]:.3e}",
        )

    def test_spatial_decay_order(self, newtonian_run):
        g, bg, res = newtonian_run
        order = decay_order_estimate(RadialField(g, res.final.u.values - 1.0))
        _criterion(
            "5b spatial decay order of u - 1 (tau = 1 data)",
            abs(order - 1.0) <= 0.3,
            f"fitted order={order:.4f} target 1.0 +/- 0.3",
        )


class TestCriterion6MassDrop:
    def test_mass_accounting(self, newtonian_run):
        g, bg, res = newtonian_run
        u_inf, _ = solve_scalar_flat(bg)
        m_inf = adm_mass(u_inf)
        records = [r for r in res.records if r.t <= res.valid_t_max]
        rep = mass_drop_report(records, m_inf, n=3)
        m0 = records[0].mass
        ok_m0 = abs(m0 - 2.0) <= 0.02
        ok_drift = rep.drift_rel <= 1e-2
        ok_drop = rep.drop_error <= 0.05 * abs(rep.drop_expected)
        ok_combo = rep.combination_error <= 0.05 * max(abs(m0), 1.0)
        _criterion(
            "6 mass-drop identity",
            ok_m0 and ok_drift and ok_drop and ok_combo,
            f"m0={m0:.4f} drift={rep.drift_rel:.2e} "
            f"terminal (1/16pi) int R dV={rep.drop_estimate:.4f} (target {rep.drop_expected:.4f}) "
            f"|c(t_end) - m_inf|={rep.combination_error:.3e}",
        )


class TestCriterion7YamabeDichotomy:
    def test_flat_positive(self):
        g = build_grid(3, 0.0, 1000.0, 4096, LOG_STRETCHED)
        bg = make_flat_background(3, g)
        sign = yamabe_sign(bg)
        _criterion(
            "7a flat class is Yamabe positive",
            sign.sign == POSITIVE and sign.report.final_residual <= 1e-10,
            f"residual={sign.report.final_residual:.3e}",
        )

    def test_deep_well_nonpositive_with_independent_quadrature(self):
        g = build_grid(3, 0.0, 512.0, 4096, LOG_STRETCHED)
        bg = make_synthetic_background(3, 1.0, -50.0, 2.0, 1.0, g)
        sign = yamabe_sign(bg)
        assert sign.sign == NON_POSITIVE and not sign.low_confidence
        center, width, cut = sign.trial_params

        # independent re-evaluation: adaptive quadrature on the analytic trial
        shift = math.exp(-(((cut - center) / width) ** 2))

        def v(r):
            return max(math.exp(-(((r - center) / width) ** 2)) - shift, 0.0) if r < cut else 0.0

        def dv(r):
            return (-2.0 * (r - center) / width**2 * math.exp(-(((r - center) / width) ** 2))
                    if r < cut else 0.0)

        def r0(r):
            return -50.0 * math.exp(-((r - 2.0) ** 2)) * (1.0 + r**2) ** -1.5

        four_pi = 4.0 * math.pi
        grad = quad(lambda r: dv(r) ** 2 * four_pi * r**2, 0.0, cut, limit=200)[0]
        pot = quad(lambda r: r0(r) * v(r) ** 2 * four_pi * r**2, 0.0, cut, limit=200)[0]
        den = quad(lambda r: v(r) ** 6 * four_pi * r**2, 0.0, cut, limit=200)[0] ** (1.0 / 3.0)
        q_indep = (8.0 * grad + pot) / den
        agree = abs(q_indep - sign.quotient) <= 0.02 * abs(q_indep)
        _criterion(
            "7b deep well is Yamabe nonpositive (independent quadrature)",
            q_indep < 0.0 and sign.quotient < 0.0 and agree,
            f"Q_grid={sign.quotient:.4f} Q_quad={q_indep:.4f}",
        )

    def test_nonpositive_flow_blows_up(self):
        g = build_grid(3, 0.0, 512.0, 2048, LOG_STRETCHED)
        bg = make_synthetic_background(3, 1.0, -50.0, 2.0, 1.0, g)
        cfg = FlowConfig(
            dt0=1e-3, safety=2.0, t_end=1e13, monitor_every=10,
            checkpoint_every=10**9, stop_max_u=1e3, newton_max=40,
        )
        res = run_flow(bg, flat_data(g), cfg)
        max_u = max(r.max_u for r in res.records + [])
        max_u = max(max_u, float(np.max(res.final.u.values)))
        _criterion(
            "7c nonpositive background: no convergence",
            res.halted or max_u >= 1e3,
            f"halted={res.halted} reason={res.halt_reason} max_u={max_u:.1f}",
        )


class TestCriterion8EllipticRoundTrips:
    def test_manufactured_order(self):
        errs = []
        hs = []
        for M in (128, 256, 512):
            g = build_grid(3, 0.0, 8.0, M, UNIFORM)
            r = g.nodes
            ustar = 1.0 + np.exp(-(r**2))
            r0 = 8.0 * (4.0 * r**2 - 6.0) * np.exp(-(r**2)) / ustar
            bg = make_profile_background(3, 0.9, RadialField(g, r0), "manufactured")
            u, rep = solve_scalar_flat(bg)
            assert rep.converged
            errs.append(float(np.max(np.abs(u.values - ustar))))
            hs.append(g.h)
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        ok = all(1.8 <= o <= 2.2 for o in orders)
        _criterion(
            "8a manufactured scalar-flat order",
            ok,
            f"errors={['%.2e' % e for e in errs]} orders={['%.2f' % o for o in orders]}",
        )

    def test_prescribe_round_trip(self):
        g = build_grid(3, 0.0, 60.0, 1024, LOG_STRETCHED)
        r = g.nodes
        phi_star = RadialField(g, 1.0 + 0.1 * np.exp(-(r**2)))
        r_flat = compute_R(phi_star, make_flat_background(3, g)).values
        denom = 1.0 - phi_star.values**-4.0
        ok_mask = (r_flat > 0.0) & (denom > 1e-12)
        lift = np.where(ok_mask, r_flat / np.where(ok_mask, denom, 1.0), 0.0)
        bg = make_profile_background(3, 0.9, RadialField(g, lift + 1e-8), "lifted")
        target = compute_R(phi_star, bg)
        phi, _ = prescribe_scalar_curvature(bg, target)
        err = float(np.max(np.abs(phi.values - phi_star.values)))
        _criterion(
            "8b conformal round-trip",
            err <= 10.0 * g.h**2,
            f"max|phi' - phi|={err:.3e} (bound {10 * g.h**2:.3e})",
        )

    def test_trivial_target_single_step(self):
        g = build_grid(3, 0.0, 256.0, 1024, LOG_STRETCHED)
        bg = make_flat_background(3, g)
        phi, rep = prescribe_scalar_curvature(bg, bg.r0_profile)
        _criterion(
            "8c trivial target needs <= 1 Newton step",
            rep.iterations <= 1 and bool(np.all(phi.values == 1.0)),
            f"iterations={rep.iterations}",
        )


class TestCriterion9DeterminismSchema:
    CONFIG = """
[run]
id = det
[grid]
n = 3
R_max = 128
M = 512
[initial]
family = gaussian_bump
eps = 0.1
sigma = 1.0
[flow]
dt0 = 0.01
dt_max = 0.2
t_end = 2.0
monitor_every = 4
checkpoint_every = 20
"""

    def test_bit_identical_runs(self, tmp_path):
        m = parse_config_text(self.CONFIG)
        cmd_simulate(replace(m, run_id="det-a"), tmp_path)
        cmd_simulate(replace(m, run_id="det-b"), tmp_path)
        a = (tmp_path / "det-a" / "monitor.csv").read_bytes()
        b = (tmp_path / "det-b" / "monitor.csv").read_bytes()
        same_final = (
            (tmp_path / "det-a" / "final_state.csv").read_bytes()
            == (tmp_path / "det-b" / "final_state.csv").read_bytes()
        )
        _criterion(
            "9a determinism (bit-identical CSVs)",
            a == b and same_final,
            f"monitor bytes equal={a == b}",
        )

    def test_report_exit_four_on_corruption(self, tmp_path):
        m = parse_config_text(self.CONFIG)
        cmd_simulate(replace(m, run_id="det-c"), tmp_path)
        rundir = tmp_path / "det-c"
        broken = tmp_path / "det-broken"
        shutil.copytree(rundir, broken)
        lines = (broken / "monitor.csv").read_text().splitlines()
        header = lines[1].split(",")
        col = header.index("lpR_p1.5")
        last = lines[-1].split(",")
        last[col] = "1e9"
        lines[-1] = ",".join(last)
        (broken / "monitor.csv").write_text("\n".join(lines) + "\n")
        rc_good = cmd_report([rundir], ["lp-monotone"], out=tmp_path / "rep1.json")
        rc_bad = cmd_report([broken], ["lp-monotone"], out=tmp_path / "rep2.json")
        _criterion(
            "9b report exit code on forced audit failure",
            rc_good == 0 and rc_bad == 4,
            f"clean={rc_good} corrupted={rc_bad}",
        )
