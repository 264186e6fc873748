"""Catalog of asymptotically flat backgrounds and initial data families.

A background is presented through the only two pieces of data the flow PDE
consumes: the flat radial Laplacian (module grids) and a scalar-curvature
coefficient profile R0(r) with decay |R0| <= C max(r,1)^{-2-tau}.

Two modes exist.  In geometric mode R0 is the honest scalar curvature of a
stated conformal seed factor over flat space (the flat background is the
seed-1 case).  Synthetic mode prescribes R0 directly as a free coefficient of
the PDE; this is loudly a model problem, used to reach the nonpositive
Yamabe regime that rotationally symmetric conformally flat geometry cannot
realize.  All PDE-level claims depend only on the pair (Laplacian, R0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, PositivityError, UndefinedFitError
from .grids import (
    RadialField,
    RadialGrid,
    constant_field,
    laplacian_radial,
)

GEOMETRIC = "geometric"
SYNTHETIC = "synthetic"


def conformal_exponents(n: int) -> tuple[float, float]:
    """Return (a(n), N) = (4(n-1)/(n-2), (n+2)/(n-2))."""
    if n < 3:
        raise ParameterError(f"dimension n must be >= 3, got {n}")
    return 4.0 * (n - 1.0) / (n - 2.0), (n + 2.0) / (n - 2.0)


@dataclass(frozen=True, eq=False)
class BackgroundSpec:
    """An AF background: dimension, decay order tau, and the profile R0(r)."""

    n: int
    tau: float
    r0_profile: RadialField
    mode: str
    name: str
    decay_constant: float
    seed: RadialField | None = None

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError(f"decay order tau must be positive, got {self.tau}")
        if self.mode not in (GEOMETRIC, SYNTHETIC):
            raise ConfigError(f"unknown background mode {self.mode!r}")
        check_decay(self.r0_profile, 2.0 + self.tau, self.decay_constant)
        if self.mode == GEOMETRIC:
            if self.seed is None:
                raise ConfigError("geometric mode requires a seed factor")
            self._check_geometric_consistency()

    def _check_geometric_consistency(self):
        grid = self.grid
        computed = curvature_of_seed(self.seed)
        scale = 1.0 + float(np.max(np.abs(computed.values)))
        err = np.max(np.abs(computed.values[1:-1] - self.r0_profile.values[1:-1]))
        if err > 10.0 * grid.h**2 * scale:
            raise ConfigError(
                f"geometric-mode profile disagrees with seed curvature (err {err:.3e})"
            )

    @property
    def grid(self) -> RadialGrid:
        return self.r0_profile.grid


def check_decay(profile: RadialField, order: float, C: float) -> None:
    bound = C * profile.grid.w ** (-order)
    excess = np.abs(profile.values) - bound
    if np.max(excess) > 1e-12 * (1.0 + C):
        i = int(np.argmax(excess))
        raise ConfigError(
            f"decay violation at r={profile.grid.nodes[i]:.3g}: "
            f"|R0|={abs(profile.values[i]):.3e} exceeds C*max(r,1)^-{order:g} with C={C:.3e}"
        )


def curvature_of_seed(seed: RadialField) -> RadialField:
    """Scalar curvature u^{-N} (-a(n) lap u) of the metric with factor u over flat."""
    if np.min(seed.values) <= 0.0:
        raise PositivityError("seed factor must be positive")
    n = seed.grid.n
    a, N = conformal_exponents(n)
    lap = laplacian_radial(seed)
    return RadialField(seed.grid, seed.values ** (-N) * (-a * lap.values))


def make_flat_background(n: int, grid: RadialGrid, tau: float | None = None) -> BackgroundSpec:
    """Flat space: R0 identically zero, seed factor identically one."""
    if n < 3:
        raise ParameterError(f"dimension n must be >= 3, got {n}")
    if grid.n != n:
        raise ConfigError(f"grid has dimension {grid.n}, requested {n}")
    if tau is None:
        tau = n - 2.0 - 0.01
    one = constant_field(grid, 1.0)
    return BackgroundSpec(
        n=n,
        tau=tau,
        r0_profile=constant_field(grid, 0.0),
        mode=GEOMETRIC,
        name=f"flat{n}",
        decay_constant=0.0,
        seed=one,
    )


def make_geometric_background(
    grid: RadialGrid, seed: RadialField, tau: float, name: str = "geometric"
) -> BackgroundSpec:
    """Background whose R0 is the curvature of the given seed factor over flat."""
    profile = curvature_of_seed(seed)
    C = float(np.max(np.abs(profile.values) * grid.w ** (2.0 + tau)))
    return BackgroundSpec(
        n=grid.n, tau=tau, r0_profile=profile, mode=GEOMETRIC,
        name=name, decay_constant=C, seed=seed,
    )


def make_synthetic_background(
    n: int,
    tau: float,
    amplitude: float,
    center: float,
    width: float,
    grid: RadialGrid,
    name: str | None = None,
) -> BackgroundSpec:
    """Prescribed coefficient R0(r) = A exp(-(r-r_c)^2/sigma^2) (1+r^2)^{-(2+tau)/2}.

    The envelope guarantees |R0| <= |A| max(r,1)^{-2-tau}, so the decay
    invariant holds with reported constant C = |A|.
    """
    if width <= 0.0:
        raise ParameterError(f"width must be positive, got {width}")
    if grid.n != n:
        raise ConfigError(f"grid has dimension {grid.n}, requested {n}")
    r = grid.nodes
    values = amplitude * np.exp(-((r - center) ** 2) / width**2) * (1.0 + r**2) ** (
        -(2.0 + tau) / 2.0
    )
    if name is None:
        name = f"synthetic:A={amplitude:g},rc={center:g},sigma={width:g},tau={tau:g}"
    return BackgroundSpec(
        n=n, tau=tau, r0_profile=RadialField(grid, values), mode=SYNTHETIC,
        name=name, decay_constant=abs(amplitude),
    )


def make_profile_background(
    n: int, tau: float, profile: RadialField, name: str = "profile"
) -> BackgroundSpec:
    """Synthetic background from an explicit R0 profile (manufactured solves)."""
    C = float(np.max(np.abs(profile.values) * profile.grid.w ** (2.0 + tau)))
    return BackgroundSpec(
        n=n, tau=tau, r0_profile=profile, mode=SYNTHETIC, name=name, decay_constant=C,
    )


@dataclass(frozen=True, eq=False)
class InitialData:
    """Positive conformal factor u0 -> 1 plus the family it came from."""

    u0: RadialField
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.min(self.u0.values) <= 0.0:
            raise PositivityError("initial factor must be positive everywhere")

    def decay_constant(self, tau: float) -> float:
        """Smallest C with |u0 - 1| <= C max(r,1)^{-tau} on the grid."""
        g = self.u0.grid
        return float(np.max(np.abs(self.u0.values - 1.0) * g.w**tau))


def flat_data(grid: RadialGrid) -> InitialData:
    return InitialData(constant_field(grid, 1.0), "flat", {})


def schwarzschild_data(n: int, m: float, grid: RadialGrid) -> InitialData:
    """Harmonic factor u0 = 1 + m / (2 r^{n-2}); scalar-flat for every m >= 0."""
    if m < 0.0:
        raise ParameterError(f"mass parameter must be nonnegative, got {m}")
    if grid.n != n:
        raise ConfigError(f"grid has dimension {grid.n}, requested {n}")
    if m > 0.0:
        r_min_allowed = m ** (1.0 / (n - 2.0)) / 4.0
        if grid.r_in < r_min_allowed:
            raise ParameterError(
                f"singular node: grids for mass {m} must start at "
                f"r_in >= {r_min_allowed:.3g}, got {grid.r_in:.3g}"
            )
        u0 = 1.0 + m / (2.0 * grid.nodes ** (n - 2.0))
    else:
        u0 = np.ones(grid.nodes.shape)
    return InitialData(RadialField(grid, u0), "schwarzschild", {"m": m})


def gaussian_bump_data(grid: RadialGrid, eps: float, sigma: float) -> InitialData:
    """u0 = 1 + eps exp(-r^2/sigma^2); requires eps > -1 for positivity."""
    if sigma <= 0.0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    u0 = 1.0 + eps * np.exp(-(grid.nodes**2) / sigma**2)
    return InitialData(RadialField(grid, u0), "gaussian_bump", {"eps": eps, "sigma": sigma})


def newtonian_data(grid: RadialGrid, source: RadialField) -> InitialData:
    """u0 = 1 + Newtonian potential of a nonnegative compactly supported source.

    Solves -lap phi = f radially (n = 3 only) through the Green's form

        phi(r) = (1/r) int_0^r s^2 f(s) ds + int_r^inf s f(s) ds,

    so the resulting data has scalar curvature 8 f u0^{-5} >= 0 with far-field
    coefficient A = (1/4pi) int f dx.
    """
    if grid.n != 3:
        raise ParameterError("newtonian data is implemented for n = 3 only")
    f = source.values
    if np.min(f) < 0.0:
        raise ParameterError("source must be nonnegative")
    r = grid.nodes
    support = r[np.abs(f) > 0.0]
    if support.size and support.max() > grid.R_max / 8.0:
        raise ParameterError(
            f"source must be supported within r <= R_max/8 = {grid.R_max / 8:.3g}"
        )

    def cumtrapz(y):
        inc = 0.5 * (y[:-1] + y[1:]) * grid.dr
        return np.concatenate([[0.0], np.cumsum(inc)])

    I1 = cumtrapz(r**2 * f)           # int_0^r s^2 f ds
    J = cumtrapz(r * f)               # int_0^r s f ds
    I2 = J[-1] - J                    # int_r^inf s f ds (f vanishes past the grid)
    phi = np.empty_like(r)
    inner = r > 0.0
    phi[inner] = I1[inner] / r[inner] + I2[inner]
    if not inner.all():
        phi[~inner] = I2[~inner]
    return InitialData(RadialField(grid, 1.0 + phi), "newtonian", {})


def bump_source(grid: RadialGrid, total: float, radius: float) -> RadialField:
    """Smooth compactly supported source with int f dx = total (n = 3).

    Uses the C^inf bump exp(-s^2/(radius^2 - s^2)) on [0, radius).
    """
    if radius <= 0.0:
        raise ParameterError(f"radius must be positive, got {radius}")
    r = grid.nodes
    shape = np.zeros_like(r)
    inside = r < radius
    s = r[inside]
    shape[inside] = np.exp(-(s**2) / (radius**2 - s**2))
    raw = RadialField(grid, shape)
    from .grids import integrate_dV  # local import keeps module load light

    mass = integrate_dV(raw, constant_field(grid, 1.0))
    if mass <= 0.0:
        raise ParameterError("source bump has no mass on this grid")
    return RadialField(grid, shape * (total / mass))


def decay_order_estimate(f: RadialField) -> float:
    """Power-law decay order of |f| fitted over the outermost decade.

    Least-squares slope of log|f| against log r for nodes with
    r >= R_max/10, negated, so r^{-2} reports 2.0.
    """
    g = f.grid
    tail = g.nodes >= g.R_max / 10.0
    vals = np.abs(f.values[tail])
    radii = g.nodes[tail]
    nz = vals > 0.0
    if np.count_nonzero(nz) < 4:
        raise UndefinedFitError("tail is (numerically) zero; decay order undefined")
    slope = np.polyfit(np.log(radii[nz]), np.log(vals[nz]), 1)[0]
    return float(-slope)


def background_from_name(name: str, grid: RadialGrid) -> BackgroundSpec:
    """Resolve catalog names: 'flat', 'flat3', or 'synthetic:A=..,rc=..,sigma=..,tau=..'."""
    if name.startswith("flat"):
        suffix = name[4:]
        if suffix:
            try:
                dim = int(suffix)
            except ValueError as exc:
                raise ConfigError(f"unknown background {name!r}") from exc
            if dim != grid.n:
                raise ConfigError(f"background {name!r} conflicts with grid dimension {grid.n}")
        return make_flat_background(grid.n, grid)
    if name.startswith("synthetic:"):
        params = {}
        for item in name.split(":", 1)[1].split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ConfigError(f"malformed background parameter {item!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError as exc:
                raise ConfigError(f"malformed background parameter {item!r}") from exc
        missing = {"tau", "A", "rc", "sigma"} - set(params)
        extra = set(params) - {"tau", "A", "rc", "sigma"}
        if missing:
            raise ConfigError(f"synthetic background missing parameters {sorted(missing)}")
        if extra:
            raise ConfigError(f"unknown synthetic background parameters {sorted(extra)}")
        return make_synthetic_background(
            n=grid.n,
            tau=params["tau"],
            amplitude=params["A"],
            center=params["rc"],
            width=params["sigma"],
            grid=grid,
        )
    raise ConfigError(f"unknown background {name!r}")
