"""Radial grids, stencils, quadrature and norms.

Everything downstream (backgrounds, elliptic solves, the flow itself) works
on a fixed radial grid over [r_in, R_max].  The grid is either uniform or
uniform on [r_in, 1] with geometric spacing on [1, R_max] ("log-stretched"),
so that a single relative mesh parameter ``h`` controls accuracy across the
whole truncated domain.

Conventions:

* dimension n >= 3, volume element ``omega_{n-1} r^{n-1} dr`` against the
  flat reference metric, conformal volume weight ``u^{2n/(n-2)}``;
* the radial weight used by weighted norms is ``max(r, 1)``;
* all stencils are three-point and exact for quadratics (second order on
  smoothly varying grids); the origin uses the even-extension regularity
  limit ``lap f(0) = n f''(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    GridMismatchError,
    ParameterError,
    PositivityError,
    StencilError,
)

UNIFORM = "uniform"
LOG_STRETCHED = "log-stretched"
_POLICIES = (UNIFORM, LOG_STRETCHED)

_MIN_INTERVALS = 16


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii r_0 < ... < r_M with an n-dimensional volume rule."""

    n: int
    nodes: np.ndarray
    policy: str

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError(f"dimension n must be >= 3, got {self.n}")
        if self.policy not in _POLICIES:
            raise ConfigError(f"unknown grid policy {self.policy!r}")
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < _MIN_INTERVALS + 1:
            raise ConfigError(
                f"grid needs at least {_MIN_INTERVALS} intervals, got {nodes.size - 1}"
            )
        if nodes[0] < 0.0:
            raise ConfigError("innermost radius must be nonnegative")
        if not np.all(np.diff(nodes) > 0.0):
            raise ConfigError("grid nodes must be strictly increasing")
        if self.policy == LOG_STRETCHED:
            outer = nodes[nodes >= 1.0]
            if outer.size >= 3:
                ratios = outer[1:] / outer[:-1]
                if np.max(np.abs(ratios / ratios[0] - 1.0)) > 1e-12:
                    raise ConfigError("log-stretched grid has non-constant ratio past r=1")
        object.__setattr__(self, "nodes", _readonly(nodes))
        object.__setattr__(self, "_dr", _readonly(np.diff(nodes)))
        object.__setattr__(self, "_w", _readonly(np.maximum(nodes, 1.0)))

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, RadialGrid):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash((self.n, self.nodes.shape[0], float(self.nodes[0]), float(self.nodes[-1])))

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def r_in(self) -> float:
        return float(self.nodes[0])

    @property
    def R_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def dr(self) -> np.ndarray:
        return self._dr

    @property
    def w(self) -> np.ndarray:
        """Radial weight max(r, 1)."""
        return self._w

    @property
    def h(self) -> float:
        """Relative mesh parameter: max spacing measured against max(r, 1).

        Equals the uniform spacing on [r_in, 1] and the geometric stretch
        q - 1 on [1, R_max]; tolerance statements of the form C*h^2 use it.
        """
        return float(np.max(self._dr / np.maximum(self.nodes[1:], 1.0)))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Samples of a radial function on a fixed grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.nodes.shape:
            raise GridMismatchError(
                f"field has {values.size} samples for a grid of {self.grid.nodes.size} nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("field contains non-finite samples")
        object.__setattr__(self, "values", _readonly(values))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RadialField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        _require_same_grid(self, other)
        return RadialField(self.grid, self.values - other.values)

    def __add__(self, other: "RadialField") -> "RadialField":
        _require_same_grid(self, other)
        return RadialField(self.grid, self.values + other.values)


@dataclass(frozen=True)
class SphereConstants:
    """Dimension together with omega_{n-1}, the volume of the unit (n-1)-sphere."""

    n: int
    omega: float


def sphere_constants(n: int) -> SphereConstants:
    if n < 3:
        raise ParameterError(f"dimension n must be >= 3, got {n}")
    omega = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return SphereConstants(n=n, omega=omega)


def constant_field(grid: RadialGrid, value: float) -> RadialField:
    return RadialField(grid, np.full(grid.nodes.shape, float(value)))


def field_from_function(grid: RadialGrid, fn) -> RadialField:
    return RadialField(grid, np.asarray(fn(grid.nodes), dtype=np.float64))


def _require_same_grid(f: RadialField, g: RadialField) -> None:
    if f.grid is not g.grid and f.grid != g.grid:
        raise GridMismatchError("fields live on different grids")


def build_grid(n: int, r_in: float, R_max: float, M: int, policy: str = LOG_STRETCHED) -> RadialGrid:
    """Construct a grid on [r_in, R_max] with M intervals.

    Uniform policy spaces nodes evenly.  Log-stretched keeps uniform spacing
    on [r_in, 1] and geometric spacing on [1, R_max], with the split chosen so
    the spacing is continuous across r = 1.
    """
    if n < 3:
        raise ParameterError(f"dimension n must be >= 3, got {n}")
    if policy not in _POLICIES:
        raise ConfigError(f"unknown grid policy {policy!r}")
    if M < _MIN_INTERVALS:
        raise ConfigError(f"M must be >= {_MIN_INTERVALS}, got {M}")
    if not (0.0 <= r_in < 1.0 < R_max):
        raise ConfigError(
            f"radii must satisfy 0 <= r_in < 1 < R_max, got r_in={r_in}, R_max={R_max}"
        )

    if policy == UNIFORM:
        nodes = np.linspace(r_in, R_max, M + 1)
        return RadialGrid(n=n, nodes=nodes, policy=UNIFORM)

    # Spacing continuity at r=1: (1 - r_in)/k ~ R_max^(1/(M-k)) - 1.  The
    # mismatch is strictly decreasing in k, so scan for the sign change.
    def mismatch(k: int) -> float:
        return (1.0 - r_in) / k - (R_max ** (1.0 / (M - k)) - 1.0)

    lo, hi = 1, M - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mismatch(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    k = lo if abs(mismatch(lo)) <= abs(mismatch(hi)) else hi

    inner = np.linspace(r_in, 1.0, k + 1)
    outer = np.geomspace(1.0, R_max, M - k + 1)
    nodes = np.concatenate([inner[:-1], outer])
    return RadialGrid(n=n, nodes=nodes, policy=LOG_STRETCHED)


def _derivative_weights(xs: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Finite-difference weights for the order-th derivative at x0 from nodes xs."""
    m = xs.size
    V = np.vander(xs - x0, m, increasing=True).T  # V[k, j] = (xs_j - x0)^k
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def laplacian_radial(f: RadialField) -> RadialField:
    """Discrete radial Laplacian f'' + (n-1)/r f'.

    Interior nodes use the three-point stencil exact for quadratics.  At
    r = 0 the even-extension regularity limit lap f(0) = n f''(0) applies;
    other boundary nodes get one-sided stencils that callers normally
    overwrite with boundary conditions.
    """
    grid = f.grid
    r = grid.nodes
    v = f.values
    n = grid.n
    if r.size < 3:
        raise StencilError("laplacian needs at least 3 nodes")

    out = np.empty_like(v)
    hm = grid.dr[:-1]
    hp = grid.dr[1:]
    denom = hm * hp * (hm + hp)
    d2 = 2.0 * (hp * v[:-2] - (hm + hp) * v[1:-1] + hm * v[2:]) / denom
    d1 = (-hp * hp * v[:-2] + (hp * hp - hm * hm) * v[1:-1] + hm * hm * v[2:]) / denom
    out[1:-1] = d2 + (n - 1) / r[1:-1] * d1

    if r[0] == 0.0:
        out[0] = 2.0 * n * (v[1] - v[0]) / grid.dr[0] ** 2
    else:
        out[0] = _one_sided_laplacian(r, v, n, 0)
    out[-1] = _one_sided_laplacian(r, v, n, r.size - 1)
    return RadialField(grid, out)


def _one_sided_laplacian(r: np.ndarray, v: np.ndarray, n: int, i: int) -> float:
    sl = slice(0, 4) if i == 0 else slice(r.size - 4, r.size)
    xs = r[sl]
    w2 = _derivative_weights(xs, r[i], 2)
    w1 = _derivative_weights(xs, r[i], 1)
    return float(w2 @ v[sl] + (n - 1) / r[i] * (w1 @ v[sl]))


def origin_mask(grid: RadialGrid) -> np.ndarray:
    """Boolean mask of boundary nodes whose stencils are one-sided.

    The origin node of an r_in = 0 grid is *not* flagged (the regularity
    stencil there is interior-grade); an inner wall at r_in > 0 and the
    truncation node at R_max are.
    """
    mask = np.zeros(grid.nodes.shape, dtype=bool)
    if grid.r_in > 0.0:
        mask[0] = True
    mask[-1] = True
    return mask


def _trapezoid(y: np.ndarray, dr: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[:-1] + y[1:]) * dr))


def volume_weight(grid: RadialGrid, u: RadialField) -> np.ndarray:
    """Pointwise conformal volume density u^{2n/(n-2)} omega r^{n-1}."""
    _require_positive(u)
    n = grid.n
    omega = sphere_constants(n).omega
    return u.values ** (2.0 * n / (n - 2.0)) * omega * grid.nodes ** (n - 1)


def _require_positive(u: RadialField) -> None:
    if np.min(u.values) <= 0.0:
        raise PositivityError("conformal factor must be positive everywhere")


def integrate_dV(f: RadialField, u: RadialField) -> float:
    """Integral of f against the conformal volume u^{2n/(n-2)} dV_flat.

    Composite trapezoid on the (possibly nonuniform) grid; the unbounded
    manifold is truncated at R_max (see truncation_tail_bound for the
    discarded tail).
    """
    _require_same_grid(f, u)
    dens = volume_weight(f.grid, u)
    return _trapezoid(f.values * dens, f.grid.dr)


def lp_integral(f: RadialField, p: float, u: RadialField) -> float:
    """Integral of |f|^p against the conformal volume."""
    if p < 1.0:
        raise ParameterError(f"p must be >= 1, got {p}")
    _require_same_grid(f, u)
    dens = volume_weight(f.grid, u)
    return _trapezoid(np.abs(f.values) ** p * dens, f.grid.dr)


def lp_norm(f: RadialField, p: float, u: RadialField) -> float:
    return lp_integral(f, p, u) ** (1.0 / p)


def weighted_sup_norm(f: RadialField, beta: float) -> float:
    """sup over nodes of max(r,1)^{-beta} |f|.

    With beta = -tau' < 0 this is the decay seminorm sup r^{tau'} |f|.
    """
    return float(np.max(f.grid.w ** (-beta) * np.abs(f.values)))


def truncation_tail_bound(C: float, decay_order: float, grid: RadialGrid) -> float:
    """Bound on the discarded tail of an integrand with |g| <= C r^{-decay_order}.

    Returns inf when the tail is not integrable against r^{n-1} dr.
    """
    n = grid.n
    if decay_order <= n:
        return math.inf
    omega = sphere_constants(n).omega
    return C * omega * grid.R_max ** (n - decay_order) / (decay_order - n)


def write_field_csv(f: RadialField, path, header: str = "r,value") -> None:
    """Serialize to CSV (17 significant digits); factor snapshots use ``r,u``."""
    lines = [header]
    for r, v in zip(f.grid.nodes, f.values):
        lines.append(f"{r:.17g},{v:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a field CSV back as (radii, values); grid binding is up to the caller."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].copy(), data[:, 1].copy()


def bind_field(grid: RadialGrid, radii: np.ndarray, values: np.ndarray) -> RadialField:
    if radii.shape != grid.nodes.shape or not np.allclose(radii, grid.nodes, rtol=0, atol=1e-15):
        raise GridMismatchError("CSV radii do not match the target grid")
    return RadialField(grid, values)
