"""Stieltjes-transform machinery.

Empirical companion transform of the sample covariance matrix, the finite-N
limiting law (fixed-point equation and its explicit inverse ``z(m)``), the
support edges of the limiting law and the separability margins.

All limiting-law sums go through :func:`kernel_sum`,
``S_{p,q}(m) = (1/M) sum_k N_k rho_k^p / (1 + rho_k m)^q``, so the inverse map,
its derivatives and the separability function share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import (
    InputError,
    NoConvergence,
    PoleHit,
    RootBracketingFailure,
    SeparabilityViolated,
    WrongBranch,
)
from .model import PopulationModel
from .sampling import SampleSpectrum

POLE_RTOL = 1e-14
BISECT_XTOL = 1e-13
FP_MAX_ITER = 10_000
FP_UNDAMPED = 100
FP_TOL = 1e-14
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class StieltjesEval:
    """A transform value at ``z`` with derivatives ``m1..m3`` (``None`` if not requested)."""

    z: complex
    m0: complex
    m1: complex | None = None
    m2: complex | None = None
    m3: complex | None = None

    def derivative(self, order: int) -> complex:
        value = (self.m0, self.m1, self.m2, self.m3)[order]
        if value is None:
            raise InputError(f"derivative of order {order} was not computed")
        return value


@dataclass(frozen=True)
class ClusterSupport:
    """Disjoint ordered intervals ``[a_l, b_l]`` of the limiting eigenvalue law."""

    intervals: tuple[tuple[float, float], ...]
    # the 2L real critical points of z(m), in increasing order of z(m)
    edge_roots: tuple[float, ...] = ()

    def __post_init__(self):
        flat = [x for ab in self.intervals for x in ab]
        if any(b <= a for a, b in zip(flat, flat[1:])):
            raise SeparabilityViolated(f"support intervals overlap or are unordered: {self.intervals}")

    def __len__(self):
        return len(self.intervals)

    @property
    def lefts(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals])

    @property
    def rights(self) -> np.ndarray:
        return np.array([b for _, b in self.intervals])

    def distance(self, x) -> np.ndarray:
        """Distance from real ``x`` to the support (0 inside)."""
        x = np.asarray(x, dtype=float)[..., None]
        d = np.maximum(self.lefts - x, x - self.rights)
        return np.min(np.maximum(d, 0.0), axis=-1)

    def cluster_of(self, x, eps: float = 0.0) -> np.ndarray:
        """Index of the interval whose ``eps`` blow-up contains ``x``, or -1."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, -1, dtype=int)
        for k, (a, b) in enumerate(self.intervals):
            out[(x > a - eps) & (x < b + eps) & (out < 0)] = k
        return out

    def to_json(self) -> dict:
        return {"intervals": [[a, b] for a, b in self.intervals]}


@dataclass(frozen=True)
class SeparabilityReport:
    margins: np.ndarray
    alphas: np.ndarray
    # True when L == 1: no alpha roots exist and the margin is M/N by convention
    single_cluster_convention: bool

    @property
    def separable(self) -> bool:
        return bool(np.all(self.margins > 0))

    def to_json(self) -> dict:
        return {
            "margins": [float(x) for x in self.margins],
            "separable": self.separable,
            "alphas": [float(x) for x in self.alphas],
            "single_cluster_convention": self.single_cluster_convention,
        }


# ----------------------------------------------------------------------------
# empirical transforms


def _check_poles(lambdas: np.ndarray, z: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(lambdas))), 1.0) if lambdas.size else 1.0
    near_zero = np.abs(z) < POLE_RTOL * scale
    near_eig = np.min(np.abs(z[..., None] - lambdas), axis=-1) < POLE_RTOL * scale
    if np.any(near_zero | near_eig):
        raise PoleHit("evaluation point coincides with a pole of the companion transform")


def companion_derivatives(lambdas, n_dim: int, m_samples: int, z, max_order: int = 0):
    """Companion transform ``(1/M) sum 1/(lam - z) - (M-N)/(M z)`` and derivatives.

    Vectorised over ``z``; returns a list ``[m0, ..., m_max_order]``. Each
    derivative is the exact term-wise derivative of the rational form:
    ``k! / (lam - z)^(k+1)`` and ``(-1)^k k! / z^(k+1)``.
    """
    lam = np.asarray(lambdas, dtype=float)
    z = np.asarray(z)
    diff = lam - z[..., None]
    inv = 1.0 / diff
    inv_z = 1.0 / z
    gap = (m_samples - n_dim) / m_samples
    out = []
    power = inv
    zpow = inv_z
    for k in range(max_order + 1):
        fk = factorial(k)
        out.append(fk * power.sum(axis=-1) / m_samples - gap * (-1) ** k * fk * zpow)
        power = power * inv
        zpow = zpow * inv_z
    return out


def empirical_companion_stieltjes(spec: SampleSpectrum, z, max_order: int = 0) -> StieltjesEval:
    """Companion Stieltjes transform of the sample covariance at ``z``."""
    if not 0 <= max_order <= 3:
        raise InputError("max_order must be in 0..3")
    z = complex(z)
    _check_poles(spec.lambdas, np.asarray([z]))
    vals = companion_derivatives(spec.lambdas, spec.n_dim, spec.m_samples, np.asarray([z]), max_order)
    vals = [complex(v[0]) for v in vals] + [None] * (3 - max_order)
    return StieltjesEval(z, *vals)


def empirical_stieltjes(spec: SampleSpectrum, z) -> complex:
    """``(1/N) sum 1/(lam_i - z)``, the transform of the sample covariance itself."""
    return complex(np.mean(1.0 / (spec.lambdas - complex(z))))


# ----------------------------------------------------------------------------
# limiting law


def kernel_sum(model: PopulationModel, m, p: int, q: int):
    """``(1/M) sum_k N_k rho_k^p / (1 + rho_k m)^q``, vectorised over ``m``."""
    m = np.asarray(m)
    rho = model.rho_array
    return np.sum(model.weights * rho**p / (1.0 + rho * m[..., None]) ** q, axis=-1)


def inverse_map(model: PopulationModel, m, order: int = 0):
    """``d^order/dm^order`` of ``z(m) = -1/m + (1/M) sum N_k rho_k/(1 + rho_k m)``."""
    m = np.asarray(m)
    sign = (-1) ** order
    fk = factorial(order)
    return -sign * fk / m ** (order + 1) + sign * fk * kernel_sum(model, m, order + 1, order + 1)


def _derivatives_from_inverse(model: PopulationModel, m, max_order: int):
    """Implicit differentiation of ``z(m(z)) = z``."""
    out = [m]
    if max_order >= 1:
        z1 = inverse_map(model, m, 1)
        m1 = 1.0 / z1
        out.append(m1)
    if max_order >= 2:
        z2 = inverse_map(model, m, 2)
        m2 = -z2 * m1**3
        out.append(m2)
    if max_order >= 3:
        z3 = inverse_map(model, m, 3)
        out.append(-z3 * m1**4 - 3.0 * z2 * m1**2 * m2)
    return out


def _fixed_point_map(model: PopulationModel, z, m):
    return -1.0 / (z - kernel_sum(model, m, 1, 1))


def fixed_point_iterate(model: PopulationModel, z, m0=None, *, max_iter: int = FP_MAX_ITER):
    """Iterate ``m <- -1/(z - (1/M) sum N_k rho_k/(1 + rho_k m))`` from ``-1/z``.

    Undamped for the first 100 iterations; points still moving after that
    continue with damping 0.5. Returns ``(m, converged)``.
    """
    z = np.asarray(z, dtype=complex)
    m = -1.0 / z if m0 is None else np.array(m0, dtype=complex)
    converged = np.zeros(z.shape, dtype=bool)
    for it in range(max_iter):
        new = _fixed_point_map(model, z, m)
        if it >= FP_UNDAMPED:
            new = 0.5 * m + 0.5 * new
        step = np.abs(new - m)
        m = np.where(converged, m, new)
        converged |= step <= FP_TOL * np.maximum(np.abs(m), 1.0)
        if converged.all():
            break
    return m, converged


def _newton_polish(model: PopulationModel, z, m, steps: int = 30):
    for _ in range(steps):
        delta = (inverse_map(model, m) - z) / inverse_map(model, m, 1)
        m = m - delta
        if np.all(np.abs(delta) <= 1e-15 * np.maximum(np.abs(m), 1.0)):
            break
    return m


def fixed_point_residual(model: PopulationModel, z, m):
    """``|m + 1/(z - (1/M) sum N_k rho_k/(1 + rho_k m))|``."""
    return np.abs(np.asarray(m) - _fixed_point_map(model, np.asarray(z), np.asarray(m)))


def solve_limiting_stieltjes(model: PopulationModel, z, max_order: int = 1) -> StieltjesEval:
    """Finite-N limiting companion transform ``underline-m_N(z)`` with derivatives.

    For non-real ``z`` the fixed-point solution is polished by Newton steps on
    ``z(m) = z``; real ``z`` must lie outside the support and is solved on the
    increasing branch of ``z(m)`` that maps onto its gap.
    """
    if not 0 <= max_order <= 3:
        raise InputError("max_order must be in 0..3")
    z = complex(z)
    if z.imag == 0.0:
        m = real_limiting_stieltjes(model, z.real)
    else:
        flip = z.imag < 0
        zu = z.conjugate() if flip else z
        m_arr, ok = fixed_point_iterate(model, np.asarray([zu]))
        if not ok[0]:
            raise NoConvergence(f"fixed point did not converge at z={z}")
        m = complex(_newton_polish(model, zu, m_arr)[0])
        if m.imag <= 0:
            raise WrongBranch(f"Im m = {m.imag} at z={zu}")
        if flip:
            m = m.conjugate()
    residual = float(fixed_point_residual(model, z, m))
    if not residual < RESIDUAL_TOL * max(1.0, abs(m)):
        raise NoConvergence(f"residual {residual:.3e} at z={z}")
    vals = [complex(v) for v in _derivatives_from_inverse(model, m, max_order)]
    if z.imag == 0.0:
        vals = [complex(v.real) for v in vals]
    return StieltjesEval(z, *vals, *([None] * (3 - max_order)))


# ----------------------------------------------------------------------------
# root finding


def _bisect(f, lo: float, hi: float, sign_lo: float, *, xtol: float = BISECT_XTOL, df=None, label=""):
    """Bracketed bisection on an open interval whose end signs are known analytically.

    The endpoints are never evaluated (they may be poles). The bracket is first
    verified just inside each end, then halved until narrower than ``xtol`` and
    finally refined by at most five guarded Newton steps.
    """
    width = hi - lo
    probe = 1e-9 * width
    if np.sign(f(lo + probe)) != sign_lo or np.sign(f(hi - probe)) != -sign_lo:
        raise RootBracketingFailure(f"no sign change in ({lo!r}, {hi!r}) {label}".strip())
    a, b = lo + probe, hi - probe
    while b - a > xtol:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if np.sign(f(mid)) == sign_lo:
            a = mid
        else:
            b = mid
    x = 0.5 * (a + b)
    if df is not None:
        for _ in range(5):
            d = df(x)
            if d == 0:
                break
            nxt = x - f(x) / d
            if not (a - xtol <= nxt <= b + xtol):
                break
            if nxt == x:
                break
            x = nxt
    return x


def _alpha_roots(model: PopulationModel) -> np.ndarray:
    """Roots of ``sum_r N_r rho_r^2 / (rho_r - x)^3`` in each ``(rho_i, rho_{i+1})``.

    With ``m = -1/x`` the sum is ``M m^3 S_{2,3}(m)``; ``S_{2,3}`` is bisected.
    """
    rho = model.rho_array
    roots = []
    for i in range(len(rho) - 1):

        def h(x):
            return float(np.real(kernel_sum(model, -1.0 / x, 2, 3)))

        # near rho_i+ the rho_i term of S_{2,3} -> +inf (1 - rho_i/x -> 0+)
        roots.append(_bisect(h, rho[i], rho[i + 1], 1.0, label=f"(alpha root {i + 1})"))
    return np.array(roots)


def _psi_function(model: PopulationModel, x) -> float:
    """``(1/N) sum N_r (rho_r/(rho_r - x))^2 = (M/N) m^2 S_{2,2}(m)``, ``m = -1/x``."""
    m = -1.0 / x
    return float(np.real(m * m * kernel_sum(model, m, 2, 2))) / model.c


def separability_check(model: PopulationModel) -> SeparabilityReport:
    """Per-cluster margins ``M/N - Psi_N(i)``; all positive iff the law splits into L clusters."""
    L = model.n_clusters
    inv_c = 1.0 / model.c
    if L == 1:
        return SeparabilityReport(np.array([inv_c]), np.array([]), True)
    alphas = _alpha_roots(model)
    g = np.array([_psi_function(model, a) for a in alphas])
    psi = np.empty(L)
    psi[0] = g[0]
    psi[-1] = g[-1]
    for i in range(1, L - 1):
        psi[i] = max(g[i - 1], g[i])
    return SeparabilityReport(inv_c - psi, alphas, False)


def _z1(model, m):
    return float(np.real(inverse_map(model, m, 1)))


def _z2(model, m):
    return float(np.real(inverse_map(model, m, 2)))


def _critical_points(model: PopulationModel) -> list[float]:
    """The 2L real zeros of ``z'(m)``, bracketed as in the sign analysis of ``z'``.

    One in ``(-inf, -1/rho_1)``, two in each ``(-1/rho_i, -1/rho_{i+1})`` split
    at the unique zero of ``z''``, one in ``(-1/rho_L, 0)``.
    """
    rho = model.rho_array
    poles = -1.0 / rho  # decreasing order: -1/rho_1 < ... < -1/rho_L
    f = lambda m: _z1(model, m)  # noqa: E731
    df = lambda m: _z2(model, m)  # noqa: E731
    roots = []

    # (-inf, -1/rho_1): z' ~ (1 - N/M)/m^2 > 0 far left, -> -inf at the pole
    lo = 2.0 * poles[0]
    for _ in range(200):
        if f(lo) > 0:
            break
        lo *= 2.0
    else:
        raise SeparabilityViolated("no critical point left of -1/rho_1 (is M > N?)")
    roots.append(_bisect(f, lo, poles[0], 1.0, df=df, label="(left outer edge)"))

    for i in range(len(rho) - 1):
        a, b = poles[i], poles[i + 1]
        beta = _bisect(lambda m: _z2(model, m), a, b, 1.0, label=f"(z'' zero {i + 1})")
        if not f(beta) > 0:
            raise SeparabilityViolated(
                f"clusters {i + 1} and {i + 2} merge: max of z' between them is {f(beta):.3e}"
            )
        roots.append(_bisect(f, a, beta, -1.0, df=df, label=f"(gap {i + 1} left)"))
        roots.append(_bisect(f, beta, b, 1.0, df=df, label=f"(gap {i + 1} right)"))

    # (-1/rho_L, 0): -inf at the pole, +inf at 0-
    roots.append(_bisect(f, poles[-1], 0.0, -1.0, df=df, label="(right outer edge)"))
    return roots


def support_clusters(model: PopulationModel) -> ClusterSupport:
    """Edges ``z(m_a)`` of the finite-N limiting support at the critical points ``m_a``."""
    report = separability_check(model)
    if not report.separable:
        bad = [i + 1 for i, g in enumerate(report.margins) if g <= 0]
        raise SeparabilityViolated(f"separability margin non-positive for clusters {bad}")
    roots = _critical_points(model)
    if len(roots) != 2 * model.n_clusters:
        raise SeparabilityViolated(f"found {len(roots)} critical points, need {2 * model.n_clusters}")
    edges = [float(np.real(inverse_map(model, m))) for m in roots]
    # roots are listed left outer, (right edge, next left edge)*, right outer
    order = np.argsort(edges)
    if not np.array_equal(order, np.arange(len(edges))):
        raise SeparabilityViolated("support edges are not in cluster order")
    intervals = tuple((edges[2 * k], edges[2 * k + 1]) for k in range(model.n_clusters))
    return ClusterSupport(intervals, tuple(roots))


def real_limiting_stieltjes(model: PopulationModel, x: float, support: ClusterSupport | None = None) -> float:
    """``underline-m_N(x)`` for real ``x`` outside the support.

    Each gap of the support is the image of one increasing branch of ``z(m)``;
    ``z(m) = x`` is bisected on that branch.
    """
    x = float(x)
    if x == 0.0:
        raise PoleHit("the companion transform has a pole at 0")
    g = lambda m: float(np.real(inverse_map(model, m))) - x  # noqa: E731
    dg = lambda m: _z1(model, m)  # noqa: E731
    if x < 0:
        hi = 1.0
        while g(hi) < 0:
            hi *= 2.0
        return _bisect(g, 0.0, hi * 2.0, -1.0, df=dg, xtol=1e-16)
    if support is None:
        support = support_clusters(model)
    roots = support.edge_roots
    if x < support.intervals[0][0]:
        lo = 2.0 * roots[0] - 1.0
        while g(lo) > 0:
            lo *= 2.0
        return _bisect(g, lo, roots[0], -1.0, df=dg, xtol=1e-16)
    if x > support.intervals[-1][1]:
        return _bisect(g, roots[-1], 0.0, -1.0, df=dg, xtol=1e-16)
    for k in range(len(support) - 1):
        if support.intervals[k][1] < x < support.intervals[k + 1][0]:
            return _bisect(g, roots[2 * k + 1], roots[2 * k + 2], -1.0, df=dg, xtol=1e-16)
    raise InputError(f"x={x} lies inside the support; the transform is not real there")


def _accepted(model: PopulationModel, z, m) -> np.ndarray:
    """Finite, in the upper half-plane and solving the fixed-point equation."""
    ok = np.isfinite(m) & (m.imag > 0)
    res = np.where(ok, fixed_point_residual(model, z, np.where(ok, m, 1j)), np.inf)
    return ok & (res <= RESIDUAL_TOL * np.maximum(1.0, np.abs(m)))


def limiting_transform(model: PopulationModel, z, max_order: int = 1, support: ClusterSupport | None = None):
    """Vectorised ``underline-m_N`` and derivatives at many non-real points.

    Points closer to the real axis than to the support are seeded with the real
    solution at ``Re z``; the rest start from the fixed-point iteration. Every
    point is then polished by Newton steps on ``z(m) = z`` and its branch checked.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise InputError("limiting_transform expects non-real points")
    flip = z.imag < 0
    zu = np.where(flip, z.conj(), z)
    m = np.empty_like(zu)
    near = np.zeros(zu.shape, dtype=bool)
    if support is not None:
        dist = support.distance(zu.real)
        near = (dist > 0) & (zu.imag < dist)
        seeds = {}
        for idx in zip(*np.nonzero(near)):
            x = float(zu.real[idx])
            if x not in seeds:
                seeds[x] = real_limiting_stieltjes(model, x, support)
            m[idx] = seeds[x]
    far = ~near
    if far.any():
        m_far, _ = fixed_point_iterate(model, zu[far])
        m[far] = m_far
    with np.errstate(all="ignore"):
        m = _newton_polish(model, zu, m)
        # a real-axis seed can send Newton astray; redo those from the iteration
        bad = ~_accepted(model, zu, m)
        if bad.any():
            m_bad, _ = fixed_point_iterate(model, zu[bad])
            m[bad] = _newton_polish(model, zu[bad], m_bad)
    if np.any(~np.isfinite(m)) or np.any(m.imag <= 0):
        raise WrongBranch("limiting transform left the upper half-plane")
    if not np.all(_accepted(model, zu, m)):
        res = fixed_point_residual(model, zu, m)
        raise NoConvergence(f"max fixed-point residual {np.nanmax(res):.3e}")
    vals = _derivatives_from_inverse(model, m, max_order)
    return [np.where(flip, v.conj(), v) for v in vals]
