"""Covariance of the scaled estimation errors ``M (rho_hat - rho)``.

Two independent routes:

* residue closed form on one data realisation (:func:`empirical_theta`);
* tensor Gauss-Legendre quadrature of the double contour integral of
  ``kappa(z1, z2) / (m(z1) m(z2))`` (:func:`theta_quadrature`), fed either by
  the empirical companion transform or by the limiting law.

Contours are rectangles symmetric about the real axis, one per cluster,
integrated with positive orientation; the two sign flips of the negatively
oriented contours cancel in the double integral.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CoincidentPoints,
    InputError,
    NonRealResult,
    OverlapAfterMargin,
    QuadratureNonConvergence,
    ZeroDerivativeAtRoot,
)
from .estimator import cluster_blocks, solve_mu
from .model import PopulationModel
from .sampling import SampleSpectrum
from .spectrum import (
    ClusterSupport,
    StieltjesEval,
    companion_derivatives,
    limiting_transform,
    support_clusters,
)

PANEL_NODES = 16
DEFAULT_NODES = 64
MAX_NODES = 512
NESTED_SHRINK = 0.6


@dataclass(frozen=True)
class Contour:
    """Rectangle ``[x_lo, x_hi] x [-height, height]`` around cluster ``k = [a, b]``."""

    k: int
    a: float
    b: float
    x_lo: float
    x_hi: float
    height: float
    nodes: int = DEFAULT_NODES
    positive: bool = True

    def __post_init__(self):
        if not (self.x_lo < self.a <= self.b < self.x_hi) or self.height <= 0:
            raise InputError(f"contour {self.k} does not strictly enclose [{self.a}, {self.b}]")

    def shrunk(self, factor: float = NESTED_SHRINK) -> Contour:
        """Same cluster with margins and height scaled by ``factor`` (the nested copy)."""
        return replace(
            self,
            x_lo=self.a - factor * (self.a - self.x_lo),
            x_hi=self.b + factor * (self.x_hi - self.b),
            height=factor * self.height,
        )

    def quadrature(self, nodes: int | None = None):
        """Nodes ``z`` and weights ``w`` (``dz`` included) of the composite rule.

        Each edge carries ``nodes`` points in 16-point Gauss-Legendre panels.
        Vertical edges are graded towards the real axis, where they pass
        closest to the spectrum.
        """
        n = self.nodes if nodes is None else nodes
        panels = max(1, n // PANEL_NODES)
        order = n // panels
        t, wt = np.polynomial.legendre.leggauss(order)
        h = self.height

        def segment(z0, z1, breaks):
            zs, ws = [], []
            for u0, u1 in zip(breaks[:-1], breaks[1:]):
                half = 0.5 * (u1 - u0)
                u = u0 + half * (t + 1.0)
                zs.append(z0 + (z1 - z0) * u)
                ws.append((z1 - z0) * half * wt)
            return np.concatenate(zs), np.concatenate(ws)

        uniform = np.linspace(0.0, 1.0, panels + 1)
        half_panels = max(1, panels // 2)
        gap = min(self.a - self.x_lo, self.x_hi - self.b)
        j = np.arange(half_panels + 1) / half_panels
        grade = max(1.0, np.log(min(gap, h) / h) / np.log(1.0 / half_panels)) if half_panels > 1 else 1.0
        rise = j**grade  # from the axis (0) up to the corner (1)

        x_lo, x_hi = self.x_lo, self.x_hi
        pieces = [
            segment(complex(x_lo, -h), complex(x_hi, -h), uniform),
            # right edge: axis upwards, then axis downwards (reversed later)
            segment(complex(x_hi, 0.0), complex(x_hi, h), rise),
            segment(complex(x_hi, h), complex(x_lo, h), uniform),
            segment(complex(x_lo, 0.0), complex(x_lo, -h), rise),
        ]
        # lower halves of the vertical edges, oriented counter-clockwise
        z_r, w_r = segment(complex(x_hi, 0.0), complex(x_hi, -h), rise)
        z_l, w_l = segment(complex(x_lo, 0.0), complex(x_lo, h), rise)
        pieces.append((z_r, -w_r))
        pieces.append((z_l, -w_l))
        z = np.concatenate([p[0] for p in pieces])
        w = np.concatenate([p[1] for p in pieces])
        if not self.positive:
            w = -w
        return z, w


@dataclass(frozen=True)
class KappaEval:
    z1: complex
    z2: complex
    value: complex


def build_contours(
    support: ClusterSupport,
    margin_frac: float = 0.25,
    height: float | None = None,
    nodes: int = DEFAULT_NODES,
) -> list[Contour]:
    """One rectangle per cluster.

    Cluster ``k`` extends ``margin_frac`` of the gap to each neighbour; the
    outermost sides use ``margin_frac`` of the cluster width. The leftmost
    side never goes below ``a_1 / 2`` since the companion transform has a pole
    at 0. ``height=None`` uses half the rectangle width for each cluster.
    """
    if not margin_frac > 0:
        raise InputError("margin_frac must be positive")
    if height is not None and not height > 0:
        raise InputError("height must be positive")
    if nodes < 2:
        raise InputError("need at least 2 nodes per edge")
    iv = support.intervals
    L = len(iv)
    contours = []
    for k, (a, b) in enumerate(iv):
        width = b - a
        left_gap = a - iv[k - 1][1] if k > 0 else width
        right_gap = iv[k + 1][0] - b if k < L - 1 else width
        x_lo = a - margin_frac * left_gap
        if k == 0 and a > 0:
            x_lo = max(x_lo, 0.5 * a)
        x_hi = b + margin_frac * right_gap
        h = 0.5 * (x_hi - x_lo) if height is None else height
        contours.append(Contour(k, a, b, x_lo, x_hi, h, nodes))
    for left, right in zip(contours, contours[1:]):
        if left.x_hi >= right.x_lo:
            raise OverlapAfterMargin(
                f"contours {left.k + 1} and {right.k + 1} overlap with margin_frac={margin_frac}"
            )
    return contours


def _kappa(z1, m1, d1, z2, m2, d2):
    return d1 * d2 / (m1 - m2) ** 2 - 1.0 / (z1 - z2) ** 2


def kappa(e1: StieltjesEval, e2: StieltjesEval) -> KappaEval:
    """``m'(z1) m'(z2) / (m(z1) - m(z2))^2 - 1 / (z1 - z2)^2``."""
    if e1.z == e2.z or e1.m0 == e2.m0:
        raise CoincidentPoints(f"kappa undefined at z1={e1.z}, z2={e2.z}")
    value = _kappa(e1.z, e1.m0, e1.derivative(1), e2.z, e2.m0, e2.derivative(1))
    return KappaEval(e1.z, e2.z, complex(value))


# ----------------------------------------------------------------------------
# transform sources for the quadrature


def empirical_source(spec: SampleSpectrum):
    """``z -> (m, m')`` for the empirical companion transform."""

    def source(z):
        m0, m1 = companion_derivatives(spec.lambdas, spec.n_dim, spec.m_samples, z, 1)
        return m0, m1

    return source


def limiting_source(model: PopulationModel, support: ClusterSupport | None = None):
    """``z -> (m, m')`` for the finite-N limiting companion transform."""
    if support is None:
        support = support_clusters(model)

    def source(z):
        m0, m1 = limiting_transform(model, z, 1, support)
        return m0, m1

    return source


KERNELS = ("full", "reduced")


def _double_integral(source, outer: Contour, inner: Contour, nodes: int, kernel: str = "full") -> complex:
    z1, w1 = outer.quadrature(nodes)
    z2, w2 = inner.quadrature(nodes)
    m1, d1 = source(z1)
    m2, d2 = source(z2)
    sep = z1[:, None] - z2[None, :]
    if np.any(sep == 0):
        raise CoincidentPoints("quadrature nodes hit z1 = z2")
    f = -1.0 / sep**2
    if kernel == "full":
        diff = m1[:, None] - m2[None, :]
        if np.any(diff == 0):
            raise CoincidentPoints("quadrature nodes hit m(z1) = m(z2)")
        f = f + d1[:, None] * d2[None, :] / diff**2
    elif kernel != "reduced":
        raise InputError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    f /= m1[:, None] * m2[None, :]
    return complex(w1 @ f @ w2)


def theta_quadrature(
    source,
    contour_k: Contour,
    contour_l: Contour,
    c_k: float,
    c_l: float,
    *,
    nodes: int | None = None,
    rtol: float = 1e-6,
    max_nodes: int = MAX_NODES,
    kernel: str = "full",
) -> float:
    """``-1/(4 pi^2 c_k c_l)`` times the double contour integral of ``kappa/(m m)``.

    For the diagonal (same cluster) the second contour is the nested copy
    :meth:`Contour.shrunk`, so ``z1 = z2`` is never sampled. Nodes per edge are
    doubled from ``nodes`` until two successive values agree to ``rtol``.

    ``kernel="reduced"`` keeps only the ``-1/(z1 - z2)^2`` part of ``kappa``.
    With ``u = m(z1)`` the other part integrates ``du / ((u - w)^2 u)`` over
    ``z1``, whose residues at ``u = w`` and ``u = 0`` cancel; what survives is
    an integer times ``m'(z2)/m(z2)^3``, an exact derivative, so it adds nothing
    once ``z2`` goes round its contour. For the limiting law both kernels
    agree. For an empirical (rational) transform the count of ``z1`` with
    ``m(z1) = m(z2)`` inside the outer contour jumps along the inner one, the
    full integrand is then not integrable on the rectangles and only the
    reduced kernel converges.
    """
    inner = contour_l.shrunk() if contour_k.k == contour_l.k else contour_l
    n = contour_k.nodes if nodes is None else nodes
    scale = -1.0 / (4.0 * np.pi**2 * c_k * c_l)
    prev = scale * _double_integral(source, contour_k, inner, n, kernel)
    while True:
        if 2 * n > max_nodes:
            raise QuadratureNonConvergence(
                f"theta[{contour_k.k},{contour_l.k}] not converged to {rtol:g} at {n} nodes per edge"
            )
        n *= 2
        cur = scale * _double_integral(source, contour_k, inner, n, kernel)
        if abs(cur - prev) <= rtol * abs(cur):
            break
        prev = cur
    if abs(cur.imag) > 1e-8 * abs(cur):
        raise NonRealResult(f"imaginary part {cur.imag:.3e} of {cur.real:.6e}")
    return float(cur.real)


def theta_matrix(source, contours, c, **kwargs) -> np.ndarray:
    """Full ``L x L`` quadrature matrix, reported as ``(T + T^T)/2``."""
    L = len(contours)
    out = np.empty((L, L))
    for k in range(L):
        for l in range(L):
            out[k, l] = theta_quadrature(source, contours[k], contours[l], c[k], c[l], **kwargs)
    return 0.5 * (out + out.T)


def limiting_theta(
    model: PopulationModel,
    *,
    margin_frac: float = 0.25,
    height: float | None = None,
    nodes: int = DEFAULT_NODES,
    rtol: float = 1e-6,
    max_nodes: int = MAX_NODES,
    kernel: str = "full",
) -> np.ndarray:
    """Asymptotic covariance of ``M (rho_hat - rho)`` for the model's limiting law."""
    support = support_clusters(model)
    contours = build_contours(support, margin_frac, height, nodes)
    source = limiting_source(model, support)
    return theta_matrix(source, contours, model.c_k, rtol=rtol, max_nodes=max_nodes, kernel=kernel)


def empirical_support(spec: SampleSpectrum, blocks, mus) -> ClusterSupport:
    """Per block, the interval ``[mu_first, lam_last]`` holding its eigenvalues and roots."""
    lam = spec.lambdas
    return ClusterSupport(tuple((float(mus[b.start]), float(lam[b.stop - 1])) for b in blocks))


def empirical_theta_quadrature(
    spec: SampleSpectrum,
    mults,
    *,
    mus=None,
    margin_frac: float = 0.25,
    height: float | None = None,
    nodes: int = DEFAULT_NODES,
    rtol: float = 1e-6,
    max_nodes: int = MAX_NODES,
    kernel: str = "reduced",
) -> np.ndarray:
    """Quadrature of the empirical integrand on contours around the data clusters.

    Uses the reduced kernel by default; see :func:`theta_quadrature`.
    """
    blocks = cluster_blocks(mults)
    if mus is None:
        mus = solve_mu(spec)
    contours = build_contours(empirical_support(spec, blocks, mus), margin_frac, height, nodes)
    c = np.array([len(b) for b in blocks]) / spec.m_samples
    return theta_matrix(empirical_source(spec), contours, c, rtol=rtol, max_nodes=max_nodes, kernel=kernel)


def empirical_theta(spec: SampleSpectrum, mus, blocks) -> np.ndarray:
    """Residue closed form of the empirical covariance estimate.

    ``(M^2/(N_k N_l)) [ sum_{i in k, j in l, i != j} -1/((mu_i - mu_j)^2 m'(mu_i) m'(mu_j))
    + delta_kl sum_{i in k} (m'''/(6 m'^3) - m''^2/(4 m'^4))(mu_i) ]``
    with ``m`` the companion transform of the sample covariance.
    """
    mus = np.asarray(mus, dtype=float)
    if np.any(mus[:, None] == spec.lambdas[None, :]):
        raise ZeroDerivativeAtRoot("a root coincides with a repeated sample eigenvalue")
    _, d1, d2, d3 = companion_derivatives(spec.lambdas, spec.n_dim, spec.m_samples, mus, 3)
    if not np.all(np.isfinite(d1)) or np.any(np.abs(d1) < 1e-12):
        raise ZeroDerivativeAtRoot("m' is degenerate at a root (mu numerically equals a sample eigenvalue)")
    sep = mus[:, None] - mus[None, :]
    np.fill_diagonal(sep, np.inf)
    if np.any(sep == 0):
        raise ZeroDerivativeAtRoot("repeated mu roots make the estimate singular")
    pair = -1.0 / (sep**2 * d1[:, None] * d1[None, :])
    self_term = d3 / (6.0 * d1**3) - d2**2 / (4.0 * d1**4)

    L = len(blocks)
    member = np.zeros((L, spec.n_dim))
    for k, b in enumerate(blocks):
        member[k, b.start : b.stop] = 1.0
    sizes = member.sum(axis=1)
    bracket = member @ pair @ member.T + np.diag(member @ self_term)
    theta = spec.m_samples**2 * bracket / np.outer(sizes, sizes)
    return 0.5 * (theta + theta.T)
