"""Population eigenvalue estimates from sample eigenvalues.

The ``mu`` roots solve ``(1/N) sum lam_m / (lam_m - mu) = M/N``, equivalently
they are the zeros of the companion Stieltjes transform. They are computed
twice (rank-one eigenproblem and bracketed bisection) and cross-checked
because the variance estimator differentiates through them three times.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InputError, MethodDisagreement
from .model import PopulationModel
from .sampling import SampleSpectrum

AGREEMENT_RTOL = 1e-9


def secular_function(lambdas, m_samples: int, mu):
    """``sum lam / (lam - mu) - M``; increasing between consecutive poles."""
    lam = np.asarray(lambdas, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return np.sum(lam / (lam - mu[..., None]), axis=-1) - m_samples


def mu_by_eigen(spec: SampleSpectrum) -> np.ndarray:
    """Eigenvalues of ``diag(lam) - (1/M) sqrt(lam) sqrt(lam)^T``.

    ``det(diag(lam) - mu I - s s^T/M) = prod(lam - mu) (1 - (1/M) sum lam/(lam - mu))``
    so these are exactly the roots of the secular equation.
    """
    lam = spec.lambdas
    s = np.sqrt(lam)
    a = np.diag(lam) - np.outer(s, s) / spec.m_samples
    return np.linalg.eigvalsh(a)


def mu_by_bisection(spec: SampleSpectrum) -> np.ndarray:
    """All roots at once by vectorised bisection on ``(0, lam_1), (lam_1, lam_2), ...``.

    The secular function runs from ``N - M < 0`` (at 0) or ``-inf`` (just right
    of a pole) up to ``+inf`` at the next pole, so each bracket holds one root.
    Halving continues until the floating-point bracket cannot shrink further.
    Repeated eigenvalues collapse their bracket and return that eigenvalue.
    """
    lam = spec.lambdas
    lo = np.concatenate([[0.0], lam[:-1]])
    hi = lam.copy()
    for _ in range(1100):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            val = secular_function(lam, spec.m_samples, mid)
        neg = val < 0
        lo = np.where(active & neg, mid, lo)
        hi = np.where(active & ~neg, mid, hi)
    mu = 0.5 * (lo + hi)
    degenerate = lo[1:] == hi[1:]
    mu[1:][degenerate] = hi[1:][degenerate]
    return mu


def solve_mu(spec: SampleSpectrum, *, rtol: float = AGREEMENT_RTOL) -> np.ndarray:
    """The N ordered real roots of the secular equation (needs ``M > N``).

    Returns the bisection values; raises :class:`MethodDisagreement` if the
    eigenvalue route differs by more than ``rtol`` relative to ``lam_N``.
    """
    if spec.m_samples <= spec.n_dim:
        raise InputError("solve_mu needs M > N")
    by_bisect = mu_by_bisection(spec)
    by_eigen = mu_by_eigen(spec)
    scale = max(float(spec.lambdas[-1]), 1e-300)
    err = np.max(np.abs(by_bisect - by_eigen)) / scale
    if not err <= rtol:
        raise MethodDisagreement(f"mu roots: eigen and bisection differ by {err:.3e} (relative)")
    return by_bisect


def check_interlacing(lambdas, mus, *, strict: bool = True) -> bool:
    """``0 < mu_1 < lam_1`` and ``lam_{i-1} < mu_i < lam_i`` (non-strict if ``strict=False``)."""
    lam = np.asarray(lambdas)
    mu = np.asarray(mus)
    lower = np.concatenate([[0.0], lam[:-1]])
    if strict:
        return bool(np.all((mu > lower) & (mu < lam)))
    return bool(mu[0] > 0 and np.all((mu >= lower) & (mu <= lam)))


def cluster_blocks(mults) -> tuple[range, ...]:
    """Consecutive 0-based index blocks of sizes ``N_1, ..., N_L``.

    Accepts a :class:`PopulationModel` or a list of multiplicities.
    """
    if isinstance(mults, PopulationModel):
        mults = mults.mults
    edges = np.concatenate([[0], np.cumsum(mults)]).astype(int)
    return tuple(range(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]))


def _check_blocks(spec: SampleSpectrum, blocks) -> None:
    if sum(len(b) for b in blocks) != spec.n_dim or blocks[0].start != 0:
        raise DimensionMismatch(f"blocks do not partition 0..{spec.n_dim - 1}")


def estimate_rho(spec: SampleSpectrum, blocks, mus=None) -> np.ndarray:
    """``rho_hat_k = (M / N_k) sum_{m in block k} (lam_m - mu_m)``."""
    _check_blocks(spec, blocks)
    if mus is None:
        mus = solve_mu(spec)
    diff = spec.lambdas - mus
    return np.array([spec.m_samples * diff[b].sum() / len(b) for b in blocks])


@dataclass
class EstimateReport:
    rho_hat: np.ndarray
    mu_hat: np.ndarray
    blocks: tuple[range, ...]
    theta_hat: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.rho_hat) > 0))

    def to_json(self) -> dict:
        out = {"rho_hat": [float(x) for x in self.rho_hat], "mu_hat": [float(x) for x in self.mu_hat]}
        if self.theta_hat is not None:
            out["theta_hat"] = [[float(x) for x in row] for row in self.theta_hat]
        out.update(self.extras)
        return out


def estimate(spec: SampleSpectrum, mults, *, with_theta: bool = False) -> EstimateReport:
    """Full pipeline on one sample spectrum: ``mu``, ``rho_hat`` and optionally ``theta_hat``."""
    blocks = cluster_blocks(mults)
    mus = solve_mu(spec)
    rho_hat = estimate_rho(spec, blocks, mus)
    theta = None
    if with_theta:
        from .variance import empirical_theta

        theta = empirical_theta(spec, mus, blocks)
    return EstimateReport(rho_hat, mus, blocks, theta)
