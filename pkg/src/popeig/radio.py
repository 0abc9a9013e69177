"""Power estimation for primary users sharing a band, with a one-sided margin.

User ``k`` transmits with power ``P_k`` over ``n_k`` orthonormal codes, so
the received covariance has eigenvalues ``P_k + sigma^2`` (multiplicity
``n_k``) plus ``sigma^2`` on the remaining ``N - n`` dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import (
    AllTrialsFailed,
    EigenvalueCollision,
    InputError,
    InvalidProbability,
    PopEigError,
    SampleCountTooSmall,
)
from .estimator import cluster_blocks, estimate_rho, solve_mu
from .model import PopulationModel, validate_model
from .sampling import SampleSpectrum, synthesize_spectrum, trial_seed
from .variance import empirical_theta

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class RadioScenario:
    powers: tuple[float, ...]
    codes: tuple[int, ...]
    n_dim: int
    m_samples: int
    noise_var: float

    def __post_init__(self):
        powers = tuple(float(p) for p in self.powers)
        codes = tuple(int(n) for n in self.codes)
        if not powers or len(powers) != len(codes):
            raise InputError("powers and codes must be non-empty and of equal length")
        if any(not np.isfinite(p) or p <= 0 for p in powers):
            raise InputError(f"powers must be positive, got {powers}")
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise InputError(f"powers must be distinct and ascending, got {powers}")
        if any(n < 1 for n in codes):
            raise InputError(f"code counts must be positive, got {codes}")
        if sum(codes) > self.n_dim:
            raise InputError(f"{sum(codes)} codes do not fit in N={self.n_dim} dimensions")
        if self.m_samples <= self.n_dim:
            raise SampleCountTooSmall(f"need M > N, got N={self.n_dim}, M={self.m_samples}")
        if not self.noise_var > 0:
            raise InputError(f"noise variance must be positive, got {self.noise_var}")
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "codes", codes)

    @property
    def has_noise_cluster(self) -> bool:
        return sum(self.codes) < self.n_dim

    @property
    def signal_offset(self) -> int:
        """Index of the first user's cluster in the population model."""
        return 1 if self.has_noise_cluster else 0


def scenario_to_model(s: RadioScenario) -> PopulationModel:
    """Population model of ``W P W^H + sigma^2 I`` with orthonormal codes ``W``."""
    rhos = [p + s.noise_var for p in s.powers]
    mults = list(s.codes)
    if s.has_noise_cluster:
        rhos.insert(0, s.noise_var)
        mults.insert(0, s.n_dim - sum(s.codes))
    if len(set(rhos)) != len(rhos):
        raise EigenvalueCollision(f"population eigenvalues collide: {rhos}")
    return validate_model({"rhos": rhos, "mults": mults, "N": s.n_dim, "M": s.m_samples})


@dataclass
class PowerEstimate:
    p_hat: np.ndarray
    sigma2: float
    rho_hat: np.ndarray
    theta_hat: np.ndarray
    noise_estimated: bool

    def margin_variance(self, k: int = -1) -> float:
        """Variance of ``M (P_hat_k - P_k)``.

        With an estimated noise level both ``rho_hat`` terms fluctuate, so the
        noise cluster's entries of ``theta_hat`` enter as well.
        """
        offset = len(self.rho_hat) - len(self.p_hat)
        j = offset + (k % len(self.p_hat))
        t = self.theta_hat
        if not self.noise_estimated:
            return float(t[j, j])
        return float(t[j, j] + t[0, 0] - 2.0 * t[j, 0])


def estimate_powers(
    spec: SampleSpectrum, s: RadioScenario, *, estimate_noise: bool = False
) -> PowerEstimate:
    """``P_hat_k = rho_hat_k - sigma^2`` over the user clusters.

    ``estimate_noise`` replaces the known ``sigma^2`` with the noise cluster's
    ``rho_hat`` (requires ``sum(codes) < N``).
    """
    if spec.n_dim != s.n_dim or spec.m_samples != s.m_samples:
        raise InputError(
            f"spectrum is N={spec.n_dim}, M={spec.m_samples}; scenario is N={s.n_dim}, M={s.m_samples}"
        )
    if estimate_noise and not s.has_noise_cluster:
        raise InputError("estimating the noise level needs a noise-only cluster (sum(codes) < N)")
    model = scenario_to_model(s)
    blocks = cluster_blocks(model)
    mus = solve_mu(spec)
    rho_hat = estimate_rho(spec, blocks, mus)
    theta_hat = empirical_theta(spec, mus, blocks)
    sigma2 = float(rho_hat[0]) if estimate_noise else float(s.noise_var)
    p_hat = rho_hat[s.signal_offset :] - sigma2
    return PowerEstimate(p_hat, sigma2, rho_hat, theta_hat, estimate_noise)


def upper_tail_quantile(q: float) -> float:
    """``z`` with ``P(Z > z) = q`` for a standard normal ``Z``."""
    if not (isinstance(q, (int, float)) and 0.0 < q < 1.0):
        raise InvalidProbability(f"q must lie strictly between 0 and 1, got {q!r}")
    return _STD_NORMAL.inv_cdf(1.0 - q)


def confidence_margin(theta_kk: float, m_samples: int, q: float, *, literal: bool = False) -> float:
    """Margin ``A`` with ``P(P_K - P_hat_K > A) ~ q``.

    ``A = sqrt(theta_kk) / M * z(q)`` since ``M (P_hat - P)`` is asymptotically
    ``N(0, theta_kk)``. ``literal=True`` returns ``theta_kk * z(q)`` instead,
    the unscaled form, for comparison only.
    """
    z = upper_tail_quantile(q)
    if not theta_kk > 0:
        raise InputError(f"theta_kk must be positive, got {theta_kk!r}")
    if literal:
        return float(theta_kk * z)
    if m_samples < 1:
        raise InputError(f"m_samples must be positive, got {m_samples!r}")
    return float(np.sqrt(theta_kk) / m_samples * z)


@dataclass
class CoverageResult:
    trials: int
    exceedances: int
    failures: int
    q: float

    @property
    def frequency(self) -> float:
        return self.exceedances / self.trials

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "exceedances": self.exceedances,
            "failures": self.failures,
            "q": self.q,
            "exceedance_frequency": self.frequency,
        }


def simulate_coverage(
    s: RadioScenario,
    trials: int,
    seed: int,
    q: float,
    *,
    estimate_noise: bool = False,
    literal: bool = False,
) -> CoverageResult:
    """How often the strongest user's true power exceeds ``P_hat_K + A``.

    Each trial draws fresh data (seeded per trial as in the Monte Carlo
    module) and uses its own ``theta_hat`` for the margin.
    """
    model = scenario_to_model(s)
    hits = 0
    failed = 0
    for t in range(trials):
        try:
            spec = synthesize_spectrum(model, trial_seed(seed, t))
            est = estimate_powers(spec, s, estimate_noise=estimate_noise)
            a = confidence_margin(est.margin_variance(-1), s.m_samples, q, literal=literal)
        except PopEigError:
            failed += 1
            continue
        hits += int(s.powers[-1] - est.p_hat[-1] > a)
    if failed == trials:
        raise AllTrialsFailed(f"all {trials} coverage trials failed")
    return CoverageResult(trials - failed, hits, failed, q)
