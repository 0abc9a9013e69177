"""Seeded Monte Carlo batches of the estimator and their Gaussian diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllTrialsFailed, DimensionMismatch, InputError, PopEigError
from .estimator import cluster_blocks, estimate_rho, solve_mu
from .model import PopulationModel
from .sampling import synthesize_spectrum, trial_seed
from .variance import empirical_theta


@dataclass
class TrialStats:
    """Fluctuations ``M (rho_hat_k - rho_k)`` of the trials that completed.

    ``samples`` has shape ``(trials, L)``; ``theta_hats`` (when retained) has
    shape ``(trials, L, L)``. ``indices`` are the trial numbers that were kept
    and ``failures`` lists ``(trial, message)`` for the excluded ones.
    """

    model: PopulationModel
    samples: np.ndarray
    indices: np.ndarray
    requested: int
    theta_hats: np.ndarray | None = None
    failures: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.indices)

    @property
    def rho_hat(self) -> np.ndarray:
        return self.model.rho_array + self.samples / self.model.m_samples

    def cluster(self, k: int) -> np.ndarray:
        return self.samples[:, k]


def run_trials(
    model: PopulationModel,
    trials: int,
    seed: int,
    *,
    retain_theta: bool = False,
) -> TrialStats:
    """Synthesize and estimate ``trials`` independent draws of ``model``.

    Trial ``t`` draws from :func:`trial_seed` ``(seed, t)``. Solver errors
    exclude that trial and are recorded; every other draw is kept, including
    ones whose sample eigenvalues do not split cleanly into blocks.
    """
    if int(trials) != trials or trials < 1:
        raise InputError(f"trials must be a positive integer, got {trials!r}")
    blocks = cluster_blocks(model)
    L = model.n_clusters
    samples = np.empty((trials, L))
    thetas = np.empty((trials, L, L)) if retain_theta else None
    kept = np.zeros(trials, dtype=bool)
    failures = []
    for t in range(trials):
        try:
            spec = synthesize_spectrum(model, trial_seed(seed, t))
            mus = solve_mu(spec)
            samples[t] = model.m_samples * (estimate_rho(spec, blocks, mus) - model.rho_array)
            if retain_theta:
                thetas[t] = empirical_theta(spec, mus, blocks)
        except (PopEigError, np.linalg.LinAlgError) as exc:
            failures.append((t, f"{type(exc).__name__}: {exc}"))
            continue
        kept[t] = True
    if not kept.any():
        raise AllTrialsFailed(f"all {trials} trials failed; first: {failures[0][1]}")
    return TrialStats(
        model=model,
        samples=samples[kept],
        indices=np.flatnonzero(kept),
        requested=trials,
        theta_hats=thetas[kept] if retain_theta else None,
        failures=failures,
    )


@dataclass
class FluctuationReport:
    mean: np.ndarray
    sd: np.ndarray
    sd_ratio: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    correlation: np.ndarray
    theory_correlation: np.ndarray
    trials: int

    def to_json(self) -> dict:
        def rows(a):
            return [[float(x) for x in r] for r in a]

        return {
            "trials": self.trials,
            "mean": [float(x) for x in self.mean],
            "sd": [float(x) for x in self.sd],
            "sd_ratio": [float(x) for x in self.sd_ratio],
            "skewness": [float(x) for x in self.skewness],
            "excess_kurtosis": [float(x) for x in self.excess_kurtosis],
            "correlation": rows(self.correlation),
            "theory_correlation": rows(self.theory_correlation),
        }


def summarize(stats: TrialStats, theta) -> FluctuationReport:
    """Moments of each fluctuation column against the Gaussian law ``N(0, theta)``."""
    x = np.asarray(stats.samples, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DimensionMismatch(f"fluctuation samples have shape {x.shape}")
    L = x.shape[1]
    if theta.shape != (L, L):
        raise DimensionMismatch(f"theta is {theta.shape}, samples have {L} clusters")
    mean = x.mean(axis=0)
    dev = x - mean
    var = (dev**2).mean(axis=0)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(L)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = (dev**3).mean(axis=0) / var**1.5
        kurt = (dev**4).mean(axis=0) / var**2 - 3.0
        corr = np.corrcoef(x, rowvar=False) if L > 1 else np.ones((1, 1))
    diag = np.sqrt(np.diag(theta))
    return FluctuationReport(
        mean=mean,
        sd=sd,
        sd_ratio=sd / diag,
        skewness=skew,
        excess_kurtosis=kurt,
        correlation=np.atleast_2d(corr),
        theory_correlation=theta / np.outer(diag, diag),
        trials=x.shape[0],
    )


@dataclass
class DensityTable:
    """Histogram of ``rho_hat_k`` with the Gaussian prediction at bin centres."""

    cluster: int
    centers: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    width: float

    def rows(self):
        return zip(self.centers, self.empirical, self.theoretical)


def export_density(stats: TrialStats, bins: int, theta=None) -> list[DensityTable]:
    """One equal-width density histogram per cluster, in ``rho_hat`` units.

    The theoretical column is the ``N(rho_k, theta_kk / M^2)`` density; it is
    NaN when ``theta`` is not given.
    """
    if int(bins) != bins or bins < 2:
        raise InputError(f"bins must be an integer >= 2, got {bins!r}")
    model = stats.model
    m = model.m_samples
    tables = []
    for k in range(model.n_clusters):
        values = model.rhos[k] + stats.cluster(k) / m
        dens, edges = np.histogram(values, bins=int(bins), density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        if theta is None:
            theo = np.full_like(centers, np.nan)
        else:
            var = float(np.asarray(theta)[k, k]) / m**2
            theo = np.exp(-((centers - model.rhos[k]) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        tables.append(DensityTable(k, centers, dens, theo, float(edges[1] - edges[0])))
    return tables


def density_distance(table: DensityTable) -> float:
    """Largest gap between the two cumulative curves implied by a table."""
    emp = np.cumsum(table.empirical) * table.width
    theo = np.cumsum(table.theoretical) * table.width
    return float(np.max(np.abs(emp - theo)))
