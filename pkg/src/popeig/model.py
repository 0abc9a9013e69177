"""Population spectrum configuration shared by every other module."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DuplicateEigenvalue,
    InputError,
    MultiplicitySumMismatch,
    NonPositiveEigenvalue,
    SampleCountTooSmall,
)


@dataclass(frozen=True)
class PopulationModel:
    """Atomic population spectrum: ``rhos[k]`` with multiplicity ``mults[k]``.

    Build instances through :func:`validate_model` (or :func:`make_model`);
    the constructor itself does not check anything.
    """

    rhos: tuple[float, ...]
    mults: tuple[int, ...]
    n_dim: int
    m_samples: int

    @property
    def n_clusters(self) -> int:
        return len(self.rhos)

    @property
    def c(self) -> float:
        return self.n_dim / self.m_samples

    @property
    def c_k(self) -> np.ndarray:
        return np.asarray(self.mults, dtype=float) / self.m_samples

    @cached_property
    def rho_array(self) -> np.ndarray:
        return np.asarray(self.rhos, dtype=float)

    @cached_property
    def weights(self) -> np.ndarray:
        """``N_k / M``, the masses entering every limiting-law sum."""
        return np.asarray(self.mults, dtype=float) / self.m_samples

    def diagonal(self) -> np.ndarray:
        """Population eigenvalues repeated by multiplicity, ascending."""
        return np.repeat(self.rho_array, self.mults)

    def with_samples(self, m_samples: int) -> PopulationModel:
        return validate_model(
            {"rhos": self.rhos, "mults": self.mults, "N": self.n_dim, "M": m_samples}
        )

    def scaled(self, factor: int) -> PopulationModel:
        """Same proportions with every dimension multiplied by ``factor``."""
        return validate_model(
            {
                "rhos": self.rhos,
                "mults": [k * factor for k in self.mults],
                "N": self.n_dim * factor,
                "M": self.m_samples * factor,
            }
        )

    def to_json(self) -> dict:
        return {
            "rhos": list(self.rhos),
            "mults": list(self.mults),
            "N": self.n_dim,
            "M": self.m_samples,
        }


def _field(raw: Mapping, *names):
    for name in names:
        if name in raw:
            return raw[name]
    raise InputError(f"missing model field {names[0]!r}")


def validate_model(raw, *, require_full_rank: bool = True) -> PopulationModel:
    """Check a candidate model and return it with eigenvalues sorted ascending.

    ``raw`` is a :class:`PopulationModel` or a mapping with keys
    ``rhos``, ``mults``, ``N``, ``M`` (``n_dim``/``m_samples`` also accepted).
    Multiplicities follow their eigenvalue when sorting. ``require_full_rank``
    enforces ``M > N``; turning it off is only meant for spectrum diagnostics.
    """
    if isinstance(raw, PopulationModel):
        raw = {"rhos": raw.rhos, "mults": raw.mults, "N": raw.n_dim, "M": raw.m_samples}
    if not isinstance(raw, Mapping):
        raise InputError("model must be a mapping or PopulationModel")

    rhos = [float(r) for r in _field(raw, "rhos")]
    mults_in = list(_field(raw, "mults"))
    n_dim = _field(raw, "N", "n_dim")
    m_samples = _field(raw, "M", "m_samples")

    if len(rhos) == 0 or len(rhos) != len(mults_in):
        raise InputError("rhos and mults must be non-empty and of equal length")
    mults = []
    for k in mults_in:
        if int(k) != k or int(k) < 1:
            raise MultiplicitySumMismatch(f"multiplicities must be positive integers, got {k!r}")
        mults.append(int(k))
    if int(n_dim) != n_dim or int(m_samples) != m_samples:
        raise InputError("N and M must be integers")
    n_dim, m_samples = int(n_dim), int(m_samples)

    for r in rhos:
        if not np.isfinite(r) or r <= 0:
            raise NonPositiveEigenvalue(f"population eigenvalue {r!r} is not positive")
    order = sorted(range(len(rhos)), key=lambda i: rhos[i])
    rhos = [rhos[i] for i in order]
    mults = [mults[i] for i in order]
    for a, b in zip(rhos, rhos[1:]):
        if a == b:
            raise DuplicateEigenvalue(f"population eigenvalue {a!r} listed twice")
    if sum(mults) != n_dim:
        raise MultiplicitySumMismatch(f"multiplicities sum to {sum(mults)}, N is {n_dim}")
    if m_samples < 1 or (require_full_rank and m_samples <= n_dim):
        raise SampleCountTooSmall(f"need M > N, got N={n_dim}, M={m_samples}")

    return PopulationModel(tuple(rhos), tuple(mults), n_dim, m_samples)


def make_model(rhos, mults, m_samples: int, *, require_full_rank: bool = True) -> PopulationModel:
    """Shorthand with ``N`` inferred as the sum of multiplicities."""
    mults = list(mults)
    return validate_model(
        {"rhos": list(rhos), "mults": mults, "N": sum(mults), "M": m_samples},
        require_full_rank=require_full_rank,
    )


def load_model(path) -> PopulationModel:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return validate_model(raw)
