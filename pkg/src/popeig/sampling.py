"""Synthetic observations, sample covariance and its ordered eigenvalues."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DataParseError, EmptyData, InputError
from .model import PopulationModel


@dataclass(frozen=True)
class SampleSpectrum:
    """Ascending eigenvalues of a sample covariance matrix plus its dimensions."""

    lambdas: np.ndarray
    n_dim: int
    m_samples: int

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size != self.n_dim:
            raise InputError(f"expected {self.n_dim} eigenvalues, got shape {lam.shape}")
        if np.any(np.diff(lam) < 0):
            raise InputError("sample eigenvalues must be sorted ascending")
        if lam.size and lam[0] <= 0:
            raise InputError("sample eigenvalues must be strictly positive (need M > N)")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def ratio(self) -> float:
        return self.n_dim / self.m_samples


def trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    """Stream for trial ``trial`` of a batch seeded with ``seed``.

    SeedSequence hashes ``(seed, trial)`` so any single trial can be replayed
    on its own.
    """
    return np.random.SeedSequence(seed, spawn_key=(trial,))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary from the QR of a complex Ginibre matrix."""
    rng = _rng(seed)
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_data_matrix(model: PopulationModel, seed, *, rotation=None) -> np.ndarray:
    """Draw ``Y = R^{1/2} X`` with ``X`` i.i.d. standard complex Gaussian.

    ``R`` is ``diag(rho_k repeated N_k times)``. Passing a unitary matrix as
    ``rotation`` uses ``R^{1/2} = U diag(sqrt(rho)) U^H`` instead.
    """
    rng = _rng(seed)
    n, m = model.n_dim, model.m_samples
    x = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    x *= np.sqrt(0.5)
    root = np.sqrt(model.diagonal())
    if rotation is None:
        return root[:, None] * x
    u = np.asarray(rotation)
    return (u * root) @ (u.conj().T @ x)


def sample_covariance(data) -> np.ndarray:
    """``(1/M) Y Y^H`` for an ``N x M`` data matrix, exactly Hermitian."""
    y = np.asarray(data)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] == 0 or y.shape[1] == 0:
        raise EmptyData(f"data matrix has shape {y.shape}")
    r = (y @ y.conj().T) / y.shape[1]
    return 0.5 * (r + r.conj().T)


def jacobi_eigenvalues(h, *, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix by cyclic two-sided Jacobi rotations.

    Each (p, q) pivot is made real by a diagonal phase and then annihilated by
    a real plane rotation. Sweeps stop once the off-diagonal Frobenius norm is
    below ``tol * ||H||_F``.
    """
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise InputError(f"matrix must be square, got {a.shape}")
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0:
        return np.sort(np.real(np.diagonal(a)))
    target = tol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diagonal(a)))
        if off <= target:
            return np.sort(np.real(np.diagonal(a)))
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                mag = abs(b)
                if mag <= 1e-300:
                    continue
                phase = b / mag
                app, aqq = a[p, p].real, a[q, q].real
                zeta = (aqq - app) / (2.0 * mag)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # U = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                u = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ u
                a[idx, :] = u.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
    raise ConvergenceFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def hermitian_eigenvalues(h, *, method: str = "lapack") -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix.

    ``method="jacobi"`` runs :func:`jacobi_eigenvalues`; the default uses
    LAPACK's ``heevd`` which is what the Monte Carlo loops need for speed.
    """
    if method == "jacobi":
        return jacobi_eigenvalues(h)
    if method == "lapack":
        return np.linalg.eigvalsh(np.asarray(h))
    raise InputError(f"unknown eigensolver {method!r}")


def sample_spectrum(data, *, method: str = "lapack") -> SampleSpectrum:
    y = np.asarray(data)
    lam = hermitian_eigenvalues(sample_covariance(y), method=method)
    if y.ndim == 1:
        y = y[:, None]
    return SampleSpectrum(lam, y.shape[0], y.shape[1])


def synthesize_spectrum(model: PopulationModel, seed, *, rotation=None) -> SampleSpectrum:
    """Sample eigenvalues for one draw of the model (the Monte Carlo hot path)."""
    return sample_spectrum(sample_data_matrix(model, seed, rotation=rotation))


def _parse_complex(token: str) -> complex:
    t = token.strip()
    if t.endswith(("i", "I")):
        t = t[:-1] + "j"
    if "j" in t.rstrip("j"):
        raise ValueError(token)
    return complex(t)


def parse_data_text(text: str) -> np.ndarray:
    """Parse rows of whitespace-separated ``a+bi`` numbers into an ``N x M`` matrix."""
    rows = []
    width = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row = []
        for col_no, token in enumerate(line.split(), start=1):
            try:
                row.append(_parse_complex(token))
            except ValueError:
                raise DataParseError(
                    f"row {line_no}, column {col_no}: cannot parse {token!r} as a+bi"
                ) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataParseError(f"row {line_no}: expected {width} columns, found {len(row)}")
        rows.append(row)
    if not rows:
        raise EmptyData("data file contains no rows")
    return np.array(rows, dtype=complex)


def load_data(path) -> np.ndarray:
    with open(path) as fh:
        return parse_data_text(fh.read())


def format_data_text(data) -> str:
    """Inverse of :func:`parse_data_text` (round-trip safe)."""
    lines = []
    for row in np.asarray(data, dtype=complex):
        lines.append(" ".join(f"{float(z.real)!r}{float(z.imag):+.17g}i" for z in row))
    return "\n".join(lines) + "\n"
