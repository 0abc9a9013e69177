import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from popeig.errors import DataParseError, EmptyData, InputError
from popeig.model import make_model
from popeig.sampling import (
    SampleSpectrum,
    format_data_text,
    haar_unitary,
    hermitian_eigenvalues,
    jacobi_eigenvalues,
    parse_data_text,
    sample_covariance,
    sample_data_matrix,
    sample_spectrum,
    synthesize_spectrum,
    trial_seed,
)


def test_identity_model_second_moments():
    model = make_model([1.0], [2], 4)
    acc = np.zeros((2, 2), dtype=complex)
    for s in range(2000):
        y = sample_data_matrix(model, s)
        assert y.shape == (2, 4)
        acc += y @ y.conj().T / 4
    np.testing.assert_allclose(acc / 2000, np.eye(2), atol=0.05)


def test_base_entry_power(base):
    y = sample_data_matrix(base, 0)
    assert y.shape == (60, 600)
    power = np.mean(np.abs(y) ** 2)
    assert abs(power - np.mean(base.diagonal())) < 0.1 * np.mean(base.diagonal())


def test_seed_determinism(base):
    a = sample_data_matrix(base, 123)
    b = sample_data_matrix(base, 123)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_data_matrix(base, 124))
    s1 = synthesize_spectrum(base, trial_seed(5, 17))
    s2 = synthesize_spectrum(base, trial_seed(5, 17))
    assert np.array_equal(s1.lambdas, s2.lambdas)


def test_real_and_imag_parts_have_half_variance():
    model = make_model([1.0], [50], 2000)
    y = sample_data_matrix(model, 9)
    assert np.var(y.real) == pytest.approx(0.5, rel=0.03)
    assert np.var(y.imag) == pytest.approx(0.5, rel=0.03)


def test_sample_covariance_examples():
    np.testing.assert_allclose(sample_covariance(np.eye(2)), 0.5 * np.eye(2))
    y = np.array([1 + 2j, -1j, 3.0])
    np.testing.assert_allclose(sample_covariance(y), np.outer(y, y.conj()))
    rng = np.random.default_rng(1)
    y = rng.standard_normal((3, 10)) + 1j * rng.standard_normal((3, 10))
    brute = sum(np.outer(y[:, j], y[:, j].conj()) for j in range(10)) / 10
    np.testing.assert_allclose(sample_covariance(y), brute, atol=1e-12)
    with pytest.raises(EmptyData):
        sample_covariance(np.zeros((3, 0)))


def test_eigenvalue_examples():
    for method in ("lapack", "jacobi"):
        np.testing.assert_allclose(hermitian_eigenvalues(np.diag([3.0, 1.0, 2.0]), method=method), [1, 2, 3])
        h = np.array([[2, 1j], [-1j, 2]])
        np.testing.assert_allclose(hermitian_eigenvalues(h, method=method), [1, 3], atol=1e-12)
    with pytest.raises(InputError):
        hermitian_eigenvalues(np.eye(2), method="qr")


def test_jacobi_matches_lapack_and_unitary_invariance():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    h = a + a.conj().T
    ev = jacobi_eigenvalues(h)
    norm = np.linalg.norm(h, 2)
    np.testing.assert_allclose(ev, np.linalg.eigvalsh(h), atol=1e-10 * norm)
    u = haar_unitary(30, 8)
    np.testing.assert_allclose(jacobi_eigenvalues(u @ h @ u.conj().T), ev, atol=1e-9 * norm)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_jacobi_random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = a + a.conj().T
    np.testing.assert_allclose(
        jacobi_eigenvalues(h), np.linalg.eigvalsh(h), atol=1e-10 * max(1.0, np.linalg.norm(h, 2))
    )


def test_haar_unitary_is_unitary():
    u = haar_unitary(12, 3)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(12), atol=1e-12)


def test_spectrum_positive_and_sorted(base):
    for s in range(20):
        spec = synthesize_spectrum(base, s)
        assert np.all(spec.lambdas > 0)
        assert np.all(np.diff(spec.lambdas) >= 0)


def test_spectrum_validation():
    with pytest.raises(InputError):
        SampleSpectrum(np.array([2.0, 1.0]), 2, 4)
    with pytest.raises(InputError):
        SampleSpectrum(np.array([0.0, 1.0]), 2, 4)
    with pytest.raises(InputError):
        SampleSpectrum(np.array([1.0]), 2, 4)


def test_rotation_invariance_in_distribution():
    model = make_model([1, 4], [4, 4], 40)
    u = haar_unitary(8, 77)
    plain = np.array([synthesize_spectrum(model, trial_seed(1, t)).lambdas for t in range(300)])
    rotated = np.array(
        [synthesize_spectrum(model, trial_seed(2, t), rotation=u).lambdas for t in range(300)]
    )
    for j in (0, 3, 7):
        assert stats.ttest_ind(plain[:, j], rotated[:, j]).pvalue > 0.01


def test_text_round_trip_and_errors():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    assert np.array_equal(parse_data_text(format_data_text(y)), y)
    parsed = parse_data_text("1+2i 3-4i\n# comment\n\n0.5 -1i\n")
    np.testing.assert_array_equal(parsed, [[1 + 2j, 3 - 4j], [0.5, -1j]])
    with pytest.raises(DataParseError, match="row 2, column 2"):
        parse_data_text("1 2\n3 x+yi\n")
    with pytest.raises(DataParseError, match="row 2"):
        parse_data_text("1 2\n3\n")
    with pytest.raises(EmptyData):
        parse_data_text("# nothing\n")


def test_sample_spectrum_from_data():
    y = np.array([[1, 0, 0, 0], [0, 2j, 0, 0]], dtype=complex)
    spec = sample_spectrum(y)
    assert (spec.n_dim, spec.m_samples) == (2, 4)
    np.testing.assert_allclose(spec.lambdas, [0.25, 1.0])
