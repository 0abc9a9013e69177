import numpy as np
import pytest

from conftest import BASE_THETA
from popeig.errors import (
    CoincidentPoints,
    InputError,
    OverlapAfterMargin,
    QuadratureNonConvergence,
    ZeroDerivativeAtRoot,
)
from popeig.estimator import cluster_blocks, solve_mu
from popeig.model import make_model
from popeig.sampling import SampleSpectrum, synthesize_spectrum, trial_seed
from popeig.spectrum import (
    ClusterSupport,
    empirical_companion_stieltjes,
    fixed_point_iterate,
    inverse_map,
    solve_limiting_stieltjes,
    support_clusters,
)
from popeig.variance import (
    Contour,
    build_contours,
    empirical_source,
    empirical_support,
    empirical_theta,
    empirical_theta_quadrature,
    kappa,
    limiting_source,
    limiting_theta,
    theta_quadrature,
)

# ---------------------------------------------------------------- contours


def test_contour_layout_example():
    sup = ClusterSupport(((0.5, 1.5), (2.5, 4.5)))
    c1, c2 = build_contours(sup, 0.25, 1.0)
    assert (c1.x_lo, c1.x_hi) == pytest.approx((0.25, 1.75))
    assert (c2.x_lo, c2.x_hi) == pytest.approx((2.25, 5.0))
    assert c1.height == c2.height == 1.0
    assert c1.x_hi < c2.x_lo


def test_single_cluster_and_pole_clearance():
    (c,) = build_contours(ClusterSupport(((0.25, 2.25),)))
    assert 0 < c.x_lo < 0.25 and c.x_hi > 2.25
    assert c.x_lo == pytest.approx(0.125)


def test_overlap_and_bad_arguments():
    sup = ClusterSupport(((0.5, 1.5), (1.6, 4.5)))
    with pytest.raises(OverlapAfterMargin):
        build_contours(sup, 0.6)
    with pytest.raises(InputError):
        build_contours(sup, -0.1)
    with pytest.raises(InputError):
        build_contours(sup, 0.25, height=0.0)
    with pytest.raises(InputError):
        Contour(0, 1.0, 2.0, 1.5, 3.0, 1.0)


def test_quadrature_integrates_cauchy_kernel():
    c = Contour(0, 1.0, 2.0, 0.5, 2.5, 0.8)
    z, w = c.quadrature(64)
    assert np.sum(w) == pytest.approx(0, abs=1e-13)
    assert np.sum(w / (z - 1.3)) == pytest.approx(2j * np.pi, rel=1e-12)
    assert np.sum(w / (z - 3.0)) == pytest.approx(0, abs=1e-12)
    # negative orientation flips the sign
    _, wn = Contour(0, 1.0, 2.0, 0.5, 2.5, 0.8, positive=False).quadrature(64)
    np.testing.assert_allclose(wn, -w)


def test_shrunk_copy_nested():
    c = Contour(0, 1.0, 2.0, 0.5, 2.5, 0.8)
    s = c.shrunk()
    assert c.x_lo < s.x_lo < s.a and s.b < s.x_hi < c.x_hi and s.height < c.height


def test_single_contour_recovers_estimate(base):
    spec = synthesize_spectrum(base, 8)
    mu = solve_mu(spec)
    blocks = cluster_blocks(base)
    contours = build_contours(empirical_support(spec, blocks, mu))
    src = empirical_source(spec)
    from popeig.estimator import estimate_rho

    rho = estimate_rho(spec, blocks, mu)
    for k, c in enumerate(contours):
        z, w = c.quadrature(256)
        m, d = src(z)
        # negatively oriented version of  (M / (2 pi i N_k)) oint z m'/m dz
        val = -(w @ (z * d / m)) * base.m_samples / (2j * np.pi * base.mults[k])
        assert val.real == pytest.approx(rho[k], rel=1e-10)


# ---------------------------------------------------------------- kappa


def test_kappa_symmetry_and_conjugation(base):
    spec = synthesize_spectrum(base, 2)
    e1 = empirical_companion_stieltjes(spec, 1 + 1j, 1)
    e2 = empirical_companion_stieltjes(spec, 3 + 2j, 1)
    assert kappa(e1, e2).value == pytest.approx(kappa(e2, e1).value, rel=1e-14)
    e1c = empirical_companion_stieltjes(spec, 1 - 1j, 1)
    e2c = empirical_companion_stieltjes(spec, 3 - 2j, 1)
    assert kappa(e1c, e2c).value == pytest.approx(np.conj(kappa(e1, e2).value), rel=1e-14)
    with pytest.raises(CoincidentPoints):
        kappa(e1, e1)


def test_kappa_limiting_dual_implementation():
    mp = make_model([1.0], [1], 10)
    z1, z2 = 2 + 1j, 3 + 2j
    k = kappa(solve_limiting_stieltjes(mp, z1, 1), solve_limiting_stieltjes(mp, z2, 1)).value

    # independent route: plain fixed-point iteration and m' = 1 / z'(m)
    def plain(z):
        m, ok = fixed_point_iterate(mp, np.array([z]))
        assert ok.all()
        m = complex(m[0])
        return m, 1.0 / complex(inverse_map(mp, m, 1))

    m1, d1 = plain(z1)
    m2, d2 = plain(z2)
    ref = d1 * d2 / (m1 - m2) ** 2 - 1 / (z1 - z2) ** 2
    assert k == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------- residue form


def test_tiny_residue_value(tiny_spec):
    mu = solve_mu(tiny_spec)
    theta = empirical_theta(tiny_spec, mu, cluster_blocks([2]))
    assert theta[0, 0] == pytest.approx(2.75, rel=1e-12)
    quad = empirical_theta_quadrature(tiny_spec, [2], mus=mu)
    assert quad[0, 0] == pytest.approx(theta[0, 0], rel=1e-6)


def test_residue_symmetric_positive(base):
    spec = synthesize_spectrum(base, trial_seed(0, 0))
    theta = empirical_theta(spec, solve_mu(spec), cluster_blocks(base))
    np.testing.assert_array_equal(theta, theta.T)
    assert np.all(np.diag(theta) > 0)


def test_residue_degenerate_roots():
    spec = SampleSpectrum(np.array([1.0, 2.0, 2.0]), 3, 9)
    with pytest.raises(ZeroDerivativeAtRoot):
        empirical_theta(spec, solve_mu(spec), cluster_blocks([1, 2]))


def test_residue_matches_quadrature_base(base):
    for seed in range(3):
        spec = synthesize_spectrum(base, trial_seed(seed, 0))
        mu = solve_mu(spec)
        res = empirical_theta(spec, mu, cluster_blocks(base))
        quad = empirical_theta_quadrature(spec, base.mults, mus=mu)
        assert np.max(np.abs(res - quad) / np.maximum(1, np.abs(res))) < 1e-6


def test_full_kernel_diverges_on_empirical_transform(tiny_spec):
    """The m(z1) = m(z2) set crosses the rectangles; only the reduced kernel converges."""
    mu = solve_mu(tiny_spec)
    with pytest.raises(QuadratureNonConvergence):
        empirical_theta_quadrature(tiny_spec, [2], mus=mu, kernel="full")


# ---------------------------------------------------------------- limiting law


def test_limiting_theta_frozen(base):
    theta = limiting_theta(base, rtol=1e-10, max_nodes=1024)
    np.testing.assert_allclose(theta, BASE_THETA, rtol=1e-9)
    np.testing.assert_allclose(theta, theta.T, rtol=1e-10)
    assert np.all(np.diag(theta) > 0)


def test_marchenko_pastur_theta():
    # single cluster: rho_hat is tr(R_hat)/N whose scaled variance is M/N
    for n, m in ((1, 10), (60, 600), (5, 8)):
        theta = limiting_theta(make_model([1.0], [n], m), rtol=1e-10, max_nodes=1024)
        assert theta[0, 0] == pytest.approx(m / n, rel=1e-9)


def test_limiting_kernels_agree(base):
    full = limiting_theta(base, rtol=1e-10, max_nodes=1024)
    reduced = limiting_theta(base, rtol=1e-10, max_nodes=1024, kernel="reduced")
    np.testing.assert_allclose(reduced, full, rtol=1e-9)


def test_contour_independence(base):
    ref = limiting_theta(base, rtol=1e-11, max_nodes=1024)
    for kwargs in ({"height": 4.0}, {"margin_frac": 0.4}, {"margin_frac": 0.1}):
        other = limiting_theta(base, rtol=1e-11, max_nodes=1024, **kwargs)
        assert np.max(np.abs(other - ref) / np.abs(ref)) < 1e-8


def test_quadrature_swap_symmetry(base):
    sup = support_clusters(base)
    cs = build_contours(sup)
    src = limiting_source(base, sup)
    a = theta_quadrature(src, cs[0], cs[2], 1 / 30, 1 / 30, rtol=1e-10, max_nodes=1024)
    b = theta_quadrature(src, cs[2], cs[0], 1 / 30, 1 / 30, rtol=1e-10, max_nodes=1024)
    assert a == pytest.approx(b, rel=1e-10)


def test_unknown_kernel(base):
    with pytest.raises(InputError):
        limiting_theta(base, kernel="other")


def test_quadrature_node_cap(base):
    with pytest.raises(QuadratureNonConvergence):
        limiting_theta(base, nodes=16, max_nodes=32, rtol=1e-14)
