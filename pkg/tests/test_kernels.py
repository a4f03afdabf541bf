import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidingfw.kernels import (
    Astigmatism,
    ConfigurationError,
    ContinuousLaplace,
    DomainError,
    DoubleHelix,
    Gaussian1D,
    MaTirf,
    Optics,
    SampledLaplace,
    astig_sigmas,
    helix_offsets,
    pixel_integrals,
    tirf_angles_and_depths,
)
from oracles import fd_gradient_errors
from problems import kernels_1d, kernels_3d
from slidingfw.measures import DiscreteMeasure

OPTICS = Optics()


# -- reference optics ---------------------------------------------------------

def test_reference_optics_defaults():
    o = Optics()
    assert (o.b1, o.b2, o.b3, o.n1, o.n2) == (6.4, 6.4, 0.8, 64, 64)
    assert (o.na, o.n_i, o.n_t, o.wavelength) == (1.49, 1.515, 1.333, 0.66)
    assert o.psf_sigma == pytest.approx(0.42 * 0.66 / 1.49, rel=1e-15)


def test_optics_validation():
    with pytest.raises(ConfigurationError):
        Optics(n_i=1.3, n_t=1.4)
    with pytest.raises(ConfigurationError):
        Optics(na=1.6)
    with pytest.raises(ConfigurationError):
        Optics(b3=0.0)


def test_observation_sizes():
    assert Gaussian1D(0.05, 100).size == 100
    assert SampledLaplace.uniform(7, 1.0).size == 7
    for k in kernels_3d(3):
        assert k.size == 3 * 64 * 64


# -- 1-D variants ---------------------------------------------------------------

def test_gaussian_formula():
    k = Gaussian1D(0.05, 100)
    x = 0.4321
    t = np.arange(100) / 99
    expected = np.exp(-((t - x) ** 2) / (2 * 0.05**2)) / math.sqrt(2 * math.pi * 0.05**2)
    np.testing.assert_allclose(k.phi(x), expected, rtol=1e-12)


def test_gaussian_derivative_zero_at_sample_mode():
    k = Gaussian1D(0.05, 100)
    i = 37
    assert k.grad_phi(k.samples[i])[i, 0] == pytest.approx(0.0, abs=1e-12)


def test_laplace_unit_sample():
    k = SampledLaplace([0.0], upper=10.0)
    np.testing.assert_array_equal(k.phi(5.0), [1.0])


def test_laplace_gradient_closed_form():
    k = SampledLaplace.uniform(10, 5.0)
    x = 0.7
    np.testing.assert_allclose(k.grad_phi(x)[:, 0], -k.s * np.exp(-k.s * x), rtol=1e-14)


@given(st.floats(0.01, 5.0))
def test_normalized_laplace_unit_norm(x):
    k = SampledLaplace.uniform(30, 8.0, normalized=True, upper=5.0)
    assert np.linalg.norm(k.phi(x)) == pytest.approx(1.0, rel=1e-12)


def test_sampled_laplace_correlation_closed_sum():
    for norm in (False, True):
        k = SampledLaplace.uniform(15, 6.0, normalized=norm, upper=4.0)
        x, xp = 0.3, 1.7
        expected = np.sum(np.exp(-k.s * (x + xp)))
        if norm:
            expected *= (np.sum(np.exp(-2 * k.s * x)) * np.sum(np.exp(-2 * k.s * xp))) ** -0.5
        assert k.correlation(x, xp) == pytest.approx(expected, rel=1e-13)


def test_sampled_laplace_rejects_bad_samples():
    with pytest.raises(ConfigurationError):
        SampledLaplace([1.0, 0.5])
    with pytest.raises(ConfigurationError):
        SampledLaplace([-1.0, 0.5])


@pytest.mark.parametrize("kernel", kernels_1d(), ids=repr)
def test_higher_derivatives_match_finite_differences(kernel):
    x = 0.5 * (kernel.lower[0] + kernel.upper[0]) * 0.6
    h = 1e-4
    D = kernel.derivatives(x, 4)
    for k in range(1, 5):
        fd = (kernel.derivatives(x + h, k - 1)[:, k - 1]
              - kernel.derivatives(x - h, k - 1)[:, k - 1]) / (2 * h)
        np.testing.assert_allclose(D[:, k], fd, rtol=1e-5, atol=1e-6 * np.abs(D[:, k]).max())


# -- continuous Laplace -------------------------------------------------------

def test_continuous_correlations():
    assert ContinuousLaplace(False).correlation(1.0, 1.0) == pytest.approx(0.5)
    assert ContinuousLaplace(True).correlation(2.5, 2.5) == pytest.approx(1.0)
    assert ContinuousLaplace(True).correlation(1.0, 4.0) == pytest.approx(0.8)


def test_continuous_singularity():
    with pytest.raises(DomainError):
        ContinuousLaplace(False).correlation(0.0, 0.0)


def test_continuous_derivatives_match_fd():
    for norm in (False, True):
        k = ContinuousLaplace(norm)
        h = 1e-5
        for i in range(3):
            for j in range(3):
                fd = (k.correlation_derivative(1.3 + h, 0.8, i, j)
                      - k.correlation_derivative(1.3 - h, 0.8, i, j)) / (2 * h)
                assert k.correlation_derivative(1.3, 0.8, i + 1, j) == pytest.approx(fd, rel=1e-6)


# -- 3-D modality parameters -------------------------------------------------

def test_tirf_angles_reference_optics():
    angles, s = tirf_angles_and_depths(OPTICS, 4)
    np.testing.assert_allclose(np.degrees(angles), [61.63, 67.61, 73.60, 79.58], atol=0.01)
    assert s[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(s) > 0)


def test_tirf_depth_formula_verbatim_and_sqrt_switch():
    angles, s = tirf_angles_and_depths(OPTICS, 3)
    a_c = math.asin(1.333 / 1.515)
    gap = np.sin(angles) ** 2 - math.sin(a_c) ** 2
    np.testing.assert_allclose(s, 4 * math.pi * 1.515 / 0.66 * gap, rtol=1e-13, atol=1e-13)
    _, s_sqrt = tirf_angles_and_depths(OPTICS, 3, sqrt_depth=True)
    np.testing.assert_allclose(s_sqrt, 4 * math.pi * 1.515 / 0.66 * np.sqrt(np.maximum(gap, 0)),
                               rtol=1e-13, atol=1e-13)


def test_tirf_single_angle_is_critical():
    angles, s = tirf_angles_and_depths(OPTICS, 1)
    assert angles[0] == pytest.approx(math.asin(1.333 / 1.515))
    assert s[0] == pytest.approx(0.0, abs=1e-12)


def test_tirf_rejects_bad_indices():
    bad = Optics.__new__(Optics)
    object.__setattr__(bad, "n_i", 1.3)
    object.__setattr__(bad, "n_t", 1.4)
    object.__setattr__(bad, "na", 1.2)
    with pytest.raises(ConfigurationError):
        tirf_angles_and_depths(bad, 2)


def test_astig_sigmas():
    k = Astigmatism(OPTICS, 1)
    s1, _ = astig_sigmas(k, k.beta / k.alpha)
    assert s1 == pytest.approx(0.42 * 0.66 / 1.49, rel=1e-12)
    z = np.linspace(-1, 1, 41)
    s1, s2 = astig_sigmas(k, z)
    np.testing.assert_allclose(s2, astig_sigmas(k, -z)[0], rtol=1e-15)
    assert np.all(s1 >= k.sigma0 * (1 - 1e-15))


def test_helix_offsets():
    k = DoubleHelix(OPTICS, 1)
    assert helix_offsets(k, 0.0) == pytest.approx((0.5, 0.0))
    z = np.linspace(-1, 1, 21)
    r1, r2 = helix_offsets(k, z)
    np.testing.assert_allclose(r1**2 + r2**2, 0.25, rtol=1e-14)
    theta = k.theta_speed * 0.5
    assert theta == pytest.approx(0.1923 * math.pi)
    assert theta == pytest.approx(0.6041, abs=1e-4)


# -- independent PSF oracle ---------------------------------------------------

def _lobes_oracle(kernel, x):
    """(center1, center2, sigma1, sigma2, weight) per plane and lobe, from the formulas."""
    x1, x2, z = x
    out = []
    for k in range(kernel.n_planes):
        if isinstance(kernel, Astigmatism):
            dz = z - kernel.focal_depths[k]
            s0, a, b, d = kernel.sigma0, kernel.alpha, kernel.beta, kernel.dof
            s1 = s0 * math.sqrt(1 + ((a * dz - b) / d) ** 2)
            s2 = s0 * math.sqrt(1 + ((-a * dz - b) / d) ** 2)
            out.append([(x1, x2, s1, s2, 1.0)])
        elif isinstance(kernel, DoubleHelix):
            dz = z - kernel.focal_depths[k]
            th = kernel.theta_speed * dz
            r1, r2 = 0.5 * kernel.omega * math.cos(th), -0.5 * kernel.omega * math.sin(th)
            s = kernel.sigma
            out.append([(x1 + r1, x2 + r2, s, s, 1.0), (x1 - r1, x2 - r2, s, s, 1.0)])
        else:
            s = kernel.decay
            xi = np.sum(np.exp(-2 * s * z)) ** -0.5
            out.append([(x1, x2, kernel.sigma, kernel.sigma, xi * math.exp(-s[k] * z))])
    return out


def _quadrature_image(kernel, x, nodes, weights):
    o = kernel.optics
    e1, e2 = kernel.edges1, kernel.edges2
    p1 = e1[:-1, None] + (e1[1] - e1[0]) * nodes[None, :]
    p2 = e2[:-1, None] + (e2[1] - e2[0]) * nodes[None, :]

    def axis(pts, h, c, s):
        g = np.exp(-0.5 * ((pts - c) / s) ** 2) / (math.sqrt(2 * math.pi) * s)
        return (g * weights[None, :]).sum(axis=1) * h

    img = np.zeros((kernel.n_planes, o.n1, o.n2))
    for k, lobes in enumerate(_lobes_oracle(kernel, x)):
        for c1, c2, s1, s2, w in lobes:
            img[k] += w * np.outer(axis(p1, e1[1] - e1[0], c1, s1), axis(p2, e2[1] - e2[0], c2, s2))
    return img.ravel()


POINTS = [np.array([3.23, 3.17, 0.3]), np.array([1.01, 5.55, 0.72]), np.array([4.4, 2.0, 0.05])]


@pytest.mark.parametrize("kernel", kernels_3d(3), ids=lambda k: k.name)
def test_pixel_integrals_gauss_legendre_oracle(kernel):
    nodes, w = np.polynomial.legendre.leggauss(16)
    nodes, w = (nodes + 1) / 2, w / 2
    for x in POINTS:
        ref = _quadrature_image(kernel, x, nodes, w)
        got = kernel.phi(x)
        big = ref > 1e-6 * ref.max()
        np.testing.assert_allclose(got[big], ref[big], rtol=1e-10)
        assert np.abs(got - ref).max() <= 1e-12 * ref.max()


@pytest.mark.parametrize("kernel", kernels_3d(2), ids=lambda k: k.name)
def test_pixel_integrals_midpoint_oracle(kernel):
    # 16x16 midpoint: error ~ (h/sigma)^2 / 24 with h = pixel/16, about 5e-5 here
    nodes, w = (np.arange(16) + 0.5) / 16, np.full(16, 1 / 16)
    for x in POINTS:
        ref = _quadrature_image(kernel, x, nodes, w)
        got = kernel.phi(x)
        assert np.linalg.norm(got - ref) / np.linalg.norm(got) < 2e-4
        assert got.sum() == pytest.approx(ref.sum(), rel=1e-6)


def test_pixel_integrals_far_tail_is_positive_and_accurate():
    edges = np.linspace(0, 6.4, 65)
    val, _, _ = pixel_integrals(edges, 0.05, 0.186)
    assert np.all(val >= 0)
    # pixel 30 is ~16 sigma away from the center
    from scipy.stats import norm
    ref = norm.sf(edges[30], 0.05, 0.186) - norm.sf(edges[31], 0.05, 0.186)
    assert val[30] == pytest.approx(ref, rel=1e-10)


def test_astigmatism_symmetric_at_focal_plane():
    k = Astigmatism(OPTICS, 1)
    c = 0.5 * (k.edges1[31] + k.edges1[32])
    img = k.phi([c, c, k.focal_depths[0]]).reshape(64, 64)
    np.testing.assert_allclose(img, img.T, rtol=1e-12, atol=1e-15)


def test_tirf_deeper_molecules_fade_faster():
    k = MaTirf(OPTICS, 4)
    shallow = k.phi([3.2, 3.2, 0.1]).reshape(4, -1).sum(axis=1)
    deep = k.phi([3.2, 3.2, 0.7]).reshape(4, -1).sum(axis=1)
    assert np.all(np.diff(shallow) < 0) and np.all(np.diff(deep) < 0)
    assert deep[-1] / deep[0] < shallow[-1] / shallow[0]


# -- operator consistency ----------------------------------------------------

@pytest.mark.parametrize("kernel", kernels_1d() + kernels_3d(2), ids=lambda k: getattr(k, "name", repr(k)))
def test_forward_adjoint_correlation(kernel):
    rng = np.random.default_rng(0)
    pts = kernel.lower + (kernel.upper - kernel.lower) * rng.uniform(0.1, 0.9, (3, kernel.dim))
    m = DiscreteMeasure([1.0, -2.0, 0.5], pts)
    np.testing.assert_allclose(kernel.forward(m), kernel.phis(pts) @ m.amplitudes, rtol=1e-14)
    np.testing.assert_array_equal(kernel.forward(DiscreteMeasure.empty(kernel.dim)), 0.0)
    np.testing.assert_allclose(kernel.forward(2 * DiscreteMeasure([1.0], pts[:1])),
                               2 * kernel.phi(pts[0]), rtol=1e-14)
    x, xp = pts[0], pts[1]
    corr = kernel.correlation(x, xp)
    assert float(kernel.adjoint(kernel.phi(xp), x)[0]) == pytest.approx(corr, rel=1e-12)
    assert kernel.correlation(x, x) == pytest.approx(np.linalg.norm(kernel.phi(x)) ** 2, rel=1e-12)
    assert float(kernel.adjoint(np.zeros(kernel.size), x)[0]) == 0.0


@pytest.mark.parametrize("K", [1, 2, 4])
def test_adjoint_gradient_matches_gradient_images(K):
    rng = np.random.default_rng(K)
    for kernel in kernels_3d(K) + kernels_1d():
        pts = kernel.lower + (kernel.upper - kernel.lower) * rng.uniform(0.05, 0.95, (5, kernel.dim))
        p = rng.standard_normal(kernel.size)
        ref = np.einsum("mnd,m->nd", kernel.grad_phis(pts), p)
        np.testing.assert_allclose(kernel.adjoint_grad(p, pts), ref, rtol=0,
                                   atol=1e-13 * np.abs(ref).max())


@pytest.mark.parametrize("kernel", kernels_1d() + kernels_3d(2), ids=lambda k: getattr(k, "name", repr(k)))
def test_adjoint_grid_matches_pointwise(kernel):
    rng = np.random.default_rng(1)
    p = rng.standard_normal(kernel.size)
    axes = [np.linspace(lo, hi, 5) for lo, hi in zip(kernel.lower, kernel.upper)]
    grid = kernel.adjoint_grid(p, axes)
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    np.testing.assert_allclose(grid.ravel(), kernel.phis(mesh).T @ p, rtol=1e-10, atol=1e-10)


def test_atom_matrices_blocks_and_duplicates():
    k = Gaussian1D()
    A = k.atom_matrices([[0.3]], with_derivatives=True)
    assert A.gamma.shape == (100, 2)
    np.testing.assert_array_equal(A.gamma[:, 0], k.phi(0.3))
    np.testing.assert_array_equal(A.gamma[:, 1], k.grad_phi(0.3)[:, 0])
    assert k.atom_matrices([[0.3], [0.3]]).rank_deficient
    assert not k.atom_matrices([[0.3], [0.4]]).rank_deficient


def test_gamma_gram_matches_correlation_partials():
    k = SampledLaplace.uniform(25, 10.0, normalized=True, upper=5.0)
    x, xp, h = 0.8, 1.4, 1e-5
    G = k.atom_matrices([[x], [xp]], with_derivatives=True).gamma
    gram = G.T @ G
    # entry (phi(x), phi'(xp)) = d/dxp C(x, xp)
    fd = (k.correlation(x, xp + h) - k.correlation(x, xp - h)) / (2 * h)
    assert gram[0, 3] == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("kernel", kernels_1d() + kernels_3d(1), ids=lambda k: getattr(k, "name", repr(k)))
def test_domain_errors(kernel):
    with pytest.raises(DomainError):
        kernel.phi(kernel.upper + 1.0)
    with pytest.raises(DomainError):
        kernel.forward(DiscreteMeasure([1.0], (kernel.lower - 1.0)[None, :]))


@pytest.mark.parametrize("kernel", kernels_1d() + kernels_3d(4), ids=lambda k: getattr(k, "name", repr(k)))
def test_gradients_match_central_differences(kernel):
    rng = np.random.default_rng(2024)
    span = kernel.upper - kernel.lower
    pts = kernel.lower + span * rng.uniform(0.02, 0.98, (100, kernel.dim))
    assert fd_gradient_errors(kernel, pts).max() < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 0.8))
def test_tirf_phi_is_nonnegative_and_bounded(u, v, z):
    k = MaTirf(OPTICS, 2)
    phi = k.phi([u * 6.4, v * 6.4, z])
    assert np.all(phi >= 0)
    assert phi.sum() <= math.sqrt(2) + 1e-12
