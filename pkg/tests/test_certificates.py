import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sampled_laplace_error
from slidingfw.certificates import (
    Certificate,
    CertificateError,
    Kind,
    check_nondegeneracy,
    closed_form_eta_w_laplace,
    eta_lambda,
    eta_v,
    eta_w,
)
from slidingfw.kernels import (
    Astigmatism,
    ContinuousLaplace,
    DomainError,
    DoubleHelix,
    Gaussian1D,
    MaTirf,
    Optics,
    SampledLaplace,
)
from slidingfw.measures import DiscreteMeasure

DEMO = DiscreteMeasure([1.3, 0.8, 1.4], [[0.3], [0.37], [0.7]])
FIVE = DiscreteMeasure(
    [1.0] * 5,
    [[1.5, 2.5, 0.1], [1.5, 3.0, 0.5], [2.0, 5.0, 0.7], [4.5, 3.5, 0.4], [5.0, 1.0, 0.2]],
)


# -- eta_lambda -----------------------------------------------------------------

def test_eta_lambda_zero():
    k = Gaussian1D()
    c = eta_lambda(k, np.zeros(k.size), 0.3)
    assert c.kind is Kind.ETA_LAMBDA
    np.testing.assert_array_equal(c(np.linspace(0, 1, 11)), 0.0)


def test_eta_lambda_unit_correlation():
    k = SampledLaplace.uniform(30, 10.0, normalized=True, upper=5.0)
    lam = 0.7
    assert eta_lambda(k, lam * k.phi(1.2), lam)(1.2) == pytest.approx(1.0, rel=1e-12)


def test_eta_lambda_orthogonal_residual():
    k = Gaussian1D()
    x = 0.42
    y = np.random.default_rng(0).standard_normal(k.size)
    phi = k.phi(x)
    y -= (y @ phi) / (phi @ phi) * phi
    assert eta_lambda(k, y, 0.1)(x) == pytest.approx(0.0, abs=1e-12)


def test_eta_lambda_subtracts_model_and_checks_lambda():
    k = Gaussian1D()
    y = k.forward(DEMO)
    np.testing.assert_allclose(eta_lambda(k, y, 1.0, DEMO).p, 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        eta_lambda(k, y, 0.0)


# -- eta_V ----------------------------------------------------------------------

@pytest.mark.parametrize("kernel", [
    Gaussian1D(),
    SampledLaplace.uniform(60, 20.0, lower=0.05, upper=5.0),
    SampledLaplace.uniform(60, 20.0, normalized=True, lower=0.05, upper=5.0),
], ids=repr)
def test_eta_v_interpolates_random_configurations(kernel):
    rng = np.random.default_rng(5)
    lo, hi = float(kernel.lower[0]), float(kernel.upper[0])
    for n in range(1, 4):
        # well separated: n points on a jittered coarse grid in the first half of the domain
        base = lo + (hi - lo) * (0.15 + 0.25 * np.arange(n))
        pos = base + 0.02 * (hi - lo) * rng.uniform(-1, 1, n)
        amps = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2, n)
        m = DiscreteMeasure(amps, pos[:, None])
        try:
            c = eta_v(kernel, m)
        except CertificateError:
            continue
        np.testing.assert_allclose(c(pos), np.sign(amps), atol=1e-8)
        np.testing.assert_allclose(c.gradient(pos)[:, 0], 0.0, atol=1e-8 * max(1, np.abs(c.p).max()))


def test_eta_v_demo_is_nondegenerate():
    c = eta_v(Gaussian1D(), DEMO)
    assert c.kind is Kind.ETA_V
    rep = check_nondegeneracy(c, DEMO.positions, 1000)
    assert rep.max_abs_off_support <= 1 + 1e-6
    assert rep.nondegenerate
    assert all(d < 0 for d in rep.hessian_determinants)


@pytest.mark.parametrize("cls", [Astigmatism, DoubleHelix, MaTirf])
def test_eta_v_five_molecules(cls):
    c = eta_v(cls(Optics(), 4), FIVE)
    vals = c(FIVE.positions)
    np.testing.assert_allclose(vals, 1.0, atol=1e-8)
    assert c([1.5, 2.5, 0.1]) == pytest.approx(1.0, abs=1e-8)
    assert c([1.5, 3.0, 0.5]) == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(c.gradient(FIVE.positions), 0.0, atol=1e-6)


def test_eta_v_rank_deficient():
    m = DiscreteMeasure([1.0, 1.0], [[0.4], [0.4]])
    with pytest.raises(CertificateError) as err:
        eta_v(Gaussian1D(), m)
    assert err.value.condition_number > 1e12


def test_eta_v_single_plane_tirf_has_no_depth_information():
    with pytest.raises(CertificateError):
        eta_v(MaTirf(Optics(), 1), FIVE)


# -- eta_W ----------------------------------------------------------------------

@pytest.mark.parametrize("normalized", [False, True])
@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("center", [0.5, 1.0, 2.0])
def test_eta_w_continuous_matches_closed_form(normalized, n, center):
    c = eta_w(ContinuousLaplace(normalized), center, n)
    x = np.linspace(center / 4, 4 * center, 3001)
    ref = closed_form_eta_w_laplace(x, center, n, normalized)
    assert np.abs(c(x) - ref).max() < 1e-8


@pytest.mark.parametrize("n", [1, 2, 3])
def test_eta_w_continuous_vanishing_derivatives(n):
    c = eta_w(ContinuousLaplace(False), 1.0, n)
    assert c(1.0) == pytest.approx(1.0, abs=1e-10)
    for k in range(1, 2 * n):
        assert c.derivative(1.0, k) == pytest.approx(0.0, abs=1e-8)
    # 2N-th derivative of 1 - r^{2N}, r = (x - c)/(x + c), at x = c
    expected = -math.factorial(2 * n) / 2.0 ** (2 * n)
    assert c.derivative(1.0, 2 * n) == pytest.approx(expected, rel=1e-8)


def test_eta_w_second_derivative_example():
    c = eta_w(ContinuousLaplace(False), 1.0, 1)
    assert c.derivative(1.0, 2) == pytest.approx(-0.5, rel=1e-10)
    rep = check_nondegeneracy(c, [[1.0]], 2000, lower=[0.25], upper=[4.0], cluster_order=1)
    assert rep.top_derivative == pytest.approx(-0.5, rel=1e-10)
    assert rep.nondegenerate


@pytest.mark.parametrize("kernel", [
    Gaussian1D(),
    SampledLaplace.uniform(50, 10.0, lower=0.05),
    SampledLaplace.uniform(50, 10.0, normalized=True, lower=0.05),
], ids=repr)
def test_eta_w_sampled_interpolation(kernel):
    center = 0.5 if isinstance(kernel, Gaussian1D) else 1.0
    for n in (1, 2):
        c = eta_w(kernel, center, n)
        assert c(center) == pytest.approx(1.0, abs=1e-8)
        for k in range(1, 2 * n):
            scale = max(1.0, abs(c.derivative(center, 2 * n)))
            assert abs(c.derivative(center, k)) <= 1e-6 * scale


def test_eta_w_finite_difference_residuals():
    k = SampledLaplace.uniform(80, 10.0, lower=0.05)
    c = eta_w(k, 1.0, 2)
    h = 1e-3
    f = [c(1.0 + j * h) for j in (-2, -1, 0, 1, 2)]
    d1 = (f[3] - f[1]) / (2 * h)
    d3 = (f[4] - 2 * f[3] + 2 * f[1] - f[0]) / (2 * h**3)
    assert abs(d1) < 1e-6
    assert abs(d3) < 1e-2


def test_sampled_laplace_converges_to_continuous():
    errs = [sampled_laplace_error(k) for k in (10, 120, 800)]
    assert errs[2] < errs[1] < errs[0]


def test_eta_w_rejects_bad_input():
    with pytest.raises(ValueError):
        eta_w(Gaussian1D(), 0.5, 0)
    with pytest.raises(DomainError):
        eta_w(ContinuousLaplace(), -1.0, 1)
    with pytest.raises(TypeError):
        eta_w(Astigmatism(Optics(), 1), 0.5, 1)
    with pytest.raises(DomainError):
        eta_w(Gaussian1D(), 1.5, 1)


# -- closed forms ---------------------------------------------------------------

def test_closed_form_examples():
    assert closed_form_eta_w_laplace(3.0, 1.0, 1) == pytest.approx(0.75)
    assert closed_form_eta_w_laplace(4.0, 1.0, 1, normalized=True) == pytest.approx(0.8)
    for norm in (False, True):
        assert closed_form_eta_w_laplace(2.3, 2.3, 3, norm) == pytest.approx(1.0)


def test_closed_form_domain():
    with pytest.raises(DomainError):
        closed_form_eta_w_laplace(0.0, 1.0, 1)
    with pytest.raises(DomainError):
        closed_form_eta_w_laplace(1.0, -1.0, 1)


@given(st.floats(1e-3, 1e3), st.floats(1e-2, 1e2), st.integers(1, 4), st.booleans())
def test_closed_form_strictly_below_one(x, c, n, norm):
    if abs(x - c) <= 1e-6 * c:
        return
    assert abs(closed_form_eta_w_laplace(x, c, n, norm)) < 1.0


# -- nondegeneracy --------------------------------------------------------------

class _Constant:
    """eta == 1 everywhere on [0, 1]."""

    class kernel:
        lower = np.array([0.0])
        upper = np.array([1.0])

    def __call__(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def on_grid(self, axes):
        return np.ones(axes[0].size)


def test_constant_certificate_is_degenerate():
    rep = check_nondegeneracy(_Constant(), [[0.5]], 200)
    assert rep.max_abs_off_support == 1.0
    assert rep.hessian_determinants == [0.0]
    assert not rep.nondegenerate


def test_report_serialization():
    rep = check_nondegeneracy(eta_v(Gaussian1D(), DEMO), DEMO.positions, 500)
    d = rep.to_dict()
    assert set(d) >= {"max_abs_off_support", "hessian_determinants", "nondegenerate", "thresholds"}
    assert d["thresholds"] == {"margin_tol": 1e-6, "det_floor": 1e-8}
    assert d["grid_points"] == 500


def test_certificate_is_adjoint_evaluation():
    k = Gaussian1D()
    p = np.random.default_rng(3).standard_normal(k.size)
    c = Certificate(k, p)
    xs = np.linspace(0, 1, 7)
    np.testing.assert_allclose(c(xs), [float(k.adjoint(p, x)[0]) for x in xs], rtol=1e-13)
    np.testing.assert_allclose(c.on_grid([xs]), c(xs), rtol=1e-13)
