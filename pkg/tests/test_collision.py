import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.spatial.transform import Rotation

from bobylev import kernels as K
from bobylev.charfun import RadialGrid, gaussian_charfn, stable_charfn
from bobylev.collision import (
    NonCutoffError,
    QuadratureSpec,
    bobylev_general,
    bobylev_isotropic,
    circle_integral,
    collision_on_grid,
    discrete_l1,
    gain_deviation,
    gain_isotropic,
    grading_for,
    loss_rate,
    orthonormal_frame,
    radial_to_3d,
    truncation_remainder_bound,
    verify_circle_bound,
    verify_operator_bound,
)

R_SAMPLES = [1e-4, 1e-3, 1e-2, 1.0]


def _oracle_w1(r, weight, singular=False):
    """B(W_1)(r) = 2 pi int b sin(theta) [exp(-r(c + s)) - exp(-r)] dtheta via scipy."""
    def bracket(th):
        c, s = math.cos(th / 2), math.sin(th / 2)
        return math.exp(-r) * math.expm1(-r * (c + s - 1.0))
    if singular:
        # theta = u^2 removes the theta^(-3/2) endpoint singularity
        f = lambda u: 2.0 * u * weight(u * u) * bracket(u * u)
        val = quad(f, 0.0, math.sqrt(math.pi / 2), epsabs=0, epsrel=1e-13, limit=200)[0]
    else:
        val = quad(lambda th: weight(th) * bracket(th), 0.0, math.pi / 2, epsabs=0, epsrel=1e-13, limit=200)[0]
    return 2 * math.pi * val


@pytest.mark.parametrize("r", R_SAMPLES)
def test_constant_kernel_against_quad(r, w1):
    got = bobylev_isotropic(w1, K.constant_kernel(), r)
    assert got == pytest.approx(_oracle_w1(r, math.sin), rel=1e-10)


@pytest.mark.parametrize("r", R_SAMPLES)
def test_singular_kernel_against_quad(r, w1):
    got = bobylev_isotropic(w1, K.singular_kernel(), r)
    assert got == pytest.approx(_oracle_w1(r, lambda th: th**-1.5, singular=True), rel=1e-8)


KERNELS = [K.constant_kernel(), K.singular_kernel(), K.singular_kernel().truncate(8),
           K.singular_kernel().truncate(8, cap=True),
           K.KernelModel("custom", singularity_exponent=0.5, table=((0.1, 0.8, 1.5), (2.0, 1.0, 3.0)))]


@pytest.mark.parametrize("kernel", KERNELS, ids=["constant", "singular", "truncated", "capped", "custom"])
@pytest.mark.parametrize("c", [0.05, 0.5, 3.0])
def test_gaussian_is_a_fixed_point(kernel, c, grid):
    # cos^2 + sin^2 = 1 makes the bracket vanish for exp(-c r^2)
    phi = gaussian_charfn(grid, c)
    out = bobylev_isotropic(phi, kernel, np.geomspace(1e-3, 1e2, 40))
    assert np.max(np.abs(out)) < 1e-9


def test_zero_radius(w1):
    assert bobylev_isotropic(w1, K.constant_kernel(), 0.0) == 0.0
    assert gain_isotropic(w1, K.constant_kernel(), 0.0) == pytest.approx(K.l1_norm(K.constant_kernel()))
    with pytest.raises(ValueError):
        bobylev_isotropic(w1, K.constant_kernel(), -1.0)


@given(st.floats(1e-3, 20.0))
def test_gain_equals_operator_plus_loss(r):
    grid = RadialGrid.default()
    phi = stable_charfn(grid, 1.0)
    model = K.singular_kernel().truncate(4)
    b1 = discrete_l1(model, QuadratureSpec(), phi.near_origin_model[1])
    gain = gain_isotropic(phi, model, r)
    assert gain == pytest.approx(bobylev_isotropic(phi, model, r) + b1 * phi(r), rel=1e-10, abs=1e-14)
    assert gain_deviation(phi, model, r) == pytest.approx(gain - b1, rel=1e-8, abs=1e-14)


def test_gain_needs_cutoff(w1):
    with pytest.raises(NonCutoffError):
        gain_isotropic(w1, K.singular_kernel(), 1.0)
    with pytest.raises(NonCutoffError):
        gain_deviation(w1, K.singular_kernel(), 1.0)


def test_divergent_integral_is_nan(grid):
    # anchor exponent 0.5 <= nu - 1 for the theta^(-3/2) kernel
    phi = stable_charfn(grid, 0.5)
    assert math.isnan(bobylev_isotropic(phi, K.singular_kernel(), 1.0))
    assert math.isfinite(bobylev_isotropic(phi, K.constant_kernel(), 1.0))


def test_adaptive_refinement_converges(w1):
    spec = QuadratureSpec(adaptive=True, tol=1e-12)
    out = bobylev_isotropic(w1, K.singular_kernel(), np.array(R_SAMPLES), spec)
    ref = [_oracle_w1(r, lambda th: th**-1.5, singular=True) for r in R_SAMPLES]
    assert np.allclose(out, ref, rtol=1e-9)


@pytest.mark.parametrize("mode", ["direct", "split"])
def test_cancellation_modes_agree_at_moderate_r(mode, w1):
    spec = QuadratureSpec(cancellation_mode=mode)
    got = bobylev_isotropic(w1, K.constant_kernel(), 1.0, spec)
    assert got == pytest.approx(_oracle_w1(1.0, math.sin), rel=1e-10)


def test_spec_validation():
    for bad in ({"panels": 2}, {"tol": 0.0}, {"cancellation_mode": "x"}, {"grading": 0.5}, {"omega_points": 5}):
        with pytest.raises(ValueError):
            QuadratureSpec(**bad)


def test_grading_for():
    assert grading_for(K.constant_kernel()) == 4.0
    assert grading_for(K.singular_kernel(), 1.0) == pytest.approx(4.0)
    assert grading_for(K.singular_kernel(), 0.5) == 30.0


def test_orthonormal_frame(rng):
    xi = rng.normal(size=3)
    e, u, w = orthonormal_frame(xi)
    m = np.stack([e, u, w])
    assert np.allclose(m @ m.T, np.eye(3), atol=1e-14)
    assert np.allclose(e, xi / np.linalg.norm(xi))
    with pytest.raises(ValueError):
        orthonormal_frame(np.zeros(3))


@pytest.mark.parametrize("kernel", [K.constant_kernel(), K.singular_kernel()])
def test_general_form_matches_isotropic(kernel, w1, rng):
    value, dev = radial_to_3d(w1)
    xi = rng.normal(size=3)
    r = float(np.linalg.norm(xi))
    got = bobylev_general(value, kernel, xi, deviation=dev, anchor_exponent=1.0)
    assert got == pytest.approx(bobylev_isotropic(w1, kernel, r), rel=1e-9)


def test_general_form_rotation_invariance(w1, rng):
    value, dev = radial_to_3d(w1)
    xi = rng.normal(size=3)
    kernel = K.constant_kernel()
    base = bobylev_general(value, kernel, xi, deviation=dev)
    for rot in Rotation.random(4, random_state=3):
        assert bobylev_general(value, kernel, rot.apply(xi), deviation=dev) == pytest.approx(base, rel=1e-12)


def test_general_form_anisotropic_gaussian_fixed_point(rng):
    # exp(-x.Ax/2) is not preserved unless A is isotropic; the isotropic case vanishes
    iso = lambda x: np.exp(-0.5 * np.sum(np.asarray(x) ** 2, axis=-1))
    assert abs(bobylev_general(iso, K.constant_kernel(), rng.normal(size=3))) < 1e-12
    aniso = lambda x: np.exp(-0.5 * (np.asarray(x)[..., 0] ** 2 + 3 * np.asarray(x)[..., 1] ** 2))
    assert abs(bobylev_general(aniso, K.constant_kernel(), np.array([1.0, 1.0, 0.0]))) > 1e-3


def test_general_form_complex_callable():
    # a shift in velocity multiplies phi by a phase; B commutes with it by momentum conservation
    u = np.array([0.3, -0.2, 0.5])
    iso = lambda x: np.exp(-0.5 * np.sum(np.asarray(x) ** 2, axis=-1))
    shifted = lambda x: iso(x) * np.exp(1j * np.asarray(x) @ u)
    out = bobylev_general(shifted, K.constant_kernel(), np.array([0.4, 0.1, -0.7]))
    assert isinstance(out, complex)
    assert abs(out) < 1e-12


def test_circle_integral_parts(w1):
    value, dev = radial_to_3d(w1)
    ci = circle_integral(value, np.array([0.0, 0.0, 2.0]), 0.7, deviation=dev)
    assert ci.total == pytest.approx(ci.part1 + ci.part2 + ci.part3)
    # isotropic phi: the circle integral equals 2 pi [phi(r c) phi(r s) - phi(r)]
    c, s = math.cos(0.35), math.sin(0.35)
    expected = 2 * math.pi * (math.exp(-2 * (c + s)) - math.exp(-2))
    assert ci.total.real == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_circle_bound(alpha, grid, rng):
    phi = stable_charfn(grid, alpha)
    value, dev = radial_to_3d(phi)
    from bobylev.charfun import kalpha_norm
    reps = verify_circle_bound(value, rng.normal(size=3), alpha, kalpha_norm(phi, alpha),
                               np.linspace(0.05, math.pi / 2, 12), deviation=dev)
    assert all(r.passed for r in reps)


@pytest.mark.parametrize("kernel", [K.constant_kernel(), K.singular_kernel()])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_operator_bound(kernel, alpha, grid):
    phi = stable_charfn(grid, alpha)
    reps = verify_operator_bound(phi, kernel, alpha, np.geomspace(1e-3, 50, 15))
    assert all(r.passed for r in reps)


def test_truncation_remainder_bound(w1):
    kernel = K.singular_kernel()
    r = np.geomspace(1e-3, 10, 8)
    gap = np.abs(bobylev_isotropic(w1, kernel, r) - bobylev_isotropic(w1, kernel.truncate(16), r))
    bound = truncation_remainder_bound(kernel, 16, 1.0, 1.0, r)
    assert np.all(gap <= bound * (1 + 1e-9))


@pytest.mark.parametrize("r", [1e-3, 0.1, 1.0, 10.0])
def test_loss_rate_against_quad(r, w1):
    # l(r) = 2 pi int theta^(-3/2) (1 - exp(-r sin(theta/2))), with theta = u^2
    f = lambda u: 2.0 * u**-2 * -math.expm1(-r * math.sin(u * u / 2))
    ref = 2 * math.pi * quad(f, 0.0, math.sqrt(math.pi / 2), epsabs=0, epsrel=1e-13, limit=200)[0]
    assert loss_rate(w1, K.singular_kernel(), r)[0] == pytest.approx(ref, rel=1e-8)


def test_loss_rate_closes_the_operator(w1):
    # B + l phi only involves phi(r c) - phi(r); for a cutoff kernel l = ||b|| - int b phi(r s)
    model = K.constant_kernel()
    r = np.geomspace(1e-2, 20, 7)
    b1 = discrete_l1(model, QuadratureSpec(), w1.near_origin_model[1])
    gain = gain_isotropic(w1, model, r)
    explicit = bobylev_isotropic(w1, model, r) + loss_rate(w1, model, r) * w1(r)
    assert np.allclose(explicit, gain - b1 * w1(r) + loss_rate(w1, model, r) * w1(r), rtol=1e-10, atol=1e-14)
    assert np.all(loss_rate(w1, model, r) <= b1 * (1 + 1e-12))


@pytest.mark.parametrize("n", [4, 16, 64])
def test_truncation_consistency_improves(n, w1):
    r = np.geomspace(1e-2, 10, 6)
    full = bobylev_isotropic(w1, K.singular_kernel(), r)
    gaps = [np.max(np.abs(full - bobylev_isotropic(w1, K.singular_kernel().truncate(m), r))) for m in (n, 2 * n)]
    assert gaps[1] < gaps[0]


def test_cutoff_identity_nodewise(w1):
    model = K.singular_kernel().truncate(8)
    r = w1.grid.nodes[::7]
    b1 = discrete_l1(model, QuadratureSpec(), w1.near_origin_model[1])
    gap = gain_isotropic(w1, model, r) - b1 * w1(r) - bobylev_isotropic(w1, model, r)
    assert np.max(np.abs(gap)) <= 1e-10
