import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from learnduality.analysis import loglog_slope
from learnduality.compositions import CATALOGUE, Composition
from learnduality.duality import (
    Branch,
    Rotation,
    cd_constants,
    composition_value,
    duality_map,
    estimate_theta,
    fixed_y_jacobian,
    jacobian_dominated_window,
    ks_distance,
    monotone_branches,
    predicted_density,
    predicted_exponent,
    principal_branch,
    rotate,
    scaling_form,
    toy_jacobian,
)
from learnduality.errors import EstimationError, MultiBranchError, SingularityError
from learnduality.septuple import ActivationKind, LossKind
from learnduality.toy import MINUS, PLUS, ClassSpec, ToyState, collect_jumps, toy_gradient

SIG_MSE = CATALOGUE["sigmoid_mse"]
# Close to the sigmoid/MSE equilibrium at gamma = 0.05; fixed so these tests
# do not depend on training.
SIG_STATE = ToyState(16.0, -8.0, 0.05)

# Principal axis of the exact (dw, db) covariance at SIG_STATE, from adaptive
# quadrature of the Gaussian input moments (rel. tol 1e-12).
THETA_ORACLE = {0: (1.0864329811538445, 0.0019300899151300), 1: (1.1262490891741177, 0.0020901853865441)}


# --- rotation ---------------------------------------------------------------


def test_rotation_orthogonal():
    for theta in np.random.default_rng(0).uniform(-10, 10, 1000):
        m = Rotation(theta).matrix
        np.testing.assert_allclose(m @ m.T, np.eye(2), atol=1e-12)


def test_rotate_special_angles():
    assert rotate(0.3, -1.2, Rotation(0.0)) == (0.3, -1.2)
    q1, q2 = rotate(0.3, -1.2, Rotation(math.pi / 2))
    assert q1 == pytest.approx(-1.2) and q2 == pytest.approx(-0.3)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-7, 7))
def test_rotate_preserves_norm(dw, db, theta):
    q1, q2 = rotate(dw, db, Rotation(theta))
    assert q1**2 + q2**2 == pytest.approx(dw**2 + db**2, rel=1e-12, abs=1e-12)


# --- theta estimation -------------------------------------------------------


def test_theta_axis_aligned_and_diagonal():
    t = np.linspace(-1, 1, 2001)
    assert estimate_theta((0 * t, t)).rotation.theta == pytest.approx(math.pi / 2)
    assert estimate_theta((t, t)).rotation.theta == pytest.approx(math.pi / 4)
    assert estimate_theta((-t, -t)).rotation.theta == pytest.approx(math.pi / 4)


def test_theta_errors():
    z = np.zeros(5000)
    with pytest.raises(EstimationError, match="all jumps are zero"):
        estimate_theta((z, z))
    t = np.r_[np.zeros(5000), np.linspace(1, 2, 10)]
    with pytest.raises(EstimationError):
        estimate_theta((t, t))


@pytest.mark.parametrize("spec", [MINUS, PLUS], ids=["minus", "plus"])
def test_theta_matches_covariance_oracle(spec):
    jumps = collect_jumps(SIG_STATE, SIG_MSE, spec, 10**6, np.random.default_rng(11))
    est = estimate_theta(jumps)
    theta, ratio = THETA_ORACLE[spec.label]
    assert est.rotation.theta == pytest.approx(theta, abs=5e-3)
    assert est.eigen_ratio == pytest.approx(ratio, rel=0.1)
    assert est.eigen_ratio < 0.1
    assert est.n_used == 10**6


# --- compositions -----------------------------------------------------------


def test_composition_examples():
    assert composition_value(-8.0, SIG_MSE, 0.0) == pytest.approx(math.exp(-16), rel=0.01)
    assert composition_value(8.0, CATALOGUE["sigmoid_ce"], 1.0) == pytest.approx(math.exp(-8), rel=0.01)
    assert composition_value(0.5, CATALOGUE["piecewise_ce"], 0.0) == pytest.approx(-math.log(0.5))


@pytest.mark.parametrize("comp_id", ["sigmoid_mse", "sigmoid_ce"])
@pytest.mark.parametrize("x2,sign", [(0.0, -1.0), (1.0, 1.0)])
def test_asymptotic_forms(comp_id, x2, sign):
    comp = CATALOGUE[comp_id]
    # Up to |y| = 25: beyond that H drops below the 1e-12 cross-entropy clamp.
    y = sign * np.array([6.0, 8.0, 12.0, 20.0, 25.0])
    exact = composition_value(y, comp, x2)
    np.testing.assert_allclose(scaling_form(y, comp, x2), exact, rtol=0.02)


@pytest.mark.parametrize("comp_id", ["relu_p2", "relu_p4", "piecewise_ce"])
def test_scaling_forms_exact_on_active_region(comp_id):
    comp = CATALOGUE[comp_id]
    y = np.linspace(0.05, 0.95, 19)
    for x2 in (0.0, 1.0):
        np.testing.assert_allclose(scaling_form(y, comp, x2), composition_value(y, comp, x2),
                                   rtol=1e-10)


def test_predicted_exponents():
    assert predicted_exponent(SIG_MSE) == (1.0, 1.0)
    assert predicted_exponent(CATALOGUE["sigmoid_ce"]) == (1.0, 1.0)
    assert predicted_exponent(CATALOGUE["relu_p2"]) == (0.0, 0.0)
    assert predicted_exponent(CATALOGUE["relu_p4"]) == pytest.approx((2 / 3, 2 / 3))
    assert predicted_exponent(CATALOGUE["piecewise_ce"]) == (2.0, 2.0)
    relu_p3 = Composition("relu_p3", ActivationKind.RELU, LossKind("power", 3))
    assert predicted_exponent(relu_p3) == (0.5, 0.5)
    other = Composition("sig_p3", ActivationKind.SIGMOID, LossKind("power", 3))
    assert predicted_exponent(other) is None


# --- Jacobian ---------------------------------------------------------------


def test_fixed_y_jacobian_vanishes_at_quarter_turn():
    x = np.linspace(-1, 2, 31)
    j = fixed_y_jacobian(x, SIG_MSE, Rotation(math.pi / 2), SIG_STATE, 0.0)
    scale = 0.05 * np.abs(SIG_MSE.dH_dy(SIG_STATE.w * x + SIG_STATE.b, 0.0))
    assert np.all(np.abs(j) <= 1e-16 * scale)  # cos(pi/2) is 6e-17 in floating point


def test_fixed_y_jacobian_quarter_pi_example():
    st_ = ToyState(1.0, 0.0, 0.05)
    _, g_b = toy_gradient(2.0, 1.0, st_, SIG_MSE)
    j = fixed_y_jacobian(2.0, SIG_MSE, Rotation(math.pi / 4), st_, 1.0)
    assert j == pytest.approx(-0.05 * math.sqrt(2) / 2 * g_b, rel=1e-14)


def test_total_jacobian_quarter_pi_against_finite_difference():
    st_ = ToyState(1.0, 0.0, 0.05)
    rot = Rotation(math.pi / 4)
    h = 1e-5
    fd = (duality_map(2 + h, SIG_MSE, rot, st_, 1.0) - duality_map(2 - h, SIG_MSE, rot, st_, 1.0)) / (2 * h)
    assert toy_jacobian(2.0, SIG_MSE, rot, st_, 1.0) == pytest.approx(fd, rel=1e-6)


def test_jacobian_dead_region_is_zero():
    st_ = ToyState(1.0, 0.0, 0.05)
    x = np.linspace(-1.0, -0.01, 50)
    assert not np.any(toy_jacobian(x, CATALOGUE["relu_p4"], Rotation(0.7), st_, 0.0))


KINKS = {"relu_p2": (0.0,), "relu_p4": (0.0,), "piecewise_ce": (0.0, 1.0)}


@pytest.mark.parametrize("comp_id", sorted(CATALOGUE))
def test_jacobian_matches_finite_difference(comp_id):
    comp = CATALOGUE[comp_id]
    rng = np.random.default_rng(3)
    h = 1e-5
    checked = 0
    while checked < 100:
        w, b = rng.uniform(-4, 4), rng.uniform(-2, 2)
        x1, theta, x2 = rng.normal(0.5, 0.6), rng.uniform(-1.5, 1.5), float(rng.integers(0, 2))
        y = w * x1 + b
        if any(abs(y - k) < 100 * abs(w) * h + 1e-6 for k in KINKS.get(comp_id, ())):
            continue
        s, rot = ToyState(w, b, 0.05), Rotation(theta)
        fd = (duality_map(x1 + h, comp, rot, s, x2) - duality_map(x1 - h, comp, rot, s, x2)) / (2 * h)
        j = toy_jacobian(x1, comp, rot, s, x2)
        scale = abs(duality_map(x1, comp, rot, s, x2)) / max(abs(x1), 1.0) + 1e-12
        assert abs(j - fd) <= 1e-4 * max(abs(fd), 1e-3 * scale), (w, b, x1, theta, x2, j, fd)
        checked += 1


# --- change of variables ----------------------------------------------------


def test_linear_map_gives_gaussian():
    # w = 0 makes dH/dy constant, so q' is affine in x1.
    comp = Composition("identity_mse", ActivationKind.IDENTITY, LossKind("mean_squared"))
    s, rot, spec = ToyState(0.0, 0.3, 0.05), Rotation(0.4), ClassSpec(0, 0.2, 0.25)
    c = -0.05 * 2 * 0.3 * math.cos(0.4)
    d = -0.05 * 2 * 0.3 * math.sin(0.4)
    mean, sd = c * spec.mean + d, abs(c) * spec.std
    q = mean + sd * np.linspace(-4, 4, 41)
    expected = np.exp(-0.5 * ((q - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(predicted_density(q, comp, rot, s, spec), expected, rtol=1e-8)


def _sig_rotation(spec):
    return Rotation(THETA_ORACLE[spec.label][0])


def _branch_mass(br, rot, spec):
    # Integrate p(q') over the branch image in ln|q'|; adaptive quadrature
    # copes with the integrable 1/sqrt peak where the Jacobian vanishes.
    qlo, qhi = br.image(SIG_MSE, rot, SIG_STATE, spec.label)
    total = 0.0
    for sign, lo, hi in ((-1.0, max(-qhi, 0.0), -qlo), (1.0, max(qlo, 0.0), qhi)):
        if hi <= 0:
            continue
        lo = max(lo, hi * 1e-60)

        def f(u):
            q = np.array([sign * math.exp(u)])
            return float(predicted_density(q, SIG_MSE, rot, SIG_STATE, spec, br)[0]) * math.exp(u)

        total += quad(f, math.log(lo), math.log(hi), limit=500, epsabs=1e-10)[0]
    return total


@pytest.mark.parametrize("spec", [MINUS, PLUS], ids=["minus", "plus"])
def test_predicted_density_mass_per_branch(spec):
    rot = _sig_rotation(spec)
    branches = monotone_branches(SIG_MSE, rot, SIG_STATE, spec)
    masses = [_branch_mass(br, rot, spec) for br in branches]
    # Branch edges sit on a 2e-5 grid in x1, so each mass is known to about
    # pdf_max * 2e-5 = 3e-5.
    for m, br in zip(masses, branches):
        assert m == pytest.approx(br.mass, abs=5e-5)
    assert 0.99 <= sum(masses) <= 1.01
    # the principal branch alone misses the mass beyond the jump extremum
    assert max(masses) == pytest.approx(principal_branch(SIG_MSE, rot, SIG_STATE, spec).mass, abs=5e-5)


def _dominant_sign(br, rot, spec):
    qlo, qhi = br.image(SIG_MSE, rot, SIG_STATE, spec.label)
    return 1.0 if abs(qhi) >= abs(qlo) else -1.0


def test_sigmoid_mse_density_slope_minus_one():
    rot = _sig_rotation(MINUS)
    lo, hi = jacobian_dominated_window(SIG_MSE, rot, SIG_STATE, MINUS)
    assert math.log10(hi / lo) > 3
    a = np.logspace(math.log10(lo), math.log10(hi), 200)
    br = principal_branch(SIG_MSE, rot, SIG_STATE, MINUS)
    p = predicted_density(_dominant_sign(br, rot, MINUS) * a, SIG_MSE, rot, SIG_STATE, MINUS, br)
    assert np.all(p > 0)
    assert loglog_slope(a, p) == pytest.approx(-1.0, abs=0.05)


def test_density_zero_outside_branch_image():
    rot = _sig_rotation(PLUS)
    br = principal_branch(SIG_MSE, rot, SIG_STATE, PLUS)
    qlo, qhi = br.image(SIG_MSE, rot, SIG_STATE, 1)
    far = np.array([qlo - 10 * abs(qlo) - 1, qhi + 10 * abs(qhi) + 1])
    assert not predicted_density(far, SIG_MSE, rot, SIG_STATE, PLUS, br).any()


def test_non_monotone_branch_is_rejected():
    rot = _sig_rotation(MINUS)
    branches = monotone_branches(SIG_MSE, rot, SIG_STATE, MINUS)
    assert len(branches) >= 2
    whole = Branch(-2.0, 2.0, True, 1.0)
    with pytest.raises(MultiBranchError):
        predicted_density(np.array([-1e-3]), SIG_MSE, rot, SIG_STATE, MINUS, whole)


def test_ks_small_at_fixed_state():
    rot = _sig_rotation(MINUS)
    jumps = collect_jumps(SIG_STATE, SIG_MSE, MINUS, 2 * 10**5, np.random.default_rng(8))
    q, _ = rotate(jumps.dw, jumps.db, rot)
    window = jacobian_dominated_window(SIG_MSE, rot, SIG_STATE, MINUS)
    d, n = ks_distance(q, jumps.x1, SIG_MSE, rot, SIG_STATE, MINUS, window)
    assert n > 10**4
    assert d < 0.05


# --- C and D ----------------------------------------------------------------


def test_cd_constants():
    s = ToyState(2.0, 0.6, 0.05)
    cd = cd_constants(s, Rotation(0.0))
    assert cd.C == pytest.approx(0.05 * 0.6 / 2.0) and cd.D == pytest.approx(0.05 / 2.0)
    assert cd_constants(ToyState(2.0, 0.0, 0.05), Rotation(0.0)).C == 0.0
    th = 0.9
    cd = cd_constants(s, Rotation(th))
    assert cd.C == pytest.approx(0.05 * math.cos(th) / 2.0 * (0.6 - 2.0 * math.tan(th)))
    with pytest.raises(SingularityError):
        cd_constants(ToyState(0.0, 1.0, 0.05), Rotation(0.3))


def test_cd_sign_condition_is_the_jump_prefactor():
    # D y - C = gamma (x1 cos + sin), so its sign follows x1 cos + sin.
    s, rot = ToyState(1.5, -0.4, 0.05), Rotation(1.0)
    x1 = np.linspace(-3, 3, 601)
    y = s.w * x1 + s.b
    cd = cd_constants(s, rot, y)
    np.testing.assert_allclose(cd.D * y - cd.C, 0.05 * (x1 * math.cos(1.0) + math.sin(1.0)), atol=1e-15)
    assert cd.violated_fraction == pytest.approx(np.mean(x1 * math.cos(1.0) + math.sin(1.0) <= 0))
