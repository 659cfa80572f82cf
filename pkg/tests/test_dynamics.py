import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from sdwave.dynamics import (
    BlowUpError,
    SolverConfig,
    State,
    apply_U,
    duhamel_C,
    integrate_split,
    mode_propagator,
    phi_matrix_entries,
    propagator_entries,
    random_state,
    simulate,
    step,
)
from sdwave.model import ModelSpec, default_model, make_damping, make_forcing, make_source
from sdwave.spectral import BasisSpec


def generator(lam):
    return np.array([[0.0, 1.0], [-lam, -lam]])


def linear_model(basis):
    return ModelSpec(basis, make_source("zero"), make_damping("zero"))


def phi_oracle(j, lam, h):
    """phi_j(hA) as the corner block of an augmented matrix exponential."""
    n = 2 * (j + 1)
    big = np.zeros((n, n))
    big[:2, :2] = h * generator(lam)
    for i in range(j):
        big[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = np.eye(2)
    return scipy.linalg.expm(big)[:2, 2 * j:2 * j + 2]


LAMS = [1.0, 2.0, 3.0, 3.9999999, 4.0, 4.0000001, 5.0, 13.0, 100.0, 4096.0]
TIMES = [1e-4, 1e-3, 0.01, 0.1, 1.0]


@pytest.mark.parametrize("lam", [0.5, 1.0, 4.0, 9.0])
def test_propagator_identity_at_zero(lam):
    assert np.array_equal(mode_propagator(lam, 0.0).matrix, np.eye(2))


@pytest.mark.parametrize("lam", LAMS)
@pytest.mark.parametrize("t", TIMES)
def test_propagator_matches_expm(lam, t):
    got = mode_propagator(lam, t).matrix
    ref = scipy.linalg.expm(t * generator(lam))
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-14 * np.abs(ref).max())


@given(st.floats(0.01, 500.0), st.floats(0.0, 5.0))
def test_propagator_determinant_is_liouville(lam, t):
    p = mode_propagator(lam, t)
    scale = abs(p.ww * p.vv) + abs(p.wv * p.vw)
    assert abs(p.determinant - math.exp(-lam * t)) <= 1e-13 * scale + 1e-300


def test_double_root_against_taylor():
    G = generator(4.0)
    taylor = sum(np.linalg.matrix_power(G, n) / math.factorial(n) for n in range(60))
    closed = math.exp(-2.0) * (np.eye(2) + (G + 2 * np.eye(2)))
    got = mode_propagator(4.0, 1.0).matrix
    assert np.allclose(got, closed, atol=1e-12)
    assert np.allclose(got, taylor, atol=1e-12)


def test_branch_continuity_around_four():
    mats = [mode_propagator(lam, 0.7).matrix for lam in (4 - 1e-5, 4 - 1e-7, 4.0, 4 + 1e-7, 4 + 1e-5)]
    for a, b in zip(mats, mats[1:]):
        assert np.abs(a - b).max() < 1e-5


def test_oscillatory_branch_frequency():
    # lam = 1: roots (-1 +- i sqrt 3)/2; half a period after t=0 the position flips sign
    t_half = 2 * math.pi / math.sqrt(3)
    p = mode_propagator(1.0, t_half)
    assert p.ww == pytest.approx(-math.exp(-math.pi / math.sqrt(3)), rel=1e-12)
    assert p.vw == pytest.approx(0.0, abs=1e-14)
    full = mode_propagator(1.0, 2 * t_half)
    assert full.ww == pytest.approx(math.exp(-2 * math.pi / math.sqrt(3)), rel=1e-12)


def test_propagator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        mode_propagator(0.0, 1.0)
    with pytest.raises(ValueError):
        mode_propagator(1.0, -1.0)


@pytest.mark.parametrize("j", [1, 2])
@pytest.mark.parametrize("lam", LAMS)
@pytest.mark.parametrize("h", [1e-4, 1e-2, 0.5])
def test_phi_functions_match_expm(j, lam, h):
    ww, wv, vw, vv = phi_matrix_entries(j, np.array([lam]), h)
    got = np.array([[ww[0], wv[0]], [vw[0], vv[0]]])
    ref = phi_oracle(j, lam, h)
    assert np.allclose(got, ref, rtol=1e-11, atol=1e-13 * np.abs(ref).max())


def test_apply_U_identity_and_semigroup(rng):
    b = BasisSpec(2, 6)
    for _ in range(20):
        s = random_state(b, rng, 1.0)
        assert np.array_equal(apply_U(s, 0.0).w.coeffs, s.w.coeffs)
        a = apply_U(apply_U(s, 0.7), 0.3)
        c = apply_U(s, 1.0)
        assert (a - c).h_norm() < 1e-13


@pytest.mark.parametrize("d", [1, 2])
def test_linear_decay_prefactor_bounded(d):
    # sup_t ||U(t)||_H e^{omega t} <= 3 for d <= 2
    b = BasisSpec(d, 6)
    lam = b.eigenvalues
    omega = float(np.min(np.where(lam > 4, 0.5 * (lam - np.sqrt(np.maximum(lam**2 - 4 * lam, 0))), 0.5 * lam)))
    worst = 0.0
    for t in np.linspace(0, 30, 3001):
        ww, wv, vw, vv = (a.ravel() for a in propagator_entries(b, t))
        r = np.sqrt(lam.ravel())
        for m in range(r.size):
            M = np.array([[ww[m], wv[m] * r[m]], [vw[m] / r[m], vv[m]]])
            worst = max(worst, np.linalg.norm(M, 2) * math.exp(omega * t))
    assert 1.0 <= worst <= 3.0


def test_linear_prefactor_in_three_dimensions_exceeds_three():
    # lam = 3: sup_t ||U(t)|| e^{3t/2} = 2 + sqrt(3) in either weighted norm
    lam, r = 3.0, math.sqrt(3.0)
    worst = 0.0
    for t in np.linspace(0, 10, 20001):
        p = mode_propagator(lam, t)
        M = np.array([[p.ww, p.wv * r], [p.vw / r, p.vv]])
        worst = max(worst, np.linalg.norm(M, 2) * math.exp(1.5 * t))
    assert worst == pytest.approx(2 + math.sqrt(3), rel=1e-4)


def test_step_is_linear_propagation_without_forcing(rng):
    b = BasisSpec(1, 8)
    m = linear_model(b)
    for k in range(1, 9):
        s = State(b.mode(k, 1.0), b.mode(k, -0.5))
        assert (step(m, s, 1e-3) - apply_U(s, 1e-3)).h_norm() < 1e-14
    s = random_state(b, rng)
    assert (step(m, s, 0.01) - apply_U(s, 0.01)).h_norm() < 1e-14


def test_zero_state_is_fixed():
    m = ModelSpec(BasisSpec(2, 4), make_source("cubic", a=1.0), make_damping("quartic"))
    s = State.zeros(m.basis)
    assert step(m, s, 0.01).h_norm() == 0.0
    rec = simulate(m, s, SolverConfig(0.01, 1.0))
    assert np.all(rec.w == 0) and np.all(rec.v == 0)


def test_nonlinear_step_second_order():
    b = BasisSpec(1, 4)
    m = ModelSpec(b, make_source("cubic"), make_damping("quartic"))
    s0 = State(b.sine_product(1, 1.5), b.zeros())
    T = 1.0
    ref = simulate(m, s0, SolverConfig(0.1 / 64, T, stride=640)).final
    errs = [(simulate(m, s0, SolverConfig(dt, T, stride=int(round(T / dt)))).final - ref).h_norm()
            for dt in (0.1, 0.05, 0.025)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_etd1_first_order():
    b = BasisSpec(1, 4)
    m = ModelSpec(b, make_source("cubic"), make_damping("quartic"))
    s0 = State(b.sine_product(1, 1.5), b.zeros())
    ref = simulate(m, s0, SolverConfig(1e-4, 1.0, stride=10000)).final
    errs = [(simulate(m, s0, SolverConfig(dt, 1.0, "etd1", int(round(1 / dt)))).final - ref).h_norm()
            for dt in (0.02, 0.01)]
    assert 1.7 < errs[0] / errs[1] < 2.3


def test_restart_consistency_bitwise(rng):
    m = default_model()
    s0 = random_state(m.basis, rng, 2.0)
    whole = simulate(m, s0, SolverConfig(1e-3, 0.4, stride=400)).final
    half = simulate(m, s0, SolverConfig(1e-3, 0.2, stride=200)).final
    chained = simulate(m, half, SolverConfig(1e-3, 0.2, stride=200)).final
    assert np.array_equal(whole.w.coeffs, chained.w.coeffs)
    assert np.array_equal(whole.v.coeffs, chained.v.coeffs)


def test_record_invariants(rng):
    m = default_model()
    rec = simulate(m, random_state(m.basis, rng, 3.0), SolverConfig(1e-3, 1.0, stride=50))
    assert np.all(np.diff(rec.times) > 0)
    assert np.all(np.diff(rec.diss_grad) >= 0)
    assert np.all(np.diff(rec.diss_sigma) >= 0)
    assert len(rec) == 21 and rec.times[-1] == pytest.approx(1.0)


def test_early_stop():
    m = default_model()
    rec = simulate(m, State.zeros(m.basis), SolverConfig(1e-2, 10.0), stop=lambda t, w, v: t >= 0.5)
    assert rec.times[-1] == pytest.approx(0.5)


def test_blow_up_is_reported():
    b = BasisSpec(1, 4)
    m = ModelSpec(b, make_source("quintic"), make_damping("zero"))
    s0 = State(b.sine_product(1, 50.0), b.zeros())
    with pytest.raises(BlowUpError) as err:
        simulate(m, s0, SolverConfig(0.1, 10.0))
    assert err.value.time > 0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=2.0, horizon=1.0)
    with pytest.raises(ValueError):
        SolverConfig(scheme="rk4")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.3, horizon=1.0).steps


def test_duhamel_trivial_cases(rng):
    b = BasisSpec(1, 6)
    s0 = random_state(b, rng)
    assert duhamel_C(linear_model(b), s0, 1.0, 0.01).h_norm() == 0.0
    assert duhamel_C(default_model(b), s0, 0.0, 0.01).h_norm() == 0.0


def test_duhamel_split_second_order(rng):
    m = default_model()
    s0 = random_state(m.basis, rng, 2.0)
    lin = apply_U(s0, 1.0)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        rec = simulate(m, s0, SolverConfig(dt, 1.0), keep_forcing=True)
        errs.append((rec.final - lin - duhamel_C(m, s0, 1.0, dt, rec)).h_norm())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_duhamel_needs_forcing_samples(rng):
    m = default_model()
    rec = simulate(m, State.zeros(m.basis), SolverConfig(0.01, 1.0))
    with pytest.raises(ValueError):
        duhamel_C(m, State.zeros(m.basis), 1.0, 0.01, rec)


def test_split_zero_background():
    b = BasisSpec(1, 6)
    m = ModelSpec(b, make_source("cubic"), make_damping("quartic"))
    rec = integrate_split(m, 2, State.zeros(b), SolverConfig(0.01, 1.0))
    assert np.all(rec.v.w == 0) and np.all(rec.u.w == 0)


def test_split_reconstruction_second_order(rng):
    m = default_model()
    s0 = random_state(m.basis, rng, 3.0)
    errs = [integrate_split(m, 1, s0, SolverConfig(dt, 1.0, stride=int(round(0.1 / dt))))
            .reconstruction_errors().max() for dt in (4e-3, 2e-3, 1e-3)]
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


@pytest.mark.parametrize("norm", ["h", "h1"])
def test_random_state_radius(rng, norm):
    s = random_state(BasisSpec(3, 4), rng, 2.5, norm)
    assert (s.h_norm() if norm == "h" else s.h1_norm()) == pytest.approx(2.5)


def test_state_basis_mismatch():
    with pytest.raises(ValueError):
        State(BasisSpec(1, 2).zeros(), BasisSpec(1, 3).zeros())


def test_forcing_drives_equilibrium_shift():
    # f = sigma = 0, g = single mode: the state relaxes to (-Lap)^{-1} g
    b = BasisSpec(1, 3)
    g = make_forcing(b, coeffs=[0.0, 4.0, 0.0])
    m = ModelSpec(b, make_source("zero"), make_damping("zero"), g)
    fin = simulate(m, State.zeros(b), SolverConfig(0.05, 40.0, stride=800)).final
    assert np.allclose(fin.w.coeffs, [0.0, 1.0, 0.0], atol=1e-10)
