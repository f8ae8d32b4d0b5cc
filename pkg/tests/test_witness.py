import math

import numpy as np

from conftest import random_density
from postmarkov import environment as env
from postmarkov import fluorescence as fl
from postmarkov import master, witness
from postmarkov import operators as ops
from postmarkov.embedding import Case


def test_self_entropy_is_zero():
    rng = np.random.default_rng(0)
    rho = random_density(rng, 3)
    assert witness.relative_entropy(rho, rho) < 1e-12


def test_pure_state_against_maximally_mixed_is_one_bit():
    value = witness.relative_entropy(fl.EXCITED, np.eye(2) / 2)
    assert abs(value - 1.0) < 1e-12


def test_nonnegative_and_zero_only_when_equal():
    rng = np.random.default_rng(1)
    for _ in range(25):
        rho, sigma = random_density(rng, 2), random_density(rng, 2)
        value = witness.relative_entropy(rho, sigma)
        assert value >= 0.0
        if value < 1e-10:
            assert ops.max_abs_diff(rho, sigma) < 1e-4


def test_support_violation_returns_infinity():
    rng = np.random.default_rng(2)
    rho = random_density(rng, 2)  # full rank almost surely
    assert witness.relative_entropy(rho, fl.GROUND) == math.inf
    # support(rho) inside support(sigma) stays finite
    assert math.isfinite(witness.relative_entropy(fl.GROUND, rho))


def closed_form_pure_vs_qubit(psi, sigma):
    """E(|psi><psi| || sigma) via the quadratic-formula eigenpairs of sigma."""
    a, b, c = sigma[0, 0].real, sigma[1, 1].real, sigma[0, 1]
    half_tr = 0.5 * (a + b)
    radius = np.sqrt(0.25 * (a - b) ** 2 + abs(c) ** 2)
    lam = (half_tr + radius, half_tr - radius)
    vecs = []
    for mu in lam:
        v = np.array([c, mu - a]) if abs(c) > 1e-14 else (
            np.array([1.0, 0.0]) if abs(mu - a) < abs(mu - b) else np.array([0.0, 1.0])
        )
        vecs.append(v / np.linalg.norm(v))
    return -sum(
        abs(np.vdot(v, psi)) ** 2 * np.log2(mu) for mu, v in zip(lam, vecs)
    )


def test_matches_two_level_closed_form_at_initial_time():
    model = fl.build_model(fl.preset("fig4", case=1))
    sigma = master.stationary_state(model)
    psi = np.array([0.0, 1.0])  # ground state, the preset initial condition
    expected = closed_form_pure_vs_qubit(psi, sigma)
    assert abs(witness.relative_entropy(fl.GROUND, sigma) - expected) < 1e-10


def test_detect_backflow_empty_for_decreasing_series():
    t = np.linspace(0, 10, 200)
    series = witness.EntropySeries(t=t, values=np.exp(-t))
    assert witness.detect_backflow(series, epsilon=1e-6) == []


def test_detect_backflow_finds_single_revival():
    t = np.linspace(0, 10, 1001)
    values = np.exp(-t) + 0.05 * np.exp(-((t - 5.0) ** 2))
    series = witness.EntropySeries(t=t, values=values)
    pairs = witness.detect_backflow(series, epsilon=1e-3)
    assert len(pairs) == 1
    t1, t2 = pairs[0]
    assert t1 < 5.0 < t2 + 1.0
    amps = witness.revival_amplitudes(series, pairs)
    assert amps[0] > 1e-3


def test_detect_backflow_finds_multiple_revivals():
    t = np.linspace(0, 20, 2001)
    values = np.exp(-0.5 * t) * (1.0 + 0.3 * np.sin(2.0 * t)) + 0.01
    series = witness.EntropySeries(t=t, values=values)
    pairs = witness.detect_backflow(series, epsilon=1e-3)
    assert len(pairs) >= 3
    for t1, t2 in pairs:
        assert t2 > t1


def test_detection_invariant_under_time_rescaling():
    t = np.linspace(0, 10, 1001)
    values = np.exp(-t) + 0.05 * np.exp(-((t - 5.0) ** 2))
    base = witness.detect_backflow(witness.EntropySeries(t, values), epsilon=1e-3)
    scaled = witness.detect_backflow(
        witness.EntropySeries(3.0 * t, values), epsilon=1e-3
    )
    assert len(base) == len(scaled)
    for (a1, a2), (b1, b2) in zip(base, scaled):
        assert abs(b1 - 3.0 * a1) < 1e-12
        assert abs(b2 - 3.0 * a2) < 1e-12


def run_entropy_series(params, dt=0.02, t_max=300.0):
    model = fl.build_model(params)
    grid = dt * np.arange(int(round(t_max / dt)) + 1)
    kernel = env.memory_kernel(model.rates, dt, t_max)
    states = master.integrate_case(
        int(params.case), model.system_generator, model.system_dissipator(),
        kernel, fl.GROUND, grid,
    )
    sigma = master.stationary_state(model)
    return witness.entropy_series(grid, states, sigma)


def test_witness_relaxes_to_zero_for_matched_stationary_states():
    # swapped-rate pairs share the stationary state; both witnesses die out
    first = fl.FluorescenceParams(
        omega=0.3, gamma=1.0, phi=0.15, varphi=0.3, case=Case.ONE
    )
    second = fl.FluorescenceParams(
        omega=0.3, gamma=1.0, phi=0.3, varphi=0.15, case=Case.TWO
    )
    series1 = run_entropy_series(first)
    series2 = run_entropy_series(second)
    assert series1.values[-1] < 1e-6
    assert series2.values[-1] < 1e-6
    assert np.all(series1.values > -1e-10)


def test_no_drive_means_no_backflow():
    for case in (Case.ONE, Case.TWO):
        params = fl.FluorescenceParams(
            omega=0.0, gamma=1.0, phi=0.01, varphi=0.01, case=case
        )
        series = run_entropy_series(params, dt=0.02, t_max=100.0)
        assert witness.detect_backflow(series, epsilon=1e-6) == []
