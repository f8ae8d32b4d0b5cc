import numpy as np
import pytest

from postmarkov import environment as env
from postmarkov.errors import StateInvariantError


def test_rate_matrix_forces_zero_diagonal_and_rejects_negatives():
    rm = env.RateMatrix(np.array([[3.0, 1.0], [2.0, 5.0]]))
    assert rm.matrix[0, 0] == 0.0 and rm.matrix[1, 1] == 0.0
    with pytest.raises(ValueError):
        env.RateMatrix(np.array([[0.0, -1.0], [2.0, 0.0]]))


def test_two_state_generator():
    w = env.pauli_generator(env.two_state_rates(0.3, 0.7))
    assert np.array_equal(w, np.array([[-0.3, 0.7], [0.3, -0.7]]))


def test_zero_rates_zero_generator():
    w = env.pauli_generator(env.RateMatrix(np.zeros((3, 3))))
    assert np.array_equal(w, np.zeros((3, 3)))


def test_generator_columns_sum_to_zero():
    rng = np.random.default_rng(0)
    rates = env.RateMatrix(rng.uniform(0, 2, size=(4, 4)))
    w = env.pauli_generator(rates)
    # zero up to summation-order rounding of the column totals
    assert np.max(np.abs(w.sum(axis=0))) < 1e-14


def test_symmetric_rates_equilibrate():
    rates = env.two_state_rates(0.4, 0.4)
    p = env.pauli_evolve(rates, [1.0, 0.0], 200.0)
    assert np.max(np.abs(p - 0.5)) < 1e-12


def test_survival_closed_form_value():
    # phi = varphi = 0.01 at t = 50: 1/2 + exp(-1)/2
    p0 = env.survival_probability(env.two_state_rates(0.01, 0.01), 50.0)
    assert abs(p0 - (0.5 + 0.5 * np.exp(-1.0))) < 1e-12


def test_evolve_zero_time_is_identity():
    rates = env.two_state_rates(0.2, 0.9)
    p = env.pauli_evolve(rates, [0.3, 0.7], 0.0)
    assert np.max(np.abs(p - [0.3, 0.7])) < 1e-15


def test_evolve_conserves_probability():
    rng = np.random.default_rng(1)
    for n in range(2, 7):
        rates = env.RateMatrix(rng.uniform(0, 1.5, size=(n, n)))
        p0 = rng.uniform(0, 1, size=n)
        p0 /= p0.sum()
        p = env.pauli_evolve(rates, p0, rng.uniform(0, 20))
        assert abs(p.sum() - 1.0) < 1e-12


def test_pure_decay_survival_is_exponential():
    rates = env.two_state_rates(0.37, 0.0)
    for t in (0.5, 3.0, 10.0):
        assert abs(env.survival_probability(rates, t) - np.exp(-0.37 * t)) < 1e-10


def test_kernel_initial_value_is_escape_rate():
    table = env.memory_kernel(env.two_state_rates(0.42, 0.1), 0.01, 5.0)
    assert abs(table.values[0] - 0.42) < 1e-14


def test_kernel_closed_form_value():
    table = env.memory_kernel(env.two_state_rates(0.01, 0.01), 0.5, 60.0)
    k50 = table.values[int(round(50.0 / 0.5))]
    assert abs(k50 - 0.01 * np.exp(-1.0)) < 1e-12


def test_kernel_matches_finite_difference_of_survival():
    # birth-death chain 0 <-> 1 <-> 2
    m = np.zeros((3, 3))
    m[1, 0], m[0, 1], m[2, 1], m[1, 2] = 0.6, 0.3, 0.5, 0.2
    rates = env.RateMatrix(m)

    def fd_error(h):
        table = env.memory_kernel(rates, h, 4.0)
        t = table.grid[1:-1]
        fd = np.array(
            [
                (env.survival_probability(rates, tk - h)
                 - env.survival_probability(rates, tk + h)) / (2 * h)
                for tk in t
            ]
        )
        return np.max(np.abs(table.values[1:-1] - fd))

    err_h, err_half = fd_error(0.1), fd_error(0.05)
    assert err_h / err_half > 3.0  # second-order differences


def test_kernel_nonnegative_and_monotone_for_two_state():
    table = env.memory_kernel(env.two_state_rates(0.7, 0.2), 0.02, 30.0)
    assert np.all(table.values >= 0.0)
    assert np.all(np.diff(table.values) <= 1e-15)


def test_kernel_integral_bounded_by_one():
    table = env.memory_kernel(env.two_state_rates(0.8, 0.5), 0.01, 100.0)
    assert table.integral() <= 1.0 + 1e-9


def test_delta_kernel_regular_part_is_negated_kernel():
    rates = env.two_state_rates(0.25, 0.4)
    k1 = env.memory_kernel(rates, 0.02, 40.0)
    k2 = env.delta_kernel(rates, 0.02, 40.0)
    assert k2.delta_weight == 1.0
    n = min(len(k1.values), len(k2.values))
    assert np.max(np.abs(k2.values[:n] + k1.values[:n])) < 1e-12
    assert abs(k2.values[0] + 0.25) < 1e-14


def test_delta_kernel_pure_delta_when_bath_frozen():
    k2 = env.delta_kernel(env.two_state_rates(0.0, 0.9), 0.01, 10.0)
    assert k2.delta_weight == 1.0
    assert np.max(np.abs(k2.values)) == 0.0


def test_kernel_quadrature_identity():
    # integral of the case-2 kernel equals 1 minus the case-1 integral
    phi, varphi = 0.4, 0.6
    t_max = 500.0 / (phi + varphi)
    rates = env.two_state_rates(phi, varphi)
    k1 = env.memory_kernel(rates, 0.01, t_max)
    k2 = env.delta_kernel(rates, 0.01, t_max)
    assert abs(k2.integral() - (1.0 - k1.integral())) < 1e-6


def test_two_state_closed_form_matches_general_path():
    for phi, varphi in [(0.3, 0.5), (0.01, 0.01), (0.9, 0.0)]:
        general = env.memory_kernel(env.two_state_rates(phi, varphi), 0.05, 80.0)
        closed = env.two_state_kernel(phi, varphi, 0.05, 80.0)
        n = min(len(general.values), len(closed.values))
        assert np.max(np.abs(general.values[:n] - closed.values[:n])) < 1e-12


def test_kernel_rejects_non_monotone_occupation():
    # an asymmetric 3-cycle re-populates state 0 non-monotonically
    m = np.zeros((3, 3))
    m[1, 0], m[2, 1], m[0, 2] = 5.0, 5.0, 5.0
    with pytest.raises(StateInvariantError):
        env.memory_kernel(env.RateMatrix(m), 0.01, 10.0)
