import numpy as np
import pytest
import scipy.integrate

from postmarkov import embedding as emb
from postmarkov import fluorescence as fl
from postmarkov import operators as ops
from postmarkov.embedding import Case


def test_preset_parameters():
    params = fl.preset("fig2", case=1)
    assert params.omega == 0.15
    assert params.gamma == 1.0
    assert params.phi == 0.01 and params.varphi == 0.01
    assert params.case is Case.ONE
    assert ops.max_abs_diff(fl.PRESET_INITIAL_STATE, fl.GROUND) == 0.0
    assert fl.preset("fig4", case=2).case is Case.TWO
    with pytest.raises(KeyError):
        fl.preset("fig9")


def test_parameter_validation():
    with pytest.raises(ValueError):
        fl.FluorescenceParams(omega=0.1, gamma=0.0, phi=0.1, varphi=0.1, case=Case.ONE)
    with pytest.raises(ValueError):
        fl.FluorescenceParams(omega=-0.1, gamma=1.0, phi=0.1, varphi=0.1, case=Case.ONE)


def test_model_shape():
    model = fl.build_model(fl.preset("fig3", case=1))
    assert model.d_s == 2 and model.d_a == 2
    assert model.rates.matrix[1, 0] == 0.01  # 0 -> 1
    assert model.rates.matrix[0, 1] == 0.01  # 1 -> 0
    assert len(model.channels) == 1
    assert model.channels[0].rate == 1.0


def test_frozen_bath_case2_block_is_plain_fluorescence():
    params = fl.FluorescenceParams(
        omega=0.4, gamma=1.0, phi=0.0, varphi=0.0, case=Case.TWO
    )
    model = fl.build_model(params)
    gen = emb.total_generator(model)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho_s = a @ a.conj().T
    rho_s /= rho_s.trace()
    pi0 = np.diag([1.0, 0.0]).astype(complex)
    block = emb.ancilla_block(
        ops.unvec(gen @ ops.vec(np.kron(rho_s, pi0))), 2, 2, 0
    )
    markov = fl.drive_generator(0.4) + fl.decay_generator(1.0)
    assert ops.max_abs_diff(block, ops.unvec(markov @ ops.vec(rho_s))) < 1e-13


def test_model_generator_preserves_trace_and_positivity():
    model = fl.build_model(fl.preset("fig2", case=2))
    gen = emb.total_generator(model)
    assert np.max(np.abs(ops.trace_dual(4) @ gen)) < 1e-12
    grid = 0.05 * np.arange(401)
    emb.evolve_bipartite(model, fl.GROUND, grid, method="expm")  # validates


def test_waiting_density_zero_at_origin():
    assert fl.markovian_waiting_density(0.3, 1.0, 0.0) == 0.0


def test_waiting_density_critical_point_matches_limit():
    omega, gamma = 0.5, 1.0  # disc = 0 exactly
    t = np.linspace(0.0, 30.0, 500)
    direct = fl.markovian_waiting_density(omega, gamma, t)
    expected = 4 * gamma * omega**2 * np.exp(-0.5 * gamma * t) * (0.25 * t) ** 2
    assert np.max(np.abs(direct - expected)) < 1e-14
    # and the underdamped branch nearby agrees to first order
    nearby = fl.markovian_waiting_density(omega + 1e-7, gamma, t)
    assert np.max(np.abs(nearby - expected)) < 1e-5


def test_waiting_density_normalized():
    for omega in (0.15, 0.5, 1.2):
        total, _ = scipy.integrate.quad(
            lambda t: fl.markovian_waiting_density(omega, 1.0, t), 0, np.inf,
            limit=300,
        )
        assert abs(total - 1.0) < 1e-6


def test_mean_emission_rate_values():
    assert fl.mean_emission_rate(0.0, 1.0) == 0.0
    ratio = fl.mean_emission_rate(0.15, 1.0) / 0.01
    assert abs(ratio - 2.1531) < 1e-4


def test_mean_emission_rate_is_inverse_first_moment():
    omega, gamma = 0.35, 1.0
    mean, _ = scipy.integrate.quad(
        lambda t: t * fl.markovian_waiting_density(omega, gamma, t), 0, np.inf,
        limit=300,
    )
    assert abs(fl.mean_emission_rate(omega, gamma) - 1.0 / mean) < 1e-6
