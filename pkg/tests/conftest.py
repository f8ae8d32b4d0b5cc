"""Shared fixtures: expensive reference runs computed once per session."""

import numpy as np
import pytest

from postmarkov import embedding as emb
from postmarkov import environment as env
from postmarkov import fluorescence as fl
from postmarkov import jumps, master
from postmarkov import operators as ops

FIG_DT = 1e-2
FIG_TMAX = 100.0


def random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / rho.trace()


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


def fig_grid(dt=FIG_DT, t_max=FIG_TMAX):
    return dt * np.arange(int(round(t_max / dt)) + 1)


class FigRun:
    """Master and traced-out bipartite solutions of one preset case."""

    def __init__(self, case):
        self.case = case
        self.model = fl.build_model(fl.preset("fig2", case=case))
        self.grid = fig_grid()
        self.kernel = env.memory_kernel(self.model.rates, FIG_DT, FIG_TMAX)
        self.master_states = master.integrate_case(
            case,
            self.model.system_generator,
            self.model.system_dissipator(),
            self.kernel,
            fl.GROUND,
            self.grid,
        )
        snaps = emb.evolve_bipartite(self.model, fl.GROUND, self.grid)
        self.reduced = ops.partial_trace(snaps, (2, 2), keep=0)


@pytest.fixture(scope="session")
def fig_runs():
    return {case: FigRun(case) for case in (1, 2)}


@pytest.fixture(scope="session")
def fig_process_case1():
    model = fl.build_model(fl.preset("fig2", case=1))
    return jumps.prepare_jump_process(model, fl.GROUND, FIG_DT, FIG_TMAX)


@pytest.fixture(scope="session")
def fig_process_case2():
    model = fl.build_model(fl.preset("fig2", case=2))
    return jumps.prepare_jump_process(model, fl.GROUND, FIG_DT, FIG_TMAX)


@pytest.fixture(scope="session")
def markovian_process():
    """Case 2 with a frozen bath: the static-emitter reference point."""
    params = fl.FluorescenceParams(
        omega=0.15, gamma=1.0, phi=0.0, varphi=0.3, case=emb.Case.TWO
    )
    model = fl.build_model(params)
    return jumps.prepare_jump_process(model, fl.GROUND, FIG_DT, 50.0)
