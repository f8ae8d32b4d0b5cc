"""Driven two-level emitter with bath-modulated decay.

The worked scenario behind the shipped presets: a resonantly driven
two-level transition (Rabi frequency ``omega``) whose radiative decay
(rate ``gamma``) is switched on and off by a two-state bath hopping with
rates ``phi`` (state 0 -> 1) and ``varphi`` (state 1 -> 0).  Everything is
written in the rotating frame of the drive, so the bare transition
frequency never enters.

Basis ordering: index 0 = excited |+>, index 1 = ground |->.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import operators as ops
from .embedding import BipartiteModel, Case, Channel
from .environment import two_state_rates

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
LOWERING = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |-><+|

EXCITED = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
GROUND = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


@dataclass(frozen=True)
class FluorescenceParams:
    """Scenario parameters, all rates in units of the decay rate."""

    omega: float
    gamma: float
    phi: float
    varphi: float
    case: Case

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        for name in ("omega", "phi", "varphi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def drive_generator(omega):
    """Coherent part -i (omega/2) [sigma_x, .] in the rotating frame."""
    return ops.hamiltonian_superop(0.5 * omega * SIGMA_X)


def decay_generator(gamma):
    """Radiative decay channel at rate gamma."""
    return ops.dissipator(LOWERING, gamma)


def build_model(params):
    """Bipartite model of the scenario: qubit system, two-state bath."""
    return BipartiteModel(
        d_s=2,
        rates=two_state_rates(params.phi, params.varphi),
        channels=(Channel(LOWERING, params.gamma),),
        case=params.case,
        system_generator=drive_generator(params.omega),
    )


def markovian_waiting_density(omega, gamma, t):
    """Static-bath waiting-time density of the driven emitter.

    4 gamma omega^2 exp(-gamma t / 2) [sinh(s t / 4) / s]^2 with
    s^2 = gamma^2 - 4 omega^2, continued through s = 0 (value t/4) and
    imaginary s (sin instead of sinh).
    """
    t = np.asarray(t, dtype=float)
    disc = gamma * gamma - 4.0 * omega * omega
    if disc == 0.0:
        out = 4.0 * gamma * omega * omega * np.exp(-0.5 * gamma * t) * (0.25 * t) ** 2
    elif disc > 0.0:
        s = np.sqrt(disc)
        # exp(-g t/2) sinh^2(s t/4) expanded to avoid overflow at large t
        bracket = (
            np.exp(-0.5 * (gamma - s) * t)
            - 2.0 * np.exp(-0.5 * gamma * t)
            + np.exp(-0.5 * (gamma + s) * t)
        )
        out = gamma * omega * omega / disc * bracket
    else:
        s = np.sqrt(-disc)
        out = (
            4.0 * gamma * omega * omega / (-disc)
            * np.exp(-0.5 * gamma * t) * np.sin(0.25 * s * t) ** 2
        )
    return out if out.ndim else float(out)


def mean_emission_rate(omega, gamma):
    """Inverse mean interval between emissions of the static-bath emitter."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return gamma * omega * omega / (gamma * gamma + 2.0 * omega * omega)


_FIG_PARAMS = dict(omega=0.15, gamma=1.0, phi=0.01, varphi=0.01)

#: Named presets; all three figures share one parameter set and the
#: ground-state initial condition, differing only in what is plotted.
PRESETS = {
    "fig2": FluorescenceParams(case=Case.ONE, **_FIG_PARAMS),
    "fig3": FluorescenceParams(case=Case.ONE, **_FIG_PARAMS),
    "fig4": FluorescenceParams(case=Case.ONE, **_FIG_PARAMS),
}

PRESET_INITIAL_STATE = GROUND


def preset(name, case=None):
    """Look up a preset, optionally overriding the coupling case."""
    try:
        params = PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
    if case is not None:
        params = replace(params, case=Case(case))
    return params
