"""Exact bipartite embedding of the bath-modulated dynamics.

The system is joined to an ancilla whose basis states label the classical
bath states, and the pair evolves under a single Lindblad generator

    L = L_system + L_ancilla + C_coupling.

Tracing out the ancilla reproduces the memory-kernel master equations, so
this module is the ground-truth oracle for everything else in the package.
The two coupling cases differ only in which ancilla states gate the
dissipative channels:

* case 1: the channels act in every bath state except state 0,
* case 2: the channels act only in bath state 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import operators as ops
from .environment import RateMatrix
from .errors import StateInvariantError


class Case(enum.IntEnum):
    """Gating of the dissipative channels by the bath state."""

    ONE = 1  # dissipation inhibited in bath state 0, active elsewhere
    TWO = 2  # dissipation active only in bath state 0

    def gate(self, i):
        """1.0 if the channels act in bath state ``i``, else 0.0."""
        if self is Case.ONE:
            return 0.0 if i == 0 else 1.0
        return 1.0 if i == 0 else 0.0


@dataclass(frozen=True)
class Channel:
    """Dissipative channel: system operator and nonnegative rate."""

    operator: np.ndarray
    rate: float

    def __post_init__(self):
        v = np.array(self.operator, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("channel operator must be square")
        if self.rate < 0:
            raise ValueError(f"channel rate must be nonnegative, got {self.rate}")
        v.flags.writeable = False
        object.__setattr__(self, "operator", v)


def channel_generator(channels):
    """System dissipator summed over channels (the modulated part)."""
    channels = list(channels)
    d = channels[0].operator.shape[0]
    gen = np.zeros((d * d, d * d), dtype=complex)
    for ch in channels:
        gen = gen + ops.dissipator(ch.operator, ch.rate)
    return gen


@dataclass(frozen=True)
class BipartiteModel:
    """System + ancilla model; the ancilla mirrors the classical bath.

    ``system_generator`` is the bath-independent part (unitary and any
    always-on Lindblad terms) as a d_s^2 x d_s^2 superoperator.
    """

    d_s: int
    rates: RateMatrix
    channels: tuple
    case: Case
    system_generator: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        gen = np.asarray(self.system_generator, dtype=complex)
        if gen.shape != (self.d_s**2, self.d_s**2):
            raise ValueError("system generator shape does not match d_s")
        for ch in self.channels:
            if ch.operator.shape[0] != self.d_s:
                raise ValueError("channel dimension does not match d_s")
        object.__setattr__(self, "system_generator", gen)

    @property
    def d_a(self):
        return self.rates.n_states

    def system_dissipator(self):
        return channel_generator(self.channels)


def ancilla_projector(d_a, i):
    pi = np.zeros((d_a, d_a), dtype=complex)
    pi[i, i] = 1.0
    return pi


def ancilla_generator(rates, d_s):
    """Bipartite generator of the bath transitions.

    Sum of dissipators with operators I_s x |i><j| at rate ``rates[i, j]``;
    on ancilla-diagonal blocks it reduces to the Pauli generator.
    """
    d_a = rates.n_states
    eye_s = np.eye(d_s, dtype=complex)
    big = d_s * d_a
    gen = np.zeros((big * big, big * big), dtype=complex)
    for i in range(d_a):
        for j in range(d_a):
            if i == j or rates.matrix[i, j] == 0.0:
                continue
            flip = np.zeros((d_a, d_a), dtype=complex)
            flip[i, j] = 1.0
            gen = gen + ops.dissipator(np.kron(eye_s, flip), rates.matrix[i, j])
    return gen


def coupling_generator(case, channels, d_a):
    """Bath-gated dissipative coupling.

    Case 1 sums channel dissipators over the ancilla projectors i >= 1
    (explicit index filtering); case 2 uses the i = 0 projector only.
    """
    if d_a < 2:
        raise ValueError("the ancilla needs at least two states")
    channels = list(channels)
    d_s = channels[0].operator.shape[0]
    big = d_s * d_a
    gen = np.zeros((big * big, big * big), dtype=complex)
    active = range(1, d_a) if case is Case.ONE else (0,)
    for i in active:
        pi = ancilla_projector(d_a, i)
        for ch in channels:
            gen = gen + ops.dissipator(np.kron(ch.operator, pi), ch.rate)
    return gen


def total_generator(model):
    """Full bipartite generator: lifted system part + bath part + coupling."""
    gen = ops.embed_system_superop(model.system_generator, model.d_s, model.d_a)
    gen = gen + ancilla_generator(model.rates, model.d_s)
    gen = gen + coupling_generator(model.case, model.channels, model.d_a)
    if not ops.is_trace_preserving(gen, tol=1e-10):
        raise StateInvariantError("assembled bipartite generator is not trace preserving")
    return gen


def rate_equation_rhs(case, aux_states, system_gen, channel_gen, rates):
    """Coupled evolution of the per-bath-state system matrices.

    d rho_i/dt = L_s rho_i + gate_i C_s rho_i + sum_j (phi[i,j] rho_j
    - phi[j,i] rho_i).  Serves as an independent oracle for the block
    action of the bipartite generator.
    """
    aux = [np.asarray(a, dtype=complex) for a in aux_states]
    phi = rates.matrix
    out = []
    for i, rho_i in enumerate(aux):
        d = ops.unvec(system_gen @ ops.vec(rho_i))
        if case.gate(i):
            d = d + ops.unvec(channel_gen @ ops.vec(rho_i))
        for j, rho_j in enumerate(aux):
            if j == i:
                continue
            d = d + phi[i, j] * rho_j - phi[j, i] * rho_i
        out.append(d)
    return out


def reduced_system(rho_sa, d_s, d_a):
    """Partial trace over the ancilla."""
    return ops.partial_trace(rho_sa, (d_s, d_a), keep=0)


def ancilla_block(rho_sa, d_s, d_a, i):
    """System matrix conditioned on bath state i: <a_i| rho |a_i>."""
    if not 0 <= i < d_a:
        raise IndexError(f"bath state {i} out of range for d_a = {d_a}")
    t = np.asarray(rho_sa).reshape(d_s, d_a, d_s, d_a)
    return t[:, i, :, i]


def ancilla_populations(rho_sa, d_s, d_a):
    """Bath-state probabilities Tr_s <a_i| rho |a_i>."""
    t = np.asarray(rho_sa).reshape(d_s, d_a, d_s, d_a)
    return np.einsum("sisi->i", t).real


def _rk4_step(gen, v, h):
    k1 = gen @ v
    k2 = gen @ (v + 0.5 * h * k1)
    k3 = gen @ (v + 0.5 * h * k2)
    k4 = gen @ (v + h * k3)
    return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def uniform_step(t_grid):
    """Step of a uniform ascending grid starting at 0."""
    t = np.asarray(t_grid, dtype=float)
    if len(t) < 2 or t[0] != 0.0:
        raise ValueError("time grid must start at 0 and have at least two points")
    steps = np.diff(t)
    h = steps[0]
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-12 * max(h, 1.0):
        raise ValueError("time grid must be uniform and ascending")
    return float(h)


def evolve_bipartite(model, rho0_s, t_grid, method="rk4", ancilla_state=0,
                     validate=True):
    """Snapshots of the joint state from the product initial condition.

    The ancilla starts in the pure state ``ancilla_state`` (0 unless the
    caller overrides).  ``method`` is fixed-step RK4 on the vectorized
    equation, or "expm" for the stepwise matrix exponential cross-check.
    Returns an array of shape (len(t_grid), d_s*d_a, d_s*d_a).
    """
    h = uniform_step(t_grid)
    gen = total_generator(model)
    rho0_s = ops.validate_density_matrix(np.asarray(rho0_s, dtype=complex))
    rho0 = np.kron(rho0_s, ancilla_projector(model.d_a, ancilla_state))
    n = len(t_grid)
    big = model.d_s * model.d_a
    out = np.empty((n, big * big), dtype=complex)
    v = ops.vec(rho0)
    out[0] = v
    if method == "rk4":
        for k in range(1, n):
            v = _rk4_step(gen, v, h)
            out[k] = v
    elif method == "expm":
        step = scipy.linalg.expm(gen * h)
        for k in range(1, n):
            v = step @ v
            out[k] = v
    else:
        raise ValueError(f"unknown method {method!r}")
    snaps = out.reshape(n, big, big).transpose(0, 2, 1)  # unvec each row
    if validate:
        _validate_snapshots(snaps)
    return snaps


def _validate_snapshots(snaps):
    dev_h = np.max(np.abs(snaps - snaps.conj().transpose(0, 2, 1)))
    if dev_h > ops.HERMITICITY_TOL:
        raise StateInvariantError(f"evolution lost Hermiticity by {dev_h:.3e}")
    traces = np.einsum("nii->n", snaps)
    dev_t = np.max(np.abs(traces - 1.0))
    if dev_t > 1e-8:
        raise StateInvariantError(f"evolution lost the trace by {dev_t:.3e}")
    w = np.linalg.eigvalsh(0.5 * (snaps + snaps.conj().transpose(0, 2, 1)))
    if w.min() < -ops.POSITIVITY_TOL:
        raise StateInvariantError(
            f"integration step failure: eigenvalue {w.min():.3e} below tolerance"
        )
