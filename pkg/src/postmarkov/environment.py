"""Classical configurational bath: rate matrices and the memory kernels.

The bath hops between a finite set of states under a Pauli master equation
d p_i/dt = sum_j (phi[i,j] p_j - phi[j,i] p_i), with ``phi[i, j]`` the rate
for the transition j -> i.  Starting from state 0, its occupation decay
fixes the memory kernels of both master equations: the case-1 kernel is
-d p0/dt, and the case-2 kernel is a unit delta weight minus that same
function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import StateInvariantError

KERNEL_CUTOFF = 1e-8  # tabulate until k(t) < cutoff * k(0)


@dataclass(frozen=True)
class RateMatrix:
    """Bath transition rates; ``matrix[i, j]`` is the rate j -> i.

    Off-diagonal entries must be nonnegative; the diagonal is forced to
    zero on construction.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("rate matrix must be square")
        np.fill_diagonal(m, 0.0)
        if np.any(m < 0.0):
            raise ValueError("transition rates must be nonnegative")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_states(self):
        return self.matrix.shape[0]


def two_state_rates(phi, varphi):
    """Two-state bath with rate ``phi`` for 0 -> 1 and ``varphi`` for 1 -> 0."""
    return RateMatrix(np.array([[0.0, varphi], [phi, 0.0]]))


def pauli_generator(rates):
    """Generator W with W[i,j] = phi[i,j] off the diagonal; columns sum to 0."""
    w = rates.matrix.copy()
    np.fill_diagonal(w, -w.sum(axis=0))
    return w


def validate_occupations(p, tol=1e-10):
    """Clip tiny negatives and check normalization of a probability vector."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12):
        raise StateInvariantError(f"occupation below tolerance: {p.min():.3e}")
    p = np.clip(p, 0.0, None)
    if abs(p.sum() - 1.0) > tol:
        raise StateInvariantError(f"occupations sum to {p.sum():.12f}")
    return p


def pauli_evolve(rates, p0, t):
    """Propagate occupations: exp(t W) p0."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    p0 = validate_occupations(p0)
    w = pauli_generator(rates)
    return validate_occupations(scipy.linalg.expm(w * t) @ p0)


def survival_probability(rates, t):
    """Occupation of state 0 at time t, starting from state 0."""
    p0 = np.zeros(rates.n_states)
    p0[0] = 1.0
    return float(pauli_evolve(rates, p0, t)[0])


@dataclass(frozen=True)
class KernelTable:
    """Memory kernel tabulated on the uniform grid t_k = k * dt.

    ``delta_weight`` carries the singular part (0 for the case-1 kernel,
    1 for the case-2 kernel whose regular part is the negated case-1
    values).
    """

    dt: float
    values: np.ndarray
    delta_weight: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def grid(self):
        return self.dt * np.arange(len(self.values))

    def integral(self):
        """Quadrature of the regular part plus the delta weight.

        Trapezoid with third-order Gregory end corrections, matching the
        quadrature used inside the integrators.
        """
        v = self.values
        total = float(np.trapezoid(v, dx=self.dt))
        if len(v) >= 4:
            total -= self.dt / 12.0 * float((v[-1] - v[-2]) - (v[1] - v[0]))
        return self.delta_weight + total


def _tabulate_escape(rates, dt, t_max):
    """Values of -d p0/dt on the grid, truncated at decay or t_max."""
    w = pauli_generator(rates)
    step = scipy.linalg.expm(w * dt)
    p = np.zeros(rates.n_states)
    p[0] = 1.0
    k0 = -float((w @ p)[0])
    if k0 == 0.0:
        return np.zeros(1)
    n_max = int(round(t_max / dt))
    values = np.empty(n_max + 1)
    n_used = n_max + 1
    for k in range(n_max + 1):
        values[k] = -float((w @ p)[0])
        if k > 0 and abs(values[k]) < KERNEL_CUTOFF * abs(k0):
            n_used = k + 1
            break
        p = step @ p
    values = values[:n_used]
    if np.any(values < -1e-12):
        raise StateInvariantError(
            f"memory kernel dips below zero ({values.min():.3e}); "
            "the bath occupation of state 0 is not monotone"
        )
    return np.clip(values, 0.0, None)


def memory_kernel(rates, dt, t_max):
    """Case-1 kernel -d p0/dt, computed with the analytic derivative W p."""
    return KernelTable(dt=dt, values=_tabulate_escape(rates, dt, t_max))


def delta_kernel(rates, dt, t_max):
    """Case-2 kernel: unit delta weight plus regular part +d p0/dt."""
    return KernelTable(
        dt=dt, values=-_tabulate_escape(rates, dt, t_max), delta_weight=1.0
    )


def two_state_kernel(phi, varphi, dt, t_max):
    """Closed-form case-1 kernel phi * exp(-(phi + varphi) t) of a two-state bath.

    Independent of the matrix-exponential path; used as its cross-check.
    """
    n_max = int(round(t_max / dt))
    t = dt * np.arange(n_max + 1)
    values = phi * np.exp(-(phi + varphi) * t)
    if phi > 0.0:
        below = np.nonzero(values < KERNEL_CUTOFF * phi)[0]
        if below.size:
            values = values[: below[0] + 1]
    else:
        values = values[:1]
    return KernelTable(dt=dt, values=values)
