"""Information-backflow witness based on the relative entropy.

The witness tracks E(rho_t || rho_inf) in bits along a trajectory; any
rise of that curve signals information flowing back from the environment
into the system, since under a memoryless dynamics the distance to the
stationary state can only shrink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EIGENVALUE_FLOOR = 1e-12
DEFAULT_REVIVAL_EPS = 1e-4  # bits


def relative_entropy(rho, sigma):
    """Quantum relative entropy Tr[rho (log2 rho - log2 sigma)] in bits.

    Eigenvalues of ``rho`` below 1e-12 contribute nothing; weight of
    ``rho`` on eigenvectors of ``sigma`` below that floor makes the
    divergence infinite (returned as ``math.inf``, not raised).
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    w_r, v_r = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w_s, v_s = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    w_r = np.clip(w_r, 0.0, None)

    overlap = np.abs(v_r.conj().T @ v_s) ** 2  # overlap[i, j] = |<r_i|s_j>|^2
    support_r = w_r > EIGENVALUE_FLOOR
    bad_s = w_s <= EIGENVALUE_FLOOR
    if np.any(bad_s):
        leaked = overlap[np.ix_(support_r, bad_s)] * w_r[support_r, None]
        if leaked.size and float(leaked.sum()) > EIGENVALUE_FLOOR:
            return math.inf

    ent_r = float(np.sum(w_r[support_r] * np.log2(w_r[support_r])))
    log_s = np.where(bad_s, 0.0, np.log2(np.maximum(w_s, EIGENVALUE_FLOOR)))
    cross = float(w_r[support_r] @ (overlap[support_r] @ log_s))
    value = ent_r - cross
    # Klein's inequality puts the true value at >= 0; clip float dust only.
    return 0.0 if -1e-10 < value < 0.0 else value


@dataclass(frozen=True)
class EntropySeries:
    """Relative-entropy values along a time grid, in bits."""

    t: np.ndarray
    values: np.ndarray


def entropy_series(t_grid, states, sigma):
    """E(rho_t || sigma) for every state of a trajectory."""
    values = np.array([relative_entropy(rho, sigma) for rho in states])
    return EntropySeries(t=np.asarray(t_grid, dtype=float), values=values)


def detect_backflow(series, epsilon=DEFAULT_REVIVAL_EPS):
    """Maximal intervals over which the witness rises by more than epsilon.

    Walks the series keeping the running minimum; once the curve climbs
    more than ``epsilon`` above it, the revival extends to the following
    peak (hysteresis ``epsilon`` on the way down).  Returns a list of
    (t_minimum, t_peak) pairs; an empty list means the series is
    monotone within ``epsilon``.
    """
    e = np.asarray(series.values, dtype=float)
    t = np.asarray(series.t, dtype=float)
    pairs = []
    valley = 0
    peak = None
    rising = False
    for k in range(1, len(e)):
        if not rising:
            if e[k] < e[valley]:
                valley = k
            elif e[k] - e[valley] > epsilon:
                rising = True
                peak = k
        else:
            if e[k] > e[peak]:
                peak = k
            elif e[peak] - e[k] > epsilon:
                pairs.append((t[valley], t[peak]))
                valley = k
                rising = False
    if rising:
        pairs.append((t[valley], t[peak]))
    return pairs


def revival_amplitudes(series, pairs):
    """Witness rise of each (t1, t2) pair, in bits."""
    t = np.asarray(series.t)
    e = np.asarray(series.values)
    out = []
    for t1, t2 in pairs:
        e1 = float(e[np.argmin(np.abs(t - t1))])
        e2 = float(e[np.argmin(np.abs(t - t2))])
        out.append(e2 - e1)
    return out
