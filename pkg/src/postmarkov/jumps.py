"""Renewal quantum-jump unravelling of the memory-kernel dynamics.

A detection scheme is *renewal* when every channel operator is rank one
with a shared source vector, V_a = |r_a><u|; each detection then collapses
the system to the same resetting state regardless of its history.  Under
that structure (and, for case 1, a two-state bath) the bipartite dynamics
unravels into trajectories that live entirely in the system Hilbert space:
smooth conditional evolution interrupted by collapses, with the interval
statistics fixed by tabulated survival probabilities.

Between detections the system follows the ancilla trace of the bipartite
evolution generated by everything except the detected-jump part; the first
interval generally differs from the later ones because the bath starts in
state 0 while a detection resets it (case 1) to state 1.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import operators as ops
from .embedding import Case, ancilla_projector, total_generator
from .errors import (
    ClosureError,
    HorizonError,
    RenewalStructureError,
    StateInvariantError,
)

SURVIVAL_FLOOR = 1e-6
MAX_TABLE_POINTS = 10**6


# ---------------------------------------------------------------------------
# Renewal structure


@dataclass(frozen=True)
class RenewalSpec:
    """Rank-one channel family |r_a><u| with the shared source vector.

    ``weights`` are the effective rates (channel rate times squared
    operator norm); ``reset_state`` is their normalized mixture of the
    reset projectors, the post-detection state.
    """

    target: np.ndarray          # |u>
    resets: tuple               # unit vectors |r_a>
    weights: tuple              # effective rates, one per channel
    total_rate: float
    reset_state: np.ndarray

    @property
    def n_channels(self):
        return len(self.resets)


def _fix_phase(v):
    """Rotate a vector so its first non-negligible entry is real positive."""
    idx = np.argmax(np.abs(v) > 1e-12)
    phase = v[idx] / abs(v[idx])
    return v / phase, phase


def renewal_spec(channels, tol=1e-10):
    """Validate the renewal structure of a channel set.

    Each operator must be rank one and all right (source) vectors must
    coincide up to phase.  Raises :class:`RenewalStructureError` naming
    the first offending channel.
    """
    channels = list(channels)
    if not channels:
        raise RenewalStructureError("empty channel set", channel_index=None)
    target = None
    resets = []
    weights = []
    for idx, ch in enumerate(channels):
        u_mat, s, vh = np.linalg.svd(ch.operator)
        if s[0] <= tol:
            raise RenewalStructureError(
                f"channel {idx} is numerically zero", channel_index=idx
            )
        if len(s) > 1 and s[1] > tol * s[0]:
            raise RenewalStructureError(
                f"channel {idx} has rank > 1 (second singular value "
                f"{s[1]:.3e})", channel_index=idx,
            )
        u_vec = vh[0].conj()
        u_vec, phase = _fix_phase(u_vec)
        r_vec = u_mat[:, 0] * phase.conjugate()
        if target is None:
            target = u_vec
        elif ops.max_abs_diff(u_vec, target) > tol:
            raise RenewalStructureError(
                f"channel {idx} does not share the source vector",
                channel_index=idx,
            )
        resets.append(r_vec)
        weights.append(ch.rate * float(s[0]) ** 2)
    total = float(sum(weights))
    if total <= 0:
        raise RenewalStructureError("all channel rates vanish", channel_index=None)
    reset_state = sum(
        (w / total) * np.outer(r, r.conj()) for r, w in zip(resets, weights)
    )
    reset_state = ops.validate_density_matrix(reset_state, context="reset state")
    return RenewalSpec(
        target=target,
        resets=tuple(resets),
        weights=tuple(weights),
        total_rate=total,
        reset_state=reset_state,
    )


def jump_superop(spec):
    """System jump part: rho -> sum_a w_a V_a rho V_a+."""
    d = len(spec.target)
    out = np.zeros((d * d, d * d), dtype=complex)
    for r, w in zip(spec.resets, spec.weights):
        v = np.outer(r, spec.target.conj())
        out = out + w * ops.sandwich(v, v.conj().T)
    return out


def drain_superop(spec):
    """System no-jump part: rho -> -(total_rate/2) {|u><u|, rho}."""
    uu = np.outer(spec.target, spec.target.conj())
    return -0.5 * spec.total_rate * ops.anticommutator_superop(uu)


# ---------------------------------------------------------------------------
# Closure of the bipartite detection transformation


@dataclass(frozen=True)
class ClosureVerdict:
    """Outcome of the closed-unravelling conditions.

    On success ``ancilla_reset`` is the bath state every detection leaves
    behind; on failure ``witness`` holds a state whose post-detection bath
    reduction differs from the reference, together with both reductions.
    """

    ok: bool
    case: Case
    d_a: int
    max_error: float
    ancilla_reset: np.ndarray | None = None
    witness: tuple | None = None


def _active_projector(case, d_a):
    p = np.zeros((d_a, d_a), dtype=complex)
    if case is Case.ONE:
        for i in range(1, d_a):
            p[i, i] = 1.0
    else:
        p[0, 0] = 1.0
    return p


def bipartite_jump_superop(case, spec, d_a):
    """Detected-jump part of the bipartite generator (gated channels)."""
    d_s = len(spec.target)
    big = d_s * d_a
    out = np.zeros((big * big, big * big), dtype=complex)
    active = range(1, d_a) if case is Case.ONE else (0,)
    for i in active:
        pi = ancilla_projector(d_a, i)
        for r, w in zip(spec.resets, spec.weights):
            t = np.kron(np.outer(r, spec.target.conj()), pi)
            out = out + w * ops.sandwich(t, t.conj().T)
    return out


def _state_basis(dim):
    """PSD matrices spanning the Hermitian operators on C^dim."""
    states = []
    for m in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[m, m] = 1.0
        states.append(e)
        for n in range(m + 1, dim):
            plus = np.zeros(dim, dtype=complex)
            plus[m] = plus[n] = 1.0 / np.sqrt(2.0)
            states.append(np.outer(plus, plus.conj()))
            plus_i = np.zeros(dim, dtype=complex)
            plus_i[m] = 1.0 / np.sqrt(2.0)
            plus_i[n] = 1.0j / np.sqrt(2.0)
            states.append(np.outer(plus_i, plus_i.conj()))
    return states


def _random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / rho.trace()


def check_closure(case, spec, d_a, tol=1e-9, n_random=20, seed=7):
    """Verify that detections act identically on the system and joint levels.

    Applies the normalized detection transformation to a spanning family of
    bipartite states plus ``n_random`` random ones (states with vanishing
    detection probability are skipped) and checks that (a) the system
    reduction reproduces the system-level collapse and (b) the bath
    reduction is one fixed state.
    """
    case = Case(case)
    if d_a < 2:
        raise ValueError("the ancilla needs at least two states")
    d_s = len(spec.target)
    jump_bip = bipartite_jump_superop(case, spec, d_a)
    rng = np.random.default_rng(seed)
    states = _state_basis(d_s * d_a)
    states += [_random_density(rng, d_s * d_a) for _ in range(n_random)]

    reference = None
    worst = 0.0
    for rho in states:
        image = ops.unvec(jump_bip @ ops.vec(rho))
        prob = image.trace().real
        if prob <= 1e-12:
            continue
        post = image / prob
        err_sys = ops.max_abs_diff(
            ops.partial_trace(post, (d_s, d_a), keep=0), spec.reset_state
        )
        bath = ops.partial_trace(post, (d_s, d_a), keep=1)
        if reference is None:
            reference = bath
        err_bath = ops.max_abs_diff(bath, reference)
        err = max(err_sys, err_bath)
        worst = max(worst, err)
        if err > tol:
            return ClosureVerdict(
                ok=False, case=case, d_a=d_a, max_error=worst,
                witness=(rho, bath, reference),
            )
    return ClosureVerdict(
        ok=True, case=case, d_a=d_a, max_error=worst, ancilla_reset=reference
    )


# ---------------------------------------------------------------------------
# Conditional propagators and waiting-time tables


@dataclass(frozen=True)
class PropagatorTable:
    """Unnormalized conditional evolution of one seed on a uniform grid.

    ``states[k]`` is the (trace-decaying) system state after a jump-free
    interval of length k*dt, ``survival[k]`` its trace, and ``density[k]``
    the waiting-time density (the analytic trace-loss rate, not a finite
    difference).
    """

    dt: float
    states: np.ndarray    # (n, d_s, d_s)
    survival: np.ndarray  # (n,)
    density: np.ndarray   # (n,)

    def __len__(self):
        return len(self.survival)

    @property
    def grid(self):
        return self.dt * np.arange(len(self.survival))

    def conditional(self, tau):
        """Normalized state after a jump-free interval ``tau`` (interpolated)."""
        out = _interp_conditional(self, np.asarray(tau, dtype=float))
        return out[0] if np.isscalar(tau) else out


@dataclass(frozen=True)
class WaitingTimeTable:
    """Survival probabilities and waiting densities on one grid.

    The plain pair applies between consecutive detections; the ``_in``
    pair applies to the interval before the first detection only.
    """

    dt: float
    survival: np.ndarray
    density: np.ndarray
    survival_in: np.ndarray
    density_in: np.ndarray

    @property
    def grid(self):
        return self.dt * np.arange(len(self.survival))


def conditional_generator(model, spec):
    """Bipartite generator of the no-jump periods: everything but detections."""
    return total_generator(model) - bipartite_jump_superop(
        model.case, spec, model.d_a
    )


def require_closure(model, spec):
    """Gate trajectory machinery on the closure conditions."""
    verdict = check_closure(model.case, spec, model.d_a)
    if not verdict.ok:
        raise ClosureError(
            f"case {int(model.case)} with a {model.d_a}-state bath has no "
            f"closed unravelling (mismatch {verdict.max_error:.3e})"
        )
    return verdict


def conditional_propagator(model, spec, which, rho_seed, dt,
                           min_horizon=0.0, floor=SURVIVAL_FLOOR):
    """Tabulate the no-jump evolution of one seed state.

    ``which`` selects the bath seed: the first interval starts from bath
    state 0; later intervals start from the post-detection bath state
    (state 1 in case 1, state 0 in case 2).  The grid extends by doubling
    until the survival probability falls below ``floor`` (and at least to
    ``min_horizon``), capped at one million points.
    """
    if which not in ("first", "later"):
        raise ValueError("which must be 'first' or 'later'")
    verdict = require_closure(model, spec)
    if which == "first" or model.case is Case.TWO:
        ancilla_seed = 0
    else:
        ancilla_seed = 1
    gen = conditional_generator(model, spec)
    d_s, d_a = model.d_s, model.d_a
    rho_seed = ops.validate_density_matrix(np.asarray(rho_seed, dtype=complex))
    v = ops.vec(np.kron(rho_seed, ancilla_projector(d_a, ancilla_seed)))
    step = scipy.linalg.expm(gen * dt)
    tr_row = ops.trace_dual(d_s * d_a)
    rate_row = tr_row @ gen  # survival loss rate, applied per snapshot

    chunk = max(1024, int(round(min_horizon / dt)) + 1)
    vecs = [v]
    n_goal = int(round(min_horizon / dt)) + 1
    while True:
        block = np.empty((chunk, len(v)), dtype=complex)
        for i in range(chunk):
            v = step @ v
            block[i] = v
        vecs.append(block)
        n_now = sum(b.shape[0] if b.ndim > 1 else 1 for b in vecs)
        tail_survival = float((tr_row @ v).real)
        if tail_survival < floor and n_now >= n_goal:
            break
        if n_now >= MAX_TABLE_POINTS:
            raise HorizonError(
                f"survival still {tail_survival:.3e} after {n_now} points; "
                "the waiting-time density looks defective"
            )
        chunk = min(n_now, MAX_TABLE_POINTS - n_now)  # double, then cap
    flat = np.vstack([np.atleast_2d(b) for b in vecs])
    survival = (flat @ tr_row).real
    decayed = np.nonzero(survival < floor)[0]
    if decayed.size:
        n_keep = max(n_goal, decayed[0] + 1)
        flat = flat[:n_keep]
        survival = survival[:n_keep]
    density = -(flat @ rate_row).real
    states = flat.reshape(-1, d_a * d_s, d_a * d_s)
    # unvec each row, then trace out the ancilla
    states = states.transpose(0, 2, 1).reshape(-1, d_s, d_a, d_s, d_a)
    states = np.einsum("nsata->nst", states)
    return PropagatorTable(dt=dt, states=states, survival=survival,
                           density=density)


def _retabulate_to(table, model, spec, which, rho_seed, n_points):
    """Extend a table to a common grid length (cheap re-run)."""
    if len(table) >= n_points:
        return table
    return conditional_propagator(
        model, spec, which, rho_seed, table.dt,
        min_horizon=(n_points - 1) * table.dt,
    )


def build_waiting_tables(model, rho0, dt, min_horizon=0.0):
    """Waiting-time statistics plus the two conditional tables.

    Returns ``(waiting, first, later)`` on one common grid; ``first`` is
    seeded by ``rho0`` and drives the interval before the first detection,
    ``later`` is seeded by the resetting state.
    """
    spec = renewal_spec(model.channels)
    later = conditional_propagator(
        model, spec, "later", spec.reset_state, dt, min_horizon
    )
    first = conditional_propagator(
        model, spec, "first", rho0, dt, min_horizon
    )
    n = max(len(first), len(later))
    later = _retabulate_to(later, model, spec, "later", spec.reset_state, n)
    first = _retabulate_to(first, model, spec, "first", rho0, n)
    waiting = WaitingTimeTable(
        dt=dt,
        survival=later.survival,
        density=later.density,
        survival_in=first.survival,
        density_in=first.density,
    )
    return waiting, first, later


@dataclass(frozen=True)
class JumpProcess:
    """Everything a trajectory sampler needs, immutable and shareable."""

    case: Case
    spec: RenewalSpec
    waiting: WaitingTimeTable
    first: PropagatorTable
    later: PropagatorTable

    @property
    def horizon(self):
        return (len(self.waiting.survival) - 1) * self.waiting.dt


def prepare_jump_process(model, rho0, dt, t_max):
    """Renewal check, closure gate, and table construction for a model."""
    spec = renewal_spec(model.channels)
    waiting, first, later = build_waiting_tables(
        model, rho0, dt, min_horizon=t_max
    )
    return JumpProcess(
        case=model.case, spec=spec, waiting=waiting, first=first, later=later
    )


# ---------------------------------------------------------------------------
# Sampling


def invert_survival(survival, dt, r, tol_factor=0.01):
    """Solve P0(tau) = r on the tabulated monotone curve.

    Bisection on the piecewise-linear interpolant down to a time
    tolerance of ``tol_factor * dt``.  Returns ``None`` when r falls
    below the tabulated tail (no event within the horizon).
    """
    if r >= survival[0]:
        return 0.0
    if r < survival[-1]:
        return None
    i = int(np.searchsorted(-survival, -r, side="left"))
    lo, hi = (i - 1) * dt, i * dt

    def interp(t):
        k = min(int(t / dt), len(survival) - 2)
        lam = t / dt - k
        return (1.0 - lam) * survival[k] + lam * survival[k + 1]

    while hi - lo > tol_factor * dt:
        mid = 0.5 * (lo + hi)
        if interp(mid) > r:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _interp_conditional(table, tau):
    """Normalized conditional states at offsets ``tau`` (vectorized)."""
    tau = np.atleast_1d(tau)
    pos = np.clip(tau / table.dt, 0.0, len(table) - 1.0)
    idx = np.minimum(pos.astype(int), len(table) - 2)
    lam = (pos - idx)[:, None, None]
    raw = (1.0 - lam) * table.states[idx] + lam * table.states[idx + 1]
    traces = np.einsum("nii->n", raw).real
    return raw / np.maximum(traces, 1e-300)[:, None, None]


@dataclass(frozen=True)
class TrajectoryRecord:
    """One stochastic realization sampled on an output grid."""

    seed: object
    t: np.ndarray
    jump_times: np.ndarray
    states: np.ndarray  # (len(t), d_s, d_s)

    def jump_counts(self):
        """Number of detections inside each output interval (t_{k-1}, t_k]."""
        counts = np.zeros(len(self.t), dtype=int)
        if len(self.jump_times):
            bins = np.searchsorted(self.t, self.jump_times, side="left")
            for b in bins:
                counts[min(b, len(counts) - 1)] += 1
        return counts


def _seed_entropy(seed):
    if np.isscalar(seed):
        return [int(seed)]
    return [int(s) for s in seed]


def sample_jump_times(process, rng, horizon):
    """Detection times in [0, horizon] by inverse-transform sampling."""
    waiting = process.waiting
    times = []
    t = 0.0
    survival = waiting.survival_in
    while True:
        tau = invert_survival(survival, waiting.dt, rng.random())
        if tau is None:
            if t + process.horizon < horizon:
                raise HorizonError(
                    "tables end before the output window; extend the grid"
                )
            break
        t = t + tau
        if t > horizon:
            break
        times.append(t)
        survival = waiting.survival
    return np.asarray(times)


def sample_trajectory(process, t_out, seed):
    """Sample one realization and its states on the output grid.

    ``seed`` (an integer or a tuple of integers) feeds a dedicated
    ``numpy.random.SeedSequence``, so the draw depends only on the seed,
    never on scheduling.  Between detections the state is the normalized
    conditional table entry; at a detection it is the resetting state
    exactly.
    """
    t_out = np.asarray(t_out, dtype=float)
    if process.waiting.survival[-1] >= SURVIVAL_FLOOR:
        raise HorizonError("waiting tables were built without a decayed tail")
    if t_out[-1] > process.horizon + 1e-9:
        raise HorizonError("output grid extends beyond the tabulated horizon")
    rng = np.random.default_rng(np.random.SeedSequence(_seed_entropy(seed)))
    jump_times = sample_jump_times(process, rng, t_out[-1])

    d_s = process.first.states.shape[1]
    states = np.empty((len(t_out), d_s, d_s), dtype=complex)
    boundaries = np.concatenate([[0.0], jump_times, [np.inf]])
    for seg in range(len(boundaries) - 1):
        lo, hi = boundaries[seg], boundaries[seg + 1]
        mask = (t_out >= lo) & (t_out < hi)
        if not np.any(mask):
            continue
        table = process.first if seg == 0 else process.later
        states[mask] = _interp_conditional(table, t_out[mask] - lo)
    return TrajectoryRecord(
        seed=seed, t=t_out, jump_times=jump_times, states=states
    )


# ---------------------------------------------------------------------------
# Ensemble averaging


class _Welford:
    """Streaming mean and standard error, accumulated in a fixed order."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape, dtype=complex)
        self.m2_re = np.zeros(shape)
        self.m2_im = np.zeros(shape)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        delta2 = x - self.mean
        self.m2_re += delta.real * delta2.real
        self.m2_im += delta.imag * delta2.imag

    def sem(self):
        if self.n < 2:
            return np.zeros_like(self.m2_re), np.zeros_like(self.m2_im)
        var_re = self.m2_re / (self.n - 1)
        var_im = self.m2_im / (self.n - 1)
        return np.sqrt(var_re / self.n), np.sqrt(var_im / self.n)


@dataclass(frozen=True)
class EnsembleAverage:
    """Pointwise mean state with per-entry standard errors."""

    t: np.ndarray
    mean: np.ndarray      # (n, d, d) complex
    sem_real: np.ndarray  # (n, d, d)
    sem_imag: np.ndarray
    n_records: int

    def real_entry(self, i, j):
        """Mean and standard error of Re rho[i, j] along the grid."""
        return self.mean[:, i, j].real, self.sem_real[:, i, j]


def _reduce(grid, state_iter, n_expected):
    acc = None
    count = 0
    for states in state_iter:
        if acc is None:
            acc = _Welford(states.shape)
        acc.add(states)
        count += 1
    if count == 0:
        raise ValueError("empty ensemble")
    if n_expected is not None and count != n_expected:
        raise RuntimeError(f"expected {n_expected} records, reduced {count}")
    sem_re, sem_im = acc.sem()
    mean = acc.mean
    mean_trace_dev = float(np.max(np.abs(np.einsum("nii->n", mean) - 1.0)))
    if mean_trace_dev > 1e-10:
        raise StateInvariantError(f"ensemble mean trace off by {mean_trace_dev:.3e}")
    return EnsembleAverage(
        t=grid, mean=mean, sem_real=sem_re, sem_imag=sem_im, n_records=count
    )


def ensemble_average(records):
    """Average a list of records sharing one output grid."""
    records = list(records)
    if not records:
        raise ValueError("empty ensemble")
    grid = records[0].t
    for rec in records[1:]:
        if len(rec.t) != len(grid) or np.max(np.abs(rec.t - grid)) > 0:
            raise ValueError("records do not share the output grid")
    return _reduce(grid, (rec.states for rec in records), len(records))


_WORKER_CONTEXT = {}


def _init_worker(process, t_out, master_seed):
    _WORKER_CONTEXT["args"] = (process, t_out, master_seed)


def _sample_block(index_range):
    process, t_out, master_seed = _WORKER_CONTEXT["args"]
    lo, hi = index_range
    recs = [sample_trajectory(process, t_out, (master_seed, idx))
            for idx in range(lo, hi)]
    return [(rec.jump_times, rec.states) for rec in recs]


def run_ensemble(process, n_traj, master_seed, t_out, workers=1,
                 keep_records=False):
    """Sample ``n_traj`` trajectories and reduce them in index order.

    Per-trajectory streams are seeded by ``(master_seed, index)``, and the
    reduction always walks indices 0..n-1, so the result is identical for
    any worker count.  With ``keep_records`` the individual records are
    returned as well (memory permitting).
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    t_out = np.asarray(t_out, dtype=float)
    records = [] if keep_records else None

    if workers <= 1 or n_traj == 1:
        def states_iter():
            for idx in range(n_traj):
                rec = sample_trajectory(process, t_out, (master_seed, idx))
                if records is not None:
                    records.append(rec)
                yield rec.states

        average = _reduce(t_out, states_iter(), n_traj)
        return (average, records) if keep_records else average

    block = max(1, -(-n_traj // (workers * 8)))
    ranges = [(lo, min(lo + block, n_traj)) for lo in range(0, n_traj, block)]
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker,
        initargs=(process, t_out, master_seed),
    ) as pool:
        futures = [pool.submit(_sample_block, rng) for rng in ranges]

        def states_iter():
            for fut, (lo, hi) in zip(futures, ranges):
                for offset, (jumps, states) in enumerate(fut.result()):
                    if records is not None:
                        records.append(
                            TrajectoryRecord(
                                seed=(master_seed, lo + offset), t=t_out,
                                jump_times=jumps, states=states,
                            )
                        )
                    yield states

        average = _reduce(t_out, states_iter(), n_traj)
    return (average, records) if keep_records else average
