"""Dense operator and superoperator toolbox.

Everything in this package works with plain complex ``numpy`` arrays.  A
superoperator acting on d x d matrices is stored as a d^2 x d^2 matrix in the
*column-stacking* convention::

    vec(M)[c*d + r] = M[r, c]          (numpy: M.reshape(-1, order="F"))
    vec(A @ X @ B)  = (B.T kron A) @ vec(X)

All generators are written in hbar = 1 units.  Density matrices are validated
against fixed tolerances: Hermiticity and unit trace within 1e-10, and
positivity down to -1e-10 (eigenvalues inside that band are projected to
zero, anything below is an error).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DegenerateSteadyStateError, StateInvariantError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10


def kron(a, b):
    """Kronecker product; dimensions multiply."""
    return np.kron(np.asarray(a), np.asarray(b))


def vec(m):
    """Column-stack a matrix into a vector."""
    return np.asarray(m, dtype=complex).reshape(-1, order="F")


def unvec(v):
    """Inverse of :func:`vec` for a square matrix."""
    v = np.asarray(v)
    d = round(len(v) ** 0.5)
    if d * d != len(v):
        raise ValueError(f"vector of length {len(v)} is not a square matrix")
    return v.reshape((d, d), order="F")


def sandwich(a, b):
    """Superoperator of X -> A X B."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return np.kron(b.T, a)


def left_mult(a):
    """Superoperator of X -> A X."""
    a = np.asarray(a, dtype=complex)
    return np.kron(np.eye(a.shape[0]), a)


def right_mult(b):
    """Superoperator of X -> X B."""
    b = np.asarray(b, dtype=complex)
    return np.kron(b.T, np.eye(b.shape[0]))


def anticommutator_superop(a):
    """Superoperator of X -> {A, X} = A X + X A."""
    return left_mult(a) + right_mult(a)


def dissipator(v, gamma):
    """Jump-channel generator rho -> gamma (V rho V+ - {V+V, rho}/2).

    ``gamma`` is a nonnegative rate; ``v`` is the channel operator.
    """
    if gamma < 0:
        raise ValueError(f"channel rate must be nonnegative, got {gamma}")
    v = np.asarray(v, dtype=complex)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("channel operator must be square")
    vdv = v.conj().T @ v
    return gamma * (sandwich(v, v.conj().T) - 0.5 * anticommutator_superop(vdv))


def hamiltonian_superop(h, tol=1e-12):
    """Coherent generator rho -> -i [H, rho] (hbar = 1).

    ``h`` must be Hermitian within ``tol``.
    """
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T)) > tol:
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    return -1j * (left_mult(h) - right_mult(h))


def trace_dual(d):
    """Row vector t with t @ vec(X) = Tr X."""
    return vec(np.eye(d))


def is_trace_preserving(gen, tol=1e-10):
    """True if the generator annihilates the trace functional."""
    gen = np.asarray(gen)
    d = round(gen.shape[0] ** 0.5)
    return float(np.max(np.abs(trace_dual(d) @ gen))) <= tol


def embed_system_superop(gen_s, d_s, d_a):
    """Lift a system superoperator to act on the system factor of S x A.

    The composite basis orders the system index first (``numpy.kron``
    convention, row = s*d_a + a).
    """
    gen_s = np.asarray(gen_s, dtype=complex)
    if gen_s.shape != (d_s * d_s, d_s * d_s):
        raise ValueError("superoperator shape does not match d_s")
    big = d_s * d_a
    eye_cols = np.eye(big * big, dtype=complex)
    # vec index unpacks (column-major) as axes (s_col, a_col, s_row, a_row)
    t = eye_cols.reshape(big * big, d_s, d_a, d_s, d_a)
    t = t.transpose(0, 1, 3, 2, 4).reshape(big * big, d_s * d_s, d_a * d_a)
    t = np.einsum("ij,njk->nik", gen_s, t)
    t = t.reshape(big * big, d_s, d_s, d_a, d_a).transpose(0, 1, 3, 2, 4)
    return t.reshape(big * big, big * big).T.copy()


def partial_trace(rho, dims, keep):
    """Trace out one factor of a bipartite matrix.

    ``dims = (d_first, d_second)`` with the first factor index major;
    ``keep`` is 0 or 1 and selects the surviving factor.
    """
    d0, d1 = dims
    rho = np.asarray(rho)
    if rho.shape[-2:] != (d0 * d1, d0 * d1):
        raise ValueError(f"matrix shape {rho.shape} does not match dims {dims}")
    t = rho.reshape(rho.shape[:-2] + (d0, d1, d0, d1))
    if keep == 0:
        return np.einsum("...iaja->...ij", t)
    if keep == 1:
        return np.einsum("...aiaj->...ij", t)
    raise ValueError("keep must be 0 or 1")


def expm_propagator(gen, t):
    """Matrix exponential exp(t * gen) of a superoperator."""
    return scipy.linalg.expm(np.asarray(gen, dtype=complex) * t)


def expm_apply(gen, t, rho, validate=True):
    """Propagate a state: unvec(exp(t gen) vec(rho))."""
    if t < 0:
        raise ValueError("propagation time must be nonnegative")
    out = unvec(expm_propagator(gen, t) @ vec(rho))
    if validate:
        out = validate_density_matrix(out)
    return out


def herm(m):
    """Hermitian part (M + M+)/2."""
    return 0.5 * (m + m.conj().T)


def max_abs_diff(a, b):
    """Largest entrywise absolute difference."""
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def min_eigenvalue(rho):
    """Smallest eigenvalue of the Hermitian part."""
    return float(np.linalg.eigvalsh(herm(np.asarray(rho)))[0])


def validate_density_matrix(rho, context=""):
    """Check the density-matrix invariants and project away tolerable drift.

    Raises :class:`StateInvariantError` if Hermiticity or trace deviate by
    more than 1e-10, or if an eigenvalue lies below -1e-10.  Eigenvalues in
    (-1e-10, 0) are clipped to zero and the trace renormalized.
    """
    rho = np.asarray(rho, dtype=complex)
    where = f" ({context})" if context else ""
    dev_h = float(np.max(np.abs(rho - rho.conj().T)))
    if dev_h > HERMITICITY_TOL:
        raise StateInvariantError(f"Hermiticity violated by {dev_h:.3e}{where}")
    tr = rho.trace()
    if abs(tr - 1.0) > TRACE_TOL:
        raise StateInvariantError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}{where}")
    if not np.all(np.isfinite(rho)):
        raise StateInvariantError(f"non-finite entries{where}")
    w, u = np.linalg.eigh(herm(rho))
    if w[0] < -POSITIVITY_TOL:
        raise StateInvariantError(f"negative eigenvalue {w[0]:.3e}{where}")
    if w[0] < 0.0:
        w = np.clip(w, 0.0, None)
        rho = (u * w) @ u.conj().T
        rho = rho / rho.trace()
    return rho


def steady_state(gen, rel_tol=1e-9):
    """Unique trace-one kernel element of a trace-preserving generator.

    Found from the null space of the d^2 x d^2 matrix.  Raises
    :class:`DegenerateSteadyStateError` when the kernel is not
    one-dimensional (relative singular-value threshold ``rel_tol``).
    """
    gen = np.asarray(gen, dtype=complex)
    _, s, vh = np.linalg.svd(gen)
    scale = s[0] if s[0] > 0 else 1.0
    null_count = int(np.sum(s <= rel_tol * scale))
    if null_count != 1:
        raise DegenerateSteadyStateError(
            f"generator kernel has dimension {null_count}, expected 1"
        )
    rho = herm(unvec(vh[-1].conj()))
    rho = rho / rho.trace()
    rho = validate_density_matrix(rho, context="steady state")
    residual = float(np.max(np.abs(gen @ vec(rho))))
    if residual > 1e-10 * max(scale, 1.0):
        raise DegenerateSteadyStateError(f"steady-state residual {residual:.3e}")
    return rho
