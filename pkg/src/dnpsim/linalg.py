"""Dense complex linear algebra for joint spin spaces up to dimension 256.

All operators live in plain ``numpy.ndarray`` matrices of ``complex128``.
Angles are radians, times are microseconds, angular frequencies rad/us.
Every function validates its numerical preconditions explicitly and raises
the typed errors from :mod:`dnpsim.errors` so callers can map failures to
exit codes without parsing numpy messages.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NotHermitian, NotUnitary

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10


class EigenDecomposition(NamedTuple):
    """Spectral decomposition ``A = V diag(w) V^dag``.

    eigenvalues
        1-D array. Real ascending for Hermitian input; on the unit circle
        for unitary input.
    eigenvectors
        Unitary matrix whose columns are the eigenvectors, ordered to match
        ``eigenvalues``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {a.shape}")
    if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    return a


def is_hermitian(h: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    return bool(np.max(np.abs(h - h.conj().T)) <= tol)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    eye = np.eye(u.shape[0])
    return bool(np.max(np.abs(u.conj().T @ u - eye)) <= tol)


def hermitian_eigensolve(h: np.ndarray) -> EigenDecomposition:
    """Diagonalise a Hermitian matrix.

    Parameters
    ----------
    h
        Hermitian matrix (checked to 1e-10 in max-entry norm).

    Returns
    -------
    EigenDecomposition
        Real eigenvalues in ascending order with orthonormal eigenvectors.

    Raises
    ------
    NotHermitian
        If the symmetry check fails.
    NoConvergence
        If the underlying iteration does not converge.
    """
    h = _as_square(h, "H")
    if not is_hermitian(h):
        raise NotHermitian(
            f"max |H - H^dag| = {np.max(np.abs(h - h.conj().T)):.3e} exceeds {HERMITIAN_TOL}"
        )
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenDecomposition(w, v)


def unitary_eigensolve(u: np.ndarray) -> EigenDecomposition:
    """Diagonalise a unitary matrix through its Hermitian parts.

    A unitary is normal, so it shares an eigenbasis with its Hermitian part
    ``(U + U^dag)/2``. That part is diagonalised first; within each of its
    degenerate eigenspaces the anti-Hermitian part ``(U - U^dag)/(2i)`` is
    sub-diagonalised to resolve the remaining freedom. Eigenvalues are then
    recovered as ``v^dag U v`` per column, which lands on the unit circle.

    Returns eigenvalues sorted by eigenphase in (-pi, pi].

    Raises
    ------
    NotUnitary
        If ``U^dag U`` deviates from identity by more than 1e-10.
    NoConvergence
        Propagated from the Hermitian solver.
    """
    u = _as_square(u, "U")
    if not is_unitary(u):
        dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
        raise NotUnitary(f"max |U^dag U - I| = {dev:.3e} exceeds {UNITARY_TOL}")

    h_re = (u + u.conj().T) / 2
    h_im = (u - u.conj().T) / (2j)
    w_re, v = hermitian_eigensolve(h_re)

    # Sub-diagonalise the anti-Hermitian part inside each degenerate group
    # of the real part; tolerance a bit looser than machine precision so
    # nearly-coincident cosines are treated as one group.
    group_tol = 1e-7
    start = 0
    n = u.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and w_re[stop] - w_re[start] < group_tol:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            sub = block.conj().T @ h_im @ block
            sub = (sub + sub.conj().T) / 2
            _, v_sub = hermitian_eigensolve(sub)
            v[:, start:stop] = block @ v_sub
        start = stop

    lam = np.einsum("ij,jk,ki->i", v.conj().T, u, v)
    order = np.argsort(np.angle(lam), kind="stable")
    lam = lam[order]
    v = v[:, order]
    if np.max(np.abs(np.abs(lam) - 1.0)) > 1e-9:
        raise NoConvergence("eigenvalues left the unit circle; input may be ill-conditioned")
    return EigenDecomposition(lam, v)


def matrix_exponential_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """Return ``exp(-i H t)`` for Hermitian ``H`` via eigendecomposition.

    Raises
    ------
    NotHermitian
        Propagated from the eigensolver.
    """
    w, v = hermitian_eigensolve(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with the left factor on the slow index."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def partial_trace(
    rho: np.ndarray, subsystem_dims: list[int] | tuple[int, ...], traced_index: int
) -> np.ndarray:
    """Trace one tensor factor out of a density matrix.

    Parameters
    ----------
    rho
        Square matrix over the full product space.
    subsystem_dims
        Dimensions of the tensor factors, slow index first.
    traced_index
        Which factor to trace out (0-based).

    Returns
    -------
    numpy.ndarray
        Density matrix on the remaining factors, order preserved.

    Raises
    ------
    DimensionMismatch
        If the dimensions do not multiply to the matrix size or the index
        is out of range.
    """
    rho = _as_square(rho, "rho")
    dims = tuple(int(d) for d in subsystem_dims)
    if any(d <= 0 for d in dims):
        raise DimensionMismatch(f"subsystem dims must be positive, got {dims}")
    if int(np.prod(dims)) != rho.shape[0]:
        raise DimensionMismatch(
            f"product of dims {dims} = {int(np.prod(dims))} does not match matrix dim {rho.shape[0]}"
        )
    if not 0 <= traced_index < len(dims):
        raise DimensionMismatch(
            f"traced_index {traced_index} out of range for {len(dims)} subsystems"
        )
    n = len(dims)
    tensor = rho.reshape(dims + dims)
    out = np.trace(tensor, axis1=traced_index, axis2=n + traced_index)
    keep = [d for i, d in enumerate(dims) if i != traced_index]
    dim_keep = int(np.prod(keep)) if keep else 1
    return out.reshape(dim_keep, dim_keep)
