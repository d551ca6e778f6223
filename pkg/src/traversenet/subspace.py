"""Streaming rank-limited eigendecomposition of a centered scatter matrix.

Tracks the top eigenpairs of sum_i c_i c_i^T one centered sample at a time.
Each update folds a rank-one term into the current factorization by
eigendecomposing a small (l+1) x (l+1) core matrix

    K = [[diag(lam), 0], [0, 0]] + v v^T,   v = [U^T c; ||c_perp||],

then mapping back through [U, c_perp / ||c_perp||]. The basis width is
truncated to the target dimension d whenever it would exceed it. Before any
truncation discards mass the tracked factorization is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this relative size the orthogonal residual is treated as zero and the
# basis does not grow (the update formulas divide by ||c_perp||).
RESIDUAL_TOL = 1e-10
# Orthonormality drift that triggers a re-orthonormalization pass.
DRIFT_TOL = 1e-10


@dataclass
class SubspaceState:
    """basis: (D, l) column-orthonormal; eigenvalues: (l,) nonincreasing."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    seen: int = 1


def ipca_init(centered: np.ndarray) -> SubspaceState:
    """Start a chain from the first centered sample.

    The first basis column is the normalized sample and its eigenvalue the
    squared norm. A sample with norm below 1e-12 yields an empty (l = 0)
    state: it counts as absorbed but carries no subspace information.
    """
    c = np.asarray(centered, dtype=np.float64)
    norm = float(np.linalg.norm(c))
    if norm < 1e-12:
        return SubspaceState(
            basis=np.empty((c.shape[0], 0)), eigenvalues=np.empty(0), seen=1
        )
    return SubspaceState(
        basis=(c / norm)[:, None], eigenvalues=np.array([norm * norm]), seen=1
    )


def ipca_update(state: SubspaceState, centered: np.ndarray, d: int) -> SubspaceState:
    """Fold one centered sample into the tracked eigendecomposition.

    Returns a new state whose basis * diag(eigenvalues) * basis^T is the best
    rank-min(l+1, d) approximation of the previous factorization plus c c^T
    (exact up to eigensolver accuracy while no truncation has discarded mass).
    """
    c = np.asarray(centered, dtype=np.float64)
    u, lam = state.basis, state.eigenvalues
    l = u.shape[1]
    if l == 0:
        fresh = ipca_init(c)
        fresh.seen = state.seen + 1
        return fresh

    proj = u.T @ c
    c_perp = c - u @ proj
    res = float(np.linalg.norm(c_perp))

    if res < RESIDUAL_TOL * max(1.0, float(np.linalg.norm(c))):
        # Sample lies in span(U): update the l x l core, no growth.
        core = np.diag(lam) + np.outer(proj, proj)
        w, vecs = np.linalg.eigh(core)
        order = np.argsort(-w, kind="stable")
        basis = u @ vecs[:, order]
        eigs = w[order]
    else:
        v = np.concatenate([proj, [res]])
        core = np.zeros((l + 1, l + 1))
        core[:l, :l] = np.diag(lam)
        core += np.outer(v, v)
        w, vecs = np.linalg.eigh(core)
        order = np.argsort(-w, kind="stable")
        basis = np.column_stack([u, c_perp / res]) @ vecs[:, order]
        eigs = w[order]

    eigs = np.maximum(eigs, 0.0)
    if basis.shape[1] > d:
        basis = basis[:, :d]
        eigs = eigs[:d]

    width = basis.shape[1]
    drift = np.linalg.norm(basis.T @ basis - np.eye(width))
    if drift > DRIFT_TOL:
        basis = _modified_gram_schmidt(basis)

    return SubspaceState(basis=basis, eigenvalues=eigs, seen=state.seen + 1)


def batch_pca_oracle(columns: np.ndarray, d: int) -> SubspaceState:
    """Top-d eigenpairs of the scatter matrix, by direct dense decomposition.

    Test oracle, independent of the incremental path: forms X X^T explicitly
    and calls a symmetric dense eigensolver.
    """
    x = np.asarray(columns, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("need a (D, n) matrix with at least one column")
    scatter = x @ x.T
    w, vecs = np.linalg.eigh(scatter)
    order = np.argsort(-w, kind="stable")[:d]
    return SubspaceState(
        basis=vecs[:, order],
        eigenvalues=np.maximum(w[order], 0.0),
        seen=x.shape[1],
    )


def _modified_gram_schmidt(basis: np.ndarray) -> np.ndarray:
    out = basis.copy()
    for j in range(out.shape[1]):
        for i in range(j):
            out[:, j] -= (out[:, i] @ out[:, j]) * out[:, i]
        nrm = np.linalg.norm(out[:, j])
        if nrm > 0:
            out[:, j] /= nrm
    return out
