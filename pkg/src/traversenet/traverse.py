"""Test-time optimizers over a frozen traversal network.

Two walk strategies over the graph, both minimizing the squared ambient
distance to a query point x:

* traverse: at each vertex, try the first-order step (move to the neighbor
  whose cached edge embedding best aligns with the tangent descent direction)
  and accept it only if it strictly decreases the distance to x; otherwise
  take the zero-order step (the outgoing arc head with smallest distance),
  again only on strict decrease. Terminates when neither improves. Modes
  restrict the walk to first-order steps only, or treat first-order edges as
  zero-order candidates and use distance comparisons exclusively.

* traverse_101: two gradient-descent phases bracketing a single zero-order
  jump. Each descent phase moves to the neighbor minimizing the residual
  between the radius-clipped descent direction and the edge embedding, and
  stops when the tangent component of (x - q) drops below a tolerance. There
  is no acceptance test, so phases are step-capped rather than guaranteed to
  descend.

Every operation charges an explicit multiplication ledger (OpCount):
D*d per tangent projection, d per examined first-order neighbor, D per
ambient squared distance. The current-vertex distance is evaluated once per
visit (accepted candidates hand their distance over to the next visit).
Gradients are only computed when there is at least one first-order neighbor
to compare against. Ties in every argmax/argmin break toward the lowest
vertex id.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .network import (
    MODE_FIRST_ONLY,
    MODE_MIXED,
    MODE_ZERO_ONLY,
    MODES,
    OpCount,
    TraversalNetwork,
)

STEP_START = "start"
STEP_FIRST = "first"
STEP_ZERO = "zero"


class TraceStep(NamedTuple):
    vertex: int
    kind: str  # "start" for the initial entry, else "first" | "zero"


@dataclass
class TraversalOutcome:
    terminal: int
    trace: list[TraceStep]
    ops: OpCount
    converged: bool  # False iff a step cap was hit
    phase_two_skipped: bool = False  # traverse_101 only: no zero-order arcs


def approx_gradient(net: TraversalNetwork, i: int, x: np.ndarray,
                    ops: OpCount | None = None) -> np.ndarray:
    """Tangent descent direction U_i^T (x - q_i); charges D*d to the ledger."""
    g = net.vertices[i].basis.T @ (x - net.landmarks()[i])
    if ops is not None:
        ops.gradient_mults += net.ambient_dim * net.intrinsic_dim
    return g


def first_order_step(net: TraversalNetwork, i: int, g: np.ndarray,
                     ops: OpCount | None = None) -> int | None:
    """Neighbor whose embedding has the largest inner product with g.

    Returns None when i has no first-order neighbors or the best inner
    product is <= 0 (no neighbor points along the descent direction).
    Charges d multiplications per examined neighbor.
    """
    nbrs, emb = net.embedding_matrix(i)
    if not nbrs:
        return None
    if ops is not None:
        ops.edge_mults += net.intrinsic_dim * len(nbrs)
    scores = emb @ g
    best = int(np.argmax(scores))
    if scores[best] <= 0.0:
        return None
    return nbrs[best]


def zero_order_step(net: TraversalNetwork, i: int, x: np.ndarray,
                    ops: OpCount | None = None) -> int | None:
    """Outgoing zero-order arc head with the smallest distance to x, or None."""
    j, _ = _zero_order_pick(net, net.zero_order_neighbors(i), x, ops)
    return j


def _zero_order_pick(net, candidates, x, ops):
    if not candidates:
        return None, np.inf
    cand = np.asarray(candidates)
    diff = net.landmarks()[cand] - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    if ops is not None:
        ops.distance_mults += net.ambient_dim * len(candidates)
    best = int(np.argmin(d2))
    return int(cand[best]), float(d2[best])


def traverse(net: TraversalNetwork, x: np.ndarray, start: int = 0,
             mode: str | None = None, max_steps: int | None = None) -> TraversalOutcome:
    """Walk the network toward the vertex locally closest to x.

    Accepts a step only on strict decrease of ||q - x||, which makes the
    trace free of revisits and bounds its length by the vertex count; the
    step cap (default 10 * |Q|) therefore never binds and exists as a safety
    contract against malformed networks.
    """
    x = _check_query(net, x)
    mode = mode if mode is not None else net.config.mode
    if mode not in MODES:
        raise ValueError(f"unknown traversal mode {mode!r}")
    cap = _resolve_cap(net, max_steps)

    ops = OpCount()
    i = int(start)
    d2_here = net.squared_distance(i, x)
    ops.distance_mults += net.ambient_dim
    trace = [TraceStep(i, STEP_START)]
    converged = False

    for _ in range(cap):
        nxt, kind, d2_next = None, None, np.inf

        if mode in (MODE_MIXED, MODE_FIRST_ONLY):
            nbrs, _ = net.embedding_matrix(i)
            if nbrs:
                g = approx_gradient(net, i, x, ops)
                j = first_order_step(net, i, g, ops)
                if j is not None:
                    d2_j = net.squared_distance(j, x)
                    ops.distance_mults += net.ambient_dim
                    if d2_j < d2_here:
                        nxt, kind, d2_next = j, STEP_FIRST, d2_j

        if nxt is None and mode in (MODE_MIXED, MODE_ZERO_ONLY):
            if mode == MODE_ZERO_ONLY:
                cands = sorted(set(net.zero_order_neighbors(i))
                               | set(net.first_order_neighbors(i)))
            else:
                cands = net.zero_order_neighbors(i)
            j, d2_j = _zero_order_pick(net, cands, x, ops)
            if j is not None and d2_j < d2_here:
                nxt, kind, d2_next = j, STEP_ZERO, d2_j

        if nxt is None:
            converged = True
            break
        i, d2_here = nxt, d2_next
        trace.append(TraceStep(i, kind))

    ops.steps = len(trace) - 1
    return TraversalOutcome(terminal=i, trace=trace, ops=ops, converged=converged)


def first_order_step_projected(net: TraversalNetwork, i: int, x: np.ndarray,
                               ra: float, ops: OpCount | None = None) -> int:
    """Neighbor minimizing || clip(g, ra) - xi[i -> j] || over first-order edges.

    clip rescales g to norm ra when it is longer, else leaves it unchanged.
    Raises on an isolated vertex (the step rule assumes covering neighbors).
    """
    g = approx_gradient(net, i, x, ops)
    return _projected_pick(net, i, g, ra, ops)


def _projected_pick(net, i, g, ra, ops):
    nbrs, emb = net.embedding_matrix(i)
    if not nbrs:
        raise ValueError(f"vertex {i} has no first-order neighbors")
    norm = float(np.linalg.norm(g))
    clipped = g if norm <= ra else g * (ra / norm)
    resid = emb - clipped[None, :]
    scores = np.einsum("ij,ij->i", resid, resid)
    if ops is not None:
        ops.edge_mults += net.intrinsic_dim * len(nbrs)
    return nbrs[int(np.argmin(scores))]


def traverse_101(net: TraversalNetwork, x: np.ndarray, ra: float,
                 eps1: float, eps2: float, start: int = 0,
                 max_steps: int | None = None) -> TraversalOutcome:
    """Three-phase walk: gradient descent, one zero-order jump, refinement.

    Phase boundaries are recoverable from the single "zero" trace entry.
    When the intermediate vertex has no outgoing zero-order arcs the jump is
    skipped and the outcome is flagged (phase_two_skipped). Each descent
    phase is bounded by max_steps; converged reports whether both phases
    exited through their gradient-norm criterion.
    """
    if not (eps1 >= eps2 > 0):
        raise ValueError("need eps1 >= eps2 > 0")
    if not ra > 0:
        raise ValueError("need ra > 0")
    x = _check_query(net, x)
    cap = _resolve_cap(net, max_steps)

    ops = OpCount()
    trace = [TraceStep(int(start), STEP_START)]

    def descend(i, eps):
        for _ in range(cap):
            g = approx_gradient(net, i, x, ops)
            if float(np.linalg.norm(g)) <= eps:
                return i, True
            i = _projected_pick(net, i, g, ra, ops)
            trace.append(TraceStep(i, STEP_FIRST))
        return i, False

    i, phase1_ok = descend(int(start), eps1)

    skipped = False
    arcs = net.zero_order_neighbors(i)
    if arcs:
        j, _ = _zero_order_pick(net, arcs, x, ops)
        i = j
        trace.append(TraceStep(i, STEP_ZERO))
    else:
        skipped = True

    i, phase3_ok = descend(i, eps2)

    ops.steps = len(trace) - 1
    return TraversalOutcome(
        terminal=i,
        trace=trace,
        ops=ops,
        converged=phase1_ok and phase3_ok,
        phase_two_skipped=skipped,
    )


def denoise_at(net: TraversalNetwork, i: int, x: np.ndarray,
               ops: OpCount | None = None) -> np.ndarray:
    """Affine projection q_i + U_i U_i^T (x - q_i); charges 2*D*d."""
    v = net.vertices[i]
    if ops is not None:
        ops.gradient_mults += 2 * net.ambient_dim * net.intrinsic_dim
    return v.landmark + v.basis @ (v.basis.T @ (x - v.landmark))


def _check_query(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.ambient_dim,):
        raise ValueError(f"query has shape {x.shape}, expected ({net.ambient_dim},)")
    return x


def _resolve_cap(net, max_steps):
    if max_steps is not None:
        return int(max_steps)
    if net.config.max_traversal_steps is not None:
        return net.config.max_traversal_steps
    return 10 * max(1, net.num_vertices)
