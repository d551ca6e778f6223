"""Online growth of a traversal network from a stream of noisy samples.

Each incoming sample is routed by a mixed-order traversal of the current
network and lands in exactly one branch:

* inlier: the terminal landmark is within its acceptance radius; the sample
  is denoised by the local affine model and absorbed into it (running-mean
  landmark, streaming subspace update, embedding refresh).
* tunnel: the terminal stalled, but an exhaustive scan finds a landmark
  whose radius accepts the sample; a directed zero-order edge is recorded
  from the stall vertex to that landmark, which then absorbs the sample.
* new landmark: no landmark accepts the sample; it becomes a vertex of its
  own, connected to every landmark within the neighbor radius, with a
  tangent basis initialized from its neighbors (or randomly when isolated).

The exhaustive scan is a training-time device and is charged to a separate
ledger so test-time cost comparisons stay clean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkConfig, OpCount, TraversalNetwork, VertexModel
from .subspace import SubspaceState, ipca_update
from .traverse import MODE_MIXED, denoise_at, traverse

EVENT_INLIER = "inlier"
EVENT_TUNNEL = "tunnel"
EVENT_NEW_LANDMARK = "newLandmark"

_TANGENT_STREAM = 2  # Philox key lane for tangent initialization draws


@dataclass
class TrainEvent:
    kind: str
    vertex: int
    denoised: np.ndarray
    training_squared_error: float | None = None


@dataclass
class TelemetryRow:
    n: int
    running_mse: float | None
    num_landmarks: int
    num_first_order_edges: int
    num_zero_order_edges: int
    event_kind: str


@dataclass
class TrainResult:
    net: TraversalNetwork
    curve: list[tuple[int, float]]
    telemetry: list[TelemetryRow]
    traversal_ops: OpCount
    scan_mults: int
    event_counts: dict[str, int]


def denoising_radius(n_i: int, cfg: NetworkConfig, ambient_dim: int,
                     intrinsic_dim: int) -> float:
    """Acceptance radius of a landmark that has absorbed n_i samples.

    R^2 = c1 * (sigma^2 D + sigma^2 D / n_i^k + c2 * sigma^2 d), positive and
    nonincreasing in n_i. k = 0 gives a constant schedule.
    """
    if n_i < 1:
        raise ValueError("n_i must be >= 1")
    s2 = cfg.sigma * cfg.sigma
    r2 = cfg.radius_c1 * (
        s2 * ambient_dim
        + s2 * ambient_dim / float(n_i) ** cfg.radius_k
        + cfg.radius_c2 * s2 * intrinsic_dim
    )
    return math.sqrt(r2)


def initialize_tangent(net: TraversalNetwork, new_id: int,
                       rng: np.random.Generator) -> None:
    """Set the tangent basis of a freshly created landmark.

    With first-order neighbors present, the basis spans the top singular
    directions of the matrix of normalized neighbor offsets, padded with
    random orthonormal complement directions when there are fewer neighbors
    than tangent dimensions. Without neighbors the basis is a random
    orthonormal frame. Eigenvalues start at zero (no data mass yet) and the
    edge embeddings around the vertex are refreshed.
    """
    d = net.intrinsic_dim
    q = net.landmarks()[new_id]
    nbrs = net.first_order_neighbors(new_id)

    cols = []
    for j in nbrs:
        h = net.landmarks()[j] - q
        norm = np.linalg.norm(h)
        if norm > 0:
            cols.append(h / norm)

    if cols:
        h_mat = np.column_stack(cols)
        left, svals, _ = np.linalg.svd(h_mat, full_matrices=False)
        tol = max(h_mat.shape) * np.finfo(np.float64).eps * svals[0]
        rank = int(np.sum(svals > tol))
        width = min(d, rank)
        basis = left[:, :width]
        if len(cols) < d and width < d:
            basis = _pad_orthonormal(basis, d, rng)
    else:
        basis = _pad_orthonormal(np.empty((net.ambient_dim, 0)), d, rng)

    net.update_vertex(new_id, basis=basis, eigenvalues=np.zeros(basis.shape[1]))
    net.refresh_embeddings_around(new_id)


def _pad_orthonormal(basis, width, rng):
    """Append random orthonormal columns to reach the requested width."""
    d_amb = basis.shape[0]
    cols = [basis[:, j] for j in range(basis.shape[1])]
    while len(cols) < width:
        g = rng.standard_normal(d_amb)
        for c in cols:
            g -= (c @ g) * c
        norm = np.linalg.norm(g)
        if norm > 1e-12:
            cols.append(g / norm)
    return np.column_stack(cols) if cols else np.empty((d_amb, 0))


def update_local_model(net: TraversalNetwork, i: int, x: np.ndarray) -> None:
    """Absorb sample x into vertex i.

    Landmark moves to the running mean, the subspace state folds in the
    sample centered at the post-update landmark, the count increments, and
    the embeddings around i are refreshed. A sample coinciding with the
    landmark is absorbed without subspace information.
    """
    v = net.vertices[i]
    n = v.count
    q_new = (n * v.landmark + x) / (n + 1)
    centered = x - q_new
    state = SubspaceState(basis=v.basis, eigenvalues=v.eigenvalues, seen=n)
    if np.linalg.norm(centered) >= 1e-12 :
        state = ipca_update(state, centered, net.intrinsic_dim)
    net.update_vertex(i, landmark=q_new, basis=state.basis,
                      eigenvalues=state.eigenvalues, count=n + 1)
    net.refresh_embeddings_around(i)


class OnlineLearner:
    """Sequential trainer owning the evolving network and its RNG.

    debug=True keeps creation-time records for every zero-order and
    first-order edge (distances and radii at the moment of creation) so the
    edge rules can be audited after training.
    """

    def __init__(self, ambient_dim: int, intrinsic_dim: int, config: NetworkConfig,
                 seed: int = 0, warm_start: bool = False, debug: bool = False):
        self.net = TraversalNetwork(ambient_dim, intrinsic_dim, config)
        self.warm_start = warm_start
        self.traversal_ops = OpCount()
        self.scan_mults = 0
        self.debug = debug
        self.tunnel_log: list[dict] = []
        self.edge_log: list[dict] = []
        self._rng = np.random.Generator(np.random.Philox(key=[seed, _TANGENT_STREAM]))
        self._prev_terminal = 0

    def process(self, x: np.ndarray, clean: np.ndarray | None = None) -> TrainEvent:
        """Route one noisy sample; returns the branch taken and the denoised vector."""
        net = self.net
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (net.ambient_dim,):
            raise ValueError(
                f"sample has shape {x.shape}, expected ({net.ambient_dim},)")

        if net.num_vertices == 0:
            vid = self._create_landmark(x, np.empty(0))
            return self._finish(EVENT_NEW_LANDMARK, vid, x.copy(), clean)

        start = self._prev_terminal if self.warm_start else 0
        out = traverse(net, x, start=start, mode=MODE_MIXED)
        self.traversal_ops.merge(out.ops)
        i = out.terminal
        self._prev_terminal = i

        cfg = net.config
        dist_i = math.sqrt(net.squared_distance(i, x))
        if dist_i <= denoising_radius(net.vertices[i].count, cfg,
                                      net.ambient_dim, net.intrinsic_dim):
            xhat = denoise_at(net, i, x, self.traversal_ops)
            update_local_model(net, i, x)
            return self._finish(EVENT_INLIER, i, xhat, clean)

        # Exhaustive scan (training-time device, separate ledger).
        diff = net.landmarks() - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        self.scan_mults += net.ambient_dim * net.num_vertices
        i_star = int(np.argmin(d2))
        dist_star = math.sqrt(float(d2[i_star]))
        r_star = denoising_radius(net.vertices[i_star].count, cfg,
                                  net.ambient_dim, net.intrinsic_dim)

        if dist_star <= r_star:
            net.add_zero_order_edge(i, i_star)
            if self.debug:
                self.tunnel_log.append({
                    "from": i, "to": i_star, "dist_from": dist_i,
                    "dist_to": dist_star, "radius_to": r_star,
                })
            xhat = denoise_at(net, i_star, x, self.traversal_ops)
            update_local_model(net, i_star, x)
            self._prev_terminal = i_star
            return self._finish(EVENT_TUNNEL, i_star, xhat, clean)

        vid = self._create_landmark(x, d2)
        self._prev_terminal = vid
        return self._finish(EVENT_NEW_LANDMARK, vid, x.copy(), clean)

    def _create_landmark(self, x, d2_existing):
        net = self.net
        vid = net.add_vertex(VertexModel(
            landmark=x.copy(),
            basis=np.empty((net.ambient_dim, 0)),
            eigenvalues=np.empty(0),
            count=1,
        ))
        r2 = net.config.r_nbrs * net.config.r_nbrs
        for j in np.flatnonzero(d2_existing <= r2):
            net.connect_first_order(vid, int(j))
            if self.debug:
                self.edge_log.append({
                    "u": vid, "v": int(j),
                    "dist": math.sqrt(float(d2_existing[j])),
                    "r_nbrs": net.config.r_nbrs,
                })
        initialize_tangent(net, vid, self._rng)
        return vid

    @staticmethod
    def _finish(kind, vertex, xhat, clean):
        err = None
        if clean is not None:
            diff = xhat - np.asarray(clean, dtype=np.float64)
            err = float(diff @ diff)
        return TrainEvent(kind=kind, vertex=vertex, denoised=xhat,
                          training_squared_error=err)


def train(dataset, config: NetworkConfig, seed: int = 0, cadence: int = 1,
          warm_start: bool = False, debug: bool = False) -> TrainResult:
    """Run the online learner over a labeled dataset.

    dataset provides .noisy (n, D), .sigma and optionally .clean; the clean
    channel is used only to score the running training MSE, never by the
    learner. The curve holds (n, running MSE) at every cadence boundary and
    at the final sample, so its length is ceil(n / cadence).
    """
    noisy = np.asarray(dataset.noisy, dtype=np.float64)
    clean = getattr(dataset, "clean", None)
    if clean is not None:
        clean = np.asarray(clean, dtype=np.float64)
    n, ambient_dim = noisy.shape
    if n < 1:
        raise ValueError("dataset is empty")
    if cadence < 1:
        raise ValueError("cadence must be >= 1")

    intrinsic_dim = getattr(dataset, "intrinsic_dim_hint", None) or 2
    learner = OnlineLearner(ambient_dim, intrinsic_dim, config,
                            seed=seed, warm_start=warm_start, debug=debug)

    curve: list[tuple[int, float]] = []
    telemetry: list[TelemetryRow] = []
    counts = {EVENT_INLIER: 0, EVENT_TUNNEL: 0, EVENT_NEW_LANDMARK: 0}
    err_sum = 0.0

    for idx in range(n):
        row_clean = clean[idx] if clean is not None else None
        event = learner.process(noisy[idx], row_clean)
        counts[event.kind] += 1
        if event.training_squared_error is not None:
            err_sum += event.training_squared_error
        if (idx + 1) % cadence == 0 or idx == n - 1:
            running = err_sum / (idx + 1) if clean is not None else None
            if running is not None:
                curve.append((idx + 1, running))
            telemetry.append(TelemetryRow(
                n=idx + 1,
                running_mse=running,
                num_landmarks=learner.net.num_vertices,
                num_first_order_edges=learner.net.num_first_order_edges(),
                num_zero_order_edges=learner.net.num_zero_order_edges(),
                event_kind=event.kind,
            ))

    return TrainResult(
        net=learner.net,
        curve=curve,
        telemetry=telemetry,
        traversal_ops=learner.traversal_ops,
        scan_mults=learner.scan_mults,
        event_counts=counts,
    )
