"""Core graph structure: vertex models, edges, cached embeddings, serialization.

A traversal network is a geometric graph over landmarks in R^D. Every vertex
carries a local affine model: the landmark itself, an orthonormal tangent
basis (D x l, l <= d), the eigenvalues of the local scatter estimate, and the
number of samples absorbed. Undirected first-order edges carry one cached
embedding per direction, xi[u -> v] = U_u^T (q_v - q_u), expressed in u's
tangent coordinates. Zero-order edges are directed and carry nothing.

Mutations are single-writer (the online learner is order dependent). A frozen
network may be queried from any number of threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-8
SERIALIZATION_VERSION = 1

MODE_MIXED = "mixed"
MODE_FIRST_ONLY = "first-order-only"
MODE_ZERO_ONLY = "zero-order-only"
MODES = (MODE_MIXED, MODE_FIRST_ONLY, MODE_ZERO_ONLY)


@dataclass
class OpCount:
    """Multiplication ledger, split by cost center.

    gradient_mults counts tangent projections (D*d per gradient, 2*D*d per
    affine denoising projection), edge_mults counts tangent-space edge
    comparisons (d per examined neighbor), distance_mults counts ambient
    squared-distance evaluations (D each).  steps counts accepted moves.
    """

    gradient_mults: int = 0
    edge_mults: int = 0
    distance_mults: int = 0
    steps: int = 0

    def total(self) -> int:
        return self.gradient_mults + self.edge_mults + self.distance_mults

    def merge(self, other: "OpCount") -> None:
        self.gradient_mults += other.gradient_mults
        self.edge_mults += other.edge_mults
        self.distance_mults += other.distance_mults
        self.steps += other.steps


@dataclass(frozen=True)
class NetworkConfig:
    """Hyperparameters of a traversal network.

    sigma is the noise standard deviation, r_nbrs the first-order connection
    radius in ambient units. radius_c1, radius_c2, radius_k parameterize the
    sample-count-dependent denoising radius
    R(N)^2 = c1 * (sigma^2 D + sigma^2 D / N^k + c2 sigma^2 d).
    max_traversal_steps None means 10 * |Q|, resolved at traversal time.
    """

    sigma: float
    r_nbrs: float
    radius_c1: float = 1.0
    radius_c2: float = 1.0
    radius_k: float = 1.0
    max_traversal_steps: int | None = None
    mode: str = MODE_MIXED

    def __post_init__(self):
        if not self.r_nbrs > 0:
            raise ValueError(f"r_nbrs must be positive, got {self.r_nbrs}")
        if not self.radius_c1 > 0:
            raise ValueError(f"radius_c1 must be positive, got {self.radius_c1}")
        if self.radius_k < 0:
            raise ValueError(f"radius_k must be nonnegative, got {self.radius_k}")
        if self.max_traversal_steps is not None and self.max_traversal_steps < 1:
            raise ValueError("max_traversal_steps must be >= 1 when given")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class VertexModel:
    """Local affine model at one landmark.

    landmark: (D,) position. basis: (D, l) column-orthonormal, l <= d.
    eigenvalues: (l,) nonincreasing, nonnegative. count: samples absorbed.
    """

    landmark: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    count: int = 1

    def __post_init__(self):
        self.landmark = np.asarray(self.landmark, dtype=np.float64)
        self.basis = np.asarray(self.basis, dtype=np.float64)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if self.basis.ndim != 2:
            raise ValueError("basis must be a 2-d array (D, l)")
        if self.basis.shape[0] != self.landmark.shape[0]:
            raise ValueError("basis rows must match landmark length")
        if self.eigenvalues.shape != (self.basis.shape[1],):
            raise ValueError("eigenvalues length must match basis width")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        l = self.basis.shape[1]
        if l > 0:
            gram = self.basis.T @ self.basis
            if np.linalg.norm(gram - np.eye(l)) > ORTHO_TOL:
                raise ValueError("basis columns are not orthonormal")
        if np.any(np.diff(self.eigenvalues) > 0):
            raise ValueError("eigenvalues must be nonincreasing")
        if np.any(self.eigenvalues < 0):
            raise ValueError("eigenvalues must be nonnegative")


class TraversalNetwork:
    """Landmarks, tangent models, first-/zero-order adjacency, cached embeddings.

    Vertex ids are dense indices in insertion order. First-order adjacency is
    symmetric as a vertex relation; embeddings are cached per directed arc and
    refreshed by the mutating caller via refresh_embeddings_around. Zero-order
    adjacency is directed, without self-loops.
    """

    def __init__(self, ambient_dim: int, intrinsic_dim: int, config: NetworkConfig):
        if intrinsic_dim < 1 or ambient_dim < intrinsic_dim:
            raise ValueError("need 1 <= intrinsic_dim <= ambient_dim")
        self.ambient_dim = int(ambient_dim)
        self.intrinsic_dim = int(intrinsic_dim)
        self.config = config
        self.vertices: list[VertexModel] = []
        self._nbrs1: list[list[int]] = []   # sorted neighbor ids per vertex
        self._emb1: list[np.ndarray] = []   # (deg, l_i) rows aligned with _nbrs1
        self._nbrs0: list[list[int]] = []   # sorted outgoing arc heads
        self._q = np.empty((0, self.ambient_dim), dtype=np.float64)

    # -- queries ----------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def num_first_order_edges(self) -> int:
        return sum(len(n) for n in self._nbrs1) // 2

    def num_zero_order_edges(self) -> int:
        return sum(len(n) for n in self._nbrs0)

    def landmarks(self) -> np.ndarray:
        """(num_vertices, D) view of all landmarks; do not mutate."""
        return self._q[: len(self.vertices)]

    def first_order_neighbors(self, i: int) -> list[int]:
        return self._nbrs1[i]

    def zero_order_neighbors(self, i: int) -> list[int]:
        return self._nbrs0[i]

    def embedding_matrix(self, i: int) -> tuple[list[int], np.ndarray]:
        """Neighbor ids of i and the matching (deg, l_i) embedding rows."""
        return self._nbrs1[i], self._emb1[i]

    def edge_embedding(self, u: int, v: int) -> np.ndarray:
        idx = self._nbrs1[u].index(v)
        return self._emb1[u][idx]

    def squared_distance(self, i: int, x: np.ndarray) -> float:
        diff = self._q[i] - x
        return float(diff @ diff)

    # -- mutations --------------------------------------------------------

    def add_vertex(self, model: VertexModel) -> int:
        if model.landmark.shape[0] != self.ambient_dim:
            raise ValueError(
                f"landmark has length {model.landmark.shape[0]}, "
                f"expected {self.ambient_dim}"
            )
        vid = len(self.vertices)
        self.vertices.append(model)
        self._nbrs1.append([])
        self._emb1.append(np.empty((0, model.basis.shape[1])))
        self._nbrs0.append([])
        if vid >= self._q.shape[0]:
            grown = np.empty((max(8, 2 * self._q.shape[0]), self.ambient_dim))
            grown[: self._q.shape[0]] = self._q
            self._q = grown
        self._q[vid] = model.landmark
        return vid

    def connect_first_order(self, u: int, v: int) -> None:
        """Record the undirected edge u <-> v and cache both embeddings.

        The caller is responsible for the radius rule; this only records.
        """
        self._check_vertex(u)
        self._check_vertex(v)
        if u == v:
            raise ValueError(f"self-loop {u} <-> {v} rejected")
        if v in self._nbrs1[u]:
            raise ValueError(f"duplicate first-order edge {u} <-> {v}")
        self._insert_neighbor(u, v)
        self._insert_neighbor(v, u)

    def add_zero_order_edge(self, tail: int, head: int) -> None:
        """Record the directed arc tail -> head; re-adding is a no-op."""
        self._check_vertex(tail)
        self._check_vertex(head)
        if tail == head:
            raise ValueError(f"zero-order self-loop at {tail} rejected")
        arcs = self._nbrs0[tail]
        if head in arcs:
            return
        arcs.append(head)
        arcs.sort()

    def update_vertex(self, i, landmark=None, basis=None, eigenvalues=None, count=None):
        """Replace local-model fields of vertex i (embeddings NOT refreshed)."""
        self._check_vertex(i)
        v = self.vertices[i]
        self.vertices[i] = VertexModel(
            landmark=v.landmark if landmark is None else landmark,
            basis=v.basis if basis is None else basis,
            eigenvalues=v.eigenvalues if eigenvalues is None else eigenvalues,
            count=v.count if count is None else count,
        )
        if landmark is not None:
            self._q[i] = self.vertices[i].landmark

    def refresh_embeddings_around(self, i: int) -> None:
        """Recompute xi[i -> j] for all neighbors j, and xi[j -> i] at each j.

        Must be called after the landmark or basis of i changed; it restores
        the embedding invariant at i and at every neighbor of i.
        """
        self._check_vertex(i)
        nbrs = self._nbrs1[i]
        qi = self._q[i]
        ui = self.vertices[i].basis
        if nbrs:
            diff = self._q[np.asarray(nbrs)] - qi
            self._emb1[i] = diff @ ui
        else:
            self._emb1[i] = np.empty((0, ui.shape[1]))
        for j in nbrs:
            idx = self._nbrs1[j].index(i)
            uj = self.vertices[j].basis
            self._emb1[j][idx] = uj.T @ (qi - self._q[j])

    # -- serialization ----------------------------------------------------

    def to_json_bytes(self) -> bytes:
        cfg = self.config
        doc = {
            "version": SERIALIZATION_VERSION,
            "ambientDim": self.ambient_dim,
            "intrinsicDim": self.intrinsic_dim,
            "config": {
                "sigma": float(cfg.sigma),
                "rNbrs": float(cfg.r_nbrs),
                "radiusC1": float(cfg.radius_c1),
                "radiusC2": float(cfg.radius_c2),
                "radiusK": float(cfg.radius_k),
                "maxTraversalSteps": cfg.max_traversal_steps,
                "mode": cfg.mode,
            },
            "vertices": [
                {
                    "landmark": [float(x) for x in v.landmark],
                    "basis": [[float(x) for x in col] for col in v.basis.T],
                    "eigenvalues": [float(x) for x in v.eigenvalues],
                    "count": int(v.count),
                }
                for v in self.vertices
            ],
            "firstOrder": [
                {"u": u, "v": v}
                for u in range(self.num_vertices)
                for v in self._nbrs1[u]
                if u < v
            ],
            "zeroOrder": [
                {"from": u, "to": v}
                for u in range(self.num_vertices)
                for v in self._nbrs0[u]
            ],
        }
        return (json.dumps(doc, separators=(",", ":")) + "\n").encode("ascii")

    def save_json(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_json_bytes())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TraversalNetwork":
        if doc.get("version") != SERIALIZATION_VERSION:
            raise ValueError(f"unsupported network version {doc.get('version')!r}")
        for key in ("ambientDim", "intrinsicDim", "config", "vertices"):
            if key not in doc:
                raise ValueError(f"network document missing field {key!r}")
        c = doc["config"]
        cfg = NetworkConfig(
            sigma=c["sigma"],
            r_nbrs=c["rNbrs"],
            radius_c1=c["radiusC1"],
            radius_c2=c["radiusC2"],
            radius_k=c["radiusK"],
            max_traversal_steps=c["maxTraversalSteps"],
            mode=c["mode"],
        )
        net = cls(doc["ambientDim"], doc["intrinsicDim"], cfg)
        for entry in doc["vertices"]:
            basis = np.array(entry["basis"], dtype=np.float64).T
            if basis.size == 0:
                basis = basis.reshape(net.ambient_dim, 0)
            net.add_vertex(
                VertexModel(
                    landmark=np.array(entry["landmark"], dtype=np.float64),
                    basis=basis,
                    eigenvalues=np.array(entry["eigenvalues"], dtype=np.float64),
                    count=entry["count"],
                )
            )
        for e in doc.get("firstOrder", []):
            net.connect_first_order(e["u"], e["v"])
        for e in doc.get("zeroOrder", []):
            net.add_zero_order_edge(e["from"], e["to"])
        return net

    @classmethod
    def load_json(cls, path) -> "TraversalNetwork":
        with open(path, "rb") as fh:
            doc = json.loads(fh.read())
        return cls.from_json_dict(doc)

    # -- diagnostics ------------------------------------------------------

    def max_embedding_error(self) -> float:
        """Largest deviation of any cached embedding from its defining formula."""
        worst = 0.0
        for u in range(self.num_vertices):
            uu = self.vertices[u].basis
            for idx, v in enumerate(self._nbrs1[u]):
                exact = uu.T @ (self._q[v] - self._q[u])
                err = np.linalg.norm(self._emb1[u][idx] - exact)
                worst = max(worst, float(err))
        return worst

    # -- internals --------------------------------------------------------

    def _check_vertex(self, i: int) -> None:
        if not 0 <= i < len(self.vertices):
            raise ValueError(f"vertex id {i} out of range (have {len(self.vertices)})")

    def _insert_neighbor(self, u: int, v: int) -> None:
        nbrs = self._nbrs1[u]
        xi = self.vertices[u].basis.T @ (self._q[v] - self._q[u])
        pos = int(np.searchsorted(np.asarray(nbrs), v)) if nbrs else 0
        nbrs.insert(pos, v)
        if len(nbrs) == 1:
            self._emb1[u] = xi[None, :].copy()
        else:
            self._emb1[u] = np.insert(self._emb1[u], pos, xi, axis=0)
