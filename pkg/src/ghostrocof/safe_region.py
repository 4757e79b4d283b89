"""Safe regions as half-space intersections, membership and ray clipping."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dynamics import (SystemFreqParams, StateMatrix, average_rocof_coefficient,
                       build_state_matrix, system_freq_gdot0)
from .grid_model import ReducedNetwork

# a.phi with |a.phi| below this (relative to |a|) counts as parallel
PARALLEL_TOL = 1e-12
# chords shorter than this are treated as a miss
CHORD_TOL = 1e-9


@dataclass(frozen=True)
class HalfSpace:
    a: np.ndarray
    b: float
    node: int = -1
    time_index: int = -1
    sign: int = 0


@dataclass(frozen=True)
class RayHit:
    t1: float
    t2: float

    @property
    def chord(self) -> float:
        return self.t2 - self.t1


class Polytope:
    """``{u : H u <= b}`` with optional per-row tags ``(node, time_index, sign)``.

    Boundary points count as inside. Every row has ``b > 0``, so the origin is
    strictly interior.
    """

    def __init__(self, normals, bounds, node=None, time_index=None, sign=None, dim=None):
        H = np.asarray(normals, dtype=float)
        if H.size == 0:
            if dim is None:
                raise ValueError("dim is required for a polytope without half-spaces")
            H = H.reshape(0, dim)
        b = np.asarray(bounds, dtype=float).reshape(-1)
        if H.ndim != 2 or H.shape[0] != b.shape[0]:
            raise ValueError("normals must be (m, n) with one bound per row")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
            raise ValueError("half-spaces must be finite")
        norms = np.linalg.norm(H, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero normal vector")
        if np.any(b <= 0):
            raise ValueError("every bound must be positive (origin strictly inside)")
        m = H.shape[0]

        def tag(v, fill):
            return np.full(m, fill, dtype=int) if v is None else np.asarray(v, dtype=int).reshape(m)

        self.H = H
        self.b = b
        self.norms = norms
        self.node = tag(node, -1)
        self.time_index = tag(time_index, -1)
        self.sign = tag(sign, 0)
        for arr in (self.H, self.b, self.norms, self.node, self.time_index, self.sign):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def __len__(self) -> int:
        return self.H.shape[0]

    def half_spaces(self) -> Iterator[HalfSpace]:
        for k in range(len(self)):
            yield HalfSpace(self.H[k], float(self.b[k]), int(self.node[k]),
                            int(self.time_index[k]), int(self.sign[k]))

    @property
    def nodes(self) -> np.ndarray:
        return np.unique(self.node[self.node >= 0])

    def _vec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {u.shape[-1]}, region has {self.dim}")
        return u

    def contains(self, u) -> bool:
        u = self._vec(u)
        return bool(np.all(self.H @ u <= self.b))

    def contains_many(self, U) -> np.ndarray:
        U = np.atleast_2d(self._vec(U))
        return np.all(U @ self.H.T <= self.b, axis=1)

    def violated_rows(self, U) -> np.ndarray:
        U = np.atleast_2d(self._vec(U))
        return U @ self.H.T > self.b

    def clip_products(self, hx: np.ndarray, hphi: np.ndarray) -> RayHit | None:
        """Ray clip from precomputed ``H x`` and ``H phi``."""
        slack = self.b - hx
        par = np.abs(hphi) <= PARALLEL_TOL * self.norms
        if np.any(par & (slack < 0)):
            return None
        up = hphi > 0
        lo = ~up & ~par
        with np.errstate(divide="ignore"):
            t_up = slack[up] / hphi[up]
            t_lo = slack[lo] / hphi[lo]
        t2 = t_up.min() if t_up.size else np.inf
        t1 = max(t_lo.max() if t_lo.size else 0.0, 0.0)
        if not np.isfinite(t2) or t2 - t1 <= CHORD_TOL:
            # t2 = inf only for regions that are not ray-bounded; never shift by inf
            return None
        return RayHit(float(t1), float(t2))

    def ray_clip(self, x, phi) -> RayHit | None:
        x, phi = self._vec(x), self._vec(phi)
        if abs(np.linalg.norm(phi) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        hx = self.H @ x
        if np.all(hx <= self.b):
            raise ValueError("ray origin must lie outside the region")
        return self.clip_products(hx, self.H @ phi)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.H, self.b, self.node, self.time_index, self.sign):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "half_spaces": [
                {"a": self.H[k].tolist(), "b": float(self.b[k]),
                 "tag": [int(self.node[k]), int(self.time_index[k]), int(self.sign[k])]}
                for k in range(len(self))
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "Polytope":
        rows = d["half_spaces"]
        tags = np.array([r.get("tag", [-1, -1, 0]) for r in rows], dtype=int).reshape(-1, 3)
        return cls([r["a"] for r in rows], [r["b"] for r in rows],
                   tags[:, 0], tags[:, 1], tags[:, 2], dim=d["dim"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Polytope":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def concat(cls, parts: Sequence["Polytope"]) -> "Polytope":
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError("cannot intersect regions of different dimension")
        return cls(np.vstack([p.H for p in parts]), np.concatenate([p.b for p in parts]),
                   np.concatenate([p.node for p in parts]),
                   np.concatenate([p.time_index for p in parts]),
                   np.concatenate([p.sign for p in parts]), dim=dims.pop())


# --- builders ---------------------------------------------------------------

def _slab(n: int, bound: float) -> Polytope:
    one = np.ones(n)
    return Polytope([one, -one], [bound, bound], sign=[1, -1])


def build_K_MS(params: SystemFreqParams, r_max: float) -> Polytope:
    """Max system-RoCoF region: ``|sum u| <= r_max / |g'(0)|``."""
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    return _slab(len(params.ratings), r_max / system_freq_gdot0(params))


def build_K_AS(params: SystemFreqParams, r_max: float, eps: float) -> Polytope:
    """Average system-RoCoF region over ``[0, eps]``."""
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    coeff = average_rocof_coefficient(params, eps)
    if not coeff > 0:
        raise ValueError("average RoCoF coefficient must be positive")
    return _slab(len(params.ratings), eps * r_max / coeff)


def _as_state(net_or_sm) -> StateMatrix:
    return net_or_sm if isinstance(net_or_sm, StateMatrix) else build_state_matrix(net_or_sm)


def sample_times(N: int, eps: float) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be at least 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return np.array([k * eps / N for k in range(N + 1)])


def build_node_region(net: ReducedNetwork | StateMatrix, j: int, N: int, eps: float,
                      r_max_j: float) -> Polytope:
    """``|w'_j(k eps / N)| <= r_max_j`` for ``k = 0..N`` (``2(N+1)`` rows)."""
    return build_all_nodes_region(net, N, eps, r_max_j, nodes=[j])


def build_all_nodes_region(net: ReducedNetwork | StateMatrix, N: int, eps: float, r_max,
                           nodes: Sequence[int] | None = None) -> Polytope:
    """Intersection of node regions. ``r_max`` is a scalar or one value per node;
    infinite thresholds contribute no rows. Rows are grouped by node."""
    sm = _as_state(net)
    n = sm.n
    times = sample_times(N, eps)
    r = np.broadcast_to(np.asarray(r_max, dtype=float), (n,))
    if np.any(~(r > 0)):
        raise ValueError("r_max must be positive")
    nodes = list(range(n)) if nodes is None else list(nodes)
    for j in nodes:
        if not 0 <= j < n:
            raise IndexError(f"node {j} out of range")
    rows = np.stack([sm.rocof_rows(t) for t in times])  # (N+1, n, n)
    H, b, node, tidx, sign = [], [], [], [], []
    for j in nodes:
        if np.isinf(r[j]):
            continue
        for k in range(len(times)):
            a = rows[k, j]
            for s in (1, -1):
                H.append(s * a)
                b.append(r[j])
                node.append(j)
                tidx.append(k)
                sign.append(s)
    return Polytope(np.array(H).reshape(-1, n), b, node, tidx, sign, dim=n)


def contains(P: Polytope, u) -> bool:
    return P.contains(u)


def violation_matrix(P: Polytope, U, n_nodes: int | None = None, chunk: int = 4096) -> np.ndarray:
    """Boolean ``(samples, nodes)``: node j has a violated tagged half-space."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n_nodes = P.dim if n_nodes is None else n_nodes
    out = np.zeros((U.shape[0], n_nodes), dtype=bool)
    tagged = P.node >= 0
    node = P.node[tagged]
    H, b = P.H[tagged], P.b[tagged]
    onehot = np.zeros((node.size, n_nodes))
    onehot[np.arange(node.size), node] = 1.0
    for s in range(0, U.shape[0], chunk):
        viol = (U[s:s + chunk] @ H.T) > b
        out[s:s + chunk] = (viol.astype(float) @ onehot) > 0
    return out


def violating_nodes(P: Polytope, u) -> set[int]:
    u = np.asarray(u, dtype=float)
    if u.shape != (P.dim,):
        raise ValueError(f"point has dimension {u.size}, region has {P.dim}")
    return set(np.flatnonzero(violation_matrix(P, u[None, :])[0]).tolist())


def ray_clip(P, x, phi) -> RayHit | None:
    return P.ray_clip(x, phi)


def _direction(x, y):
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = float(np.linalg.norm(d))
    return d, r


def outside_length(P, x, r: float, phi) -> float:
    """Length of ``[x, x + r phi]`` lying outside ``P``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    hit = P.ray_clip(x, phi)
    if hit is None:
        return float(r)
    overlap = max(0.0, min(r, hit.t2) - min(r, hit.t1))
    return float(r - overlap)


def ghost_map_T(P, x, y) -> np.ndarray:
    """Contract the ray from ``x`` through ``y`` by its intersection with ``P``."""
    x = np.asarray(x, dtype=float)
    d, r = _direction(x, y)
    if r == 0:
        return x.copy()
    phi = d / r
    return x + outside_length(P, x, r, phi) * phi
