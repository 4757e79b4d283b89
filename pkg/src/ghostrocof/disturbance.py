"""Joint disturbance densities (unnormalised log-densities only)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .grid_model import ReducedNetwork


@dataclass(frozen=True)
class IndependentGaussian:
    indices: tuple[int, ...]
    stds: tuple[float, ...]
    means: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.indices) != len(self.stds):
            raise ValueError("one std-dev per index")
        if any(not s > 0 for s in self.stds):
            raise ValueError("std-devs must be positive")
        object.__setattr__(self, "_idx", np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "_inv", 1.0 / np.asarray(self.stds, dtype=float))
        mu = np.zeros(len(self.indices)) if self.means is None else np.asarray(self.means, float)
        object.__setattr__(self, "_mu", mu)

    def log_density(self, u: np.ndarray) -> float:
        z = (u[self._idx] - self._mu) * self._inv
        return -0.5 * float(z @ z)

    def grad(self, u: np.ndarray) -> np.ndarray:
        g = np.zeros_like(u)
        g[self._idx] = -(u[self._idx] - self._mu) * self._inv ** 2
        return g

    def to_dict(self) -> dict:
        d = {"type": "gaussian", "indices": list(self.indices), "stds": list(self.stds)}
        if self.means is not None:
            d["means"] = list(self.means)
        return d


@dataclass(frozen=True)
class HeavyTailedPair:
    """``[1 + (s (u_i - c u_j))^p]^-1 [1 + (s (u_j - c u_i))^p]^-1``."""

    i: int
    j: int
    scale: float = 30.0
    exponent: float = 4.0
    coupling: float = 0.5

    @property
    def indices(self) -> tuple[int, int]:
        return (self.i, self.j)

    def _args(self, u):
        a = self.scale * (u[self.i] - self.coupling * u[self.j])
        b = self.scale * (u[self.j] - self.coupling * u[self.i])
        return a, b

    def log_density(self, u: np.ndarray) -> float:
        a, b = self._args(u)
        p = self.exponent
        return -math.log1p(abs(a) ** p) - math.log1p(abs(b) ** p)

    def grad(self, u: np.ndarray) -> np.ndarray:
        a, b = self._args(u)
        p, s, c = self.exponent, self.scale, self.coupling

        def dlog(x):  # d/dx of -log(1 + |x|^p)
            return -p * np.sign(x) * abs(x) ** (p - 1) / (1 + abs(x) ** p)

        da, db = dlog(a), dlog(b)
        g = np.zeros_like(u)
        g[self.i] = s * da - s * c * db
        g[self.j] = -s * c * da + s * db
        return g

    def to_dict(self) -> dict:
        return {"type": "heavy_tailed_pair", "indices": [self.i, self.j], "scale": self.scale,
                "exponent": self.exponent, "coupling": self.coupling}


Block = Union[IndependentGaussian, HeavyTailedPair]


@dataclass(frozen=True)
class DensityModel:
    blocks: tuple[Block, ...]
    dim: int

    def __post_init__(self):
        seen = sorted(i for blk in self.blocks for i in blk.indices)
        if seen != list(range(self.dim)):
            raise ValueError("blocks must partition the coordinates 0..dim-1")

    def log_density(self, u) -> float:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ValueError(f"point has dimension {u.size}, model has {self.dim}")
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("non-finite disturbance")
        return sum(blk.log_density(u) for blk in self.blocks)

    def grad_log_density(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return sum(blk.grad(u) for blk in self.blocks)

    def proposal_blocks(self) -> tuple[tuple[int, ...], ...]:
        """Coordinate groups of the density factors, usable as sampler blocks."""
        return tuple(tuple(int(i) for i in blk.indices) for blk in self.blocks)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "blocks": [blk.to_dict() for blk in self.blocks]}

    @classmethod
    def from_dict(cls, d) -> "DensityModel":
        blocks = []
        for b in d["blocks"]:
            kind = b["type"]
            if kind == "gaussian":
                blocks.append(IndependentGaussian(tuple(b["indices"]), tuple(b["stds"]),
                                                  tuple(b["means"]) if "means" in b else None))
            elif kind == "heavy_tailed_pair":
                i, j = b["indices"]
                blocks.append(HeavyTailedPair(i, j, b.get("scale", 30.0), b.get("exponent", 4.0),
                                              b.get("coupling", 0.5)))
            else:
                raise ValueError(f"unknown density block type {kind!r}")
        return cls(tuple(blocks), int(d["dim"]))


def gaussian_model(stds: Sequence[float]) -> DensityModel:
    return DensityModel((IndependentGaussian(tuple(range(len(stds))), tuple(stds)),), len(stds))


def make_case_study_model(net: ReducedNetwork, divisor: float = 65.0) -> DensityModel:
    """Heavy-tailed correlated pair on the first two generators, independent
    zero-mean Gaussians (std = nominal injection / ``divisor``, p.u.) elsewhere."""
    if net.n < 3:
        raise ValueError("case-study model needs at least 3 generators")
    stds = tuple(float(p) / divisor for p in net.p_nom_pu[2:])
    return DensityModel(
        (HeavyTailedPair(0, 1), IndependentGaussian(tuple(range(2, net.n)), stds)), net.n)
