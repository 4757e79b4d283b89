"""Ghost-proposal Metropolis-Hastings on the complement of a safe region.

A symmetric Gaussian random-walk proposal ``Y`` from ``X`` is pushed through the
region along the ray ``X -> Y`` by the chord length ``t2 - t1`` whenever ``Y``
lies at or beyond the entry point. The resulting proposal density is symmetric
on the complement, so acceptance reduces to the target-density ratio.

Regions only need ``contains(u)`` and ``ray_clip(x, phi)``; :class:`Polytope`
gets a faster path that reuses ``H x`` between steps.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .disturbance import DensityModel
from .safe_region import Polytope, RayHit, outside_length

log = logging.getLogger(__name__)

INVERSE_TOL = 1e-9


class SearchError(RuntimeError):
    """No point outside the region could be found."""


@dataclass(frozen=True)
class SamplerConfig:
    sigma: float | tuple[float, ...] = 1.0
    n_samples: int = 10_000
    burn_in: int = 10_000
    seed: int = 0
    target_acceptance: float = 0.15
    tolerance: float = 0.03
    window: int = 200
    factor: float = 1.1
    adapt: bool = True
    x0: tuple[float, ...] | None = None
    check_inverse: bool = False
    # coordinate subsets for random-scan proposals; None = full dimension only
    blocks: tuple[tuple[int, ...], ...] | None = None
    # step multipliers drawn uniformly per proposal; a mixture of isotropic
    # Gaussians is still isotropic, so the ghost shift stays exact
    scales: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not np.all(np.asarray(self.sigma, dtype=float) > 0):
            raise ValueError("sigma must be positive")
        if self.blocks is not None and np.ndim(self.sigma) and len(self.sigma) != len(self.blocks):
            raise ValueError("one sigma per block")
        if self.burn_in < 0 or self.n_samples < 0:
            raise ValueError("burn_in and n_samples must be non-negative")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target acceptance must lie in (0, 1)")
        if self.window < 1 or not self.factor > 1:
            raise ValueError("window must be >= 1 and factor > 1")
        if not self.scales or not all(c > 0 for c in self.scales):
            raise ValueError("scales must be a nonempty list of positive numbers")


@dataclass
class ChainState:
    x: np.ndarray
    log_pi: float
    steps: int = 0
    accepted: int = 0
    shifted: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0


@dataclass
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    sigma: float | list[float]
    sigma_history: list
    burn_in_acceptance: float
    shift_rate: float
    x0: np.ndarray
    seed: int
    chain: int = 0

    def manifest(self) -> dict:
        return {
            "chain": self.chain,
            "seed": self.seed,
            "sigma": self.sigma,
            "acceptance_rate": self.acceptance_rate,
            "burn_in_acceptance": self.burn_in_acceptance,
            "shift_rate": self.shift_rate,
            "n_samples": int(self.samples.shape[0]),
            "x0": self.x0.tolist(),
            "sigma_history": self.sigma_history,
        }


def srwm_propose(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    return x + sigma * rng.standard_normal(x.shape)


def ghost_shift(region, x, y) -> tuple[np.ndarray, RayHit | None]:
    """Map a raw proposal ``y`` to the ghost proposal ``z``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    r = float(np.linalg.norm(d))
    if r == 0:
        raise ValueError("proposal coincides with the current state")
    phi = d / r
    hit = region.ray_clip(x, phi)
    if hit is not None and r >= hit.t1:
        return y + hit.chord * phi, hit
    return y, hit


class _Kernel:
    """Sequential ghost-MH transitions owning one RNG and one current state.

    With ``blocks`` each step picks a block uniformly at random and perturbs only
    those coordinates, with that block's own step scale.
    """

    def __init__(self, region, model: DensityModel, x0, sigma,
                 rng: np.random.Generator, check_inverse: bool = False, blocks=None,
                 scales=(1.0,)):
        self.region = region
        self.scales = np.asarray(scales, dtype=float)
        self.model = model
        self.rng = rng
        self.check_inverse = check_inverse
        self._poly = isinstance(region, Polytope)
        self.blocks = [np.asarray(b, dtype=int) for b in blocks] if blocks else None
        nb = len(self.blocks) if self.blocks else 1
        self.sigmas = np.array(np.broadcast_to(np.asarray(sigma, dtype=float), (nb,)))
        self.last_block = 0
        x0 = np.asarray(x0, dtype=float)
        if region.contains(x0):
            raise ValueError("initial state lies inside the safe region")
        self.state = ChainState(x0.copy(), model.log_density(x0))
        if self._poly:
            self._hx = region.H @ x0

    @property
    def sigma(self):
        return float(self.sigmas[0]) if self.sigmas.size == 1 else self.sigmas.tolist()

    def step(self) -> bool:
        st = self.state
        n = st.x.size
        while True:
            if self.blocks is None:
                b = 0
                e = self.rng.standard_normal(n)
            else:
                b = int(self.rng.integers(len(self.blocks)))
                idx = self.blocks[b]
                e = np.zeros(n)
                e[idx] = self.rng.standard_normal(idx.size)
            norm = math.sqrt(float(e @ e))
            if norm > 0:
                break
        self.last_block = b
        sigma = self.sigmas[b]
        if self.scales.size > 1:
            sigma *= self.scales[self.rng.integers(self.scales.size)]
        r = sigma * norm
        phi = e / norm
        y = st.x + sigma * e

        if self._poly:
            hphi = self.region.H @ phi
            hit = self.region.clip_products(self._hx, hphi)
        else:
            hit = self.region.ray_clip(st.x, phi)
        if hit is not None and r >= hit.t1:
            s = r + hit.chord
            z = y + hit.chord * phi
            st.shifted += 1
            if self.check_inverse:
                back = st.x + outside_length(self.region, st.x, s, phi) * phi
                if np.linalg.norm(back - y) > INVERSE_TOL * max(1.0, float(np.linalg.norm(y))):
                    raise AssertionError("ghost map does not invert the shift")
        else:
            s = r
            z = y
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite proposal")

        if self._poly:
            inside = bool(np.all(self._hx + s * hphi <= self.region.b))
        else:
            inside = self.region.contains(z)
        u = self.rng.random()
        st.steps += 1
        if inside:
            return False
        lp = self.model.log_density(z)
        if u < math.exp(min(0.0, lp - st.log_pi)):
            if self._poly:
                hz = self.region.H @ z
                if np.all(hz <= self.region.b):  # rounding put z on the boundary
                    return False
                self._hx = hz
            st.x = z
            st.log_pi = lp
            st.accepted += 1
            return True
        return False


def ghost_step(state: ChainState, region, model: DensityModel, sigma: float,
               rng: np.random.Generator) -> ChainState:
    """One ghost-MH transition; returns the updated state (a new object)."""
    k = _Kernel(region, model, state.x, sigma, rng)
    k.state.steps, k.state.accepted, k.state.shifted = state.steps, state.accepted, state.shifted
    k.step()
    return k.state


def ghost_density(region, x, y, sigma: float = 1.0) -> float:
    """Ghost proposal density ``q_K(x, y)`` for an isotropic Gaussian base ``N(0, sigma^2 I)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if region.contains(y):
        return 0.0
    n = x.size
    d = y - x
    r = float(np.linalg.norm(d))
    if r == 0:
        l, ratio = 0.0, 1.0
    else:
        l = outside_length(region, x, r, d / r)
        ratio = l / r
    q = (2 * math.pi * sigma ** 2) ** (-n / 2) * math.exp(-0.5 * l * l / sigma ** 2)
    return q * ratio ** (n - 1)


def full_acceptance(region, model: DensityModel, x, z, sigma: float = 1.0) -> float:
    """Metropolis-Hastings acceptance with the ghost density kept in the ratio."""
    if region.contains(z):
        return 0.0
    den = math.exp(model.log_density(x)) * ghost_density(region, x, z, sigma)
    if den == 0:
        return 1.0
    num = math.exp(model.log_density(z)) * ghost_density(region, z, x, sigma)
    return min(1.0, num / den)


def find_initial_state(region, model: DensityModel | None = None, margin: float = 1e-6,
                       max_doublings: int = 100) -> np.ndarray:
    """A point strictly outside ``region``.

    For a polytope, step just past each facet along its normal and keep the
    candidate with the highest target density (nearest facet if no model).
    Other regions: double the radius along the coordinate axes.
    """
    if isinstance(region, Polytope):
        if len(region) == 0:
            raise SearchError("region has no half-spaces: its complement is empty")
        dist = region.b / region.norms
        dirs = region.H / region.norms[:, None]
        order = np.argsort(dist, kind="stable")
        best, best_lp = None, -math.inf
        for k in order:
            step = margin * max(1.0, dist[k])
            for _ in range(max_doublings):
                cand = (dist[k] + step) * dirs[k]
                if not region.contains(cand):
                    break
                step *= 2
            else:
                continue
            if model is None:
                return cand
            lp = model.log_density(cand)
            if lp > best_lp:
                best, best_lp = cand, lp
        if best is None:
            raise SearchError("no facet exit found")
        return best

    dim = model.dim if model is not None else getattr(region, "dim", None)
    if dim is None:
        raise SearchError("cannot infer dimension of the region")
    radius = 1.0
    for _ in range(max_doublings):
        for i in range(dim):
            for s in (1.0, -1.0):
                cand = np.zeros(dim)
                cand[i] = s * radius
                if not region.contains(cand):
                    return cand
        radius *= 2
    raise SearchError(f"no exit found after {max_doublings} doublings")


def _burn_in(kernel: _Kernel, config: SamplerConfig) -> tuple[list, float]:
    """Nudge each block's sigma by ``factor`` after every ``window`` of its own
    proposals, up when acceptance beat the target and down otherwise.

    The sign rule keeps sigma hovering around the target instead of parking
    anywhere inside ``target +- tolerance``. The frozen sigma is the geometric
    mean of each block's values over the second half of burn-in, counted only
    once that block has changed direction (so a long initial climb is skipped).

    Returns the sigma history and the acceptance over the last quarter of burn-in.
    """
    nb = kernel.sigmas.size
    history = [kernel.sigma]
    trail = [[] for _ in range(nb)]
    last_dir = np.zeros(nb)
    settled = np.zeros(nb, dtype=bool)
    tried = np.zeros(nb, dtype=int)
    acc_w = np.zeros(nb, dtype=int)
    half = config.burn_in // 2
    tail_start = config.burn_in - config.burn_in // 4
    tail_acc = 0
    for i in range(config.burn_in):
        acc = kernel.step()
        b = kernel.last_block
        tried[b] += 1
        acc_w[b] += acc
        if i >= tail_start:
            tail_acc += acc
        if config.adapt and tried[b] == config.window:
            up = acc_w[b] / config.window > config.target_acceptance
            kernel.sigmas[b] *= config.factor if up else 1 / config.factor
            direction = 1.0 if up else -1.0
            settled[b] |= last_dir[b] == -direction
            last_dir[b] = direction
            if settled[b] and i >= half:
                trail[b].append(kernel.sigmas[b])
            history.append(kernel.sigma)
            tried[b] = acc_w[b] = 0
    for b in range(nb):
        if trail[b]:
            kernel.sigmas[b] = float(np.exp(np.mean(np.log(trail[b]))))
    if config.adapt and any(trail):
        history.append(kernel.sigma)
    n_tail = config.burn_in - tail_start
    return history, (tail_acc / n_tail if n_tail else float("nan"))


def tune_step_size(region, model: DensityModel, config: SamplerConfig):
    """Burn-in with multiplicative step-size adaptation; returns the tuned sigma
    (a list when proposals are blocked)."""
    rng = np.random.default_rng(config.seed)
    x0 = np.asarray(config.x0) if config.x0 is not None else find_initial_state(region, model)
    k = _Kernel(region, model, x0, config.sigma, rng, blocks=config.blocks,
                scales=config.scales)
    _burn_in(k, config)
    return k.sigma


def run_chain(region, model: DensityModel, config: SamplerConfig,
              seed: int | np.random.SeedSequence | None = None, chain: int = 0) -> ChainResult:
    """Burn-in (with sigma adaptation), then ``n_samples`` retained states."""
    seed_src = config.seed if seed is None else seed
    rng = np.random.default_rng(seed_src)
    x0 = (np.asarray(config.x0, dtype=float) if config.x0 is not None
          else find_initial_state(region, model))
    k = _Kernel(region, model, x0, config.sigma, rng, config.check_inverse, config.blocks,
                config.scales)
    history, burn_rate = _burn_in(k, config)
    lo = config.target_acceptance - config.tolerance
    hi = config.target_acceptance + config.tolerance
    if config.adapt and config.burn_in and not lo <= burn_rate <= hi:
        log.warning("burn-in acceptance %.3f outside [%.2f, %.2f]; continuing with sigma=%s",
                    burn_rate, lo, hi, k.sigma)

    st = k.state
    st.steps = st.accepted = st.shifted = 0
    out = np.empty((config.n_samples, x0.size))
    for i in range(config.n_samples):
        k.step()
        out[i] = st.x
    if isinstance(region, Polytope):
        entered = bool(region.contains_many(out).any()) if config.n_samples else False
    else:
        entered = any(region.contains(s) for s in out)
    if entered:
        raise AssertionError("chain entered the safe region")
    return ChainResult(
        samples=out,
        acceptance_rate=st.acceptance_rate,
        sigma=k.sigma,
        sigma_history=history,
        burn_in_acceptance=burn_rate,
        shift_rate=st.shifted / st.steps if st.steps else 0.0,
        x0=x0,
        seed=int(config.seed),
        chain=chain,
    )


def _run_one(args):
    region, model, config, ss, c = args
    return run_chain(region, model, config, seed=ss, chain=c)


def run_chains(region, model: DensityModel, config: SamplerConfig, chains: int = 1,
               workers: int | None = None) -> list[ChainResult]:
    """Independent chains seeded from ``SeedSequence(config.seed).spawn(chains)``."""
    if chains < 1:
        raise ValueError("chains must be >= 1")
    subs = np.random.SeedSequence(config.seed).spawn(chains)
    jobs = [(region, model, config, ss, c) for c, ss in enumerate(subs)]
    if chains == 1 or workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


def merge_samples(results: Sequence[ChainResult]) -> np.ndarray:
    return np.vstack([r.samples for r in results])


# --- the two-dimensional diamond benchmark ---------------------------------

def diamond_region(half_width: float = 7.0) -> Polytope:
    """``{(x, y): |x| + |y| <= half_width}``."""
    H = [[1, 1], [1, -1], [-1, 1], [-1, -1]]
    return Polytope(H, [half_width] * 4)


def diamond_model() -> DensityModel:
    from .disturbance import gaussian_model
    return gaussian_model((2.0, 1.0))


def count_crossings(samples: np.ndarray, coord: int = 0) -> int:
    """Number of sign changes of one coordinate along the chain."""
    s = np.sign(samples[:, coord])
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
