"""Diamond benchmark: ghost sampler against exact rejection sampling.

Target is N(0, diag(4, 1)) restricted to |x| + |y| >= 7, two lobes on either
side of the diamond. Prints both estimates with standard errors and the
number of lobe crossings.
"""
import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ghostrocof.ghost_sampler import (SamplerConfig, count_crossings, diamond_model,
                                      diamond_region, run_chain)
from ghostrocof.stats import batch_means_se

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import diamond_rejection  # noqa: E402


@dataclass
class Experiment:
    seed: int = 0
    n_samples: int = 100_000
    burn_in: int = 10_000
    oracle_draws: int = 1_000_000


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=Experiment.seed)
    p.add_argument("--samples", type=int, default=Experiment.n_samples)
    p.add_argument("--save", type=Path, help="write chain samples to this .npy file")
    a = p.parse_args()
    exp = Experiment(seed=a.seed, n_samples=a.samples)

    t0 = time.perf_counter()
    res = run_chain(diamond_region(7.0), diamond_model(),
                    SamplerConfig(sigma=1.0, n_samples=exp.n_samples, burn_in=exp.burn_in,
                                  seed=exp.seed))
    elapsed = time.perf_counter() - t0
    ref = diamond_rejection(exp.oracle_draws, seed=exp.seed + 1)

    print(f"chain: {exp.n_samples} samples in {elapsed:.1f} s, acceptance "
          f"{res.acceptance_rate:.3f}, sigma {res.sigma:.3f}, "
          f"{count_crossings(res.samples)} crossings")
    for name, f in (("P(x > 0)", lambda s: (s[:, 0] > 0).astype(float)),
                    ("E[x^2]  ", lambda s: s[:, 0] ** 2)):
        c, o = f(res.samples), f(ref)
        se_c, se_o = batch_means_se(c), o.std(ddof=1) / math.sqrt(len(o))
        z = abs(c.mean() - o.mean()) / math.hypot(se_c, se_o)
        print(f"{name}  chain {c.mean():.4f} +/- {se_c:.4f}   "
              f"rejection {o.mean():.4f} +/- {se_o:.4f}   ({z:.2f} SE apart)")
    if a.save:
        np.save(a.save, res.samples)


if __name__ == "__main__":
    main()
