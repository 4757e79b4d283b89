"""How the IEEE-39 estimates depend on the number of time samples N.

Every N reuses the same seed, so differences come from the region alone.
Writes table1.csv (probabilities), table1_se.csv and table2.csv (p_d, d_bar,
L_bar) under ``--out`` and flags statistics that move by more than 3 SE
between consecutive N.
"""
import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ghostrocof.cli import build_model, load_network, sampler_config
from ghostrocof.config import IEEE39_RUN, load_config
from ghostrocof.stats import reports_agree, sensitivity_sweep, write_sweep_tables


@dataclass
class Sweep:
    Ns: list[int] = field(default_factory=lambda: [1, 5, 20, 50, 100])
    seed: int = 0
    n_samples: int = 100_000
    out: Path = Path("results/sweep")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, nargs="+", default=Sweep().Ns)
    p.add_argument("--seed", type=int, default=Sweep.seed)
    p.add_argument("--samples", type=int, default=Sweep.n_samples)
    p.add_argument("--out", type=Path, default=Sweep.out)
    a = p.parse_args()
    sweep = Sweep(Ns=a.N, seed=a.seed, n_samples=a.samples, out=a.out)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(IEEE39_RUN)
    cfg.set("sampler", "seed", sweep.seed)
    cfg.set("sampler", "n_samples", sweep.n_samples)
    net = load_network(cfg)
    model = build_model(cfg, net)
    reports = sensitivity_sweep(net, model, sweep.Ns, float(cfg.region["eps"]),
                                float(cfg.region["r_max"]), sampler_config(cfg, model))
    sweep.out.mkdir(parents=True, exist_ok=True)
    for path in write_sweep_tables(reports, sweep.out):
        print(path.read_text())
    for prev, cur in zip(reports[:-1], reports[1:]):
        moved = [k for k, ok in reports_agree(prev, cur).items() if not ok]
        print(f"N={prev.N} -> N={cur.N}: " + (", ".join(moved) + " moved" if moved else "stable"))


if __name__ == "__main__":
    main()
