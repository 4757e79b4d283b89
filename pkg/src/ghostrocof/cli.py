"""Command-line driver: case -> reduction -> region -> sampling -> reports."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .disturbance import DensityModel, make_case_study_model
from .dynamics import SystemFreqParams, simulate_nodal_trajectory
from .ghost_sampler import (SamplerConfig, count_crossings, diamond_model, diamond_region,
                            merge_samples, run_chains)
from .grid_model import (ReducedNetwork, extract_reduced_lines, load_case, load_machine_params,
                         reduce_case)
from .safe_region import Polytope, build_K_AS, build_K_MS, build_all_nodes_region
from .stats import StatsReport, batch_means_se, reports_agree, write_sweep_tables

log = logging.getLogger("ghostrocof")


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# --- pipeline pieces --------------------------------------------------------

def load_network(cfg: RunConfig) -> ReducedNetwork:
    case_path, machines_path = cfg.case_paths()
    for p in (case_path, machines_path):
        if not Path(p).exists():
            raise FileNotFoundError(f"file not found: {p}")
    case = load_case(case_path)
    return reduce_case(case.with_machines(load_machine_params(machines_path)))


def build_model(cfg: RunConfig, net: ReducedNetwork) -> DensityModel:
    mcfg = cfg["model"]
    kind = mcfg.get("type", "case-study")
    if kind == "case-study":
        return make_case_study_model(net, float(mcfg.get("divisor", 65.0)))
    if kind == "custom":
        model = DensityModel.from_dict(mcfg)
        if model.dim != net.n:
            raise ConfigError(f"model dimension {model.dim} does not match {net.n} generators")
        return model
    raise ConfigError(f"unknown model type {kind!r}")


def build_region(cfg: RunConfig, net: ReducedNetwork, N: int | None = None) -> Polytope:
    reg = cfg.region
    metric = reg["metric"]
    r_max = reg["r_max"]
    eps = float(reg["eps"])
    if metric == "max-nodal":
        N = int(N if N is not None else _n_list(cfg)[0])
        r = np.asarray(r_max, dtype=float)
        return build_all_nodes_region(net, N, eps, r)
    params = SystemFreqParams.from_network(net, model=reg.get("order", "second-order"),
                                           R=reg.get("R"), tau=reg.get("tau"))
    if metric == "system-max":
        return build_K_MS(params, float(r_max))
    return build_K_AS(params, float(r_max), eps)


def sampler_config(cfg: RunConfig, model: DensityModel) -> SamplerConfig:
    s = cfg.sampler
    blocks = s.get("blocks")
    if blocks == "model":
        blocks = model.proposal_blocks()
    elif blocks:
        blocks = tuple(tuple(int(i) for i in b) for b in blocks)
    else:
        blocks = None
    sigma = s["sigma"]
    sigma = tuple(float(v) for v in sigma) if isinstance(sigma, list) else float(sigma)
    return SamplerConfig(sigma=sigma, n_samples=int(s["n_samples"]), burn_in=int(s["burn_in"]),
                         seed=int(s["seed"]), target_acceptance=float(s["target_acceptance"]),
                         tolerance=float(s["tolerance"]), window=int(s["window"]),
                         factor=float(s["factor"]), blocks=blocks,
                         scales=tuple(float(c) for c in s["scales"]))


def _n_list(cfg: RunConfig) -> list[int]:
    N = cfg.region["N"]
    return [int(n) for n in N] if isinstance(N, list) else [int(N)]


def write_samples_csv(path: Path, samples: np.ndarray, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(labels))
        for row in samples:
            w.writerow([f"{v:.6g}" for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(cfg: RunConfig, command: str, results, region: Polytope, chains: int, **extra) -> dict:
    m = {
        "command": command,
        "version": version_string(),
        "config": cfg.resolved(),
        "seed": int(cfg.sampler["seed"]),
        "chains": chains,
        "chain_seeds": [{"entropy": int(cfg.sampler["seed"]), "spawn_key": [c]}
                        for c in range(chains)],
        "region_digest": region.digest(),
        "region_rows": len(region),
        "acceptance_rate": [r.acceptance_rate for r in results],
        "sigma": [r.sigma for r in results],
        "runs": [r.manifest() for r in results],
    }
    m.update(extra)
    return m


def run_sample(cfg: RunConfig, chains: int | None = None) -> list[StatsReport]:
    """Full pipeline; one output subdirectory per N when several are given."""
    cfg.validate()
    net = load_network(cfg)
    model = build_model(cfg, net)
    scfg = sampler_config(cfg, model)
    chains = int(chains or cfg.sampler["chains"])
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    Ns = _n_list(cfg) if cfg.region["metric"] == "max-nodal" else [None]
    reports = []
    for N in Ns:
        d = out / f"N{N}" if len(Ns) > 1 else out
        d.mkdir(parents=True, exist_ok=True)
        region = build_region(cfg, net, N)
        t0 = time.perf_counter()
        results = run_chains(region, model, scfg, chains)
        elapsed = time.perf_counter() - t0
        samples = merge_samples(results)
        rep = StatsReport.from_samples(samples, region, net.labels, net.p_nom, N)
        np.save(d / "samples.npy", samples)
        write_samples_csv(d / "samples.csv", samples, net.labels)
        rep.write_csv(d)
        rep.write_json(d / "stats.json")
        region.save(d / "region.json")
        man = _manifest(cfg, "sample", results, region, chains, N=N,
                        elapsed_s=round(elapsed, 3))
        _write_json(d / "manifest.json", man)
        log.info("N=%s: %d samples, acceptance %s, %.1f s", N, samples.shape[0],
                 [round(r.acceptance_rate, 3) for r in results], elapsed)
        reports.append(rep)
    if len(reports) > 1:
        write_sweep_tables(reports, out)
        by_n = {r.N: r for r in reports}
        if 50 in by_n and 100 in by_n:
            _write_json(out / "n50_vs_n100.json", reports_agree(by_n[50], by_n[100]))
    return reports


def run_report(cfg: RunConfig, samples_path: Path | None = None) -> StatsReport:
    """Recompute stats from saved samples (``samples.npy`` preferred over CSV)."""
    cfg.validate()
    net = load_network(cfg)
    out = cfg.out
    src = samples_path or (out / "samples.npy")
    if not Path(src).exists():
        raise FileNotFoundError(f"file not found: {src}")
    if str(src).endswith(".npy"):
        samples = np.load(src)
    else:
        samples = np.loadtxt(src, delimiter=",", skiprows=1, ndmin=2)
    N = _n_list(cfg)[0] if cfg.region["metric"] == "max-nodal" else None
    region = build_region(cfg, net, N)
    rep = StatsReport.from_samples(samples, region, net.labels, net.p_nom, N)
    rep.write_csv(out)
    rep.write_json(out / "stats.json")
    return rep


def run_reduce(cfg: RunConfig) -> ReducedNetwork:
    net = load_network(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "reduced.json", net.to_dict())
    with open(out / "reduced_lines.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "susceptance"])
        for i, j, b in extract_reduced_lines(net.L):
            w.writerow([net.labels[i], net.labels[j], f"{b:.6g}"])
    return net


def run_region(cfg: RunConfig) -> Polytope:
    cfg.validate()
    net = load_network(cfg)
    region = build_region(cfg, net)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    region.save(out / "region.json")
    return region


def run_trajectory(cfg: RunConfig, u=None) -> Path:
    net = load_network(cfg)
    tr = cfg["trajectory"]
    u = tr.get("u") if u is None else u
    if u is None:
        raise ConfigError("trajectory needs a disturbance: trajectory.u or --u")
    step = float(tr.get("step", 0.005))
    t_end = float(tr.get("t_end", 2.0))
    times = np.linspace(0.0, t_end, int(round(t_end / step)) + 1)
    traj = simulate_nodal_trajectory(net, np.asarray(u, dtype=float), times)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    traj.write_csv(path, net.labels)
    return path


def run_diamond(cfg: RunConfig, chains: int | None = None) -> dict:
    """Built-in 2-D benchmark: diamond |x|+|y| <= 7 under N(0, diag(4, 1))."""
    region = diamond_region(7.0)
    model = diamond_model()
    s = cfg.sampler
    scfg = SamplerConfig(sigma=1.0, n_samples=int(s["n_samples"]), burn_in=int(s["burn_in"]),
                         seed=int(s["seed"]))
    chains = int(chains or s["chains"])
    results = run_chains(region, model, scfg, chains)
    X = merge_samples(results)
    pos = (X[:, 0] > 0).astype(float)
    x2 = X[:, 0] ** 2
    stats = {
        "p_x_positive": float(pos.mean()), "p_x_positive_se": batch_means_se(pos),
        "e_x2": float(x2.mean()), "e_x2_se": batch_means_se(x2),
        "crossings": sum(count_crossings(r.samples) for r in results),
        "n_samples": int(X.shape[0]),
    }
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_samples_csv(out / "samples.csv", X, ["x", "y"])
    with open(out / "diamond.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value", "std_error"])
        w.writerow(["p_x_positive", f"{stats['p_x_positive']:.6g}", f"{stats['p_x_positive_se']:.6g}"])
        w.writerow(["e_x2", f"{stats['e_x2']:.6g}", f"{stats['e_x2_se']:.6g}"])
        w.writerow(["crossings", stats["crossings"], ""])
    _write_json(out / "stats.json", stats)
    _write_json(out / "manifest.json", _manifest(cfg, "demo-diamond", results, region, chains))
    return stats


# --- argument handling ------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config or a previous manifest.json")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int, help="retained samples per chain")
    common.add_argument("--burn-in", type=int)
    common.add_argument("--chains", type=int)
    common.add_argument("--N", type=int, nargs="+", help="time samples; several values run a sweep")
    common.add_argument("--out", type=Path)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ghostrocof", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("reduce", parents=[common], help="Kron-reduce the case onto its generators")
    sub.add_parser("region", parents=[common], help="build and save the safe region")
    sub.add_parser("sample", parents=[common], help="sample violating disturbances and report")
    rp = sub.add_parser("report", parents=[common], help="recompute stats from saved samples")
    rp.add_argument("--samples-file", type=Path)
    tp = sub.add_parser("trajectory", parents=[common], help="export a frequency trajectory")
    tp.add_argument("--u", type=lambda s: [float(v) for v in s.split(",")],
                    help="comma-separated disturbance (p.u.)")
    tp.add_argument("--from-samples", type=Path, help="take u from a samples file row")
    tp.add_argument("--index", type=int, default=0)
    sub.add_parser("demo-diamond", parents=[common], help="2-D diamond benchmark")
    return p


def _apply_flags(cfg: RunConfig, args) -> None:
    """Flags win over env vars, which already overrode the file."""
    cfg.set("sampler", "seed", args.seed)
    cfg.set("sampler", "n_samples", args.samples)
    cfg.set("sampler", "burn_in", args.burn_in)
    cfg.set("sampler", "chains", args.chains)
    if args.N:
        cfg.set("region", "N", args.N if len(args.N) > 1 else args.N[0])
    if args.out is not None:
        cfg.set(None, "out", str(args.out.resolve()))


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _apply_flags(cfg, args)
        cmd = args.command
        if cmd == "reduce":
            net = run_reduce(cfg)
            print(f"reduced to {net.n} generators -> {cfg.out / 'reduced.json'}")
        elif cmd == "region":
            region = run_region(cfg)
            print(f"{len(region)} half-spaces, digest {region.digest()} -> {cfg.out / 'region.json'}")
        elif cmd == "sample":
            for rep in run_sample(cfg):
                pr = ", ".join(f"{l} {p:.1f}" for l, p in zip(rep.labels, rep.probability_pct))
                print(f"N={rep.N}: {pr} | p_d {rep.p_d_pct:.1f}% d {rep.d_bar:.2f} "
                      f"L {rep.L_bar_mw:.0f} MW")
        elif cmd == "report":
            rep = run_report(cfg, args.samples_file)
            print(f"{rep.n_samples} samples -> {cfg.out / 'violations.csv'}")
        elif cmd == "trajectory":
            u = args.u
            if args.from_samples is not None:
                if not args.from_samples.exists():
                    raise FileNotFoundError(f"file not found: {args.from_samples}")
                rows = (np.load(args.from_samples) if args.from_samples.suffix == ".npy"
                        else np.loadtxt(args.from_samples, delimiter=",", skiprows=1, ndmin=2))
                u = rows[args.index]
            print(run_trajectory(cfg, u))
        elif cmd == "demo-diamond":
            st = run_diamond(cfg)
            print(f"P(x>0) = {st['p_x_positive']:.4f} +- {st['p_x_positive_se']:.4f}, "
                  f"E[x^2] = {st['e_x2']:.3f} +- {st['e_x2_se']:.3f}, "
                  f"{st['crossings']} crossings")
    except FileNotFoundError as exc:
        return _error("FileNotFoundError", str(exc), 2)
    except Exception as exc:  # every module error becomes a structured message
        return _error(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
