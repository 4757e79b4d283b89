"""Violation statistics over conditional samples."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .safe_region import Polytope, violation_matrix

N_BATCHES = 50


def batch_means_se(x, n_batches: int = N_BATCHES) -> np.ndarray | float:
    """Standard error of the mean of a correlated series (columns are series).

    The series is cut into ``n_batches`` contiguous batches of equal length
    (a few trailing points are dropped); fewer points than batches falls back
    to one point per batch.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = x.reshape(x.shape[0], -1)
    T = x.shape[0]
    if T < 2:
        se = np.full(x.shape[1], np.nan)
    else:
        k = min(n_batches, T)
        m = T // k
        means = x[: k * m].reshape(k, m, -1).mean(axis=1)
        se = means.std(axis=0, ddof=1) / np.sqrt(k)
    return float(se[0]) if squeeze else se


def violation_indicators(samples, region: Polytope, n_nodes: int | None = None) -> np.ndarray:
    """Boolean ``(samples, nodes)`` matrix; untagged regions give one "system" column."""
    U = np.atleast_2d(np.asarray(samples, dtype=float))
    if U.shape[0] == 0:
        raise ValueError("empty sample set")
    if np.any(region.node >= 0):
        V = violation_matrix(region, U, n_nodes)
    else:
        V = ~region.contains_many(U)[:, None]
    if not V.any(axis=1).all():
        bad = int(np.flatnonzero(~V.any(axis=1))[0])
        raise ValueError(f"sample {bad} violates no constraint (not conditioned on the complement)")
    return V


def violation_table(samples, region: Polytope, n_nodes: int | None = None) -> np.ndarray:
    """Per-node conditional violation probability in percent."""
    return violation_indicators(samples, region, n_nodes).mean(axis=0) * 100.0


@dataclass(frozen=True)
class MultiViolation:
    p_d: float  # fraction of samples with two or more violated nodes
    d_bar: float
    L_bar: float  # MW


def _multi_series(V: np.ndarray, p_nom) -> np.ndarray:
    count = V.sum(axis=1)
    lost = V.astype(float) @ np.asarray(p_nom, dtype=float)
    return np.column_stack([count >= 2, count, lost]).astype(float)


def multi_violation_stats(samples, region: Polytope, p_nom) -> MultiViolation:
    p_nom = np.asarray(p_nom, dtype=float)
    V = violation_indicators(samples, region, p_nom.size)
    p_d, d_bar, L_bar = _multi_series(V, p_nom).mean(axis=0)
    return MultiViolation(float(p_d), float(d_bar), float(L_bar))


def _fmt(v) -> str:
    return f"{v:.6g}"


@dataclass
class StatsReport:
    labels: list[str]
    probability_pct: list[float]
    probability_se_pct: list[float]
    p_d_pct: float
    p_d_se_pct: float
    d_bar: float
    d_bar_se: float
    L_bar_mw: float
    L_bar_se_mw: float
    N: int | None
    n_samples: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_indicators(cls, V: np.ndarray, labels: Sequence[str], p_nom, N: int | None = None,
                        n_batches: int = N_BATCHES) -> "StatsReport":
        V = np.asarray(V, dtype=bool)
        if V.shape[0] == 0:
            raise ValueError("empty sample set")
        if V.shape[1] != len(labels):
            raise ValueError("one label per indicator column")
        p_nom = np.asarray(p_nom, dtype=float)
        if p_nom.size != V.shape[1]:
            # untagged (system-level) regions carry no per-node sizes
            p_nom = np.zeros(V.shape[1])
        multi = _multi_series(V, p_nom)
        se_p = batch_means_se(V.astype(float), n_batches)
        se_m = batch_means_se(multi, n_batches)
        mean_m = multi.mean(axis=0)
        return cls(
            labels=list(labels),
            probability_pct=(V.mean(axis=0) * 100).tolist(),
            probability_se_pct=(se_p * 100).tolist(),
            p_d_pct=float(mean_m[0] * 100), p_d_se_pct=float(se_m[0] * 100),
            d_bar=float(mean_m[1]), d_bar_se=float(se_m[1]),
            L_bar_mw=float(mean_m[2]), L_bar_se_mw=float(se_m[2]),
            N=N, n_samples=int(V.shape[0]),
        )

    @classmethod
    def from_samples(cls, samples, region: Polytope, labels: Sequence[str], p_nom,
                     N: int | None = None) -> "StatsReport":
        V = violation_indicators(samples, region, len(p_nom))
        if V.shape[1] != len(labels):
            labels = ["system"]
        return cls.from_indicators(V, labels, p_nom, N)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "StatsReport":
        return cls(**d)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, out_dir: str | Path) -> tuple[Path, Path]:
        """``violations.csv`` (one row per generator) and ``summary.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        viol = out / "violations.csv"
        with open(viol, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generator", "probability_pct", "std_error_pct"])
            for lab, p, se in zip(self.labels, self.probability_pct, self.probability_se_pct):
                w.writerow([lab, _fmt(p), _fmt(se)])
        summ = out / "summary.csv"
        with open(summ, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["statistic", "value", "std_error"])
            w.writerow(["p_d_pct", _fmt(self.p_d_pct), _fmt(self.p_d_se_pct)])
            w.writerow(["d_bar", _fmt(self.d_bar), _fmt(self.d_bar_se)])
            w.writerow(["L_bar_mw", _fmt(self.L_bar_mw), _fmt(self.L_bar_se_mw)])
            w.writerow(["n_samples", self.n_samples, ""])
            w.writerow(["N", "" if self.N is None else self.N, ""])
        return viol, summ


def write_sweep_tables(reports: Sequence[StatsReport], out_dir: str | Path) -> list[Path]:
    """Per-N tables: generator probabilities by row of N, and p_d / d / L by column of N."""
    if not reports:
        raise ValueError("no reports")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = reports[0].labels
    paths = []
    for name, attr in (("table1.csv", "probability_pct"), ("table1_se.csv", "probability_se_pct")):
        p = out / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", *labels])
            for r in reports:
                w.writerow([r.N, *(_fmt(v) for v in getattr(r, attr))])
        paths.append(p)
    p = out / "table2.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", *(f"N={r.N}" for r in reports)])
        for stat, se in (("p_d_pct", "p_d_se_pct"), ("d_bar", "d_bar_se"), ("L_bar_mw", "L_bar_se_mw")):
            w.writerow([stat, *(_fmt(getattr(r, stat)) for r in reports)])
            w.writerow([se, *(_fmt(getattr(r, se)) for r in reports)])
    paths.append(p)
    return paths


def reports_agree(a: StatsReport, b: StatsReport, k: float = 3.0) -> dict[str, bool]:
    """Entry-wise ``|a - b| <= k * sqrt(se_a^2 + se_b^2)``."""
    out = {}
    for lab, pa, pb, sa, sb in zip(a.labels, a.probability_pct, b.probability_pct,
                                   a.probability_se_pct, b.probability_se_pct):
        out[lab] = bool(abs(pa - pb) <= k * np.hypot(sa, sb))
    for stat, se in (("p_d_pct", "p_d_se_pct"), ("d_bar", "d_bar_se"), ("L_bar_mw", "L_bar_se_mw")):
        diff = abs(getattr(a, stat) - getattr(b, stat))
        out[stat] = bool(diff <= k * np.hypot(getattr(a, se), getattr(b, se)))
    return out


def sensitivity_sweep(net, model, Ns: Sequence[int], eps: float, r_max, config,
                      chains: int = 1) -> list[StatsReport]:
    """One region build, chain run and report per ``N``; every run uses ``config.seed``."""
    from .ghost_sampler import merge_samples, run_chains
    from .safe_region import build_all_nodes_region

    if not Ns:
        raise ValueError("N list must be nonempty")
    reports = []
    for N in Ns:
        region = build_all_nodes_region(net, N, eps, r_max)
        results = run_chains(region, model, config, chains)
        rep = StatsReport.from_samples(merge_samples(results), region, net.labels, net.p_nom, N)
        rep.extra = {"acceptance_rate": [r.acceptance_rate for r in results],
                     "region_digest": region.digest()}
        reports.append(rep)
    return reports
