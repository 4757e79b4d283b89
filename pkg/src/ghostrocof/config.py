"""Run configuration: YAML (or a previous run's manifest) plus env and flag overrides."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .grid_model import IEEE39_CASE, IEEE39_MACHINES

ENV_PREFIX = "GHOSTROCOF_"
METRICS = ("max-nodal", "system-max", "system-average")
BUILTIN_CASES = {"ieee39": (IEEE39_CASE, IEEE39_MACHINES)}
IEEE39_RUN = Path(__file__).parent / "data" / "ieee39_run.yaml"

DEFAULTS: dict[str, Any] = {
    "case": "ieee39",
    "machines": None,
    "model": {"type": "case-study", "divisor": 65.0},
    "region": {"metric": "max-nodal", "r_max": 1.0, "eps": 0.5, "N": 100,
               "order": "second-order", "R": None, "tau": None},
    "sampler": {"sigma": 0.0316227766, "n_samples": 100_000, "burn_in": 10_000, "seed": 0,
                "blocks": "model", "chains": 1, "target_acceptance": 0.15,
                "tolerance": 0.03, "window": 200, "factor": 1.1, "scales": [1.0, 10.0]},
    "trajectory": {"u": None, "t_end": 2.0, "step": 0.005},
    "out": "results",
}

# env suffix -> (section, key, parser)
ENV_KEYS = {
    "SEED": ("sampler", "seed", int),
    "SAMPLES": ("sampler", "n_samples", int),
    "BURN_IN": ("sampler", "burn_in", int),
    "CHAINS": ("sampler", "chains", int),
    "N": ("region", "N", lambda s: [int(v) for v in s.split(",")] if "," in s else int(s)),
    "OUT": (None, "out", lambda s: str(Path(s).resolve())),
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def region(self) -> dict:
        return self.data["region"]

    @property
    def sampler(self) -> dict:
        return self.data["sampler"]

    @property
    def out(self) -> Path:
        return self._path(self.data["out"])

    def _path(self, p) -> Path:
        p = Path(p).expanduser()
        return p if p.is_absolute() else self.base_dir / p

    def case_paths(self) -> tuple[Path, Path]:
        case = self.data["case"]
        machines = self.data.get("machines")
        if isinstance(case, str) and case in BUILTIN_CASES:
            c, m = BUILTIN_CASES[case]
            return c, (self._path(machines) if machines else m)
        if not machines:
            raise ConfigError("a custom case needs a 'machines' file")
        return self._path(case), self._path(machines)

    def set(self, section: str | None, key: str, value) -> None:
        if value is None:
            return
        (self.data if section is None else self.data[section])[key] = value

    def validate(self) -> None:
        reg = self.region
        if reg["metric"] not in METRICS:
            raise ConfigError(f"region.metric must be one of {METRICS}, got {reg['metric']!r}")
        Ns = reg["N"] if isinstance(reg["N"], list) else [reg["N"]]
        if not Ns or any(int(n) < 1 for n in Ns):
            raise ConfigError("region.N must be a positive integer or a nonempty list of them")
        if not float(reg["eps"]) > 0:
            raise ConfigError("region.eps must be positive")
        if reg["metric"] != "max-nodal" and isinstance(reg["r_max"], list):
            raise ConfigError("system metrics take a single r_max")
        if int(self.sampler["chains"]) < 1:
            raise ConfigError("sampler.chains must be >= 1")
        scales = self.sampler["scales"]
        if not isinstance(scales, list) or not scales or any(float(c) <= 0 for c in scales):
            raise ConfigError("sampler.scales must be a nonempty list of positive numbers")

    def resolved(self) -> dict:
        """Config with file paths made absolute, suitable for a manifest."""
        d = copy.deepcopy(self.data)
        if not (isinstance(d["case"], str) and d["case"] in BUILTIN_CASES):
            d["case"] = str(self._path(d["case"]))
        if d.get("machines"):
            d["machines"] = str(self._path(d["machines"]))
        d["out"] = str(self.out)
        return d


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> RunConfig:
    """Defaults, then the file (``config`` key of a manifest is unwrapped), then env vars."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        doc = yaml.safe_load(path.read_text()) or {}
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        if "config" in doc and isinstance(doc["config"], Mapping):
            doc = doc["config"]
        unknown = set(doc) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        cfg = RunConfig(_merge(DEFAULTS, doc), path.resolve().parent)
    env = os.environ if env is None else env
    for suffix, (section, key, parse) in ENV_KEYS.items():
        raw = env.get(ENV_PREFIX + suffix)
        if raw is not None and raw != "":
            try:
                cfg.set(section, key, parse(raw))
            except ValueError as exc:
                raise ConfigError(f"{ENV_PREFIX}{suffix}={raw!r}: {exc}") from None
    return cfg
