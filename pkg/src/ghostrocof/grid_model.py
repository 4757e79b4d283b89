"""Grid ingestion: Matpower case text, weighted Laplacian, Kron reduction.

Power quantities inside the package are per-unit on ``BASE_MVA``; generator
nominal injections are kept in MW for reporting.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from scipy.sparse.csgraph import connected_components

BASE_MVA = 100.0

_DATA_DIR = Path(__file__).parent / "data"
IEEE39_CASE = _DATA_DIR / "case39.m"
IEEE39_MACHINES = _DATA_DIR / "ieee39_machines.yaml"


class CaseParseError(ValueError):
    """Malformed matrix block in a case file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseSchemaError(ValueError):
    """A required table or column is missing."""


class CaseValidationError(ValueError):
    """Case data violates a structural invariant."""


class ReductionError(ValueError):
    """Kron reduction impossible (eliminated block singular)."""


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_nom: float  # MW
    label: str
    inertia: float | None = None  # p.u. per Hz/s
    damping: float | None = None  # p.u. per Hz


@dataclass(frozen=True)
class GridCase:
    buses: tuple[int, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    base_mva: float = BASE_MVA

    def __post_init__(self):
        if len(set(self.buses)) != len(self.buses):
            seen, dup = set(), None
            for b in self.buses:
                if b in seen:
                    dup = b
                    break
                seen.add(b)
            raise CaseValidationError(f"duplicate bus id {dup}")
        ids = set(self.buses)
        for br in self.branches:
            if br.from_bus not in ids or br.to_bus not in ids:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
            if not br.susceptance >= 0:
                raise CaseValidationError(
                    f"branch {br.from_bus}-{br.to_bus} has negative susceptance")
        if not self.generators:
            raise CaseValidationError("case has no generators")
        for g in self.generators:
            if g.bus not in ids:
                raise CaseValidationError(f"generator {g.label} sits on unknown bus {g.bus}")
            for name in ("inertia", "damping"):
                v = getattr(g, name)
                if v is not None and not v > 0:
                    raise CaseValidationError(f"generator {g.label}: {name} must be > 0")

    @property
    def bus_index(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.buses)}

    def with_machines(self, machines: Mapping[str, Mapping[str, float]]) -> "GridCase":
        """Attach inertia/damping, keyed by generator label."""
        gens = []
        for g in self.generators:
            if g.label not in machines:
                raise CaseSchemaError(f"no machine parameters for generator {g.label}")
            p = machines[g.label]
            gens.append(replace(g, inertia=float(p["M"]), damping=float(p["D"])))
        return replace(self, generators=tuple(gens))


@dataclass(frozen=True)
class ReducedNetwork:
    """Generator-only network after eliminating passive buses."""

    L: np.ndarray
    M: np.ndarray
    D: np.ndarray
    p_nom: np.ndarray
    labels: tuple[str, ...]
    base_mva: float = BASE_MVA
    buses: tuple[int, ...] = field(default=())

    def __post_init__(self):
        L = np.asarray(self.L, dtype=float)
        n = L.shape[0]
        if L.shape != (n, n):
            raise ValueError("L must be square")
        for name in ("M", "D", "p_nom"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            object.__setattr__(self, name, arr)
        if np.any(self.M <= 0) or np.any(self.D <= 0):
            raise ValueError("inertia and damping must be strictly positive")
        if not np.allclose(L, L.T, atol=1e-9):
            raise ValueError("L must be symmetric")
        if np.any(np.abs(L.sum(axis=1)) > 1e-9 * max(1.0, np.abs(L).max())):
            raise ValueError("rows of L must sum to zero")
        off = L - np.diag(np.diag(L))
        if np.any(off > 1e-12 * max(1.0, np.abs(L).max())):
            raise ValueError("off-diagonal entries of L must be non-positive")
        object.__setattr__(self, "L", L)
        if len(self.labels) != n:
            raise ValueError("one label per node required")

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def p_nom_pu(self) -> np.ndarray:
        return self.p_nom / self.base_mva

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "buses": list(self.buses),
            "base_mva": self.base_mva,
            "L": self.L.tolist(),
            "M": self.M.tolist(),
            "D": self.D.tolist(),
            "p_nom": self.p_nom.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ReducedNetwork":
        return cls(L=np.array(d["L"], dtype=float), M=d["M"], D=d["D"], p_nom=d["p_nom"],
                   labels=tuple(d["labels"]), base_mva=d.get("base_mva", BASE_MVA),
                   buses=tuple(d.get("buses", ())))


# --- Matpower parsing -------------------------------------------------------

_BLOCK_START = re.compile(r"mpc\.(\w+)\s*=\s*\[")
_BASE_MVA = re.compile(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)")


def _matrix_blocks(text: str) -> dict[str, tuple[np.ndarray, int]]:
    """Return ``{name: (matrix, first_line)}`` for every ``mpc.name = [...]``."""
    blocks = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        code = lines[i].split("%", 1)[0]
        m = _BLOCK_START.search(code)
        if not m:
            i += 1
            continue
        name, start_line = m.group(1), i + 1
        rows: list[list[float]] = []
        rest = code[m.end():]
        closed = False
        lineno = i + 1
        while True:
            if "]" in rest:
                rest, closed = rest.split("]", 1)[0], True
            for chunk in rest.split(";"):
                toks = chunk.replace(",", " ").split()
                if not toks:
                    continue
                try:
                    rows.append([float(t) for t in toks])
                except ValueError:
                    raise CaseParseError(f"non-numeric entry in mpc.{name}: {chunk.strip()!r}",
                                         lineno) from None
            if closed:
                break
            i += 1
            if i >= len(lines):
                raise CaseParseError(f"unterminated matrix mpc.{name}", start_line)
            lineno = i + 1
            rest = lines[i].split("%", 1)[0]
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise CaseParseError(f"ragged rows in mpc.{name}", start_line)
        mat = np.array(rows, dtype=float) if rows else np.zeros((0, 0))
        blocks[name] = (mat, start_line)
        i += 1
    return blocks


def parse_matpower_case(text: str) -> GridCase:
    """Parse the bus/branch/gen tables of a Matpower ``.m`` case.

    Branch susceptance is ``1/x`` (resistance ignored); branches and generators
    with status 0 are dropped. Generators are labelled ``G1..Gn`` in table order.
    Inertia and damping are not part of Matpower data; attach them with
    :meth:`GridCase.with_machines`.
    """
    blocks = _matrix_blocks(text)
    for name in ("bus", "branch", "gen"):
        if name not in blocks:
            raise CaseSchemaError(f"missing mpc.{name} table")
    bus, _ = blocks["bus"]
    branch, branch_line = blocks["branch"]
    gen, _ = blocks["gen"]
    if bus.shape[0] == 0 or bus.shape[1] < 1:
        raise CaseSchemaError("mpc.bus is empty")
    if branch.shape[0] == 0:
        raise CaseSchemaError("mpc.branch is empty: no network")
    if branch.shape[1] < 4:
        raise CaseSchemaError("mpc.branch needs columns fbus, tbus, r, x")
    if gen.shape[0] == 0 or gen.shape[1] < 2:
        raise CaseSchemaError("mpc.gen needs columns bus, Pg")

    m = _BASE_MVA.search(text)
    base = float(m.group(1)) if m else BASE_MVA

    buses = tuple(int(b) for b in bus[:, 0])
    branches = []
    for k, row in enumerate(branch):
        if branch.shape[1] >= 11 and row[10] == 0:
            continue
        x = row[3]
        if x == 0:
            raise CaseParseError("branch with zero reactance", branch_line + k + 1)
        branches.append(Branch(int(row[0]), int(row[1]), 1.0 / abs(x)))
    gens = []
    for row in gen:
        if gen.shape[1] >= 8 and row[7] == 0:
            continue
        gens.append(Generator(bus=int(row[0]), p_nom=float(row[1]), label=f"G{len(gens) + 1}"))
    return GridCase(buses=buses, branches=tuple(branches), generators=tuple(gens), base_mva=base)


def load_case(path: str | Path) -> GridCase:
    return parse_matpower_case(Path(path).read_text())


def load_machine_params(path: str | Path) -> dict[str, dict[str, float]]:
    """Read a machine-parameter YAML file: ``generators: {label: {M:, D:}}``."""
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or "generators" not in doc:
        raise CaseSchemaError(f"{path}: expected a top-level 'generators' mapping")
    out = {}
    for label, p in doc["generators"].items():
        if "M" not in p or "D" not in p:
            raise CaseSchemaError(f"{path}: generator {label} needs M and D")
        out[str(label)] = {"M": float(p["M"]), "D": float(p["D"])}
    return out


# --- network algebra --------------------------------------------------------

def build_weighted_laplacian(case: GridCase) -> np.ndarray:
    """Susceptance-weighted Laplacian ``C B C^T`` over all buses."""
    idx = case.bus_index
    L = np.zeros((len(case.buses), len(case.buses)))
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        if i == j:
            continue
        L[i, j] -= br.susceptance
        L[j, i] -= br.susceptance
    L[np.diag_indices_from(L)] = -L.sum(axis=1)
    return L


def kron_reduce(L: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Schur complement of ``L`` onto the ``keep`` indices (in that order)."""
    L = np.asarray(L, dtype=float)
    keep = list(keep)
    elim = [i for i in range(L.shape[0]) if i not in set(keep)]
    if not elim:
        return L[np.ix_(keep, keep)].copy()

    # A component of eliminated buses with no edge into `keep` makes L_ee singular.
    adj = (np.abs(L) > 0).astype(int)
    np.fill_diagonal(adj, 0)
    _, comp = connected_components(adj[np.ix_(elim, elim)], directed=False)
    touches = adj[np.ix_(elim, keep)].any(axis=1)
    for c in np.unique(comp):
        members = [elim[k] for k in np.flatnonzero(comp == c)]
        if not touches[comp == c].any():
            raise ReductionError(
                f"eliminated buses {members} form a component disconnected from the kept set")

    Lkk = L[np.ix_(keep, keep)]
    Lke = L[np.ix_(keep, elim)]
    Lee = L[np.ix_(elim, elim)]
    red = Lkk - Lke @ np.linalg.solve(Lee, Lke.T)
    red = 0.5 * (red + red.T)
    # Row sums are zero analytically; scrub rounding so the Laplacian invariant holds.
    red[np.diag_indices_from(red)] -= red.sum(axis=1)
    return red


def extract_reduced_lines(L: np.ndarray, threshold: float = 1e-9) -> list[tuple[int, int, float]]:
    L = np.asarray(L)
    return [(i, j, float(-L[i, j]))
            for i in range(L.shape[0]) for j in range(i + 1, L.shape[0])
            if -L[i, j] > threshold]


def reduce_case(case: GridCase) -> ReducedNetwork:
    """Kron-reduce ``case`` onto its generator buses."""
    if any(g.inertia is None or g.damping is None for g in case.generators):
        raise CaseSchemaError("every generator needs inertia and damping before reduction")
    gen_buses = [g.bus for g in case.generators]
    if len(set(gen_buses)) != len(gen_buses):
        raise CaseValidationError("more than one generator on a bus is not supported")
    idx = case.bus_index
    L_red = kron_reduce(build_weighted_laplacian(case), [idx[b] for b in gen_buses])
    return ReducedNetwork(
        L=L_red,
        M=[g.inertia for g in case.generators],
        D=[g.damping for g in case.generators],
        p_nom=[g.p_nom for g in case.generators],
        labels=tuple(g.label for g in case.generators),
        base_mva=case.base_mva,
        buses=tuple(gen_buses),
    )


def load_ieee39(machines: str | Path | None = None) -> ReducedNetwork:
    """IEEE-39 Kron-reduced onto its ten generators, with shipped default machines."""
    case = load_case(IEEE39_CASE)
    params = load_machine_params(machines or IEEE39_MACHINES)
    return reduce_case(case.with_machines(params))
