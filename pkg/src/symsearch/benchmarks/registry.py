"""Benchmark records, dataset sampling and noise injection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..expr import Vocabulary, evaluate
from ..parse import ast_max_var, ast_to_tree, parse_ast

MAX_RESAMPLE = 1000


class UnsupportedBenchmark(ValueError):
    pass


@dataclass(frozen=True)
class Sampling:
    kind: str
    low: float
    high: float
    count: int

    def __post_init__(self):
        if self.kind not in ("U", "E"):
            raise ValueError(f"sampling kind must be U or E, got {self.kind!r}")
        if self.count < 2:
            raise ValueError("sampling count must be >= 2")
        if not self.low < self.high:
            raise ValueError("sampling requires low < high")


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    infix: str
    sampling: Sampling
    library_extensions: tuple = ()
    aliases: tuple = ()
    supported: bool = True
    note: str | None = None

    @classmethod
    def from_record(cls, rec: dict) -> "BenchmarkSpec":
        s = rec["sampling"]
        return cls(rec["name"], rec["infix"],
                   Sampling(s["kind"], float(s["low"]), float(s["high"]), int(s["count"])),
                   tuple(rec.get("library_extensions", ())), tuple(rec.get("aliases", ())),
                   bool(rec.get("supported", True)), rec.get("note"))

    def to_record(self) -> dict:
        rec = {"name": self.name, "infix": self.infix,
               "sampling": {"kind": self.sampling.kind, "low": self.sampling.low,
                            "high": self.sampling.high, "count": self.sampling.count},
               "library_extensions": list(self.library_extensions)}
        if self.aliases:
            rec["aliases"] = list(self.aliases)
        if not self.supported:
            rec["supported"] = False
        if self.note:
            rec["note"] = self.note
        return rec

    @property
    def n_variables(self) -> int:
        if not self.supported:
            raise UnsupportedBenchmark(f"{self.name} is not supported ({self.note})")
        return ast_max_var(parse_ast(self.infix))

    def target(self):
        """``(ExprTree, constants)`` of the reference formula."""
        if not self.supported:
            raise UnsupportedBenchmark(f"{self.name} is not supported ({self.note})")
        ast = parse_ast(self.infix)
        return ast_to_tree(ast, Vocabulary.universal(ast_max_var(ast)))

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.from_library(self.n_variables, self.library_extensions)

    @property
    def box(self):
        return self.sampling.low, self.sampling.high


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("Dataset needs X of shape (N, m) and y of shape (N,)")
        if self.X.shape[0] == 0:
            raise ValueError("Dataset is empty")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("Dataset contains non-finite values")

    @property
    def n_variables(self) -> int:
        return self.X.shape[1]


class Registry:
    def __init__(self, benchmarks, suites):
        self.benchmarks = {b.name: b for b in benchmarks}
        self.suites = dict(suites)
        self._alias = {a: b.name for b in benchmarks for a in b.aliases}

    @classmethod
    def load(cls, path=None) -> "Registry":
        if path is None:
            text = resources.files("symsearch.benchmarks").joinpath("registry.json").read_text()
        else:
            text = Path(path).read_text()
        data = json.loads(text)
        return cls([BenchmarkSpec.from_record(r) for r in data["benchmarks"]], data.get("suites", {}))

    def __getitem__(self, name) -> BenchmarkSpec:
        if name in self.benchmarks:
            return self.benchmarks[name]
        if name in self._alias:
            return self.benchmarks[self._alias[name]]
        raise KeyError(f"unknown benchmark {name!r}")

    def __iter__(self):
        return iter(self.benchmarks.values())

    def __len__(self):
        return len(self.benchmarks)

    def suite(self, name):
        if name in self.suites:
            return [self[n] for n in self.suites[name]]
        raise KeyError(f"unknown suite {name!r}; available: {', '.join(sorted(self.suites))}")


def sample_dataset(spec: BenchmarkSpec, seed=0, rng=None) -> Dataset:
    """Sample ``(X, y)`` for a benchmark.

    U draws each variable uniformly from [low, high] and redraws rows where
    the target is undefined; E builds the inclusive grid (Cartesian product
    over variables).
    """
    tree, consts = spec.target()
    m = spec.n_variables
    s = spec.sampling
    rng = np.random.default_rng(seed) if rng is None else rng
    if s.kind == "E":
        axis = np.linspace(s.low, s.high, s.count)
        X = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), -1).reshape(-1, m)
        y, ok = evaluate(tree, X, consts)
        if not ok:
            raise ValueError(f"{spec.name}: target undefined on the evaluation grid")
    else:
        X = rng.uniform(s.low, s.high, size=(s.count, m))
        y = np.empty(s.count)
        for i in range(s.count):
            for _ in range(MAX_RESAMPLE):
                yi, ok = evaluate(tree, X[i:i + 1], consts)
                if ok:
                    break
                X[i] = rng.uniform(s.low, s.high, size=m)
            else:
                raise ValueError(f"{spec.name}: could not sample a valid point")
            y[i] = yi[0]
    return Dataset(X, y, {"benchmark": spec.name, "seed": seed, "noise": 0.0})


def add_noise(y, level, rng) -> np.ndarray:
    """Add uniform noise on [-level*scale, level*scale], scale = max(y) - min(y)."""
    if not 0 <= level <= 0.1:
        raise ValueError(f"noise level must lie in [0, 0.1], got {level}")
    y = np.asarray(y, dtype=np.float64)
    scale = float(y.max() - y.min())
    if level == 0 or scale == 0:
        return y.copy()
    return y + rng.uniform(-level * scale, level * scale, size=y.shape)
