"""Random search driven by a training-free score, plus benchmark lookups.

Trained accuracies come from a user-supplied benchmark table (CSV with
header ``arch,dataset,val_acc,test_acc``); nothing is trained here.
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .archspace import ArchParseError, CellSpec, decode, encode, random_sample
from .data import LabeledBatch, synthetic_batch
from .network import NetworkConfig, build_network, profile_config
from .scorer import ScoringError, epe_score, single_matrix_score

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("arch", "dataset", "val_acc", "test_acc")
SCATTER_COLUMNS = ("arch", "score", "val_acc", "test_acc")

Scorer = Callable[[CellSpec, LabeledBatch, int], float]
BatchProvider = Callable[[int], LabeledBatch]


class IngestionError(ValueError):
    """Benchmark table file is malformed."""


class SearchError(RuntimeError):
    """No candidate could be scored."""


@dataclass(frozen=True)
class Accuracy:
    val: float
    test: float


class BenchmarkTable:
    """Read-only map ``arch string -> dataset -> Accuracy``."""

    def __init__(self, records: Optional[Dict[str, Dict[str, Accuracy]]] = None):
        self._records: Dict[str, Dict[str, Accuracy]] = {}
        for arch, per in (records or {}).items():
            key = encode(decode(arch))
            self._records[key] = dict(per)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, arch) -> bool:
        return self._key(arch) in self._records

    @staticmethod
    def _key(arch) -> str:
        if isinstance(arch, CellSpec):
            return encode(arch)
        try:
            return encode(decode(arch))
        except ArchParseError:
            return arch

    @property
    def datasets(self) -> List[str]:
        names = set()
        for per in self._records.values():
            names.update(per)
        return sorted(names)

    def archs(self) -> List[str]:
        return list(self._records)

    def has(self, arch, dataset: str) -> bool:
        return dataset in self._records.get(self._key(arch), {})

    def lookup(self, arch, dataset: str) -> Accuracy:
        key = self._key(arch)
        try:
            return self._records[key][dataset]
        except KeyError:
            raise KeyError(f"no {dataset!r} accuracy for {key}") from None


def load_benchmark(path) -> BenchmarkTable:
    records: Dict[str, Dict[str, Accuracy]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in BENCH_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise IngestionError(f"{path}:1: missing column(s) {', '.join(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                spec = decode(row["arch"])
            except ArchParseError as exc:
                raise IngestionError(f"{path}:{line}: {exc}") from None
            dataset = (row["dataset"] or "").strip()
            if not dataset:
                raise IngestionError(f"{path}:{line}: empty dataset name")
            values = []
            for col in ("val_acc", "test_acc"):
                try:
                    v = float(row[col])
                except (TypeError, ValueError):
                    raise IngestionError(f"{path}:{line}: {col} is not a number: {row[col]!r}") from None
                if not 0.0 <= v <= 100.0:
                    raise IngestionError(f"{path}:{line}: {col}={v} outside [0, 100]")
                values.append(v)
            per = records.setdefault(encode(spec), {})
            if dataset in per:
                raise IngestionError(f"{path}:{line}: duplicate row for {encode(spec)} on {dataset}")
            per[dataset] = Accuracy(*values)
    return BenchmarkTable(records)


def write_benchmark(path, table: BenchmarkTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for arch in table.archs():
            for ds in table.datasets:
                if table.has(arch, ds):
                    acc = table.lookup(arch, ds)
                    w.writerow([arch, ds, repr(acc.val), repr(acc.test)])


def candidate_seed(run_seed: int, index: int) -> int:
    """Initialization seed for candidate ``index`` of a run."""
    return int(np.random.SeedSequence([run_seed, index]).generate_state(1)[0])


class EpeScorer:
    """Builds each candidate network for the batch shape and scores it.

    ``method`` is ``"epe"`` (per-class score) or ``"single"`` (whole-batch
    correlation baseline).
    """

    def __init__(self, profile: Union[str, NetworkConfig] = "bench", method: str = "epe"):
        if method not in ("epe", "single"):
            raise ValueError(f"unknown scoring method {method!r}")
        self.profile = profile
        self.method = method

    def config_for(self, batch: LabeledBatch) -> NetworkConfig:
        K = max(batch.num_classes, 2)
        if isinstance(self.profile, NetworkConfig):
            return self.profile.with_input(batch.extent, K, batch.channels)
        return profile_config(self.profile, batch.extent, K, batch.channels)

    def __call__(self, spec: CellSpec, batch: LabeledBatch, seed: int) -> float:
        net = build_network(spec, self.config_for(batch), seed)
        if self.method == "single":
            return single_matrix_score(net, batch.images)
        return epe_score(net, batch.images, batch.labels, arch=encode(spec)).score


def synthetic_provider(n: int = 256, num_classes: int = 10, extent: int = 32) -> BatchProvider:
    return lambda seed: synthetic_batch(n, num_classes, extent, seed)


@dataclass
class SearchResult:
    selected: str
    score: float
    candidates: List[str]
    scores: List[float]
    seed: int
    seconds: float
    accuracies: Dict[str, Accuracy] = field(default_factory=dict)
    optimal: Dict[str, Accuracy] = field(default_factory=dict)

    @property
    def selected_index(self) -> int:
        return self.scores.index(self.score)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "selected": self.selected,
            "score": _json_float(self.score),
            "seconds": self.seconds,
            "candidates": self.candidates,
            "scores": [_json_float(s) for s in self.scores],
            "accuracies": {k: vars(v) for k, v in self.accuracies.items()},
            "optimal": {k: vars(v) for k, v in self.optimal.items()},
        }


def _json_float(v: float):
    return v if math.isfinite(v) else None


def _safe_score(scorer: Scorer, spec: CellSpec, batch: LabeledBatch, seed: int) -> float:
    try:
        s = float(scorer(spec, batch, seed))
    except ScoringError as exc:
        log.warning("scoring failed, treating as -inf: %s", exc)
        return -math.inf
    return s if not math.isnan(s) else -math.inf


def score_candidates(
    specs: Sequence[CellSpec],
    run_seed: int,
    scorer: Scorer,
    batch: LabeledBatch,
    jobs: int = 1,
    indices: Optional[Sequence[int]] = None,
) -> List[float]:
    """Scores in candidate order; failures become -inf.

    ``indices`` gives each candidate's position in its run (default
    0..n-1), which keys its initialization seed.
    """
    if indices is None:
        indices = range(len(specs))
    seeds = [candidate_seed(run_seed, i) for i in indices]
    if jobs <= 1:
        return [_safe_score(scorer, s, batch, sd) for s, sd in zip(specs, seeds)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda a: _safe_score(scorer, a[0], batch, a[1]), zip(specs, seeds)))


def select(scores: Sequence[float]) -> int:
    """Index of the maximum score; the first one wins ties."""
    best = None
    for i, s in enumerate(scores):
        if s == -math.inf:
            continue
        if best is None or s > scores[best]:
            best = i
    if best is None:
        raise SearchError("every candidate failed to score")
    return best


def optimal_in_sample(sample: Iterable, table: BenchmarkTable, dataset: str, key: str = "test") -> float:
    """Best trained accuracy among the sampled architectures."""
    values = [getattr(table.lookup(spec, dataset), key) for spec in sample]
    if not values:
        raise ValueError("empty sample")
    return max(values)


def random_search(
    n: int,
    seed: int,
    scorer: Scorer,
    batch_provider: BatchProvider,
    table: Optional[BenchmarkTable] = None,
    datasets: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> SearchResult:
    """Score ``n`` random cells on one batch and keep the best.

    The batch is drawn once per run from ``batch_provider(seed)``.
    """
    t0 = time.perf_counter()
    sample = random_sample(n, seed)
    batch = batch_provider(seed)
    scores = score_candidates(sample, seed, scorer, batch, jobs)
    best = select(scores)
    result = SearchResult(
        selected=encode(sample[best]),
        score=scores[best],
        candidates=[encode(s) for s in sample],
        scores=scores,
        seed=seed,
        seconds=0.0,
    )
    if table is not None:
        for ds in datasets if datasets is not None else table.datasets:
            result.accuracies[ds] = table.lookup(sample[best], ds)
            result.optimal[ds] = Accuracy(
                optimal_in_sample(sample, table, ds, "val"), optimal_in_sample(sample, table, ds, "test")
            )
    result.seconds = time.perf_counter() - t0
    return result


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample (n-1) standard deviation."""
    values = [float(v) for v in values]
    if len(values) < 2:
        raise ValueError("need at least two values for a sample standard deviation")
    return statistics.fmean(values), statistics.stdev(values)


@dataclass
class RepeatSummary:
    runs: List[SearchResult]
    stats: Dict[str, Dict[str, float]]
    seconds_mean: float
    seconds_std: float

    def to_json(self) -> dict:
        return {
            "runs": len(self.runs),
            "seeds": [r.seed for r in self.runs],
            "seconds_mean": self.seconds_mean,
            "seconds_std": self.seconds_std,
            "datasets": self.stats,
        }


def summarize(results: Sequence[SearchResult]) -> RepeatSummary:
    stats: Dict[str, Dict[str, float]] = {}
    datasets = sorted(set().union(*(r.accuracies for r in results))) if results else []
    for ds in datasets:
        row = {}
        for prefix, attr in (("", "accuracies"), ("optimal_", "optimal")):
            for key in ("val", "test"):
                m, s = mean_std([getattr(getattr(r, attr)[ds], key) for r in results])
                row[f"{prefix}{key}_mean"] = m
                row[f"{prefix}{key}_std"] = s
        stats[ds] = row
    t_mean, t_std = mean_std([r.seconds for r in results])
    return RepeatSummary(list(results), stats, t_mean, t_std)


def repeat_runs(
    runs: int,
    base_seed: int,
    n: int,
    scorer: Scorer,
    batch_provider: BatchProvider,
    table: Optional[BenchmarkTable] = None,
    datasets: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> RepeatSummary:
    """``runs`` independent searches with seeds ``base_seed, base_seed+1, ...``."""
    if runs < 2:
        raise ValueError(f"repeat_runs needs runs >= 2, got {runs}")
    results = [
        random_search(n, base_seed + r, scorer, batch_provider, table, datasets, jobs) for r in range(runs)
    ]
    return summarize(results)


def scatter_export(
    specs: Sequence, scores: Sequence[float], accuracies: Sequence[Accuracy], path
) -> None:
    """Write one CSV row per architecture for external plotting."""
    if not len(specs) == len(scores) == len(accuracies):
        raise ValueError("specs, scores and accuracies must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCATTER_COLUMNS)
        for spec, score, acc in zip(specs, scores, accuracies):
            arch = encode(spec) if isinstance(spec, CellSpec) else spec
            w.writerow([arch, repr(float(score)), repr(acc.val), repr(acc.test)])


def load_scatter(path) -> List[Tuple[str, float, Accuracy]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCATTER_COLUMNS:
            raise IngestionError(f"{path}:1: header must be {','.join(SCATTER_COLUMNS)}")
        for row in reader:
            rows.append((row["arch"], float(row["score"]), Accuracy(float(row["val_acc"]), float(row["test_acc"]))))
    return rows


def timing_benchmark(
    image_sizes: Sequence[int],
    batch: int,
    arch: CellSpec,
    profile: Union[str, NetworkConfig] = "tiny",
    num_classes: int = 10,
    repeats: int = 3,
    seed: int = 0,
) -> List[Tuple[int, float]]:
    """Median wall time of one full scoring pass per square image size."""
    for size in image_sizes:
        if size < 4 or size % 4:
            raise ValueError(f"image size must be a positive multiple of 4, got {size}")
    scorer = EpeScorer(profile)
    out = []
    for size in image_sizes:
        data = synthetic_batch(batch, num_classes, size, seed)
        net = build_network(arch, scorer.config_for(data), seed)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            epe_score(net, data.images, data.labels)
            times.append(time.perf_counter() - t0)
        out.append((size, statistics.median(times)))
    return out


def write_timing_csv(path_or_file, rows: Sequence[Tuple[int, float]]) -> None:
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(("image_size", "seconds"))
        for size, secs in rows:
            w.writerow([size, repr(secs)])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            _write(fh)
