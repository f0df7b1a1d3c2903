"""Command-line entry point.

Data goes to stdout or ``--out`` files, diagnostics to stderr. Exit codes:
0 success, 1 usage or input error, 2 scoring error.
"""

from __future__ import annotations

import argparse
import csv
import importlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .archspace import ArchParseError, decode, encode, enumerate_all, random_sample
from .data import CIFAR10_MEAN, CIFAR10_STD, DataFormatError, DataRangeError, load_batch, synthetic_batch
from .network import PROFILES, ConfigError, build_network
from .scorer import ScoringError, epe_score
from .search import (
    EpeScorer,
    IngestionError,
    SearchError,
    load_benchmark,
    repeat_runs,
    scatter_export,
    score_candidates,
    timing_benchmark,
    write_timing_csv,
)
from .stats import UndefinedCorrelationError, rank_correlation

log = logging.getLogger("epenas")

DEFAULT_ARCH = "|nor_conv_3x3~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|skip_connect~0|nor_conv_3x3~1|nor_conv_3x3~2|"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: Optional[str] = None
    bench_table: Optional[str] = None
    batch_size: int = 256
    n: int = 10
    runs: int = 3
    seed: int = 0
    profile: str = "bench"
    out: Optional[str] = None
    format: str = "json"
    jobs: int = 1
    dataset: str = "cifar10"
    scorer: str = "epe"
    mean: Sequence[float] = CIFAR10_MEAN
    std: Sequence[float] = CIFAR10_STD
    data_split: Optional[str] = None

    def validate(self) -> None:
        for name in ("data", "bench_table"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise UsageError(f"--{name.replace('_', '-')}: no such file: {path}")
        if self.n < 1:
            raise UsageError(f"--n must be >= 1, got {self.n}")
        if self.batch_size < 1:
            raise UsageError(f"--batch-size must be >= 1, got {self.batch_size}")
        if self.jobs < 1:
            raise UsageError(f"--jobs must be >= 1, got {self.jobs}")
        if self.profile not in PROFILES:
            raise UsageError(f"--profile must be one of {sorted(PROFILES)}")
        if self.format not in ("json", "csv"):
            raise UsageError("--format must be json or csv")

    def batch_provider(self):
        if self.data is None:
            return lambda seed: synthetic_batch(self.batch_size, 10, 32, seed)
        return lambda seed: load_batch(self.data, self.batch_size, seed, self.mean, self.std)

    def make_scorer(self):
        if self.scorer in ("epe", "single"):
            return EpeScorer(self.profile, self.scorer)
        module, _, attr = self.scorer.partition(":")
        if not attr:
            raise UsageError(f"--scorer must be epe, single or module:callable, got {self.scorer!r}")
        try:
            return getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise UsageError(f"--scorer {self.scorer!r}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    env = os.environ.get("EPE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"EPE_SEED must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default: $EPE_SEED or 0)")
    common.add_argument("--batch-size", type=int, default=argparse.SUPPRESS)
    common.add_argument("--data", default=argparse.SUPPRESS, help="CIFAR-10 binary file or EPEB batch")
    common.add_argument("--profile", choices=sorted(PROFILES), default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="epenas", description="Training-free scoring and search over NAS-Bench-201 cells.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", parents=[common], help="score one architecture")
    p.add_argument("--arch", required=True)

    for name, helptext in (("search", "random search with score-based selection"), ("correlate", "score vs accuracy")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--bench-table", default=argparse.SUPPRESS)
        p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="candidates per run / sample size")
        p.add_argument("--dataset", default=argparse.SUPPRESS)
        p.add_argument("--scorer", default=argparse.SUPPRESS, help="epe, single or module:callable")
        if name == "search":
            p.add_argument("--runs", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("bench-time", parents=[common], help="scoring time per image size")
    p.add_argument("--sizes", default="32,64", help="comma-separated square extents")
    p.add_argument("--arch", default=DEFAULT_ARCH)
    p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("enumerate", help="list every cell of the space")
    p.add_argument("--out")
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError) as exc:
            raise UsageError(f"--config: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"--config: unknown keys {sorted(unknown)}")
    for name in known:
        if name in vars(args) and name != "config":
            values[name] = getattr(args, name)
    values.setdefault("seed", _default_seed())
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_score(args, cfg: RunConfig) -> int:
    try:
        spec = decode(args.arch)
    except ArchParseError as exc:
        raise UsageError(str(exc)) from None
    batch = cfg.batch_provider()(cfg.seed)
    net = build_network(spec, EpeScorer(cfg.profile).config_for(batch), cfg.seed)
    report = epe_score(net, batch.images, batch.labels, arch=encode(spec))
    payload = report.to_json()
    if cfg.format == "json":
        _emit(json.dumps(payload) + "\n", cfg.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(("arch", "score", "branch", "num_classes", "seconds"))
        w.writerow([payload["arch"], repr(report.score), report.branch, report.num_classes, repr(report.seconds)])
        _emit(buf.getvalue(), cfg.out)
    return 0


def _require_table(cfg: RunConfig):
    if cfg.bench_table is None:
        raise UsageError("--bench-table is required")
    try:
        return load_benchmark(cfg.bench_table)
    except IngestionError as exc:
        raise UsageError(str(exc)) from None


def cmd_search(args, cfg: RunConfig) -> int:
    table = _require_table(cfg)
    if cfg.runs < 2:
        raise UsageError(f"--runs must be >= 2, got {cfg.runs}")
    if cfg.dataset not in table.datasets:
        raise UsageError(f"dataset {cfg.dataset!r} not in table (has {table.datasets})")
    summary = repeat_runs(
        cfg.runs, cfg.seed, cfg.n, cfg.make_scorer(), cfg.batch_provider(), table, [cfg.dataset], cfg.jobs
    )
    out_dir = Path(cfg.out or "search_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = summary.to_json()
    doc.update({"n": cfg.n, "profile": cfg.profile, "data": cfg.data, "bench_table": cfg.bench_table})
    (out_dir / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    with open(out_dir / "runs.jsonl", "w") as fh:
        for r in summary.runs:
            fh.write(json.dumps(r.to_json()) + "\n")
    with open(out_dir / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("seed", "selected", "score", "val_acc", "test_acc", "optimal_val", "optimal_test", "seconds"))
        for r in summary.runs:
            acc, opt = r.accuracies[cfg.dataset], r.optimal[cfg.dataset]
            w.writerow([r.seed, r.selected, repr(r.score), acc.val, acc.test, opt.val, opt.test, repr(r.seconds)])

    stats = summary.stats[cfg.dataset]
    if cfg.format == "json":
        sys.stdout.write(json.dumps({"dataset": cfg.dataset, **stats}) + "\n")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(("dataset", "metric", "mean", "std"))
        for metric in ("val", "test", "optimal_val", "optimal_test"):
            w.writerow([cfg.dataset, metric, stats[f"{metric}_mean"], stats[f"{metric}_std"]])
    return 0


def cmd_correlate(args, cfg: RunConfig) -> int:
    table = _require_table(cfg)
    sample = random_sample(cfg.n, cfg.seed)
    present = [i for i, s in enumerate(sample) if table.has(s, cfg.dataset)]
    missing = [encode(sample[i]) for i in range(len(sample)) if i not in set(present)]
    for arch in missing:
        log.warning("not in benchmark table, skipped: %s", arch)
    if missing:
        print(f"warning: {len(missing)} sampled architecture(s) missing from table", file=sys.stderr)
    specs = [sample[i] for i in present]
    batch = cfg.batch_provider()(cfg.seed)
    scorer = cfg.make_scorer()
    # seeds follow the position in the full sample so skipping does not shift them
    scores = score_candidates(specs, cfg.seed, scorer, batch, cfg.jobs, indices=present)
    accs = [table.lookup(s, cfg.dataset) for s in specs]
    scatter_export(specs, scores, accs, cfg.out or "correlate.csv")
    finite = [(s, a.test) for s, a in zip(scores, accs) if math.isfinite(s)]
    failed = len(scores) - len(finite)
    if failed:
        print(f"warning: {failed} architecture(s) failed to score", file=sys.stderr)
    try:
        stats = rank_correlation(finite).to_json()
    except (UndefinedCorrelationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stats.update({"dataset": cfg.dataset, "sampled": len(sample), "missing": len(missing), "failed": failed})
    sys.stdout.write(json.dumps(stats) + "\n")
    return 0


def cmd_bench_time(args, cfg: RunConfig) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    if not sizes:
        raise UsageError("--sizes is empty")
    bad = [s for s in sizes if s < 4 or s % 4]
    if bad:
        raise UsageError(f"image sizes must be positive multiples of 4: {bad}")
    try:
        spec = decode(args.arch)
    except ArchParseError as exc:
        raise UsageError(str(exc)) from None
    rows = timing_benchmark(sizes, cfg.batch_size, spec, cfg.profile, repeats=args.repeats, seed=cfg.seed)
    if cfg.out:
        write_timing_csv(cfg.out, rows)
    else:
        write_timing_csv(sys.stdout, rows)
    return 0


def cmd_enumerate(args) -> int:
    text = "".join(encode(s) + "\n" for s in enumerate_all())
    _emit(text, args.out)
    return 0


COMMANDS = {"score": cmd_score, "search": cmd_search, "correlate": cmd_correlate, "bench-time": cmd_bench_time}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help, --version and bad flags; report the code instead
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "enumerate":
            return cmd_enumerate(args)
        cfg = make_config(args)
        if args.command == "correlate" and cfg.n < 1:
            raise UsageError("--n must be >= 1")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"epenas {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, DataRangeError, ConfigError) as exc:
        print(f"epenas {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ScoringError, SearchError) as exc:
        print(f"epenas {args.command}: scoring error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
