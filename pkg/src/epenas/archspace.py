"""NAS-Bench-201 cell genotypes and their canonical text encoding.

A cell is a 4-node DAG; every node j > 0 receives one edge from each
earlier node. The six edges, in gene order, are::

    (1,0) (2,0) (2,1) (3,0) (3,1) (3,2)      # (target, source)

Each gene picks one of five operations, so the space holds 5**6 cells.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

OPS = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")
NUM_OPS = len(OPS)
EDGES: Tuple[Tuple[int, int], ...] = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
NUM_EDGES = len(EDGES)
SPACE_SIZE = NUM_OPS**NUM_EDGES

_TOKEN = re.compile(r"^([a-z0-9_]+)~(\d+)$")


class ArchParseError(ValueError):
    """Malformed architecture string."""


@dataclass(frozen=True, order=True)
class CellSpec:
    """Six operation indices, one per edge in ``EDGES`` order."""

    genes: Tuple[int, ...]

    def __post_init__(self):
        genes = tuple(int(g) for g in self.genes)
        if len(genes) != NUM_EDGES:
            raise ValueError(f"a cell has {NUM_EDGES} genes, got {len(genes)}")
        for (dst, src), g in zip(EDGES, genes):
            if not 0 <= g < NUM_OPS:
                raise ValueError(f"gene for edge ({dst},{src}) out of range: {g}")
        object.__setattr__(self, "genes", genes)

    def op(self, edge: int) -> str:
        return OPS[self.genes[edge]]

    def to_json(self) -> List[int]:
        return list(self.genes)

    @classmethod
    def from_json(cls, value: Sequence[int]) -> "CellSpec":
        return cls(tuple(value))

    def __str__(self) -> str:
        return encode(self)


def encode(spec: CellSpec) -> str:
    groups = []
    edge = 0
    for node in (1, 2, 3):
        tokens = []
        for src in range(node):
            tokens.append(f"{OPS[spec.genes[edge]]}~{src}")
            edge += 1
        groups.append("|" + "|".join(tokens) + "|")
    return "+".join(groups)


def decode(text: str) -> CellSpec:
    """Parse ``|op~0|+|op~0|op~1|+|op~0|op~1|op~2|`` into a CellSpec."""
    groups = text.strip().split("+")
    if len(groups) != 3:
        raise ArchParseError(f"expected 3 node groups separated by '+', got {len(groups)}: {text!r}")
    genes = []
    for node, group in enumerate(groups, start=1):
        if not (group.startswith("|") and group.endswith("|")) or len(group) < 2:
            raise ArchParseError(f"node {node} group must be wrapped in '|': {group!r}")
        tokens = group[1:-1].split("|")
        if len(tokens) != node:
            raise ArchParseError(f"node {node} needs {node} incoming edges, got {len(tokens)}: {group!r}")
        for src, token in enumerate(tokens):
            m = _TOKEN.match(token)
            if m is None:
                raise ArchParseError(f"edge ({node},{src}): malformed token {token!r}")
            name, source = m.group(1), int(m.group(2))
            if source != src:
                raise ArchParseError(f"edge ({node},{src}): token {token!r} names source {source}")
            if name not in OPS:
                raise ArchParseError(f"edge ({node},{src}): unknown operation {name!r}")
            genes.append(OPS.index(name))
    return CellSpec(tuple(genes))


def enumerate_all() -> Iterator[CellSpec]:
    """Every cell, in lexicographic gene order."""
    for genes in itertools.product(range(NUM_OPS), repeat=NUM_EDGES):
        yield CellSpec(genes)


def index_of(spec: CellSpec) -> int:
    """Position of ``spec`` in ``enumerate_all`` order."""
    idx = 0
    for g in spec.genes:
        idx = idx * NUM_OPS + g
    return idx


def random_sample(n: int, seed: int) -> List[CellSpec]:
    """``n`` cells drawn uniformly with replacement."""
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    genes = np.random.default_rng(seed).integers(0, NUM_OPS, size=(n, NUM_EDGES))
    return [CellSpec(tuple(row)) for row in genes.tolist()]
