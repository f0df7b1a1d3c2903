"""Materialize a cell genotype on the fixed NAS-Bench-201 macro skeleton.

Layout::

    conv3x3 stem -> BN
    N cells @ C          (extent H)
    residual reduction   (C -> 2C, H -> H/2)
    N cells @ 2C
    residual reduction   (2C -> 4C, H/2 -> H/4)
    N cells @ 4C
    BN -> ReLU -> global average pool -> linear head (K logits)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

from .archspace import EDGES, CellSpec
from .engine import (
    Tensor,
    add,
    avgpool2x2,
    avgpool3x3,
    batchnorm_train,
    conv2d,
    conv_params,
    global_avg_pool,
    linear,
    linear_params,
    norm_params,
    relu,
)


class ConfigError(ValueError):
    """Invalid network configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    channels: int = 16
    cells_per_stage: int = 5
    num_classes: int = 10
    in_channels: int = 3
    extent: int = 32

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if self.cells_per_stage < 1:
            raise ConfigError(f"cells_per_stage must be >= 1, got {self.cells_per_stage}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.extent < 4 or self.extent % 4:
            raise ConfigError(f"input extent must be a positive multiple of 4, got {self.extent}")

    def with_input(self, extent: int, num_classes: Optional[int] = None, in_channels: Optional[int] = None):
        return NetworkConfig(
            self.channels,
            self.cells_per_stage,
            self.num_classes if num_classes is None else num_classes,
            self.in_channels if in_channels is None else in_channels,
            extent,
        )


PROFILES = {
    "bench": NetworkConfig(channels=16, cells_per_stage=5),
    "tiny": NetworkConfig(channels=8, cells_per_stage=1),
}


def profile_config(name: str, extent: int = 32, num_classes: int = 10, in_channels: int = 3) -> NetworkConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return base.with_input(extent, num_classes, in_channels)


class _Counter:
    def __init__(self):
        self.value = 0

    def next(self) -> int:
        self.value += 1
        return self.value - 1


class ReLUConvBN:
    def __init__(self, cin: int, cout: int, kernel: int, stride: int, seed: int, counter: _Counter):
        self.stride = stride
        self.conv = conv_params(cin, cout, kernel, seed, counter.next())
        self.norm = norm_params(cout)

    def __call__(self, x: Tensor) -> Tensor:
        return batchnorm_train(conv2d(relu(x), self.conv, stride=self.stride), self.norm)


class Zero:
    def __call__(self, x: Tensor) -> Tensor:
        return Tensor.zeros(x.shape)


class Identity:
    def __call__(self, x: Tensor) -> Tensor:
        return x


class AvgPool:
    def __call__(self, x: Tensor) -> Tensor:
        return avgpool3x3(x)


def _edge_op(index: int, channels: int, seed: int, counter: _Counter):
    if index == 0:
        return Zero()
    if index == 1:
        return Identity()
    if index == 2:
        return ReLUConvBN(channels, channels, 1, 1, seed, counter)
    if index == 3:
        return ReLUConvBN(channels, channels, 3, 1, seed, counter)
    return AvgPool()


def _sum(terms: Sequence[Tensor]) -> Tensor:
    # constants (zeroize edges) are skipped unless nothing else arrives
    live = [t for t in terms if t.op != "zeros"]
    if not live:
        return terms[0]
    out = live[0]
    for t in live[1:]:
        out = add(out, t)
    return out


class Cell:
    """One genotype instance; node j = sum over i<j of edge_op(i->j)(node i)."""

    def __init__(self, spec: CellSpec, channels: int, seed: int, counter: _Counter):
        self.spec = spec
        self.edges = [_edge_op(g, channels, seed, counter) for g in spec.genes]

    def __call__(self, x: Tensor, edge_order: Optional[Iterable[int]] = None) -> Tensor:
        """Evaluate the DAG.

        ``edge_order`` may list the six edge indices in any order that
        respects dependencies; node sums are always accumulated in source
        order, so the result does not depend on it.
        """
        order = range(len(EDGES)) if edge_order is None else list(edge_order)
        nodes = {0: x}
        outputs = {}
        for e in order:
            dst, src = EDGES[e]
            if src not in nodes:
                raise ValueError(f"edge {EDGES[e]} evaluated before node {src} is complete")
            outputs[e] = self.edges[e](nodes[src])
            complete = [i for i, (d, _) in enumerate(EDGES) if d == dst]
            if all(i in outputs for i in complete):
                nodes[dst] = _sum([outputs[i] for i in complete])
        if len(outputs) != len(EDGES):
            raise ValueError("edge_order must cover all six edges")
        return nodes[3]


class ResidualReduction:
    """Stride-2 ReLU-conv-BN pair, with an avg-pool + 1x1 conv shortcut."""

    def __init__(self, cin: int, cout: int, seed: int, counter: _Counter):
        self.conv_a = ReLUConvBN(cin, cout, 3, 2, seed, counter)
        self.conv_b = ReLUConvBN(cout, cout, 3, 1, seed, counter)
        self.shortcut = conv_params(cin, cout, 1, seed, counter.next())

    def __call__(self, x: Tensor) -> Tensor:
        residual = self.conv_b(self.conv_a(x))
        return add(residual, conv2d(avgpool2x2(x), self.shortcut))


class Network:
    """A freshly initialized cell network; calling it returns logits [B, K]."""

    def __init__(self, spec: CellSpec, cfg: NetworkConfig, seed: int):
        self.spec = spec
        self.cfg = cfg
        self.seed = seed
        counter = _Counter()
        C = cfg.channels
        self.stem = conv_params(cfg.in_channels, C, 3, seed, counter.next())
        self.stem_norm = norm_params(C)
        self.blocks: List = []
        widths = (C, 2 * C, 4 * C)
        for stage, width in enumerate(widths):
            if stage:
                self.blocks.append(ResidualReduction(widths[stage - 1], width, seed, counter))
            for _ in range(cfg.cells_per_stage):
                self.blocks.append(Cell(spec, width, seed, counter))
        self.last_norm = norm_params(4 * C)
        self.head = linear_params(4 * C, cfg.num_classes, seed, counter.next())
        self.num_layers = counter.value

    def __call__(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.data.ndim != 4 or x.shape[1:] != (cfg.in_channels, cfg.extent, cfg.extent):
            raise ConfigError(
                f"network expects [B,{cfg.in_channels},{cfg.extent},{cfg.extent}] input, got {x.shape}"
            )
        h = batchnorm_train(conv2d(x, self.stem), self.stem_norm)
        for block in self.blocks:
            h = block(h)
        h = relu(batchnorm_train(h, self.last_norm))
        return linear(global_avg_pool(h), self.head)

    def __repr__(self) -> str:
        return f"Network({self.spec}, {self.cfg}, seed={self.seed})"


def build_network(spec: CellSpec, cfg: NetworkConfig, seed: int) -> Network:
    return Network(spec, cfg, seed)
