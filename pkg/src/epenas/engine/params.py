"""Layer parameters and deterministic initialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class LayerParams:
    """Weights of one layer plus the key they were drawn from.

    ``weight`` is a conv kernel ``[Cout, Cin, k, k]``, a linear matrix
    ``[K, F]`` or a normalization scale ``[C]``; ``bias`` is the matching
    shift. ``seed``/``layer_index`` are ``None`` for hand-built params.
    """

    weight: np.ndarray
    bias: np.ndarray
    seed: Optional[int] = None
    layer_index: Optional[int] = None

    def __post_init__(self):
        for name in ("weight", "bias"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def layer_rng(seed: int, layer_index: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, layer_index)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, layer_index])))


def conv_params(cin: int, cout: int, kernel: int, seed: int, layer_index: int) -> LayerParams:
    """He-normal kernel (fan-in scaled), zero bias."""
    std = np.sqrt(2.0 / (cin * kernel * kernel))
    w = layer_rng(seed, layer_index).standard_normal((cout, cin, kernel, kernel)) * std
    return LayerParams(w, np.zeros(cout), seed, layer_index)


def linear_params(fin: int, fout: int, seed: int, layer_index: int) -> LayerParams:
    std = np.sqrt(2.0 / fin)
    w = layer_rng(seed, layer_index).standard_normal((fout, fin)) * std
    return LayerParams(w, np.zeros(fout), seed, layer_index)


def norm_params(channels: int) -> LayerParams:
    """Identity affine transform: scale 1, shift 0."""
    return LayerParams(np.ones(channels), np.zeros(channels))
