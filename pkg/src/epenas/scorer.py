"""Training-free architecture score from per-class Jacobian correlations.

Pipeline: one forward/backward pass over a labeled batch gives the input
Jacobian ``J`` (one row per image, scalar = sum of all logits). Rows are
grouped by label; each group's rows are centered, their Gram matrix is
normalized to a correlation matrix, and the matrix is summarized by

    E_c = sum_ij ln(|corr_ij| + k)            C <= 100 classes in batch
    E_c = sum_ij ln(|corr_ij| + k) / N_c**2   otherwise

The network score is ``sum_c |E_c|`` or, for more than 100 classes, the
sum of pairwise ``|E_i - E_j|`` divided by C.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .engine import Tensor, backward_to_input

K_CONST = 1e-5
CLASS_BRANCH_LIMIT = 100
# a centered row counts as zero-variance below this fraction of the block's row scale
DEGENERATE_RTOL = 1e-10


class ScoringError(RuntimeError):
    """The network produced non-finite gradients."""


@dataclass(frozen=True)
class JacobianMatrix:
    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels)
        if rows.ndim != 2:
            raise ValueError(f"Jacobian rows must be 2-d, got shape {rows.shape}")
        if labels.shape != (rows.shape[0],):
            raise ValueError(f"{labels.shape[0] if labels.ndim else 0} labels for {rows.shape[0]} rows")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @property
    def num_classes(self) -> int:
        return int(np.unique(self.labels).size)


@dataclass(frozen=True)
class ClassBlock:
    label: int
    rows: np.ndarray


@dataclass(frozen=True)
class ClassCorrelation:
    label: int
    matrix: np.ndarray


@dataclass
class ScoreReport:
    score: float
    e_values: List[float]
    num_classes: int
    branch: str
    seconds: float
    arch: Optional[str] = None
    k: float = K_CONST

    def to_json(self) -> dict:
        d = asdict(self)
        del d["k"]
        return {key: d[key] for key in ("arch", "score", "branch", "num_classes", "e_values", "seconds")}


def compute_jacobian(network: Callable[[Tensor], Tensor], batch, labels, arch: Optional[str] = None) -> JacobianMatrix:
    """Rows of d(sum of logits)/d(input), one per batch element.

    Under training-mode normalization the rows carry cross-sample terms;
    the network is scored as initialized.
    """
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch, dtype=np.float64)
    x = Tensor(data, requires_grad=True)
    out = network(x)
    scalar = out if out.size == 1 else out.sum()
    n = data.shape[0]
    if scalar.requires_grad:
        grad = backward_to_input(scalar, x)
    else:
        # output does not depend on the input at all
        grad = np.zeros(data.shape)
    rows = grad.reshape(n, -1)
    if not np.all(np.isfinite(rows)):
        name = arch if arch is not None else getattr(network, "spec", "network")
        raise ScoringError(f"non-finite input gradients for {name}")
    return JacobianMatrix(rows, np.asarray(labels))


def partition_by_class(J: JacobianMatrix) -> List[ClassBlock]:
    """One block per distinct label (ascending), rows kept in batch order."""
    return [ClassBlock(int(c), J.rows[J.labels == c]) for c in np.unique(J.labels)]


def canonical_order(rows: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically, so results cannot depend on batch order."""
    if rows.shape[0] < 2:
        return rows
    return rows[np.lexsort(rows.T[::-1])]


def class_covariance(rows: np.ndarray) -> np.ndarray:
    """Unscaled covariance between rows: centered @ centered.T."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 2:
        # exact antipodal centering, so two distinct rows correlate at exactly -1
        half = (rows[0] - rows[1]) / 2
        centered = np.stack([half, -half])
    else:
        centered = rows - rows.mean(axis=0, keepdims=True)
    return centered @ centered.T


def _degenerate_mask(cov: np.ndarray, scale: float) -> np.ndarray:
    diag = np.diag(cov)
    return diag <= (DEGENERATE_RTOL * scale) ** 2


def class_correlation(cov: np.ndarray, scale: Optional[float] = None, label: int = 0) -> ClassCorrelation:
    """Normalize a covariance matrix to correlations.

    The diagonal is exactly 1; zero-variance rows get 0 off the diagonal.
    ``scale`` is the row magnitude used to decide what counts as zero; it
    defaults to the root of the largest diagonal entry.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    diag = np.diag(cov).copy()
    if scale is None:
        scale = math.sqrt(max(float(diag.max(initial=0.0)), 0.0))
    bad = _degenerate_mask(cov, scale) if scale > 0 else np.ones(diag.shape, dtype=bool)
    safe = np.where(bad, 1.0, diag)
    # sqrt of the product, not product of sqrts: exact when C_ii == C_jj
    corr = cov / np.sqrt(np.outer(safe, safe))
    corr[bad, :] = 0.0
    corr[:, bad] = 0.0
    corr[np.diag_indices_from(corr)] = 1.0
    return ClassCorrelation(label, corr)


def block_correlation(rows: np.ndarray, label: int = 0) -> ClassCorrelation:
    rows = canonical_order(np.asarray(rows, dtype=np.float64))
    scale = float(np.sqrt((rows * rows).sum(axis=1).mean())) if rows.size else 0.0
    return class_correlation(class_covariance(rows), scale=scale, label=label)


def evaluate_class(corr, num_classes: int, k: float = K_CONST) -> float:
    """Log-magnitude summary of one correlation matrix."""
    m = corr.matrix if isinstance(corr, ClassCorrelation) else np.asarray(corr)
    total = math.fsum(np.log(np.abs(m) + k).ravel().tolist())
    if num_classes <= CLASS_BRANCH_LIMIT:
        return total
    return total / m.size


def aggregate_score(e_values: Sequence[float], num_classes: Optional[int] = None) -> float:
    E = [float(e) for e in e_values]
    if not E:
        raise ValueError("aggregate_score needs at least one class evaluation")
    C = len(E) if num_classes is None else num_classes
    if C != len(E):
        raise ValueError(f"{len(E)} class evaluations for {C} classes")
    if C <= CLASS_BRANCH_LIMIT:
        return math.fsum(abs(e) for e in E)
    return math.fsum(abs(E[i] - E[j]) for i in range(C) for j in range(i + 1, C)) / C


def branch_name(num_classes: int) -> str:
    return "sum-abs" if num_classes <= CLASS_BRANCH_LIMIT else "pairwise-diff"


def score_jacobian(J: JacobianMatrix, k: float = K_CONST) -> ScoreReport:
    """Score a precomputed Jacobian; ``seconds`` covers this step only."""
    t0 = time.perf_counter()
    blocks = partition_by_class(J)
    C = len(blocks)
    e_values = [evaluate_class(block_correlation(b.rows, b.label), C, k) for b in blocks]
    score = aggregate_score(e_values, C)
    return ScoreReport(score, e_values, C, branch_name(C), time.perf_counter() - t0, k=k)


def epe_score(network, batch, labels, arch: Optional[str] = None) -> ScoreReport:
    t0 = time.perf_counter()
    J = compute_jacobian(network, batch, labels, arch=arch)
    report = score_jacobian(J)
    report.seconds = time.perf_counter() - t0
    if arch is None and hasattr(network, "spec"):
        arch = str(network.spec)
    report.arch = arch
    return report


def single_matrix_score_jacobian(J: JacobianMatrix, k: float = K_CONST) -> float:
    corr = block_correlation(J.rows)
    return abs(evaluate_class(corr, 1, k))


def single_matrix_score(network, batch) -> float:
    """Whole-batch baseline: one correlation matrix over all rows, no labels."""
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
    J = compute_jacobian(network, data, np.zeros(data.shape[0], dtype=np.int64))
    return single_matrix_score_jacobian(J)
