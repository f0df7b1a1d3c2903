"""Shared fixtures: prescribed-Jacobian networks and random scoring inputs."""

import numpy as np

from epenas.engine.tensor import make_result


class JacobianNet:
    """f(x) = sum(x * J): its input gradient is exactly J, row for row."""

    def __init__(self, rows):
        self.rows = np.asarray(rows, dtype=np.float64)

    def __call__(self, x):
        J = self.rows.reshape(x.shape)
        return make_result(np.array([float((x.data * J).sum())]), (x,), lambda g: (g.reshape(()) * J,), "fixed")


def permuted_net_and_batch(rows, labels, perm):
    """The same fixture with batch order permuted, inputs and labels alike."""
    rows = np.asarray(rows)[perm]
    return JacobianNet(rows), np.zeros(rows.shape), np.asarray(labels)[perm]


def scoring_fixture(index, classes):
    """Random (rows, labels) with N <= 16 and D <= 32 when classes allow.

    With more than 100 classes every class needs a row, so N is C plus up
    to 15 extra rows. Some fixtures contain single-row classes, duplicated
    rows and all-identical blocks so the degenerate paths are exercised.
    """
    rng = np.random.default_rng([classes, index])
    D = int(rng.integers(1, 33))
    extra = int(rng.integers(0, 16 - classes + 1)) if classes <= 16 else int(rng.integers(0, 16))
    N = classes + extra
    labels = np.concatenate([np.arange(classes), rng.integers(0, classes, extra)])
    rng.shuffle(labels)
    rows = rng.standard_normal((N, D)) * rng.uniform(0.01, 10.0)
    kind = index % 4
    if kind == 1:
        # duplicate some row pairs within their class
        for c in np.unique(labels)[:3]:
            idx = np.flatnonzero(labels == c)
            if idx.size >= 2:
                rows[idx[1]] = rows[idx[0]]
    elif kind == 2:
        # one class made of identical rows: zero covariance
        c = labels[0]
        rows[labels == c] = rows[np.flatnonzero(labels == c)[0]]
    elif kind == 3:
        rows[rng.integers(0, N)] = 0.0
    # class ids need not be 0..C-1
    ids = rng.permutation(1000)[:classes]
    return rows, ids[labels]
