"""Finite-sum smooth objectives over sparse data.

The smooth part of the composite problem is F(x) = (1/n) sum_i f_i(x) with

    squared error:   f_i(x) = 0.5 (a_i'x - b_i)^2      + 0.5 ridge ||x||^2
    logistic ridge:  f_i(x) = log(1 + exp(-b_i a_i'x)) + 0.5 ridge ||x||^2

Rows a_i are stored sparse (CSR triplet) and every per-component oracle is
O(nnz(a_i)). Batch quantities are sums over the index set, not averages;
full_gradient is the n-average.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

_DENSE_LIMIT_DEFAULT = 512


class LossKind(enum.Enum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC_RIDGE = "logistic_ridge"


@dataclass(eq=False)
class Dataset:
    """Sparse design matrix in CSR form plus per-row labels.

    Treated as immutable after construction. Row indices are 0-based,
    strictly increasing within each row.
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    d: int
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.d < 1:
            raise ValueError("d must be >= 1")
        n = self.indptr.shape[0] - 1
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if self.labels.shape != (n,):
            raise ValueError(f"labels shape {self.labels.shape} != ({n},)")
        if self.indptr[0] != 0 or self.indptr[-1] != self.indices.shape[0]:
            raise ValueError("indptr endpoints inconsistent with indices")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values length mismatch")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.d:
                raise ValueError("column index out of range")
            # strictly increasing within each row; equivalently decreases only
            # at row starts
            gaps = np.diff(self.indices)
            row_starts = self.indptr[1:-1]
            bad = gaps <= 0
            bad[row_starts[(row_starts > 0) & (row_starts < self.indices.size)] - 1] = False
            if np.any(bad):
                raise ValueError("row indices must be strictly increasing")

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    @classmethod
    def from_rows(cls, rows, labels, d):
        """Build from a list of (indices, values) pairs, one per row."""
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        idx_parts, val_parts = [], []
        for k, (idx, val) in enumerate(rows):
            idx = np.asarray(idx, dtype=np.int64)
            val = np.asarray(val, dtype=np.float64)
            indptr[k + 1] = indptr[k] + idx.size
            idx_parts.append(idx)
            val_parts.append(val)
        indices = np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int64)
        values = np.concatenate(val_parts) if val_parts else np.zeros(0, np.float64)
        return cls(indptr, indices, values, np.asarray(labels, np.float64), d)

    def row(self, i: int):
        """Views of row i's (indices, values)."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def to_csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, self.indices, self.indptr), shape=(self.n, self.d)
            )
        return self._csr


@dataclass
class BatchHessianSpectrum:
    """Extreme eigenvalues of a batch-sum Hessian sum_{i in T} hess f_i."""

    lambda_lo: float
    lambda_hi: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.degenerate and not (0.0 < self.lambda_lo <= self.lambda_hi):
            raise ValueError("spectrum requires 0 < lambda_lo <= lambda_hi")


@dataclass(eq=False)
class SmoothObjective:
    """F(x) = (1/n) sum f_i(x) with per-component smoothness constants.

    component_lipschitz holds L_i (closed form by default, overridable for
    sharper data-dependent constants); strong_convexity is the conservative
    mu = ridge unless overridden. Invariants L_i > 0 and mu <= min L_i are
    enforced at build time.
    """

    dataset: Dataset
    loss: LossKind
    ridge: float
    component_lipschitz: np.ndarray
    strong_convexity: float

    def __post_init__(self):
        L = np.asarray(self.component_lipschitz, dtype=np.float64)
        if L.shape != (self.dataset.n,):
            raise ValueError("component_lipschitz must have one entry per row")
        if np.any(L <= 0.0):
            raise ValueError(
                "every component needs L_i > 0; add ridge > 0 or drop empty rows"
            )
        if self.ridge < 0.0:
            raise ValueError("ridge must be >= 0")
        if self.strong_convexity < 0.0 or self.strong_convexity > L.min() + 1e-12:
            raise ValueError("need 0 <= mu <= min_i L_i")
        if self.loss is LossKind.LOGISTIC_RIDGE:
            if not np.all(np.isin(self.dataset.labels, (-1.0, 1.0))):
                raise ValueError("logistic loss needs labels in {-1, +1}")
        self.component_lipschitz = L

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def lipschitz_mean(self) -> float:
        """L_Q = (1/n) sum_i L_i."""
        return float(np.mean(self.component_lipschitz))

    @classmethod
    def build(cls, dataset, loss, ridge=0.0, component_lipschitz=None,
              strong_convexity=None):
        if component_lipschitz is None:
            sq_norms = np.zeros(dataset.n)
            np.add.at(sq_norms, np.repeat(np.arange(dataset.n),
                                          np.diff(dataset.indptr)),
                      dataset.values ** 2)
            if loss is LossKind.SQUARED_ERROR:
                component_lipschitz = sq_norms + ridge
            else:
                component_lipschitz = 0.25 * sq_norms + ridge
        if strong_convexity is None:
            strong_convexity = ridge
        return cls(dataset, loss, ridge, component_lipschitz, strong_convexity)


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return np.logaddexp(0.0, z)


def smooth_value(obj: SmoothObjective, x: np.ndarray) -> float:
    """F(x)."""
    z = obj.dataset.to_csr() @ x
    b = obj.dataset.labels
    if obj.loss is LossKind.SQUARED_ERROR:
        data = 0.5 * np.mean((z - b) ** 2)
    else:
        data = np.mean(_softplus(-b * z))
    return float(data + 0.5 * obj.ridge * (x @ x))


def _loss_coef(obj, i, zi):
    """Scalar c with data-gradient c * a_i at margin zi = a_i'x."""
    b = obj.dataset.labels[i]
    if obj.loss is LossKind.SQUARED_ERROR:
        return zi - b
    return -b * expit(-b * zi)


def component_gradient(obj: SmoothObjective, i: int, x: np.ndarray) -> np.ndarray:
    """grad f_i(x), O(nnz) plus the dense ridge term."""
    if not 0 <= i < obj.n:
        raise IndexError(f"component {i} out of range")
    idx, val = obj.dataset.row(i)
    zi = float(val @ x[idx])
    g = obj.ridge * x
    g[idx] += _loss_coef(obj, i, zi) * val
    return g


def batch_slabs(ds: Dataset, rows: np.ndarray):
    """Flat view of a row batch: (cols, vals, row_ids).

    row_ids maps each flat entry back to its position in `rows`; duplicate
    and empty rows are handled. This is the O(nnz(batch)) gather behind all
    batch kernels (scipy row slicing carries too much per-call overhead for
    tiny batches in the inner loop).
    """
    starts = ds.indptr[rows]
    counts = ds.indptr[rows + 1] - starts
    total = int(counts.sum())
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(total, dtype=np.int64) + np.repeat(starts - offsets, counts)
    row_ids = np.repeat(np.arange(rows.size, dtype=np.int64), counts)
    return ds.indices[pos], ds.values[pos], row_ids


def batch_margins(ds: Dataset, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    """a_i'x for each row i in the batch."""
    cols, vals, rid = batch_slabs(ds, rows)
    return np.bincount(rid, weights=vals * x[cols], minlength=rows.size)


def batch_gradient(obj: SmoothObjective, batch: np.ndarray, x: np.ndarray) -> np.ndarray:
    """grad f_S(x) = sum_{i in S} grad f_i(x). S is a sum, not an average."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    cols, vals, rid = batch_slabs(obj.dataset, batch)
    z = np.bincount(rid, weights=vals * x[cols], minlength=batch.size)
    b = obj.dataset.labels[batch]
    if obj.loss is LossKind.SQUARED_ERROR:
        coef = z - b
    else:
        coef = -b * expit(-b * z)
    acc = np.bincount(cols, weights=coef[rid] * vals, minlength=obj.d)
    acc += (batch.size * obj.ridge) * x
    return acc


def full_gradient(obj: SmoothObjective, x: np.ndarray) -> np.ndarray:
    """grad F(x) = (1/n) sum_i grad f_i(x), fixed-order vectorized reduction."""
    A = obj.dataset.to_csr()
    z = A @ x
    b = obj.dataset.labels
    if obj.loss is LossKind.SQUARED_ERROR:
        coef = z - b
    else:
        coef = -b * expit(-b * z)
    return (A.T @ coef) / obj.n + obj.ridge * x


def _hess_weights(obj, batch, x):
    """Per-row curvature weights w_i at x: hess f_i = w_i a_i a_i' + ridge I."""
    if obj.loss is LossKind.SQUARED_ERROR:
        return np.ones(batch.size)
    z = batch_margins(obj.dataset, batch, x)
    s = expit(obj.dataset.labels[batch] * z)
    return s * (1.0 - s)


def hessian_vec(obj: SmoothObjective, batch: np.ndarray, x: np.ndarray,
                s: np.ndarray) -> np.ndarray:
    """(sum_{i in T} hess f_i(x)) s without forming the matrix."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    cols, vals, rid = batch_slabs(obj.dataset, batch)
    q = np.bincount(rid, weights=vals * s[cols], minlength=batch.size)
    coef = _hess_weights(obj, batch, x) * q
    out = np.bincount(cols, weights=coef[rid] * vals, minlength=obj.d)
    out += (batch.size * obj.ridge) * s
    return out


def dense_batch_hessian(obj: SmoothObjective, batch: np.ndarray, x: np.ndarray,
                        dense_limit: int = _DENSE_LIMIT_DEFAULT) -> np.ndarray:
    """Assemble sum_{i in T} hess f_i(x) densely. Guarded by dense_limit."""
    batch = np.asarray(batch, dtype=np.int64)
    if obj.d > dense_limit:
        raise ValueError(f"d = {obj.d} exceeds dense limit {dense_limit}")
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    w = _hess_weights(obj, batch, x)
    H = np.zeros((obj.d, obj.d))
    for k, i in enumerate(batch):
        idx, val = obj.dataset.row(i)
        H[np.ix_(idx, idx)] += w[k] * np.outer(val, val)
    H[np.diag_indices(obj.d)] += batch.size * obj.ridge
    return H


def batch_spectrum(obj: SmoothObjective, batch: np.ndarray, x: np.ndarray,
                   dense_limit: int = _DENSE_LIMIT_DEFAULT) -> BatchHessianSpectrum:
    """Extreme eigenvalues (lambda_lo, lambda_hi) of the batch-sum Hessian.

    A numerically nonpositive lambda_lo (possible only at ridge = 0) is
    reported with the degenerate flag instead of raising.
    """
    H = dense_batch_hessian(obj, batch, x, dense_limit)
    eigs = np.linalg.eigvalsh(H)
    lo, hi = float(eigs[0]), float(eigs[-1])
    tiny = 1e-12 * max(1.0, abs(hi))
    if lo <= tiny:
        return BatchHessianSpectrum(max(lo, 0.0), hi, degenerate=True)
    return BatchHessianSpectrum(lo, hi)
