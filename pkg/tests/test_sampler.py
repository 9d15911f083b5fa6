import itertools
import math

import numpy as np
import pytest

from proxsqn import (
    EnumerationLimitError,
    Sampler,
    SamplingScheme,
    SchemeKind,
    component_gradient,
    enumerate_estimator_stats,
    full_gradient,
    make_rng,
    make_snapshot,
    vr_gradient,
)
from proxsqn.sampler import _floyd_sample


# ---------------------------------------------------------------- floyd sampling


def test_floyd_sample_shape_and_range():
    rng = make_rng(41)
    for n, b in [(10, 1), (10, 3), (10, 10), (5, 4)]:
        for _ in range(50):
            s = _floyd_sample(rng, n, b)
            assert s.size == b
            assert np.all(np.diff(s) > 0)  # sorted, unique
            assert s.min() >= 0 and s.max() < n


def test_floyd_sample_uniform_frequencies():
    rng = make_rng(42)
    draws = 30000
    counts = {}
    for _ in range(draws):
        key = tuple(_floyd_sample(rng, 5, 2))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 10
    p = 1.0 / 10.0
    sigma = math.sqrt(draws * p * (1 - p))
    assert max(abs(c - draws * p) for c in counts.values()) <= 4 * sigma


def test_sampler_determinism(sq_small):
    scheme = SamplingScheme(SchemeKind.UNIFORM_BATCH, 2, seed=9)
    a = [Sampler(sq_small, scheme).draw().indices for _ in range(1)]
    b = [Sampler(sq_small, scheme).draw().indices for _ in range(1)]
    assert np.array_equal(a[0], b[0])
    s1, s2 = Sampler(sq_small, scheme), Sampler(sq_small, scheme)
    for _ in range(20):
        assert np.array_equal(s1.draw().indices, s2.draw().indices)


# ---------------------------------------------------------------- schemes


def test_scheme_validation(sq_small):
    with pytest.raises(ValueError, match="b = 1"):
        SamplingScheme(SchemeKind.WEIGHTED_SINGLE, 2)
    with pytest.raises(ValueError, match=">= 1"):
        SamplingScheme(SchemeKind.UNIFORM_BATCH, 0)
    with pytest.raises(ValueError, match="exceeds n"):
        Sampler(sq_small, SamplingScheme(SchemeKind.UNIFORM_BATCH, 99))
    # replacement draws may exceed n
    Sampler(sq_small, SamplingScheme(SchemeKind.WEIGHTED_REPLACEMENT, 99))


def test_uniform_batch_weights(sq_small):
    s = Sampler(sq_small, SamplingScheme(SchemeKind.UNIFORM_BATCH, 3))
    batch = s.draw()
    assert np.array_equal(batch.weights, [3.0, 3.0, 3.0])
    assert not batch.full
    full = Sampler(sq_small,
                   SamplingScheme(SchemeKind.UNIFORM_BATCH, 6)).draw()
    assert full.full
    assert np.array_equal(full.indices, np.arange(6))


def test_weighted_single_weights(sq_small):
    L = sq_small.component_lipschitz
    q = L / L.sum()
    s = Sampler(sq_small, SamplingScheme(SchemeKind.WEIGHTED_SINGLE, 1))
    for _ in range(30):
        batch = s.draw()
        i = int(batch.indices[0])
        assert batch.weights[0] == pytest.approx(sq_small.n * q[i])


def test_weighted_batch_weights(sq_small):
    L = sq_small.component_lipschitz
    n, b = sq_small.n, 2
    s = Sampler(sq_small, SamplingScheme(SchemeKind.WEIGHTED_BATCH, b))
    total = sum(L[list(S)].sum()
                for S in itertools.combinations(range(n), b))
    for _ in range(20):
        batch = s.draw()
        q = L[batch.indices].sum() / total
        want = math.comb(n, b) * b * q
        assert np.allclose(batch.weights, want)


def test_weighted_batch_enumeration_guard():
    # C(30, 15) = 155 million blows the support guard
    from proxsqn import Dataset, LossKind, SmoothObjective
    rows = [(np.array([0]), np.array([1.0]))] * 30
    ds = Dataset.from_rows(rows, np.ones(30), 1)
    obj = SmoothObjective.build(ds, LossKind.SQUARED_ERROR, ridge=0.1)
    with pytest.raises(EnumerationLimitError):
        Sampler(obj, SamplingScheme(SchemeKind.WEIGHTED_BATCH, 15))


def test_weighted_replacement_weights(sq_small):
    L = sq_small.component_lipschitz
    p = L / L.sum()
    s = Sampler(sq_small, SamplingScheme(SchemeKind.WEIGHTED_REPLACEMENT, 3))
    batch = s.draw()
    assert np.allclose(batch.weights, sq_small.n * 3 * p[batch.indices])


# ---------------------------------------------------------------- estimator


def test_vr_gradient_formula(sq_small, log_small):
    from proxsqn import Batch

    rng = make_rng(43)
    for obj in (sq_small, log_small):
        xt = rng.standard_normal(obj.d)
        x = rng.standard_normal(obj.d)
        snap = make_snapshot(obj, xt)
        idx = np.array([1, 3, 4])
        w = np.array([2.0, 3.0, 5.0])
        v = vr_gradient(obj, snap, Batch(idx, w), x)
        want = snap.full_grad.copy()
        for i, wi in zip(idx, w):
            want += (component_gradient(obj, int(i), x)
                     - component_gradient(obj, int(i), xt)) / wi
        assert np.allclose(v, want, atol=1e-12)


def test_vr_gradient_at_snapshot_is_exact(sq_small):
    from proxsqn import Batch

    rng = make_rng(44)
    x = rng.standard_normal(sq_small.d)
    snap = make_snapshot(sq_small, x)
    v = vr_gradient(sq_small, snap, Batch(np.array([0, 2]),
                                          np.array([2.0, 2.0])), x)
    assert np.array_equal(v, snap.full_grad)  # bitwise


def test_vr_gradient_full_batch_is_full_gradient(sq_small):
    from proxsqn import Batch

    rng = make_rng(45)
    x = rng.standard_normal(sq_small.d)
    xt = rng.standard_normal(sq_small.d)
    snap = make_snapshot(sq_small, xt)
    n = sq_small.n
    v = vr_gradient(sq_small, snap,
                    Batch(np.arange(n), np.full(n, float(n)), full=True), x)
    assert np.array_equal(v, full_gradient(sq_small, x))  # bitwise


def test_snapshot_is_a_copy(sq_small):
    x = np.ones(sq_small.d)
    snap = make_snapshot(sq_small, x)
    x[0] = 99.0
    assert snap.x_tilde[0] == 1.0


@pytest.mark.parametrize("kind,b", [
    (SchemeKind.UNIFORM_BATCH, 2),
    (SchemeKind.WEIGHTED_SINGLE, 1),
    (SchemeKind.WEIGHTED_BATCH, 2),
    (SchemeKind.WEIGHTED_REPLACEMENT, 2),
])
def test_estimator_unbiased_all_schemes(sq_small, kind, b):
    rng = make_rng(46)
    for _ in range(3):
        xt = rng.standard_normal(sq_small.d)
        x = rng.standard_normal(sq_small.d)
        snap = make_snapshot(sq_small, xt)
        stats = enumerate_estimator_stats(sq_small, snap,
                                          SamplingScheme(kind, b), x)
        g = full_gradient(sq_small, x)
        assert np.max(np.abs(stats.mean - g)) <= 1e-12
        assert stats.mean_sq_deviation >= 0.0


def test_enumeration_guard():
    from proxsqn import Dataset, LossKind, SmoothObjective

    rows = [(np.array([0]), np.array([1.0]))] * 25
    ds = Dataset.from_rows(rows, np.ones(25), 1)
    obj = SmoothObjective.build(ds, LossKind.SQUARED_ERROR, ridge=0.1)
    snap = make_snapshot(obj, np.zeros(1))
    with pytest.raises(EnumerationLimitError):
        enumerate_estimator_stats(
            obj, snap, SamplingScheme(SchemeKind.UNIFORM_BATCH, 12),
            np.zeros(1))
