"""Linear operator plumbing: adjoints, counters, composition."""

import numpy as np
import pytest

from buqo.grid import Mask
from buqo.linops import (Compose, DenseMatrix, Gradient, Identity,
                         IndexSelect, MaskSelect, Scale, VStack,
                         adjoint_mismatch, masked_select, power_method)


def test_dense_matrix_matches_numpy():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(5, 3))
    op = DenseMatrix(m)
    v = rng.normal(size=3)
    u = rng.normal(size=5)
    np.testing.assert_allclose(op.apply(v), m @ v)
    np.testing.assert_allclose(op.adjoint(u), m.T @ u)


def test_counters_increment_per_evaluation():
    op = Identity(4)
    assert (op.forward_count, op.adjoint_count) == (0, 0)
    op.apply(np.ones(4))
    op.apply(np.ones(4))
    op.adjoint(np.ones(4))
    assert (op.forward_count, op.adjoint_count) == (2, 1)


def test_dimension_guards():
    op = DenseMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError):
        op.apply(np.ones(2))
    with pytest.raises(ValueError):
        op.adjoint(np.ones(3))


def test_scale_counts_against_wrapped_operator():
    inner = Identity(3)
    op = Scale(inner, 2.5)
    np.testing.assert_allclose(op.apply([1, 2, 3]), [2.5, 5.0, 7.5])
    assert inner.forward_count == 1
    np.testing.assert_allclose(op.adjoint([1, 0, 0]), [2.5, 0, 0])
    assert inner.adjoint_count == 1


def test_compose_order_and_counts():
    rng = np.random.default_rng(1)
    a = DenseMatrix(rng.normal(size=(4, 3)))
    b = DenseMatrix(rng.normal(size=(2, 4)))
    op = Compose(b, a)  # b(a(v))
    v = rng.normal(size=3)
    np.testing.assert_allclose(op.apply(v), b.matrix @ (a.matrix @ v))
    assert a.forward_count == 1 and b.forward_count == 1
    with pytest.raises(ValueError):
        Compose(a, b)  # dims clash


def test_vstack_blocks():
    a = Identity(3)
    b = DenseMatrix(np.ones((1, 3)))
    op = VStack([a, b])
    assert (op.input_dim, op.output_dim) == (3, 4)
    out = op.apply([1.0, 2.0, 3.0])
    np.testing.assert_allclose(out, [1, 2, 3, 6])
    back = op.adjoint([1, 1, 1, 2.0])
    np.testing.assert_allclose(back, [3, 3, 3])


@pytest.mark.parametrize("make", [
    lambda: DenseMatrix(np.random.default_rng(2).normal(size=(7, 5))),
    lambda: Gradient(5, 4),
    lambda: IndexSelect([0, 3, 7], 9),
    lambda: VStack([Identity(6), Gradient(2, 3)]),
    lambda: Compose(DenseMatrix(np.random.default_rng(3).normal(size=(2, 4))),
                    DenseMatrix(np.random.default_rng(4).normal(size=(4, 3)))),
    lambda: Scale(Gradient(3, 3), -1.7),
])
def test_adjoint_identity_random_probes(make):
    op = make()
    rng = np.random.default_rng(5)
    for _ in range(10):
        assert adjoint_mismatch(op, rng) < 1e-12


def test_mask_select_round_trip():
    mask = Mask(2, 3, [0, 1, 0, 1, 1, 0])
    op = MaskSelect(mask)
    s = op.apply([10.0, 11, 12, 13, 14, 15])
    np.testing.assert_allclose(s, [11, 13, 14])
    # select(adjoint(s)) is the identity on the masked subspace
    np.testing.assert_allclose(op.apply(op.adjoint(s)), s)
    emb = op.adjoint([1.0, 2.0, 3.0])
    np.testing.assert_allclose(emb, [0, 1, 0, 2, 3, 0])


def test_mask_select_rejects_empty():
    with pytest.raises(ValueError):
        MaskSelect(Mask(2, 2, [0, 0, 0, 0]))


def test_masked_select_helper():
    mask = Mask(1, 4, [1, 0, 0, 1])
    np.testing.assert_allclose(masked_select(mask, [5.0, 6, 7, 8]), [5, 8])
    with pytest.raises(ValueError):
        masked_select(mask, [1.0, 2.0])


def test_gradient_of_constant_is_zero():
    g = Gradient(6, 5)
    np.testing.assert_array_equal(g.apply(np.full(30, 3.7)), np.zeros(60))


def test_gradient_norm_below_bound():
    g = Gradient(8, 8)
    est = power_method(g, iters=200, seed=0)
    assert est <= np.sqrt(8.0) + 1e-9
    assert est > 2.0  # not vacuous


def test_power_method_exact_on_dense():
    rng = np.random.default_rng(6)
    m = rng.normal(size=(6, 4))
    op = DenseMatrix(m)
    est = power_method(op, iters=300, seed=1)
    top = np.linalg.svd(m, compute_uv=False)[0]
    assert est == pytest.approx(top, rel=1e-8)


def test_power_method_evaluation_budget():
    op = Identity(10)
    power_method(op, iters=37, seed=0)
    assert op.forward_count == 37
    assert op.adjoint_count == 37


def test_power_method_deterministic():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(5, 5))
    a = power_method(DenseMatrix(m), iters=25, seed=3)
    b = power_method(DenseMatrix(m), iters=25, seed=3)
    assert a == b
