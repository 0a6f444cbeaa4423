import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from maxloss.core import (
    DimensionMismatchError,
    FunctionalInstance,
    NonFiniteError,
    QueryLedger,
    as_vector,
    eval_fmax,
    project_ball,
    subgrad_fmax,
)
from maxloss.instances import HardInstance, HardInstanceConfig

from conftest import abs_instance, constant_instance, linear_instance


def test_single_linear_component_at_origin():
    inst = linear_instance([[2.0, -1.0]], [0.0])
    ledger = QueryLedger()
    assert eval_fmax(inst, np.zeros(2), ledger) == 0.0
    assert ledger.value_queries == 1


def test_constant_instance_value():
    inst = constant_instance(3.5, n=4)
    ledger = QueryLedger()
    assert eval_fmax(inst, np.ones(2), ledger) == 3.5
    assert ledger.value_queries == 4
    assert ledger.grad_queries == 0


def test_hard_instance_zero_at_minimizer():
    inst = HardInstance(HardInstanceConfig.create(T=4, N=8, ell=16.0, d=12, seed=5))
    assert eval_fmax(inst, inst.minimizer(), QueryLedger()) == pytest.approx(0.0, abs=1e-12)


def test_subgradient_tie_goes_to_lowest_index():
    inst = linear_instance([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    ledger = QueryLedger()
    g = subgrad_fmax(inst, np.zeros(2), ledger)
    np.testing.assert_array_equal(g, [1.0, 0.0])
    assert (ledger.value_queries, ledger.grad_queries) == (2, 1)


def test_subgradient_of_abs():
    assert subgrad_fmax(abs_instance(), [2.0], QueryLedger())[0] == 1.0


def test_subgradient_strict_max():
    inst = linear_instance([[2.0], [1.0]], [0.0, 0.0])
    assert subgrad_fmax(inst, [1.0], QueryLedger())[0] == 2.0


def test_dimension_mismatch_is_rejected():
    inst = linear_instance([[1.0, 1.0]], [0.0])
    with pytest.raises(DimensionMismatchError):
        eval_fmax(inst, np.zeros(3), QueryLedger())


def test_non_finite_point_is_rejected():
    with pytest.raises(NonFiniteError):
        as_vector([0.0, np.nan])


def test_functional_instance_needs_matching_callables():
    with pytest.raises(DimensionMismatchError):
        FunctionalInstance(1, [lambda x: 0.0], [], lip=1.0)


def test_full_passes():
    ledger = QueryLedger()
    ledger.charge(values=30, grads=10)
    assert ledger.full_passes(8) == 5.0
    other = QueryLedger(1, 2)
    ledger.merge(other)
    assert ledger.total == 43


def test_ledger_rejects_negative_charges():
    with pytest.raises(ValueError):
        QueryLedger().charge(values=-1)


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), max_size=20))
def test_ledger_is_monotone(charges):
    ledger = QueryLedger()
    last = 0
    for values, grads in charges:
        ledger.charge(values, grads)
        assert ledger.total >= last
        last = ledger.total


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=6), st.floats(0.1, 5.0))
def test_projection_lands_in_ball(coords, radius):
    x = np.array(coords)
    center = np.zeros_like(x)
    p = project_ball(x, center, radius)
    assert np.linalg.norm(p - center) <= radius * (1 + 1e-12)
    if np.linalg.norm(x) <= radius:
        np.testing.assert_array_equal(p, x)


def test_eval_matches_brute_force(rng, huber):
    for _ in range(20):
        x = rng.normal(size=huber.d)
        brute = max(huber.value(i, x) for i in range(huber.n))
        assert eval_fmax(huber, x, QueryLedger()) == pytest.approx(brute, rel=0, abs=1e-14)


def test_subgradients_respect_lipschitz_bound(rng, hard_small, huber):
    for inst in (hard_small, huber):
        for _ in range(50):
            x = rng.normal(size=inst.d)
            norms = np.linalg.norm(inst.subgradients(x), axis=1)
            assert np.all(norms <= inst.lip + 1e-9)
