import itertools
import math

import numpy as np
import pytest

from chaoslab.chaos import ChaosVector
from chaoslab.majorizing import (
    MajorizingSpec,
    contraction_conditions,
    majorizing_bound_check,
    majorizing_integral,
    SIZE_CAP,
)
from chaoslab.tensor_core import contract, random_symmetric_kernel, symmetrize


def contraction_norm4(f, r):
    c = contract(f, f, r)
    return float(np.sum(c * c)) ** 2


def test_endpoints_equal_contraction_norm_fourth_power():
    rng = np.random.default_rng(0)
    for q, M in [(2, 4), (3, 3), (3, 5)]:
        f = random_symmetric_kernel(q, M, rng)
        for r in range(1, q):
            n4 = contraction_norm4(f, r)
            assert majorizing_integral(f, r, 0) == pytest.approx(n4, rel=1e-10)
            assert majorizing_integral(f, r, q - r) == pytest.approx(n4, rel=1e-10)


def test_interior_values_nonnegative_and_dominated():
    rng = np.random.default_rng(1)
    for _ in range(100):
        q = int(rng.integers(2, 4))
        M = int(rng.integers(2, 6))
        f = random_symmetric_kernel(q, M, rng)
        for r in range(1, q):
            n4 = contraction_norm4(f, r)
            for m in range(0, q - r + 1):
                val = majorizing_integral(f, r, m)
                assert val >= -1e-10 * max(1.0, n4)
                assert val <= n4 * (1 + 1e-10)


def test_elimination_order_independence():
    rng = np.random.default_rng(2)
    f = random_symmetric_kernel(3, 4, rng)
    a = majorizing_integral(f, 1, 1, elimination="greedy")
    b = majorizing_integral(f, 1, 1, elimination="optimal")
    # and a hand-fixed pairwise path
    c = majorizing_integral(
        f, 1, 1, elimination=[(0, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1)]
    )
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(c, rel=1e-10)


def test_spec_validation():
    rng = np.random.default_rng(3)
    f = random_symmetric_kernel(3, 3, rng)
    with pytest.raises(ValueError):
        MajorizingSpec(f, 0, 0)
    with pytest.raises(ValueError):
        MajorizingSpec(f, 1, 3)


def test_size_cap_enforced():
    rng = np.random.default_rng(4)
    f = random_symmetric_kernel(4, 24, rng)
    with pytest.raises(MemoryError, match="cap"):
        majorizing_integral(f, 1, 1)


def test_bound_check_zero_kernel():
    rng = np.random.default_rng(5)
    f = random_symmetric_kernel(2, 3, rng)
    zero = symmetrize(np.zeros((3, 3)))
    rep = majorizing_bound_check(f, zero, 1, 1)
    assert rep.g_norm2 == 0.0
    assert rep.holds


def test_bound_check_single_kernel_near_equality_rank_one():
    # rank-one second-chaos kernel: both sides line up to near equality
    v = np.array([1.0, -0.5, 2.0])
    f = symmetrize(np.outer(v, v))
    rep = majorizing_bound_check(f, f, 1, 1)
    assert rep.holds
    log_lhs = 8 * math.log(rep.g_norm2)
    assert log_lhs == pytest.approx(rep.tightest_log_bound, rel=1e-9)


def test_bound_check_random_instances():
    rng = np.random.default_rng(6)
    for _ in range(200):
        qi = int(rng.integers(1, 4))
        qj = int(rng.integers(1, 4))
        M = int(rng.integers(2, 7))
        fi = random_symmetric_kernel(qi, M, rng)
        fj = random_symmetric_kernel(qj, M, rng)
        r_max = min(qi, qj) - (1 if qi == qj else 0)
        for r in range(1, r_max + 1):
            for s in range(1, qi + qj - 2 * r):
                rep = majorizing_bound_check(fi, fj, r, s)
                assert rep.holds, (qi, qj, M, r, s)


def test_bound_check_validates_ranges():
    rng = np.random.default_rng(7)
    f = random_symmetric_kernel(2, 3, rng)
    with pytest.raises(ValueError):
        majorizing_bound_check(f, f, 2, 1)  # r = q excluded for equal orders
    with pytest.raises(ValueError):
        majorizing_bound_check(f, f, 1, 2)  # s beyond q_i + q_j - 2r - 1


def test_condition_report_first_order_trivial():
    rng = np.random.default_rng(8)
    F = ChaosVector.from_kernels([random_symmetric_kernel(1, 3, rng)])
    rows = contraction_conditions([F])
    assert rows[0]["contraction_norm_sum"] == 0.0
    assert rows[0]["majorizing_ratio"] == 0.0


def test_condition_report_nonnegative_kernel_ratio():
    # nonnegative kernels keep the symmetrized-to-plain ratio in (c, 1]
    rng = np.random.default_rng(9)
    for _ in range(10):
        arr = rng.uniform(0.2, 1.0, (4, 4, 4))
        F = ChaosVector.from_kernels([symmetrize(arr)])
        rows = contraction_conditions([F])
        ratio = rows[0]["symmetrized_ratio"]
        assert 0.5 <= ratio <= 1.0 + 1e-12


def test_cut_mirror_merge_bound_sampled():
    rng = np.random.default_rng(10)
    for _ in range(100):
        q = int(rng.integers(2, 4))
        M = int(rng.integers(2, 6))
        f = random_symmetric_kernel(q, M, rng)
        r = int(rng.integers(1, q))
        m = int(rng.integers(0, q - r + 1))
        assert majorizing_integral(f, r, m) <= contraction_norm4(f, r) * (1 + 1e-10)
