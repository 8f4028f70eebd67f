import math

import numpy as np
import pytest

from chaoslab.edgeworth import (
    CumulantSet,
    MultiIndex,
    cumulants_from_moments,
    edgeworth3,
    formal_cumulants,
    isserlis_moment,
    moments_from_cumulants,
    multi_indices_up_to,
    pair_partitions,
    sample_cumulants,
    set_partitions,
)
from chaoslab.hermite_stein import GaussianSpec, cos_form, gaussian_expectation, quadratic_monomial


def bell(n):
    # Bell numbers count set partitions
    b = [1]
    for _ in range(n):
        row = [b[-1]]
        for v in b:
            row.append(row[-1] + v)
        b = row
    return b[0]


def test_set_partition_counts():
    for n, expected in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52)]:
        assert sum(1 for _ in set_partitions(list(range(n)))) == expected


def test_pair_partition_counts():
    assert sum(1 for _ in pair_partitions(list(range(4)))) == 3
    assert sum(1 for _ in pair_partitions(list(range(6)))) == 15
    assert sum(1 for _ in pair_partitions(list(range(3)))) == 0


def test_multi_index_decomposition():
    a = MultiIndex((2, 0, 1))
    assert a.order == 3
    assert a.decomposition() == (0, 0, 2)
    assert MultiIndex.from_positions((0, 0, 2), 3) == a


def random_cumulant_set(d, max_order, rng):
    out = CumulantSet(d, max_order)
    for alpha in multi_indices_up_to(d, max_order):
        out.set(alpha, float(rng.uniform(-1, 1)))
    return out


def test_moment_formulas_low_order():
    rng = np.random.default_rng(0)
    k = random_cumulant_set(2, 3, rng)
    e0, e1 = (1, 0), (0, 1)
    mu_11 = moments_from_cumulants(k, (1, 1))
    assert mu_11 == pytest.approx(k.get((1, 1)) + k.get(e0) * k.get(e1), abs=1e-14)
    mu_21 = moments_from_cumulants(k, (2, 1))
    expected = (
        k.get((2, 1))
        + 2 * k.get(e0) * k.get((1, 1))
        + k.get(e1) * k.get((2, 0))
        + k.get(e0) ** 2 * k.get(e1)
    )
    assert mu_21 == pytest.approx(expected, abs=1e-14)


def test_centered_moments_equal_cumulants_to_order3():
    rng = np.random.default_rng(1)
    k = random_cumulant_set(3, 3, rng)
    for i in range(3):
        k.set(tuple(int(i == j) for j in range(3)), 0.0)
    for alpha in multi_indices_up_to(3, 3):
        if sum(alpha) <= 3:
            assert moments_from_cumulants(k, alpha) == pytest.approx(
                k.get(alpha), abs=1e-14
            )


def test_gaussian_fourth_moment():
    k = CumulantSet(1, 4)
    k.set((1,), 0.0)
    k.set((2,), 2.5)
    k.set((3,), 0.0)
    k.set((4,), 0.0)
    assert moments_from_cumulants(k, (4,)) == pytest.approx(3 * 2.5**2, abs=1e-14)


def test_cumulant_moment_roundtrip():
    rng = np.random.default_rng(2)
    for d in (1, 2):
        k = random_cumulant_set(d, 4, rng)
        moments = {a: moments_from_cumulants(k, a) for a in multi_indices_up_to(d, 4)}
        back = cumulants_from_moments(moments, d, 4)
        for alpha in multi_indices_up_to(d, 4):
            assert back.get(alpha) == pytest.approx(k.get(alpha), abs=1e-12)


def test_formal_self_expansion_vanishes():
    rng = np.random.default_rng(3)
    k = random_cumulant_set(2, 3, rng)
    tilde = formal_cumulants(k, k)
    for alpha in multi_indices_up_to(2, 3):
        assert moments_from_cumulants(tilde, alpha) == 0.0


def test_formal_moments_are_not_moment_differences():
    # concrete counterexample guarding the obvious wrong implementation
    k1 = CumulantSet(1, 2, {(1,): 1.0, (2,): 1.0})
    k2 = CumulantSet(1, 2, {(1,): 2.0, (2,): 1.0})
    tilde = formal_cumulants(k1, k2)
    mu_tilde = moments_from_cumulants(tilde, (2,))  # kappa~2 + kappa~1^2 = 1
    mu_diff = moments_from_cumulants(k1, (2,)) - moments_from_cumulants(k2, (2,))  # 2 - 5
    assert mu_tilde == pytest.approx(1.0)
    assert mu_diff == pytest.approx(-3.0)
    assert mu_tilde != pytest.approx(mu_diff)


def test_isserlis_values():
    assert isserlis_moment((3,), np.eye(1)) == 0.0
    assert isserlis_moment((4,), np.eye(1)) == pytest.approx(3.0)
    rho = 0.6
    cov = np.array([[1.0, rho], [rho, 1.0]])
    assert isserlis_moment((2, 2), cov) == pytest.approx(1 + 2 * rho**2)
    assert isserlis_moment((1, 1), cov) == pytest.approx(rho)
    with pytest.raises(ValueError):
        isserlis_moment((9, 0), cov)


def test_edgeworth_matches_base_when_cumulants_agree():
    Z = GaussianSpec(2, np.array([[1.0, 0.2], [0.2, 1.0]]))
    g = cos_form([0.5, -0.8])
    k = CumulantSet.gaussian(Z, 3)
    base = gaussian_expectation(g, (0, 0), Z)
    assert edgeworth3(k, Z, g) == pytest.approx(base, abs=1e-12)


def test_edgeworth_covariance_correction_sign():
    # F ~ N(0, s2) expanded around N(0,1) with quadratic g: the expansion
    # must reproduce E[g(F)] = s2 exactly, pinning the sign of the
    # second-order term to +(mu_2(F) - C)/2
    Z = GaussianSpec.standard(1)
    g = quadratic_monomial(0, 0, 1)
    s2 = 1.7
    k = CumulantSet(1, 3, {(1,): 0.0, (2,): s2, (3,): 0.0})
    assert edgeworth3(k, Z, g) == pytest.approx(s2, abs=1e-9)


def test_edgeworth_third_order_term():
    # centered, covariance-matched: only the third-moment term remains
    Z = GaussianSpec.standard(1)
    g = cos_form([0.9])
    kappa3 = 0.4
    k = CumulantSet(1, 3, {(1,): 0.0, (2,): 1.0, (3,): kappa3})
    base = gaussian_expectation(g, (0,), Z)
    d3 = gaussian_expectation(g, (3,), Z)
    assert edgeworth3(k, Z, g) == pytest.approx(base + kappa3 / 6 * d3, abs=1e-12)


def test_edgeworth_improves_on_gaussian_base():
    # F actually Gaussian with a different covariance: the expansion gets
    # E[g(F)] right where the plain base does not (quadratic g)
    Z = GaussianSpec.standard(2)
    covF = np.array([[1.5, 0.3], [0.3, 0.8]])
    F = GaussianSpec(2, covF)
    g = quadratic_monomial(0, 1, 2)
    k = CumulantSet.gaussian(F, 3)
    truth = gaussian_expectation(g, (0, 0), F)
    base = gaussian_expectation(g, (0, 0), Z)
    corrected = edgeworth3(k, Z, g)
    assert abs(corrected - truth) < 1e-9
    assert abs(corrected - truth) < abs(base - truth)


def test_sample_cumulants_standard_normal():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((1_000_000, 1))
    k, se = sample_cumulants(X, max_order=4)
    assert abs(k.get((3,))) < 4 * se[(3,)]
    assert abs(k.get((4,))) < 4 * se[(4,)]
    assert k.get((2,)) == pytest.approx(1.0, abs=4 * se[(2,)])


def test_sample_cumulants_constant_input():
    X = np.full((100, 2), 3.0)
    k, se = sample_cumulants(X, max_order=3)
    assert k.get((1, 0)) == pytest.approx(3.0)
    assert k.get((2, 0)) == 0.0
    assert k.get((1, 1)) == 0.0


def test_sample_cumulants_requires_enough_rows():
    with pytest.raises(ValueError):
        sample_cumulants(np.zeros((5, 1)))
