import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vfpns import velocity_basis as vb
from vfpns.verification import random_coefficients


def unit(trunc, alpha):
    return trunc.unit(alpha)


# -- enumeration -----------------------------------------------------------

@pytest.mark.parametrize("d,N,count", [(1, 2, 3), (3, 2, 10), (3, 4, 35), (2, 6, 28)])
def test_truncation_size(d, N, count):
    assert len(vb.enumerate_truncation(d, N)) == count == math.comb(N + d, d)


def test_truncation_layout_is_graded_and_deterministic():
    t = vb.enumerate_truncation(3, 4)
    assert t.index_list == vb.enumerate_truncation(3, 4).index_list
    assert t.index_list[0] == (0, 0, 0)
    assert t.index_list[1:4] == ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert np.all(np.diff(t.degrees) >= 0)
    assert vb.enumerate_truncation(1, 2).index_list == ((0,), (1,), (2,))


@pytest.mark.parametrize("d,N", [(0, 2), (4, 2), (3, 1)])
def test_truncation_rejects_bad_arguments(d, N):
    with pytest.raises(ValueError):
        vb.enumerate_truncation(d, N)


# -- single-basis examples (values frozen from the quadrature oracle) -------

@pytest.fixture(scope="module")
def t1():
    return vb.enumerate_truncation(1, 4)


@pytest.fixture(scope="module")
def t3():
    return vb.enumerate_truncation(3, 4)


def test_fokker_planck_examples(t3):
    assert np.allclose(vb.apply_fokker_planck(unit(t3, (0, 0, 0)), t3), 0)
    assert np.allclose(vb.apply_fokker_planck(unit(t3, (1, 0, 0)), t3), -unit(t3, (1, 0, 0)))
    assert np.allclose(vb.apply_fokker_planck(unit(t3, (2, 1, 0)), t3), -3 * unit(t3, (2, 1, 0)))


def test_multiply_by_v_examples(t1):
    assert np.allclose(vb.multiply_by_v(unit(t1, (0,)), t1, 0), unit(t1, (1,)))
    assert np.allclose(vb.multiply_by_v(unit(t1, (1,)), t1, 0),
                       unit(t1, (0,)) + math.sqrt(2) * unit(t1, (2,)))
    # top mode: the degree N + 1 part is dropped
    assert np.allclose(vb.multiply_by_v(unit(t1, (4,)), t1, 0), 2.0 * unit(t1, (3,)))


def test_differentiate_v_examples(t1):
    assert np.allclose(vb.differentiate_v(unit(t1, (0,)), t1, 0), -0.5 * unit(t1, (1,)))
    assert np.allclose(vb.differentiate_v(unit(t1, (1,)), t1, 0),
                       0.5 * unit(t1, (0,)) - math.sqrt(2) / 2 * unit(t1, (2,)))


def test_examples_agree_with_quadrature(t1):
    rule = vb.make_quadrature(1, 8)
    for alpha in [(0,), (1,), (2,), (3,)]:
        c = unit(t1, alpha)
        for op, fn in (("v", vb.multiply_by_v), ("dv", vb.differentiate_v)):
            ref = vb.quadrature_project(vb.oracle_apply(c, t1, rule, op), rule, t1)
            assert np.allclose(fn(c, t1, 0), ref, atol=1e-12)


def test_axis_out_of_range(t3):
    with pytest.raises(ValueError):
        vb.multiply_by_v(unit(t3, (0, 0, 0)), t3, 3)


# -- projections and moments ----------------------------------------------

def test_macro_micro_examples(t3):
    a, b, micro = vb.macro_micro_split(unit(t3, (0, 0, 0)), t3)
    assert a == 1 and np.all(b == 0) and np.all(micro == 0)
    a, b, micro = vb.macro_micro_split(unit(t3, (0, 1, 0)), t3)
    assert a == 0 and np.array_equal(b, [0, 1, 0]) and np.all(micro == 0)
    c = unit(t3, (2, 0, 0))
    a, b, micro = vb.macro_micro_split(c, t3)
    assert a == 0 and np.all(b == 0) and np.array_equal(micro, c)


def test_split_reconstructs(t3, rng):
    c = random_coefficients(t3, rng)
    assert np.array_equal(vb.macro_part(c, t3) + vb.micro_part(c, t3), c)


def test_gamma_examples(t3):
    e0 = unit(t3, (0, 0, 0))
    assert all(vb.gamma_moment(e0, t3, i, j) == 0 for i in range(3) for j in range(3))
    assert vb.gamma_moment(unit(t3, (2, 0, 0)), t3, 0, 0) == pytest.approx(math.sqrt(2))
    assert vb.gamma_moment(unit(t3, (1, 1, 0)), t3, 0, 1) == pytest.approx(1.0)
    g = vb.gamma_matrix(unit(t3, (1, 1, 0)), t3)
    assert np.allclose(g, g.T)


def test_nu_norm_examples(t1, rng):
    assert vb.nu_norm_sq(np.zeros(len(t1)), t1) == 0
    assert vb.nu_norm_sq(unit(t1, (0,)), t1) == pytest.approx(9 / 4, abs=1e-14)
    c = random_coefficients(t1, rng)
    assert vb.nu_norm_sq(2 * c, t1) == pytest.approx(4 * vb.nu_norm_sq(c, t1))
    assert vb.nu_norm_sq(c, t1) >= np.sum(np.abs(c) ** 2)


# -- oracle agreement and adjoint structure -------------------------------

@pytest.mark.parametrize("N", [4, 6])
def test_ladder_matches_oracle(N):
    from vfpns.verification import oracle_deltas
    deltas = oracle_deltas(N, 3, n_random=40, seed=N)
    assert max(deltas.values()) < 1e-10, deltas


def test_quadrature_round_trip_and_orthonormality(rng):
    t = vb.enumerate_truncation(2, 6)
    rule = vb.make_quadrature(2, 10)
    c = random_coefficients(t, rng)
    back = vb.quadrature_project(vb.quadrature_oracle(c, t, rule), rule, t)
    assert np.max(np.abs(back - c)) < 1e-10
    samples = vb.quadrature_oracle(np.eye(len(t)), t, rule) / rule.sqrt_maxwellian[:, None]
    gram = samples.T @ (rule.weights[:, None] * samples)
    assert np.max(np.abs(gram - np.eye(len(t)))) < 1e-12
    assert abs(rule.weights.sum() - 1.0) < 1e-12


def test_quadrature_order_too_small():
    t = vb.enumerate_truncation(1, 6)
    rule = vb.make_quadrature(1, 7)
    with pytest.raises(ValueError):
        vb.quadrature_project(np.zeros(7), rule, t)


def test_adjointness_on_closure_safe_band(rng):
    t = vb.enumerate_truncation(3, 6)
    for _ in range(20):
        f = random_coefficients(t, rng, t.max_degree - 1)
        g = random_coefficients(t, rng, t.max_degree - 1)
        for i in range(3):
            lhs = np.vdot(g, vb.multiply_by_v(f, t, i))
            assert abs(lhs - np.vdot(vb.multiply_by_v(g, t, i), f)) < 1e-12
            skew = np.vdot(g, vb.differentiate_v(f, t, i)) + np.vdot(vb.differentiate_v(g, t, i), f)
            assert abs(skew) < 1e-12


def test_dissipation_identity(rng):
    t = vb.enumerate_truncation(3, 5)
    c = random_coefficients(t, rng)
    assert np.vdot(c, -vb.apply_fokker_planck(c, t)).real == pytest.approx(
        np.sum(t.degrees * np.abs(c) ** 2))


@pytest.mark.parametrize("N", range(2, 9))
def test_structural_identities(N):
    from vfpns.verification import structural_identities
    s = structural_identities(N, 3, n_random=10, seed=N)
    assert s["kernel_identity"] == 0 and s["idempotency"] == 0
    assert s["orthogonality"] < 1e-14
    assert s["coercivity"] > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(2, 5), st.integers(0, 2 ** 31 - 1))
def test_batched_operators_act_columnwise(d, N, seed):
    t = vb.enumerate_truncation(d, N)
    rng = np.random.default_rng(seed)
    c = random_coefficients(t, rng, size=3)
    for axis in range(d):
        batch = vb.multiply_by_v(c, t, axis)
        for j in range(3):
            assert np.allclose(batch[:, j], vb.multiply_by_v(c[:, j], t, axis))
    nu = vb.nu_norm_sq(c, t)
    assert nu.shape == (3,) and np.all(nu >= np.sum(np.abs(c) ** 2, axis=0) - 1e-12)
