import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heislab.errors import CharacteristicPointError, DegenerateQuadric, DomainError, NotAGraph
from heislab.heis_core import HPoint
from heislab.quadrature import orthonormal_complement
from heislab.quadric import (
    Quadric,
    blowdown,
    classify_vertical_rank,
    contains,
    eval_F,
    graph_eval,
    horizontal_normal,
    singular_set,
)

E1 = np.array([1.0, 0.0])
P1 = np.outer(E1, E1)


def test_validation():
    with pytest.raises(DegenerateQuadric):
        Quadric(np.zeros(2), np.zeros((2, 2)), 0.0)
    with pytest.raises(DomainError):
        Quadric(np.zeros(2), np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0)


def test_eval_examples():
    assert eval_F(Quadric(np.zeros(2), P1, 0), HPoint(np.array([0.0, 1.0]), 3.0)) == 0.0
    q = Quadric(np.zeros(2), np.eye(2), -1)
    assert eval_F(q, HPoint(E1, 1.0)) == 0.0
    assert eval_F(q, HPoint(E1, 2.0)) == -1.0
    assert contains(q, HPoint(E1, 1.0)) and not contains(q, HPoint(E1, 2.0))


def test_singular_set_examples():
    s = singular_set(Quadric(np.zeros(2), np.diag([0.3, -0.7]), -1))
    assert s.dim == 0 and np.allclose(s.base, 0)
    assert singular_set(Quadric(2.5 * E1, P1, 0)) is None
    s = singular_set(Quadric(np.zeros(4), np.diag([1.0, 0, 0, 0]), 0))
    assert s.dim == 3 and s.contains(np.array([0.0, 1.0, -2.0, 3.0])) and not s.contains(np.array([1.0, 0, 0, 0]))


@given(st.integers(1, 3), st.integers(0, 10_000))
def test_singular_set_dimension_bound_for_graphs(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2 * n, 2 * n))
    Q = A + A.T
    # force a degenerate case in half the draws: Q - T J singular for T = -1
    s = singular_set(Quadric(rng.normal(size=2 * n), Q, -1.0))
    if s is not None:
        assert s.dim <= n


def test_horizontal_normal_examples():
    q = Quadric(np.zeros(2), np.eye(2), -1)
    assert np.allclose(horizontal_normal(q, HPoint(E1, 1.0)), np.array([1.0, -1.0]) / np.sqrt(2))
    qv = Quadric(np.zeros(2), P1, 0)
    assert np.allclose(horizontal_normal(qv, HPoint(E1, 0.0)), E1)
    with pytest.raises(CharacteristicPointError):
        horizontal_normal(qv, HPoint(np.array([0.0, 1.0]), 0.0))


@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_normal_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    q = Quadric(rng.normal(size=2), A + A.T, rng.normal())
    z = HPoint(rng.normal(size=2), 0.0)
    n1 = horizontal_normal(q, z)
    n2 = horizontal_normal(Quadric(c * q.b, c * q.Q, c * q.T), z)
    assert np.allclose(n1, np.sign(c) * n2, atol=1e-12)


def test_graph_examples():
    q = Quadric(np.zeros(2), np.eye(2), -1)
    assert graph_eval(q, np.zeros(2)).allclose(HPoint.origin(1))
    assert graph_eval(q, np.array([1.0, 1.0])).allclose(HPoint(np.array([1.0, 1.0]), 2.0))
    with pytest.raises(NotAGraph):
        graph_eval(Quadric(np.zeros(2), P1, 0), np.zeros(2))


def test_graph_points_lie_on_quadric(rng):
    for _ in range(100):
        n = int(rng.integers(1, 4))
        A = rng.normal(size=(2 * n, 2 * n))
        q = Quadric(rng.normal(size=2 * n), A + A.T, rng.uniform(0.5, 2) * rng.choice([-1, 1]))
        z = graph_eval(q, rng.normal(size=2 * n))
        assert abs(eval_F(q, z)) <= 1e-10 * (1 + z.h @ z.h + abs(z.t))


def test_blowdown(rng):
    q = Quadric(np.array([1.0, 2.0]), np.eye(2), 3.0)
    d = blowdown(q)
    assert np.array_equal(d.b, np.zeros(2)) and np.array_equal(d.Q, q.Q) and d.T == q.T
    for _ in range(10):
        A = rng.normal(size=(4, 4))
        q = Quadric(rng.normal(size=4), A + A.T, rng.normal())
        once, twice = blowdown(q), blowdown(blowdown(q))
        assert np.array_equal(once.b, twice.b) and np.array_equal(once.Q, twice.Q) and once.T == twice.T


def test_rank_examples():
    r = classify_vertical_rank(Quadric(np.zeros(2), P1, 0))
    assert r.kind == "Rank1Flat" and np.allclose(r.normal, E1)
    r = classify_vertical_rank(Quadric(np.zeros(2), np.diag([-1.0, 1.0]), 0))
    assert r.kind == "Rank2"
    got = {tuple(np.round(v * np.sign(v[1]), 12)) for v in r.pair}
    s = 1 / np.sqrt(2)
    assert got == {(round(s, 12), round(s, 12)), (round(-s, 12), round(s, 12))}
    assert classify_vertical_rank(Quadric(np.zeros(4), np.diag([1.0, 1, -1, 0]), 0)).kind == "HigherRank"
    with pytest.raises(DomainError):
        classify_vertical_rank(Quadric(np.zeros(2), P1, 1.0))


def test_rank2_factorization_unequal_eigenvalues(rng):
    # the factor pair must reproduce the zero set even when |lambda_1| != lambda_2
    for _ in range(20):
        n = int(rng.integers(1, 3))
        U, _ = np.linalg.qr(rng.normal(size=(2 * n, 2 * n)))
        lam = np.zeros(2 * n)
        lam[0], lam[1] = -rng.uniform(0.2, 3), rng.uniform(0.2, 3)
        Q = U @ np.diag(lam) @ U.T
        q = Quadric(np.zeros(2 * n), Q, 0)
        r = classify_vertical_rank(q)
        assert r.kind == "Rank2" and r.pair is not None
        for e in r.pair:
            B = orthonormal_complement(e, 2 * n)
            for _ in range(50):
                h = rng.normal(size=B.shape[0]) @ B
                assert abs(eval_F(q, HPoint(h, rng.normal()))) <= 1e-10 * (1 + h @ h)


def test_json_roundtrip():
    q = Quadric(np.array([1.0, -2.0]), np.array([[1.0, 0.5], [0.5, -1.0]]), 0.25)
    d = json.loads(q.to_json())
    assert set(d) == {"n", "b", "Q", "T"}
    back = Quadric.from_json(q.to_json())
    assert np.array_equal(back.b, q.b) and np.array_equal(back.Q, q.Q) and back.T == q.T
