import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from movingdb.dsd import BACKENDS, Dsd, MovingObject
from movingdb.errors import DuplicatePosition, EmptyIndex, OutOfBounds, UnknownId
from movingdb.geom import Point


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def test_upsert_then_knn(backend):
    d = Dsd(backend)
    d.upsert(MovingObject(5, Point(0.2, 0.3)))
    assert d.knn((0.2, 0.3), 1) == [(5, 0.0)]


def test_upsert_twice_moves(backend):
    d = Dsd(backend)
    d.put(1, (0.1, 0.1), {"a"})
    d.put(1, (0.9, 0.9), {"b"})
    assert len(d) == 1
    assert d.get(1).position == (0.9, 0.9) and d.get(1).attrs == {"b"}
    assert d.range((0, 0.5, 0, 0.5)) == set()
    d.audit()


def test_out_of_bounds_and_duplicates(backend):
    d = Dsd(backend)
    with pytest.raises(OutOfBounds):
        d.put(1, (1.2, 0.5))
    d.put(1, (0.5, 0.5))
    with pytest.raises(DuplicatePosition):
        d.put(2, (0.5, 0.5))
    assert len(d) == 1


def test_delete(backend):
    d = Dsd(backend)
    d.put(1, (0.5, 0.5))
    d.delete(1)
    assert len(d) == 0
    with pytest.raises(UnknownId):
        d.delete(1)
    with pytest.raises(EmptyIndex):
        d.knn((0, 0), 1)


def test_distances_are_euclidean(backend):
    d = Dsd(backend)
    d.put(1, (0.0, 0.0))
    d.put(2, (0.3, 0.4))
    assert d.knn((0, 0), 2) == [(1, 0.0), (2, pytest.approx(0.5))]
    assert d.knn((0, 0), 2)[1][1] == math.sqrt(0.3 ** 2 + 0.4 ** 2)


def test_range_edge_cases(backend):
    d = Dsd(backend)
    rng = random.Random(1)
    for i in range(50):
        d.put(i, (rng.random(), rng.random()))
    assert d.range((2.0, 2.0, 2.0, 2.0)) == set()
    assert d.range(tuple(d.world)) == set(range(50))


def _seed31(backend):
    rng = random.Random(31)
    d = Dsd(backend)
    for i in range(600):
        d.put(i, (rng.random(), rng.random()), {"taxi"} if i % 3 == 0 else ())
    return d


def test_seed31_cross_backend_and_oracle():
    a, b = _seed31("delaunay"), _seed31("rtree")
    rng = random.Random(3100)
    for _ in range(100):
        q = (rng.random(), rng.random())
        k = rng.choice([1, 5, 30])
        assert a.knn(q, k) == b.knn(q, k) == a.brute_force_knn(q, k)
        x, y, s = rng.random(), rng.random(), rng.uniform(0, 0.2)
        w = (x, min(1.0, x + s), y, min(1.0, y + s))
        assert a.range(w) == b.range(w) == a.brute_force_range(w)


def test_interleaved_upserts_agree():
    rng = random.Random(8)
    a, b = Dsd("delaunay"), Dsd("rtree")
    for step in range(1500):
        oid = rng.randrange(200)
        if oid in a and rng.random() < 0.2:
            a.delete(oid)
            b.delete(oid)
        else:
            p = (rng.random(), rng.random())
            a.put(oid, p)
            b.put(oid, p)
        if step % 50 == 0 and len(a):
            q = (rng.random(), rng.random())
            assert a.knn_d2(q, 10) == b.knn_d2(q, 10)
    a.audit()
    b.audit()
    assert {i: o.position for i, o in a.objects.items()} == {i: o.position for i, o in b.objects.items()}


def test_taxi_filter(backend):
    d = Dsd(backend)
    d.put(1, (0.1, 0.1), {"taxi"})
    d.put(2, (0.2, 0.2))
    d.put(3, (0.8, 0.8), {"taxi", "bus"})
    d.put(4, (0.15, 0.1))
    assert d.knn_filtered((0.0, 0.0), 2, "taxi") == [1, 3]
    assert d.knn_filtered((1.0, 1.0), 2, "taxi") == [3, 1]
    assert d.knn_filtered((0.0, 0.0), 2, "plane") == []
    for oid in (2, 4):
        d.put(oid, d.get(oid).position, {"taxi"})
    assert d.knn_filtered((0.3, 0.3), 3, "taxi") == [oid for oid, _ in d.knn((0.3, 0.3), 3)]


def test_filter_matches_oracle_seed31(backend):
    d = _seed31(backend)
    rng = random.Random(310)
    for _ in range(40):
        q = (rng.random(), rng.random())
        assert d.knn_filtered(q, 7, "taxi") == d.brute_force_knn_filtered(q, 7, "taxi")


def test_brute_force_singleton():
    d = Dsd()
    d.put(1, (0.4, 0.4))
    assert d.brute_force_knn((0.9, 0.9), 3) == [(1, pytest.approx(0.5 * math.sqrt(2)))]
    assert d.brute_force_range((0.0, 0.1, 0.0, 0.1)) == set()


@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 40), st.integers(0, 40), st.booleans()),
                max_size=150))
@settings(max_examples=50, deadline=None)
def test_fuzz_against_shadow(ops):
    dsds = [Dsd(b) for b in BACKENDS]
    shadow = {}
    for oid, x, y, drop in ops:
        p = (x / 40, y / 40)
        if drop:
            if oid in shadow:
                for d in dsds:
                    d.delete(oid)
                del shadow[oid]
            continue
        if p in shadow.values() and shadow.get(oid) != p:
            for d in dsds:
                with pytest.raises(DuplicatePosition):
                    d.put(oid, p)
            continue
        for d in dsds:
            d.put(oid, p)
        shadow[oid] = p
    for d in dsds:
        d.audit()
        assert {i: tuple(o.position) for i, o in d.objects.items()} == shadow
    if shadow:
        q = (0.5, 0.5)
        assert dsds[0].knn_d2(q, 6) == dsds[1].knn_d2(q, 6) == dsds[0].brute_force_knn_d2(q, 6)
