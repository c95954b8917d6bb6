"""Lattice laws, on the bundled lattices and on random ones.

The random lattices are sub-powerset lattices: a family of subsets of a
small ground set closed under union and intersection, ordered by inclusion.
Joins and meets are then checked against a brute-force least-upper /
greatest-lower bound oracle, never against the implementation itself.
"""

import itertools
import random

import pytest

from sesmon.lattice import (LatticeError, UnknownLevel, enumerate_downsets,
                            validate_lattice)

from conftest import CORPUS, load


def brute_lub(elems, leq, a, b):
    ups = [x for x in elems if leq(a, x) and leq(b, x)]
    least = [x for x in ups if all(leq(x, y) for y in ups)]
    assert len(least) == 1, f"no unique lub for {a}, {b}"
    return least[0]


def brute_glb(elems, leq, a, b):
    downs = [x for x in elems if leq(x, a) and leq(x, b)]
    greatest = [x for x in downs if all(leq(y, x) for y in downs)]
    assert len(greatest) == 1, f"no unique glb for {a}, {b}"
    return greatest[0]


def assert_lattice_laws(lat):
    elems = sorted(lat.elements)
    for a in elems:
        assert lat.leq(a, a)
        assert lat.leq(lat.bottom, a)
        assert lat.leq(a, lat.top)
    for a, b in itertools.product(elems, repeat=2):
        if lat.leq(a, b) and lat.leq(b, a):
            assert a == b
        assert lat.join(a, b) == brute_lub(elems, lat.leq, a, b)
        assert lat.meet(a, b) == brute_glb(elems, lat.leq, a, b)
        assert lat.join(a, b) == lat.join(b, a)
        assert lat.meet(a, b) == lat.meet(b, a)
    for a, b, c in itertools.product(elems, repeat=3):
        if lat.leq(a, b) and lat.leq(b, c):
            assert lat.leq(a, c)
        assert lat.join(a, lat.join(b, c)) == lat.join(lat.join(a, b), c)


@pytest.mark.parametrize("name", CORPUS)
def test_bundled_lattice_laws(name):
    assert_lattice_laws(load(name).lattice)


def random_subset_lattice(rng: random.Random):
    """A random 4-6 element lattice of subsets of {0,1,2,3}."""
    ground = frozenset(range(4))
    while True:
        fam = {frozenset(), ground}
        for _ in range(rng.randrange(1, 5)):
            fam.add(frozenset(x for x in ground if rng.random() < 0.5))
        changed = True
        while changed:
            changed = False
            for a, b in itertools.combinations(list(fam), 2):
                for c in (a | b, a & b):
                    if c not in fam:
                        fam.add(c)
                        changed = True
        if 4 <= len(fam) <= 6:
            names = {s: "e" + "".join(map(str, sorted(s))) for s in fam}
            order = [(names[a], names[b]) for a in fam for b in fam
                     if a != b and a <= b]
            return validate_lattice(set(names.values()), order), \
                {names[s]: s for s in fam}


def test_random_lattice_laws():
    rng = random.Random(20240817)
    for _ in range(50):
        lat, sets = random_subset_lattice(rng)
        assert_lattice_laws(lat)
        # join/meet are literally union/intersection in these lattices
        for a, b in itertools.product(sorted(lat.elements), repeat=2):
            assert sets[lat.join(a, b)] == sets[a] | sets[b]
            assert sets[lat.meet(a, b)] == sets[a] & sets[b]


def test_downsets_against_powerset_filter():
    lat = load("example1").lattice
    elems = sorted(lat.elements)
    expected = set()
    for r in range(len(elems) + 1):
        for combo in itertools.combinations(elems, r):
            s = frozenset(combo)
            if all(lo in s for hi in s for lo in elems if lat.leq(lo, hi)):
                expected.add(s)
    assert set(enumerate_downsets(lat)) == expected
    for s in expected:
        assert lat.is_downward_closed(s)
    assert not lat.is_downward_closed(frozenset({lat.top}))


def test_unknown_level_raises():
    lat = load("example2").lattice
    with pytest.raises(UnknownLevel):
        lat.leq("bot", "no-such-level")


def test_invalid_lattices_rejected():
    # no unique upper bound for the two middle elements
    with pytest.raises(LatticeError):
        validate_lattice({"a", "b", "c", "d"},
                         [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"),
                          ("b", "c"), ("c", "b")])
    with pytest.raises(LatticeError):
        validate_lattice({"a", "b"}, [])  # no top/bottom relating a and b
