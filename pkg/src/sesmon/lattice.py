"""Finite security lattices and downward-closed observer sets.

Levels are plain strings validated against a :class:`Lattice`.  The lattice
is immutable after validation: the order relation is stored as its
reflexive-transitive closure, and join/meet are table lookups.
"""

from __future__ import annotations

from typing import Iterable


class LatticeError(ValueError):
    """Base class for lattice validation failures."""


class NotAPartialOrder(LatticeError):
    """The supplied order pairs contain a cycle between distinct elements."""


class NotALattice(LatticeError):
    """Some pair of elements lacks a unique join or meet."""


class UnknownLevel(LatticeError):
    """A level name not present in the lattice."""


class Lattice:
    """A validated finite lattice of security levels."""

    def __init__(self, elements: frozenset[str],
                 leq_pairs: frozenset[tuple[str, str]],
                 joins: dict[tuple[str, str], str],
                 meets: dict[tuple[str, str], str],
                 bottom: str, top: str):
        self.elements = elements
        self._leq = leq_pairs
        self._joins = joins
        self._meets = meets
        self.bottom = bottom
        self.top = top

    def __repr__(self) -> str:
        return f"Lattice({sorted(self.elements)})"

    def check(self, level: str) -> str:
        if level not in self.elements:
            raise UnknownLevel(f"unknown security level {level!r}")
        return level

    def leq(self, a: str, b: str) -> bool:
        return (self.check(a), self.check(b)) in self._leq

    def join(self, a: str, b: str) -> str:
        return self._joins[self.check(a), self.check(b)]

    def meet(self, a: str, b: str) -> str:
        return self._meets[self.check(a), self.check(b)]

    def join_all(self, levels: Iterable[str]) -> str:
        out = self.bottom
        for l in levels:
            out = self.join(out, l)
        return out

    def is_downward_closed(self, members: frozenset[str]) -> bool:
        return all(lo in members
                   for hi in members for lo in self.elements
                   if self.leq(lo, hi))

    def downsets(self) -> list[frozenset[str]]:
        """All downward-closed subsets, from the empty set upward."""
        return enumerate_downsets(self)


def validate_lattice(elements: Iterable[str],
                     order: Iterable[tuple[str, str]]) -> Lattice:
    """Build a Lattice from raw elements and order pairs.

    The pairs are closed reflexively and transitively; the result must give
    every pair of elements a unique least upper bound and greatest lower
    bound.
    """
    elems = frozenset(elements)
    if not elems:
        raise LatticeError("a lattice needs at least one element")
    for a, b in order:
        if a not in elems or b not in elems:
            raise UnknownLevel(f"order pair ({a!r}, {b!r}) mentions an unknown element")

    leq = {(a, a) for a in elems}
    leq.update(order)
    changed = True
    while changed:
        changed = False
        for a, b in list(leq):
            for c, d in list(leq):
                if b == c and (a, d) not in leq:
                    leq.add((a, d))
                    changed = True

    for a, b in leq:
        if a != b and (b, a) in leq:
            raise NotAPartialOrder(f"cycle between {a!r} and {b!r}")

    def bound(a: str, b: str, upper: bool) -> str:
        if upper:
            cands = [z for z in elems if (a, z) in leq and (b, z) in leq]
            least = [u for u in cands if all((u, z) in leq for z in cands)]
        else:
            cands = [z for z in elems if (z, a) in leq and (z, b) in leq]
            least = [u for u in cands if all((z, u) in leq for z in cands)]
        if len(least) != 1:
            kind = "join" if upper else "meet"
            raise NotALattice(f"elements {a!r} and {b!r} have no unique {kind}")
        return least[0]

    joins: dict[tuple[str, str], str] = {}
    meets: dict[tuple[str, str], str] = {}
    for a in elems:
        for b in elems:
            joins[a, b] = bound(a, b, upper=True)
            meets[a, b] = bound(a, b, upper=False)

    top = next(iter(elems))
    bottom = next(iter(elems))
    for x in elems:
        top = joins[top, x]
        bottom = meets[bottom, x]

    return Lattice(elems, frozenset(leq), joins, meets, bottom, top)


def enumerate_downsets(lat: Lattice) -> list[frozenset[str]]:
    """All downward-closed subsets of the lattice, each exactly once.

    Every downset of a finite poset is a union of principal ideals, so we
    saturate from the empty set by adjoining ideals.
    """
    ideal = {x: frozenset(y for y in lat.elements if lat.leq(y, x))
             for x in lat.elements}
    seen: set[frozenset[str]] = {frozenset()}
    work = [frozenset()]
    while work:
        d = work.pop()
        for x in lat.elements:
            d2 = d | ideal[x]
            if d2 not in seen:
                seen.add(d2)
                work.append(d2)
    return sorted(seen, key=lambda s: (len(s), sorted(s)))
