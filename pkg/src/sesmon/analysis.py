"""Observational machinery and the bounded security/safety checkers.

The quantifier "for any pair of monotone Q-sets" is finitized by a
QSetUniverse built from the program text; all verdicts are three-valued
(holds / fails / inconclusive), and a hit bound can only ever downgrade
holds to inconclusive, never manufacture a fails.

Bisimulation states are plain processes: after a transition creates a
restriction, the matched fresh names are opened (renamed to shared
canonical names) and their queues join the refreshed universe — this is
what lets an observer change "the high state" at every step.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Optional, Union

from . import monitor as mn
from . import runtime as rt
from . import syntax as sx
from .lattice import Lattice
from .printer import print_mproc, print_process


class UniverseTooLarge(Exception):
    """The enumerated Q-set space exceeds the configured cap."""


def lev_of(content: rt.MsgContent) -> str:
    return content.level


def project_l(h: rt.QSet, L: frozenset[str]) -> rt.QSet:
    """Keep only messages whose level is visible; drop emptied queues."""
    out = []
    for s, q in h:
        q2 = tuple(m for m in q if m.content.level in L)
        if q2:
            out.append((s, q2))
    return tuple(sorted(out))


def eq_l(h: rt.QSet, k: rt.QSet, L: frozenset[str]) -> bool:
    return (project_l(rt.canon_qset(h), L)
            == project_l(rt.canon_qset(k), L))


# ---------------------------------------------------------------------------
# Q-set universe

@dataclass(frozen=True)
class Universe:
    lattice: Lattice
    alphabet: tuple[rt.MsgContent, ...]
    queue_bound: int
    roles: tuple[tuple[str, tuple[int, ...]], ...]  # program-level roles
    qset_cap: int = 50000
    pair_cap: int = 200000


def _scan_contents(p: sx.Process, lat: Lattice) -> list[rt.MsgContent]:
    """The syntactic message alphabet of a program.

    Both boolean polarities are included at every level annotation that
    appears anywhere; other contents come from their occurrences, paired
    with the levels at which some prefix could consume them.
    """
    levels: set[str] = set()
    ints: set[tuple[int, str]] = set()
    int_values: set[int] = set()
    recv_v_levels: set[str] = set()
    labels: set[tuple[str, str]] = set()
    services: set[str] = set()
    service_levels: set[str] = set()
    chans: set[tuple[sx.ChanRole, str]] = set()
    chan_targets: set[sx.ChanRole] = set()
    chan_levels: set[str] = set()

    def expr(e: sx.Expr):
        if isinstance(e, (sx.Var, sx.Lit)):
            levels.add(e.level)
            if isinstance(e, sx.Lit) and not isinstance(e.value, bool):
                ints.add((e.value, e.level))
                int_values.add(e.value)
        elif isinstance(e, sx.Not):
            expr(e.arg)
        elif isinstance(e, sx.And):
            expr(e.left)
            expr(e.right)

    def walk(q: sx.Process):
        if isinstance(q, sx.Initiator):
            if isinstance(q.service, str):
                services.add(q.service)
        elif isinstance(q, sx.Participant):
            if isinstance(q.service, str):
                services.add(q.service)
            walk(q.body)
        elif isinstance(q, sx.SendV):
            expr(q.expr)
            walk(q.cont)
        elif isinstance(q, sx.RecvV):
            if q.level is None:
                # a wildcard binder can consume a message of any level
                levels.update(lat.elements)
                recv_v_levels.update(lat.elements)
            else:
                levels.add(q.level)
                recv_v_levels.add(q.level)
            walk(q.cont)
        elif isinstance(q, sx.SendS):
            levels.add(q.level)
            service_levels.add(q.level)
            if isinstance(q.service, str):
                services.add(q.service)
            walk(q.cont)
        elif isinstance(q, sx.RecvS):
            levels.add(q.level)
            service_levels.add(q.level)
            walk(q.cont)
        elif isinstance(q, sx.SendC):
            levels.add(q.level)
            chan_levels.add(q.level)
            if isinstance(q.target, sx.ChanRole):
                chans.add((q.target, q.level))
                chan_targets.add(q.target)
            walk(q.cont)
        elif isinstance(q, sx.RecvC):
            levels.add(q.level)
            chan_levels.add(q.level)
            walk(q.cont)
        elif isinstance(q, sx.Select):
            levels.add(q.level)
            labels.add((q.label, q.level))
            walk(q.cont)
        elif isinstance(q, sx.Branch):
            levels.add(q.level)
            for lbl, arm in q.branches:
                labels.add((lbl, q.level))
                walk(arm)
        elif isinstance(q, sx.If):
            expr(q.cond)
            walk(q.then)
            walk(q.els)
        elif isinstance(q, sx.Par):
            walk(q.left)
            walk(q.right)
        elif isinstance(q, sx.NewName):
            walk(q.body)
        elif isinstance(q, sx.Def):
            for _, lvl in q.decl.params:
                levels.add(lvl)
            walk(q.decl.body)
            walk(q.body)
        elif isinstance(q, sx.Call):
            for a in q.args:
                expr(a)

    walk(p)
    out: list[rt.MsgContent] = []
    for l in levels:
        out.append(rt.ValueMsg(True, l))
        out.append(rt.ValueMsg(False, l))
    for v, l in ints:
        out.append(rt.ValueMsg(v, l))
    for v in int_values:
        for l in recv_v_levels:
            out.append(rt.ValueMsg(v, l))
    for lbl, l in labels:
        out.append(rt.LabelMsg(lbl, l))
    for a in services:
        for l in service_levels:
            out.append(rt.ServiceMsg(a, l))
    for c, l in chans:
        out.append(rt.ChannelMsg(c, l))
    for c in chan_targets:
        for l in chan_levels:
            out.append(rt.ChannelMsg(c, l))
    return sorted(set(out), key=sx.ser_key)


def build_universe(p: sx.Process, lat: Lattice, queue_bound: int = 2,
                   qset_cap: int = 50000,
                   pair_cap: int = 200000) -> Universe:
    roles = tuple(sorted((s, tuple(sorted(rs)))
                         for s, rs in sx.session_roles(p).items()))
    return Universe(lat, tuple(_scan_contents(p, lat)), queue_bound, roles,
                    qset_cap, pair_cap)


def monotone_queues(contents, pairs, bound: int,
                    lat: Lattice) -> list[rt.Queue]:
    """All monotone queues over the given (sender, receiver) pairs.

    Per pair: every sequence of at most `bound` contents whose levels never
    decrease.  Across pairs the per-pair sequences combine freely (messages
    between distinct pairs commute).
    """
    per_pair: list[list[tuple]] = []
    for s, r in sorted(set(pairs)):
        seqs: list[tuple] = [()]
        frontier: list[tuple] = [()]
        for _ in range(bound):
            nxt = []
            for seq in frontier:
                for c in contents:
                    if all(lat.leq(e.level, c.level) for e in seq):
                        nxt.append(seq + (c,))
            seqs.extend(nxt)
            frontier = nxt
        per_pair.append([tuple(rt.Message(s, frozenset({r}), c) for c in seq)
                         for seq in seqs])
    out = []
    for combo in itertools.product(*per_pair):
        out.append(tuple(m for part in combo for m in part))
    return out


def qsets_for(uni: Universe, sessions, roles_map) -> list[rt.QSet]:
    """All monotone Q-sets saturating the given sessions, small first."""
    per_session: list[list[tuple[str, rt.Queue]]] = []
    total = 1
    for s in sorted(sessions):
        roles = set(roles_map.get(s, ()))
        pairs = [(p, q) for p in roles for q in roles if p != q]
        queues = monotone_queues(uni.alphabet, pairs, uni.queue_bound,
                                 uni.lattice)
        total *= len(queues)
        if total > uni.qset_cap:
            raise UniverseTooLarge(
                f"more than {uni.qset_cap} saturating Q-sets")
        per_session.append([(s, q) for q in queues])
    out = [tuple(combo) for combo in itertools.product(*per_session)]
    out.sort(key=lambda h: (sum(len(q) for _, q in h), sx.ser_key(h)))
    return out


def enumerate_qset_pairs(uni: Universe, p1: sx.Process, p2: sx.Process,
                         L: frozenset[str]):
    """All (H1, H2) that are monotone, L-equal, and saturate each side."""
    roles = _merged_roles(uni, sx.Par(p1, p2))
    qs1 = qsets_for(uni, sx.free_sessions(p1), roles)
    qs2 = qsets_for(uni, sx.free_sessions(p2), roles)
    groups: dict[str, list[rt.QSet]] = {}
    for h in qs2:
        groups.setdefault(_proj_key(h, L), []).append(h)
    count = 0
    for h1 in qs1:
        for h2 in groups.get(_proj_key(h1, L), []):
            count += 1
            if count > uni.pair_cap:
                raise UniverseTooLarge(
                    f"more than {uni.pair_cap} Q-set pairs")
            yield h1, h2


def _merged_roles(uni: Universe, p) -> dict[str, set[int]]:
    roles = {s: set(rs) for s, rs in uni.roles}
    for s, rs in sx.session_roles(p).items():
        roles.setdefault(s, set()).update(rs)
    return roles


def _proj_key(h: rt.QSet, L: frozenset[str]) -> str:
    return sx.ser_key(project_l(rt.canon_qset(h), L))


# ---------------------------------------------------------------------------
# Canonical states (restrictions opened into a shared namespace)

def _is_opened(name: str) -> bool:
    return name.startswith(("_s", "_r", "#"))


def _canon_open(groups: list[list[sx.Process]]):
    """Jointly rename opened names to _s0, _s1, ... across process groups."""
    allnames = rt.occurring_names(
        rt.rebuild([c for g in groups for c in g]), ())
    opened = {n for n in allnames if _is_opened(n)}
    mask = {n: "\x00" for n in opened}
    for g in groups:
        g.sort(key=lambda q: sx.ser_key(rt.rename_names(q, mask)))
    order: list[str] = []
    for g in groups:
        for q in g:
            rt._names_in_order(q, opened, order)
    free = allnames - opened
    ren: dict[str, str] = {}
    i = 0
    for old in order:
        while f"_s{i}" in free:
            i += 1
        ren[old] = f"_s{i}"
        i += 1
    out = []
    for g in groups:
        g2 = [rt.rename_names(q, ren) for q in g]
        g2.sort(key=sx.ser_key)
        out.append(g2)
    return out


def canon_proc(p: sx.Process) -> sx.Process:
    extruded: list[str] = []
    comps = rt._gather(p, extruded)
    (comps2,) = _canon_open([comps])
    return rt.rebuild(comps2)


def _canon_pair_directed(a: sx.Process,
                         b: sx.Process) -> tuple[sx.Process, sx.Process]:
    ra: list[str] = []
    rb: list[str] = []
    ca = rt._gather(a, ra)
    cb = rt._gather(b, rb)
    ca2, cb2 = _canon_open([ca, cb])
    return rt.rebuild(ca2), rt.rebuild(cb2)


def canon_pair(a: sx.Process, b: sx.Process) -> tuple[sx.Process, sx.Process]:
    """Canonical unordered state pair with one shared opened namespace."""
    x = _canon_pair_directed(a, b)
    y = _canon_pair_directed(b, a)
    kx = (sx.ser_key(x[0]), sx.ser_key(x[1]))
    ky = (sx.ser_key(y[0]), sx.ser_key(y[1]))
    return x if kx <= ky else y


def canon_mstate(m: sx.MProc) -> sx.MProc:
    extruded: list[str] = []
    comps = mn._dedup_nil(mn._mgather(m, extruded))
    allnames = rt.occurring_names(mn.mrebuild(comps), ())
    opened = {n for n in allnames if _is_opened(n)}
    mask = {n: "\x00" for n in opened}
    comps.sort(key=lambda q: sx.ser_key(rt.rename_names(q, mask)))
    order: list[str] = []
    for q in comps:
        rt._names_in_order(q, opened, order)
    free = allnames - opened
    ren: dict[str, str] = {}
    i = 0
    for old in order:
        while f"_s{i}" in free:
            i += 1
        ren[old] = f"_s{i}"
        i += 1
    comps = [rt.rename_names(q, ren) for q in comps]
    comps.sort(key=sx.ser_key)
    return mn.mrebuild(comps)


# ---------------------------------------------------------------------------
# Verdicts

@dataclass
class CheckVerdict:
    result: str  # 'holds' | 'fails' | 'inconclusive'
    reason: str = ""
    witness: Optional[dict] = None
    stats: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Security (bounded L-bisimulation)

class _SecureChecker:
    """Bounded bisimulation game with threaded queues and per-round refresh.

    A game state is a canonical 4-tuple (P1, H1, P2, H2).  The two queue
    sets always agree on their L-visible content; each side additionally
    carries its own L-invisible message shape.  At every round the
    environment is re-quantified, but in a structure-preserving way:

    * the payload of every L-invisible message may be rewritten in place,
      independently on the two sides (the "high state" changes each step);
    * the same L-visible messages may be appended to both sides (the
      low observer feeds both runs identically);
    * invisible messages are neither created nor destroyed after the
      initial round, which quantifies over all L-equal pairs of monotone
      saturating Q-sets from the universe.

    Invisible messages sit behind the visible backlog of their queue, the
    position they occupy in any monotone queue.
    """

    def __init__(self, lat: Lattice, uni: Universe, L: frozenset[str],
                 depth: int, steps: int):
        self.lat = lat
        self.uni = uni
        self.L = L
        self.depth = depth
        self.steps = steps
        self.pairs: dict[str, dict] = {}
        self._reach_cache: dict[str, tuple] = {}
        self._canon_cache: dict[tuple, tuple] = {}
        self._projk_cache: dict[str, str] = {}
        self._inst_cache: dict[tuple, list] = {}
        self._high_cache: dict[str, list] = {}
        self._inj_cache: dict[tuple, list] = {}
        self._succ_cache: dict[tuple, list] = {}

    # -- small caches ---------------------------------------------------

    def projk(self, h: rt.QSet) -> str:
        k = sx.ser_key(h)
        out = self._projk_cache.get(k)
        if out is None:
            out = self._projk_cache[k] = _proj_key(h, self.L)
        return out

    def _high_options(self, c: rt.MsgContent) -> list[rt.MsgContent]:
        """Alphabet contents an invisible message may be rewritten into."""
        k = sx.ser_key(c)
        out = self._high_cache.get(k)
        if out is None:
            out = [a for a in self.uni.alphabet
                   if type(a) is type(c) and a.level == c.level]
            out = self._high_cache[k] = out or [c]
        return out

    # -- queue normalization and round quantification --------------------

    def _norm(self, h: rt.QSet, needed) -> rt.QSet:
        """Canonical threaded shape: per-pair FIFO of visible messages,
        invisible messages at the tail with representative payloads."""
        entries = {s: () for s in needed}
        for s, q in h:
            entries[s] = q
        out = []
        for s in sorted(entries):
            singles = [rt.Message(m.sender, frozenset({r}), m.content)
                       for m in entries[s] for r in sorted(m.receivers)]
            dirs = sorted({(m.sender, min(m.receivers)) for m in singles})
            nq: list[rt.Message] = []
            for snd, rcv in dirs:
                grp = [m for m in singles
                       if m.sender == snd and rcv in m.receivers]
                nq.extend(m for m in grp if m.content.level in self.L)
                high = [rt.Message(snd, frozenset({rcv}),
                                   min(self._high_options(m.content),
                                       key=sx.ser_key))
                        for m in grp if m.content.level not in self.L]
                high.sort(key=lambda m: sx.ser_key(m.content))
                nq.extend(high)
            if nq or s in needed:
                out.append((s, tuple(nq)))
        return tuple(out)

    def _occupancy(self, qa: rt.QSet, qb: rt.QSet) -> dict[tuple, int]:
        occ: dict[tuple, int] = {}
        for h in (qa, qb):
            cnt: dict[tuple, int] = {}
            for s, q in h:
                for m in q:
                    d = (s, m.sender, min(m.receivers))
                    cnt[d] = cnt.get(d, 0) + 1
            for d, v in cnt.items():
                occ[d] = max(occ.get(d, 0), v)
        return occ

    def _injections(self, sessions, roles, occ) -> list[dict]:
        """Common visible suffixes: a directed pair may be topped up to
        queueBound total messages."""
        dirs = sorted({(s, p, q) for s in sessions
                       for p in roles.get(s, ()) for q in roles.get(s, ())
                       if p != q})
        key = tuple((d, max(0, self.uni.queue_bound - occ.get(d, 0)))
                    for d in dirs)
        if key in self._inj_cache:
            return self._inj_cache[key]
        vis = [c for c in self.uni.alphabet if c.level in self.L]
        per_dir: list[list[tuple]] = []
        total = 1
        for d, allow in key:
            seqs: list[tuple] = [()]
            frontier: list[tuple] = [()]
            for _ in range(allow):
                frontier = [sq + (c,) for sq in frontier for c in vis]
                seqs.extend(frontier)
            per_dir.append(seqs)
            total *= len(seqs)
            if total > self.uni.qset_cap:
                raise UniverseTooLarge(
                    f"more than {self.uni.qset_cap} injection choices")
        out = []
        for combo in itertools.product(*per_dir):
            out.append({d: sq for (d, _), sq in zip(key, combo) if sq})
        self._inj_cache[key] = out
        return out

    def _inst(self, nh: rt.QSet, inj: dict) -> list[rt.QSet]:
        """All concrete Q-sets: visible backbone, injected suffix, then
        every payload rewrite of the invisible tail."""
        key = (sx.ser_key(nh), sx.ser_key(tuple(sorted(inj.items()))))
        if key in self._inst_cache:
            return self._inst_cache[key]
        slots: list[list] = []  # per slot: (session index, options)
        layout: list[tuple[str, list[int]]] = []
        sessions = {s for s, _ in nh} | {s for s, _, _ in inj}
        nh_map = dict(nh)
        for s in sorted(sessions):
            q = nh_map.get(s, ())
            dirs = sorted({(m.sender, min(m.receivers)) for m in q}
                          | {(p, r) for s2, p, r in inj if s2 == s})
            idxs: list[int] = []
            for snd, rcv in dirs:
                grp = [m for m in q if m.sender == snd and rcv in m.receivers]
                for m in grp:
                    if m.content.level in self.L:
                        idxs.append(len(slots))
                        slots.append([m])
                for c in inj.get((s, snd, rcv), ()):
                    idxs.append(len(slots))
                    slots.append([rt.Message(snd, frozenset({rcv}), c)])
                for m in grp:
                    if m.content.level not in self.L:
                        idxs.append(len(slots))
                        slots.append(
                            [rt.Message(snd, frozenset({rcv}), o)
                             for o in self._high_options(m.content)])
            layout.append((s, idxs))
        total = 1
        for opts in slots:
            total *= len(opts)
            if total > self.uni.qset_cap:
                raise UniverseTooLarge(
                    f"more than {self.uni.qset_cap} payload rewrites")
        out = []
        for combo in itertools.product(*slots):
            out.append(tuple((s, tuple(combo[i] for i in idxs))
                             for s, idxs in layout))
        self._inst_cache[key] = out
        return out

    def _too_long(self, h: rt.QSet) -> bool:
        cap = self.uni.queue_bound + 3
        for _, q in h:
            counts: dict[tuple, int] = {}
            for m in q:
                d = (m.sender, min(m.receivers))
                counts[d] = counts.get(d, 0) + 1
                if counts[d] > cap:
                    return True
        return False

    # -- canonical states -------------------------------------------------

    def _canon_directed(self, p1, h1, p2, h2):
        c1 = rt._gather(p1, [])
        c2 = rt._gather(p2, [])
        carrier = rt.rebuild(c1 + c2)
        names = (rt.occurring_names(carrier, ())
                 | rt.occurring_names(h1, ()) | rt.occurring_names(h2, ()))
        opened = {n for n in names if _is_opened(n)}
        mask = {n: "\x00" for n in opened}
        c1.sort(key=lambda q: sx.ser_key(rt.rename_names(q, mask)))
        c2.sort(key=lambda q: sx.ser_key(rt.rename_names(q, mask)))
        order: list[str] = []
        for q in c1 + c2:
            rt._names_in_order(q, opened, order)
        for n in sorted(opened - set(order)):
            order.append(n)
        free = names - opened
        ren: dict[str, str] = {}
        i = 0
        for old in order:
            while f"_s{i}" in free:
                i += 1
            ren[old] = f"_s{i}"
            i += 1
        g1 = sorted((rt.rename_names(q, ren) for q in c1), key=sx.ser_key)
        g2 = sorted((rt.rename_names(q, ren) for q in c2), key=sx.ser_key)
        q1 = rt.canon_qset(rt.rename_names(h1, ren))
        q2 = rt.canon_qset(rt.rename_names(h2, ren))
        return rt.rebuild(g1), q1, rt.rebuild(g2), q2

    def canon_child(self, p1, h1, p2, h2):
        """Canonical unordered game state with a shared opened namespace."""
        raw = (sx.ser_key(p1), sx.ser_key(h1), sx.ser_key(p2), sx.ser_key(h2))
        out = self._canon_cache.get(raw)
        if out is None:
            x = self._canon_directed(p1, h1, p2, h2)
            y = self._canon_directed(p2, h2, p1, h1)
            kx = tuple(sx.ser_key(v) for v in x)
            ky = tuple(sx.ser_key(v) for v in y)
            state = x if kx <= ky else y
            out = self._canon_cache[raw] = (sx.ser_key(state), state)
        return out

    # -- the game ----------------------------------------------------------

    def reach(self, p: sx.Process, h: rt.QSet):
        """States reachable from ⟨p,h⟩ in at most `depth` steps."""
        key = sx.ser_key((p, h))
        if key in self._reach_cache:
            return self._reach_cache[key]
        start = rt.Config((), p, rt.canon_qset(h))
        seen = {start}
        nodes = [(start, 0)]
        frontier = [start]
        for d in range(1, self.depth + 1):
            nxt = []
            for c in frontier:
                succs, _ = rt.step_standard(c, self.lat)
                for _, c2 in succs:
                    if c2 not in seen:
                        seen.add(c2)
                        nodes.append((c2, d))
                        nxt.append(c2)
            frontier = nxt
        truncated = False
        for c in frontier:
            succs, _ = rt.step_standard(c, self.lat)
            if any(c2 not in seen for _, c2 in succs):
                truncated = True
                break
        self._reach_cache[key] = (nodes, truncated)
        return nodes, truncated

    def _round(self, x, y, k1, k2, orient, obligations, children):
        """Match every move of ⟨x,k1⟩ against paths of ⟨y,k2⟩.

        Returns (witness, capped)."""
        skey = (sx.ser_key(x), sx.ser_key(k1))
        succs = self._succ_cache.get(skey)
        if succs is None:
            succs, _ = rt.step_standard(
                rt.Config((), x, rt.canon_qset(k1)), self.lat)
            self._succ_cache[skey] = succs
        if not succs:
            return None, False
        nodes, trunc = self.reach(y, k2)
        capped = False
        for label, sc in succs:
            cands: set[str] = set()
            overflow = False
            k = len(sc.restricted)
            if self._too_long(sc.qset):
                capped = True
                continue
            for c2, d in nodes:
                if d == 0 and k > 0:
                    continue
                if len(c2.restricted) != k:
                    continue
                ren = dict(zip(sorted(c2.restricted), sorted(sc.restricted)))
                h2p = rt.rename_names(c2.qset, ren) if ren else c2.qset
                if self.projk(h2p) != self.projk(sc.qset):
                    continue
                if self._too_long(h2p):
                    overflow = True
                    continue
                p2p = rt.rename_names(c2.process, ren) if ren else c2.process
                sess = (sx.free_sessions(sc.process)
                        | sx.free_sessions(p2p))
                n1 = self._norm(sc.qset, sess)
                n2 = self._norm(h2p, sess)
                ck, child = self.canon_child(sc.process, n1, p2p, n2)
                children[ck] = child
                cands.add(ck)
            if not cands:
                if trunc or overflow:
                    capped = True
                    continue
                witness = {
                    "kind": "leaf",
                    "L": sorted(self.L),
                    "orientation": orient,
                    "left": print_process(x),
                    "right": print_process(y),
                    "left_proc": x,
                    "right_proc": y,
                    "qset_left": rt.canon_qset(k1),
                    "qset_right": rt.canon_qset(k2),
                    "rule": label.rule,
                    "step": label.subject,
                    "qset_left_after": sc.qset,
                    "proj_left_after": project_l(sc.qset, self.L),
                    "proj_right": project_l(rt.canon_qset(k2), self.L),
                }
                return witness, capped
            obligations.add(frozenset(cands))
        return None, capped

    def expand_root(self, a, b):
        """Initial round: all L-equal monotone saturating universe pairs."""
        obligations: set[frozenset[str]] = set()
        children: dict[str, tuple] = {}
        capped = False
        try:
            for h1, h2 in enumerate_qset_pairs(self.uni, a, b, self.L):
                w, c = self._round(a, b, h1, h2, "left",
                                   obligations, children)
                capped = capped or c
                if w is not None:
                    return obligations, w, capped, children
                if sx.ser_key(a) != sx.ser_key(b):
                    w, c = self._round(b, a, h1, h2, "right",
                                       obligations, children)
                    capped = capped or c
                    if w is not None:
                        return obligations, w, capped, children
        except UniverseTooLarge:
            return set(), None, True, {}
        return obligations, None, capped, children

    def expand(self, a, qa, b, qb):
        """One refresh round of an interior state."""
        obligations: set[frozenset[str]] = set()
        children: dict[str, tuple] = {}
        capped = False
        roles = _merged_roles(self.uni, sx.Par(a, b))
        sessions = (sx.free_sessions(a) | sx.free_sessions(b)
                    | {s for s, _ in qa} | {s for s, _ in qb})
        try:
            injs = self._injections(sessions, roles,
                                    self._occupancy(qa, qb))
            orients = ((a, qa, b, qb, "left"),
                       (b, qb, a, qa, "right"))
            if (sx.ser_key(a), sx.ser_key(qa)) == (sx.ser_key(b),
                                                   sx.ser_key(qb)):
                orients = orients[:1]  # a symmetric state mirrors itself
            for x, qx, y, qy, orient in orients:
                for inj in injs:
                    k1s = self._inst(qx, inj)
                    k2s = self._inst(qy, inj)
                    for k1 in k1s:
                        for k2 in k2s:
                            w, c = self._round(x, y, k1, k2, orient,
                                               obligations, children)
                            capped = capped or c
                            if w is not None:
                                return obligations, w, capped, children
        except UniverseTooLarge:
            return set(), None, True, {}
        return obligations, None, capped, children

    def run(self, p: sx.Process) -> CheckVerdict:
        sess = sx.free_sessions(p)
        h0 = self._norm(tuple((s, ()) for s in sorted(sess)), sess)
        rk, root = self.canon_child(p, h0, p, h0)
        self.pairs[rk] = {"state": root, "expanded": False, "dead": False,
                          "capped": False, "obligations": (),
                          "witness": None, "round": None, "root": True}
        work = [rk]
        expansions = 0
        budget_hit = False
        while work:
            key = work.pop(0)
            info = self.pairs[key]
            if info["expanded"]:
                continue
            if expansions >= self.steps:
                budget_hit = True
                info["capped"] = True
                info["expanded"] = True
                continue
            expansions += 1
            p1, q1, p2, q2 = info["state"]
            if info.get("root"):
                obligations, witness, capped, children = self.expand_root(
                    p1, p2)
            else:
                obligations, witness, capped, children = self.expand(
                    p1, q1, p2, q2)
            info["expanded"] = True
            info["capped"] = capped
            if witness is not None:
                info["dead"] = True
                info["witness"] = witness
                info["round"] = 0
                continue
            info["obligations"] = tuple(obligations)
            for ck, child in children.items():
                if ck not in self.pairs:
                    self.pairs[ck] = {"state": child, "expanded": False,
                                      "dead": False, "capped": False,
                                      "obligations": (), "witness": None,
                                      "round": None}
                    work.append(ck)

        # optimistic pruning: a state dies when some move under some
        # environment choice has only dead candidate matches
        rnd = 0
        changed = True
        while changed:
            changed = False
            rnd += 1
            for key, info in self.pairs.items():
                if info["dead"] or not info["expanded"] or info["round"] == 0:
                    continue
                for cands in info["obligations"]:
                    if cands and all(self.pairs[c]["dead"] for c in cands):
                        info["dead"] = True
                        info["round"] = rnd
                        info["killer"] = cands
                        changed = True
                        break
        if self.pairs[rk]["dead"]:
            return CheckVerdict("fails",
                                "a transition has no L-equal match",
                                self._walk_witness(rk),
                                {"pairs": len(self.pairs),
                                 "expansions": expansions})
        # certainty: holds only if no bound was hit anywhere load-bearing
        certain = {k: (i["expanded"] and not i["capped"] and not i["dead"])
                   for k, i in self.pairs.items()}
        changed = True
        while changed:
            changed = False
            for key, info in self.pairs.items():
                if not certain[key]:
                    continue
                for cands in info["obligations"]:
                    if not any(certain.get(c, False) for c in cands):
                        certain[key] = False
                        changed = True
                        break
        stats = {"pairs": len(self.pairs), "expansions": expansions,
                 "budget_hit": budget_hit}
        if certain[rk]:
            return CheckVerdict("holds",
                                "greatest fixpoint contains the pair",
                                None, stats)
        return CheckVerdict("inconclusive", "bound hit during exploration",
                            None, stats)

    def _walk_witness(self, key: str) -> dict:
        """Follow the kill chain down to the leaf disagreement."""
        path = []
        while True:
            info = self.pairs[key]
            if info["witness"] is not None:
                w = dict(info["witness"])
                w["path"] = path
                return w
            p1, q1, p2, q2 = info["state"]
            path.append({"left": print_process(p1),
                         "right": print_process(p2)})

            def weight(c: str):
                _, h1, _, h2 = self.pairs[c]["state"]
                bulk = sum(len(q) for _, q in h1) \
                    + sum(len(q) for _, q in h2)
                return (self.pairs[c]["round"], bulk, c)

            dead = [cands for cands in info["obligations"]
                    if cands and all(self.pairs[c]["dead"] for c in cands)]
            key = min((min(cands, key=weight) for cands in dead),
                      key=weight)


def check_secure(p: sx.Process, L: frozenset[str], lat: Lattice,
                 uni: Universe, depth: int = 4,
                 steps: int = 2000) -> CheckVerdict:
    """Bounded check that p is L-bisimilar to itself."""
    if not L:
        return CheckVerdict("holds", "empty observer set is vacuous")
    return _SecureChecker(lat, uni, frozenset(L), depth, steps).run(p)


def check_secure_all(p: sx.Process, lat: Lattice, uni: Universe,
                     depth: int = 4, steps: int = 2000
                     ) -> dict[frozenset[str], CheckVerdict]:
    """check_secure for every nonempty downward-closed observer set."""
    out = {}
    for L in lat.downsets():
        if not L:
            continue
        out[L] = check_secure(p, L, lat, uni, depth, steps)
    return out


def overall_secure(verdicts: dict) -> str:
    results = {v.result for v in verdicts.values()}
    if "fails" in results:
        return "fails"
    if "inconclusive" in results:
        return "inconclusive"
    return "holds"


# ---------------------------------------------------------------------------
# Safety (bounded coinductive check)

class _SafeChecker:
    def __init__(self, lat: Lattice, uni: Universe, depth_bound: int,
                 steps: int):
        self.lat = lat
        self.uni = uni
        self.depth_bound = depth_bound
        self.steps = steps
        self.states: dict[str, dict] = {}

    def expand(self, m: sx.MProc):
        obligations: list[set[str]] = []
        children: dict[str, sx.MProc] = {}
        capped = False
        p = sx.demonitor(m)
        roles = _merged_roles(self.uni, p)
        try:
            qs = qsets_for(self.uni, sx.free_sessions(p), roles)
        except UniverseTooLarge:
            return [], None, True, {}
        for h in qs:
            std, _ = rt.step_standard(
                rt.Config((), p, rt.canon_qset(h)), self.lat)
            if not std:
                continue
            mres = mn.step_monitored(
                mn.MConfig((), m, rt.canon_qset(h)), self.lat)
            erased = []
            for _, mc in mres.successors:
                ec = mn.demonitor_config(mc)
                ck = canon_mstate(mc.mprocess)
                erased.append((ec, sx.ser_key(ck), ck))
            for label, sc in std:
                cands = {k for ec, k, _ in erased if ec == sc}
                if not cands:
                    witness = {
                        "kind": "unsafe",
                        "state": print_mproc(m),
                        "mstate": m,
                        "qset": rt.canon_qset(h),
                        "rule": label.rule,
                        "step": label.subject,
                        "errors": [
                            {"subject": e.subject, "monitor": e.monitor,
                             "level": e.level} for e in mres.errors],
                    }
                    return obligations, witness, capped, children
                obligations.append(cands)
                for ec, k, ck in erased:
                    if k in cands:
                        children[k] = ck
        return obligations, None, capped, children

    def run(self, m0: sx.MProc) -> CheckVerdict:
        root = canon_mstate(m0)
        rk = sx.ser_key(root)
        self.states[rk] = {"state": root, "depth": 0, "expanded": False,
                           "dead": False, "capped": False,
                           "obligations": [], "witness": None,
                           "round": None}
        work = [rk]
        expansions = 0
        budget_hit = False
        while work:
            key = work.pop(0)
            info = self.states[key]
            if info["expanded"]:
                continue
            if info["depth"] > self.depth_bound or expansions >= self.steps:
                budget_hit = True
                info["capped"] = True
                info["expanded"] = True
                continue
            expansions += 1
            obligations, witness, capped, children = self.expand(
                info["state"])
            info["expanded"] = True
            info["capped"] = capped
            if witness is not None:
                info["dead"] = True
                info["witness"] = witness
                info["round"] = 0
                continue
            info["obligations"] = obligations
            for ck, child in children.items():
                if ck not in self.states:
                    self.states[ck] = {"state": child,
                                       "depth": info["depth"] + 1,
                                       "expanded": False, "dead": False,
                                       "capped": False, "obligations": [],
                                       "witness": None, "round": None}
                    work.append(ck)
        rnd = 0
        changed = True
        while changed:
            changed = False
            rnd += 1
            for key, info in self.states.items():
                if info["dead"] or not info["expanded"] or info["round"] == 0:
                    continue
                for cands in info["obligations"]:
                    if cands and all(self.states[c]["dead"] for c in cands):
                        info["dead"] = True
                        info["round"] = rnd
                        info["killer"] = cands
                        changed = True
                        break
        stats = {"states": len(self.states), "expansions": expansions,
                 "budget_hit": budget_hit}
        if self.states[rk]["dead"]:
            return CheckVerdict("fails",
                                "a standard step has no monitored match",
                                self._walk_witness(rk), stats)
        certain = {k: (i["expanded"] and not i["capped"] and not i["dead"])
                   for k, i in self.states.items()}
        changed = True
        while changed:
            changed = False
            for key, info in self.states.items():
                if not certain[key]:
                    continue
                for cands in info["obligations"]:
                    if not any(certain.get(c, False) for c in cands):
                        certain[key] = False
                        changed = True
                        break
        if certain[rk]:
            return CheckVerdict("holds", "all monitored states survive",
                                None, stats)
        return CheckVerdict("inconclusive", "bound hit during exploration",
                            None, stats)

    def _walk_witness(self, key: str) -> dict:
        path = []
        while True:
            info = self.states[key]
            if info["witness"] is not None:
                w = dict(info["witness"])
                w["path"] = path
                return w
            path.append(print_mproc(info["state"]))
            key = min(info["killer"],
                      key=lambda c: (self.states[c]["round"], c))


def check_safe(p: sx.Process, lat: Lattice, uni: Universe,
               depth_bound: int = 12, steps: int = 2000,
               mu0: Optional[str] = None) -> CheckVerdict:
    """Bounded check of the coinductive safety predicate on ⌊mu0⌋p."""
    m0 = mn.wrap(p, mu0 if mu0 is not None else lat.bottom)
    return _SafeChecker(lat, uni, depth_bound, steps).run(m0)


# ---------------------------------------------------------------------------
# Runtime-error reachability and L-highness

def check_no_runtime_error(p: sx.Process, lat: Lattice,
                           max_steps: int = 100,
                           max_states: int = 20000) -> CheckVerdict:
    """Explore all monitored computations of ⟨⌊⊥⌋p, ∅⟩ threading queues."""
    start = mn.initial_mconfig(p, lat)
    seen = {start}
    frontier = [start]
    for depth in range(max_steps + 1):
        if not frontier:
            return CheckVerdict("holds", "no reachable erring redex",
                                None, {"states": len(seen)})
        nxt = []
        for c in frontier:
            res = mn.step_monitored(c, lat)
            if res.errors:
                e = res.errors[0]
                return CheckVerdict(
                    "fails", "a monitored computation errs",
                    {"kind": "error", "state": print_mproc(c.mprocess),
                     "qset": c.qset, "depth": depth,
                     "errors": [{"subject": x.subject, "monitor": x.monitor,
                                 "level": x.level} for x in res.errors]},
                    {"states": len(seen)})
            for _, c2 in res.successors:
                if c2 not in seen:
                    seen.add(c2)
                    nxt.append(c2)
                    if len(seen) > max_states:
                        return CheckVerdict(
                            "inconclusive", "state cap hit", None,
                            {"states": len(seen)})
        frontier = nxt
    return CheckVerdict("inconclusive", "step bound hit", None,
                        {"states": len(seen)})


def check_l_high(p: sx.Process, L: frozenset[str], lat: Lattice,
                 uni: Universe, depth_bound: int = 12,
                 steps: int = 2000) -> CheckVerdict:
    """Bounded check that every transition leaves the L-projection of the
    Q-set unchanged."""
    L = frozenset(L)
    root = canon_proc(p)
    seen = {sx.ser_key(root)}
    frontier = [root]
    expansions = 0
    budget_hit = False
    for _ in range(depth_bound + 1):
        if not frontier:
            return CheckVerdict("holds", "no L-visible transition",
                                None, {"states": len(seen)})
        nxt = []
        for x in frontier:
            if expansions >= steps:
                budget_hit = True
                break
            expansions += 1
            roles = _merged_roles(uni, x)
            try:
                qs = qsets_for(uni, sx.free_sessions(x), roles)
            except UniverseTooLarge:
                return CheckVerdict("inconclusive", "universe too large",
                                    None, {"states": len(seen)})
            for h in qs:
                succs, _ = rt.step_standard(
                    rt.Config((), x, rt.canon_qset(h)), lat)
                for label, sc in succs:
                    if (sx.ser_key(project_l(rt.canon_qset(h), L))
                            != sx.ser_key(project_l(sc.qset, L))):
                        return CheckVerdict(
                            "fails", "a transition is L-visible",
                            {"kind": "lhigh", "state": print_process(x),
                             "qset": rt.canon_qset(h), "step": label.subject,
                             "qset_after": sc.qset, "L": sorted(L)},
                            {"states": len(seen)})
                    child = canon_proc(sc.process)
                    ck = sx.ser_key(child)
                    if ck not in seen:
                        seen.add(ck)
                        nxt.append(child)
        if budget_hit:
            break
        frontier = nxt
    if budget_hit or frontier:
        return CheckVerdict("inconclusive", "bound hit", None,
                            {"states": len(seen)})
    return CheckVerdict("holds", "no L-visible transition", None,
                        {"states": len(seen)})


# ---------------------------------------------------------------------------
# Witness replay

def replay_secure_witness(w: dict, lat: Lattice, L: frozenset[str],
                          depth: int = 4) -> bool:
    """Re-run a leaf witness: the recorded move must again have no match."""
    x = w["left_proc"]
    y = w["right_proc"]
    h1 = w["qset_left"]
    h2 = w["qset_right"]
    succs, _ = rt.step_standard(rt.Config((), x, h1), lat)
    moves = [(lbl, sc) for lbl, sc in succs if lbl.subject == w["step"]]
    if not moves:
        return False
    checker = _SecureChecker(lat, build_universe(x, lat), frozenset(L),
                             depth, 1)
    nodes, _ = checker.reach(y, h2)
    for _, sc in moves:
        k = len(sc.restricted)
        matched = False
        for c2, d in nodes:
            if d == 0 and k > 0:
                continue
            if len(c2.restricted) != k:
                continue
            ren = dict(zip(sorted(c2.restricted), sorted(sc.restricted)))
            if _proj_key(rt.rename_names(c2.qset, ren), frozenset(L)) \
                    == _proj_key(sc.qset, frozenset(L)):
                matched = True
                break
        if not matched:
            return True
    return False


# ---------------------------------------------------------------------------
# Random process generation for the property suites

def random_process(rng: random.Random, lat: Lattice) -> sx.Process:
    """A small two-role process over one free session, grammar-directed.

    The mix deliberately includes level mismatches so the generated corpus
    contains safe, unsafe, secure, and insecure instances.
    """
    levels = sorted(lat.elements)
    counter = itertools.count()

    def script(role: int, other: int, budget: int) -> sx.Process:
        if budget <= 0 or rng.random() < 0.25:
            return sx.Nil()
        chan = sx.ChanRole("s", role)
        kind = rng.randrange(4)
        lvl = rng.choice(levels)
        if kind == 0:
            return sx.SendV(chan, frozenset({other}),
                            sx.Lit(rng.random() < 0.5, lvl),
                            script(role, other, budget - 1))
        if kind == 1:
            var = f"x{next(counter)}"
            return sx.RecvV(chan, other, var, lvl,
                            script(role, other, budget - 1))
        if kind == 2:
            return sx.If(sx.Lit(rng.random() < 0.5, lvl),
                         script(role, other, budget - 2),
                         script(role, other, budget - 2))
        var = f"x{next(counter)}"
        return sx.RecvV(chan, other, var, lvl,
                        sx.If(sx.Var(var, lvl),
                              script(role, other, budget - 2),
                              script(role, other, budget - 2)))

    left = script(1, 2, rng.randrange(1, 4))
    right = script(2, 1, rng.randrange(1, 4))
    return sx.Par(left, right)
