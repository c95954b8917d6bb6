"""Queue discipline and the standard small-step semantics."""

import random
from collections import deque

import pytest

from sesmon import parser as ps
from sesmon import runtime as rt
from sesmon.lattice import validate_lattice

from conftest import load

LAT2 = validate_lattice({"bot", "top"}, [("bot", "top")])


def random_content(rng):
    kind = rng.randrange(3)
    lvl = rng.choice(["bot", "top"])
    if kind == 0:
        return rt.ValueMsg(rng.random() < 0.5, lvl)
    if kind == 1:
        return rt.ValueMsg(rng.randrange(5), lvl)
    return rt.LabelMsg(rng.choice(["go", "stop"]), lvl)


def test_per_pair_fifo_against_deque_oracle():
    """1000 random push/pop sequences: pop_message must agree with an
    independent per-(session, sender, receiver) deque model."""
    rng = random.Random(424242)
    for _ in range(1000):
        sessions = ["s", "t"][: rng.randrange(1, 3)]
        h = tuple((s, ()) for s in sessions)
        oracle = {}
        for _ in range(rng.randrange(1, 15)):
            s = rng.choice(sessions)
            snd, rcv = rng.sample([1, 2, 3], 2)
            if rng.random() < 0.6:
                c = random_content(rng)
                h = rt.push_message(h, s, rt.Message(snd, frozenset({rcv}),
                                                     c))
                oracle.setdefault((s, snd, rcv), deque()).append(c)
            else:
                got, h2 = rt.pop_message(h, s, rcv, snd)
                q = oracle.get((s, snd, rcv))
                if q:
                    assert got == q.popleft()
                    h = h2
                else:
                    assert got is None and h2 is None
        # drain everything and compare the leftovers in order
        for (s, snd, rcv), q in oracle.items():
            while q:
                got, h = rt.pop_message(h, s, rcv, snd)
                assert got == q.popleft()
        assert all(not q for _, q in h)


def test_canon_queue_preserves_pair_order_and_content():
    rng = random.Random(99)
    for _ in range(300):
        msgs = []
        for _ in range(rng.randrange(0, 10)):
            snd = rng.randrange(1, 4)
            rcvs = frozenset(rng.sample([1, 2, 3], rng.randrange(1, 3)))
            msgs.append(rt.Message(snd, rcvs, random_content(rng)))
        q = tuple(msgs)
        cq = rt.canon_queue(q)
        # single-receiver split preserves the multiset of deliveries
        deliveries = sorted((m.sender, r, repr(m.content))
                            for m in q for r in m.receivers)
        assert deliveries == sorted((m.sender, min(m.receivers),
                                     repr(m.content)) for m in cq)
        # per-pair order is untouched
        for snd in range(1, 4):
            for rcv in range(1, 4):
                before = [repr(m.content) for m in q
                          if m.sender == snd and rcv in m.receivers]
                after = [repr(m.content) for m in cq
                         if m.sender == snd and rcv in m.receivers]
                assert before == after
        assert rt.canon_queue(cq) == cq  # idempotent


def test_is_monotone():
    lo = rt.Message(1, frozenset({2}), rt.ValueMsg(True, "bot"))
    hi = rt.Message(1, frozenset({2}), rt.ValueMsg(True, "top"))
    assert rt.is_monotone((("s", (lo, hi)),), LAT2)
    assert not rt.is_monotone((("s", (hi, lo)),), LAT2)
    # distinct pairs commute freely
    other = rt.Message(2, frozenset({1}), rt.ValueMsg(True, "bot"))
    assert rt.is_monotone((("s", (hi, other)),), LAT2)


def test_multiparty_broadcast_consumed_once_per_receiver():
    p = ps.parse_process_text(
        "s[1]!<{2, 3}, true^bot>. 0 | s[2]?(1, x^bot). 0"
        " | s[3]?(1, y^bot). 0", LAT2)
    res = rt.run_standard(rt.initial_config(p), LAT2)
    assert res.status == "clean"
    assert [l.rule for l, _ in res.trace] == ["SendV", "RecvV", "RecvV"]


def test_wildcard_receive_consumes_any_level():
    p = ps.parse_process_text(
        "s[1]?(2, x). 0 | s[2]!<1, true^top>. 0", LAT2)
    res = rt.run_standard(rt.initial_config(p), LAT2)
    assert res.status == "clean"
    recv = [l for l, _ in res.trace if l.rule == "RecvV"]
    assert recv and "top" in recv[0].subject


def test_levelled_receive_blocks_on_mismatch():
    p = ps.parse_process_text(
        "s[1]?(2, x^bot). 0 | s[2]!<1, true^top>. 0", LAT2)
    res = rt.run_standard(rt.initial_config(p), LAT2)
    assert res.status == "stuck"


def test_medical_standard_run_is_clean():
    prog = load("medical")
    p = ps.bind_choices(prog.process, prog.choices,
                        {"simple": True, "gooduse": True})
    res = rt.run_standard(rt.initial_config(p), prog.lattice)
    assert res.status == "clean"
    assert res.trace[0][0].rule == "Link"


def test_session_link_opens_fresh_session():
    p = ps.parse_process_text(
        "bar a[2] | a[1](al). al!<2, true^bot>. 0"
        " | a[2](be). be?(1, x^bot). 0", LAT2)
    res = rt.run_standard(rt.initial_config(p), LAT2)
    assert res.status == "clean"
    assert res.trace[0][0].rule == "Link"
    assert res.trace[0][0].fresh is not None
