"""The monitored semantics: guards, monitor updates, erasure, lineages."""

import pytest

from sesmon import monitor as mn
from sesmon import parser as ps
from sesmon import runtime as rt
from sesmon import syntax as sx
from sesmon.lattice import validate_lattice

from conftest import load

LAT2 = validate_lattice({"bot", "top"}, [("bot", "top")])


def mrun(text, lat=LAT2, **kw):
    p = ps.parse_process_text(text, lat)
    return mn.run_monitored(mn.initial_mconfig(p, lat), lat, **kw)


def test_send_below_monitor_is_error():
    # the top input raises the monitor; the later bot output is blocked
    res = mrun("s[1]?(2, x^top). s[1]!<2, true^bot>. 0"
               " | s[2]!<1, true^top>. 0")
    assert res.status == "error"
    assert res.errors[0].monitor == "top"
    assert res.errors[0].level == "bot"


def test_input_below_monitor_is_error():
    res = mrun("s[1]?(2, x^top). s[1]?(2, y^bot). 0"
               " | s[2]!<1, true^top>. s[2]!<1, true^bot>. 0")
    assert res.status == "error"
    assert res.errors[0].monitor == "top"


def test_input_raises_monitor_to_message_level():
    res = mrun("s[1]?(2, x^top). 0 | s[2]!<1, true^top>. 0")
    assert res.status == "clean"
    levels = set(mn.monitor_map(res.final.mprocess).values())
    assert "top" in levels


def test_condition_raises_monitor():
    res = mrun("if true^top then s[1]!<2, true^bot>. 0 else 0"
               " | s[2]?(1, x^bot). 0")
    assert res.status == "error"
    assert res.errors[0].monitor == "top"


def test_split_monitors_are_per_component():
    # the top flow in one component must not taint its sibling
    res = mrun("s[1]?(2, x^top). 0 | s[2]!<1, true^top>. 0"
               " | s[3]!<4, true^bot>. 0 | s[4]?(3, y^bot). 0")
    assert res.status == "clean"


def test_single_monitor_is_coarser():
    prog = load("monitors4")
    c = mn.initial_mconfig(prog.process, prog.lattice)
    split = mn.run_monitored(c, prog.lattice, scheduler="random", seed=0)
    joined = mn.run_monitored(c, prog.lattice, scheduler="random", seed=0,
                              single_monitor=True)
    assert split.status == "clean"
    assert joined.status == "error"


def test_erasure_of_monitored_steps():
    """Each monitored step, demonitored, is a standard step of the
    demonitoring (same rule, same resulting configuration)."""
    prog = load("medical")
    p = ps.bind_choices(prog.process, prog.choices,
                        {"simple": False, "gooduse": True})
    cur = mn.initial_mconfig(p, prog.lattice)
    for _ in range(40):
        res = mn.step_monitored(cur, prog.lattice)
        if not res.successors:
            break
        std, _ = rt.step_standard(mn.demonitor_config(cur), prog.lattice)
        erased = {(l.rule, rt.normalize_config(c2)) for l, c2 in std}
        for label, mc in res.successors:
            rule = label.rule[1:]  # M-prefixed rule names
            assert (rule, mn.demonitor_config(mc)) in erased
        cur = res.successors[0][1]


def test_monitor_lineages_never_decrease():
    prog = load("medical")
    p = ps.bind_choices(prog.process, prog.choices,
                        {"simple": False, "gooduse": True})
    cur = mn.initial_mconfig(p, prog.lattice)
    for _ in range(40):
        res = mn.step_monitored(cur, prog.lattice)
        if not res.successors:
            break
        before = mn.monitor_map(cur.mprocess)
        for _, mc in res.successors:
            after = mn.monitor_map(mc.mprocess)
            for lin, mu2 in after.items():
                for anc in [lin[:i] for i in range(len(lin) + 1)]:
                    if anc in before:
                        assert prog.lattice.leq(before[anc], mu2)
        cur = res.successors[0][1]


def test_demonitoring_is_homomorphic():
    prog = load("example5")
    m = mn.wrap(prog.process, prog.lattice.bottom)
    assert sx.demonitor(m) == prog.process
