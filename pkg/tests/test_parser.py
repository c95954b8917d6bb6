"""Concrete syntax: corpus parsing, print/parse round trips, error cases."""

import random

import pytest

from sesmon import analysis as an
from sesmon import parser as ps
from sesmon import syntax as sx
from sesmon.lattice import validate_lattice
from sesmon.printer import print_process

from conftest import CORPUS, load

LAT2 = validate_lattice({"bot", "top"}, [("bot", "top")])


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_parses_and_round_trips(name):
    prog = load(name)
    text = print_process(prog.process)
    again = ps.parse_process_text(text, prog.lattice)
    assert again == prog.process


def test_random_processes_round_trip():
    rng = random.Random(77)
    for _ in range(200):
        p = an.random_process(rng, LAT2)
        assert ps.parse_process_text(print_process(p), LAT2) == p


@pytest.mark.parametrize("text", [
    "s[1]!<2, true^bot>. 0",
    "s[1]?(2, x^top). 0",
    "s[1]?(2, x). 0",  # wildcard binder: no level annotation
    "s[1]!<{2, 3}, 1^bot>. 0 | s[2]?(1, y^bot). 0 | s[3]?(1, z^bot). 0",
    "s[1] oplus^bot <2, go>. 0 | s[2] &^bot (1, { go: 0, stop: 0 })",
    "bar a[2] | a[1](al). al!<2, true^bot>. 0 | a[2](be). be?(1, x^bot). 0",
    "s[1]!<<2, a^bot>>. 0 | s[2]?((zeta^bot, 1)). bar zeta[1]",
    "s[1]!(((2, t[1]^bot))). 0 | s[2]?(((eta^bot, 1))). eta!<2, true^bot>. 0",
    "def X(v^bot, c) = c!<2, v^bot>. 0 in X(true^bot, s[1])",
    "new a. (bar a[1] | a[1](al). 0)",
    "if true^bot and (not false^top) then 0 else 0",
])
def test_handwritten_round_trips(text):
    p = ps.parse_process_text(text, LAT2)
    assert ps.parse_process_text(print_process(p), LAT2) == p


def test_wildcard_binder_has_no_level():
    p = ps.parse_process_text("s[1]?(2, x). 0", LAT2)
    assert isinstance(p, sx.RecvV) and p.level is None
    assert print_process(p) == "s[1]?(2, x). 0"


def test_unknown_level_rejected():
    with pytest.raises(ps.UnknownLevel):
        ps.parse_process_text("s[1]!<2, true^secret>. 0", LAT2)


def test_trailing_input_rejected():
    with pytest.raises(ps.ParseError):
        ps.parse_program("lattice { elements: bot, top; order: bot <= top; }"
                         "\n0 0")


HEADER = "lattice { elements: bot, top; order: bot <= top; }\n"


def test_unbound_names_rejected():
    # full programs must be closed; bare process texts may be mid-run
    # states with free binders, so only parse_program validates binding
    with pytest.raises(sx.UnboundVariable):
        ps.parse_program(HEADER + "s[1]!<2, x^bot>. 0")
    with pytest.raises(sx.UnboundVariable):
        ps.parse_program(HEADER + "c!<2, true^bot>. 0")
    assert ps.parse_process_text("s[1]!<2, x^bot>. 0", LAT2) is not None


def test_choices_block():
    prog = load("medical")
    assert set(prog.choices) == {"simple", "gooduse"}
    bound = ps.bind_choices(prog.process, prog.choices,
                            {"simple": True, "gooduse": True})
    assert "simple" not in print_process(bound)
