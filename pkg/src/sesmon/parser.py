"""Parser for the program file format.

A program file is a ``lattice { ... }`` header, an optional ``choices``
block declaring free boolean test inputs, and a top-level process term.
Comments run from ``//`` to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import syntax as sx
from .lattice import Lattice, UnknownLevel, validate_lattice


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class ArityMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Tok:
    kind: str  # 'ident' | 'int' | 'sym'
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym><<|>>|<=|oplus|[{}()\[\]<>,;:.!?|^&=])
""", re.VERBOSE)

KEYWORDS = {"lattice", "elements", "order", "choices", "def", "in", "if",
            "then", "else", "new", "bar", "oplus", "and", "not",
            "true", "false"}


def tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        chunk = m.group(0)
        if m.lastgroup != "ws":
            kind = m.lastgroup
            if kind == "ident" and chunk in KEYWORDS:
                kind = "sym"
            toks.append(Tok(kind, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


@dataclass
class Program:
    lattice: Lattice
    choices: dict[str, str]  # choice variable -> level
    process: sx.Process
    diagnostics: list[str] = field(default_factory=list)


class _Parser:
    def __init__(self, toks: list[Tok], lattice: Lattice | None = None):
        self.toks = toks
        self.i = 0
        self.lattice = lattice

    # -- token plumbing ------------------------------------------------
    def peek(self, ahead: int = 0) -> Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg + (f" (got {t.text!r})" if t.text else " (at end of input)"),
                          t.line, t.col)

    def expect(self, text: str) -> Tok:
        t = self.next()
        if t.text != text:
            self.i -= 1
            raise self.fail(f"expected {text!r}")
        return t

    def accept(self, text: str) -> bool:
        if self.peek().text == text:
            self.i += 1
            return True
        return False

    def ident(self, what: str = "identifier") -> str:
        t = self.next()
        if t.kind != "ident":
            self.i -= 1
            raise self.fail(f"expected {what}")
        return t.text

    def integer(self) -> int:
        t = self.next()
        if t.kind != "int":
            self.i -= 1
            raise self.fail("expected an integer")
        return int(t.text)

    def level(self) -> str:
        self.expect("^")
        name = self.ident("security level")
        if self.lattice is not None and name not in self.lattice.elements:
            raise UnknownLevel(f"unknown security level {name!r}")
        return name

    # -- header --------------------------------------------------------
    def lattice_block(self) -> Lattice:
        self.expect("lattice")
        self.expect("{")
        self.expect("elements")
        self.expect(":")
        elems = [self.ident("lattice element")]
        while self.accept(","):
            elems.append(self.ident("lattice element"))
        self.expect(";")
        pairs: list[tuple[str, str]] = []
        self.expect("order")
        self.expect(":")
        if self.peek().kind == "ident":
            while True:
                a = self.ident("lattice element")
                self.expect("<=")
                b = self.ident("lattice element")
                pairs.append((a, b))
                if not self.accept(","):
                    break
        self.accept(";")
        self.expect("}")
        return validate_lattice(elems, pairs)

    def choices_block(self) -> dict[str, str]:
        out: dict[str, str] = {}
        if not self.accept("choices"):
            return out
        self.expect("{")
        while True:
            name = self.ident("choice variable")
            out[name] = self.level()
            if not self.accept(","):
                break
        self.expect("}")
        return out

    # -- expressions ---------------------------------------------------
    def expr(self) -> sx.Expr:
        e = self.expr_unary()
        while self.accept("and"):
            e = sx.And(e, self.expr_unary())
        return e

    def expr_unary(self) -> sx.Expr:
        if self.accept("not"):
            return sx.Not(self.expr_unary())
        return self.expr_atom()

    def expr_atom(self) -> sx.Expr:
        t = self.peek()
        if t.text == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.text in ("true", "false"):
            self.next()
            return sx.Lit(t.text == "true", self.level())
        if t.kind == "int":
            self.next()
            return sx.Lit(int(t.text), self.level())
        if t.kind == "ident":
            self.next()
            return sx.Var(t.text, self.level())
        raise self.fail("expected an expression")

    # -- processes -----------------------------------------------------
    def process(self) -> sx.Process:
        p = self.prefixed()
        while self.accept("|"):
            p = sx.Par(p, self.prefixed())
        return p

    def dests(self) -> frozenset[int]:
        if self.accept("{"):
            out = {self.integer()}
            while self.accept(","):
                out.add(self.integer())
            self.expect("}")
            return frozenset(out)
        return frozenset({self.integer()})

    def chan_after_ident(self, name: str) -> sx.Chan:
        if self.accept("["):
            role = self.integer()
            self.expect("]")
            return sx.ChanRole(name, role)
        return sx.ChanVar(name)

    def prefixed(self) -> sx.Process:
        t = self.peek()
        if t.text == "0" and t.kind == "int":
            self.next()
            return sx.Nil()
        if t.text == "(":
            self.next()
            p = self.process()
            self.expect(")")
            return p
        if self.accept("bar"):
            name = self.ident("service name")
            self.expect("[")
            arity = self.integer()
            self.expect("]")
            return sx.Initiator(name, arity)
        if self.accept("new"):
            name = self.ident("service name")
            self.expect(".")
            return sx.NewName(name, self.prefixed())
        if self.accept("if"):
            cond = self.expr()
            self.expect("then")
            then = self.prefixed()
            self.expect("else")
            els = self.prefixed()
            return sx.If(cond, then, els)
        if self.accept("def"):
            dname = self.ident("process variable")
            self.expect("(")
            params: list[tuple[str, str]] = []
            chanparam = None
            while True:
                pname = self.ident("parameter")
                if self.peek().text == "^":
                    params.append((pname, self.level()))
                else:
                    chanparam = pname
                    break
                if not self.accept(","):
                    break
            if chanparam is None:
                raise self.fail("a def needs a final channel parameter")
            self.expect(")")
            self.expect("=")
            body = self.prefixed()
            self.expect("in")
            cont = self.prefixed()
            return sx.Def(sx.DefDecl(dname, tuple(params), chanparam, body),
                          cont)

        if t.kind != "ident":
            raise self.fail("expected a process")
        name = self.ident()
        # participant prefix: a[p](alpha).P
        if (self.peek().text == "[" and self.peek(2).text == "]"
                and self.peek(3).text == "("):
            self.expect("[")
            role = self.integer()
            self.expect("]")
            self.expect("(")
            cv = self.ident("channel variable")
            self.expect(")")
            self.expect(".")
            return sx.Participant(name, role, cv, self.prefixed())
        # process call: X(e1, ..., c)
        if self.peek().text == "(":
            return self.call(name)
        chan = self.chan_after_ident(name)
        return self.channel_prefix(chan)

    def call(self, name: str) -> sx.Process:
        self.expect("(")
        args: list[sx.Expr] = []
        chan: sx.Chan | None = None
        while True:
            t = self.peek()
            if (t.kind == "ident" and t.text not in ("true", "false", "not")
                    and self.peek(1).text != "^"):
                chan = self.chan_after_ident(self.ident())
            else:
                args.append(self.expr())
            if not self.accept(","):
                break
            if chan is not None:
                raise self.fail("the channel must be the last call argument")
        if chan is None:
            raise self.fail("a process call needs a final channel argument")
        self.expect(")")
        return sx.Call(name, tuple(args), chan)

    def channel_prefix(self, chan: sx.Chan) -> sx.Process:
        if self.accept("!"):
            if self.accept("<<"):
                d = self.dests()
                self.expect(",")
                svc = self.ident("service name")
                lvl = self.level()
                self.expect(">>")
                self.expect(".")
                return sx.SendS(chan, d, svc, lvl, self.prefixed())
            if self.accept("<"):
                d = self.dests()
                self.expect(",")
                e = self.expr()
                self.expect(">")
                self.expect(".")
                return sx.SendV(chan, d, e, self.prefixed())
            if self.accept("("):
                self.expect("(")
                self.expect("(")
                q = self.integer()
                self.expect(",")
                target = self.chan_after_ident(self.ident("channel"))
                lvl = self.level()
                self.expect(")")
                self.expect(")")
                self.expect(")")
                self.expect(".")
                return sx.SendC(chan, q, target, lvl, self.prefixed())
            raise self.fail("expected <, << or ((( after !")
        if self.accept("?"):
            self.expect("(")
            if self.accept("("):
                if self.accept("("):  # channel receive
                    cv = self.ident("channel variable")
                    lvl = self.level()
                    self.expect(",")
                    src = self.integer()
                    self.expect(")")
                    self.expect(")")
                    self.expect(")")
                    self.expect(".")
                    return sx.RecvC(chan, cv, lvl, src, self.prefixed())
                sv = self.ident("service variable")
                lvl = self.level()
                self.expect(",")
                src = self.integer()
                self.expect(")")
                self.expect(")")
                self.expect(".")
                return sx.RecvS(chan, sv, lvl, src, self.prefixed())
            src = self.integer()
            self.expect(",")
            var = self.ident("value variable")
            # An unannotated binder is a wildcard: it consumes a message
            # of any level and takes the level of what it received.
            lvl = self.level() if self.peek().text == "^" else None
            self.expect(")")
            self.expect(".")
            return sx.RecvV(chan, src, var, lvl, self.prefixed())
        if self.accept("oplus"):
            lvl = self.level()
            self.expect("<")
            d = self.dests()
            self.expect(",")
            label = self.ident("label")
            self.expect(">")
            self.expect(".")
            return sx.Select(chan, d, label, lvl, self.prefixed())
        if self.accept("&"):
            lvl = self.level()
            self.expect("(")
            src = self.integer()
            self.expect(",")
            self.expect("{")
            arms: list[tuple[str, sx.Process]] = []
            seen: set[str] = set()
            while True:
                label = self.ident("label")
                if label in seen:
                    raise self.fail(f"duplicate branch label {label!r}")
                seen.add(label)
                self.expect(":")
                arms.append((label, self.prefixed()))
                if not self.accept(","):
                    break
            self.expect("}")
            self.expect(")")
            return sx.Branch(chan, lvl, src, tuple(arms))
        raise self.fail("expected a communication prefix (!, ?, oplus, &)")


# ---------------------------------------------------------------------------
# Scope and well-formedness validation

def _validate(p: sx.Process, choices: dict[str, str],
              diagnostics: list[str]) -> None:
    arities: dict[str, int] = {}

    def note_arity(service: sx.ServiceRef, n: int):
        if isinstance(service, str):
            if arities.setdefault(service, n) != n:
                raise ArityMismatch(
                    f"service {service!r} used with arities "
                    f"{arities[service]} and {n}")

    def expr_vars(e: sx.Expr, out: set[str]):
        if isinstance(e, sx.Var):
            out.add(e.name)
        elif isinstance(e, sx.Not):
            expr_vars(e.arg, out)
        elif isinstance(e, sx.And):
            expr_vars(e.left, out)
            expr_vars(e.right, out)

    def walk(q: sx.Process, vals: set[str], chans: set[str], srvs: set[str],
             procs: dict[str, tuple[int]]):
        if isinstance(q, sx.Nil):
            return
        if isinstance(q, sx.Initiator):
            note_arity(q.service, q.arity)
            if isinstance(q.service, sx.ServiceVar) and q.service.name not in srvs:
                raise sx.UnboundVariable(f"service variable {q.service.name!r}")
            return
        if isinstance(q, sx.Participant):
            if isinstance(q.service, str) and q.role < 1:
                raise ArityMismatch(f"participant role must be >= 1, got {q.role}")
            walk(q.body, vals, chans | {q.chanvar}, srvs, procs)
            return
        if isinstance(q, sx.SendV):
            used: set[str] = set()
            expr_vars(q.expr, used)
            for v in used - vals - set(choices):
                raise sx.UnboundVariable(f"value variable {v!r}")
            _check_chan(q.chan, chans)
            walk(q.cont, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.RecvV):
            _check_chan(q.chan, chans)
            walk(q.cont, vals | {q.var}, chans, srvs, procs)
            return
        if isinstance(q, sx.SendS):
            _check_chan(q.chan, chans)
            if isinstance(q.service, sx.ServiceVar) and q.service.name not in srvs:
                raise sx.UnboundVariable(f"service variable {q.service.name!r}")
            walk(q.cont, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.RecvS):
            _check_chan(q.chan, chans)
            walk(q.cont, vals, chans, srvs | {q.svar}, procs)
            return
        if isinstance(q, sx.SendC):
            _check_chan(q.chan, chans)
            _check_chan(q.target, chans)
            walk(q.cont, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.RecvC):
            _check_chan(q.chan, chans)
            walk(q.cont, vals, chans | {q.cvar}, srvs, procs)
            return
        if isinstance(q, sx.Select):
            _check_chan(q.chan, chans)
            walk(q.cont, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.Branch):
            _check_chan(q.chan, chans)
            for _, arm in q.branches:
                walk(arm, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.If):
            used = set()
            expr_vars(q.cond, used)
            for v in used - vals - set(choices):
                raise sx.UnboundVariable(f"value variable {v!r}")
            walk(q.then, vals, chans, srvs, procs)
            walk(q.els, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.Par):
            walk(q.left, vals, chans, srvs, procs)
            walk(q.right, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.NewName):
            walk(q.body, vals, chans, srvs, procs)
            return
        if isinstance(q, sx.Def):
            d = q.decl
            procs2 = dict(procs)
            procs2[d.name] = (len(d.params),)
            walk(d.body, vals | {v for v, _ in d.params},
                 chans | {d.chanparam}, srvs, procs2)
            walk(q.body, vals, chans, srvs, procs2)
            return
        if isinstance(q, sx.Call):
            if q.name not in procs:
                raise sx.UnboundVariable(f"process variable {q.name!r}")
            if procs[q.name][0] != len(q.args):
                raise ArityMismatch(
                    f"call to {q.name!r} with {len(q.args)} value arguments,"
                    f" declared with {procs[q.name][0]}")
            for a in q.args:
                used = set()
                expr_vars(a, used)
                for v in used - vals - set(choices):
                    raise sx.UnboundVariable(f"value variable {v!r}")
            _check_chan(q.chan, chans)
            return
        raise TypeError(f"not a process: {q!r}")

    def _check_chan(c: sx.Chan, chans: set[str]):
        if isinstance(c, sx.ChanVar) and c.name not in chans:
            raise sx.UnboundVariable(f"channel variable {c.name!r}")

    walk(p, set(), set(), set(), {})


def _check_levels(p: sx.Process, lat: Lattice) -> None:
    from dataclasses import fields, is_dataclass

    def walk(n):
        if is_dataclass(n):
            for f in fields(n):
                v = getattr(n, f.name)
                if f.name == "level":
                    if v is not None:  # wildcard binders carry no level
                        lat.check(v)
                else:
                    walk(v)
        elif isinstance(n, tuple):
            for x in n:
                walk(x)

    walk(p)


def parse_program(text: str) -> Program:
    """Parse a full program file: lattice header, choices, process."""
    toks = tokenize(text)
    pp = _Parser(toks)
    lat = pp.lattice_block()
    pp.lattice = lat
    choices = pp.choices_block()
    for name, lvl in choices.items():
        lat.check(lvl)
    proc = pp.process()
    t = pp.peek()
    if t.kind != "eof":
        raise pp.fail("trailing input after the top-level process")
    diagnostics: list[str] = []
    _check_levels(proc, lat)
    _validate(proc, choices, diagnostics)
    return Program(lat, choices, proc, diagnostics)


def parse_process_text(text: str, lat: Lattice) -> sx.Process:
    """Parse a bare process term against an existing lattice."""
    toks = tokenize(text)
    pp = _Parser(toks, lattice=lat)
    proc = pp.process()
    if pp.peek().kind != "eof":
        raise pp.fail("trailing input after the process")
    _check_levels(proc, lat)
    return proc


def bind_choices(p: sx.Process, choices: dict[str, str],
                 bindings: dict[str, bool]) -> sx.Process:
    """Substitute declared free choice variables with boolean literals."""
    unknown = set(bindings) - set(choices)
    if unknown:
        raise sx.UnboundVariable(
            f"--choice names not declared by the program: {sorted(unknown)}")
    sub = sx.Subst(values={k: v for k, v in bindings.items()})
    return sx.substitute(p, sub)
