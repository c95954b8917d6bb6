"""Process and expression ASTs, substitution, and monitor erasure.

All nodes are frozen dataclasses, so they are hashable and safe to share.
Parallel composition is kept binary in the AST; configuration-level
normalization (see :mod:`sesmon.runtime`) flattens it into a sorted
multiset of components.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
from typing import Optional, Union

from .lattice import Lattice


class EvalError(ValueError):
    """Base class for expression evaluation failures."""


class TypeMismatch(EvalError):
    pass


class UnboundVariable(EvalError):
    pass


# ---------------------------------------------------------------------------
# Expressions

@dataclass(frozen=True)
class Var:
    name: str
    level: str


@dataclass(frozen=True)
class Lit:
    value: Union[bool, int]
    level: str


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


Expr = Union[Var, Lit, Not, And]


@dataclass(frozen=True)
class Value:
    """An evaluated expression: a payload with its security level."""
    payload: Union[bool, int]
    level: str


def eval_expr(e: Expr, env: dict[str, Value], lat: Lattice) -> Value:
    """Evaluate a boolean/integer expression.

    The result level is the join of the level annotations of every variable
    occurrence and literal in the expression, combined with the level of any
    value substituted from ``env``.
    """
    if isinstance(e, Lit):
        return Value(e.value, lat.check(e.level))
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundVariable(f"variable {e.name!r} is not bound")
        v = env[e.name]
        return Value(v.payload, lat.join(e.level, v.level))
    if isinstance(e, Not):
        v = eval_expr(e.arg, env, lat)
        if not isinstance(v.payload, bool):
            raise TypeMismatch("negation applied to a non-boolean")
        return Value(not v.payload, v.level)
    if isinstance(e, And):
        l = eval_expr(e.left, env, lat)
        r = eval_expr(e.right, env, lat)
        if not isinstance(l.payload, bool) or not isinstance(r.payload, bool):
            raise TypeMismatch("conjunction applied to a non-boolean")
        return Value(l.payload and r.payload, lat.join(l.level, r.level))
    raise TypeMismatch(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Channels and identifiers

@dataclass(frozen=True)
class ChanVar:
    name: str


@dataclass(frozen=True)
class ChanRole:
    session: str
    role: int


Chan = Union[ChanVar, ChanRole]


@dataclass(frozen=True)
class ServiceVar:
    name: str


# A service reference is either a concrete name (str) or a ServiceVar.
ServiceRef = Union[str, ServiceVar]


# ---------------------------------------------------------------------------
# Processes

@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Initiator:
    service: ServiceRef
    arity: int


@dataclass(frozen=True)
class Participant:
    service: ServiceRef
    role: int
    chanvar: str
    body: "Process"


@dataclass(frozen=True)
class SendV:
    chan: Chan
    dests: frozenset[int]
    expr: Expr
    cont: "Process"


@dataclass(frozen=True)
class RecvV:
    chan: Chan
    src: int
    var: str
    level: Optional[str]  # None: wildcard binder, consumes any level
    cont: "Process"


@dataclass(frozen=True)
class SendS:
    chan: Chan
    dests: frozenset[int]
    service: ServiceRef
    level: str
    cont: "Process"


@dataclass(frozen=True)
class RecvS:
    chan: Chan
    svar: str
    level: str
    src: int
    cont: "Process"


@dataclass(frozen=True)
class SendC:
    chan: Chan
    dest: int
    target: Chan
    level: str
    cont: "Process"


@dataclass(frozen=True)
class RecvC:
    chan: Chan
    cvar: str
    level: str
    src: int
    cont: "Process"


@dataclass(frozen=True)
class Select:
    chan: Chan
    dests: frozenset[int]
    label: str
    level: str
    cont: "Process"


@dataclass(frozen=True)
class Branch:
    chan: Chan
    level: str
    src: int
    branches: tuple[tuple[str, "Process"], ...]


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Process"
    els: "Process"


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class NewName:
    name: str
    body: "Process"


@dataclass(frozen=True)
class DefDecl:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable, level)
    chanparam: str
    body: "Process"


@dataclass(frozen=True)
class Def:
    decl: DefDecl
    body: "Process"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Expr, ...]
    chan: Chan


Process = Union[Nil, Initiator, Participant, SendV, RecvV, SendS, RecvS,
                SendC, RecvC, Select, Branch, If, Par, NewName, Def, Call]


# ---------------------------------------------------------------------------
# Monitored processes

@dataclass(frozen=True)
class Mon:
    level: str
    proc: Process
    # Lineage tags make monitor monotonicity mechanically checkable; they
    # never affect semantics, equality, or hashing.
    lineage: tuple[int, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class MPar:
    left: "MProc"
    right: "MProc"


@dataclass(frozen=True)
class MNew:
    name: str
    body: "MProc"


@dataclass(frozen=True)
class MDef:
    decl: DefDecl
    body: "MProc"


MProc = Union[Mon, MPar, MNew, MDef]


def demonitor(m: MProc) -> Process:
    """Erase all monitoring levels, homomorphically."""
    if isinstance(m, Mon):
        return m.proc
    if isinstance(m, MPar):
        return Par(demonitor(m.left), demonitor(m.right))
    if isinstance(m, MNew):
        return NewName(m.name, demonitor(m.body))
    if isinstance(m, MDef):
        return Def(m.decl, demonitor(m.body))
    raise TypeError(f"not a monitored process: {m!r}")


# ---------------------------------------------------------------------------
# Serialization key (deterministic total order on ASTs)

_FIELDS_CACHE: dict[type, tuple] = {}


def dc_fields(node) -> tuple:
    t = type(node)
    out = _FIELDS_CACHE.get(t)
    if out is None:
        out = _FIELDS_CACHE[t] = fields(node)
    return out


_SER_MEMO: dict[int, tuple[object, object, str]] = {}


def ser(node) -> object:
    """A nested-tuple encoding used for canonical ordering and dedup.

    Fields with compare=False (lineage tags) are skipped.  Results are
    memoized per object identity (all AST nodes are immutable).
    """
    if node is None:
        return ("n",)
    if isinstance(node, bool):
        return ("b", node)
    if isinstance(node, int):
        return ("i", node)
    if isinstance(node, str):
        return ("s", node)
    hit = _SER_MEMO.get(id(node))
    if hit is not None and hit[0] is node:
        return hit[1]
    if isinstance(node, frozenset):
        out: object = ("fs",) + tuple(sorted(node))
    elif isinstance(node, tuple):
        out = ("t",) + tuple(ser(x) for x in node)
    elif is_dataclass(node):
        out = (type(node).__name__,) + tuple(
            ser(getattr(node, f.name)) for f in dc_fields(node) if f.compare)
    else:
        raise TypeError(f"cannot serialize {node!r}")
    if len(_SER_MEMO) > 2_000_000:
        _SER_MEMO.clear()
    _SER_MEMO[id(node)] = (node, out, "")
    return out


def ser_key(node) -> str:
    hit = _SER_MEMO.get(id(node))
    if hit is not None and hit[0] is node and hit[2]:
        return hit[2]
    out = repr(ser(node))
    hit = _SER_MEMO.get(id(node))
    if hit is not None and hit[0] is node:
        _SER_MEMO[id(node)] = (hit[0], hit[1], out)
    return out


# ---------------------------------------------------------------------------
# Free names

def free_sessions(p) -> set[str]:
    """Session names occurring in a process or monitored process."""
    out: set[str] = set()

    def walk(n):
        if isinstance(n, ChanRole):
            out.add(n.session)
        elif is_dataclass(n):
            for f in fields(n):
                walk(getattr(n, f.name))
        elif isinstance(n, tuple):
            for x in n:
                walk(x)

    walk(p)
    return out


def session_roles(p) -> dict[str, set[int]]:
    """For each session name, the participant numbers mentioned with it."""
    out: dict[str, set[int]] = {}

    def note(s: str, *roles: int):
        out.setdefault(s, set()).update(roles)

    def walk(n):
        if isinstance(n, SendV):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, *n.dests)
        elif isinstance(n, (RecvV, RecvS, RecvC)):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, n.src)
        elif isinstance(n, SendS):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, *n.dests)
        elif isinstance(n, SendC):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, n.dest)
        elif isinstance(n, Select):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, *n.dests)
        elif isinstance(n, Branch):
            if isinstance(n.chan, ChanRole):
                note(n.chan.session, n.chan.role, n.src)
        elif isinstance(n, ChanRole):
            note(n.session, n.role)
        if is_dataclass(n):
            for f in fields(n):
                walk(getattr(n, f.name))
        elif isinstance(n, tuple):
            for x in n:
                walk(x)

    walk(p)
    return out


# ---------------------------------------------------------------------------
# Substitution

class Subst:
    """A simultaneous substitution of values, channels, and service names.

    Values are substituted bare: an occurrence x^l becomes a literal with
    payload v and the occurrence's own annotation l.
    """

    def __init__(self,
                 values: dict[str, Union[bool, int]] | None = None,
                 chans: dict[str, Chan] | None = None,
                 services: dict[str, str] | None = None):
        self.values = dict(values or {})
        self.chans = dict(chans or {})
        self.services = dict(services or {})

    def is_empty(self) -> bool:
        return not (self.values or self.chans or self.services)

    def drop(self, *, value: str | None = None, chan: str | None = None,
             service: str | None = None) -> "Subst":
        s = Subst(self.values, self.chans, self.services)
        if value is not None:
            s.values.pop(value, None)
        if chan is not None:
            s.chans.pop(chan, None)
        if service is not None:
            s.services.pop(service, None)
        return s

    def image_names(self) -> set[str]:
        names = set(self.services.values())
        for c in self.chans.values():
            if isinstance(c, ChanRole):
                names.add(c.session)
            else:
                names.add(c.name)
        return names


def _fresh_name(base: str, avoid: set[str]) -> str:
    i = 1
    while f"{base}_{i}" in avoid:
        i += 1
    return f"{base}_{i}"


def subst_expr(e: Expr, s: Subst) -> Expr:
    if isinstance(e, Var) and e.name in s.values:
        return Lit(s.values[e.name], e.level)
    if isinstance(e, Not):
        return Not(subst_expr(e.arg, s))
    if isinstance(e, And):
        return And(subst_expr(e.left, s), subst_expr(e.right, s))
    return e


def _subst_chan(c: Chan, s: Subst) -> Chan:
    if isinstance(c, ChanVar) and c.name in s.chans:
        return s.chans[c.name]
    return c


def _subst_service(u: ServiceRef, s: Subst) -> ServiceRef:
    if isinstance(u, ServiceVar) and u.name in s.services:
        return s.services[u.name]
    return u


def substitute(p: Process, s: Subst) -> Process:
    """Capture-avoiding simultaneous substitution on a process."""
    if s.is_empty():
        return p
    if isinstance(p, Nil):
        return p
    if isinstance(p, Initiator):
        return Initiator(_subst_service(p.service, s), p.arity)
    if isinstance(p, Participant):
        s2 = s.drop(chan=p.chanvar)
        var = p.chanvar
        body = p.body
        if var in s2.image_names():
            var = _fresh_name(var, s2.image_names() | free_sessions(body))
            body = substitute(body, Subst(chans={p.chanvar: ChanVar(var)}))
        return Participant(_subst_service(p.service, s), p.role, var,
                           substitute(body, s2))
    if isinstance(p, SendV):
        return SendV(_subst_chan(p.chan, s), p.dests, subst_expr(p.expr, s),
                     substitute(p.cont, s))
    if isinstance(p, RecvV):
        s2 = s.drop(value=p.var)
        return RecvV(_subst_chan(p.chan, s), p.src, p.var, p.level,
                     substitute(p.cont, s2))
    if isinstance(p, SendS):
        return SendS(_subst_chan(p.chan, s), p.dests,
                     _subst_service(p.service, s), p.level,
                     substitute(p.cont, s))
    if isinstance(p, RecvS):
        s2 = s.drop(service=p.svar)
        return RecvS(_subst_chan(p.chan, s), p.svar, p.level, p.src,
                     substitute(p.cont, s2))
    if isinstance(p, SendC):
        return SendC(_subst_chan(p.chan, s), p.dest,
                     _subst_chan(p.target, s), p.level, substitute(p.cont, s))
    if isinstance(p, RecvC):
        s2 = s.drop(chan=p.cvar)
        var = p.cvar
        body = p.cont
        if var in s2.image_names():
            var = _fresh_name(var, s2.image_names() | free_sessions(body))
            body = substitute(body, Subst(chans={p.cvar: ChanVar(var)}))
        return RecvC(_subst_chan(p.chan, s), var, p.level, p.src,
                     substitute(body, s2))
    if isinstance(p, Select):
        return Select(_subst_chan(p.chan, s), p.dests, p.label, p.level,
                      substitute(p.cont, s))
    if isinstance(p, Branch):
        return Branch(_subst_chan(p.chan, s), p.level, p.src,
                      tuple((lbl, substitute(q, s)) for lbl, q in p.branches))
    if isinstance(p, If):
        return If(subst_expr(p.cond, s), substitute(p.then, s),
                  substitute(p.els, s))
    if isinstance(p, Par):
        return Par(substitute(p.left, s), substitute(p.right, s))
    if isinstance(p, NewName):
        s2 = s.drop(service=p.name)
        name = p.name
        body = p.body
        if name in s2.image_names():
            name = _fresh_name(name, s2.image_names() | free_sessions(body))
            body = substitute(body, Subst(services={p.name: name}))
        return NewName(name, substitute(body, s2))
    if isinstance(p, Def):
        d = p.decl
        s2 = s
        for v, _ in d.params:
            s2 = s2.drop(value=v)
        s2 = s2.drop(chan=d.chanparam)
        return Def(DefDecl(d.name, d.params, d.chanparam,
                           substitute(d.body, s2)),
                   substitute(p.body, s))
    if isinstance(p, Call):
        return Call(p.name, tuple(subst_expr(a, s) for a in p.args),
                    _subst_chan(p.chan, s))
    raise TypeError(f"not a process: {p!r}")
