"""Standard small-step semantics over configurations with message queues.

A configuration is a set of restricted names, a process (a parallel
composition of components), and a Q-set: one FIFO queue per live session.
Queues are kept in a canonical split form where every message has a single
receiver; messages between the same (sender, receiver) pair keep their
relative order, which is exactly the order observable through reads.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Callable, Optional, Union

from . import syntax as sx
from .lattice import Lattice


class UnknownSession(ValueError):
    """A queue operation named a session with no queue."""


class NameClash(ValueError):
    """Two configurations to be merged share a free session name."""


# ---------------------------------------------------------------------------
# Messages and queues

@dataclass(frozen=True)
class ValueMsg:
    payload: Union[bool, int]
    level: str


@dataclass(frozen=True)
class ServiceMsg:
    service: str
    level: str


@dataclass(frozen=True)
class ChannelMsg:
    target: sx.ChanRole
    level: str


@dataclass(frozen=True)
class LabelMsg:
    label: str
    level: str


MsgContent = Union[ValueMsg, ServiceMsg, ChannelMsg, LabelMsg]


@dataclass(frozen=True)
class Message:
    sender: int
    receivers: frozenset[int]
    content: MsgContent


Queue = tuple[Message, ...]
QSet = tuple[tuple[str, Queue], ...]


def canon_queue(q: Queue) -> Queue:
    """Split multi-receiver messages and group by (sender, receiver) pair.

    Order within each pair is preserved; that is the only order a reader
    can observe, so this is a normal form up to message commutation and
    splitting.
    """
    singles = [Message(m.sender, frozenset({r}), m.content)
               for m in q for r in sorted(m.receivers)]
    pairs = sorted({(m.sender, min(m.receivers)) for m in singles})
    out: list[Message] = []
    for s, r in pairs:
        out.extend(m for m in singles
                   if m.sender == s and r in m.receivers)
    return tuple(out)


def canon_qset(h: QSet) -> QSet:
    return tuple(sorted((s, canon_queue(q)) for s, q in h))


def qset_get(h: QSet, session: str) -> Optional[Queue]:
    for s, q in h:
        if s == session:
            return q
    return None


def qset_set(h: QSet, session: str, q: Queue) -> QSet:
    rest = tuple((s, qq) for s, qq in h if s != session)
    return tuple(sorted(rest + ((session, q),)))


def push_message(h: QSet, session: str, msg: Message) -> QSet:
    q = qset_get(h, session)
    if q is None:
        raise UnknownSession(f"no queue for session {session!r}")
    return qset_set(h, session, canon_queue(q + (msg,)))


def pop_message(h: QSet, session: str, reader: int, sender: int):
    """Return (content, new qset) for the earliest sender->reader message.

    Returns (None, None) when no such message is queued.  Kind and level
    checks are the caller's business: FIFO order per pair decides *which*
    message is up next, not whether it is acceptable.
    """
    q = qset_get(h, session)
    if q is None:
        return None, None
    for i, m in enumerate(q):
        if m.sender == sender and reader in m.receivers:
            rest = m.receivers - {reader}
            if rest:
                q2 = q[:i] + (Message(m.sender, rest, m.content),) + q[i + 1:]
            else:
                q2 = q[:i] + q[i + 1:]
            return m.content, qset_set(h, session, canon_queue(q2))
    return None, None


def is_monotone(h: QSet, lat: Lattice) -> bool:
    """Levels never decrease between same-sender messages whose receiver
    sets overlap."""
    for _, q in h:
        for i in range(len(q)):
            for j in range(i + 1, len(q)):
                if (q[i].sender == q[j].sender
                        and q[i].receivers & q[j].receivers
                        and not lat.leq(q[i].content.level,
                                        q[j].content.level)):
                    return False
    return True


def is_saturated(h: QSet, p) -> bool:
    """Every session occurring in the process has a queue."""
    have = {s for s, _ in h}
    return sx.free_sessions(p) <= have


# ---------------------------------------------------------------------------
# Configurations

@dataclass(frozen=True)
class Config:
    restricted: tuple[str, ...]
    process: sx.Process
    qset: QSet


def components(p: sx.Process) -> list[sx.Process]:
    """Flatten parallel composition, dropping inert 0 components."""
    if isinstance(p, sx.Par):
        return components(p.left) + components(p.right)
    if isinstance(p, sx.Nil):
        return []
    return [p]


def rebuild(comps: list[sx.Process]) -> sx.Process:
    if not comps:
        return sx.Nil()
    out = comps[-1]
    for c in reversed(comps[:-1]):
        out = sx.Par(c, out)
    return out


_fresh_counter = itertools.count()


def fresh_raw_name(hint: str = "s") -> str:
    """A raw name guaranteed distinct from anything parseable."""
    return f"#{hint}{next(_fresh_counter)}"


def rename_names(node, m: dict[str, str]):
    """Rename session/service names throughout a term, qset, or message.

    Only name positions are touched; labels, variables, and levels are not.
    The mapping's domain is assumed globally unique (no binders to respect).
    """
    if not m or all(k == v for k, v in m.items()):
        return node
    if isinstance(node, sx.ChanRole):
        return sx.ChanRole(m.get(node.session, node.session), node.role)
    if isinstance(node, sx.Initiator):
        svc = node.service
        if isinstance(svc, str):
            svc = m.get(svc, svc)
        return sx.Initiator(svc, node.arity)
    if isinstance(node, sx.Participant):
        svc = node.service
        if isinstance(svc, str):
            svc = m.get(svc, svc)
        return sx.Participant(svc, node.role, node.chanvar,
                              rename_names(node.body, m))
    if isinstance(node, sx.SendS):
        svc = node.service
        if isinstance(svc, str):
            svc = m.get(svc, svc)
        return sx.SendS(rename_names(node.chan, m), node.dests, svc,
                        node.level, rename_names(node.cont, m))
    if isinstance(node, sx.NewName):
        return sx.NewName(m.get(node.name, node.name),
                          rename_names(node.body, m))
    if isinstance(node, sx.MNew):
        return sx.MNew(m.get(node.name, node.name),
                       rename_names(node.body, m))
    if isinstance(node, ServiceMsg):
        return ServiceMsg(m.get(node.service, node.service), node.level)
    if isinstance(node, ChannelMsg):
        return ChannelMsg(rename_names(node.target, m), node.level)
    if is_dataclass(node):
        kwargs = {f.name: rename_names(getattr(node, f.name), m)
                  for f in sx.dc_fields(node)}
        return type(node)(**kwargs)
    if isinstance(node, tuple):
        if (len(node) == 2 and isinstance(node[0], str)
                and isinstance(node[1], tuple)):
            # a qset entry (session, queue)
            return (m.get(node[0], node[0]), rename_names(node[1], m))
        return tuple(rename_names(x, m) for x in node)
    return node


def occurring_names(process, h: QSet) -> set[str]:
    """Session and service names occurring in a process or qset."""
    out: set[str] = set()

    def walk(n):
        if isinstance(n, sx.ChanRole):
            out.add(n.session)
        elif isinstance(n, (sx.Initiator, sx.Participant, sx.SendS)):
            if isinstance(n.service, str):
                out.add(n.service)
        elif isinstance(n, (sx.NewName, sx.MNew)):
            out.add(n.name)
        elif isinstance(n, ServiceMsg):
            out.add(n.service)
        if is_dataclass(n):
            for f in fields(n):
                walk(getattr(n, f.name))
        elif isinstance(n, tuple):
            for x in n:
                walk(x)

    walk(process)
    for s, q in h:
        out.add(s)
        walk(q)
    return out


def _names_in_order(node, wanted: set[str], out: list[str]):
    """Collect names from `wanted` in first-occurrence (depth-first) order."""
    if isinstance(node, str):
        if node in wanted and node not in out:
            out.append(node)
        return
    if isinstance(node, sx.ChanRole):
        _names_in_order(node.session, wanted, out)
        return
    if is_dataclass(node):
        for f in fields(node):
            _names_in_order(getattr(node, f.name), wanted, out)
    elif isinstance(node, (tuple, frozenset)):
        for x in (node if isinstance(node, tuple) else sorted(node, key=repr)):
            _names_in_order(x, wanted, out)


def _gather(p: sx.Process, restricted: list[str]) -> list[sx.Process]:
    """Flatten one scope level, extruding name restrictions outward.

    Restricted names are pre-renamed to globally unique raw names so the
    extrusion can never capture.  Process definitions keep their own scope:
    their bodies are normalized recursively in place.
    """
    if isinstance(p, sx.Par):
        return _gather(p.left, restricted) + _gather(p.right, restricted)
    if isinstance(p, sx.Nil):
        return []
    if isinstance(p, sx.NewName):
        raw = fresh_raw_name("n")
        restricted.append(raw)
        return _gather(rename_names(p.body, {p.name: raw}), restricted)
    if isinstance(p, sx.Def):
        inner = _gather(p.body, restricted)
        if not inner:
            return []
        return [sx.Def(p.decl, rebuild(inner))]
    return [p]


def normalize_with_map(c: Config) -> tuple[Config, dict[str, str]]:
    """Canonical form of a configuration, plus the restricted-name mapping.

    Parallel components are flattened and sorted; restricted names are
    renamed positionally to _r0, _r1, ...; queues are put in split form.
    """
    restricted = list(c.restricted)
    comps = _gather(c.process, restricted)
    h = canon_qset(c.qset)
    rset = set(restricted)
    # drop restrictions on names that no longer occur anywhere
    occ = occurring_names(rebuild(comps), h)
    rset &= occ

    # blind sort: order components with restricted names masked out
    mask = {r: "\x00" for r in rset}
    comps.sort(key=lambda q: sx.ser_key(rename_names(q, mask)))

    order: list[str] = []
    for q in comps:
        _names_in_order(q, rset, order)
    for s, qq in h:
        _names_in_order(s, rset, order)
        _names_in_order(qq, rset, order)

    free = occ - rset
    ren: dict[str, str] = {}
    i = 0
    for old in order:
        while f"_r{i}" in free:
            i += 1
        ren[old] = f"_r{i}"
        i += 1

    comps = [rename_names(q, ren) for q in comps]
    h = tuple(sorted(rename_names(e, ren) for e in h))
    comps.sort(key=sx.ser_key)
    return (Config(tuple(sorted(ren.values())), rebuild(comps), h), ren)


def normalize_config(c: Config) -> Config:
    return normalize_with_map(c)[0]


def initial_config(p: sx.Process) -> Config:
    """Wrap a process with empty queues for each of its free sessions."""
    h = tuple(sorted((s, ()) for s in sx.free_sessions(p)))
    return normalize_config(Config((), p, h))


def merge_configs(a: Config, b: Config) -> Config:
    """Put two configurations side by side; their free sessions must agree
    on queues or not clash."""
    clash = (set(dict(a.qset)) & set(dict(b.qset))
             | set(a.restricted) & set(b.restricted))
    shared = {s for s in clash if qset_get(a.qset, s) != qset_get(b.qset, s)}
    if shared:
        raise NameClash(f"sessions {sorted(shared)} held by both sides")
    h = tuple(sorted(dict(list(a.qset) + list(b.qset)).items()))
    return normalize_config(Config(
        tuple(a.restricted) + tuple(b.restricted),
        sx.Par(a.process, b.process), h))


# ---------------------------------------------------------------------------
# Stepping

@dataclass(frozen=True)
class StepLabel:
    rule: str
    subject: str
    fresh: Optional[str] = None


def _chan_str(c: sx.Chan) -> str:
    from .printer import print_chan
    return print_chan(c)


def _step_component(comp: sx.Process, defs: dict[str, sx.DefDecl],
                    h: QSet, lat: Lattice, diags: list[str]):
    """Reductions available to one non-Link component.

    Yields (rule, subject, new component, new qset, fresh names, level)
    where level is the security level of the communicated content or of
    the evaluated guard (None when the rule moves no levelled data).
    """
    out = []
    if isinstance(comp, sx.SendV):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            if qset_get(h, s) is not None:
                try:
                    v = sx.eval_expr(comp.expr, {}, lat)
                except sx.EvalError as e:
                    diags.append(f"cannot send on {s}[{p}]: {e}")
                    return out
                h2 = push_message(h, s, Message(
                    p, comp.dests, ValueMsg(v.payload, v.level)))
                subj = f"{s}[{p}] sends {v.payload}^{v.level}"
                out.append(("SendV", subj, comp.cont, h2, [], v.level))
        return out
    if isinstance(comp, sx.RecvV):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            content, h2 = pop_message(h, s, p, comp.src)
            if content is None:
                return out
            if not isinstance(content, ValueMsg):
                diags.append(f"{s}[{p}] expects a value from {comp.src},"
                             f" queue holds {type(content).__name__}")
                return out
            if comp.level is not None and content.level != comp.level:
                diags.append(
                    f"level mismatch at {s}[{p}]: binder {comp.var}"
                    f"^{comp.level} vs message at {content.level}")
                return out
            cont = sx.substitute(comp.cont,
                                 sx.Subst(values={comp.var: content.payload}))
            subj = f"{s}[{p}] receives {content.payload}^{content.level}"
            out.append(("RecvV", subj, cont, h2, [], content.level))
        return out
    if isinstance(comp, sx.SendS):
        if isinstance(comp.chan, sx.ChanRole) and isinstance(comp.service, str):
            s, p = comp.chan.session, comp.chan.role
            if qset_get(h, s) is not None:
                h2 = push_message(h, s, Message(
                    p, comp.dests, ServiceMsg(comp.service, comp.level)))
                subj = f"{s}[{p}] sends service {comp.service}^{comp.level}"
                out.append(("SendS", subj, comp.cont, h2, [], comp.level))
        return out
    if isinstance(comp, sx.RecvS):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            content, h2 = pop_message(h, s, p, comp.src)
            if content is None:
                return out
            if not isinstance(content, ServiceMsg):
                diags.append(f"{s}[{p}] expects a service from {comp.src},"
                             f" queue holds {type(content).__name__}")
                return out
            if content.level != comp.level:
                diags.append(
                    f"level mismatch at {s}[{p}]: binder {comp.svar}"
                    f"^{comp.level} vs service at {content.level}")
                return out
            cont = sx.substitute(
                comp.cont, sx.Subst(services={comp.svar: content.service}))
            subj = f"{s}[{p}] receives service {content.service}"
            out.append(("RecvS", subj, cont, h2, [], content.level))
        return out
    if isinstance(comp, sx.SendC):
        if (isinstance(comp.chan, sx.ChanRole)
                and isinstance(comp.target, sx.ChanRole)):
            s, p = comp.chan.session, comp.chan.role
            if qset_get(h, s) is not None:
                h2 = push_message(h, s, Message(
                    p, frozenset({comp.dest}),
                    ChannelMsg(comp.target, comp.level)))
                subj = (f"{s}[{p}] delegates {_chan_str(comp.target)}"
                        f"^{comp.level}")
                out.append(("SendC", subj, comp.cont, h2, [], comp.level))
        return out
    if isinstance(comp, sx.RecvC):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            content, h2 = pop_message(h, s, p, comp.src)
            if content is None:
                return out
            if not isinstance(content, ChannelMsg):
                diags.append(f"{s}[{p}] expects a channel from {comp.src},"
                             f" queue holds {type(content).__name__}")
                return out
            if content.level != comp.level:
                diags.append(
                    f"level mismatch at {s}[{p}]: binder {comp.cvar}"
                    f"^{comp.level} vs channel at {content.level}")
                return out
            cont = sx.substitute(
                comp.cont, sx.Subst(chans={comp.cvar: content.target}))
            subj = f"{s}[{p}] receives channel {_chan_str(content.target)}"
            out.append(("RecvC", subj, cont, h2, [], content.level))
        return out
    if isinstance(comp, sx.Select):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            if qset_get(h, s) is not None:
                h2 = push_message(h, s, Message(
                    p, comp.dests, LabelMsg(comp.label, comp.level)))
                subj = f"{s}[{p}] selects {comp.label}^{comp.level}"
                out.append(("Sel", subj, comp.cont, h2, [], comp.level))
        return out
    if isinstance(comp, sx.Branch):
        if isinstance(comp.chan, sx.ChanRole):
            s, p = comp.chan.session, comp.chan.role
            content, h2 = pop_message(h, s, p, comp.src)
            if content is None:
                return out
            if not isinstance(content, LabelMsg):
                diags.append(f"{s}[{p}] expects a label from {comp.src},"
                             f" queue holds {type(content).__name__}")
                return out
            arms = dict(comp.branches)
            if content.label not in arms:
                diags.append(f"{s}[{p}] offers {sorted(arms)}, got label"
                             f" {content.label!r}")
                return out
            subj = f"{s}[{p}] branches on {content.label}"
            out.append(("Branch", subj, arms[content.label], h2, [], content.level))
        return out
    if isinstance(comp, sx.If):
        try:
            v = sx.eval_expr(comp.cond, {}, lat)
        except sx.EvalError as e:
            diags.append(f"cannot evaluate condition: {e}")
            return out
        if not isinstance(v.payload, bool):
            diags.append("condition evaluated to a non-boolean")
            return out
        subj = f"if {v.payload}^{v.level}"
        out.append(("If", subj, comp.then if v.payload else comp.els, h, [],
                    v.level))
        return out
    if isinstance(comp, sx.Def):
        decl = comp.decl
        defs2 = dict(defs)
        defs2[decl.name] = decl
        inner = components(comp.body)
        for rule, subj, comps2, h2, freshes, lvl in _step_level(
                inner, defs2, h, lat, diags):
            out.append((rule, subj, sx.Def(decl, rebuild(comps2)),
                        h2, freshes, lvl))
        return out
    if isinstance(comp, sx.Call):
        decl = defs.get(comp.name)
        if decl is None:
            diags.append(f"call to undefined process {comp.name!r}")
            return out
        if len(comp.args) != len(decl.params):
            diags.append(f"call to {comp.name!r} with wrong arity")
            return out
        values: dict[str, Union[bool, int]] = {}
        try:
            for (pname, _lvl), arg in zip(decl.params, comp.args):
                values[pname] = sx.eval_expr(arg, {}, lat).payload
        except sx.EvalError as e:
            diags.append(f"cannot evaluate arguments of {comp.name!r}: {e}")
            return out
        body = sx.substitute(decl.body, sx.Subst(
            values=values, chans={decl.chanparam: comp.chan}))
        out.append(("Def", f"unfold {comp.name}", body, h, [], None))
        return out
    # Initiator / Participant wait for a Link; Nil and variables are inert.
    return out


def _step_level(comps: list[sx.Process], defs: dict[str, sx.DefDecl],
                h: QSet, lat: Lattice, diags: list[str]):
    """All reductions of a flattened scope level.

    Yields (rule, subject, new component list, new qset, fresh sessions,
    level).
    """
    results = []
    # [Link]: an initiator plus one participant per role, same service
    for i, c in enumerate(comps):
        if not isinstance(c, sx.Initiator) or not isinstance(c.service, str):
            continue
        a, n = c.service, c.arity
        cands = []
        for r in range(1, n + 1):
            cands.append([(j, q) for j, q in enumerate(comps)
                          if isinstance(q, sx.Participant)
                          and q.service == a and q.role == r and j != i])
        if not all(cands):
            continue
        for combo in itertools.product(*cands):
            used = {i} | {j for j, _ in combo}
            if len(used) != n + 1:
                continue
            s = fresh_raw_name("s")
            bodies = [sx.substitute(
                q.body, sx.Subst(chans={q.chanvar: sx.ChanRole(s, q.role)}))
                for _, q in combo]
            comps2 = [q for j, q in enumerate(comps) if j not in used]
            comps2.extend(bodies)
            h2 = tuple(sorted(h + ((s, ()),)))
            results.append(("Link", f"session on {a} with {n} participants",
                            comps2, h2, [s], None))
    # everything else, one component at a time
    for i, c in enumerate(comps):
        for rule, subj, newc, h2, freshes, lvl in _step_component(
                c, defs, h, lat, diags):
            comps2 = comps[:i] + [newc] + comps[i + 1:]
            results.append((rule, subj, comps2, h2, freshes, lvl))
    return results


def step_standard(c: Config, lat: Lattice):
    """All one-step successors of a configuration, normalized.

    Returns (successors, diagnostics) where successors is a list of
    (StepLabel, Config) and diagnostics lists non-fatal obstructions
    (level mismatches, missing branch labels, evaluation errors).
    """
    diags: list[str] = []
    comps = components(c.process)
    succs: list[tuple[StepLabel, Config]] = []
    for rule, subj, comps2, h2, freshes, _lvl in _step_level(
            comps, {}, c.qset, lat, diags):
        raw = Config(tuple(c.restricted) + tuple(freshes),
                     rebuild(comps2), h2)
        cfg, ren = normalize_with_map(raw)
        fresh = ren.get(freshes[0]) if freshes else None
        if fresh is not None:
            subj = f"{subj}: {fresh}"
        succs.append((StepLabel(rule, subj, fresh), cfg))
    return succs, diags


# ---------------------------------------------------------------------------
# Running

Scheduler = Union[str, Callable[[list], int]]


@dataclass(frozen=True)
class RunResult:
    status: str  # 'clean' | 'stuck' | 'bound'
    trace: tuple[tuple[StepLabel, Config], ...]
    final: Config
    diagnostics: tuple[str, ...] = field(default=())


def make_scheduler(kind: str, seed: Optional[int] = None
                   ) -> Callable[[list], int]:
    if kind == "det":
        return lambda succs: 0
    if kind == "random":
        rng = random.Random(seed)
        return lambda succs: rng.randrange(len(succs))
    raise ValueError(f"unknown scheduler {kind!r}")


def run_standard(c: Config, lat: Lattice, scheduler: Scheduler = "det",
                 max_steps: int = 1000,
                 seed: Optional[int] = None) -> RunResult:
    pick = (scheduler if callable(scheduler)
            else make_scheduler(scheduler, seed))
    cur = normalize_config(c)
    trace: list[tuple[StepLabel, Config]] = []
    diags: list[str] = []
    for _ in range(max_steps):
        succs, d = step_standard(cur, lat)
        diags.extend(d)
        if not succs:
            status = ("clean" if isinstance(cur.process, sx.Nil)
                      else "stuck")
            return RunResult(status, tuple(trace), cur, tuple(diags))
        label, cur = succs[pick(succs)]
        trace.append((label, cur))
    succs, d = step_standard(cur, lat)
    diags.extend(d)
    if not succs:
        status = "clean" if isinstance(cur.process, sx.Nil) else "stuck"
    else:
        status = "bound"
    return RunResult(status, tuple(trace), cur, tuple(diags))
