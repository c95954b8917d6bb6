"""Monitored small-step semantics.

Every sequential component carries a monitor level recording the highest
level of information that has flowed into its control state.  A component
may only communicate at levels at or above its monitor; a violating redex
is a runtime error rather than a step.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import runtime as rt
from . import syntax as sx
from .lattice import Lattice


@dataclass(frozen=True)
class MConfig:
    restricted: tuple[str, ...]
    mprocess: sx.MProc
    qset: rt.QSet


@dataclass(frozen=True)
class MonitorError:
    """A blocked redex: the component would communicate below its monitor."""
    subject: str
    monitor: str
    level: str


def wrap(p: sx.Process, mu0: str, lineage: tuple[int, ...] = ()) -> sx.Mon:
    return sx.Mon(mu0, p, lineage)


def mcomponents(m: sx.MProc) -> list[sx.MProc]:
    if isinstance(m, sx.MPar):
        return mcomponents(m.left) + mcomponents(m.right)
    return [m]


def mrebuild(comps: list[sx.MProc]) -> sx.MProc:
    if not comps:
        raise ValueError("a monitored process has at least one component")
    out = comps[-1]
    for c in reversed(comps[:-1]):
        out = sx.MPar(c, out)
    return out


def _mgather(m: sx.MProc, restricted: list[str]) -> list[sx.MProc]:
    """Flatten one scope level of a monitored process.

    The monitor distributes over parallel composition; restrictions are
    extruded after a capture-proof renaming; a monitored definition scope
    floats the monitor inside onto the scope body.
    """
    if isinstance(m, sx.MPar):
        return _mgather(m.left, restricted) + _mgather(m.right, restricted)
    if isinstance(m, sx.MNew):
        raw = rt.fresh_raw_name("n")
        restricted.append(raw)
        return _mgather(rt.rename_names(m.body, {m.name: raw}), restricted)
    if isinstance(m, sx.MDef):
        inner = _mgather(m.body, restricted)
        return [sx.MDef(m.decl, mrebuild(inner))]
    if isinstance(m, sx.Mon):
        p = m.proc
        if isinstance(p, sx.Par):
            return (_mgather(sx.Mon(m.level, p.left, m.lineage + (0,)),
                             restricted)
                    + _mgather(sx.Mon(m.level, p.right, m.lineage + (1,)),
                               restricted))
        if isinstance(p, sx.NewName):
            raw = rt.fresh_raw_name("n")
            restricted.append(raw)
            return _mgather(
                sx.Mon(m.level, rt.rename_names(p.body, {p.name: raw}),
                       m.lineage), restricted)
        if isinstance(p, sx.Def):
            return [sx.MDef(p.decl,
                            mrebuild(_mgather(sx.Mon(m.level, p.body,
                                                     m.lineage),
                                              restricted)))]
        return [m]
    raise TypeError(f"not a monitored process: {m!r}")


def _dedup_nil(comps: list[sx.MProc]) -> list[sx.MProc]:
    """Keep one terminated component per monitor level."""
    seen: set[str] = set()
    out = []
    for c in comps:
        if isinstance(c, sx.Mon) and isinstance(c.proc, sx.Nil):
            if c.level in seen:
                continue
            seen.add(c.level)
        out.append(c)
    return out


def normalize_mconfig_with_map(c: MConfig) -> tuple[MConfig, dict[str, str]]:
    restricted = list(c.restricted)
    comps = _dedup_nil(_mgather(c.mprocess, restricted))
    h = rt.canon_qset(c.qset)
    occ = rt.occurring_names(mrebuild(comps), h)
    rset = set(restricted) & occ

    mask = {r: "\x00" for r in rset}
    comps.sort(key=lambda q: sx.ser_key(rt.rename_names(q, mask)))

    order: list[str] = []
    for q in comps:
        rt._names_in_order(q, rset, order)
    for s, qq in h:
        rt._names_in_order(s, rset, order)
        rt._names_in_order(qq, rset, order)

    free = occ - rset
    ren: dict[str, str] = {}
    i = 0
    for old in order:
        while f"_r{i}" in free:
            i += 1
        ren[old] = f"_r{i}"
        i += 1

    comps = [rt.rename_names(q, ren) for q in comps]
    h = tuple(sorted(rt.rename_names(e, ren) for e in h))
    comps.sort(key=sx.ser_key)
    return (MConfig(tuple(sorted(ren.values())), mrebuild(comps), h), ren)


def normalize_mconfig(c: MConfig) -> MConfig:
    return normalize_mconfig_with_map(c)[0]


def initial_mconfig(p: sx.Process, lat: Lattice,
                    mu0: Optional[str] = None) -> MConfig:
    if mu0 is None:
        mu0 = lat.bottom
    h = tuple(sorted((s, ()) for s in sx.free_sessions(p)))
    return normalize_mconfig(MConfig((), wrap(p, mu0), h))


def monitor_map(m: sx.MProc) -> dict[tuple[int, ...], str]:
    """Monitor level per component lineage (used for monotonicity checks)."""
    out: dict[tuple[int, ...], str] = {}
    for c in mcomponents(m):
        while isinstance(c, sx.MDef):
            for inner in mcomponents(c.body):
                out.update(monitor_map(inner))
            break
        else:
            if isinstance(c, sx.Mon):
                out[c.lineage] = c.level
    return out


def demonitor_config(c: MConfig) -> rt.Config:
    return rt.normalize_config(
        rt.Config(c.restricted, sx.demonitor(c.mprocess), c.qset))


# ---------------------------------------------------------------------------
# Stepping

_INPUT_RULES = {"RecvV", "RecvS", "RecvC", "Branch"}
_GUARDED_RULES = _INPUT_RULES | {"SendV", "SendS", "SendC", "Sel"}


@dataclass(frozen=True)
class MStepResult:
    successors: tuple[tuple[rt.StepLabel, MConfig], ...]
    errors: tuple[MonitorError, ...]
    diagnostics: tuple[str, ...]


def _mstep_level(comps: list[sx.MProc], defs: dict[str, sx.DefDecl],
                 h: rt.QSet, lat: Lattice, diags: list[str],
                 errors: list[MonitorError]):
    """All monitored reductions of one flattened scope level.

    Yields (rule, subject, new component list, new qset, fresh sessions).
    """
    results = []
    # [MLink]: the session starts at the join of all n+1 monitors
    for i, c in enumerate(comps):
        if not (isinstance(c, sx.Mon) and isinstance(c.proc, sx.Initiator)
                and isinstance(c.proc.service, str)):
            continue
        a, n = c.proc.service, c.proc.arity
        cands = []
        for r in range(1, n + 1):
            cands.append([(j, q) for j, q in enumerate(comps)
                          if isinstance(q, sx.Mon)
                          and isinstance(q.proc, sx.Participant)
                          and q.proc.service == a and q.proc.role == r
                          and j != i])
        if not all(cands):
            continue
        import itertools
        for combo in itertools.product(*cands):
            used = {i} | {j for j, _ in combo}
            if len(used) != n + 1:
                continue
            joined = lat.join_all([c.level] + [q.level for _, q in combo])
            s = rt.fresh_raw_name("s")
            bodies = [sx.Mon(joined,
                             sx.substitute(q.proc.body,
                                           sx.Subst(chans={q.proc.chanvar:
                                                           sx.ChanRole(s, q.proc.role)})),
                             q.lineage)
                      for _, q in combo]
            comps2 = [q for j, q in enumerate(comps) if j not in used]
            comps2.extend(bodies)
            h2 = tuple(sorted(h + ((s, ()),)))
            results.append(("MLink",
                            f"session on {a} with {n} participants",
                            comps2, h2, [s]))
    for i, c in enumerate(comps):
        if isinstance(c, sx.MDef):
            defs2 = dict(defs)
            defs2[c.decl.name] = c.decl
            inner = mcomponents(c.body)
            for rule, subj, inner2, h2, freshes in _mstep_level(
                    inner, defs2, h, lat, diags, errors):
                comps2 = comps[:i] + [sx.MDef(c.decl, mrebuild(inner2))] \
                    + comps[i + 1:]
                results.append((rule, subj, comps2, h2, freshes))
            continue
        if not isinstance(c, sx.Mon):
            continue
        mu = c.level
        for rule, subj, newc, h2, freshes, lvl in rt._step_component(
                c.proc, defs, h, lat, diags):
            if rule in _GUARDED_RULES and not lat.leq(mu, lvl):
                errors.append(MonitorError(subj, mu, lvl))
                continue
            if rule in _INPUT_RULES:
                mu2 = lvl
            elif rule == "If":
                mu2 = lat.join(mu, lvl)
            else:
                mu2 = mu
            comps2 = comps[:i] + [sx.Mon(mu2, newc, c.lineage)] \
                + comps[i + 1:]
            results.append(("M" + rule, subj, comps2, h2, freshes))
    return results


def step_monitored(c: MConfig, lat: Lattice) -> MStepResult:
    """All one-step successors and blocked redexes of a monitored
    configuration, normalized."""
    diags: list[str] = []
    errors: list[MonitorError] = []
    comps = mcomponents(c.mprocess)
    succs: list[tuple[rt.StepLabel, MConfig]] = []
    for rule, subj, comps2, h2, freshes in _mstep_level(
            comps, {}, c.qset, lat, diags, errors):
        raw = MConfig(tuple(c.restricted) + tuple(freshes),
                      mrebuild(comps2), h2)
        cfg, ren = normalize_mconfig_with_map(raw)
        fresh = ren.get(freshes[0]) if freshes else None
        if fresh is not None:
            subj = f"{subj}: {fresh}"
        succs.append((rt.StepLabel(rule, subj, fresh), cfg))
    return MStepResult(tuple(succs), tuple(errors), tuple(diags))


def join_monitors(c: MConfig, lat: Lattice) -> MConfig:
    """Force a single shared monitor: every component gets the join of all
    current monitors (a deliberately coarser discipline, for comparison)."""
    levels = list(monitor_map(c.mprocess).values())
    joined = lat.join_all(levels)

    def lift(m: sx.MProc) -> sx.MProc:
        if isinstance(m, sx.Mon):
            return sx.Mon(joined, m.proc, m.lineage)
        if isinstance(m, sx.MPar):
            return sx.MPar(lift(m.left), lift(m.right))
        if isinstance(m, sx.MNew):
            return sx.MNew(m.name, lift(m.body))
        return sx.MDef(m.decl, lift(m.body))

    return normalize_mconfig(MConfig(c.restricted, lift(c.mprocess), c.qset))


@dataclass(frozen=True)
class MRunResult:
    status: str  # 'clean' | 'stuck' | 'bound' | 'error'
    trace: tuple[tuple[rt.StepLabel, MConfig], ...]
    final: MConfig
    errors: tuple[MonitorError, ...] = field(default=())
    diagnostics: tuple[str, ...] = field(default=())


def _terminated(c: MConfig) -> bool:
    return all(isinstance(q, sx.Mon) and isinstance(q.proc, sx.Nil)
               for q in mcomponents(c.mprocess))


def run_monitored(c: MConfig, lat: Lattice,
                  scheduler: rt.Scheduler = "det", max_steps: int = 1000,
                  seed: Optional[int] = None,
                  single_monitor: bool = False) -> MRunResult:
    """Run to termination, a blocked redex, or the step bound.

    The run halts with status 'error' as soon as any enabled redex of the
    current state violates its monitor.
    """
    pick: Callable[[list], int] = (
        scheduler if callable(scheduler)
        else rt.make_scheduler(scheduler, seed))
    cur = normalize_mconfig(c)
    if single_monitor:
        cur = join_monitors(cur, lat)
    trace: list[tuple[rt.StepLabel, MConfig]] = []
    diags: list[str] = []
    for _ in range(max_steps):
        res = step_monitored(cur, lat)
        diags.extend(res.diagnostics)
        if res.errors:
            return MRunResult("error", tuple(trace), cur, res.errors,
                              tuple(diags))
        if not res.successors:
            status = "clean" if _terminated(cur) else "stuck"
            return MRunResult(status, tuple(trace), cur, (), tuple(diags))
        label, cur = res.successors[pick(list(res.successors))]
        if single_monitor:
            cur = join_monitors(cur, lat)
        trace.append((label, cur))
    res = step_monitored(cur, lat)
    diags.extend(res.diagnostics)
    if res.errors:
        return MRunResult("error", tuple(trace), cur, res.errors,
                          tuple(diags))
    if not res.successors:
        status = "clean" if _terminated(cur) else "stuck"
    else:
        status = "bound"
    return MRunResult(status, tuple(trace), cur, (), tuple(diags))
