"""Concrete-syntax printing for processes and expressions.

The output re-parses to a structurally identical AST (round-trip property,
tested in the suite).
"""

from __future__ import annotations

from . import syntax as sx


def print_level(l: str | None) -> str:
    return "" if l is None else f"^{l}"


def print_expr(e: sx.Expr) -> str:
    if isinstance(e, sx.Var):
        return f"{e.name}{print_level(e.level)}"
    if isinstance(e, sx.Lit):
        if isinstance(e.value, bool):
            return f"{'true' if e.value else 'false'}{print_level(e.level)}"
        return f"{e.value}{print_level(e.level)}"
    if isinstance(e, sx.Not):
        return f"not {_expr_atom(e.arg)}"
    if isinstance(e, sx.And):
        return f"{_expr_atom(e.left)} and {_expr_atom(e.right)}"
    raise TypeError(f"not an expression: {e!r}")


def _expr_atom(e: sx.Expr) -> str:
    s = print_expr(e)
    if isinstance(e, (sx.And, sx.Not)):
        return f"({s})"
    return s


def print_chan(c: sx.Chan) -> str:
    if isinstance(c, sx.ChanVar):
        return c.name
    return f"{c.session}[{c.role}]"


def print_service(u: sx.ServiceRef) -> str:
    return u.name if isinstance(u, sx.ServiceVar) else u


def _print_dests(d: frozenset[int]) -> str:
    if len(d) == 1:
        return str(next(iter(d)))
    return "{" + ", ".join(str(x) for x in sorted(d)) + "}"


def print_process(p: sx.Process) -> str:
    if isinstance(p, sx.Par):
        return f"{_par_atom(p.left)} | {_par_atom(p.right)}"
    return _par_atom(p)


def _par_atom(p: sx.Process) -> str:
    if isinstance(p, sx.Nil):
        return "0"
    if isinstance(p, sx.Par):
        return f"({print_process(p)})"
    if isinstance(p, sx.Initiator):
        return f"bar {print_service(p.service)}[{p.arity}]"
    if isinstance(p, sx.Participant):
        return (f"{print_service(p.service)}[{p.role}]({p.chanvar})."
                f" {_par_atom(p.body)}")
    if isinstance(p, sx.SendV):
        return (f"{print_chan(p.chan)}!<{_print_dests(p.dests)},"
                f" {print_expr(p.expr)}>. {_par_atom(p.cont)}")
    if isinstance(p, sx.RecvV):
        return (f"{print_chan(p.chan)}?({p.src},"
                f" {p.var}{print_level(p.level)}). {_par_atom(p.cont)}")
    if isinstance(p, sx.SendS):
        return (f"{print_chan(p.chan)}!<<{_print_dests(p.dests)},"
                f" {print_service(p.service)}{print_level(p.level)}>>."
                f" {_par_atom(p.cont)}")
    if isinstance(p, sx.RecvS):
        return (f"{print_chan(p.chan)}?(({p.svar}{print_level(p.level)},"
                f" {p.src})). {_par_atom(p.cont)}")
    if isinstance(p, sx.SendC):
        return (f"{print_chan(p.chan)}!((({p.dest},"
                f" {print_chan(p.target)}{print_level(p.level)})))."
                f" {_par_atom(p.cont)}")
    if isinstance(p, sx.RecvC):
        return (f"{print_chan(p.chan)}?((({p.cvar}{print_level(p.level)},"
                f" {p.src}))). {_par_atom(p.cont)}")
    if isinstance(p, sx.Select):
        return (f"{print_chan(p.chan)} oplus{print_level(p.level)}"
                f" <{_print_dests(p.dests)}, {p.label}>. {_par_atom(p.cont)}")
    if isinstance(p, sx.Branch):
        arms = ", ".join(f"{lbl}: {_par_atom(q)}" for lbl, q in p.branches)
        return (f"{print_chan(p.chan)} &{print_level(p.level)}"
                f" ({p.src}, {{ {arms} }})")
    if isinstance(p, sx.If):
        return (f"if {print_expr(p.cond)} then {_par_atom(p.then)}"
                f" else {_par_atom(p.els)}")
    if isinstance(p, sx.NewName):
        return f"new {p.name}. {_par_atom(p.body)}"
    if isinstance(p, sx.Def):
        d = p.decl
        params = [f"{v}{print_level(l)}" for v, l in d.params]
        params.append(d.chanparam)
        return (f"def {d.name}({', '.join(params)}) = {_par_atom(d.body)}"
                f" in {_par_atom(p.body)}")
    if isinstance(p, sx.Call):
        args = [print_expr(a) for a in p.args]
        args.append(print_chan(p.chan))
        return f"{p.name}({', '.join(args)})"
    raise TypeError(f"not a process: {p!r}")


def print_mproc(m: sx.MProc) -> str:
    if isinstance(m, sx.Mon):
        return f"[{m.level}]({print_process(m.proc)})"
    if isinstance(m, sx.MPar):
        return f"{print_mproc(m.left)} | {print_mproc(m.right)}"
    if isinstance(m, sx.MNew):
        return f"new {m.name}. ({print_mproc(m.body)})"
    if isinstance(m, sx.MDef):
        d = m.decl
        params = [f"{v}^{l}" for v, l in d.params]
        params.append(d.chanparam)
        return (f"def {d.name}({', '.join(params)}) = {_par_atom(d.body)}"
                f" in ({print_mproc(m.body)})")
    raise TypeError(f"not a monitored process: {m!r}")
