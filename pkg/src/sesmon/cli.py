"""Command-line front end: run, monitor, and check programs.

Exit codes
  run:          0 quiescent, 3 stuck with pending receives, 4 step bound
  mrun:         as run, plus 5 when a monitored redex errs
  check-*:      0 holds, 1 fails, 2 inconclusive
  bad input:    65 (parse/validation errors)
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from . import analysis as an
from . import monitor as mn
from . import parser as ps
from . import runtime as rt
from . import syntax as sx
from .lattice import Lattice, LatticeError
from .printer import print_mproc, print_process

EX_BAD_INPUT = 65


# ---------------------------------------------------------------------------
# JSON encoding of runtime values

def content_to_json(c: rt.MsgContent) -> dict:
    if isinstance(c, rt.ValueMsg):
        return {"kind": "value", "payload": c.payload, "level": c.level}
    if isinstance(c, rt.LabelMsg):
        return {"kind": "label", "label": c.label, "level": c.level}
    if isinstance(c, rt.ServiceMsg):
        return {"kind": "service", "service": c.service, "level": c.level}
    return {"kind": "channel", "session": c.target.session,
            "role": c.target.role, "level": c.level}


def content_from_json(d: dict) -> rt.MsgContent:
    if d["kind"] == "value":
        return rt.ValueMsg(d["payload"], d["level"])
    if d["kind"] == "label":
        return rt.LabelMsg(d["label"], d["level"])
    if d["kind"] == "service":
        return rt.ServiceMsg(d["service"], d["level"])
    return rt.ChannelMsg(sx.ChanRole(d["session"], d["role"]), d["level"])


def qset_to_json(h: rt.QSet) -> list:
    return [{"session": s,
             "queue": [{"sender": m.sender,
                        "receivers": sorted(m.receivers),
                        "content": content_to_json(m.content)}
                       for m in q]}
            for s, q in h]


def qset_from_json(doc: list) -> rt.QSet:
    return rt.canon_qset(tuple(
        (e["session"],
         tuple(rt.Message(m["sender"], frozenset(m["receivers"]),
                          content_from_json(m["content"]))
               for m in e["queue"]))
        for e in doc))


def qset_str(h: rt.QSet) -> str:
    from .printer import print_level
    parts = []
    for s, q in h:
        if not q:
            parts.append(f"{s}: e")
            continue
        msgs = []
        for m in q:
            c = m.content
            if isinstance(c, rt.ValueMsg):
                body = (str(c.payload).lower()
                        if isinstance(c.payload, bool) else str(c.payload))
            elif isinstance(c, rt.LabelMsg):
                body = c.label
            elif isinstance(c, rt.ServiceMsg):
                body = c.service
            else:
                body = f"{c.target.session}[{c.target.role}]"
            rcv = (str(next(iter(m.receivers))) if len(m.receivers) == 1
                   else "{" + ",".join(map(str, sorted(m.receivers))) + "}")
            msgs.append(f"({m.sender},{rcv},{body}{print_level(c.level)})")
        parts.append(f"{s}: " + " . ".join(msgs))
    return "{" + "; ".join(parts) + "}" if parts else "{}"


def witness_to_json(w: Optional[dict]) -> Optional[dict]:
    if w is None:
        return None
    out = {}
    for k, v in w.items():
        if k.endswith("_proc") or k == "mstate":
            continue
        if k.startswith("qset") or k.startswith("proj"):
            out[k] = qset_to_json(v)
        else:
            out[k] = v
    return out


def lattice_to_json(lat: Lattice) -> dict:
    return {"elements": sorted(lat.elements),
            "order": sorted([a, b] for a in lat.elements
                            for b in lat.elements
                            if a != b and lat.leq(a, b)),
            "bottom": lat.bottom, "top": lat.top}


# ---------------------------------------------------------------------------
# Program loading

def load_program(name: str) -> tuple[ps.Program, str]:
    path = Path(name)
    if path.exists():
        return ps.parse_program(path.read_text()), str(path)
    pkg = resources.files("sesmon").joinpath("procs").joinpath(name)
    if pkg.is_file():
        return ps.parse_program(pkg.read_text()), name
    raise FileNotFoundError(f"no such program file or bundled example: "
                            f"{name}")


def _parse_choices(pairs: list[str]) -> dict[str, bool]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ValueError(f"--choice expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        if v not in ("true", "false"):
            raise ValueError(f"--choice value must be true or false: {v!r}")
        out[k] = v == "true"
    return out


# ---------------------------------------------------------------------------
# Commands

def _emit(doc: dict, args) -> None:
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    prog, shown = load_program(args.program)
    p = ps.bind_choices(prog.process, prog.choices,
                        _parse_choices(args.choice))
    res = rt.run_standard(rt.initial_config(p), prog.lattice,
                          scheduler=args.scheduler,
                          max_steps=args.max_steps, seed=args.seed)
    doc = {"command": "run", "program": shown,
           "lattice": lattice_to_json(prog.lattice),
           "steps": [{"rule": l.rule, "subject": l.subject, "fresh": l.fresh}
                     for l, _ in res.trace],
           "verdicts": [{"status": res.status}], "witness": None}
    _emit(doc, args)
    if not args.json:
        for i, (label, _) in enumerate(res.trace, 1):
            print(f"{i:3}. [{label.rule}] {label.subject}")
        print(f"status: {res.status}  final qset: {qset_str(res.final.qset)}")
        for d in res.diagnostics:
            print(f"note: {d}", file=sys.stderr)
    return {"clean": 0, "stuck": 3, "bound": 4}[res.status]


def cmd_mrun(args) -> int:
    prog, shown = load_program(args.program)
    p = ps.bind_choices(prog.process, prog.choices,
                        _parse_choices(args.choice))
    res = mn.run_monitored(mn.initial_mconfig(p, prog.lattice), prog.lattice,
                           scheduler=args.scheduler,
                           max_steps=args.max_steps, seed=args.seed,
                           single_monitor=args.single_monitor)
    doc = {"command": "mrun", "program": shown,
           "lattice": lattice_to_json(prog.lattice),
           "steps": [{"rule": l.rule, "subject": l.subject, "fresh": l.fresh}
                     for l, _ in res.trace],
           "verdicts": [{"status": res.status}],
           "witness": ([{"subject": e.subject, "monitor": e.monitor,
                         "level": e.level} for e in res.errors] or None)}
    _emit(doc, args)
    if not args.json:
        for i, (label, _) in enumerate(res.trace, 1):
            print(f"{i:3}. [{label.rule}] {label.subject}")
        print(f"status: {res.status}")
        print(f"final: {print_mproc(res.final.mprocess)}  "
              f"qset: {qset_str(res.final.qset)}")
        for e in res.errors:
            print(f"error (dagger): {e.subject} at level {e.level} "
                  f"under monitor {e.monitor}")
    return {"clean": 0, "stuck": 3, "bound": 4, "error": 5}[res.status]


_EXIT = {"holds": 0, "fails": 1, "inconclusive": 2}


def _levels_arg(args, lat: Lattice) -> Optional[frozenset[str]]:
    if not args.levels:
        return None
    L = frozenset(x.strip() for x in args.levels.split(",") if x.strip())
    for x in L:
        lat.check(x)
    if not lat.is_downward_closed(L):
        raise LatticeError(f"--levels set is not downward closed: "
                           f"{sorted(L)}")
    return L


def cmd_check_secure(args) -> int:
    prog, shown = load_program(args.program)
    p = ps.bind_choices(prog.process, prog.choices,
                        _parse_choices(args.choice))
    lat = prog.lattice
    if args.replay:
        w = json.loads(Path(args.replay).read_text())
        if w.get("kind") != "leaf":
            raise ValueError("--replay expects a leaf witness document")
        w2 = dict(w)
        w2["left_proc"] = ps.parse_process_text(w["left"], lat)
        w2["right_proc"] = ps.parse_process_text(w["right"], lat)
        w2["qset_left"] = qset_from_json(w["qset_left"])
        w2["qset_right"] = qset_from_json(w["qset_right"])
        ok = an.replay_secure_witness(w2, lat, frozenset(w["L"]), args.depth)
        print("replay: disagreement reproduced" if ok
              else "replay: witness did not reproduce")
        return 1 if ok else 2
    uni = an.build_universe(p, lat, args.queue_bound)
    L = _levels_arg(args, lat)
    if L is not None:
        verdicts = {L: an.check_secure(p, L, lat, uni, args.depth)}
    else:
        verdicts = an.check_secure_all(p, lat, uni, args.depth)
    overall = an.overall_secure(verdicts)
    witness = next((v.witness for v in verdicts.values()
                    if v.result == "fails"), None)
    doc = {"command": "check-secure", "program": shown,
           "lattice": lattice_to_json(lat), "steps": [],
           "verdicts": [{"L": sorted(k), "result": v.result,
                         "reason": v.reason}
                        for k, v in sorted(verdicts.items(),
                                           key=lambda kv: sorted(kv[0]))],
           "overall": overall, "witness": witness_to_json(witness)}
    _emit(doc, args)
    if not args.json:
        for k, v in sorted(verdicts.items(), key=lambda kv: sorted(kv[0])):
            print(f"L={{{','.join(sorted(k))}}}: {v.result}  ({v.reason})")
        print(f"overall: {overall}")
        if witness is not None:
            print(f"witness: step [{witness['rule']}] {witness['step']} of "
                  f"{witness['left']}")
            print(f"  qsets before: {qset_str(witness['qset_left'])} vs "
                  f"{qset_str(witness['qset_right'])}")
            print(f"  qsets after:  "
                  f"{qset_str(witness['qset_left_after'])} vs "
                  f"{qset_str(witness['qset_right'])}")
    if args.witness_out and witness is not None:
        Path(args.witness_out).write_text(
            json.dumps(witness_to_json(witness), indent=2, sort_keys=True))
    return _EXIT[overall]


def cmd_check_safe(args) -> int:
    prog, shown = load_program(args.program)
    p = ps.bind_choices(prog.process, prog.choices,
                        _parse_choices(args.choice))
    uni = an.build_universe(p, prog.lattice, args.queue_bound)
    v = an.check_safe(p, prog.lattice, uni, depth_bound=args.depth * 3)
    doc = {"command": "check-safe", "program": shown,
           "lattice": lattice_to_json(prog.lattice), "steps": [],
           "verdicts": [{"check": "safe", "result": v.result,
                         "reason": v.reason}],
           "witness": witness_to_json(v.witness)}
    _emit(doc, args)
    if not args.json:
        print(f"safe: {v.result}  ({v.reason})")
        if v.witness:
            print(f"witness: state {v.witness['state']}")
            print(f"  qset {qset_str(v.witness['qset'])}, unmatched step "
                  f"[{v.witness['rule']}] {v.witness['step']}")
    return _EXIT[v.result]


def cmd_check_noerr(args) -> int:
    prog, shown = load_program(args.program)
    p = ps.bind_choices(prog.process, prog.choices,
                        _parse_choices(args.choice))
    v = an.check_no_runtime_error(p, prog.lattice, max_steps=args.max_steps)
    doc = {"command": "check-noerr", "program": shown,
           "lattice": lattice_to_json(prog.lattice), "steps": [],
           "verdicts": [{"check": "noerr", "result": v.result,
                         "reason": v.reason}],
           "witness": witness_to_json(v.witness)}
    _emit(doc, args)
    if not args.json:
        print(f"no-runtime-error: {v.result}  ({v.reason})")
        if v.witness:
            print(f"witness: {v.witness['errors']}")
    return _EXIT[v.result]


# ---------------------------------------------------------------------------

def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="sesmon")
    sub = top.add_subparsers(dest="command", required=True)
    specs = {"run": cmd_run, "mrun": cmd_mrun,
             "check-safe": cmd_check_safe,
             "check-secure": cmd_check_secure,
             "check-noerr": cmd_check_noerr}
    for name, fn in specs.items():
        sp = sub.add_parser(name)
        sp.add_argument("program")
        sp.add_argument("--max-steps", type=int, default=1000)
        sp.add_argument("--queue-bound", type=int, default=2)
        sp.add_argument("--depth", type=int, default=4)
        sp.add_argument("--scheduler", choices=["det", "random"],
                        default="det")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--levels", default=None,
                        help="comma-separated downward-closed observer set")
        sp.add_argument("--json", action="store_true")
        sp.add_argument("--choice", action="append", default=[],
                        metavar="NAME=VALUE")
        sp.add_argument("--replay", default=None, metavar="FILE")
        sp.add_argument("--witness-out", default=None, metavar="FILE")
        sp.add_argument("--single-monitor", action="store_true",
                        help="diagnostic: share one joined monitor level")
        sp.set_defaults(fn=fn)
    return top


def main(argv: Optional[list[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    if args.scheduler == "random" and args.seed is None:
        print("error: --seed is required with --scheduler random",
              file=sys.stderr)
        return EX_BAD_INPUT
    try:
        return args.fn(args)
    except (ps.ParseError, ps.ArityMismatch, LatticeError, ValueError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EX_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
