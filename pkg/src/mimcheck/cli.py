"""Command line front end.

Subcommands:

  simulate   passive preliminary run; prints the intruder knowledge table,
             the feasibility verdict per attack action, and the comparison log
  check      full state-space search under a chosen intruder mode
  replay     re-execute a recorded counterexample trace, optionally as DOT
  compare    run the generic and the pruned intruder side by side, emit a
             delimited summary and optionally a bar figure

Exit codes: 0 clean (or agreement, for compare), 1 violation found (or
disagreement), 2 usage, parse, or trace errors, 3 search was inconclusive.
"""

from __future__ import annotations

import argparse
import sys

from . import report as rep
from .checker import GENERIC, ReplayError, replay, search
from .intruder import ALL_TAGS
from .mi import mi_simulate
from .protocol import ParseError, instantiate, make_config, parse_spec


def _add_config_opts(p: argparse.ArgumentParser):
    p.add_argument("--sessions", type=int, default=None, metavar="N",
                   help="parallel sessions (default 2, or one per --assign)")
    p.add_argument("--assign", action="append", default=None, metavar="ROLE=AGENT,...",
                   help="role assignment for one session; repeat per session "
                        "(default: rotate roles through the declared agents)")
    p.add_argument("--fake-depth", type=int, default=2, metavar="D",
                   help="composition layers allowed in fabricated messages (default 2)")
    p.add_argument("--spawns", type=int, default=1, metavar="K",
                   help="sessions the intruder may open on its own (default 1)")


def _add_search_opts(p: argparse.ArgumentParser):
    p.add_argument("--search", choices=("dfs", "bfs"), default="dfs")
    p.add_argument("--stop", choices=("first-error", "exhaustive"), default="first-error")
    p.add_argument("--max-states", type=int, default=1_000_000, metavar="N")
    p.add_argument("--max-depth", type=int, default=10_000, metavar="N")


def _parse_assignment(text: str) -> dict:
    out = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk or "=" not in chunk:
            raise ValueError("bad assignment %r, expected ROLE=AGENT pairs" % text)
        role, agent = chunk.split("=", 1)
        out[role.strip()] = agent.strip()
    return out


def _load(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as e:
        raise SystemExit2("cannot read %s: %s" % (path, e.strerror))
    try:
        spec = parse_spec(source)
    except ParseError as e:
        raise SystemExit2("%s: %s" % (path, e))
    return source, spec


class SystemExit2(Exception):
    """Usage-level failure, reported on stderr with exit code 2."""


def _config(spec, args):
    assignments = None
    n = args.sessions
    if args.assign:
        try:
            assignments = [_parse_assignment(a) for a in args.assign]
        except ValueError as e:
            raise SystemExit2(str(e))
        if n is None:
            n = len(assignments)
    if n is None:
        n = 2
    try:
        return make_config(spec, n, assignments,
                           fake_depth=args.fake_depth, max_spawns=args.spawns)
    except ValueError as e:
        raise SystemExit2(str(e))


def _config_dict(config) -> dict:
    return {
        "sessions": config.n,
        "assignments": [[list(pair) for pair in asg] for asg in config.assignments],
        "fake_depth": config.fake_depth,
        "max_spawns": config.max_spawns,
    }


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _active_for(mode: str, prune):
    if mode == "dy":
        return GENERIC
    if mode == "mi":
        return tuple(t for t in ALL_TAGS if t not in prune.removable)
    return ALL_TAGS  # mi-report-only searches unpruned but reports the verdicts


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _table_text(sim) -> str:
    ikt = sim.ikt
    lines = ["passive preliminary run"]
    for ln in sim.narration:
        lines.append("  " + ln)
    lines.append("")
    lines.append("intruder knowledge table (%d steps x %d sessions)" % (ikt.z, ikt.n))
    header = "  step  " + "".join("session %-12d" % b for b in range(1, ikt.n + 1))
    lines.append(header.rstrip())
    for a in range(1, ikt.z + 1):
        cells = []
        for b in range(1, ikt.n + 1):
            e = ikt.entry(a, b)
            if e.recorded:
                cells.append("enc=%d size=%-2d ts=%-3d" % (e.encryption, e.size, e.timestamp))
            else:
                cells.append("(0, 0, 0)           ")
        lines.append("  %4d  %s" % (a, "".join(cells).rstrip()))
    lines.append("")
    lines.append("feasibility:")
    for row in sim.report.log:
        if row["kind"] != "rule":
            continue
        state = "retained " if row["feasible"] else "removable"
        lines.append("  %-4s  %s  %s" % (row["action"], state, row["why"]))
    lines.append("")
    lines.append("removable: %s" % (", ".join(sorted(sim.report.removable)) or "(none)"))
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    _, spec = _load(args.spec)
    config = _config(spec, args)
    sim = mi_simulate(spec, config)
    if args.format == "json":
        body = {
            "table": sim.ikt.to_dict(),
            "removable": sorted(sim.report.removable),
            "retained": sorted(sim.report.retained),
            "rule_log": list(sim.report.log),
            "narration": list(sim.narration),
        }
        _emit(rep.to_json(body), args.out)
    else:
        _emit(_table_text(sim), args.out)
    return 0


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def _run_mode(spec, config, mode, args):
    world, procs = instantiate(spec, config)
    prune = None
    if mode in ("mi", "mi-report-only"):
        prune = mi_simulate(spec, config).report
    active = _active_for(mode, prune)
    result = search(world, procs, active,
                    strategy=args.search, stop=args.stop,
                    max_states=args.max_states, max_depth=args.max_depth)
    return result, prune


def cmd_check(args) -> int:
    source, spec = _load(args.spec)
    config = _config(spec, args)
    result, prune = _run_mode(spec, config, args.intruder, args)
    report = rep.build_report(result, args.intruder, prune)
    _emit(rep.render(report, args.format), args.out)
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write(rep.trace_file(result, source, args.intruder, _config_dict(config)))
    if args.plot:
        _bar_figure({args.intruder: result}, args.plot)
    if result.verdict == "violation":
        return 1
    if result.verdict == "inconclusive":
        return 3
    return 0


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------


def cmd_replay(args) -> int:
    source, spec = _load(args.spec)
    try:
        with open(args.trace, "r", encoding="utf-8") as fh:
            body = rep.load_trace(fh.read(), source)
    except OSError as e:
        raise SystemExit2("cannot read %s: %s" % (args.trace, e.strerror))
    except (ValueError, rep.TraceMismatch) as e:
        raise SystemExit2(str(e))

    cfg = body["config"]
    try:
        config = make_config(spec, cfg["sessions"], cfg["assignments"],
                             fake_depth=cfg["fake_depth"], max_spawns=cfg["max_spawns"])
    except (KeyError, ValueError) as e:
        raise SystemExit2("trace config is unusable: %s" % e)
    world, procs = instantiate(spec, config)
    prune = mi_simulate(spec, config).report if body["mode"] == "mi" else None
    active = _active_for(body["mode"], prune)
    try:
        taken, final, violation = replay(world, procs, body["keys"], active)
    except ReplayError as e:
        raise SystemExit2(str(e))

    lines = ["%2d. %s" % (i, t.text) for i, t in enumerate(taken, 1)]
    if violation:
        lines.append("")
        lines.append(violation.describe())
    _emit("\n".join(lines) + "\n", args.out)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(rep.to_dot(taken))
    return 1 if violation else 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _bar_figure(results: dict, path: str):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    modes = list(results)
    stored = [results[m].stats.stored for m in modes]
    matched = [results[m].stats.matched for m in modes]
    xs = range(len(modes))
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], stored, width, label="states stored")
    ax.bar([x + width / 2 for x in xs], matched, width, label="states matched")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(modes)
    ax.set_ylabel("count")
    ax.set_title("search effort by intruder mode")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_compare(args) -> int:
    _, spec = _load(args.spec)
    config = _config(spec, args)
    results = {}
    prunes = {}
    for mode in ("dy", "mi"):
        results[mode], prunes[mode] = _run_mode(spec, config, mode, args)

    import csv as _csv
    import io as _io
    buf = _io.StringIO()
    w = _csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "verdict", "states_stored", "states_matched",
                "transitions", "max_depth", "error_depth", "pruned_actions"])
    for mode in ("dy", "mi"):
        r = results[mode]
        pruned = " ".join(sorted(prunes[mode].removable)) if prunes[mode] else ""
        w.writerow([mode, r.verdict, r.stats.stored, r.stats.matched,
                    r.stats.transitions, r.stats.max_depth,
                    "" if r.stats.error_depth is None else r.stats.error_depth, pruned])
    dy, mi = results["dy"], results["mi"]
    if mi.stats.stored:
        w.writerow(["stored_ratio_dy_over_mi", "%.3f" % (dy.stats.stored / mi.stats.stored),
                    "", "", "", "", "", ""])
    _emit(buf.getvalue(), args.out)

    if args.plot:
        _bar_figure(results, args.plot)

    if "inconclusive" in (dy.verdict, mi.verdict):
        return 3
    return 0 if dy.verdict == mi.verdict else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="mimcheck",
        description="explicit-state security protocol checker with "
                    "metadata-based pruning of the intruder's attack actions",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="passive run: knowledge table and feasibility verdicts")
    p.add_argument("spec")
    _add_config_opts(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="search the state space for goal violations")
    p.add_argument("spec")
    _add_config_opts(p)
    _add_search_opts(p)
    p.add_argument("--intruder", choices=("dy", "mi", "mi-report-only"), default="mi",
                   help="dy: generic man-in-the-middle; mi: prune infeasible attack "
                        "actions first; mi-report-only: report verdicts, search unpruned")
    p.add_argument("--format", choices=("json", "text", "csv"), default="text")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--trace-out", metavar="FILE", help="write a replayable trace file")
    p.add_argument("--plot", metavar="FILE", help="render a search effort figure")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-execute a recorded trace")
    p.add_argument("spec")
    p.add_argument("trace")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--dot", metavar="FILE", help="write the trace as a DOT graph")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("compare", help="generic vs pruned intruder, delimited summary")
    p.add_argument("spec")
    _add_config_opts(p)
    _add_search_opts(p)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--plot", metavar="FILE", help="render a search effort figure")
    p.set_defaults(func=cmd_compare)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
