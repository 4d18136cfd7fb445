"""Serialization of check results: JSON reports, delimited summaries, trace
files, and a DOT rendering of a counterexample.

Reports are built from plain dicts with a fixed key order and serialized with
sort_keys, so two runs over the same inputs produce byte-identical output.
Wall-clock time is deliberately kept out of every serialized form. Trace
files embed a hash of the protocol source so a replay against an edited spec
is refused instead of silently diverging.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from typing import Optional

from .checker import SearchResult, Transition, Violation
from .mi import PruneReport


def spec_digest(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def violation_dict(v: Violation) -> dict:
    return {
        "kind": v.kind,
        "victim_agent": v.victim_agent,
        "victim_role": v.victim_role,
        "session": v.session,
        "claimed_peer": v.claimed_peer,
        "values": [[name, ident] for name, ident in v.values],
    }


def build_report(result: SearchResult, mode: str, prune: Optional[PruneReport] = None) -> dict:
    stats = result.stats
    report = {
        "mode": mode,
        "verdict": result.verdict,
        "states_stored": stats.stored,
        "states_matched": stats.matched,
        "transitions": stats.transitions,
        "max_depth": stats.max_depth,
        "error_depth": stats.error_depth,
        "deadlocks": stats.deadlocks,
        "cap_hit": result.cap_hit,
        "pruned_actions": sorted(prune.removable) if prune else [],
        "rule_log": list(prune.log) if prune else [],
        "violation": violation_dict(result.violation) if result.violation else None,
        "fingerprints": [list(fp[:3]) + [list(fp[3])] for fp in result.fingerprints],
        "counterexample": [
            {"kind": t.kind, "key": list(t.key), "text": t.text}
            for t in result.counterexample
        ],
    }
    return report


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def to_text(report: dict) -> str:
    lines = []
    lines.append("verdict:        %s" % report["verdict"])
    lines.append("mode:           %s" % report["mode"])
    lines.append("states stored:  %d" % report["states_stored"])
    lines.append("states matched: %d" % report["states_matched"])
    lines.append("transitions:    %d" % report["transitions"])
    lines.append("max depth:      %d" % report["max_depth"])
    if report["error_depth"] is not None:
        lines.append("error depth:    %d" % report["error_depth"])
    if report["cap_hit"]:
        lines.append("cap hit:        %s" % report["cap_hit"])
    if report["pruned_actions"]:
        lines.append("pruned actions: %s" % ", ".join(report["pruned_actions"]))
    v = report["violation"]
    if v:
        if v["kind"] == "secrecy":
            vals = ", ".join("%s=%s" % (a, b) for a, b in v["values"])
            lines.append("violation:      secrecy of %s" % vals)
        else:
            lines.append(
                "violation:      %s as %s (session %d) deceived about %s"
                % (v["victim_agent"], v["victim_role"], v["session"], v["claimed_peer"])
            )
    if report["counterexample"]:
        lines.append("")
        lines.append("counterexample:")
        for i, tr in enumerate(report["counterexample"], 1):
            lines.append("  %2d. %s" % (i, tr["text"]))
    return "\n".join(lines) + "\n"


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "value"])
    for key in ("mode", "verdict", "states_stored", "states_matched",
                "transitions", "max_depth", "error_depth", "deadlocks", "cap_hit"):
        writer.writerow([key, "" if report[key] is None else report[key]])
    writer.writerow(["pruned_actions", " ".join(report["pruned_actions"])])
    return buf.getvalue()


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "text":
        return to_text(report)
    if fmt == "csv":
        return to_csv(report)
    raise ValueError("unknown format %r" % fmt)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------


def trace_file(result: SearchResult, source: str, mode: str, config_args: dict) -> str:
    body = {
        "spec_sha256": spec_digest(source),
        "mode": mode,
        "config": config_args,
        "verdict": result.verdict,
        "keys": [list(t.key) for t in result.counterexample],
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


class TraceMismatch(Exception):
    pass


def load_trace(text: str, source: str) -> dict:
    body = json.loads(text)
    for field in ("spec_sha256", "mode", "config", "keys"):
        if field not in body:
            raise TraceMismatch("trace file missing %r" % field)
    want = spec_digest(source)
    if body["spec_sha256"] != want:
        raise TraceMismatch(
            "trace was recorded against a different protocol source "
            "(%s... != %s...)" % (body["spec_sha256"][:12], want[:12])
        )
    return body


# ---------------------------------------------------------------------------
# DOT rendering of a counterexample
# ---------------------------------------------------------------------------


def to_dot(transitions) -> str:
    lines = ["digraph trace {", "  rankdir=TB;", '  node [shape=box, fontname="monospace"];']
    prev = "s0"
    lines.append('  s0 [label="initial"];')
    for i, tr in enumerate(transitions, 1):
        node = "s%d" % i
        text = tr.text if isinstance(tr, Transition) else tr["text"]
        kind = tr.kind if isinstance(tr, Transition) else tr["kind"]
        label = text.replace("\\", "\\\\").replace('"', '\\"')
        color = {"send": "black", "attack": "red", "deliver": "blue"}.get(kind, "black")
        lines.append('  %s [label="%s"];' % (node, label))
        lines.append("  %s -> %s [color=%s];" % (prev, node, color))
        prev = node
    lines.append("}")
    return "\n".join(lines) + "\n"
