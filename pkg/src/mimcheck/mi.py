"""Message inspection: metadata table, similarity, feasibility pruning.

Before any state-space search runs, the protocol is simulated once with the
intruder acting as a passive forwarder. Every intercepted message gets a
metadata entry (encryption class, size, timestamp) keyed by its step and
session coordinates. The filled table is then read against per-action
feasibility rules, and attack actions that cannot work anywhere are removed
from the intruder's repertoire for the real search.

Entries start as all zeros, meaning "never sent", and may be written once.
A message that is fully encrypted but whose inverse key the intruder holds
is recorded with encryption class 0: it is an open book despite the wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .intruder import (
    ALL_TAGS,
    A1_1,
    A1_2,
    A1_3,
    A2,
    A3,
    A4,
    A5,
    AtomTerm,
    InterceptRecord,
    Knowledge,
    closure,
    intercept,
)
from .protocol import ProtocolSpec, SessionConfig, World, construct_term, instantiate, match_receive
from .terms import Enc, Term, encryption_class, size_of, subterms, term_str


class IktError(Exception):
    pass


@dataclass(frozen=True)
class MetadataEntry:
    encryption: int = 0
    size: int = 0
    timestamp: int = 0
    recorded: bool = False

    def __post_init__(self):
        if self.recorded and self.timestamp < 1:
            raise ValueError("recorded entries carry a positive timestamp")
        if not self.recorded and (self.encryption or self.size or self.timestamp):
            raise ValueError("unrecorded entries are all zero")

    def as_tuple(self):
        return (self.encryption, self.size, self.timestamp)


UNRECORDED = MetadataEntry()


def compare_entries(p: MetadataEntry, q: MetadataEntry) -> bool:
    """Similarity of two recorded entries: any metadata component matches.

    Timestamps are deliberately left out: every interception gets a unique
    one, so including them would make no two entries ever similar. The
    relation is reflexive and symmetric but not transitive."""
    if not (p.recorded and q.recorded):
        raise ValueError("similarity is only defined on recorded entries")
    return p.encryption == q.encryption or p.size == q.size


class IktTable:
    """z-by-n metadata table, one entry per (step, session), write-once."""

    def __init__(self, z: int, n: int, entries=None):
        if z < 1 or n < 1:
            raise ValueError("table dimensions must be positive")
        self.z = z
        self.n = n
        if entries is None:
            entries = tuple(tuple(UNRECORDED for _ in range(n)) for _ in range(z))
        self.entries = entries

    def entry(self, a: int, b: int) -> MetadataEntry:
        if not (1 <= a <= self.z and 1 <= b <= self.n):
            raise IktError("coordinates (%d, %d) outside a %dx%d table" % (a, b, self.z, self.n))
        return self.entries[a - 1][b - 1]

    def recorded_coords(self):
        return [
            (a, b)
            for b in range(1, self.n + 1)
            for a in range(1, self.z + 1)
            if self.entry(a, b).recorded
        ]

    def record(self, a: int, b: int, msg: Term, kn: Knowledge, ts: int) -> "IktTable":
        """Write the metadata of msg at (a, b), returning the grown table.

        Writing twice, or recording step a before step a-1 of the same
        session, violates the prefix discipline and raises IktError."""
        if self.entry(a, b).recorded:
            raise IktError("entry (%d, %d) already recorded" % (a, b))
        if a > 1 and not self.entry(a - 1, b).recorded:
            raise IktError("step %d of session %d recorded before step %d" % (a, b, a - 1))
        enc = encryption_class(msg)
        if enc == 2 and AtomTerm(msg.key.inverse_handle) in closure(kn):
            enc = 0  # fully encrypted, but the intruder holds the inverse key
        entry = MetadataEntry(enc, size_of(msg), ts, True)
        rows = [list(r) for r in self.entries]
        rows[a - 1][b - 1] = entry
        return IktTable(self.z, self.n, tuple(tuple(r) for r in rows))

    def check_zero_suffix(self):
        """Each column is a recorded prefix followed by an all-zero suffix."""
        for b in range(1, self.n + 1):
            seen_gap = False
            for a in range(1, self.z + 1):
                if not self.entry(a, b).recorded:
                    seen_gap = True
                elif seen_gap:
                    raise IktError("column %d has a recorded entry after a gap" % b)

    def to_dict(self):
        return {
            "z": self.z,
            "n": self.n,
            "entries": [
                [
                    {
                        "encryption": e.encryption,
                        "size": e.size,
                        "timestamp": e.timestamp,
                        "recorded": e.recorded,
                    }
                    for e in row
                ]
                for row in self.entries
            ],
        }


@dataclass(frozen=True)
class PruneReport:
    removable: frozenset
    retained: frozenset
    log: tuple

    def to_dict(self):
        return {
            "removable": sorted(self.removable),
            "retained": sorted(self.retained),
            "log": list(self.log),
        }


def _stored_term(kn: Knowledge, a: int, b: int) -> Term:
    for r in kn.records:
        if r.step == a and r.session == b:
            return r.term
    raise KeyError((a, b))


def evaluate_rules(ikt: IktTable, kn: Knowledge) -> PruneReport:
    """Apply the feasibility rules to a filled table.

    A tag is retained when at least one recorded entry makes it feasible;
    a tag that is infeasible at every step is removable. Unrecorded entries
    never enable anything. The log keeps every pairwise comparison made and
    one verdict row per tag."""
    coords = ikt.recorded_coords()
    log: list[dict] = []

    def similar(l, r):
        res = compare_entries(ikt.entry(*l), ikt.entry(*r))
        return res

    # comparison sweep: initiation pattern, cross-session, within-session
    for i, l in enumerate(coords):
        for r in coords[i + 1:]:
            a, b = l
            c, d = r
            if a == 1 and c == 1 and b != d:
                purpose = "new-session initiation (A4/A5)"
            elif a == c and b != d:
                purpose = "same step across sessions (A5)"
            elif b == d:
                purpose = "within session (A1 replay, A3 size rule)"
            else:
                purpose = "cross-session type flaw (A3)"
            log.append({
                "kind": "compare",
                "left": [a, b],
                "right": [c, d],
                "similar": similar(l, r),
                "purpose": purpose,
            })

    atoms = [t.atom for t in closure(kn) if isinstance(t, AtomTerm)]
    feasible: dict[str, bool] = {}
    why: dict[str, str] = {}

    any_recorded = bool(coords)
    for tag in (A1_1, A1_2, A1_3, A4, A5):
        feasible[tag] = any_recorded
        why[tag] = (
            "stored messages exist to replay" if any_recorded else "nothing was ever intercepted"
        )

    a2_hits = [c for c in coords if ikt.entry(*c).encryption in (0, 1)]
    feasible[A2] = bool(a2_hits)
    why[A2] = (
        "message at %s is readable (encryption %d)"
        % (a2_hits[0], ikt.entry(*a2_hits[0]).encryption)
        if a2_hits
        else "every recorded message is fully encrypted"
    )

    a3_why = "no readable subterm matches a known atom size and no same-session sizes repeat"
    a3 = False
    for c in coords:
        e = ikt.entry(*c)
        if e.encryption == 2:
            continue
        msg = _stored_term(kn, *c)
        for m in subterms(msg):
            hit = next((at for at in atoms if at.size_class == size_of(m)), None)
            if hit is not None:
                a3 = True
                a3_why = (
                    "readable message at %s has a part of size %d matching known atom %s"
                    % (c, size_of(m), hit.ident)
                )
                break
        if a3:
            break
    if not a3:
        for (a, b) in coords:
            for (c, d) in coords:
                if b == d and a < c and ikt.entry(a, b).size == ikt.entry(c, d).size:
                    a3 = True
                    a3_why = "steps %d and %d of session %d have equal size %d" % (
                        a, c, b, ikt.entry(a, b).size,
                    )
                    break
            if a3:
                break
    feasible[A3] = a3
    why[A3] = a3_why

    for tag in ALL_TAGS:
        log.append({
            "kind": "rule",
            "action": tag,
            "feasible": feasible[tag],
            "why": why[tag],
        })

    removable = frozenset(t for t in ALL_TAGS if not feasible[t])
    retained = frozenset(ALL_TAGS) - removable
    return PruneReport(removable=removable, retained=retained, log=tuple(log))


@dataclass
class SimulationResult:
    ikt: IktTable
    report: PruneReport
    knowledge: Knowledge
    world: World
    narration: tuple


def mi_simulate(spec: ProtocolSpec, config: SessionConfig) -> SimulationResult:
    """The preliminary passive phase: run sessions one after another with the
    intruder forwarding every message untouched, recording metadata as it
    goes. Sessions whose next sender or receiver has no honest process stop
    early and leave their remaining column entries zero."""
    world, procs = instantiate(spec, config)
    by_session: dict[int, dict] = {}
    for p in procs:
        by_session.setdefault(p.session, {})[p.role] = p

    kn = Knowledge(world.initial_knowledge)
    ikt = IktTable(spec.z, config.n)
    lines = []

    for session in range(1, config.n + 1):
        roles = by_session.get(session, {})
        asg = config.assignment(session)
        for step in spec.steps:
            sender = roles.get(step.sender)
            if sender is None:
                lines.append("session %d stops before step %d: no honest %s"
                             % (session, step.index, step.sender))
                break
            msg = construct_term(step.pattern, dict(sender.bindings), world)
            recipient_agent = asg[step.recipient]
            kn = intercept(kn, msg, step.index, session, sender.agent, recipient_agent)
            ikt = ikt.record(step.index, session, msg, kn, kn.last_ts())
            roles[step.sender] = replace(sender, pc=sender.pc + 1)
            lines.append("%d.%d %s -> %s : %s" % (session, step.index, sender.agent,
                                                  recipient_agent, term_str(msg)))
            receiver = roles.get(step.recipient)
            if receiver is None:
                lines.append("session %d stops after step %d: recipient is the intruder"
                             % (session, step.index))
                break
            new_bindings = match_receive(step.pattern, msg, receiver, world)
            if new_bindings is None:
                lines.append("session %d stops: %s rejected step %d" % (session, receiver.agent, step.index))
                break
            roles[step.recipient] = replace(
                receiver, pc=receiver.pc + 1,
                bindings=tuple(sorted(new_bindings.items())),
            )

    ikt.check_zero_suffix()
    report = evaluate_rules(ikt, kn)
    return SimulationResult(ikt=ikt, report=report, knowledge=kn, world=world,
                            narration=tuple(lines))
