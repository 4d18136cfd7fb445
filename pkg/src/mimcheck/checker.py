"""Explicit-state search over protocol runs under an active intruder.

A global state is the tuple of role processes (program counter, bindings,
fail-stop flag), the intruder's interception records, the single in-flight
delivery slot, and the spawn budget already spent. Honest sends go straight
into the intruder's store: interception is synchronous. Getting a message to
an agent always takes an intruder action, which places a payload in the slot;
the forced follow-up transition lets the target consume it, either advancing
its script or fail-stopping it for good. Plain forwarding is just the replay
action aimed at the intended recipient.

Violations:

  secrecy   a declared secret nonce becomes derivable from the intruder store
  agreement a process completes its role attributing the session to some
            honest agent who never ran a matching role instance in that very
            session with the same nonce values

The second reading is deliberately session-bound: replaying a genuine first
message into a fresh responder instance creates a session its alleged
initiator never took part in, which is exactly the impersonation pattern the
search is meant to surface.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .intruder import (
    ActionInstance,
    Knowledge,
    SlotInfo,
    closure,
    enumerate_actions,
    generic_actions,
    intercept,
)
from .protocol import (
    COMPLETED,
    FAILED,
    RUNNING,
    PatCat,
    PatEnc,
    ProcState,
    World,
    construct_term,
    match_receive,
)
from .terms import AtomTerm, Term, term_str

#: sentinel for the generic Dolev-Yao intruder (no action-tag structure)
GENERIC = "generic"


@dataclass(frozen=True)
class Delivery:
    """An in-flight payload. The tag names the attack action that produced
    it; two deliveries of the same payload to the same slot are the same
    state no matter which action placed them, so the tag stays out of
    equality."""

    payload: Term
    slot: SlotInfo
    tag: str = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_h", hash((self.payload, self.slot)))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class GlobalState:
    procs: tuple
    records: tuple
    slot: Optional[Delivery]
    spawns_used: int

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(
            (self.procs, self.records, self.slot, self.spawns_used)
        ))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Transition:
    kind: str  # "send" | "attack" | "deliver"
    key: tuple
    text: str


@dataclass(frozen=True)
class Violation:
    kind: str  # "secrecy" | "agreement"
    victim_agent: str
    victim_role: str
    session: int
    claimed_peer: Optional[str]
    values: tuple  # ((variable, atom ident), ...)

    def fingerprint(self):
        return (
            self.kind,
            self.victim_agent,
            self.claimed_peer or "",
            tuple(sorted(ident for _, ident in self.values)),
        )

    def describe(self) -> str:
        vals = ", ".join("%s=%s" % (v, i) for v, i in self.values)
        if self.kind == "secrecy":
            return "secrecy violated: intruder derived %s" % vals
        return (
            "agreement violated: %s (as %s, session %d) attributes the run to %s, "
            "who never ran a matching instance [%s]"
            % (self.victim_agent, self.victim_role, self.session, self.claimed_peer, vals)
        )


@dataclass
class SearchStats:
    stored: int = 0
    matched: int = 0
    transitions: int = 0
    max_depth: int = 0
    error_depth: Optional[int] = None
    deadlocks: int = 0
    wall_time: float = 0.0


@dataclass
class SearchResult:
    verdict: str  # "violation" | "no-violation" | "inconclusive"
    stats: SearchStats
    violation: Optional[Violation]
    counterexample: tuple
    fingerprints: tuple
    cap_hit: Optional[str] = None


class ReplayError(Exception):
    pass


def initial_state(procs) -> GlobalState:
    return GlobalState(procs=tuple(procs), records=(), slot=None, spawns_used=0)


def _proc_event(world: World, p: ProcState):
    events = world.scripts[p.role]
    return events[p.pc] if p.pc < len(events) else None


def _advance(world: World, p: ProcState, bindings=None) -> ProcState:
    new = replace(p, pc=p.pc + 1)
    if bindings is not None:
        new = replace(new, bindings=tuple(sorted(bindings.items())))
    if new.pc >= len(world.scripts[new.role]):
        new = replace(new, status=COMPLETED)
    return new


def _pattern_shape(pattern, resolve):
    """Outer shape of a receive pattern: expected key (if the root is an
    encryption whose owner is resolvable) and the arity underneath."""
    if isinstance(pattern, PatEnc):
        key = resolve(pattern.key_fn, pattern.key_role)
        inner = pattern.body
        arity = len(inner.parts) if isinstance(inner, PatCat) else 1
        return key, arity
    arity = len(pattern.parts) if isinstance(pattern, PatCat) else 1
    return None, arity


def ready_slots(state: GlobalState, world: World) -> list:
    slots = []
    for idx, p in enumerate(state.procs):
        if p.status != RUNNING:
            continue
        ev = _proc_event(world, p)
        if ev is None or ev[0] != "recv":
            continue
        step = ev[1]

        def resolve(fn, role, p=p):
            bound = p.binding(role)
            if bound is None:
                return None
            agent = bound.atom.ident
            return world.pubkeys[agent] if fn == "pk" else world.privkeys[agent]

        key, arity = _pattern_shape(step.pattern, resolve)
        slots.append(SlotInfo("proc", idx, p.agent, p.session, key, arity))
    if state.spawns_used < world.config.max_spawns:
        for role in world.spawnable_roles:
            step = world.scripts[role][0][1]
            for agent in world.spec.agents:

                def resolve(fn, key_role, role=role, agent=agent):
                    if key_role != role:
                        return None
                    return world.pubkeys[agent] if fn == "pk" else world.privkeys[agent]

                key, arity = _pattern_shape(step.pattern, resolve)
                slots.append(SlotInfo("spawn", (agent, role), agent, 0, key, arity))
    return slots


def _slot_desc(slot: SlotInfo) -> str:
    if slot.kind == "proc":
        return "proc[%s]" % (slot.target,)
    agent, role = slot.target
    return "spawn[%s as %s]" % (agent, role)


def successors(state: GlobalState, world: World, active) -> list:
    """Ordered successor list. A pending delivery forces its consumption.
    Otherwise intruder deliveries of stored material come first, then honest
    sends by process index, then (generic mode only) the composed-fake flood:
    replays are the moves that go somewhere, fakes mostly fail-stop their
    target, and a depth-first search benefits from meeting them in that
    order."""
    if state.slot is not None:
        return [_consume(state, world)]

    kn = Knowledge(world.initial_knowledge, state.records)
    slots = ready_slots(state, world)
    if active == GENERIC:
        actions = generic_actions(kn, slots, world.config.fake_depth)
    else:
        actions = enumerate_actions(kn, active, slots, world.config.fake_depth)

    placements = []
    for act in actions:
        spawned = 1 if act.slot.kind == "spawn" else 0
        nxt = replace(
            state,
            slot=Delivery(act.payload, act.slot, act.tag),
            spawns_used=state.spawns_used + spawned,
        )
        text = "intruder (%s) -> %s : %s" % (act.tag, _slot_desc(act.slot), term_str(act.payload))
        key = ("attack", act.tag, term_str(act.payload), _slot_desc(act.slot))
        placements.append((act.payload_ts, Transition("attack", key, text), nxt))

    sends = []
    for idx, p in enumerate(state.procs):
        if p.status != RUNNING:
            continue
        ev = _proc_event(world, p)
        if ev is None or ev[0] != "send":
            continue
        step = ev[1]
        msg = construct_term(step.pattern, dict(p.bindings), world)
        recipient = p.binding(step.recipient)
        if recipient is None:
            raise RuntimeError("unbound recipient %s in %s" % (step.recipient, p.role))
        kn2 = intercept(kn, msg, step.index, p.session, p.agent, recipient.atom.ident)
        procs = list(state.procs)
        procs[idx] = _advance(world, p)
        nxt = replace(state, procs=tuple(procs), records=kn2.records)
        text = "%s -> (%s) : %s   [step %d, session %d, intercepted]" % (
            p.agent, recipient.atom.ident, term_str(msg), step.index, p.session,
        )
        sends.append((Transition("send", ("send", idx), text), nxt))

    replays = [(tr, st) for ts, tr, st in placements if ts > 0]
    fakes = [(tr, st) for ts, tr, st in placements if ts == 0]
    return replays + sends + fakes


def _consume(state: GlobalState, world: World):
    d = state.slot
    procs = list(state.procs)
    if d.slot.kind == "spawn":
        agent, role = d.slot.target
        session = world.config.n + sum(1 for p in procs if p.session > world.config.n) + 1
        proc = world.spawn_process(session, role, agent)
        step = world.scripts[role][0][1]
        bindings = match_receive(step.pattern, d.payload, proc, world)
        if bindings is None:
            proc = replace(proc, status=FAILED)
            text = "%s rejects the session opener and halts" % agent
        else:
            proc = _advance(world, proc, bindings)
            text = "%s accepts a new session %d as %s" % (agent, session, role)
        procs.append(proc)
    else:
        idx = d.slot.target
        p = procs[idx]
        ev = _proc_event(world, p)
        assert ev is not None and ev[0] == "recv"
        step = ev[1]
        bindings = match_receive(step.pattern, d.payload, p, world)
        if bindings is None:
            procs[idx] = replace(p, status=FAILED)
            text = "%s rejects step %d of session %d and halts" % (p.agent, step.index, p.session)
        else:
            procs[idx] = _advance(world, p, bindings)
            text = "%s accepts step %d of session %d" % (p.agent, step.index, p.session)
    nxt = replace(state, procs=tuple(procs), slot=None)
    return (Transition("deliver", ("deliver",), text), nxt)


# ---------------------------------------------------------------------------
# Violations
# ---------------------------------------------------------------------------


def violations(state: GlobalState, world: World) -> list:
    """Every goal violated in this state, deterministically ordered."""
    found = []
    spec = world.spec
    kn = Knowledge(world.initial_knowledge, state.records)
    known = closure(kn)

    sessions = sorted({p.session for p in state.procs})
    for var in spec.secrets:
        decl = world.nonce_decl[var]
        for session in sessions:
            atom = world.nonce_atom(var, session)
            if AtomTerm(atom) not in known:
                continue
            owner = next(
                (p.agent for p in state.procs if p.session == session and p.role == decl.role),
                "",
            )
            found.append(Violation(
                kind="secrecy",
                victim_agent=owner,
                victim_role=decl.role,
                session=session,
                claimed_peer=None,
                values=((var, atom.ident),),
            ))

    for agr in spec.agreements:
        for p in state.procs:
            if p.role != agr.claimant or p.status != COMPLETED:
                continue
            peer_binding = p.binding(agr.peer)
            if peer_binding is None:
                continue
            claimed = peer_binding.atom.ident
            if claimed == spec.intruder:
                continue  # talking to the intruder as itself is no deception
            wanted = [(v, p.binding(v)) for v in agr.variables]
            if any(val is None for _, val in wanted):
                continue
            matched = False
            for q in state.procs:
                if q.session != p.session or q.role != agr.peer or q.agent != claimed:
                    continue
                if all(q.binding(v) == val for v, val in wanted):
                    matched = True
                    break
            if not matched:
                found.append(Violation(
                    kind="agreement",
                    victim_agent=p.agent,
                    victim_role=p.role,
                    session=p.session,
                    claimed_peer=claimed,
                    values=tuple(
                        (v, val.atom.ident if isinstance(val, AtomTerm) else term_str(val))
                        for v, val in wanted
                    ),
                ))
    return found


def is_violation(state: GlobalState, world: World) -> Optional[Violation]:
    vs = violations(state, world)
    return vs[0] if vs else None


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def search(world: World, procs, active, strategy: str = "dfs", stop: str = "first-error",
           max_states: int = 1_000_000, max_depth: int = 10_000) -> SearchResult:
    """Explore the reachable global states.

    strategy is dfs or bfs, stop is first-error or exhaustive. Exhaustive
    runs collect the fingerprints of every violating state reached. Blowing
    a cap yields the distinct verdict "inconclusive" rather than a hollow
    "no-violation"."""
    if strategy not in ("dfs", "bfs"):
        raise ValueError("strategy must be dfs or bfs")
    if stop not in ("first-error", "exhaustive"):
        raise ValueError("stop must be first-error or exhaustive")

    t0 = time.perf_counter()
    stats = SearchStats()
    init = initial_state(procs)
    visited = {init}
    parents: dict = {init: None}
    stats.stored = 1
    stats.transitions = 1

    fingerprints = set()
    first_violation: Optional[Violation] = None
    first_trace: tuple = ()
    cap_hit = None
    truncated = False

    v0 = is_violation(init, world)
    if v0 is not None:
        stats.error_depth = 0
        stats.wall_time = time.perf_counter() - t0
        return SearchResult("violation", stats, v0, (), (v0.fingerprint(),))

    frontier = deque([(init, 0)])

    def trace_of(state) -> tuple:
        out = []
        cur = state
        while parents[cur] is not None:
            parent, tr = parents[cur]
            out.append(tr)
            cur = parent
        return tuple(reversed(out))

    while frontier:
        if strategy == "bfs":
            state, depth = frontier.popleft()
        else:
            state, depth = frontier.pop()
        if depth >= max_depth:
            truncated = True
            continue
        succ = successors(state, world, active)
        if not succ:
            if any(p.status == RUNNING for p in state.procs):
                stats.deadlocks += 1
            continue
        if strategy == "dfs":
            succ = list(reversed(succ))
        for tr, child in succ:
            stats.transitions += 1
            if child in visited:
                stats.matched += 1
                continue
            visited.add(child)
            stats.stored += 1
            parents[child] = (state, tr)
            cdepth = depth + 1
            stats.max_depth = max(stats.max_depth, cdepth)
            vs = violations(child, world)
            if vs:
                if first_violation is None:
                    first_violation = vs[0]
                    first_trace = trace_of(child)
                    stats.error_depth = cdepth
                for v in vs:
                    fingerprints.add(v.fingerprint())
                if stop == "first-error":
                    stats.wall_time = time.perf_counter() - t0
                    return SearchResult(
                        "violation", stats, first_violation, first_trace,
                        tuple(sorted(fingerprints)),
                    )
            if stats.stored > max_states:
                cap_hit = "states"
                frontier.clear()
                break
            frontier.append((child, cdepth))

    stats.wall_time = time.perf_counter() - t0
    if cap_hit or (truncated and first_violation is None):
        return SearchResult("inconclusive", stats, first_violation, first_trace,
                            tuple(sorted(fingerprints)), cap_hit=cap_hit or "depth")
    if first_violation is not None:
        return SearchResult("violation", stats, first_violation, first_trace,
                            tuple(sorted(fingerprints)))
    return SearchResult("no-violation", stats, None, (), ())


def replay(world: World, procs, keys, active) -> tuple:
    """Re-execute a recorded transition-key list from the initial state.

    Returns (transitions taken, final state, violation or None). A key that
    no current successor carries means the trace does not belong to this spec
    and configuration; that raises ReplayError."""
    state = initial_state(procs)
    taken = []
    for i, key in enumerate(keys):
        key = tuple(key)
        match = None
        for tr, child in successors(state, world, active):
            if tr.key == key:
                match = (tr, child)
                break
        if match is None:
            raise ReplayError("trace diverges at transition %d: %r" % (i + 1, key))
        tr, state = match
        taken.append(tr)
    return taken, state, is_violation(state, world)
