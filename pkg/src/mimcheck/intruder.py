"""The man-in-the-middle intruder: knowledge, deduction, attack actions.

Every message an honest agent sends is intercepted and stored together with
its coordinates (step, session, sender, intended recipient) and a strictly
increasing timestamp. From its store the intruder derives terms by
decomposing concatenations, opening ciphertexts whose inverse key it holds,
and composing new terms up to a configured depth.

Attack actions come in seven kinds:

  A1_1  replay a stored message to a participant that neither sent nor was
        meant to receive it
  A1_2  replay a stored message back to its sender
  A1_3  send a stored message on to its intended recipient (plain forwarding
        is the special case of delivering the newest one)
  A2    deliver an altered version of a stored message: replace a readable
        part, replace the whole readable message, or extend it by
        concatenation; only messages that are not fully encrypted qualify
  A3    deliver a type-flaw variant: splice a stored equal-size part into a
        readable position, or replay an earlier same-session message whose
        size matches a later one
  A4    open a new session at some agent by replaying a stored first-step
        message, impersonating its original sender
  A5    open a new session with any stored message, or inject a stored
        message into a live session; injected material must not be newer
        than the last message intercepted in the attacked session

A generic Dolev-Yao intruder is also provided: it delivers any stored
message anywhere and floods targets with composed fakes, never consulting
inspection metadata. The search uses it as the unpruned baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .terms import (
    AtomKind,
    AtomTerm,
    Concat,
    Enc,
    Key,
    Term,
    canon,
    cat,
    encryption_class,
    size_of,
    sort_key,
    subterms,
)

# attack-action tags, in deterministic enumeration order
A1_1, A1_2, A1_3, A2, A3, A4, A5 = "A1_1", "A1_2", "A1_3", "A2", "A3", "A4", "A5"
ALL_TAGS = (A1_1, A1_2, A1_3, A2, A3, A4, A5)
TAG_RANK = {t: i for i, t in enumerate(ALL_TAGS)}


@dataclass(frozen=True)
class InterceptRecord:
    ts: int
    step: int
    session: int
    sender: str
    recipient: str
    term: Term

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(
            (self.ts, self.step, self.session, self.sender, self.recipient, self.term)
        ))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class Knowledge:
    """Monotone intruder store: initial terms plus interception records."""

    base: frozenset
    records: tuple[InterceptRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "_h", hash((self.base, self.records)))

    def __hash__(self):
        return self._h

    def last_ts(self) -> int:
        return self.records[-1].ts if self.records else 0

    def session_last_ts(self, session: int) -> int:
        ts = 0
        for r in self.records:
            if r.session == session:
                ts = r.ts
        return ts

    def has_coordinates(self, step: int, session: int) -> bool:
        return any(r.step == step and r.session == session for r in self.records)


def intercept(kn: Knowledge, term: Term, step: int, session: int,
              sender: str, recipient: str) -> Knowledge:
    """Store a sent message. Duplicate (step, session) coordinates are a
    contract violation: each step of each session is sent at most once."""
    if kn.has_coordinates(step, session):
        raise ValueError("message at step %d of session %d intercepted twice" % (step, session))
    term = canon(term)
    rec = InterceptRecord(kn.last_ts() + 1, step, session, sender, recipient, term)
    base = set(kn.base)
    base.add(term)
    probe = Knowledge(frozenset(base), kn.records + (rec,))
    if isinstance(term, Enc) and AtomTerm(term.key.inverse_handle) in closure(probe):
        base.add(canon(term.body))
    return Knowledge(frozenset(base), kn.records + (rec,))


@lru_cache(maxsize=65536)
def closure(kn: Knowledge) -> frozenset:
    """Decomposition saturation: split concatenations, open every ciphertext
    whose inverse key is (or becomes) available. Terminates because parts
    shrink."""
    known = set(kn.base)
    for r in kn.records:
        known.add(r.term)
    changed = True
    while changed:
        changed = False
        for t in list(known):
            if isinstance(t, Concat):
                for p in t.parts:
                    if p not in known:
                        known.add(p)
                        changed = True
            elif isinstance(t, Enc):
                if AtomTerm(t.key.inverse_handle) in known and t.body not in known:
                    known.add(t.body)
                    changed = True
    return frozenset(known)


@lru_cache(maxsize=65536)
def derivable_atoms(kn: Knowledge) -> tuple[AtomTerm, ...]:
    return tuple(sorted(
        (t for t in closure(kn) if isinstance(t, AtomTerm)),
        key=sort_key,
    ))


def can_derive(kn: Knowledge, goal: Term, depth: int = 2) -> bool:
    """Bounded deduction: saturate downward, then compose at most `depth`
    layers upward (a concatenation or an encryption each cost one layer)."""
    known = closure(kn)

    def derive(t: Term, d: int) -> bool:
        if t in known:
            return True
        if d <= 0:
            return False
        if isinstance(t, Concat):
            return all(derive(p, d - 1) for p in t.parts)
        if isinstance(t, Enc):
            return AtomTerm(t.key.handle) in known and derive(t.body, d - 1)
        return False

    return derive(canon(goal), depth)


# ---------------------------------------------------------------------------
# Attack-action enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlotInfo:
    """A receive slot the intruder may target.

    For existing processes target is the process index; for spawn slots it is
    (agent, role) of the responder instance an initiation would create.
    expected_key/inner_arity describe the outer shape of the awaited pattern,
    which the generic intruder uses to aim its fakes.
    """

    kind: str  # "proc" | "spawn"
    target: object
    agent: str
    session: int
    expected_key: Optional[Key]
    inner_arity: int

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(
            (self.kind, self.target, self.agent, self.session,
             self.expected_key, self.inner_arity)
        ))

    def __hash__(self):
        return self._h


@dataclass(frozen=True)
class ActionInstance:
    tag: str
    payload: Term
    payload_ts: int  # 0 when the payload was composed rather than stored
    slot: SlotInfo

    def sort_token(self):
        return (TAG_RANK.get(self.tag, len(ALL_TAGS)), self.payload_ts,
                sort_key(self.payload), self.slot.kind, str(self.slot.target))


def _proc_slots(slots):
    return [s for s in slots if s.kind == "proc"]


def _spawn_slots(slots):
    return [s for s in slots if s.kind == "spawn"]


def _reads(slot: SlotInfo, payload: Term) -> bool:
    return (
        isinstance(payload, Enc)
        and slot.expected_key is not None
        and payload.key == slot.expected_key
    )


def _aimed(slots, payload: Term):
    """Delivery order for one payload: targets that can actually open it
    first (new sessions before live ones, committing early), blind targets
    last, with blind session openers at the very end since they only burn
    the spawn budget."""
    def rank(pair):
        i, s = pair
        if _reads(s, payload):
            return (0, 0 if s.kind == "spawn" else 1, i)
        return (1, 1 if s.kind == "spawn" else 0, i)

    return [s for _, s in sorted(enumerate(slots), key=rank)]


def _replacement_positions(term: Term):
    """Readable positions of a not-fully-encrypted message: the top-level
    parts of a concatenation, or the whole term itself."""
    if isinstance(term, Concat):
        return [(i, p) for i, p in enumerate(term.parts)]
    return [(-1, term)]


def _substitute(term: Term, pos: int, new: Term) -> Term:
    if pos < 0:
        return new
    assert isinstance(term, Concat)
    parts = list(term.parts)
    parts[pos] = new
    return cat(*parts)


def _a2_payloads(record: InterceptRecord, kn: Knowledge, fake_depth: int):
    """Altered variants of a readable message: part replacement by derivable
    material, and extension by concatenation."""
    atoms = derivable_atoms(kn)
    stored = [r.term for r in kn.records]
    candidates = list(atoms)
    candidates += [t for t in stored if t not in candidates]
    out = []
    for pos, orig in _replacement_positions(record.term):
        for c in candidates:
            if c == orig:
                continue
            fake = canon(_substitute(record.term, pos, c))
            if fake != record.term and fake not in out:
                out.append(fake)
    if fake_depth >= 1:
        for c in atoms:
            fake = canon(cat(record.term, c))
            if fake not in out:
                out.append(fake)
    return out


def _a3_part_payloads(record: InterceptRecord, kn: Knowledge):
    """Type-flaw splices: swap a readable part for a stored part of the same
    size."""
    stored_parts = sorted(closure(kn), key=sort_key)
    out = []
    for pos, orig in _replacement_positions(record.term):
        want = size_of(orig)
        for c in stored_parts:
            if c == orig or size_of(c) != want:
                continue
            fake = canon(_substitute(record.term, pos, c))
            if fake != record.term and fake not in out:
                out.append(fake)
    return out


def enumerate_actions(kn: Knowledge, active, slots, fake_depth: int = 2) -> list:
    """All attack-action instances available under the active tag set.

    slots lists the live receive slots and (budget permitting) spawn slots;
    fail-stopped processes never appear there. The result order is fixed and
    chosen so a depth-first search commits to the promising moves early:
    session openers aimed at an agent who can read them (A4) come first,
    then forwarding and replays (A1_3, A1_1, A1_2), alterations (A2, A3),
    and finally arbitrary injections (A5)."""
    active = frozenset(active)
    out: list[ActionInstance] = []
    procs = _proc_slots(slots)
    spawns = _spawn_slots(slots)

    if A4 in active:
        for r in kn.records:
            if r.step != 1:
                continue
            for s in _aimed(spawns, r.term):
                out.append(ActionInstance(A4, r.term, r.ts, s))

    for tag in (A1_3, A1_1, A1_2):
        if tag not in active:
            continue
        for r in kn.records:
            for s in procs:
                if tag == A1_1 and s.agent in (r.sender, r.recipient):
                    continue
                if tag == A1_2 and s.agent != r.sender:
                    continue
                if tag == A1_3 and s.agent != r.recipient:
                    continue
                out.append(ActionInstance(tag, r.term, r.ts, s))

    if A2 in active:
        for r in kn.records:
            if encryption_class(r.term) not in (0, 1):
                continue
            payloads = _a2_payloads(r, kn, fake_depth)
            for s in procs:
                if s.agent != r.recipient:
                    continue
                for p in payloads:
                    out.append(ActionInstance(A2, p, r.ts, s))

    if A3 in active:
        for r in kn.records:
            if encryption_class(r.term) in (0, 1):
                for s in procs:
                    if s.agent != r.recipient:
                        continue
                    for p in _a3_part_payloads(r, kn):
                        out.append(ActionInstance(A3, p, r.ts, s))
        # whole-message replays: an earlier message standing in for a later
        # same-session one of equal size
        for late in kn.records:
            for early in kn.records:
                if early.ts >= late.ts or early.session != late.session:
                    continue
                if size_of(early.term) != size_of(late.term) or early.term == late.term:
                    continue
                for s in procs:
                    if s.agent != late.recipient:
                        continue
                    out.append(ActionInstance(A3, early.term, early.ts, s))

    if A5 in active:
        for r in kn.records:
            for s in _aimed(spawns, r.term):
                out.append(ActionInstance(A5, r.term, r.ts, s))
            for s in procs:
                last = kn.session_last_ts(s.session)
                if last and r.ts > last:
                    continue  # newer material cannot be replayed into this session
                out.append(ActionInstance(A5, r.term, r.ts, s))

    return out


def generic_actions(kn: Knowledge, slots, fake_depth: int = 2) -> list:
    """The unpruned Dolev-Yao baseline: deliver anything stored anywhere,
    and flood every slot with composed fakes aimed at its outer shape.

    Replays (payload_ts > 0) come before fakes (payload_ts 0), replays in
    aimed order, fakes at live processes before fakes that would burn the
    spawn budget on a fresh session."""
    out: list[ActionInstance] = []
    for r in kn.records:
        for s in _aimed(slots, r.term):
            out.append(ActionInstance("DY", r.term, r.ts, s))
    if fake_depth < 1:
        return out
    atoms = derivable_atoms(kn)
    stored = frozenset(r.term for r in kn.records)
    ordered = _proc_slots(slots) + _spawn_slots(slots)
    for s in ordered:
        fills = _fills(atoms, s.inner_arity)
        for body in fills:
            if s.expected_key is not None:
                if fake_depth < 2 and isinstance(body, Concat):
                    continue
                fake = Enc(body, s.expected_key)
            else:
                fake = body
            if fake in stored:
                continue  # already counted as a delivery
            out.append(ActionInstance("DY", fake, 0, s))
    return out


@lru_cache(maxsize=4096)
def _fills(atoms: tuple, arity: int) -> tuple:
    if arity <= 1:
        return atoms
    out: list[Term] = []
    _product_fill(atoms, arity, [], out)
    return tuple(out)


def _product_fill(atoms, arity, acc, out):
    if len(acc) == arity:
        out.append(cat(*acc))
        return
    for a in atoms:
        acc.append(a)
        _product_fill(atoms, arity, acc, out)
        acc.pop()
