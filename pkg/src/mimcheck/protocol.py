"""Protocol descriptions: narration DSL, role scripts, and agent processes.

A protocol file has three blocks. `declarations` names the honest agents, the
intruder identity, the fresh nonces (with the role that generates them) and
the size classes per atom kind. `narration` is the usual Alice-Bob message
list, one numbered step per line. `goals` lists secrecy targets and
agreement claims.

    protocol NSPK

    declarations
      agents A B C
      intruder I
      nonce Na by A
      nonce Nb by B
      size agent 1
      size nonce 3

    narration
      1. A -> B : { A, Na } pk(B)
      2. B -> A : { Na, Nb } pk(A)
      3. A -> B : { Nb } pk(B)

    goals
      secret Na
      secret Nb
      agree B A on Na Nb

Participant names in the narration are role names. Sessions assign agents to
roles; the default assignment rotates through the declared agent list, so two
NSPK sessions run A->B and B->C. A role assigned to the intruder gets no
honest process: the intruder never follows a script.

Receivers bind peer identities lazily from message content. In NSPK the
responder learns who (allegedly) initiated from the first ciphertext, which
is exactly what makes impersonation attempts expressible. Pattern variables
are kind-checked: a nonce variable only accepts nonce atoms unless declared
`kind any`. Any mismatch during matching fail-stops the process permanently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Union

from .terms import (
    Atom,
    AtomKind,
    AtomTerm,
    Concat,
    Enc,
    Key,
    Term,
    atom,
    cat,
    mk_keypair,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int = 1):
        super().__init__("line %d, col %d: %s" % (line, col, msg))
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Pattern AST
# ---------------------------------------------------------------------------


class Pattern:
    __slots__ = ()


@dataclass(frozen=True)
class PatRole(Pattern):
    """An agent identity, referenced by role name."""

    name: str


@dataclass(frozen=True)
class PatVar(Pattern):
    """A declared variable; kind None accepts any term."""

    name: str
    kind: Optional[AtomKind]


@dataclass(frozen=True)
class PatData(Pattern):
    name: str


@dataclass(frozen=True)
class PatCat(Pattern):
    parts: tuple[Pattern, ...]


@dataclass(frozen=True)
class PatEnc(Pattern):
    body: Pattern
    key_fn: str  # "pk" or "sk"
    key_role: str


@dataclass(frozen=True)
class Step:
    index: int
    sender: str
    recipient: str
    pattern: Pattern


@dataclass(frozen=True)
class Agreement:
    """claimant, on completing its run, attributes it to peer; both must
    agree on the listed variables within the same session."""

    claimant: str
    peer: str
    variables: tuple[str, ...]


@dataclass(frozen=True)
class NonceDecl:
    name: str
    role: str
    kind: Optional[AtomKind]  # None means `kind any`


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    agents: tuple[str, ...]
    intruder: str
    nonces: tuple[NonceDecl, ...]
    data: tuple[str, ...]
    sizes: dict
    steps: tuple[Step, ...]
    roles: tuple[str, ...]  # narration appearance order
    secrets: tuple[str, ...]
    agreements: tuple[Agreement, ...]
    prebound: dict  # role -> frozenset of peer roles bound from the session config

    @property
    def z(self) -> int:
        return len(self.steps)


DEFAULT_SIZES = {
    "agent": 1,
    "nonce": 1,
    "pubkey": 1,
    "privkey": 1,
    "symkey": 1,
    "data": 1,
}

_IDENT = r"[A-Za-z][A-Za-z0-9_]*"
_STEP_RE = re.compile(
    r"^(\d+)\.\s*(%s)\s*->\s*(%s)\s*:\s*(.+)$" % (_IDENT, _IDENT)
)


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def _tokenize_pattern(text: str, lineno: int, base_col: int):
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "{},()":
            tokens.append((c, base_col + i))
            i += 1
            continue
        m = re.match(_IDENT, text[i:])
        if not m:
            raise ParseError("unexpected character %r in message pattern" % c, lineno, base_col + i)
        tokens.append((m.group(0), base_col + i))
        i += len(m.group(0))
    return tokens


class _PatParser:
    def __init__(self, tokens, lineno):
        self.tokens = tokens
        self.lineno = lineno
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos][0] if self.pos < len(self.tokens) else None

    def col(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return self.tokens[-1][1] + 1 if self.tokens else 1

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, want):
        if self.peek() != want:
            raise ParseError("expected %r" % want, self.lineno, self.col())
        return self.take()

    def parse(self) -> Pattern:
        pat = self.parse_cat()
        if self.pos != len(self.tokens):
            raise ParseError("trailing input after message pattern", self.lineno, self.col())
        return pat

    def parse_cat(self) -> Pattern:
        parts = [self.parse_part()]
        while self.peek() == ",":
            self.take()
            parts.append(self.parse_part())
        if len(parts) == 1:
            return parts[0]
        return PatCat(tuple(parts))

    def parse_part(self) -> Pattern:
        tok = self.peek()
        if tok is None:
            raise ParseError("message pattern ended early", self.lineno, self.col())
        if tok == "{":
            self.take()
            body = self.parse_cat()
            self.expect("}")
            fn_tok, fn_col = self.take() if self.peek() in ("pk", "sk") else (None, self.col())
            if fn_tok is None:
                raise ParseError("encryption needs a key, pk(Role) or sk(Role)", self.lineno, fn_col)
            self.expect("(")
            role_tok, role_col = self.take() if re.fullmatch(_IDENT, self.peek() or "") else (None, self.col())
            if role_tok is None:
                raise ParseError("key owner must be a role name", self.lineno, role_col)
            self.expect(")")
            return PatEnc(body, fn_tok, role_tok)
        if not re.fullmatch(_IDENT, tok):
            raise ParseError("unexpected token %r" % tok, self.lineno, self.col())
        name, _ = self.take()
        return PatRole(name)  # resolved to var/data later, once declarations are known


def _resolve_idents(pat: Pattern, nonce_decls, data_names, lineno) -> Pattern:
    if isinstance(pat, PatRole):
        if pat.name in nonce_decls:
            return PatVar(pat.name, nonce_decls[pat.name].kind)
        if pat.name in data_names:
            return PatData(pat.name)
        return pat
    if isinstance(pat, PatCat):
        return PatCat(tuple(_resolve_idents(p, nonce_decls, data_names, lineno) for p in pat.parts))
    if isinstance(pat, PatEnc):
        return PatEnc(_resolve_idents(pat.body, nonce_decls, data_names, lineno), pat.key_fn, pat.key_role)
    return pat


def _pattern_idents(pat: Pattern):
    """Yield (node, kind) pairs for every identifier occurrence."""
    if isinstance(pat, PatRole):
        yield pat, "role"
    elif isinstance(pat, PatVar):
        yield pat, "var"
    elif isinstance(pat, PatData):
        yield pat, "data"
    elif isinstance(pat, PatCat):
        for p in pat.parts:
            yield from _pattern_idents(p)
    elif isinstance(pat, PatEnc):
        yield from _pattern_idents(pat.body)
        yield PatRole(pat.key_role), "keyrole"


def parse_spec(text: str) -> ProtocolSpec:
    """Parse a protocol description, raising ParseError with line/column."""
    name = None
    block = None
    agents: list[str] = []
    intruder = None
    nonce_decls: dict[str, NonceDecl] = {}
    data_names: list[str] = []
    sizes = dict(DEFAULT_SIZES)
    raw_steps: list[tuple[int, str, str, Pattern, int]] = []
    secrets: list[str] = []
    agreements: list[Agreement] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        words = line.split()
        if words[0] == "protocol":
            if len(words) != 2:
                raise ParseError("protocol header wants exactly one name", lineno)
            name = words[1]
            continue
        if line in ("declarations", "narration", "goals"):
            block = line
            continue
        if block == "declarations":
            if words[0] == "agents":
                if len(words) < 2:
                    raise ParseError("agents line lists at least one identity", lineno)
                for w in words[1:]:
                    if w in agents:
                        raise ParseError("duplicate agent %r" % w, lineno)
                    agents.append(w)
            elif words[0] == "intruder":
                if len(words) != 2:
                    raise ParseError("intruder line wants exactly one identity", lineno)
                if intruder is not None:
                    raise ParseError("duplicate intruder declaration", lineno)
                intruder = words[1]
            elif words[0] == "nonce":
                # nonce Na by A [kind nonce|data|any]
                if len(words) < 4 or words[2] != "by":
                    raise ParseError("nonce declaration is `nonce <Var> by <Role>`", lineno)
                var, role = words[1], words[3]
                kind: Optional[AtomKind] = AtomKind.NONCE
                if len(words) == 6 and words[4] == "kind":
                    kind = None if words[5] == "any" else AtomKind(words[5])
                elif len(words) != 4:
                    raise ParseError("trailing input in nonce declaration", lineno)
                if var in nonce_decls:
                    raise ParseError("duplicate nonce %r" % var, lineno)
                nonce_decls[var] = NonceDecl(var, role, kind)
            elif words[0] == "data":
                if len(words) != 2:
                    raise ParseError("data declaration is `data <Id>`", lineno)
                if words[1] in data_names:
                    raise ParseError("duplicate data atom %r" % words[1], lineno)
                data_names.append(words[1])
            elif words[0] == "size":
                if len(words) != 3 or words[1] not in sizes:
                    raise ParseError("size line is `size <kind> <int>`", lineno)
                try:
                    val = int(words[2])
                except ValueError:
                    raise ParseError("size value must be an integer", lineno) from None
                if val <= 0:
                    raise ParseError("size classes are positive", lineno)
                sizes[words[1]] = val
            else:
                raise ParseError("unknown declaration %r" % words[0], lineno)
        elif block == "narration":
            m = _STEP_RE.match(line)
            if not m:
                raise ParseError("narration step is `<k>. <Role> -> <Role> : <pattern>`", lineno)
            idx = int(m.group(1))
            sender, recipient = m.group(2), m.group(3)
            pat_text = m.group(4)
            col0 = raw.index(pat_text) + 1 if pat_text in raw else 1
            tokens = _tokenize_pattern(pat_text, lineno, col0)
            pat = _PatParser(tokens, lineno).parse()
            raw_steps.append((idx, sender, recipient, pat, lineno))
        elif block == "goals":
            if words[0] == "secret":
                if len(words) != 2:
                    raise ParseError("secret goal names one variable", lineno)
                secrets.append(words[1])
            elif words[0] == "agree":
                if len(words) < 5 or words[3] != "on":
                    raise ParseError("agreement goal is `agree <Role> <Role> on <Var>...`", lineno)
                agreements.append(Agreement(words[1], words[2], tuple(words[4:])))
            else:
                raise ParseError("unknown goal %r" % words[0], lineno)
        else:
            raise ParseError("statement outside any block", lineno)

    if name is None:
        raise ParseError("missing protocol header", 1)
    if not raw_steps:
        raise ParseError("narration block is empty", 1)
    if not agents:
        raise ParseError("no agents declared", 1)
    if intruder is None:
        raise ParseError("no intruder identity declared", 1)
    if intruder in agents:
        raise ParseError("intruder identity also listed as an agent", 1)

    raw_steps.sort(key=lambda s: s[0])
    for expect_idx, (idx, _, _, _, lineno) in enumerate(raw_steps, start=1):
        if idx != expect_idx:
            raise ParseError("narration steps must be numbered 1..z without gaps", lineno)

    roles: list[str] = []
    for _, sender, recipient, _, _ in raw_steps:
        for r in (sender, recipient):
            if r not in roles:
                roles.append(r)

    for var, decl in nonce_decls.items():
        if decl.role not in roles:
            raise ParseError("nonce %s generated by unknown role %r" % (var, decl.role), 1)

    steps = []
    for idx, sender, recipient, pat, lineno in raw_steps:
        pat = _resolve_idents(pat, nonce_decls, set(data_names), lineno)
        for node, how in _pattern_idents(pat):
            if isinstance(node, PatRole) and node.name not in roles:
                raise ParseError("unknown identifier %r in step %d" % (node.name, idx), lineno)
        steps.append(Step(idx, sender, recipient, pat))

    spec = ProtocolSpec(
        name=name,
        agents=tuple(agents),
        intruder=intruder,
        nonces=tuple(nonce_decls.values()),
        data=tuple(data_names),
        sizes=sizes,
        steps=tuple(steps),
        roles=tuple(roles),
        secrets=tuple(secrets),
        agreements=tuple(agreements),
        prebound={},
    )
    prebound = _validate_bindings(spec, raw_steps)
    spec = replace(spec, prebound=prebound)
    _validate_goals(spec)
    return spec


def _validate_bindings(spec: ProtocolSpec, raw_steps):
    """Walk the narration checking every identifier is bound where used.

    Returns, per role, the set of peer roles whose identity must come from
    the session configuration (used in a send or key position before any
    receive could bind them).
    """
    bound: dict[str, set] = {r: {r} for r in spec.roles}
    generated: dict[str, set] = {r: set() for r in spec.roles}
    prebound: dict[str, set] = {r: set() for r in spec.roles}
    decl_by_var = {d.name: d for d in spec.nonces}

    def note_send_ident(role, node, lineno, idx):
        if isinstance(node, PatRole):
            if node.name not in bound[role]:
                prebound[role].add(node.name)
                bound[role].add(node.name)
        elif isinstance(node, PatVar):
            decl = decl_by_var[node.name]
            if node.name in bound[role]:
                return
            if decl.role == role:
                generated[role].add(node.name)
                bound[role].add(node.name)
            else:
                raise ParseError(
                    "variable %s used in step %d before %s could know it"
                    % (node.name, idx, role),
                    lineno,
                )

    def walk_recv(role, pat, lineno, idx, readable):
        if isinstance(pat, PatEnc):
            inner_readable = readable and pat.key_fn == "pk" and pat.key_role == role
            if pat.key_role not in bound[role]:
                raise ParseError(
                    "key owner %s not known to %s at step %d" % (pat.key_role, role, idx),
                    lineno,
                )
            walk_recv(role, pat.body, lineno, idx, inner_readable)
        elif isinstance(pat, PatCat):
            for p in pat.parts:
                walk_recv(role, p, lineno, idx, readable)
        elif isinstance(pat, (PatRole, PatVar)):
            name = pat.name
            if name in bound[role]:
                return
            if not readable:
                raise ParseError(
                    "%s cannot read %s inside a ciphertext it cannot open (step %d)"
                    % (role, name, idx),
                    lineno,
                )
            bound[role].add(name)

    for (idx, sender, recipient, _, lineno), step in zip(raw_steps, spec.steps):
        if step.recipient not in bound[step.sender]:
            prebound[step.sender].add(step.recipient)
            bound[step.sender].add(step.recipient)
        for node, how in _pattern_idents(step.pattern):
            note_send_ident(step.sender, node, lineno, idx)
        walk_recv(step.recipient, step.pattern, lineno, idx, True)

    return {r: frozenset(v) for r, v in prebound.items()}


def _validate_goals(spec: ProtocolSpec):
    vars_known = {d.name for d in spec.nonces}
    for s in spec.secrets:
        if s not in vars_known:
            raise ParseError("secrecy goal names unknown variable %r" % s, 1)
    for a in spec.agreements:
        if a.claimant not in spec.roles or a.peer not in spec.roles:
            raise ParseError("agreement goal names unknown role", 1)
        for v in a.variables:
            if v not in vars_known:
                raise ParseError("agreement goal names unknown variable %r" % v, 1)


def pretty(spec: ProtocolSpec) -> str:
    """Canonical text form; parse(pretty(spec)) is structurally identical."""
    out = ["protocol %s" % spec.name, "", "declarations"]
    out.append("  agents %s" % " ".join(spec.agents))
    out.append("  intruder %s" % spec.intruder)
    for d in spec.nonces:
        kind = "any" if d.kind is None else d.kind.value
        suffix = "" if kind == "nonce" else " kind %s" % kind
        out.append("  nonce %s by %s%s" % (d.name, d.role, suffix))
    for d in spec.data:
        out.append("  data %s" % d)
    for k in sorted(spec.sizes):
        out.append("  size %s %d" % (k, spec.sizes[k]))
    out.append("")
    out.append("narration")
    for st in spec.steps:
        out.append("  %d. %s -> %s : %s" % (st.index, st.sender, st.recipient, _pat_str(st.pattern)))
    out.append("")
    out.append("goals")
    for s in spec.secrets:
        out.append("  secret %s" % s)
    for a in spec.agreements:
        out.append("  agree %s %s on %s" % (a.claimant, a.peer, " ".join(a.variables)))
    return "\n".join(out) + "\n"


def _pat_str(pat: Pattern) -> str:
    if isinstance(pat, (PatRole, PatVar, PatData)):
        return pat.name
    if isinstance(pat, PatCat):
        return ", ".join(_pat_str(p) for p in pat.parts)
    if isinstance(pat, PatEnc):
        return "{ %s } %s(%s)" % (_pat_str(pat.body), pat.key_fn, pat.key_role)
    raise TypeError("not a pattern: %r" % (pat,))


# ---------------------------------------------------------------------------
# Sessions and processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionConfig:
    """How many parallel sessions run and who plays which role.

    assignments maps each session (in order) to a role->agent tuple. fake_depth
    bounds composed fake messages, max_spawns bounds the sessions the intruder
    may open on its own.
    """

    n: int
    assignments: tuple[tuple[tuple[str, str], ...], ...]
    fake_depth: int = 2
    max_spawns: int = 1

    def assignment(self, session: int) -> dict:
        return dict(self.assignments[session - 1])


def default_assignments(spec: ProtocolSpec, n: int) -> tuple:
    """Rotate roles through the declared agent list, one shift per session."""
    out = []
    for b in range(n):
        asg = tuple(
            (role, spec.agents[(i + b) % len(spec.agents)])
            for i, role in enumerate(spec.roles)
        )
        out.append(asg)
    return tuple(out)


def make_config(spec: ProtocolSpec, n: int, assignments=None, fake_depth: int = 2,
                max_spawns: int = 1) -> SessionConfig:
    if n < 1:
        raise ValueError("need at least one session")
    if assignments is None:
        assignments = default_assignments(spec, n)
    else:
        assignments = tuple(tuple(sorted(dict(a).items())) for a in assignments)
        if len(assignments) != n:
            raise ValueError("expected %d session assignments, got %d" % (n, len(assignments)))
        known = set(spec.agents) | {spec.intruder}
        for asg in assignments:
            got = dict(asg)
            if set(got) != set(spec.roles):
                raise ValueError("every session must assign every role exactly once")
            for agent in got.values():
                if agent not in known:
                    raise ValueError("unknown agent %r in session assignment" % agent)
    return SessionConfig(n=n, assignments=assignments, fake_depth=fake_depth, max_spawns=max_spawns)


RUNNING, COMPLETED, FAILED = 0, 1, 2


@dataclass(frozen=True)
class ProcState:
    """One role instance inside one session. Immutable; updates copy."""

    session: int
    role: str
    agent: str
    pc: int
    bindings: tuple[tuple[str, Term], ...]
    status: int = RUNNING

    def __post_init__(self):
        object.__setattr__(self, "_h", hash(
            (self.session, self.role, self.agent, self.pc, self.bindings, self.status)
        ))

    def __hash__(self):
        return self._h

    def binding(self, name: str) -> Optional[Term]:
        for k, v in self.bindings:
            if k == name:
                return v
        return None

    def with_bindings(self, extra: dict) -> "ProcState":
        merged = dict(self.bindings)
        merged.update(extra)
        return replace(self, bindings=tuple(sorted(merged.items())))


class World:
    """Everything static about a run: spec, config, atoms, keys, scripts."""

    def __init__(self, spec: ProtocolSpec, config: SessionConfig):
        self.spec = spec
        self.config = config
        size = spec.sizes
        self.agent_atoms = {
            a: Atom(AtomKind.AGENT, a, size["agent"])
            for a in (*spec.agents, spec.intruder)
        }
        self.pubkeys: dict[str, Key] = {}
        self.privkeys: dict[str, Key] = {}
        self.keyring: dict[Atom, Key] = {}
        for a in (*spec.agents, spec.intruder):
            pub, priv = mk_keypair(a, size["pubkey"], size["privkey"])
            self.pubkeys[a] = pub
            self.privkeys[a] = priv
            self.keyring[pub.handle] = pub
            self.keyring[priv.handle] = priv
        self.data_atoms = {
            d: Atom(AtomKind.DATA, d, size["data"]) for d in spec.data
        }
        self.nonce_decl = {d.name: d for d in spec.nonces}
        # events per role: ("send", Step) / ("recv", Step), narration order
        self.scripts: dict[str, tuple] = {r: () for r in spec.roles}
        for st in spec.steps:
            self.scripts[st.sender] = self.scripts[st.sender] + (("send", st),)
            self.scripts[st.recipient] = self.scripts[st.recipient] + (("recv", st),)
        self.spawnable_roles = tuple(
            r for r in spec.roles
            if self.scripts[r] and self.scripts[r][0][0] == "recv" and not spec.prebound.get(r)
        )
        # The intruder hears everything public: identities, public keys, its
        # own key pair, declared data constants.
        base = [AtomTerm(a) for a in self.agent_atoms.values()]
        base += [AtomTerm(k.handle) for k in self.pubkeys.values()]
        base.append(AtomTerm(self.privkeys[spec.intruder].handle))
        base += [AtomTerm(a) for a in self.data_atoms.values()]
        self.initial_knowledge = frozenset(base)

    def nonce_atom(self, var: str, session: int) -> Atom:
        decl = self.nonce_decl[var]
        if decl.kind is AtomKind.DATA:
            size = self.spec.sizes["data"]
        else:
            size = self.spec.sizes["nonce"]
        kind = decl.kind if decl.kind is not None else AtomKind.NONCE
        return Atom(kind, "%s#%d" % (var, session), size)

    def make_process(self, session: int, role: str, agent: str,
                     peers: Optional[dict] = None) -> ProcState:
        bindings = {role: AtomTerm(self.agent_atoms[agent])}
        for peer in self.spec.prebound.get(role, ()):
            if peers is None or peer not in peers:
                raise ValueError("role %s needs a configured %s" % (role, peer))
            bindings[peer] = AtomTerm(self.agent_atoms[peers[peer]])
        for decl in self.spec.nonces:
            if decl.role == role:
                bindings[decl.name] = AtomTerm(self.nonce_atom(decl.name, session))
        return ProcState(
            session=session,
            role=role,
            agent=agent,
            pc=0,
            bindings=tuple(sorted(bindings.items())),
        )

    def spawn_process(self, session: int, role: str, agent: str) -> ProcState:
        if role not in self.spawnable_roles:
            raise ValueError("role %s cannot be started by an incoming message" % role)
        return self.make_process(session, role, agent)


def instantiate(spec: ProtocolSpec, config: SessionConfig) -> tuple[World, tuple[ProcState, ...]]:
    """Build the static world and the honest processes, one per (session, role).

    Roles assigned to the intruder get no process; their messages can only
    come from the intruder's attack actions.
    """
    world = World(spec, config)
    procs = []
    for session in range(1, config.n + 1):
        asg = config.assignment(session)
        for role in spec.roles:
            agent = asg[role]
            if agent == spec.intruder:
                continue
            procs.append(world.make_process(session, role, agent, peers=asg))
    return world, tuple(procs)


# ---------------------------------------------------------------------------
# Message construction and matching
# ---------------------------------------------------------------------------


def construct_term(pattern: Pattern, bindings: dict, world: World) -> Term:
    """Sender-side view: every identifier must already be bound."""
    if isinstance(pattern, PatRole):
        val = bindings.get(pattern.name)
        if val is None:
            raise ValueError("unbound role %s" % pattern.name)
        return val
    if isinstance(pattern, PatVar):
        val = bindings.get(pattern.name)
        if val is None:
            raise ValueError("unbound variable %s" % pattern.name)
        return val
    if isinstance(pattern, PatData):
        return AtomTerm(world.data_atoms[pattern.name])
    if isinstance(pattern, PatCat):
        return cat(*[construct_term(p, bindings, world) for p in pattern.parts])
    if isinstance(pattern, PatEnc):
        owner = bindings.get(pattern.key_role)
        if owner is None:
            raise ValueError("unbound key owner %s" % pattern.key_role)
        agent = owner.atom.ident
        key = world.pubkeys[agent] if pattern.key_fn == "pk" else world.privkeys[agent]
        return Enc(construct_term(pattern.body, bindings, world), key)
    raise TypeError("not a pattern: %r" % (pattern,))


def match_receive(pattern: Pattern, term: Term, proc: ProcState, world: World) -> Optional[dict]:
    """Match an incoming term against a receive pattern.

    Returns the new bindings on success, None on mismatch. The caller turns
    None into a permanent fail-stop of the process. Ciphertexts the receiver
    cannot open are compared against the expected value built from current
    bindings, which parse-time validation guarantees is fully determined.
    """
    bindings = dict(proc.bindings)

    def walk(pat, t) -> bool:
        if isinstance(pat, PatEnc):
            owner = bindings.get(pat.key_role)
            if owner is None:
                return False
            agent = owner.atom.ident
            key = world.pubkeys[agent] if pat.key_fn == "pk" else world.privkeys[agent]
            if not isinstance(t, Enc) or t.key != key:
                return False
            # readable only when the process owns the inverse key: its own
            # private key, or any public key (signature-style encryptions)
            inv = key.inverse_handle
            readable = inv.kind is AtomKind.PUBKEY or inv == world.privkeys[proc.agent].handle
            if readable:
                return walk(pat.body, t.body)
            try:
                expected = construct_term(pat.body, bindings, world)
            except ValueError:
                return False
            return t.body == expected
        if isinstance(pat, PatCat):
            if not isinstance(t, Concat) or len(t.parts) != len(pat.parts):
                return False
            return all(walk(p, sub) for p, sub in zip(pat.parts, t.parts))
        if isinstance(pat, PatData):
            return t == AtomTerm(world.data_atoms[pat.name])
        if isinstance(pat, PatRole):
            bound = bindings.get(pat.name)
            if bound is not None:
                return t == bound
            if not (isinstance(t, AtomTerm) and t.atom.kind is AtomKind.AGENT):
                return False
            bindings[pat.name] = t
            return True
        if isinstance(pat, PatVar):
            bound = bindings.get(pat.name)
            if bound is not None:
                return t == bound
            if pat.kind is not None:
                if not (isinstance(t, AtomTerm) and t.atom.kind is pat.kind):
                    return False
            bindings[pat.name] = t
            return True
        raise TypeError("not a pattern: %r" % (pat,))

    if walk(pattern, term):
        return bindings
    return None
