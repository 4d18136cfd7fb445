import pytest

from mimcheck import (
    AtomKind,
    AtomTerm,
    Concat,
    Enc,
    ParseError,
    construct_term,
    default_assignments,
    instantiate,
    make_config,
    match_receive,
    parse_spec,
    pretty,
)
from mimcheck.protocol import PatCat, PatEnc, PatRole, PatVar

RELAY = """
protocol Relay

declarations
  agents A B C
  intruder I

narration
  1. B -> C : B
  2. B -> C : { B } pk(B)

goals
"""


def test_parse_fixture(nspk_spec):
    spec = nspk_spec
    assert spec.name == "NSPK"
    assert spec.agents == ("A", "B", "C")
    assert spec.intruder == "I"
    assert spec.roles == ("A", "B")
    assert spec.z == 3
    assert [d.name for d in spec.nonces] == ["Na", "Nb"]
    assert spec.secrets == ("Na", "Nb")
    assert len(spec.agreements) == 1
    agr = spec.agreements[0]
    assert (agr.claimant, agr.peer, agr.variables) == ("B", "A", ("Na", "Nb"))
    assert spec.sizes["agent"] == 1 and spec.sizes["nonce"] == 3
    # the initiator must be told who to call; the responder learns it from
    # the first ciphertext
    assert spec.prebound["A"] == frozenset({"B"})
    assert spec.prebound["B"] == frozenset()


def test_step_patterns(nspk_spec):
    step1 = nspk_spec.steps[0]
    assert (step1.sender, step1.recipient) == ("A", "B")
    assert isinstance(step1.pattern, PatEnc)
    assert step1.pattern.key_fn == "pk" and step1.pattern.key_role == "B"
    body = step1.pattern.body
    assert isinstance(body, PatCat)
    assert body.parts == (PatRole("A"), PatVar("Na", AtomKind.NONCE))


def test_pretty_round_trip(nspk_spec):
    assert parse_spec(pretty(nspk_spec)) == nspk_spec
    relay = parse_spec(RELAY)
    assert parse_spec(pretty(relay)) == relay


@pytest.mark.parametrize("source,fragment", [
    ("", "missing protocol header"),
    ("protocol X\n", "narration block is empty"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\nnarration\n"
     "  1. A -> B : A\n  3. B -> A : B\n", "numbered 1..z"),
    ("protocol X\ndeclarations\n  agents A A\n", "duplicate agent"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder A\nnarration\n  1. A -> B : A\n",
     "also listed as an agent"),
    ("protocol X\ndeclarations\n  nonce Na by A\n  nonce Na by A\n", "duplicate nonce"),
    ("protocol X\ndeclarations\n  frobnicate A\n", "unknown declaration"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\n  nonce N by Z\n"
     "narration\n  1. A -> B : A\n", "unknown role"),
    ("protocol X\n  agents A B\n", "outside any block"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\n  size nonce 0\n", "positive"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\n  size shoe 4\n", "size line"),
    ("protocol X\nnarration\n  A sends B something\n", "narration step is"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\nnarration\n"
     "  1. A -> B : { A } B\n", "encryption needs a key"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\nnarration\n"
     "  1. A -> B : X\n", "unknown identifier"),
    ("protocol X\ndeclarations\n  agents A B\n  intruder I\nnarration\n"
     "  1. A -> B : A\ngoals\n  secret Na\n", "unknown variable"),
])
def test_parse_errors(source, fragment):
    with pytest.raises(ParseError) as err:
        parse_spec(source)
    assert fragment in str(err.value)


def test_variable_used_before_known():
    # Nb is generated by B, so A cannot send it in the first step
    source = (
        "protocol X\ndeclarations\n  agents A B\n  intruder I\n"
        "  nonce Nb by B\nnarration\n  1. A -> B : { Nb } pk(B)\n"
    )
    with pytest.raises(ParseError) as err:
        parse_spec(source)
    assert "before A could know it" in str(err.value)


def test_unreadable_binding_rejected():
    # B cannot learn Na from a ciphertext only A can open
    source = (
        "protocol X\ndeclarations\n  agents A B\n  intruder I\n"
        "  nonce Na by A\nnarration\n  1. A -> B : A\n  2. A -> B : { Na } pk(A)\n"
    )
    with pytest.raises(ParseError) as err:
        parse_spec(source)
    assert "cannot read" in str(err.value)


def test_default_assignment_rotation(nspk_spec):
    asg = default_assignments(nspk_spec, 2)
    assert dict(asg[0]) == {"A": "A", "B": "B"}
    assert dict(asg[1]) == {"A": "B", "B": "C"}


def test_make_config_validation(nspk_spec):
    with pytest.raises(ValueError):
        make_config(nspk_spec, 0)
    with pytest.raises(ValueError):
        make_config(nspk_spec, 2, [{"A": "A", "B": "B"}])  # one assignment, two sessions
    with pytest.raises(ValueError):
        make_config(nspk_spec, 1, [{"A": "A"}])  # B unassigned
    with pytest.raises(ValueError):
        make_config(nspk_spec, 1, [{"A": "A", "B": "Zed"}])


def test_instantiate_two_sessions(nspk_spec):
    world, procs = instantiate(nspk_spec, make_config(nspk_spec, 2))
    assert len(procs) == 4
    assert [(p.session, p.role, p.agent) for p in procs] == [
        (1, "A", "A"), (1, "B", "B"), (2, "A", "B"), (2, "B", "C"),
    ]
    # four fresh nonces, globally unique
    nonces = set()
    for p in procs:
        for name, val in p.bindings:
            if name in ("Na", "Nb"):
                nonces.add(val.atom.ident)
    assert nonces == {"Na#1", "Nb#1", "Na#2", "Nb#2"}


def test_instantiate_one_session(nspk_spec):
    _, procs = instantiate(nspk_spec, make_config(nspk_spec, 1))
    assert len(procs) == 2


def test_intruder_role_gets_no_process(nspk_spec):
    config = make_config(nspk_spec, 1, [{"A": "I", "B": "B"}])
    _, procs = instantiate(nspk_spec, config)
    assert [(p.role, p.agent) for p in procs] == [("B", "B")]


def test_world_basics(nspk_env):
    world, _, _ = nspk_env
    assert world.spawnable_roles == ("B",)
    known = {t.atom.ident for t in world.initial_knowledge}
    assert {"A", "B", "C", "I"} <= known
    assert {"pk(A)", "pk(B)", "pk(C)", "pk(I)", "sk(I)"} <= known
    assert "sk(A)" not in known
    na1 = world.nonce_atom("Na", 1)
    assert na1.ident == "Na#1" and na1.kind is AtomKind.NONCE and na1.size_class == 3


def test_make_process_needs_prebound_peer(nspk_env):
    world, _, _ = nspk_env
    with pytest.raises(ValueError):
        world.make_process(1, "A", "A")  # initiator with nobody to call
    p = world.make_process(1, "A", "A", peers={"B": "C"})
    assert p.binding("B").atom.ident == "C"
    assert p.binding("Na").atom.ident == "Na#1"
    q = world.make_process(3, "B", "B")
    assert q.binding("A") is None  # responder learns the initiator later
    assert q.binding("Nb").atom.ident == "Nb#3"


def test_construct_term(nspk_env):
    world, procs, _ = nspk_env
    a1 = procs[0]
    msg = construct_term(nspk_spec_step(world, 1), dict(a1.bindings), world)
    assert isinstance(msg, Enc)
    assert msg.key == world.pubkeys["B"]
    assert isinstance(msg.body, Concat)
    assert [t.atom.ident for t in msg.body.parts] == ["A", "Na#1"]
    with pytest.raises(ValueError):
        construct_term(nspk_spec_step(world, 2), {}, world)  # nothing bound


def nspk_spec_step(world, index):
    return world.spec.steps[index - 1].pattern


def test_match_receive_binds_and_checks_kinds(nspk_env):
    world, procs, _ = nspk_env
    b1 = procs[1]
    a_term = AtomTerm(world.agent_atoms["A"])
    na1 = AtomTerm(world.nonce_atom("Na", 1))
    pat = nspk_spec_step(world, 1)
    good = Enc(Concat((a_term, na1)), world.pubkeys["B"])
    bound = match_receive(pat, good, b1, world)
    assert bound is not None
    assert bound["A"] == a_term and bound["Na"] == na1
    # an agent name where a nonce is expected fails the kind check
    flawed = Enc(Concat((a_term, a_term)), world.pubkeys["B"])
    assert match_receive(pat, flawed, b1, world) is None
    # wrong outer key
    assert match_receive(pat, Enc(Concat((a_term, na1)), world.pubkeys["C"]), b1, world) is None
    # arity mismatch
    assert match_receive(pat, Enc(a_term, world.pubkeys["B"]), b1, world) is None


def test_match_receive_rejects_rebinding(nspk_env):
    world, procs, _ = nspk_env
    a1 = procs[0]  # knows Na#1, expects { Na, Nb } pk(A) next
    pat = nspk_spec_step(world, 2)
    na2 = AtomTerm(world.nonce_atom("Na", 2))
    nb1 = AtomTerm(world.nonce_atom("Nb", 1))
    wrong_na = Enc(Concat((na2, nb1)), world.pubkeys["A"])
    assert match_receive(pat, wrong_na, a1, world) is None
    right = Enc(Concat((AtomTerm(world.nonce_atom("Na", 1)), nb1)), world.pubkeys["A"])
    assert match_receive(pat, right, a1, world)["Nb"] == nb1


def test_match_receive_opaque_ciphertext_compared():
    """A recipient without the inverse key checks the ciphertext for equality
    against the value it can reconstruct from its bindings."""
    spec = parse_spec(RELAY)
    config = make_config(spec, 1, [{"B": "B", "C": "C"}])
    world, procs = instantiate(spec, config)
    c = procs[1]
    b_term = AtomTerm(world.agent_atoms["B"])
    bound = match_receive(spec.steps[0].pattern, b_term, c, world)
    c = c.with_bindings(bound)
    pat = spec.steps[1].pattern
    sealed = Enc(b_term, world.pubkeys["B"])
    assert match_receive(pat, sealed, c, world) is not None
    forged = Enc(AtomTerm(world.agent_atoms["A"]), world.pubkeys["B"])
    assert match_receive(pat, forged, c, world) is None
