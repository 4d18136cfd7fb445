"""Explicit-state checker for authentication and secrecy protocols under an
active man-in-the-middle, with metadata-based pruning of the intruder's
attack actions.

The short version of the pipeline:

    spec = parse_spec(source)
    config = make_config(spec, n=2)
    sim = mi_simulate(spec, config)          # passive phase, knowledge table
    active = [t for t in ALL_TAGS if t not in sim.report.removable]
    world, procs = instantiate(spec, config)
    result = search(world, procs, active)    # reduced attack search
"""

from .checker import (
    GENERIC,
    Delivery,
    GlobalState,
    ReplayError,
    SearchResult,
    SearchStats,
    Transition,
    Violation,
    initial_state,
    is_violation,
    replay,
    search,
    successors,
    violations,
)
from .intruder import (
    ALL_TAGS,
    ActionInstance,
    InterceptRecord,
    Knowledge,
    SlotInfo,
    can_derive,
    closure,
    derivable_atoms,
    enumerate_actions,
    generic_actions,
    intercept,
)
from .mi import (
    IktError,
    IktTable,
    MetadataEntry,
    PruneReport,
    SimulationResult,
    UNRECORDED,
    compare_entries,
    evaluate_rules,
    mi_simulate,
)
from .protocol import (
    Agreement,
    ParseError,
    ProcState,
    ProtocolSpec,
    SessionConfig,
    Step,
    World,
    construct_term,
    default_assignments,
    instantiate,
    make_config,
    match_receive,
    parse_spec,
    pretty,
)
from .terms import (
    NULL,
    Atom,
    AtomKind,
    AtomTerm,
    Concat,
    Enc,
    Key,
    Term,
    atom,
    canon,
    cat,
    decrypt,
    encrypt,
    encryption_class,
    mk_keypair,
    size_of,
    subterms,
    term_str,
)

__version__ = "0.1.0"
