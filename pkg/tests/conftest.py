import importlib.resources

import pytest

from mimcheck import (
    ALL_TAGS,
    GENERIC,
    instantiate,
    make_config,
    mi_simulate,
    parse_spec,
    search,
)


@pytest.fixture(scope="session")
def nspk_source():
    res = importlib.resources.files("mimcheck") / "fixtures" / "nspk.proto"
    return res.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def nspk_spec(nspk_source):
    return parse_spec(nspk_source)


@pytest.fixture(scope="session")
def nspk_sim(nspk_spec):
    """Passive preliminary run on the canonical two-session configuration."""
    return mi_simulate(nspk_spec, make_config(nspk_spec, 2))


@pytest.fixture(scope="session")
def nspk_env(nspk_spec):
    """(world, procs, config) for the canonical two-session configuration."""
    config = make_config(nspk_spec, 2)
    world, procs = instantiate(nspk_spec, config)
    return world, procs, config


def _active_set(spec, config, mode):
    if mode == "dy":
        return GENERIC
    if mode == "full":
        return ALL_TAGS
    report = mi_simulate(spec, config).report
    return tuple(t for t in ALL_TAGS if t not in report.removable)


@pytest.fixture(scope="session")
def runs(nspk_spec):
    """Memoized searches on NSPK n=2 so the expensive ones happen once.

    runs(mode, strategy, stop) with mode in {mi, dy, full}; "full" searches
    the complete tagged action set without pruning.
    """
    cache = {}

    def get(mode, strategy, stop="first-error"):
        key = (mode, strategy, stop)
        if key not in cache:
            config = make_config(nspk_spec, 2)
            world, procs = instantiate(nspk_spec, config)
            active = _active_set(nspk_spec, config, mode)
            cache[key] = search(world, procs, active, strategy=strategy, stop=stop)
        return cache[key]

    return get
