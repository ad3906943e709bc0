import functools
from pathlib import Path

import pytest

from drchance.problem import load_spec
from drchance.relaxation import build_base, build_stokes, build
from drchance.sdpiface import solve

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def pytest_addoption(parser):
    parser.addoption("--run-extended", action="store_true", default=False,
                     help="run long reproduction tests (tens of minutes)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-extended"):
        return
    skip = pytest.mark.skip(reason="extended run; pass --run-extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def config_path(name: str) -> Path:
    return CONFIGS / f"{name}.json"


@functools.lru_cache(maxsize=None)
def spec_of(name: str):
    return load_spec(config_path(name))


@functools.lru_cache(maxsize=None)
def solved(name: str, variant: str, order: int):
    """Cached solve shared by every test module in the session."""
    spec = spec_of(name)
    if variant == "base":
        relax = build_base(spec, order)
    elif variant == "stokes":
        relax = build_stokes(spec, order)
    else:
        relax = build(spec.with_(variant=variant), order)
    return relax, solve(relax, problem_hash=spec.canonical_hash())


@pytest.fixture
def ex1():
    return spec_of("ex1")
