import pathlib

import numpy as np
import pytest

from adptrack.adp import AdpContext
from adptrack.config import ScenarioConfig, load_raw, set_by_path
from adptrack.scenarios import build_scenario

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def load_cfg(name: str, **overrides) -> ScenarioConfig:
    """A shipped config with dotted overrides, e.g. load_cfg("scalar_lq", **{"sim.T": 1.0})."""
    raw = load_raw(CONFIGS / f"{name}.json")
    for key, value in overrides.items():
        raw = set_by_path(raw, key, value)
    return ScenarioConfig.from_dict(raw)


def context_for(scenario) -> AdpContext:
    return AdpContext(known=scenario.problem.known(), value_basis=scenario.value_basis,
                      identifier_basis=scenario.identifier_basis)


@pytest.fixture
def configs_dir() -> pathlib.Path:
    return CONFIGS


@pytest.fixture
def scalar_cfg() -> ScenarioConfig:
    return load_cfg("scalar_lq")


@pytest.fixture
def scalar_scenario(scalar_cfg):
    return build_scenario(scalar_cfg)


@pytest.fixture
def scalar_ctx(scalar_scenario) -> AdpContext:
    return context_for(scalar_scenario)


@pytest.fixture
def nl_scenario():
    return build_scenario(load_cfg("twostate_nl"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv("ADPTRACK_SEED", raising=False)
