from __future__ import annotations

from pathlib import Path

import pytest

import rulemap
from rulemap.client import ChatClient, DecodingConfig
from rulemap.dsl import parse_file
from rulemap.leaves import EvaluatorEnv, LeafPolicy
from rulemap.stub import stub_transport

PKG_FIXTURES = Path(rulemap.__file__).parent / "fixtures"

# Leaf assignment of the worked example: attack present via the call for
# violent measures, protected target present twice over, suitability absent.
WORKED_EXAMPLE_ASSIGNMENT = {
    "incitement": False,
    "call_violence": True,
    "suitability": False,
    "national_group": True,
    "section_population": True,
    "individual": False,
}

STUB_MODEL = "stub-model"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return PKG_FIXTURES


@pytest.fixture
def stgb130():
    return parse_file(PKG_FIXTURES / "stgb130.rmap")


@pytest.fixture
def fine_map():
    return parse_file(PKG_FIXTURES / "stgb130_fine.rmap")


@pytest.fixture(scope="session")
def mini_cache_dir() -> Path:
    return PKG_FIXTURES / "mini" / "replay_cache"


@pytest.fixture(scope="session")
def mini_dataset_path() -> Path:
    return PKG_FIXTURES / "mini" / "dataset_30.csv"


@pytest.fixture
def replay_client(mini_cache_dir):
    return ChatClient(mode="replay", cache_dir=mini_cache_dir)


@pytest.fixture
def stub_live_client():
    """LIVE-mode client whose transport is the deterministic stub."""
    return ChatClient(mode="live", api_base="https://stub.invalid",
                      api_key="test-key", transport=stub_transport)


@pytest.fixture
def replay_env(replay_client):
    return EvaluatorEnv(client=replay_client,
                        policy=LeafPolicy(decoding=DecodingConfig(model=STUB_MODEL)))


@pytest.fixture
def stub_decoding():
    return DecodingConfig(model=STUB_MODEL)
