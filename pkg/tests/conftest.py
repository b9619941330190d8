import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pilin.parser import parse_program  # noqa: E402
from pilin.rank import program_ranks  # noqa: E402
from pilin.typeck import check_program  # noqa: E402

CORPUS = resources.files("pilin") / "corpus"
FIXTURES = sorted(p.name.removesuffix(".pilin") for p in CORPUS.iterdir() if p.name.endswith(".pilin"))
WELL_TYPED = ["buyer_seller", "context_free_tree", "forwarder", "forwarder_chain",
              "slot_machine", "work_gather"]
INVALID = ["compulsive_buyer", "omega", "player_machine"]


def corpus_path(name: str) -> Path:
    return Path(str(CORPUS / f"{name}.pilin"))


def load(name: str):
    return parse_program(corpus_path(name).read_text(), name).program


class Loaded:
    def __init__(self, name: str):
        self.name = name
        self.program = load(name)
        self.ranks = program_ranks(self.program)
        self.graph = check_program(self.program)


_cache: dict[str, Loaded] = {}


def loaded(name: str) -> Loaded:
    if name not in _cache:
        _cache[name] = Loaded(name)
    return _cache[name]


@pytest.fixture(params=FIXTURES)
def fixture(request) -> Loaded:
    return loaded(request.param)
