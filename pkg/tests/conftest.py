import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

sys.path.insert(0, str(ROOT / "src"))


@pytest.fixture(scope="session")
def wordnet_graph():
    from lexivis.knowledge import load_wordnet_snapshot

    return load_wordnet_snapshot(FIXTURES / "wordnet.jsonl")


@pytest.fixture(scope="session")
def wiktionary():
    from lexivis.knowledge import load_wiktionary_snapshot

    return load_wiktionary_snapshot(FIXTURES / "wiktionary.jsonl")


@pytest.fixture(scope="session")
def store(wordnet_graph, wiktionary):
    from lexivis.knowledge import KnowledgeStore

    return KnowledgeStore(wordnet=wordnet_graph, wiktionary=wiktionary)


@pytest.fixture(scope="session")
def lexicon():
    from lexivis.queries import load_lexicon

    return load_lexicon(FIXTURES / "lexicon.tsv")


@pytest.fixture
def toy_config():
    from lexivis.encoder import EncoderConfig

    return EncoderConfig(
        embed_dim=8,
        text_layers=2,
        num_heads=2,
        hidden_dim=12,
        vocab_size=64,
        max_tokens=16,
        adapter_bottleneck=3,
        image_input_dim=5,
    )
