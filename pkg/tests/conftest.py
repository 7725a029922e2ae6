from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sru_ner.actions import ActionVocabulary, Mention, Sentence


@pytest.fixture(scope="session")
def nested_tokens() -> list[str]:
    return ["a", "defective", "NF", "-", "chi", "B", "site", "was", "completely"]


@pytest.fixture(scope="session")
def nested_sentence(nested_tokens) -> Sentence:
    return Sentence(tuple(nested_tokens))


@pytest.fixture(scope="session")
def nested_mentions() -> set[Mention]:
    return {
        Mention(2, 6, "DNA"),
        Mention(2, 5, "Protein"),
        Mention(4, 5, "DNA"),
    }


@pytest.fixture(scope="session")
def nested_vocab() -> ActionVocabulary:
    return ActionVocabulary(["DNA", "Protein"])


@pytest.fixture(scope="session")
def nested_sequence_str() -> str:
    return (
        "SH SH TR:DNA TR:Protein SH SH TR:DNA SH SH "
        "RE:DNA RE:Protein SH RE:DNA SH SH EOA"
    )
