import pytest

from specdecode.corpus import SentenceRecord
from specdecode.lm import train_ngram

TINY_SENTENCES = ["a b c", "a b d", "a c e", "b d e", "a b c d e"]


@pytest.fixture
def tiny_model():
    """Bigram model over a 5-word corpus (V = 8 with markers)."""
    return train_ngram([SentenceRecord(tuple(s.split())) for s in TINY_SENTENCES], order=2, alpha=0.1)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
