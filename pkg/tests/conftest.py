"""Shared fixtures: the mini morpheme corpus, hand-built models, and the
acceptance-summary reporter."""

from __future__ import annotations

import pytest

from wfstdec.ngram import EOS, NGramModel, estimate_witten_bell

# Two-sentence morpheme corpus; both sentences begin with "vix".
MINI_CORPUS = [
    ["vix", "ci", "vix", "tin", "cUx", "ti"],
    ["vix", "tin", "cUx", "kAn", "vix", "ci"],
]

# Phone spellings of the corpus morphemes (single-letter phones).
MINI_LEXICON_TEXT = (
    "vix\tv i x\n"
    "ci\tc i\n"
    "tin\tt i n\n"
    "cUx\tc U x\n"
    "ti\tt i\n"
    "kAn\tk A n\n"
)


@pytest.fixture(scope="session")
def mini_corpus():
    return [list(s) for s in MINI_CORPUS]


@pytest.fixture(scope="session")
def mini_model():
    """Witten-Bell 2-gram estimated from the mini corpus."""
    return estimate_witten_bell(MINI_CORPUS, 2)


def make_ab_model(with_eos: bool = False) -> NGramModel:
    """Order-2 fixture: log10 P(a)=-0.5 bow(a)=-0.2, P(b)=-0.7 bow(b)=-0.1,
    P(b|a)=-0.3.  With with_eos, end-of-sentence has probability one so
    acceptor final weights vanish at the root context."""
    m = NGramModel(2)
    m.add_entry(("a",), -0.5, -0.2)
    m.add_entry(("b",), -0.7, -0.1)
    m.add_entry(("a", "b"), -0.3)
    if with_eos:
        m.add_entry((EOS,), 0.0)
    return m


@pytest.fixture
def ab_model():
    return make_ab_model()


@pytest.fixture
def ab_model_eos():
    return make_ab_model(with_eos=True)


# -- acceptance criterion reporting ----------------------------------------

_CRITERION_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_record():
    def record(line: str) -> None:
        _CRITERION_LINES.append(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERION_LINES):
            terminalreporter.write_line(line)
