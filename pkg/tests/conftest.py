import pytest

from dispute_tactics.corpus import Conversation, Corpus, Utterance
from dispute_tactics.taxonomy import labels


def make_conv(*labelsets, speakers=None, conv_id="c0", escalated=False, texts=None):
    """Conversation from label-name tuples, e.g. make_conv(("refutation",), ("policing", "other"))."""
    speakers = speakers or [f"u{i % 2}" for i in range(len(labelsets))]
    texts = texts or [f"utterance {i}" for i in range(len(labelsets))]
    utts = tuple(Utterance(i, s, t, labels(*names)) for i, (names, s, t) in enumerate(zip(labelsets, speakers, texts)))
    return Conversation(conv_id, utts, None, escalated)


def make_corpus(*convs):
    return Corpus(tuple(convs))


@pytest.fixture
def conv_factory():
    return make_conv


# -- acceptance summary: one line per criterion ------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    number = int(name.split("_")[2])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        reason = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _CRITERIA[number] = (outcome, f"{name}{': ' + reason if reason else ''}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, text = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {outcome}  {text}")
