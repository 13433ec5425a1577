import json

import pytest

from judgecal.core import ModelSet

# acceptance test name prefix -> criterion label for the summary block
CRITERIA = {
    "test_criterion_1_": "1 uniform optimum",
    "test_criterion_2_": "2 two-model binding constraint",
    "test_criterion_3_": "3 oracle optimality",
    "test_criterion_4_": "4 infeasibility and relaxation",
    "test_criterion_5_": "5 calibration recovery",
    "test_criterion_6_": "6 noise-free exactness",
    "test_criterion_7_": "7 metric correctness",
    "test_criterion_8_": "8 determinism",
    "test_criterion_9_": "9 judge-stub round trip",
}

_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    for prefix, label in CRITERIA.items():
        if name.startswith(prefix):
            if report.when == "call" or report.failed:
                prev = _outcomes.get(label, "PASS")
                _outcomes[label] = "FAIL" if report.failed or prev == "FAIL" else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for label in CRITERIA.values():
        if label in _outcomes:
            terminalreporter.write_line(f"{_outcomes[label]}  criterion {label}")


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def judgment_rows(pair_counts):
    """Rows for ``{(a, b): (wins_a, wins_b, ties)}``."""
    rows = []
    for (a, b), (wa, wb, ties) in pair_counts.items():
        choices = ["a"] * wa + ["b"] * wb + ["tie"] * ties
        rows += [{"prompt_id": f"q{k}", "model_a": a, "model_b": b, "choice": c} for k, c in enumerate(choices)]
    return rows


@pytest.fixture
def cycle_judgments(tmp_path):
    """A>B, B>C, C>A each 3:1, i.e. the q=0.75 3-cycle."""
    pairs = {("A", "B"): (3, 1, 0), ("B", "C"): (3, 1, 0), ("C", "A"): (3, 1, 0)}
    return write_jsonl(tmp_path / "cycle.jsonl", judgment_rows(pairs))


@pytest.fixture
def abc():
    return ModelSet(["a", "b", "c"])
