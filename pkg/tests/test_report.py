import pytest

from dispute_tactics.report import ReportError, fmt, render_report, write_report


def test_fmt():
    assert fmt(0.5) == "0.5000"
    assert fmt(None) == "undefined" and fmt(float("nan")) == "undefined"
    assert fmt(True) == "true" and fmt(3) == "3"


def test_metrics_row():
    assert "| jaccard | 0.5000 |" in render_report({"jaccard": 0.5})


def test_empty_report_header_only():
    assert render_report({}) == "| Key | Value |\n|---|---|\n"


def test_pmi_sorted_descending_with_undefined_last():
    text = render_report({"pmi": {"other": None, "refutation": 0.8, "asking-questions": -1.2, "policing": 0.1}})
    rows = [line.split("|")[1].strip() for line in text.splitlines() if line.startswith("| ")][1:]
    assert rows == ["refutation", "policing", "asking-questions", "other"]


def test_malformed():
    with pytest.raises(ReportError):
        render_report([1, 2])
    with pytest.raises(ReportError):
        render_report({"pmi": [1]})


def test_write_report_files(tmp_path):
    rep = {"pmi": {"refutation": 0.8, "other": -0.4},
           "rebuttal_mean": {"micro": {"statistic": -0.2, "p_value": 0.01, "n": 4},
                             "per_conversation": [{"micro_mean": 3.0, "escalated": True},
                                                  {"micro_mean": 5.0, "escalated": False}]}}
    paths = {p.name for p in write_report(rep, tmp_path)}
    assert paths == {"report.md", "pmi.csv", "rebuttal_mean.csv", "pmi.png", "rebuttal_means.png"}
    assert (tmp_path / "pmi.csv").read_text() == "Label,PMI\nrefutation,0.8000\nother,-0.4000\n"
    assert {p.name for p in write_report(rep, tmp_path / "nofig", figures=False)} == {
        "report.md", "pmi.csv", "rebuttal_mean.csv"}
