import csv
import json

import pytest

from app.protocol.tensor_records import FormatError
from app.services.result_writer import (
    grid_from_payload, grid_rows, read_report, write_comparison, write_results, write_tables,
)
from metalogic.evaluator import EvalReport, GridCell, Scenario, compare_reports


def _cell(support, query, eps, acc, ci, curve=(0.2, 0.3)):
    return GridCell(
        scenario=Scenario(support_mode=support, query_mode=query, epsilon_test=eps),
        report=EvalReport(
            mean_accuracy=acc, ci_halfwidth=ci,
            loss_curve=[1.6094379 - 0.1 * i for i in range(len(curve))], top1_curve=list(curve),
            num_tasks=600,
        ),
    )


@pytest.fixture
def grid():
    return [
        _cell("clean", "clean", 2.0, 0.48123, 0.0201, (0.2, 0.48123)),
        _cell("clean", "adversarial", 2.0, 0.43, 0.018812, (0.2, 0.43)),
        _cell("clean", "clean", 0.2, 0.48123, 0.0201, (0.2, 0.48123)),
        _cell("clean", "adversarial", 0.2, 0.47, 0.019, (0.2, 0.47)),
    ]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def test_grid_row_format(grid):
    assert grid_rows(grid)[1] == ["clean", "adversarial", "2", "0.4300", "0.0188"]
    assert grid_rows(grid)[2][2] == "0.2"


def test_write_results_files_agree(tmp_path, grid):
    paths = write_results(tmp_path, grid, {"kind": "adml", "shots": 1})
    assert [p.name for p in paths] == ["grid.csv", "curves.csv", "degradation.csv", "report.json"]

    rows = _read_csv(tmp_path / "grid.csv")
    assert rows[0] == ["support", "query", "epsilon", "mean", "ci"]
    assert rows[2] == ["clean", "adversarial", "2", "0.4300", "0.0188"]

    curves = _read_csv(tmp_path / "curves.csv")
    assert curves[0] == ["support", "query", "epsilon", "step", "loss", "top1"]
    assert len(curves) == 1 + 4 * 2
    assert curves[1] == ["clean", "clean", "2", "0", "1.609438", "0.2000"]

    payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert payload["meta"] == {"kind": "adml", "shots": 1}
    for row, entry in zip(rows[1:], payload["grid"]):
        assert [entry["support"], entry["query"]] == row[:2]
        assert entry["epsilon"] == float(row[2])
        assert entry["mean"] == float(row[3])
        assert entry["ci"] == float(row[4])
        assert entry["num_tasks"] == 600
    for row, entry in zip(curves[1:], payload["curves"]):
        assert (entry["step"], entry["loss"], entry["top1"]) == (int(row[3]), float(row[4]), float(row[5]))

    drops = {(d["query"], d["epsilon"]): d["drop"] for d in payload["degradation"]["drop"]}
    assert drops[("adversarial", 2.0)] == 0.0512
    degradation = (tmp_path / "degradation.csv").read_text(encoding="utf-8")
    assert degradation.startswith("support,query,epsilon,drop\n")
    assert "support,query,eps_low,eps_high,change" in degradation


def test_report_re_render_matches(tmp_path, grid):
    write_results(tmp_path / "run", grid)
    first = {name: (tmp_path / "run" / name).read_bytes() for name in ("grid.csv", "curves.csv", "degradation.csv")}

    again = grid_from_payload(read_report(tmp_path / "run" / "report.json"))
    write_tables(tmp_path / "again", again)
    for name, content in first.items():
        assert (tmp_path / "again" / name).read_bytes() == content


def test_comparison_csv(tmp_path, grid):
    other = [_cell("clean", "clean", 2.0, 0.5, 0.02), _cell("clean", "adversarial", 2.0, 0.3, 0.02)]
    path = write_comparison(tmp_path / "comparison.csv", compare_reports({"adml": grid, "maml": other}))
    rows = _read_csv(path)
    assert rows[0] == ["method", "support", "query", "epsilon", "mean", "ci"]
    assert rows[1:5] == [
        ["adml", "clean", "clean", "2", "0.4812", "0.0201"],
        ["maml", "clean", "clean", "2", "0.5000", "0.0200"],
        ["adml", "clean", "adversarial", "2", "0.4300", "0.0188"],
        ["maml", "clean", "adversarial", "2", "0.3000", "0.0200"],
    ]
    assert len(rows) == 7


def test_bad_report_is_format_error(tmp_path):
    broken = tmp_path / "report.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        read_report(broken)
    with pytest.raises(FormatError):
        grid_from_payload({"grid": [{"support": "clean"}]})
    with pytest.raises(FormatError):
        read_report(tmp_path / "missing.json")
