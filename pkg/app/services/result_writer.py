# app/services/result_writer.py
#
# grid.csv / curves.csv / degradation.csv / comparison.csv / report.json.
# report.json 의 숫자는 csv 에 찍힌 값과 같은 자릿수로 반올림해 둔다 (다시 읽으면 필드 단위로 같음).

import csv
import io
import json
from pathlib import Path

from app.protocol.tensor_records import FormatError, atomic_write_bytes
from metalogic.evaluator import EvalReport, GridCell, Scenario, degradation_summary

GRID_HEADER = ["support", "query", "epsilon", "mean", "ci"]
CURVE_HEADER = ["support", "query", "epsilon", "step", "loss", "top1"]
DROP_HEADER = ["support", "query", "epsilon", "drop"]
SENSITIVITY_HEADER = ["support", "query", "eps_low", "eps_high", "change"]
COMPARE_HEADER = ["method", "support", "query", "epsilon", "mean", "ci"]


def fmt_eps(value: float) -> str:
    return f"{value:g}"


def fmt_acc(value: float) -> str:
    return f"{value:.4f}"


def fmt_loss(value: float) -> str:
    return f"{value:.6f}"


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_text(path: Path, text: str) -> Path:
    atomic_write_bytes(path, text.encode("utf-8"))
    return path


# ================================================================
# ✅ 행 만들기
# ================================================================

def grid_rows(grid: list[GridCell]) -> list[list[str]]:
    return [
        [cell.scenario.support_mode, cell.scenario.query_mode, fmt_eps(cell.scenario.epsilon_test),
         fmt_acc(cell.report.mean_accuracy), fmt_acc(cell.report.ci_halfwidth)]
        for cell in grid
    ]


def curve_rows(grid: list[GridCell]) -> list[list[str]]:
    rows = []
    for cell in grid:
        s = cell.scenario
        for step, (loss_value, top1) in enumerate(zip(cell.report.loss_curve, cell.report.top1_curve)):
            rows.append([s.support_mode, s.query_mode, fmt_eps(s.epsilon_test), str(step),
                         fmt_loss(loss_value), fmt_acc(top1)])
    return rows


def degradation_rows(summary: dict) -> tuple[list[list[str]], list[list[str]]]:
    drops = [[r["support"], r["query"], fmt_eps(r["epsilon"]), fmt_acc(r["drop"])] for r in summary["drop"]]
    sens = [
        [r["support"], r["query"], fmt_eps(r["eps_low"]), fmt_eps(r["eps_high"]), fmt_acc(r["change"])]
        for r in summary["sensitivity"]
    ]
    return drops, sens


# ================================================================
# ✅ report.json
# ================================================================

def report_payload(grid: list[GridCell], meta: dict | None = None) -> dict:
    """csv 와 같은 반올림을 거친 JSON 문서."""
    summary = degradation_summary(grid)
    return {
        "meta": meta or {},
        "grid": [
            {
                "support": cell.scenario.support_mode,
                "query": cell.scenario.query_mode,
                "epsilon": float(fmt_eps(cell.scenario.epsilon_test)),
                "mean": float(fmt_acc(cell.report.mean_accuracy)),
                "ci": float(fmt_acc(cell.report.ci_halfwidth)),
                "num_tasks": cell.report.num_tasks,
            }
            for cell in grid
        ],
        "curves": [
            {
                "support": row[0], "query": row[1], "epsilon": float(row[2]),
                "step": int(row[3]), "loss": float(row[4]), "top1": float(row[5]),
            }
            for row in curve_rows(grid)
        ],
        "degradation": {
            "drop": [
                {"support": r["support"], "query": r["query"],
                 "epsilon": float(fmt_eps(r["epsilon"])), "drop": float(fmt_acc(r["drop"]))}
                for r in summary["drop"]
            ],
            "sensitivity": [
                {"support": r["support"], "query": r["query"],
                 "eps_low": float(fmt_eps(r["eps_low"])), "eps_high": float(fmt_eps(r["eps_high"])),
                 "change": float(fmt_acc(r["change"]))}
                for r in summary["sensitivity"]
            ],
        },
    }


def grid_from_payload(payload: dict) -> list[GridCell]:
    """report.json 을 다시 GridCell 목록으로 (반올림된 값)."""
    try:
        cells = []
        for entry in payload["grid"]:
            key = (entry["support"], entry["query"], entry["epsilon"])
            curve = sorted(
                (c for c in payload["curves"] if (c["support"], c["query"], c["epsilon"]) == key),
                key=lambda c: c["step"],
            )
            cells.append(GridCell(
                scenario=Scenario(support_mode=entry["support"], query_mode=entry["query"],
                                  epsilon_test=entry["epsilon"]),
                report=EvalReport(
                    mean_accuracy=entry["mean"], ci_halfwidth=entry["ci"],
                    loss_curve=[c["loss"] for c in curve], top1_curve=[c["top1"] for c in curve],
                    num_tasks=entry["num_tasks"],
                ),
            ))
        return cells
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"report.json 형식 오류: {e}") from None


def read_report(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FormatError(f"report 를 읽을 수 없음: {path} ({e})") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"report.json 이 JSON 이 아님: {path} ({e})") from None


# ================================================================
# ✅ 파일 쓰기
# ================================================================

def write_tables(out_dir: str | Path, grid: list[GridCell]) -> list[Path]:
    """grid.csv, curves.csv, degradation.csv."""
    out = Path(out_dir)
    drops, sens = degradation_rows(degradation_summary(grid))
    degradation_text = _csv_text(DROP_HEADER, drops)
    if sens:
        degradation_text += "\n" + _csv_text(SENSITIVITY_HEADER, sens)
    return [
        _write_text(out / "grid.csv", _csv_text(GRID_HEADER, grid_rows(grid))),
        _write_text(out / "curves.csv", _csv_text(CURVE_HEADER, curve_rows(grid))),
        _write_text(out / "degradation.csv", degradation_text),
    ]


def write_results(out_dir: str | Path, grid: list[GridCell], meta: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    paths = write_tables(out, grid)
    payload = report_payload(grid, meta)
    paths.append(_write_text(out / "report.json", json.dumps(payload, indent=2, ensure_ascii=False) + "\n"))
    return paths


def write_comparison(path: str | Path, rows: list[dict]) -> Path:
    body = [
        [r["method"], r["support"], r["query"], fmt_eps(r["epsilon"]), fmt_acc(r["mean"]), fmt_acc(r["ci"])]
        for r in rows
    ]
    return _write_text(Path(path), _csv_text(COMPARE_HEADER, body))
