"""Run directories on disk: rounds.csv, summary.json, manifest.json and friends.

Every float is written with 17 significant digits so a value read back is the
exact double that was written. The readers rebuild enough of a
:class:`~fedsim.orchestrator.RunResult` to feed :func:`compare_runs`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from fedsim.config import config_from_dict, config_to_dict
from fedsim.errors import DataFormatError
from fedsim.orchestrator import ComparisonRow, NotReached, RoundRecord, RunResult

__all__ = [
    "ROUNDS_FILE",
    "SUMMARY_FILE",
    "MANIFEST_FILE",
    "CONFIG_FILE",
    "ACCURACY_FILE",
    "format_float",
    "dumps_json",
    "rounds_header",
    "write_rounds_csv",
    "write_run",
    "read_run",
    "write_comparison",
    "format_comparison",
]

ROUNDS_FILE = "rounds.csv"
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.json"
ACCURACY_FILE = "accuracy.csv"


def format_float(x: Optional[float]) -> str:
    """17 significant digits; ``None`` becomes an empty cell."""
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _json_value(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # JSON has no NaN or infinity; keep integral floats typed as floats
        if not math.isfinite(obj):
            return "null"
        text = format_float(obj)
        return text if any(ch in text for ch in ".e") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        if any(isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            items = [pad + _json_value(v, indent, level + 1) for v in seq]
            return "[\n" + ",\n".join(items) + "\n" + end + "]"
        return "[" + ", ".join(_json_value(v, indent, level + 1) for v in seq) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj: Any, indent: int = 2) -> str:
    """``json.dumps`` lookalike that keeps 17 significant digits for floats."""
    return _json_value(obj, indent, 0) + "\n"


def rounds_header(num_classes: int, num_selected: int) -> list[str]:
    return (
        ["t", "selected_ids", "loss", "accuracy"]
        + [f"recall_{c}" for c in range(num_classes)]
        + [f"sv_{k}" for k in range(num_selected)]
        + ["proba_maverick", "wall_time_ms"]
    )


def _round_row(r: RoundRecord, num_selected: int, maverick: Optional[int], timings: bool) -> list[str]:
    sv = r.contribution.sv if r.contribution is not None else [None] * num_selected
    proba = None
    if maverick is not None and r.probabilities is not None:
        proba = r.probabilities[maverick]
    return (
        [str(r.t), ";".join(str(i) for i in r.selected), format_float(r.loss), format_float(r.accuracy)]
        + [format_float(x) for x in r.per_class_recall]
        + [format_float(x) for x in sv]
        + [format_float(proba), format_float(r.wall_time_ms) if timings else ""]
    )


def write_rounds_csv(path: Path, result: RunResult, timings: bool = True) -> None:
    """One row per round. ``proba_maverick`` tracks the lowest-id Maverick."""
    k = result.config.num_selected
    maverick = min(result.maverick_ids) if result.maverick_ids else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rounds_header(result.num_classes, k))
        for r in result.rounds:
            w.writerow(_round_row(r, k, maverick, timings))


def _write_accuracy_csv(path: Path, result: RunResult) -> None:
    mav = result.maverick_recall()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "accuracy", "maverick_recall"])
        for r, m in zip(result.rounds, mav):
            w.writerow([r.t, format_float(r.accuracy), "" if math.isnan(m) else format_float(m)])


def _summary(result: RunResult) -> dict:
    last = result.rounds[-1]
    mav = result.maverick_recall()[-1]
    return {
        "config_digest": result.config_digest,
        "tag": result.tag,
        "seed": result.seed,
        "strategy": result.config.strategy,
        "strategy_params": result.strategy_params,
        "rounds": len(result.rounds),
        "final_accuracy": last.accuracy,
        "final_loss": last.loss,
        "final_maverick_recall": None if math.isnan(mav) else float(mav),
        "fairness_U": result.fairness,
        "r_at_99": None,
        "maverick_ids": list(result.maverick_ids),
        "num_classes": result.num_classes,
        "test_digest": result.test_digest,
        "final_params_digest": result.final_params_digest,
    }


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_run(
    out_dir: str | Path,
    result: RunResult,
    started: Optional[str] = None,
    timings: bool = True,
) -> list[Path]:
    """Write a run directory and return the files in it, manifest last."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from fedsim import __version__

    files = [out / CONFIG_FILE, out / ROUNDS_FILE, out / ACCURACY_FILE, out / SUMMARY_FILE]
    files[0].write_text(dumps_json(config_to_dict(result.config)))
    write_rounds_csv(files[1], result, timings)
    _write_accuracy_csv(files[2], result)
    files[3].write_text(dumps_json(_summary(result)))

    manifest = {
        "config_digest": result.config_digest,
        "artifact_version": __version__,
        "started": started or _now(),
        "finished": _now(),
        "files": [{"name": f.name, "bytes": f.stat().st_size, "sha256": _sha256(f)} for f in files],
    }
    (out / MANIFEST_FILE).write_text(dumps_json(manifest))
    return files + [out / MANIFEST_FILE]


def _parse_float(cell: str) -> float:
    return math.nan if cell in ("", "nan") else float(cell)


def read_run(run_dir: str | Path) -> RunResult:
    """Rebuild a :class:`RunResult` (without contributions or params) from disk."""
    d = Path(run_dir)
    try:
        cfg = config_from_dict(json.loads((d / CONFIG_FILE).read_text()))
        summary = json.loads((d / SUMMARY_FILE).read_text())
        with open(d / ROUNDS_FILE, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise DataFormatError(f"{d} is not a run directory: missing {Path(exc.filename).name}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{d}: corrupt JSON ({exc})") from exc

    c = summary["num_classes"]
    rounds = []
    for row in rows:
        rounds.append(RoundRecord(
            t=int(row["t"]),
            selected=tuple(int(i) for i in row["selected_ids"].split(";") if i),
            loss=float(row["loss"]),
            accuracy=float(row["accuracy"]),
            per_class_recall=np.array([_parse_float(row[f"recall_{i}"]) for i in range(c)]),
            wall_time_ms=_parse_float(row["wall_time_ms"]),
        ))
    return RunResult(
        config=cfg,
        config_digest=summary["config_digest"],
        rounds=rounds,
        final_params_digest=summary["final_params_digest"],
        fairness=summary["fairness_U"],
        maverick_ids=list(summary["maverick_ids"]),
        num_classes=c,
        test_digest=summary["test_digest"],
        strategy_params=summary.get("strategy_params", {}),
    )


_COMPARISON_COLUMNS = [
    "tag", "runs", "r_at_99", "r_at_99_per_seed", "final_accuracy",
    "final_maverick_recall", "fairness_U", "wall_time_ms_per_round",
]


def _row_cells(row: ComparisonRow) -> list[str]:
    def opt(x):
        return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format_float(x)

    return [
        row.tag,
        str(row.runs),
        row.r_at_99_text(),
        ";".join(str(v) for v in row.r_at_99_per_seed),
        format_float(row.final_accuracy),
        opt(row.final_maverick_recall),
        opt(row.fairness),
        opt(row.wall_time_ms),
    ]


def write_comparison(out_dir: str | Path, rows: Sequence[ComparisonRow], reference_tag: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "comparison.csv", out / "comparison.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_COMPARISON_COLUMNS)
        for row in rows:
            w.writerow(_row_cells(row))

    def r99(v):
        return str(v) if isinstance(v, NotReached) else v

    payload = {
        "reference": reference_tag,
        "rows": [
            {
                "tag": row.tag,
                "runs": row.runs,
                "r_at_99": r99(row.r_at_99),
                "r_at_99_text": row.r_at_99_text(),
                "r_at_99_per_seed": [r99(v) for v in row.r_at_99_per_seed],
                "any_not_reached": row.any_not_reached,
                "final_accuracy": row.final_accuracy,
                "final_maverick_recall": row.final_maverick_recall,
                "fairness_U": row.fairness,
                "wall_time_ms_per_round": row.wall_time_ms,
            }
            for row in rows
        ],
    }
    json_path.write_text(dumps_json(payload))
    return [csv_path, json_path]


def format_comparison(rows: Iterable[ComparisonRow]) -> str:
    """Fixed-width text table; a trailing ``*`` marks a mean that skips unreached seeds."""
    rows = list(rows)
    head = ["strategy", "runs", "R@99", "final acc", "mav recall", "U", "ms/round"]
    body = []
    for row in rows:
        def fmt(x, spec=".4f"):
            return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else format(x, spec)

        body.append([
            row.tag, str(row.runs), row.r_at_99_text(), fmt(row.final_accuracy),
            fmt(row.final_maverick_recall), fmt(row.fairness), fmt(row.wall_time_ms, ".1f"),
        ])
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if any(r.any_not_reached and not isinstance(r.r_at_99, NotReached) for r in rows):
        lines.append("* mean over seeds that reached the threshold")
    return "\n".join(lines)
