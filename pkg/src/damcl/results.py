"""Result persistence: JSONL run records, CSV summaries, sweep tables.

Floats are written with repr (JSON does this natively) so loading reproduces
the in-memory structures exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .config import ExperimentConfig, config_to_flat, flat_to_config
from .experiment import RunRecord, SweepResult, SweepTrial
from .network import EpochStats, TrainLog


# ---------------------------------------------------------------------------
# run records


def write_run_record(record: RunRecord, jsonl_path, csv_path=None) -> None:
    """One JSON object per epoch event plus a summary object; optionally a
    one-row CSV summary."""
    jsonl_path = Path(jsonl_path)
    jsonl_path.parent.mkdir(parents=True, exist_ok=True)
    with open(jsonl_path, "w") as fh:
        for task_id, log in enumerate(record.task_logs):
            for row in log.epochs:
                fh.write(json.dumps({
                    "kind": "epoch",
                    "task": task_id,
                    "epoch": row.epoch,
                    "lr": row.lr,
                    "temp": row.temp,
                    "error": row.error,
                }) + "\n")
        fh.write(json.dumps({
            "kind": "summary",
            "config": config_to_flat(record.config),
            "score_matrix": record.score_matrix,
            "avg_accuracy": record.avg_accuracy,
            "epoch_curves": [[t, e, row] for t, e, row in record.epoch_curves],
            "wall_clock": record.wall_clock,
            "trial_seed": record.trial_seed,
            "converged": [log.converged for log in record.task_logs],
        }) + "\n")
    if csv_path is not None:
        write_summary_csv([record], csv_path)


def read_run_record(jsonl_path) -> RunRecord:
    epochs: dict[int, list[EpochStats]] = {}
    summary = None
    with open(jsonl_path) as fh:
        for line in fh:
            obj = json.loads(line)
            if obj["kind"] == "epoch":
                epochs.setdefault(obj["task"], []).append(
                    EpochStats(obj["epoch"], obj["lr"], obj["temp"], obj["error"])
                )
            else:
                summary = obj
    if summary is None:
        raise ValueError(f"{jsonl_path} has no summary object")
    logs = [
        TrainLog(epochs.get(t, []), summary["converged"][t])
        for t in range(len(summary["converged"]))
    ]
    return RunRecord(
        config=flat_to_config(summary["config"]),
        task_logs=logs,
        score_matrix=summary["score_matrix"],
        avg_accuracy=summary["avg_accuracy"],
        epoch_curves=[(t, e, row) for t, e, row in summary["epoch_curves"]],
        wall_clock=summary["wall_clock"],
        trial_seed=summary["trial_seed"],
    )


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def summary_row(record: RunRecord) -> dict:
    cfg = record.config
    hyper = cfg.method.hyperparameter()
    row = {
        "method": cfg.method.name,
        "n": cfg.net.interaction_vertex,
        "hyperparameter": "" if hyper is None else hyper,
        "seed": record.trial_seed,
    }
    for task_id, score in enumerate(record.final_scores):
        row[f"f1_task_{task_id}"] = score
    row["average_accuracy"] = record.final_avg_accuracy
    return row


def write_summary_csv(records: list[RunRecord], path) -> None:
    rows = [summary_row(r) for r in records]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if v != "" else "" for k, v in row.items()})


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            parsed = dict(row)
            for key, value in row.items():
                if key in ("method",):
                    continue
                if value == "":
                    parsed[key] = None
                elif key == "seed":
                    parsed[key] = int(value)
                else:
                    parsed[key] = float(value)
            out.append(parsed)
        return out


# ---------------------------------------------------------------------------
# sweeps


def write_sweep_result(result: SweepResult, trials_path, window_path) -> None:
    trials_path = Path(trials_path)
    trials_path.parent.mkdir(parents=True, exist_ok=True)
    with open(trials_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value", "average_accuracy", "seed"])
        for t in result.trials:
            writer.writerow([result.axis_field, repr(t.value), repr(t.avg_accuracy), t.seed])
    with open(window_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "mean", "std"])
        for value, mean, std in result.window_curve():
            writer.writerow([repr(value), repr(mean), repr(std)])


def read_sweep_trials(path) -> SweepResult:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no trials")
    trials = [
        SweepTrial(float(r["value"]), float(r["average_accuracy"]), int(r["seed"])) for r in rows
    ]
    return SweepResult(rows[0]["axis"], trials)


# ---------------------------------------------------------------------------
# aggregation (report command)


def aggregate_summaries(rows: list[dict]) -> list[dict]:
    """Group per-run summary rows by (method, n, hyperparameter) and report
    mean and sample standard deviation of the final average accuracy."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["method"], row["n"], row["hyperparameter"]), []).append(row)
    out = []
    for (method, n, hyper), members in sorted(groups.items(), key=lambda kv: str(kv[0])):
        accs = [m["average_accuracy"] for m in members]
        mean = math.fsum(accs) / len(accs)
        if len(accs) > 1:
            var = math.fsum((a - mean) ** 2 for a in accs) / (len(accs) - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        out.append({
            "method": method,
            "n": n,
            "hyperparameter": hyper,
            "runs": len(members),
            "mean_average_accuracy": mean,
            "std_average_accuracy": std,
        })
    return out


def format_aggregate_table(rows: list[dict]) -> str:
    header = f"{'method':<16} {'n':>6} {'hyper':>12} {'runs':>5} {'avg acc':>18}"
    lines = [header, "-" * len(header)]
    for row in rows:
        hyper = "" if row["hyperparameter"] is None else f"{row['hyperparameter']:g}"
        lines.append(
            f"{row['method']:<16} {row['n']:>6g} {hyper:>12} {row['runs']:>5} "
            f"{row['mean_average_accuracy']:.3f} +/- {row['std_average_accuracy']:.3f}"
        )
    return "\n".join(lines)


def write_aggregate_csv(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({
                k: ("" if v is None else _fmt(v) if isinstance(v, float) else v)
                for k, v in row.items()
            })
