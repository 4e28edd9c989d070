"""End-to-end experiment orchestration.

A run builds the task sequence from the dataset seed, initializes the bank
from the trial seed, trains task by task through the method hooks, and scores
every seen task after each one. Sweeps repeat runs over a hyperparameter axis
and aggregate moving-window statistics over the value-sorted trials.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import datasets, methods, metrics, network
from .config import ConfigError, ExperimentConfig, config_to_flat, flat_to_config
from .datasets import TaskDataset, mix_seed
from .network import TrainLog

_BANK_SEED_TAG = 0x62616E6B
_TRAIN_SEED_TAG = 0x747261
_SWEEP_SEED_TAG = 0x73777065
_SYNTH_SEED_TAG = 0x73796E74

SWEEP_WINDOW = 20


@dataclass
class RunRecord:
    """Everything one experiment produced, sufficient to reproduce it."""

    config: ExperimentConfig
    task_logs: list[TrainLog]
    score_matrix: list[list[float]]  # row m: macro-F1 of tasks 0..m after task m
    avg_accuracy: list[float]
    epoch_curves: list[tuple[int, int, list[float]]] = field(default_factory=list)
    wall_clock: float = 0.0
    trial_seed: int = 0

    @property
    def final_scores(self) -> list[float]:
        return list(self.score_matrix[-1])

    @property
    def final_avg_accuracy(self) -> float:
        return self.avg_accuracy[-1]


def load_source(cfg: ExperimentConfig) -> datasets.RawImageSet:
    if cfg.dataset.source == "synthetic":
        return datasets.synthetic_raw_set(
            cfg.dataset.synthetic_size, mix_seed(cfg.dataset.master_seed, _SYNTH_SEED_TAG)
        )
    if cfg.dataset.source == "mnist":
        return datasets.load_mnist(cfg.dataset.resolved_data_dir(), train=True)
    raise ConfigError(f"unknown dataset source {cfg.dataset.source!r}")


def build_tasks(cfg: ExperimentConfig, source=None) -> list[TaskDataset]:
    source = source if source is not None else load_source(cfg)
    return datasets.build_task_sequence(
        source,
        cfg.dataset.task_count,
        cfg.dataset.items_per_task,
        kind=cfg.dataset.kind,
        master_seed=cfg.dataset.master_seed,
        threshold=cfg.dataset.threshold,
        rotation_step=cfg.dataset.rotation_step,
    )


def run_experiment(cfg: ExperimentConfig, tasks: list[TaskDataset] | None = None) -> RunRecord:
    """Run one seeded experiment; ``tasks`` may be injected to share data
    across method comparisons."""
    started = time.perf_counter()
    if tasks is None:
        tasks = build_tasks(cfg)
    layout = tasks[0].layout
    params = cfg.net
    bank = network.init_bank(
        params, layout.size, np.random.default_rng(mix_seed(cfg.trial_seed, _BANK_SEED_TAG))
    )
    train_rng = np.random.default_rng(mix_seed(cfg.trial_seed, _TRAIN_SEED_TAG))
    hooks = methods.build_method(
        cfg.method.name,
        layout=layout,
        trial_seed=cfg.trial_seed,
        proportion=cfg.method.proportion,
        reg_strength=cfg.method.reg_strength,
        si_damping=cfg.method.si_damping,
        si_raw_sign=cfg.method.si_raw_sign,
        fisher_sample_cap=cfg.method.fisher_sample_cap,
        gradient_stride=cfg.method.gradient_stride,
        mas_variant=cfg.method.mas_variant,
        max_relax_sweeps=cfg.method.max_relax_sweeps,
    )
    logs: list[TrainLog] = []
    score_matrix: list[list[float]] = []
    avg_acc: list[float] = []
    curves: list[tuple[int, int, list[float]]] = []
    for task in tasks:
        hooks.on_task_start(task, bank)
        on_epoch = None
        if cfg.eval_every_epochs > 0:
            seen = tasks[: task.task_id + 1]

            def on_epoch(epoch, current, _seen=seen, _tid=task.task_id):
                if epoch % cfg.eval_every_epochs == 0:
                    row = [
                        metrics.evaluate_task(t.val, current, params, layout, task_id=t.task_id).macro_f1
                        for t in _seen
                    ]
                    curves.append((_tid, epoch, row))

        try:
            bank, log = network.train_task(
                task.train_full(),
                bank,
                params,
                loss_cols=np.arange(layout.size),
                clamp_cols=layout.clamped_slice,
                hooks=hooks,
                rng=train_rng,
                on_epoch=on_epoch,
            )
        except network.NumericError as exc:
            raise network.NumericError(f"task {task.task_id}: {exc}") from exc
        hooks.on_task_end(task, bank, params)
        logs.append(log)
        row = [
            metrics.evaluate_task(t.val, bank, params, layout, task_id=t.task_id).macro_f1
            for t in tasks[: task.task_id + 1]
        ]
        score_matrix.append(row)
        avg_acc.append(metrics.average_accuracy(row))
    return RunRecord(
        config=cfg,
        task_logs=logs,
        score_matrix=score_matrix,
        avg_accuracy=avg_acc,
        epoch_curves=curves,
        wall_clock=time.perf_counter() - started,
        trial_seed=cfg.trial_seed,
    )


# ---------------------------------------------------------------------------
# sweeps

SWEEP_AXES = ("method.proportion", "method.reg_strength")


@dataclass
class SweepAxis:
    """One swept config field: an explicit grid or a log-uniform sample."""

    field: str
    values: list[float] | None = None  # grid mode
    log_low: float = 0.0
    log_high: float = 0.0
    trials: int = 0  # log-uniform mode when > 0

    def __post_init__(self):
        if self.field not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.field!r}")
        if (self.values is None) == (self.trials == 0):
            raise ConfigError("specify exactly one of grid values or a log-uniform budget")
        if self.trials and not 0 < self.log_low < self.log_high:
            raise ConfigError("log-uniform bounds need 0 < low < high")


@dataclass
class SweepTrial:
    value: float
    avg_accuracy: float
    seed: int


@dataclass
class SweepResult:
    axis_field: str
    trials: list[SweepTrial]
    window: int = SWEEP_WINDOW

    def window_curve(self):
        """(value, mean, std) rows over a sliding window of value-sorted trials.

        The window value is the median swept value; std uses ddof=1.
        """
        ordered = sorted(self.trials, key=lambda t: (t.value, t.seed))
        rows = []
        for start in range(0, max(0, len(ordered) - self.window + 1)):
            block = ordered[start : start + self.window]
            accs = np.array([t.avg_accuracy for t in block])
            vals = np.array([t.value for t in block])
            rows.append((float(np.median(vals)), float(accs.mean()), float(accs.std(ddof=1))))
        return rows


def _with_value(cfg: ExperimentConfig, fieldname: str, value: float, seed: int) -> ExperimentConfig:
    flat = config_to_flat(cfg)
    flat[fieldname] = float(value)
    flat["run.trial_seed"] = seed
    return flat_to_config(flat)


def sweep(base: ExperimentConfig, axis: SweepAxis, seeds: list[int],
          tasks: list[TaskDataset] | None = None, progress=None) -> SweepResult:
    """Run the axis over the given seeds; grid mode runs every value x seed,
    log-uniform mode samples ``axis.trials`` values and cycles the seeds."""
    if not seeds:
        raise ConfigError("need at least one seed")
    if tasks is None:
        tasks = build_tasks(base)
    jobs: list[tuple[float, int]] = []
    if axis.values is not None:
        jobs = [(float(v), s) for v in axis.values for s in seeds]
    else:
        rng = np.random.default_rng(mix_seed(base.dataset.master_seed, _SWEEP_SEED_TAG))
        lo, hi = math.log(axis.log_low), math.log(axis.log_high)
        for i in range(axis.trials):
            jobs.append((math.exp(rng.uniform(lo, hi)), seeds[i % len(seeds)]))
    trials = []
    for value, seed in jobs:
        record = run_experiment(_with_value(base, axis.field, value, seed), tasks=tasks)
        trials.append(SweepTrial(value, record.final_avg_accuracy, seed))
        if progress is not None:
            progress(trials[-1])
    return SweepResult(axis.field, trials)
