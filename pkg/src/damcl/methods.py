"""Sequential-learning methods behind the training-hook seam.

Rehearsal methods grow a replay buffer that is merged into every epoch;
pseudorehearsal fills the buffer with relaxed random probes instead of real
items. The episodic-gradient methods keep buffers only to compute reference
gradients and project each batch update. The quadratic-penalty methods anchor
the bank near previous optima with per-entry importances: uniform (l2),
squared loss gradients (ewc), mean absolute output gradients (mas), or a
discrete path integral of grad . step (si).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import network
from .datasets import TaskDataset, with_class_bits
from .network import ItemSet, NetParams, PatternLayout, TrainingHooks
from .projection import agem_project, gem_project

METHOD_NAMES = (
    "vanilla",
    "rehearsal",
    "pseudorehearsal",
    "gem",
    "agem",
    "l2",
    "ewc",
    "mas",
    "si",
)


# ---------------------------------------------------------------------------
# buffer helpers


def sample_buffer(items: ItemSet, proportion: float, rng: np.random.Generator) -> ItemSet:
    """floor(proportion * count) items drawn without replacement."""
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must be in [0, 1]")
    keep = math.floor(proportion * len(items))
    if keep == 0:
        return ItemSet(items.x[:0], items.y[:0])
    return items.take(rng.choice(len(items), size=keep, replace=False))


def merge_for_epoch(task_items: ItemSet, buffers: list[ItemSet],
                    rng: np.random.Generator) -> ItemSet:
    """Current task plus every buffered item, freshly shuffled."""
    merged = ItemSet.concat([task_items] + list(buffers))
    return merged.shuffled(rng)


def generate_pseudoitems(
    bank: np.ndarray,
    params: NetParams,
    layout: PatternLayout,
    count: int,
    task_id: int,
    rng: np.random.Generator,
    max_sweeps: int = 100,
) -> tuple[ItemSet, int]:
    """Relax random probes into stable states and label them with the readout.

    Probes draw pixels uniformly from +/-1, carry the completing task's
    one-hot, and relax over the pixel neurons only. Unconverged probes are
    kept; the count of them is returned alongside the items.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return ItemSet(np.zeros((0, layout.size)), np.zeros((0, layout.class_count))), 0
    x = np.zeros((count, layout.size))
    x[:, layout.pixel_slice] = rng.choice([-1.0, 1.0], size=(count, layout.pixel_count))
    x[:, layout.task_slice] = -1.0
    x[:, layout.pixel_count + task_id] = 1.0
    relaxed, converged, _ = network.relax_batch(
        x, bank, params, layout.pixel_cols(), max_sweeps=max_sweeps
    )
    logits = network.classify(relaxed, bank, params, layout)
    labels = np.argmax(logits, axis=1)
    y = np.full((count, layout.class_count), -1.0)
    y[np.arange(count), labels] = 1.0
    return ItemSet(relaxed, y), int((~converged).sum())


# ---------------------------------------------------------------------------
# rehearsal family


class VanillaMethod(TrainingHooks):
    """Plain sequential training; every hook is the identity."""


class RehearsalMethod(TrainingHooks):
    def __init__(self, proportion: float, seed: int):
        self.proportion = proportion
        self.rng = np.random.default_rng(seed)
        self.buffers: list[ItemSet] = []

    def epoch_data(self, task_items, rng):
        return merge_for_epoch(task_items, self.buffers, rng)

    def on_task_end(self, task: TaskDataset, bank, params):
        if self.proportion > 0:
            self.buffers.append(sample_buffer(task.train_full(), self.proportion, self.rng))


class PseudorehearsalMethod(TrainingHooks):
    def __init__(self, proportion: float, seed: int, layout: PatternLayout,
                 max_sweeps: int = 100):
        self.proportion = proportion
        self.rng = np.random.default_rng(seed)
        self.layout = layout
        self.max_sweeps = max_sweeps
        self.buffers: list[ItemSet] = []
        self.unconverged_total = 0

    def epoch_data(self, task_items, rng):
        return merge_for_epoch(task_items, self.buffers, rng)

    def on_task_end(self, task: TaskDataset, bank, params):
        count = math.floor(self.proportion * len(task.train))
        if count == 0:
            return
        items, unconverged = generate_pseudoitems(
            bank, params, self.layout, count, task.task_id, self.rng, self.max_sweeps
        )
        items = with_class_bits(items, self.layout)
        if unconverged:
            warnings.warn(
                f"task {task.task_id}: {unconverged}/{count} pseudoitems kept unconverged"
            )
            self.unconverged_total += unconverged
        self.buffers.append(items)


# ---------------------------------------------------------------------------
# episodic-gradient family


def reference_gradients(
    buffers: list[ItemSet],
    bank: np.ndarray,
    params: NetParams,
    beta: float,
    loss_cols,
    averaged: bool,
) -> np.ndarray | None:
    """Flattened loss gradients over each buffer (or their union when averaged).

    Rows are in row-major bank order. Empty buffers are skipped with a
    warning; returns None when nothing is left.
    """
    kept = []
    for buf in buffers:
        if len(buf) == 0:
            warnings.warn("skipping empty reference buffer")
            continue
        kept.append(buf)
    if not kept:
        return None
    if averaged:
        union = ItemSet.concat(kept)
        _, grad = network.batch_loss_and_grad(union.x, union.y, bank, params, beta, loss_cols)
        return grad.reshape(1, -1)
    rows = []
    for buf in kept:
        _, grad = network.batch_loss_and_grad(buf.x, buf.y, bank, params, beta, loss_cols)
        rows.append(grad.ravel())
    return np.stack(rows)


class GemMethod(TrainingHooks):
    """Gradient projection against per-task buffer gradients (averaged=False)
    or one union-buffer gradient with the closed-form projection (True)."""

    def __init__(self, proportion: float, seed: int, layout: PatternLayout,
                 averaged: bool = False, stride: int = 1, tol: float = 1e-8):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.proportion = proportion
        self.rng = np.random.default_rng(seed)
        self.layout = layout
        self.averaged = averaged
        self.stride = stride
        self.tol = tol
        self.buffers: list[ItemSet] = []
        self._refs: np.ndarray | None = None
        self._batch_index = 0
        self.unconverged_solves = 0

    def on_task_start(self, task, bank):
        self._batch_index = 0
        self._refs = None

    def transform_gradient(self, grad, bank, params, beta):
        if not self.buffers:
            return grad
        if self._refs is None or self._batch_index % self.stride == 0:
            self._refs = reference_gradients(
                self.buffers, bank, params, beta, np.arange(self.layout.size), self.averaged
            )
        self._batch_index += 1
        if self._refs is None:
            return grad
        flat_in = grad.ravel()
        if self.averaged:
            flat_out = agem_project(flat_in, self._refs[0])
        else:
            flat_out, info = gem_project(flat_in, self._refs, tol=self.tol)
            if info.projected and not info.converged:
                self.unconverged_solves += 1
                warnings.warn("dual projection hit its iteration budget")
        if flat_out is flat_in:
            return grad
        return flat_out.reshape(grad.shape)

    def on_task_end(self, task: TaskDataset, bank, params):
        if self.proportion > 0:
            self.buffers.append(sample_buffer(task.train_full(), self.proportion, self.rng))


# ---------------------------------------------------------------------------
# quadratic-penalty family


def quadratic_penalty(bank: np.ndarray, terms, strength: float, coeff: float = 1.0):
    """Penalty coeff*strength*sum_terms sum_k w_k (anchor_k - bank_k)^2 and its
    gradient w.r.t. the bank."""
    penalty = 0.0
    grad = np.zeros_like(bank)
    for anchor, importance in terms:
        if anchor.shape != bank.shape or importance.shape != bank.shape:
            raise ValueError("penalty term shape does not match the bank")
        diff = bank - anchor
        penalty += float((importance * diff * diff).sum())
        grad += importance * diff
    scale = coeff * strength
    return scale * penalty, (2.0 * scale) * grad


class PenaltyMethod(TrainingHooks):
    """Quadratic anchor penalty; subclasses supply importances per task."""

    coeff = 1.0

    def __init__(self, strength: float):
        if strength < 0:
            raise ValueError("penalty strength must be >= 0")
        self.strength = strength
        self.terms: list[tuple[np.ndarray, np.ndarray]] = []

    def augment_loss(self, bank):
        if self.strength == 0 or not self.terms:
            return 0.0, None
        return quadratic_penalty(bank, self.terms, self.strength, self.coeff)


class L2Method(PenaltyMethod):
    """Uniform importance; one new anchor term per completed task."""

    def on_task_end(self, task, bank, params):
        self.terms.append((bank.copy(), np.ones_like(bank)))


def fisher_importance(
    items: ItemSet,
    bank: np.ndarray,
    params: NetParams,
    beta: float,
    loss_cols,
    sample_cap: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Squared per-item loss gradients averaged over the sample."""
    if len(items) == 0:
        raise ValueError("importance sample must not be empty")
    if sample_cap and len(items) > sample_cap:
        if rng is None:
            raise ValueError("sample_cap needs a generator")
        items = items.take(rng.choice(len(items), size=sample_cap, replace=False))
    acc = np.zeros_like(bank)
    for _, grads in network.per_item_loss_gradients(items.x, items.y, bank, params, beta, loss_cols):
        acc += (grads * grads).sum(axis=0)
    return acc / len(items)


class EwcMethod(PenaltyMethod):
    """Fisher-style importance, a new anchor term per completed task, and the
    conventional extra 1/2 on the penalty coefficient."""

    coeff = 0.5

    def __init__(self, strength: float, layout: PatternLayout, seed: int,
                 sample_cap: int = 0):
        super().__init__(strength)
        self.layout = layout
        self.sample_cap = sample_cap
        self.rng = np.random.default_rng(seed)

    def on_task_end(self, task: TaskDataset, bank, params):
        importance = fisher_importance(
            task.train_full(), bank, params, params.kernel_scale(self.layout.size),
            np.arange(self.layout.size), self.sample_cap, self.rng,
        )
        self.terms.append((bank.copy(), importance))


def mas_importance(
    items: ItemSet,
    bank: np.ndarray,
    params: NetParams,
    beta: float,
    layout: PatternLayout,
    chunk: int = 32,
) -> np.ndarray:
    """Mean over items and class outputs of |d logit / d bank entry|.

    The readout is linear in the fields, so the per-output derivative at
    bank entry (k, j) is beta*(dFp*xp_j - dFm*xm_j); the mean of its absolute
    value factorizes over the non-class columns.
    """
    if len(items) == 0:
        raise ValueError("importance sample must not be empty")
    cols = layout.class_cols()
    n_out = len(cols)
    acc = np.zeros_like(bank)
    for start in range(0, len(items), chunk):
        X = items.x[start : start + chunk]
        _, _, dFp, dFm = network._overlap_terms(
            X, bank, beta, params.interaction_vertex, params.leak, cols, deriv=True
        )
        D = dFp - dFm
        absD = np.abs(D)
        acc += absD.sum(axis=2).T @ np.abs(X) / n_out
        xc = X[:, cols]
        true = np.abs(D * xc[:, None, :] + dFp * (1.0 - xc)[:, None, :]
                      + dFm * (1.0 + xc)[:, None, :])
        acc[:, cols] += (true - absD * np.abs(xc)[:, None, :]).sum(axis=0) / n_out
    return beta * acc / len(items)


def mas_importance_l2norm(
    items: ItemSet,
    bank: np.ndarray,
    params: NetParams,
    beta: float,
    layout: PatternLayout,
    chunk: int = 32,
) -> np.ndarray:
    """Single-expansion shortcut: mean |gradient of the squared logit norm|."""
    if len(items) == 0:
        raise ValueError("importance sample must not be empty")
    cols = layout.class_cols()
    acc = np.zeros_like(bank)
    for start in range(0, len(items), chunk):
        X = items.x[start : start + chunk]
        Fp, Fm, dFp, dFm = network._overlap_terms(
            X, bank, beta, params.interaction_vertex, params.leak, cols, deriv=True
        )
        fields = (Fp - Fm).sum(axis=1)
        e = 2.0 * fields
        D = dFp - dFm
        w = np.einsum("bc,bkc->bk", e, D)
        g = beta * np.einsum("bk,bj->bkj", w, X)
        xc = X[:, cols]
        corr = dFp * (1.0 - xc)[:, None, :] + dFm * (1.0 + xc)[:, None, :]
        g[:, :, cols] += beta * e[:, None, :] * corr
        acc += np.abs(g).sum(axis=0)
    return acc / len(items)


class MasMethod(PenaltyMethod):
    """Output-sensitivity importance accumulated across tasks in one term."""

    def __init__(self, strength: float, layout: PatternLayout, variant: str = "per-output"):
        super().__init__(strength)
        if variant not in ("per-output", "l2norm"):
            raise ValueError(f"unknown mas variant {variant!r}")
        self.layout = layout
        self.variant = variant
        self.importance: np.ndarray | None = None

    def on_task_end(self, task: TaskDataset, bank, params):
        compute = mas_importance if self.variant == "per-output" else mas_importance_l2norm
        fresh = compute(task.train, bank, params, params.kernel_scale(self.layout.size), self.layout)
        self.importance = fresh if self.importance is None else self.importance + fresh
        self.terms = [(bank.copy(), self.importance.copy())]


class SiMethod(PenaltyMethod):
    """Path-integral importance: per update accumulate -(base grad . step),
    at task end add path/(displacement^2 + damping) into the running total."""

    needs_step_deltas = True

    def __init__(self, strength: float, damping: float = 1e-3, raw_sign: bool = False):
        super().__init__(strength)
        if damping <= 0:
            raise ValueError("damping must be > 0")
        self.damping = damping
        # raw_sign selects the +grad.step integrand variant for comparison
        self.sign = 1.0 if raw_sign else -1.0
        self.path: np.ndarray | None = None
        self.start: np.ndarray | None = None
        self.total: np.ndarray | None = None

    def on_task_start(self, task, bank):
        self.start = bank.copy()
        self.path = np.zeros_like(bank)

    def after_step(self, base_grad, step):
        if self.path is None or self.path.shape != base_grad.shape:
            raise ValueError("task was not started or shapes changed")
        self.path += self.sign * base_grad * step

    def on_task_end(self, task, bank, params):
        disp = bank - self.start
        if self.total is None:
            self.total = np.zeros_like(bank)
        self.total += self.path / (disp * disp + self.damping)
        self.terms = [(bank.copy(), self.total.copy())]
        self.path = np.zeros_like(bank)


# ---------------------------------------------------------------------------
# construction

_METHOD_SEED_TAG = 0x6D657468


def build_method(
    name: str,
    *,
    layout: PatternLayout,
    trial_seed: int,
    proportion: float = 0.0,
    reg_strength: float = 0.0,
    si_damping: float = 1e-3,
    si_raw_sign: bool = False,
    fisher_sample_cap: int = 0,
    gradient_stride: int = 1,
    mas_variant: str = "per-output",
    max_relax_sweeps: int = 100,
) -> TrainingHooks:
    """Instantiate a method's hooks; buffer/importance sampling uses its own
    generator derived from the trial seed so the training stream is untouched."""
    from .datasets import mix_seed

    seed = mix_seed(trial_seed, _METHOD_SEED_TAG)
    if name == "vanilla":
        return VanillaMethod()
    if name == "rehearsal":
        return RehearsalMethod(proportion, seed)
    if name == "pseudorehearsal":
        return PseudorehearsalMethod(proportion, seed, layout, max_relax_sweeps)
    if name == "gem":
        return GemMethod(proportion, seed, layout, averaged=False, stride=gradient_stride)
    if name == "agem":
        return GemMethod(proportion, seed, layout, averaged=True, stride=gradient_stride)
    if name == "l2":
        return L2Method(reg_strength)
    if name == "ewc":
        return EwcMethod(reg_strength, layout, seed, fisher_sample_cap)
    if name == "mas":
        return MasMethod(reg_strength, layout, mas_variant)
    if name == "si":
        return SiMethod(reg_strength, si_damping, si_raw_sign)
    raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")
