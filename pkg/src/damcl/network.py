"""Bipolar dense associative memory.

A bank of trainable memory vectors drives synchronous neuron updates: the
field at neuron i is the summed difference of an interaction kernel applied
to the overlaps of each memory with the state clamped to +1 / -1 at i.
Training performs minibatch gradient descent with momentum on an even-power
error over a configurable set of loss neurons, with hook points for
sequential-learning methods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import accel


class NumericError(RuntimeError):
    """Training or inference produced a non-finite value."""


# ---------------------------------------------------------------------------
# layout and parameter containers


@dataclass(frozen=True)
class PatternLayout:
    """Column layout of encoded patterns: [pixels | task one-hot | class units].

    Pixel and task entries are bipolar (+1/-1) with exactly one task entry
    set to +1. Class entries hold 0 in probes and are read out as logits.
    """

    pixel_count: int
    task_count: int
    class_count: int = 10

    @property
    def size(self) -> int:
        return self.pixel_count + self.task_count + self.class_count

    @property
    def pixel_slice(self) -> slice:
        return slice(0, self.pixel_count)

    @property
    def task_slice(self) -> slice:
        return slice(self.pixel_count, self.pixel_count + self.task_count)

    @property
    def class_slice(self) -> slice:
        return slice(self.pixel_count + self.task_count, self.size)

    @property
    def clamped_slice(self) -> slice:
        """Columns of the bank kept inside [-1, 1] during training."""
        return slice(0, self.pixel_count + self.task_count)

    def pixel_cols(self) -> np.ndarray:
        return np.arange(self.pixel_count)

    def class_cols(self) -> np.ndarray:
        return np.arange(self.pixel_count + self.task_count, self.size)

    def validate_patterns(self, x: np.ndarray) -> None:
        """Raise ValueError unless every row satisfies the pattern invariants."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.size:
            raise ValueError(f"pattern width {x.shape[1]} != layout size {self.size}")
        front = x[:, self.clamped_slice]
        if not np.all(np.abs(front) == 1.0):
            raise ValueError("pixel/task entries must be exactly +1 or -1")
        task = x[:, self.task_slice]
        if not np.all(np.sum(task == 1.0, axis=1) == 1):
            raise ValueError("task block must have exactly one +1 entry")


@dataclass
class NetParams:
    """Network and training-loop hyperparameters.

    ``temp_init``/``temp_final`` set the per-epoch temperature interpolation;
    the kernel scale is beta = 1/temperature and sits inside the kernel
    argument. Defaults are the published full-scale tuning; see PRESETS for
    the alternative tuning and the desk-scale preset.
    """

    interaction_vertex: float = 2.0
    leak: float = 1e-2
    temp_init: float = 0.95
    temp_final: float = 0.95
    lr_init: float = 8e-2
    lr_decay: float = 0.999
    momentum: float = 0.6
    error_exponent: int = 1
    epochs: int = 500
    batch_size: int = 100
    memory_count: int = 512

    def __post_init__(self):
        if not self.interaction_vertex > 0:
            raise ValueError("interaction_vertex must be > 0")
        if self.leak < 0:
            raise ValueError("leak must be >= 0")
        if not (self.temp_init > 0 and self.temp_final > 0):
            raise ValueError("temperatures must be > 0")
        if not self.lr_init > 0:
            raise ValueError("lr_init must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if int(self.error_exponent) != self.error_exponent or self.error_exponent < 1:
            raise ValueError("error_exponent must be a positive integer")
        if self.epochs < 1 or self.batch_size < 1 or self.memory_count < 1:
            raise ValueError("epochs, batch_size and memory_count must be >= 1")

    def kernel_scale(self, width: int, temp: float | None = None) -> float:
        """Kernel argument scale beta = 1 / (temperature * pattern width).

        Overlaps of bipolar patterns grow with the dimension, so the scale
        normalizes them to roughly [-1/T, 1/T]; this is what keeps an order-1
        temperature usable across interaction vertices.
        """
        temp = self.temp_final if temp is None else temp
        return 1.0 / (temp * width)

    def schedule(self, epoch: int) -> tuple[float, float]:
        """(learning rate, temperature) for a 1-based epoch index."""
        lr = self.lr_init * self.lr_decay**epoch
        temp = self.temp_init + (self.temp_final - self.temp_init) * epoch / self.epochs
        return lr, temp


#: Named hyperparameter presets. "full" and "full-alt" are the two published
#: full-scale tunings (they disagree on temperature and initial learning
#: rate, so both are kept); "desk" shrinks the network for workstation runs.
PRESETS: dict[str, dict] = {
    "full": dict(memory_count=512, epochs=500, lr_init=8e-2, temp_init=0.95, temp_final=0.95),
    "full-alt": dict(memory_count=512, epochs=500, lr_init=1e-1, temp_init=0.875, temp_final=0.875),
    "desk": dict(memory_count=128, epochs=100, lr_init=8e-2, temp_init=0.95, temp_final=0.95),
}


@dataclass
class ItemSet:
    """Stacked encoded patterns with aligned targets (one row per item)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError("x and y must be 2-d with matching row counts")

    def __len__(self) -> int:
        return len(self.x)

    def take(self, idx) -> "ItemSet":
        return ItemSet(self.x[idx], self.y[idx])

    def shuffled(self, rng: np.random.Generator) -> "ItemSet":
        return self.take(rng.permutation(len(self)))

    @staticmethod
    def concat(parts: list["ItemSet"]) -> "ItemSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("cannot concatenate zero items")
        return ItemSet(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


@dataclass
class EpochStats:
    epoch: int
    lr: float
    temp: float
    error: float


@dataclass
class TrainLog:
    """Per-epoch schedule and summed error for one task's training run."""

    epochs: list[EpochStats] = field(default_factory=list)
    converged: bool = True


# ---------------------------------------------------------------------------
# interaction kernel


def _int_pow(x: np.ndarray, k: int) -> np.ndarray:
    # exponentiation by squaring; valid for negative bases, k >= 0
    out = np.ones_like(x)
    base = x.copy()
    while k:
        if k & 1:
            out = out * base
        k >>= 1
        if k:
            base = base * base
    return out


def _pos_pow(x: np.ndarray, p: float) -> np.ndarray:
    # x is elementwise >= 0; fast-path small integral exponents
    if float(p).is_integer() and 0 <= p <= 64:
        return _int_pow(x, int(p))
    return np.power(x, p)


def _kernel(a: np.ndarray, vertex: float, leak: float, deriv: bool):
    """Leaky rectified polynomial, no input validation.

    f(a) = a**vertex for a > 0, -leak*a otherwise. Returns (f, df) when
    ``deriv`` else f alone.
    """
    pos = a > 0
    ap = np.where(pos, a, 0.0)
    f = np.where(pos, _pos_pow(ap, vertex), -leak * a)
    if not deriv:
        return f
    df = np.where(pos, vertex * _pos_pow(ap, vertex - 1.0), -leak)
    return f, df


def interaction(x, vertex: float, leak: float):
    """Kernel value and derivative at ``x`` (scalar or array).

    Raises ValueError for non-finite inputs or out-of-range parameters.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("interaction input must be finite")
    if not vertex > 0:
        raise ValueError("vertex must be > 0")
    if leak < 0:
        raise ValueError("leak must be >= 0")
    f, df = _kernel(arr, vertex, leak, deriv=True)
    if arr.ndim == 0:
        return float(f), float(df)
    return f, df


# ---------------------------------------------------------------------------
# neuron fields


def _as_cols(cols, width: int) -> np.ndarray:
    if cols is None:
        return np.arange(width)
    if isinstance(cols, slice):
        return np.arange(width)[cols]
    cols = np.asarray(cols, dtype=int)
    if cols.ndim != 1:
        raise ValueError("cols must be one-dimensional")
    if len(cols) and (cols.min() < 0 or cols.max() >= width):
        raise ValueError("column index out of range")
    return cols


def _overlap_terms(X, bank, beta, vertex, leak, cols, deriv):
    """Kernel branch values at the clamped-on/off overlaps.

    For item b, memory k, and column c in ``cols`` the +/- overlaps are
    beta * (m_k . x_b + m_kc * (+/-1 - x_bc)). Returns (Fp, Fm) or
    (Fp, Fm, dFp, dFm), each shaped (items, memories, len(cols)).
    """
    S = X @ bank.T
    bc = bank[:, cols]
    xc = X[:, cols]
    ap = beta * (S[:, :, None] + bc[None, :, :] * (1.0 - xc)[:, None, :])
    am = beta * (S[:, :, None] + bc[None, :, :] * (-1.0 - xc)[:, None, :])
    if not deriv:
        return _kernel(ap, vertex, leak, False), _kernel(am, vertex, leak, False)
    Fp, dFp = _kernel(ap, vertex, leak, True)
    Fm, dFm = _kernel(am, vertex, leak, True)
    return Fp, Fm, dFp, dFm


def neuron_fields(X, bank, beta, vertex, leak, cols=None):
    """Fields at the given columns for one pattern (1-d) or a batch (2-d)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    bank = np.asarray(bank, dtype=float)
    if X2.shape[1] != bank.shape[1]:
        raise ValueError(f"pattern width {X2.shape[1]} != bank width {bank.shape[1]}")
    cols = _as_cols(cols, bank.shape[1])
    Fp, Fm = _overlap_terms(X2, bank, beta, vertex, leak, cols, deriv=False)
    fields = (Fp - Fm).sum(axis=1)
    return fields[0] if single else fields


def neuron_field(x, index: int, bank, beta, vertex, leak) -> float:
    """Field at a single neuron: sum over memories of f(+overlap) - f(-overlap)."""
    return float(neuron_fields(x, bank, beta, vertex, leak, cols=[index])[0])


def classify(X, bank, params: NetParams, layout: PatternLayout, beta=None) -> np.ndarray:
    """Logits for the class units: one synchronous field update, identity
    activation. Probe class entries are expected to hold the probe-init
    value 0; pixels and task bits are never updated."""
    if beta is None:
        beta = params.kernel_scale(layout.size)
    return neuron_fields(
        X, bank, beta, params.interaction_vertex, params.leak, cols=layout.class_cols()
    )


# ---------------------------------------------------------------------------
# relaxation


def relax_batch(X, bank, params: NetParams, update_cols, max_sweeps: int = 100, beta=None):
    """Synchronous sign-threshold sweeps on ``update_cols`` until stable.

    sign(0) maps to +1. Entries outside the mask stay clamped. Returns the
    relaxed states, a per-item converged flag (a sweep produced no change
    within the budget), and the number of sweeps each item used.
    """
    X = np.array(np.atleast_2d(np.asarray(X, dtype=float)))
    bank = np.asarray(bank, dtype=float)
    cols = _as_cols(update_cols, bank.shape[1])
    if len(cols) == 0:
        raise ValueError("update mask must not be empty")
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if beta is None:
        beta = params.kernel_scale(bank.shape[1])
    count = len(X)
    converged = np.zeros(count, dtype=bool)
    sweeps = np.zeros(count, dtype=int)
    active = np.arange(count)
    # keep the per-call working set below ~2M kernel evaluations
    chunk = max(1, 2_000_000 // max(1, bank.shape[0] * len(cols)))
    for sweep in range(1, max_sweeps + 1):
        if len(active) == 0:
            break
        still = []
        for start in range(0, len(active), chunk):
            idx = active[start : start + chunk]
            sub = X[idx]
            if accel.HAVE_NUMBA and bool(np.all(np.abs(sub[:, cols]) == 1.0)):
                f = accel.bipolar_fields(
                    sub, bank, beta, params.interaction_vertex, params.leak, cols
                )
            else:
                f = neuron_fields(
                    sub, bank, beta, params.interaction_vertex, params.leak, cols
                )
            new = np.where(f >= 0, 1.0, -1.0)
            changed = (new != sub[:, cols]).any(axis=1)
            X[np.ix_(idx, cols)] = new
            sweeps[idx] = sweep
            converged[idx[~changed]] = True
            still.append(idx[changed])
        active = np.concatenate(still) if still else np.array([], dtype=int)
    return X, converged, sweeps


def relax(x, bank, params: NetParams, update_cols, max_sweeps: int = 100, beta=None):
    """Single-pattern relaxation; returns (state, converged)."""
    out, conv, _ = relax_batch(x, bank, params, update_cols, max_sweeps, beta)
    return out[0], bool(conv[0])


# ---------------------------------------------------------------------------
# loss and analytic gradient

_CHUNK = 256


def batch_loss_and_grad(X, Y, bank, params: NetParams, beta, loss_cols, chunk: int = _CHUNK):
    """Summed even-power error over the loss columns and its exact bank gradient.

    loss = sum_b sum_c (y_bc - tanh(field_bc))**(2m). The gradient follows the
    chain rule through tanh and the kernel; the field derivative w.r.t. bank
    entry (k, j) is beta * (dFp * xp_j - dFm * xm_j) with xp/xm the pattern
    clamped at the loss column.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    bank = np.asarray(bank, dtype=float)
    if len(X) == 0:
        raise ValueError("batch must not be empty")
    if X.shape[1] != bank.shape[1]:
        raise ValueError("pattern width does not match bank width")
    cols = _as_cols(loss_cols, bank.shape[1])
    if Y.shape != (len(X), len(cols)):
        raise ValueError("targets must be shaped (items, loss columns)")
    m = int(params.error_exponent)
    vertex, leak = params.interaction_vertex, params.leak
    full = len(cols) == bank.shape[1] and np.array_equal(cols, np.arange(bank.shape[1]))
    if accel.HAVE_NUMBA and full and accel.all_bipolar(X):
        loss, fields, grad = accel.bipolar_loss_grad(X, Y, bank, beta, vertex, leak, m)
        if not np.isfinite(fields).all():
            bad = int(np.argwhere(~np.isfinite(fields))[0][0])
            raise NumericError(f"non-finite field at item {bad}")
        if not (np.isfinite(loss) and np.isfinite(grad).all()):
            raise NumericError("non-finite loss or gradient")
        return loss, grad
    loss = 0.0
    grad = np.zeros_like(bank)
    for start in range(0, len(X), chunk):
        Xc = X[start : start + chunk]
        Yc = Y[start : start + chunk]
        Fp, Fm, dFp, dFm = _overlap_terms(Xc, bank, beta, vertex, leak, cols, deriv=True)
        fields = (Fp - Fm).sum(axis=1)
        if not np.isfinite(fields).all():
            bad = int(np.argwhere(~np.isfinite(fields))[0][0])
            raise NumericError(f"non-finite field at item {start + bad}")
        act = np.tanh(fields)
        resid = Yc - act
        loss += float(_int_pow(resid, 2 * m).sum())
        e = (-2.0 * m) * _int_pow(resid, 2 * m - 1) * (1.0 - act * act)
        D = dFp - dFm
        w = np.einsum("bc,bkc->bk", e, D)
        grad += beta * (w.T @ Xc)
        xc = Xc[:, cols]
        corr = dFp * (1.0 - xc)[:, None, :] + dFm * (1.0 + xc)[:, None, :]
        grad[:, cols] += beta * np.einsum("bc,bkc->kc", e, corr)
    if not (np.isfinite(loss) and np.isfinite(grad).all()):
        raise NumericError("non-finite loss or gradient")
    return loss, grad


def per_item_loss_gradients(X, Y, bank, params: NetParams, beta, loss_cols, chunk: int = 32):
    """Yield (offset, grads) where grads[b] is the loss gradient of item offset+b."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    bank = np.asarray(bank, dtype=float)
    cols = _as_cols(loss_cols, bank.shape[1])
    m = int(params.error_exponent)
    for start in range(0, len(X), chunk):
        Xc = X[start : start + chunk]
        Yc = Y[start : start + chunk]
        Fp, Fm, dFp, dFm = _overlap_terms(
            Xc, bank, beta, params.interaction_vertex, params.leak, cols, deriv=True
        )
        fields = (Fp - Fm).sum(axis=1)
        act = np.tanh(fields)
        e = (-2.0 * m) * _int_pow(Yc - act, 2 * m - 1) * (1.0 - act * act)
        D = dFp - dFm
        w = np.einsum("bc,bkc->bk", e, D)
        g = beta * np.einsum("bk,bj->bkj", w, Xc)
        xc = Xc[:, cols]
        corr = dFp * (1.0 - xc)[:, None, :] + dFm * (1.0 + xc)[:, None, :]
        g[:, :, cols] += beta * e[:, None, :] * corr
        yield start, g


# ---------------------------------------------------------------------------
# training loop


class TrainingHooks:
    """Seam for sequential-learning methods; the base class is vanilla training.

    ``epoch_data`` returns the effective (already shuffled) item list for one
    epoch; ``augment_loss`` may add a penalty and its gradient;
    ``transform_gradient`` may replace the update direction; ``after_step``
    observes each applied update when ``needs_step_deltas`` is set.
    """

    needs_step_deltas = False

    def on_task_start(self, task, bank) -> None:
        pass

    def epoch_data(self, task_items: ItemSet, rng: np.random.Generator) -> ItemSet:
        return task_items.shuffled(rng)

    def augment_loss(self, bank):
        return 0.0, None

    def transform_gradient(self, grad, bank, params, beta):
        return grad

    def after_step(self, base_grad, step) -> None:
        pass

    def on_task_end(self, task, bank, params) -> None:
        pass


def init_bank(params: NetParams, width: int, rng: np.random.Generator) -> np.ndarray:
    """Fresh memory bank, entries drawn from Normal(0, 0.1)."""
    return rng.normal(0.0, 0.1, size=(params.memory_count, width))


def train_task(
    items: ItemSet,
    bank: np.ndarray,
    params: NetParams,
    *,
    loss_cols,
    clamp_cols: slice | None = None,
    hooks: TrainingHooks | None = None,
    rng: np.random.Generator,
    on_epoch=None,
):
    """Train the bank on one task; returns (new bank, TrainLog).

    Targets are autoassociative: each pattern is its own target over
    ``loss_cols`` (pass items whose class block carries the label bits for
    classification training). Per epoch: lr = lr_init * lr_decay**epoch,
    temperature interpolates from temp_init to temp_final, and the kernel
    scale is 1/(temperature * width). Per batch: base gradient, hook penalty,
    hook gradient transform, momentum update, descent step, then clamping of
    ``clamp_cols`` (every column when None; pass an empty slice to disable).
    The momentum buffer starts at zero.
    """
    if len(items) == 0:
        raise ValueError("task must not be empty")
    hooks = hooks if hooks is not None else TrainingHooks()
    bank = np.array(bank, dtype=float)
    mom = np.zeros_like(bank)
    clamp = slice(0, bank.shape[1]) if clamp_cols is None else clamp_cols
    cols = _as_cols(loss_cols, bank.shape[1])
    log = TrainLog()
    for epoch in range(1, params.epochs + 1):
        lr, temp = params.schedule(epoch)
        beta = params.kernel_scale(bank.shape[1], temp)
        ep_items = hooks.epoch_data(items, rng)
        err = 0.0
        for bi, start in enumerate(range(0, len(ep_items), params.batch_size)):
            bx = ep_items.x[start : start + params.batch_size]
            by = bx[:, cols]
            try:
                loss, grad = batch_loss_and_grad(bx, by, bank, params, beta, cols)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {bi}: {exc}") from exc
            _, pgrad = hooks.augment_loss(bank)
            total = grad if pgrad is None else grad + pgrad
            total = hooks.transform_gradient(total, bank, params, beta)
            mom *= params.momentum
            mom += total
            before = bank.copy() if hooks.needs_step_deltas else None
            bank -= lr * mom
            np.clip(bank[:, clamp], -1.0, 1.0, out=bank[:, clamp])
            if before is not None:
                hooks.after_step(grad, bank - before)
            if not np.isfinite(bank).all():
                raise NumericError(f"non-finite bank entries after epoch {epoch} batch {bi}")
            err += loss
        log.epochs.append(EpochStats(epoch, lr, temp, err))
        if on_epoch is not None:
            on_epoch(epoch, bank)
    return bank, log
