import numpy as np
import pytest

from conftest import random_full_items, toy_params
from damcl.network import (
    ItemSet,
    NetParams,
    NumericError,
    TrainingHooks,
    batch_loss_and_grad,
    init_bank,
    train_task,
)


def _items(layout, count, seed):
    return random_full_items(layout, count, np.random.default_rng(seed))


class _OrderedHooks(TrainingHooks):
    """Keep the epoch item order fixed so single steps are reproducible."""

    def epoch_data(self, task_items, rng):
        return task_items


def test_single_step_is_plain_gradient_step(toy_layout):
    # momentum 0, decay 1, one epoch, one batch: bank' = bank - lr * grad
    params = toy_params(momentum=0.0, lr_decay=1.0, epochs=1, batch_size=64)
    items = _items(toy_layout, 6, 0)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(1))
    cols = np.arange(toy_layout.size)
    beta = params.kernel_scale(toy_layout.size, params.temp_final)
    _, grad = batch_loss_and_grad(items.x, items.x[:, cols], bank, params, beta, cols)
    expected = bank - params.lr_init * grad
    expected[:, toy_layout.clamped_slice] = np.clip(
        expected[:, toy_layout.clamped_slice], -1.0, 1.0
    )
    out, log = train_task(
        items, bank, params, loss_cols=cols, clamp_cols=toy_layout.clamped_slice,
        hooks=_OrderedHooks(), rng=np.random.default_rng(2),
    )
    assert np.array_equal(out, expected)
    assert len(log.epochs) == 1 and log.converged


def test_bit_identical_reruns(toy_layout):
    params = toy_params(epochs=4, batch_size=4, memory_count=3)
    items = _items(toy_layout, 10, 3)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(4))
    runs = []
    for _ in range(2):
        out, log = train_task(
            items, bank, params, loss_cols=np.arange(toy_layout.size),
            clamp_cols=toy_layout.clamped_slice, rng=np.random.default_rng(5),
        )
        runs.append((out, [(e.epoch, e.lr, e.temp, e.error) for e in log.epochs]))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_error_decreases_on_small_task(toy_layout):
    params = toy_params(epochs=25, batch_size=8, memory_count=16)
    items = _items(toy_layout, 8, 6)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(7))
    _, log = train_task(
        items, bank, params, loss_cols=np.arange(toy_layout.size),
        clamp_cols=toy_layout.clamped_slice, rng=np.random.default_rng(8),
    )
    assert log.epochs[-1].error < log.epochs[0].error


def test_clamp_invariant(toy_layout):
    params = toy_params(epochs=6, batch_size=4, memory_count=5, lr_init=0.5)
    items = _items(toy_layout, 12, 9)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(10))
    out, _ = train_task(
        items, bank, params, loss_cols=np.arange(toy_layout.size),
        clamp_cols=toy_layout.clamped_slice, rng=np.random.default_rng(11),
    )
    assert np.abs(out[:, toy_layout.clamped_slice]).max() <= 1.0


def test_schedule_invariants():
    decaying = toy_params(lr_decay=0.9, epochs=5)
    lrs = [decaying.schedule(e)[0] for e in range(1, 6)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    flat = toy_params(lr_decay=1.0, temp_init=0.8, temp_final=0.8, epochs=5)
    assert len({flat.schedule(e)[0] for e in range(1, 6)}) == 1
    assert all(flat.schedule(e)[1] == 0.8 for e in range(1, 6))
    ramp = toy_params(temp_init=1.0, temp_final=0.5, epochs=4)
    temps = [ramp.schedule(e)[1] for e in range(1, 5)]
    assert temps[-1] == 0.5
    assert all(a > b for a, b in zip(temps, temps[1:]))


def test_empty_task_rejected(toy_layout):
    params = toy_params()
    with pytest.raises(ValueError):
        train_task(
            ItemSet(np.zeros((0, toy_layout.size)), np.zeros((0, 10))),
            np.zeros((2, toy_layout.size)), params,
            loss_cols=np.arange(toy_layout.size), rng=np.random.default_rng(0),
        )


def test_non_finite_abort_carries_context(toy_layout):
    # a divergent first step leaves finite but astronomically large entries;
    # the second epoch's fields then overflow and must abort with context
    params = toy_params(epochs=2, lr_init=1e280)
    items = _items(toy_layout, 4, 12)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(13))
    with pytest.raises(NumericError, match="epoch 2"):
        train_task(
            items, bank, params, loss_cols=np.arange(toy_layout.size),
            clamp_cols=slice(0, 0), rng=np.random.default_rng(14),
        )


class _CountingHooks(TrainingHooks):
    def __init__(self):
        self.epochs = 0
        self.augments = 0

    def epoch_data(self, task_items, rng):
        self.epochs += 1
        return task_items.shuffled(rng)

    def augment_loss(self, bank):
        self.augments += 1
        return 0.0, None


def test_hooks_called_per_epoch_and_batch(toy_layout):
    params = toy_params(epochs=3, batch_size=4)
    items = _items(toy_layout, 10, 15)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(16))
    hooks = _CountingHooks()
    train_task(
        items, bank, params, loss_cols=np.arange(toy_layout.size),
        clamp_cols=toy_layout.clamped_slice, hooks=hooks, rng=np.random.default_rng(17),
    )
    assert hooks.epochs == 3
    assert hooks.augments == 3 * 3  # ceil(10 / 4) batches per epoch


def test_input_bank_not_mutated(toy_layout):
    params = toy_params(epochs=2)
    items = _items(toy_layout, 6, 18)
    bank = init_bank(params, toy_layout.size, np.random.default_rng(19))
    keep = bank.copy()
    train_task(
        items, bank, params, loss_cols=np.arange(toy_layout.size),
        clamp_cols=toy_layout.clamped_slice, rng=np.random.default_rng(20),
    )
    assert np.array_equal(bank, keep)
