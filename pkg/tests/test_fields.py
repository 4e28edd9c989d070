import numpy as np
import pytest

from conftest import random_probe_items, toy_params
from damcl.network import NetParams, classify, neuron_field, neuron_fields


def test_hand_evaluated_field():
    # memory (1,1), state (1,-1), clamp second neuron: f(2) - f(0) = 4
    bank = np.array([[1.0, 1.0]])
    x = np.array([1.0, -1.0])
    assert neuron_field(x, 1, bank, 1.0, 2, 0.01) == pytest.approx(4.0)


def test_doubling_beta():
    bank = np.array([[1.0, 1.0]])
    x = np.array([1.0, -1.0])
    assert neuron_field(x, 1, bank, 2.0, 2, 0.01) == pytest.approx(16.0)


def test_zero_bank_gives_zero_fields():
    bank = np.zeros((3, 6))
    x = np.ones(6)
    for i in range(6):
        assert neuron_field(x, i, bank, 1.0, 2, 0.01) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        neuron_fields(np.ones(5), np.zeros((2, 6)), 1.0, 2, 0.01)


def test_batch_matches_single():
    rng = np.random.default_rng(3)
    bank = rng.normal(size=(4, 8))
    X = rng.choice([-1.0, 1.0], size=(5, 8))
    batch = neuron_fields(X, bank, 0.7, 3, 0.01)
    for b in range(5):
        for i in range(8):
            assert batch[b, i] == pytest.approx(
                neuron_field(X[b], i, bank, 0.7, 3, 0.01), rel=1e-12
            )


def test_classify_zero_bank_ties_to_class_zero(toy_layout):
    params = toy_params()
    bank = np.zeros((4, toy_layout.size))
    probe = random_probe_items(toy_layout, 1, np.random.default_rng(0)).x[0]
    logits = classify(probe, bank, params, toy_layout)
    assert np.all(logits == 0.0)
    assert int(np.argmax(logits)) == 0


def test_classify_single_stored_item_wins_its_class(toy_layout):
    params = toy_params()
    rng = np.random.default_rng(1)
    items = random_probe_items(toy_layout, 1, rng)
    label = int(np.argmax(items.y[0]))
    memory = items.x[0].copy()
    memory[toy_layout.class_slice] = items.y[0]
    logits = classify(items.x[0], memory[None, :], params, toy_layout)
    assert int(np.argmax(logits)) == label
    # the true class is the only positive logit
    assert logits[label] > 0
    assert np.all(np.delete(logits, label) < 0)


def test_classify_depends_on_task_bits(toy_layout):
    params = toy_params()
    rng = np.random.default_rng(2)
    items = random_probe_items(toy_layout, 1, rng)
    memory = items.x[0].copy()
    memory[toy_layout.class_slice] = items.y[0]
    probe_a = items.x[0].copy()
    probe_b = items.x[0].copy()
    # flip the task one-hot to the other task
    probe_b[toy_layout.task_slice] = -probe_b[toy_layout.task_slice]
    la = classify(probe_a, memory[None, :], params, toy_layout)
    lb = classify(probe_b, memory[None, :], params, toy_layout)
    assert not np.allclose(la, lb)


def test_classify_is_pure(toy_layout):
    params = toy_params()
    rng = np.random.default_rng(4)
    bank = rng.normal(size=(3, toy_layout.size))
    probe = random_probe_items(toy_layout, 2, rng).x
    first = classify(probe, bank, params, toy_layout)
    second = classify(probe, bank, params, toy_layout)
    assert np.array_equal(first, second)
