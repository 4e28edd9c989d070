import numpy as np
import pytest

from damcl.datasets import build_task_sequence, synthetic_raw_set
from damcl.network import ItemSet, NetParams, PatternLayout


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_layout():
    # 4 pixels, 2 tasks, 10 classes -> width 16
    return PatternLayout(pixel_count=4, task_count=2)


def toy_params(**overrides) -> NetParams:
    base = dict(interaction_vertex=2.0, epochs=3, batch_size=8, memory_count=4)
    base.update(overrides)
    return NetParams(**base)


def random_probe_items(layout: PatternLayout, count, rng) -> ItemSet:
    """Probe-form items: bipolar pixels/task one-hot, class block 0."""
    x = np.zeros((count, layout.size))
    x[:, layout.pixel_slice] = rng.choice([-1.0, 1.0], size=(count, layout.pixel_count))
    x[:, layout.task_slice] = -1.0
    task_ids = rng.integers(0, layout.task_count, size=count)
    x[np.arange(count), layout.pixel_count + task_ids] = 1.0
    labels = rng.integers(0, layout.class_count, size=count)
    y = np.full((count, layout.class_count), -1.0)
    y[np.arange(count), labels] = 1.0
    return ItemSet(x, y)


def random_full_items(layout: PatternLayout, count, rng) -> ItemSet:
    """Storage-form items: class block carries the +/-1 one-hot label."""
    items = random_probe_items(layout, count, rng)
    x = items.x.copy()
    x[:, layout.class_slice] = items.y
    return ItemSet(x, items.y)


@pytest.fixture(scope="session")
def small_tasks():
    """Two tiny real-pipeline tasks over the synthetic corpus."""
    src = synthetic_raw_set(600, seed=77)
    return build_task_sequence(src, task_count=2, items_per_task=120, master_seed=5)
