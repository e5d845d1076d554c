import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from modalgauge.embed_io import TaskEmbeddings, normalize_rows


def random_task(n=30, k=5, d=8, seed=0, task_id="task", model_id="model") -> TaskEmbeddings:
    """Unit-normalized random embeddings with uniform labels."""
    rng = np.random.default_rng(seed)
    images = normalize_rows(rng.normal(size=(n, d)).astype(np.float32))
    texts = normalize_rows(rng.normal(size=(k, d)).astype(np.float32))
    labels = rng.integers(0, k, size=n).astype(np.int64)
    return TaskEmbeddings(images, texts, labels, task_id, model_id)


def clustered_task(concentration: float, n=200, k=10, d=16, seed=0,
                   task_id="task", model_id="model") -> TaskEmbeddings:
    """Images drawn around one direction; higher concentration raises the
    intra-image similarity and hence the combined inter/intra measure."""
    rng = np.random.default_rng(seed)
    center = rng.normal(size=d)
    center /= np.linalg.norm(center)
    images = concentration * center + rng.normal(size=(n, d))
    texts = 0.5 * concentration * center + rng.normal(size=(k, d))
    images = normalize_rows(images.astype(np.float32))
    texts = normalize_rows(texts.astype(np.float32))
    labels = rng.integers(0, k, size=n).astype(np.int64)
    return TaskEmbeddings(images, texts, labels, task_id, model_id)


@pytest.fixture
def small_task():
    return random_task()
