"""Run a (stub or real) dual encoder over a dataset and emit modalgauge task
files: unit-normalized image/text embedding matrices, labels, manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from modalgauge.embed_io import Manifest, TaskEmbeddings, normalize_rows, save_task
from modalgauge.errors import ModalGaugeError

from .datasets import Dataset, resolve_dataset
from .encoders import Encoder, resolve_encoder

DEFAULT_PROMPT = "a photo of a {class}"
PLACEHOLDER = "{class}"


class MetadataError(ModalGaugeError):
    """Dataset metadata disagrees with its labels."""


@dataclass
class ExtractionJob:
    model: str
    dataset: str
    out_dir: str
    split: str = "train"
    prompt_template: str = DEFAULT_PROMPT
    batch_size: int = 64
    device: str = "cpu"
    seed: int = 0

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train/val/test, got {self.split!r}")
        if self.prompt_template.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"prompt template must contain exactly one {PLACEHOLDER} "
                f"placeholder, got {self.prompt_template!r}"
            )
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def make_validation_split(
    n: int, fraction: float = 0.10, cap: int = 5000, seed: int = 0
) -> tuple[list[int], list[int]]:
    """Disjoint (train, val) index lists; val size = min(round(fraction*n), cap)."""
    if n < 10:
        raise ValueError(f"dataset too small to split: {n}")
    val_size = min(round(fraction * n), cap)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    val = sorted(int(i) for i in perm[:val_size])
    train = sorted(int(i) for i in perm[val_size:])
    return train, val


def extract(
    job: ExtractionJob,
    encoder: Encoder | None = None,
    dataset: Dataset | None = None,
) -> Path:
    """Embed every image and one prompt per class; returns the manifest path.

    Embeddings are unit-normalized and stored as float32 in the modalgauge
    layout: OUT/{task}__{model}/images.npy, texts.npy, labels.npy,
    manifest.json.
    """
    encoder = encoder or resolve_encoder(job.model)
    dataset = dataset or resolve_dataset(job.dataset, seed=job.seed)

    classes = dataset.class_names()
    labels = np.array([dataset.label(i) for i in range(len(dataset))], dtype=np.int64)
    if len(labels) and labels.max() >= len(classes):
        raise MetadataError(
            f"dataset declares {len(classes)} classes but labels reach {labels.max()}"
        )

    chunks = []
    for start in range(0, len(dataset), job.batch_size):
        batch = [dataset.image(i) for i in range(start, min(start + job.batch_size, len(dataset)))]
        chunks.append(encoder.encode_images(batch))
    images = normalize_rows(np.vstack(chunks).astype(np.float32))

    prompts = [job.prompt_template.replace(PLACEHOLDER, name) for name in classes]
    texts = normalize_rows(encoder.encode_texts(prompts).astype(np.float32))

    task = TaskEmbeddings(
        images=images,
        texts=texts,
        labels=labels,
        task_id=dataset.name,
        model_id=job.model.replace(":", "-"),
    )
    out = Path(job.out_dir) / f"{task.task_id}__{task.model_id}"
    return save_task(task, out, prompt_template=job.prompt_template)


__all__ = [
    "DEFAULT_PROMPT",
    "ExtractionJob",
    "Manifest",
    "MetadataError",
    "extract",
    "make_validation_split",
]
