"""Image-classification dataset sources for the extractor."""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

import numpy as np


class Dataset(Protocol):
    name: str

    def __len__(self) -> int: ...

    def class_names(self) -> list[str]: ...

    def image(self, i: int) -> np.ndarray: ...

    def label(self, i: int) -> int: ...


class SyntheticDataset:
    """Random small images with round-robin labels; for tests and dry runs."""

    def __init__(self, n: int, k: int, seed: int = 0, name: str = "synthetic"):
        if n < 1 or k < 1:
            raise ValueError("need n >= 1 and k >= 1")
        self.name = name
        self._n = n
        self._k = k
        rng = np.random.default_rng(seed)
        self._images = rng.integers(0, 256, size=(n, 8, 8, 3)).astype(np.uint8)
        self._labels = np.arange(n) % k

    def __len__(self):
        return self._n

    def class_names(self):
        return [f"class_{j}" for j in range(self._k)]

    def image(self, i):
        return self._images[i]

    def label(self, i):
        return int(self._labels[i])


class ImageFolderDataset:
    """Directory with one subdirectory per class, images inside each."""

    EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

    def __init__(self, root: str | Path):
        try:
            from PIL import Image  # noqa: F401
        except ImportError as exc:
            raise ValueError("folder datasets need Pillow installed") from exc
        self._root = Path(root)
        if not self._root.is_dir():
            raise ValueError(f"{root}: not a directory")
        self.name = self._root.name
        self._classes = sorted(p.name for p in self._root.iterdir() if p.is_dir())
        if not self._classes:
            raise ValueError(f"{root}: no class subdirectories")
        self._items: list[tuple[Path, int]] = []
        for j, cls in enumerate(self._classes):
            for f in sorted((self._root / cls).iterdir()):
                if f.suffix.lower() in self.EXTENSIONS:
                    self._items.append((f, j))

    def __len__(self):
        return len(self._items)

    def class_names(self):
        return list(self._classes)

    def image(self, i):
        from PIL import Image

        path, _ = self._items[i]
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))

    def label(self, i):
        return self._items[i][1]


def resolve_dataset(spec: str, seed: int = 0) -> Dataset:
    """Supported identifiers: 'synthetic:<n>x<k>' or 'folder:<path>'."""
    if spec.startswith("synthetic:"):
        dims = spec.split(":", 1)[1]
        n, k = (int(v) for v in dims.split("x"))
        return SyntheticDataset(n, k, seed=seed, name=f"synthetic{n}x{k}")
    if spec.startswith("folder:"):
        return ImageFolderDataset(spec.split(":", 1)[1])
    raise ValueError(f"unknown dataset identifier {spec!r}")
