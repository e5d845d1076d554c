"""Load, validate, and persist embedding matrices, labels, and task manifests.

Arrays travel in the NPY v1.0 binary layout (restricted to little-endian
float32/float64 matrices and int64 label vectors). A JSON manifest binds the
three files of a task together with shape counts and optional SHA-256
checksums.
"""

from __future__ import annotations

import ast
import hashlib
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateRowError,
    DtypeError,
    FormatError,
    IntegrityError,
    LabelError,
    TruncationError,
)

MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCR = {"<f4": np.float32, "<f8": np.float64, "<i8": np.int64}

# Rows whose norm is within this of 1.0 count as already normalized.
NORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class TaskEmbeddings:
    """Unit-normalized image/text embeddings plus integer labels for one task."""

    images: np.ndarray  # (n, d) float32, unit rows
    texts: np.ndarray   # (k, d) float32, unit rows
    labels: np.ndarray  # (n,) int64 in [0, k)
    task_id: str = ""
    model_id: str = ""

    def __post_init__(self):
        if self.images.ndim != 2 or self.texts.ndim != 2:
            raise IntegrityError("embeddings must be 2-D matrices")
        if self.images.shape[1] != self.texts.shape[1]:
            raise IntegrityError(
                f"image dim {self.images.shape[1]} != text dim {self.texts.shape[1]}"
            )
        if self.labels.ndim != 1 or len(self.labels) != self.images.shape[0]:
            raise IntegrityError("labels length must match image row count")
        k = self.texts.shape[0]
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= k):
            raise LabelError(f"labels must lie in [0, {k})")
        for name, m in (("images", self.images), ("texts", self.texts)):
            if not np.isfinite(m).all():
                raise IntegrityError(f"{name} contain non-finite values")
        self.images.setflags(write=False)
        self.texts.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def k(self) -> int:
        return self.texts.shape[0]

    @property
    def d(self) -> int:
        return self.images.shape[1]


@dataclass
class Manifest:
    """JSON descriptor binding the three array files of a task."""

    task_id: str
    model_id: str
    image_path: str
    text_path: str
    label_path: str
    n: int
    k: int
    d: int
    normalized: bool = False
    checksums: dict = field(default_factory=dict)  # path key -> hex sha256
    prompt_template: str | None = None

    @classmethod
    def from_json(cls, path: str | Path) -> "Manifest":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(
                task_id=raw["task_id"],
                model_id=raw["model_id"],
                image_path=raw["image_path"],
                text_path=raw["text_path"],
                label_path=raw["label_path"],
                n=int(raw["n"]),
                k=int(raw["k"]),
                d=int(raw["d"]),
                normalized=bool(raw.get("normalized", False)),
                checksums=raw.get("checksums", {}),
                prompt_template=raw.get("prompt_template"),
            )
        except KeyError as exc:
            raise FormatError(f"manifest missing field {exc}") from exc

    def to_json(self, path: str | Path) -> None:
        payload = {
            "task_id": self.task_id,
            "model_id": self.model_id,
            "image_path": self.image_path,
            "text_path": self.text_path,
            "label_path": self.label_path,
            "n": self.n,
            "k": self.k,
            "d": self.d,
            "normalized": self.normalized,
            "checksums": self.checksums,
        }
        if self.prompt_template is not None:
            payload["prompt_template"] = self.prompt_template
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_array(path: str | Path) -> np.ndarray:
    """Parse one NPY v1.0 file into a float or int64 array.

    Raises FormatError on bad magic/version/header, DtypeError on an
    unsupported descr, TruncationError when the payload is short.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 10 or data[:6] != MAGIC:
        raise FormatError(f"{path}: missing NPY magic bytes")
    if data[6:8] != b"\x01\x00":
        raise FormatError(f"{path}: unsupported format version {data[6]}.{data[7]}")
    (hlen,) = struct.unpack("<H", data[8:10])
    header_end = 10 + hlen
    if len(data) < header_end:
        raise TruncationError(f"{path}: header truncated")
    try:
        header = ast.literal_eval(data[10:header_end].decode("ascii").strip())
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = header["shape"]
    except (ValueError, SyntaxError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from exc
    if descr not in _SUPPORTED_DESCR:
        raise DtypeError(f"{path}: unsupported dtype {descr!r}")
    if fortran:
        raise FormatError(f"{path}: fortran_order arrays not supported")
    if not isinstance(shape, tuple) or len(shape) not in (1, 2):
        raise FormatError(f"{path}: shape must be 1-D or 2-D, got {shape!r}")
    dtype = np.dtype(_SUPPORTED_DESCR[descr]).newbyteorder("<")
    count = int(np.prod(shape)) if shape else 0
    payload = data[header_end:]
    needed = count * dtype.itemsize
    if len(payload) < needed:
        raise TruncationError(
            f"{path}: payload holds {len(payload)} bytes, header needs {needed}"
        )
    arr = np.frombuffer(payload[:needed], dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def write_array(path: str | Path, arr: np.ndarray) -> None:
    """Write an array in the same restricted NPY v1.0 layout load_array reads."""
    kind_map = {"f": {4: "<f4", 8: "<f8"}, "i": {8: "<i8"}}
    try:
        descr = kind_map[arr.dtype.kind][arr.dtype.itemsize]
    except KeyError:
        raise DtypeError(f"cannot write dtype {arr.dtype}") from None
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {arr.shape!r}, }}"
    # pad header so magic+version+len+header is 64-byte aligned, newline last
    total = 10 + len(header) + 1
    pad = (64 - total % 64) % 64
    header_bytes = (header + " " * pad + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"\x01\x00")
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(np.ascontiguousarray(arr, dtype=np.dtype(descr)).tobytes())


def normalize_rows(m: np.ndarray, zero_tol: float = 0.0) -> np.ndarray:
    """Scale each row to unit Euclidean norm, preserving direction.

    Norms are accumulated in float64; the result keeps the input dtype.
    Raises DegenerateRowError naming the first zero-norm row.
    """
    norms = np.linalg.norm(m.astype(np.float64, copy=False), axis=1)
    bad = np.flatnonzero(norms <= zero_tol)
    if bad.size:
        raise DegenerateRowError(int(bad[0]))
    out = m.astype(np.float64, copy=False) / norms[:, None]
    return out.astype(m.dtype, copy=False)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_task(manifest_path: str | Path, norm_tolerance: float = NORM_TOLERANCE) -> TaskEmbeddings:
    """Load a task from its manifest, cross-validating every declared fact.

    Checksums are verified when present (a missing checksum warns and skips).
    Embeddings are normalized in place when the manifest says they are not;
    when it claims they are, row norms must already sit within norm_tolerance
    of 1.
    """
    manifest_path = Path(manifest_path)
    man = Manifest.from_json(manifest_path)
    base = manifest_path.parent

    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    paths = {
        "image_path": resolve(man.image_path),
        "text_path": resolve(man.text_path),
        "label_path": resolve(man.label_path),
    }
    for key, p in paths.items():
        declared = man.checksums.get(key) or man.checksums.get(p.name)
        if declared is None:
            warnings.warn(f"{manifest_path}: no checksum for {key}, skipping verification")
        elif _sha256(p) != declared:
            raise IntegrityError(f"{p}: checksum mismatch")

    images = load_array(paths["image_path"])
    texts = load_array(paths["text_path"])
    labels = load_array(paths["label_path"])

    if images.shape != (man.n, man.d):
        raise IntegrityError(
            f"{paths['image_path']}: shape {images.shape} != manifest ({man.n}, {man.d})"
        )
    if texts.shape != (man.k, man.d):
        raise IntegrityError(
            f"{paths['text_path']}: shape {texts.shape} != manifest ({man.k}, {man.d})"
        )
    if labels.shape != (man.n,):
        raise IntegrityError(
            f"{paths['label_path']}: shape {labels.shape} != manifest ({man.n},)"
        )
    if labels.dtype.kind != "i":
        raise DtypeError(f"{paths['label_path']}: labels must be integers")
    if len(labels) and (labels.min() < 0 or labels.max() >= man.k):
        raise LabelError(f"label outside [0, {man.k})")

    missing = np.setdiff1d(np.arange(man.k), labels)
    if missing.size:
        warnings.warn(f"{manifest_path}: classes with no images: {missing.tolist()}")

    for name, m in (("images", images), ("texts", texts)):
        if not np.isfinite(m).all():
            raise IntegrityError(f"{name}: non-finite values")

    if man.normalized:
        for name, m in (("images", images), ("texts", texts)):
            norms = np.linalg.norm(m.astype(np.float64, copy=False), axis=1)
            if np.abs(norms - 1.0).max() > norm_tolerance:
                raise IntegrityError(
                    f"{name}: manifest claims normalized but row norms stray past {norm_tolerance}"
                )
    else:
        images = normalize_rows(images)
        texts = normalize_rows(texts)

    return TaskEmbeddings(
        images=images,
        texts=texts,
        labels=labels.astype(np.int64),
        task_id=man.task_id,
        model_id=man.model_id,
    )


def save_task(
    t: TaskEmbeddings,
    out_dir: str | Path,
    prompt_template: str | None = None,
) -> Path:
    """Write images/texts/labels plus manifest under out_dir; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_array(out_dir / "images.npy", t.images.astype(np.float32, copy=False))
    write_array(out_dir / "texts.npy", t.texts.astype(np.float32, copy=False))
    write_array(out_dir / "labels.npy", t.labels.astype(np.int64, copy=False))
    man = Manifest(
        task_id=t.task_id,
        model_id=t.model_id,
        image_path="images.npy",
        text_path="texts.npy",
        label_path="labels.npy",
        n=t.n,
        k=t.k,
        d=t.d,
        normalized=True,
        checksums={
            "image_path": _sha256(out_dir / "images.npy"),
            "text_path": _sha256(out_dir / "texts.npy"),
            "label_path": _sha256(out_dir / "labels.npy"),
        },
        prompt_template=prompt_template,
    )
    manifest_path = out_dir / "manifest.json"
    man.to_json(manifest_path)
    return manifest_path
