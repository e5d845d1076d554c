"""Embedding-geometry measures for dual-encoder tasks.

Every measure is a pure function of a TaskEmbeddings. Pairwise-similarity
measures use linear closed forms over row sums (no n-by-n materialization);
all accumulation is float64 with a fixed block order, so results do not
depend on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .embed_io import TaskEmbeddings
from .errors import (
    DegenerateGeometryError,
    EmptySelectionError,
    InsufficientDataError,
    ParameterError,
    SingularBandwidthError,
    UnknownMeasureError,
)

_BLOCK = 8192  # fixed reduction block size; keeps sums deterministic
_GEOM_EPS = 1e-12


@dataclass(frozen=True)
class Centroids:
    image_centroid: np.ndarray
    text_centroid: np.ndarray
    global_centroid: np.ndarray


@dataclass
class MeasureReport:
    task_id: str
    model_id: str
    values: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "model_id": self.model_id,
            "values": self.values,
            "metadata": self.metadata,
        }


def _blocked_sums(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Column sum vector and total squared-norm of rows, float64, fixed order."""
    col = np.zeros(m.shape[1], dtype=np.float64)
    sq = 0.0
    for i in range(0, m.shape[0], _BLOCK):
        b = m[i : i + _BLOCK].astype(np.float64, copy=False)
        col += b.sum(axis=0)
        sq += float(np.einsum("ij,ij->i", b, b).sum())
    return col, sq


def _blocked_matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """m @ v with float64 accumulation, block by block."""
    out = np.empty(m.shape[0], dtype=np.float64)
    for i in range(0, m.shape[0], _BLOCK):
        out[i : i + _BLOCK] = m[i : i + _BLOCK].astype(np.float64, copy=False) @ v
    return out


def centroids(t: TaskEmbeddings) -> Centroids:
    sx, _ = _blocked_sums(t.images)
    sy, _ = _blocked_sums(t.texts)
    return Centroids(
        image_centroid=sx / t.n,
        text_centroid=sy / t.k,
        global_centroid=(sx + sy) / (t.n + t.k),
    )


def intra_images_measure(t: TaskEmbeddings) -> float:
    """Mean pairwise cosine similarity over unordered image pairs."""
    if t.n < 2:
        raise InsufficientDataError(f"need at least 2 images, got {t.n}")
    s, sq = _blocked_sums(t.images)
    return (float(s @ s) - sq) / (t.n * (t.n - 1))


def intra_texts_measure(t: TaskEmbeddings) -> float:
    """Mean pairwise cosine similarity over unordered text pairs."""
    if t.k < 2:
        raise InsufficientDataError(f"need at least 2 text embeddings, got {t.k}")
    s, sq = _blocked_sums(t.texts)
    return (float(s @ s) - sq) / (t.k * (t.k - 1))


def correct_label_alignment(t: TaskEmbeddings) -> float:
    """Mean cosine similarity of each image with its own label embedding."""
    texts64 = t.texts.astype(np.float64, copy=False)
    total = 0.0
    for i in range(0, t.n, _BLOCK):
        b = t.images[i : i + _BLOCK].astype(np.float64, copy=False)
        lab = texts64[t.labels[i : i + _BLOCK]]
        total += float(np.einsum("ij,ij->i", b, lab).sum())
    return total / t.n


def inter_modal_measure(t: TaskEmbeddings) -> float:
    """Mean cosine similarity of each image with its incorrect labels.

    Linear closed form: average of x.(sum_T) minus the correct-label term,
    divided by k-1.
    """
    if t.k < 2:
        raise InsufficientDataError("need at least 2 classes for incorrect pairs")
    s_t, _ = _blocked_sums(t.texts)
    mean_dot_all = float(_blocked_matvec(t.images, s_t).sum()) / t.n
    return (mean_dot_all - correct_label_alignment(t)) / (t.k - 1)


def iimm(t: TaskEmbeddings) -> float:
    """Mean of the inter-modal and intra-images measures."""
    return (inter_modal_measure(t) + intra_images_measure(t)) / 2.0


def modality_gap(t: TaskEmbeddings) -> tuple[np.ndarray, float]:
    """Displacement between image and text centroids, and its Euclidean norm."""
    c = centroids(t)
    gap = c.image_centroid - c.text_centroid
    return gap, float(np.linalg.norm(gap))


def _cosine_silhouette(t: TaskEmbeddings) -> tuple[float, dict]:
    s_i, _ = _blocked_sums(t.images)
    s_t, _ = _blocked_sums(t.texts)
    meta: dict = {"metric": "cosine"}

    def cluster_scores(m, own_sum, own_n, other_sum, other_n):
        dots_own = _blocked_matvec(m, own_sum)
        dots_other = _blocked_matvec(m, other_sum)
        self_sq = np.empty(m.shape[0], dtype=np.float64)
        for i in range(0, m.shape[0], _BLOCK):
            b = m[i : i + _BLOCK].astype(np.float64, copy=False)
            self_sq[i : i + _BLOCK] = np.einsum("ij,ij->i", b, b)
        if own_n > 1:
            a = 1.0 - (dots_own - self_sq) / (own_n - 1)
        else:
            a = np.zeros(m.shape[0])  # singleton cluster convention
            meta["singleton_cluster"] = True
        b_ = 1.0 - dots_other / other_n
        a = np.maximum(a, 0.0)
        b_ = np.maximum(b_, 0.0)
        denom = np.maximum(a, b_)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(denom > _GEOM_EPS, (b_ - a) / denom, 0.0)
        return s

    s_img = cluster_scores(t.images, s_i, t.n, s_t, t.k)
    s_txt = cluster_scores(t.texts, s_t, t.k, s_i, t.n)
    value = (float(s_img.sum()) + float(s_txt.sum())) / (t.n + t.k)
    return value, meta


def _euclidean_silhouette(
    t: TaskEmbeddings, subsample: tuple[int, int] | None = None
) -> tuple[float, dict]:
    images = t.images.astype(np.float64, copy=False)
    texts = t.texts.astype(np.float64, copy=False)
    meta: dict = {"metric": "euclidean"}
    if subsample is not None and t.n > subsample[0]:
        size, seed = subsample
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(t.n, size=size, replace=False))
        images = images[idx]
        meta["subsample_size"] = size
        meta["subsample_seed"] = seed
    n, k = images.shape[0], texts.shape[0]

    def cluster_scores(m, own, other):
        own_n = own.shape[0]
        scores = np.empty(m.shape[0])
        for i in range(0, m.shape[0], 512):
            blk = m[i : i + 512]
            d_own = cdist(blk, own)
            d_other = cdist(blk, other)
            if own_n > 1:
                a = (d_own.sum(axis=1)) / (own_n - 1)  # self distance is 0
            else:
                a = np.zeros(blk.shape[0])
                meta["singleton_cluster"] = True
            b = d_other.mean(axis=1)
            denom = np.maximum(a, b)
            with np.errstate(invalid="ignore", divide="ignore"):
                scores[i : i + 512] = np.where(denom > _GEOM_EPS, (b - a) / denom, 0.0)
        return scores

    s_img = cluster_scores(images, images, texts)
    s_txt = cluster_scores(texts, texts, images)
    value = (float(s_img.sum()) + float(s_txt.sum())) / (n + k)
    return value, meta


def silhouette(
    t: TaskEmbeddings,
    metric: str = "cosine",
    subsample: tuple[int, int] | None = None,
) -> tuple[float, dict]:
    """Two-cluster silhouette of images vs texts under cosine or Euclidean distance.

    Points with max(a, b) = 0 score 0. The Euclidean path optionally
    subsamples image points (size, seed) without replacement.
    """
    if metric == "cosine":
        return _cosine_silhouette(t)
    if metric == "euclidean":
        return _euclidean_silhouette(t, subsample)
    raise ParameterError(f"unknown silhouette metric {metric!r}")


def davies_bouldin(t: TaskEmbeddings) -> float:
    """Two-cluster Davies-Bouldin: (mean image spread + mean text spread) / centroid distance."""
    c = centroids(t)
    m_it = float(np.linalg.norm(c.image_centroid - c.text_centroid))
    if m_it <= _GEOM_EPS:
        raise DegenerateGeometryError("image and text centroids coincide")
    s_i = float(
        np.linalg.norm(
            t.images.astype(np.float64, copy=False) - c.image_centroid, axis=1
        ).mean()
    )
    s_t = float(
        np.linalg.norm(
            t.texts.astype(np.float64, copy=False) - c.text_centroid, axis=1
        ).mean()
    )
    return (s_i + s_t) / m_it


def _scatter_sums(t: TaskEmbeddings) -> tuple[float, float]:
    c = centroids(t)
    images = t.images.astype(np.float64, copy=False)
    texts = t.texts.astype(np.float64, copy=False)
    intra = float(((images - c.image_centroid) ** 2).sum()) + float(
        ((texts - c.text_centroid) ** 2).sum()
    )
    inter = t.n * float(
        ((c.image_centroid - c.global_centroid) ** 2).sum()
    ) + t.k * float(((c.text_centroid - c.global_centroid) ** 2).sum())
    return intra, inter


def calinski_harabasz(t: TaskEmbeddings, standard: bool = False) -> float:
    """Within-over-between scatter ratio scaled by n+k-2.

    The default orientation divides the within-cluster scatter by the
    scaled between-cluster scatter; standard=True returns the conventional
    between-over-within index instead.
    """
    intra, inter = _scatter_sums(t)
    n_total = t.n + t.k
    if standard:
        if intra <= _GEOM_EPS:
            raise DegenerateGeometryError("zero within-cluster scatter")
        return inter / (intra / (n_total - 2))
    if inter <= _GEOM_EPS:
        raise DegenerateGeometryError("image and text centroids coincide with global centroid")
    return intra / (inter / (n_total - 2))


def _cluster_log_density(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Resubstitution log density under a diagonal Gaussian KDE fitted on x."""
    m, d = x.shape
    scaled = x / h
    sq = np.einsum("ij,ij->i", scaled, scaled)
    # ||xi-xj||^2/h^2 = sq_i + sq_j - 2 xi.xj (in scaled space)
    cross = scaled @ scaled.T
    d2 = sq[:, None] + sq[None, :] - 2.0 * cross
    np.maximum(d2, 0.0, out=d2)
    log_kernel = -0.5 * d2
    norm = -float(np.log(h).sum()) - 0.5 * d * np.log(2.0 * np.pi) - np.log(m)
    return logsumexp(log_kernel, axis=1) + norm


def clustering_entropy(
    t: TaskEmbeddings,
    bandwidth_rule: str | float = "scott",
    sample_cap: int = 2000,
    seed: int = 0,
) -> tuple[float, dict]:
    """Size-weighted mean of per-cluster resubstitution entropies.

    Each cluster's density is a Gaussian KDE with diagonal bandwidth; the
    entropy estimate is minus the mean log density at the sample points.
    Clusters larger than sample_cap are uniformly subsampled (seeded).
    """
    meta: dict = {"bandwidth_rule": str(bandwidth_rule), "sample_cap": sample_cap}
    rng = np.random.default_rng(seed)

    def cluster_entropy(m_raw: np.ndarray, name: str) -> float:
        x = m_raw.astype(np.float64, copy=False)
        if np.unique(x, axis=0).shape[0] < 2:
            raise SingularBandwidthError(f"{name}: fewer than 2 distinct points")
        if x.shape[0] > sample_cap:
            idx = np.sort(rng.choice(x.shape[0], size=sample_cap, replace=False))
            x = x[idx]
            meta[f"{name}_subsampled_to"] = sample_cap
        m, d = x.shape
        if isinstance(bandwidth_rule, (int, float)):
            if bandwidth_rule <= 0:
                raise ParameterError(f"bandwidth must be positive, got {bandwidth_rule}")
            h = np.full(d, float(bandwidth_rule))
        else:
            stds = x.std(axis=0, ddof=1)
            if not np.all(stds > 0):
                raise SingularBandwidthError(f"{name}: zero variance along some dimension")
            if bandwidth_rule == "scott":
                factor = m ** (-1.0 / (d + 4))
            elif bandwidth_rule == "silverman":
                factor = (m * (d + 2) / 4.0) ** (-1.0 / (d + 4))
            else:
                raise ParameterError(f"unknown bandwidth rule {bandwidth_rule!r}")
            h = factor * stds
        return -float(_cluster_log_density(x, h).mean())

    h_i = cluster_entropy(t.images, "images")
    h_t = cluster_entropy(t.texts, "texts")
    total = (h_i * t.n + h_t * t.k) / (t.n + t.k)
    meta["image_entropy"] = h_i
    meta["text_entropy"] = h_t
    return total, meta


@dataclass
class MeasureOptions:
    seed: int = 0
    silhouette_subsample: int | None = None  # subsample image points past this size
    entropy_bandwidth: str | float = "scott"
    entropy_sample_cap: int = 2000


def _opt_subsample(opts: MeasureOptions) -> tuple[int, int] | None:
    if opts.silhouette_subsample is None:
        return None
    return (opts.silhouette_subsample, opts.seed)


_REGISTRY: dict[str, Callable[[TaskEmbeddings, MeasureOptions], tuple[float, dict]]] = {
    "iimm": lambda t, o: (iimm(t), {}),
    "inter_modal": lambda t, o: (inter_modal_measure(t), {}),
    "intra_images": lambda t, o: (intra_images_measure(t), {}),
    "intra_texts": lambda t, o: (intra_texts_measure(t), {}),
    "correct_label_alignment": lambda t, o: (correct_label_alignment(t), {}),
    "modality_gap": lambda t, o: (modality_gap(t)[1], {}),
    "silhouette_cosine": lambda t, o: silhouette(t, "cosine"),
    "silhouette_euclidean": lambda t, o: silhouette(t, "euclidean", _opt_subsample(o)),
    "davies_bouldin": lambda t, o: (davies_bouldin(t), {}),
    "calinski_harabasz": lambda t, o: (calinski_harabasz(t), {}),
    "calinski_harabasz_standard": lambda t, o: (calinski_harabasz(t, standard=True), {}),
    "clustering_entropy": lambda t, o: clustering_entropy(
        t, o.entropy_bandwidth, o.entropy_sample_cap, o.seed
    ),
}

MEASURE_NAMES = tuple(_REGISTRY)


def measure_suite(
    t: TaskEmbeddings,
    selection: "list[str] | tuple[str, ...] | set[str]",
    options: MeasureOptions | None = None,
) -> MeasureReport:
    """Compute the selected measures; failures land in metadata['errors']."""
    if not selection:
        raise EmptySelectionError("no measures selected")
    unknown = [name for name in selection if name not in _REGISTRY]
    if unknown:
        raise UnknownMeasureError(f"unknown measure(s): {', '.join(sorted(unknown))}")
    opts = options or MeasureOptions()
    # deterministic evaluation order even for set selections
    if isinstance(selection, (list, tuple)):
        names = list(dict.fromkeys(selection))
    else:
        names = sorted(selection)
    report = MeasureReport(task_id=t.task_id, model_id=t.model_id)
    errors: dict[str, str] = {}
    per_measure_meta: dict[str, dict] = {}
    for name in names:
        try:
            value, meta = _REGISTRY[name](t, opts)
        except Exception as exc:  # recorded, not silently dropped
            errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        report.values[name] = value
        if meta:
            per_measure_meta[name] = meta
    report.metadata["n"] = t.n
    report.metadata["k"] = t.k
    report.metadata["d"] = t.d
    if per_measure_meta:
        report.metadata["measures"] = per_measure_meta
    if errors:
        report.metadata["errors"] = errors
    return report
