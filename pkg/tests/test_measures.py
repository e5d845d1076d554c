import numpy as np
import pytest

from conftest import random_task
from modalgauge import measures
from modalgauge.embed_io import TaskEmbeddings, normalize_rows
from modalgauge.errors import (
    DegenerateGeometryError,
    EmptySelectionError,
    InsufficientDataError,
    ParameterError,
    SingularBandwidthError,
    UnknownMeasureError,
)
import oracles


def make_task(images, texts, labels=None):
    images = np.asarray(images, dtype=np.float32)
    texts = np.asarray(texts, dtype=np.float32)
    if labels is None:
        labels = np.zeros(images.shape[0], dtype=np.int64)
    return TaskEmbeddings(images, texts, np.asarray(labels, dtype=np.int64), "t", "m")


def e(i, d):
    v = np.zeros(d, dtype=np.float32)
    v[i] = 1.0
    return v


class TestIntraImages:
    def test_identical_vectors(self):
        t = make_task([e(0, 3)] * 4, [e(1, 3), e(2, 3)])
        assert measures.intra_images_measure(t) == pytest.approx(1.0, abs=1e-6)

    def test_orthonormal(self):
        t = make_task([e(0, 3), e(1, 3)], [e(2, 3), e(0, 3)])
        assert measures.intra_images_measure(t) == pytest.approx(0.0, abs=1e-7)

    def test_matches_brute_force(self):
        t = random_task(n=50, k=5, d=8, seed=3)
        assert measures.intra_images_measure(t) == pytest.approx(
            oracles.naive_intra_pairs_loop(t.images), abs=1e-9
        )

    def test_too_few(self):
        t = make_task([e(0, 3)], [e(1, 3), e(2, 3)])
        with pytest.raises(InsufficientDataError):
            measures.intra_images_measure(t)


class TestInterModal:
    def test_images_equal_labels_orthonormal(self):
        texts = [e(i, 4) for i in range(4)]
        images = [texts[i % 4] for i in range(8)]
        labels = [i % 4 for i in range(8)]
        t = make_task(images, texts, labels)
        assert measures.inter_modal_measure(t) == pytest.approx(0.0, abs=1e-7)

    def test_all_identical(self):
        v = e(0, 3)
        t = make_task([v] * 5, [v, v], [0] * 5)
        assert measures.inter_modal_measure(t) == pytest.approx(1.0, abs=1e-6)

    def test_matches_brute_force(self):
        t = random_task(n=30, k=5, d=8, seed=4)
        assert measures.inter_modal_measure(t) == pytest.approx(
            oracles.naive_inter_modal(t.images, t.texts, t.labels), abs=1e-9
        )

    def test_single_class(self):
        t = make_task([e(0, 3)] * 3, [e(1, 3)])
        with pytest.raises(InsufficientDataError):
            measures.inter_modal_measure(t)


class TestIimm:
    def test_mean_of_components(self):
        t = random_task(seed=5)
        expected = (
            oracles.naive_inter_modal(t.images, t.texts, t.labels)
            + oracles.naive_intra_pairs(t.images)
        ) / 2
        assert measures.iimm(t) == pytest.approx(expected, abs=1e-9)
        assert measures.iimm(t) == pytest.approx(
            (measures.inter_modal_measure(t) + measures.intra_images_measure(t)) / 2,
            abs=1e-12,
        )

    def test_extremes(self):
        v = e(0, 3)
        t = make_task([v] * 4, [v, v], [0] * 4)
        assert measures.iimm(t) == pytest.approx(1.0, abs=1e-6)


class TestCorrectLabelAlignment:
    def test_self_similarity(self):
        texts = [e(i, 4) for i in range(3)]
        t = make_task([texts[i % 3] for i in range(6)], texts, [i % 3 for i in range(6)])
        assert measures.correct_label_alignment(t) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal(self):
        t = make_task([e(0, 4)] * 3, [e(1, 4), e(2, 4)], [0, 1, 0])
        assert measures.correct_label_alignment(t) == pytest.approx(0.0, abs=1e-7)

    def test_matches_brute_force(self):
        t = random_task(seed=6)
        assert measures.correct_label_alignment(t) == pytest.approx(
            oracles.naive_correct_alignment(t.images, t.texts, t.labels), abs=1e-9
        )


class TestIntraTexts:
    def test_identical(self):
        t = make_task([e(0, 3)] * 2, [e(1, 3)] * 4)
        assert measures.intra_texts_measure(t) == pytest.approx(1.0, abs=1e-6)

    def test_orthonormal(self):
        t = make_task([e(0, 4)] * 2, [e(1, 4), e(2, 4), e(3, 4)])
        assert measures.intra_texts_measure(t) == pytest.approx(0.0, abs=1e-7)

    def test_matches_brute_force(self):
        t = random_task(n=5, k=10, d=8, seed=7)
        assert measures.intra_texts_measure(t) == pytest.approx(
            oracles.naive_intra_pairs_loop(t.texts), abs=1e-9
        )


class TestModalityGap:
    def test_identical_clouds(self):
        pts = [e(0, 3), e(1, 3)]
        t = make_task(pts, pts, [0, 1])
        _, norm = measures.modality_gap(t)
        assert norm == pytest.approx(0.0, abs=1e-7)

    def test_orthonormal_displacement(self):
        t = make_task([e(0, 3)] * 3, [e(1, 3)] * 2, [0] * 3)
        _, norm = measures.modality_gap(t)
        assert norm == pytest.approx(np.sqrt(2), abs=1e-6)

    def test_matches_centroid_oracle(self):
        t = random_task(seed=8)
        gap, norm = measures.modality_gap(t)
        expected = t.images.astype(np.float64).mean(0) - t.texts.astype(np.float64).mean(0)
        np.testing.assert_allclose(gap, expected, atol=1e-12)
        assert norm == pytest.approx(np.linalg.norm(expected), abs=1e-12)


class TestSilhouette:
    def test_perfectly_separated(self):
        t = make_task([e(0, 3)] * 3, [e(1, 3)] * 2, [0] * 3)
        for metric in ("cosine", "euclidean"):
            value, _ = measures.silhouette(t, metric)
            assert value == pytest.approx(1.0, abs=1e-6)

    def test_all_identical(self):
        v = e(0, 3)
        t = make_task([v] * 3, [v] * 2, [0] * 3)
        for metric in ("cosine", "euclidean"):
            value, _ = measures.silhouette(t, metric)
            assert value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("metric", ["cosine", "euclidean"])
    def test_matches_naive(self, metric):
        t = random_task(n=100, k=10, d=8, seed=9)
        value, _ = measures.silhouette(t, metric)
        assert value == pytest.approx(
            oracles.naive_silhouette(t.images, t.texts, metric), abs=1e-7
        )

    def test_singleton_cluster_convention(self):
        t = make_task([e(0, 3)], [e(1, 3), e(2, 3)], [0])
        value, meta = measures.silhouette(t, "cosine")
        assert meta.get("singleton_cluster") is True
        assert -1.0 <= value <= 1.0

    def test_subsample_deterministic(self):
        t = random_task(n=500, k=10, d=8, seed=10)
        v1, m1 = measures.silhouette(t, "euclidean", subsample=(100, 42))
        v2, m2 = measures.silhouette(t, "euclidean", subsample=(100, 42))
        assert v1 == v2
        assert m1["subsample_size"] == 100

    def test_unknown_metric(self):
        with pytest.raises(ParameterError):
            measures.silhouette(random_task(), "manhattan")


class TestDaviesBouldin:
    def test_point_clusters(self):
        t = make_task([e(0, 3)] * 3, [e(1, 3)] * 2, [0] * 3)
        assert measures.davies_bouldin(t) == pytest.approx(0.0, abs=1e-7)

    def test_identical_centroids(self):
        # antipodal pairs collapse both centroids to the origin
        t = make_task([e(0, 3), -e(0, 3)], [e(1, 3), -e(1, 3)], [0, 1])
        with pytest.raises(DegenerateGeometryError):
            measures.davies_bouldin(t)

    def test_matches_oracle(self):
        t = random_task(seed=11)
        assert measures.davies_bouldin(t) == pytest.approx(
            oracles.naive_davies_bouldin(t.images, t.texts), rel=1e-9
        )


class TestCalinskiHarabasz:
    def test_coincident_centroids(self):
        t = make_task([e(0, 3), -e(0, 3)], [e(1, 3), -e(1, 3)], [0, 1])
        with pytest.raises(DegenerateGeometryError):
            measures.calinski_harabasz(t)

    def test_matches_oracle(self):
        t = random_task(seed=12)
        assert measures.calinski_harabasz(t) == pytest.approx(
            oracles.naive_calinski_harabasz(t.images, t.texts), rel=1e-9
        )
        assert measures.calinski_harabasz(t, standard=True) == pytest.approx(
            oracles.naive_calinski_harabasz(t.images, t.texts, standard=True), rel=1e-9
        )

    def test_duplication_scaling(self):
        t = random_task(n=20, k=4, d=6, seed=13)
        doubled = TaskEmbeddings(
            np.vstack([t.images, t.images]),
            np.vstack([t.texts, t.texts]),
            np.concatenate([t.labels, t.labels]),
            "t2", "m",
        )
        # doubling scales both scatter sums by 2; only the (N-2) factor moves
        ratio = measures.calinski_harabasz(doubled) / measures.calinski_harabasz(t)
        n_tot = t.n + t.k
        assert ratio == pytest.approx((2 * n_tot - 2) / (n_tot - 2), rel=1e-9)
        assert measures.calinski_harabasz(doubled) == pytest.approx(
            oracles.naive_calinski_harabasz(doubled.images, doubled.texts), rel=1e-9
        )


class TestClusteringEntropy:
    def test_identical_points(self):
        v = e(0, 3)
        t = make_task([v] * 4, [e(1, 3), e(2, 3)], [0] * 4)
        with pytest.raises(SingularBandwidthError):
            measures.clustering_entropy(t)

    def test_bad_bandwidth(self):
        with pytest.raises(ParameterError):
            measures.clustering_entropy(random_task(), bandwidth_rule=-1.0)
        with pytest.raises(ParameterError):
            measures.clustering_entropy(random_task(), bandwidth_rule="kernelflow")

    def test_weighting_identity(self):
        # same cluster used for both modalities: total equals the shared entropy
        rng = np.random.default_rng(14)
        pts = normalize_rows(rng.normal(size=(12, 4)).astype(np.float32))
        t = make_task(pts, pts, np.zeros(12))
        total, meta = measures.clustering_entropy(t, bandwidth_rule=0.5)
        assert total == pytest.approx(meta["image_entropy"], abs=1e-12)
        assert total == pytest.approx(meta["text_entropy"], abs=1e-12)

    def test_matches_reference_kde(self):
        t = random_task(n=10, k=10, d=4, seed=15)
        total, _ = measures.clustering_entropy(t, bandwidth_rule=0.5)
        h_i = oracles.naive_kde_entropy(t.images, 0.5)
        h_t = oracles.naive_kde_entropy(t.texts, 0.5)
        expected = (h_i * t.n + h_t * t.k) / (t.n + t.k)
        assert total == pytest.approx(expected, abs=1e-6)

    def test_sample_cap_deterministic(self):
        t = random_task(n=100, k=10, d=4, seed=16)
        a = measures.clustering_entropy(t, bandwidth_rule=0.5, sample_cap=30, seed=1)
        b = measures.clustering_entropy(t, bandwidth_rule=0.5, sample_cap=30, seed=1)
        assert a[0] == b[0]


class TestMeasureSuite:
    def test_single_measure(self, small_task):
        rep = measures.measure_suite(small_task, ["iimm"])
        assert set(rep.values) == {"iimm"}

    def test_compose_equals_parts(self, small_task):
        rep = measures.measure_suite(
            small_task, ["iimm", "silhouette_cosine", "davies_bouldin"]
        )
        assert rep.values["iimm"] == measures.iimm(small_task)
        assert rep.values["silhouette_cosine"] == measures.silhouette(small_task, "cosine")[0]
        assert rep.values["davies_bouldin"] == measures.davies_bouldin(small_task)

    def test_empty_selection(self, small_task):
        with pytest.raises(EmptySelectionError):
            measures.measure_suite(small_task, [])

    def test_unknown_name(self, small_task):
        with pytest.raises(UnknownMeasureError):
            measures.measure_suite(small_task, ["iimm", "bogus"])

    def test_failed_measure_recorded(self):
        # antipodal geometry breaks davies_bouldin but not iimm
        t = make_task([e(0, 3), -e(0, 3)], [e(1, 3), -e(1, 3)], [0, 1])
        rep = measures.measure_suite(t, ["iimm", "davies_bouldin"])
        assert "iimm" in rep.values
        assert "davies_bouldin" in rep.metadata["errors"]


class TestInvariances:
    def _all_values(self, t, with_entropy=False):
        sel = [
            "iimm", "inter_modal", "intra_images", "intra_texts",
            "correct_label_alignment", "modality_gap", "silhouette_cosine",
            "silhouette_euclidean", "davies_bouldin", "calinski_harabasz",
        ]
        rep = measures.measure_suite(t, sel)
        assert not rep.metadata.get("errors")
        return rep.values

    def test_permutation_invariance(self):
        t = random_task(n=60, k=8, d=10, seed=20)
        rng = np.random.default_rng(21)
        perm = rng.permutation(t.n)
        shuffled = TaskEmbeddings(
            t.images[perm], t.texts, t.labels[perm], t.task_id, t.model_id
        )
        a, b = self._all_values(t), self._all_values(shuffled)
        for name in a:
            assert a[name] == pytest.approx(b[name], abs=1e-9), name

    def test_rotation_invariance(self):
        t = random_task(n=60, k=8, d=10, seed=22)
        rng = np.random.default_rng(23)
        q, _ = np.linalg.qr(rng.normal(size=(t.d, t.d)))
        rotated = TaskEmbeddings(
            (t.images.astype(np.float64) @ q).astype(np.float32),
            (t.texts.astype(np.float64) @ q).astype(np.float32),
            t.labels, t.task_id, t.model_id,
        )
        a, b = self._all_values(t), self._all_values(rotated)
        for name in a:
            tol = 1e-6 if name != "calinski_harabasz" else None
            if tol is not None:
                assert a[name] == pytest.approx(b[name], abs=tol), name
            else:
                assert a[name] == pytest.approx(b[name], rel=1e-5), name

    def test_ranges(self):
        for seed in range(30):
            t = random_task(n=20, k=4, d=6, seed=seed)
            v = self._all_values(t)
            for name in ("iimm", "inter_modal", "intra_images", "intra_texts",
                         "correct_label_alignment"):
                assert -1.0 - 1e-9 <= v[name] <= 1.0 + 1e-9
            assert -1.0 <= v["silhouette_cosine"] <= 1.0
            assert -1.0 <= v["silhouette_euclidean"] <= 1.0
            assert v["davies_bouldin"] >= 0.0
            assert v["calinski_harabasz"] >= 0.0
            assert 0.0 <= v["modality_gap"] <= 2.0
