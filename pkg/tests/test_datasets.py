"""Synthetic data: point mixtures, the template grammar, file round-trips."""

import numpy as np
import pytest

from conftest import two_word_grammar
from svebm.datasets import (DocumentData, GrammarSpec, PointData,
                            PointDataset, SequenceData, default_grammar,
                            eight_gaussians, kde_grid, keyword_class,
                            keyword_judge, load_bow, load_corpus, load_points,
                            pinwheel, save_bow, save_corpus, save_points,
                            stratified_label_subset, toy_text_corpus)
from svebm.errors import DataError


# ---- point mixtures ---------------------------------------------------------


class TestPointMixtures:

    def test_eight_gaussians_cluster_around_circle_centers(self):
        ds = eight_gaussians(4000, seed=1)
        assert ds.x.shape == (4000, 2)
        assert set(np.unique(ds.component)) == set(range(8))
        angles = 2 * np.pi * ds.component / 8
        centers = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        dist = np.linalg.norm(ds.x - centers, axis=1)
        assert np.quantile(dist, 0.99) < 0.5    # std 0.1 noise

    def test_pinwheel_arms_have_distinct_angles(self):
        ds = pinwheel(3000, seed=2, arms=5)
        assert ds.x.shape == (3000, 2)
        assert set(np.unique(ds.component)) == set(range(5))
        radii = np.linalg.norm(ds.x, axis=1)
        assert 0.5 < np.median(radii) < 1.6

    def test_seeded_generation_reproducible(self):
        a = eight_gaussians(100, seed=9)
        b = eight_gaussians(100, seed=9)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.component, b.component)

    def test_tiny_n_rejected(self):
        with pytest.raises(DataError):
            eight_gaussians(4)


class TestKdeGrid:

    def test_density_nonnegative_and_normalized(self):
        rng = np.random.default_rng(42)
        pts = rng.normal(size=(500, 2))
        grid, xs, ys = kde_grid(pts, resolution=120)
        assert np.all(grid >= 0)
        cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
        np.testing.assert_allclose(grid.sum() * cell, 1.0, atol=0.02)

    def test_peak_sits_on_the_data_mode(self):
        rng = np.random.default_rng(42)
        pts = np.array([2.0, -1.0]) + 0.1 * rng.standard_normal((400, 2))
        grid, xs, ys = kde_grid(pts)
        i, j = np.unravel_index(np.argmax(grid), grid.shape)
        assert abs(xs[j] - 2.0) < 0.1
        assert abs(ys[i] + 1.0) < 0.1

    def test_explicit_bounds_and_bandwidth_respected(self):
        pts = np.zeros((10, 2))
        grid, xs, ys = kde_grid(pts, bandwidth=0.5, bounds=(-1, 1, -2, 2),
                                resolution=11)
        assert xs[0] == -1 and xs[-1] == 1
        assert ys[0] == -2 and ys[-1] == 2
        assert grid.shape == (11, 11)
        peak = 1.0 / (2 * np.pi * 0.25)
        np.testing.assert_allclose(grid.max(), peak, rtol=1e-9)

    def test_rejects_bad_input(self):
        with pytest.raises(DataError):
            kde_grid(np.zeros((3, 3)))
        with pytest.raises(DataError):
            kde_grid(np.zeros((4, 2)), bandwidth=0.0)


# ---- template grammar -------------------------------------------------------


class TestGrammar:

    def test_default_grammar_vocabulary_size(self):
        spec = default_grammar()
        vocab = spec.build_vocab()
        assert spec.n_classes == 4
        assert len(vocab) == 60    # 4 reserved + 20 keywords + 36 fillers

    def test_overlapping_word_sets_rejected(self):
        with pytest.raises(DataError):
            GrammarSpec(keywords=(("a", "b"), ("b", "c")),
                        fillers=("x",), patterns=(("<K>", "<F>", "<K>", "<F>"),))
        with pytest.raises(DataError):
            GrammarSpec(keywords=(("a",), ("b",)), fillers=("a", "x"),
                        patterns=(("<K>", "<F>", "<K>", "<F>"),))

    def test_pattern_without_keyword_rejected(self):
        with pytest.raises(DataError):
            GrammarSpec(keywords=(("a",), ("b",)), fillers=("x", "y"),
                        patterns=(("<F>", "<F>", "<F>", "<F>"),))

    def test_corpus_is_label_consistent_and_balanced(self):
        spec = default_grammar()
        corpus = toy_text_corpus(spec, 2000, seed=4)
        assert len(corpus.sequences) == 2000
        counts = np.bincount(corpus.labels, minlength=4)
        assert counts.min() > 2000 / 4 * 0.8
        # Every sequence's keywords identify exactly its generating class.
        for ex in corpus.sequences[:300]:
            words = corpus.vocab.decode(ex.ids)
            assert keyword_class(spec, words) == ex.label

    def test_document_view_matches_token_histogram(self):
        spec = two_word_grammar()
        corpus = toy_text_corpus(spec, 50, seed=1)
        for i, ex in enumerate(corpus.sequences):
            hist = np.zeros(len(corpus.vocab))
            np.add.at(hist, ex.ids, 1.0)
            np.testing.assert_array_equal(corpus.documents[i], hist)

    def test_keyword_judge_recovers_labels(self):
        spec = two_word_grammar()
        corpus = toy_text_corpus(spec, 40, seed=2)
        judge = keyword_judge(spec, corpus.vocab)
        judged = judge([ex.ids for ex in corpus.sequences])
        np.testing.assert_array_equal(judged, corpus.labels)

    def test_ambiguous_words_give_no_class(self):
        spec = two_word_grammar()
        assert keyword_class(spec, ["alpha", "gamma"]) == -1
        assert keyword_class(spec, ["one", "two"]) == -1


# ---- batch views ------------------------------------------------------------


class TestBatchViews:

    def test_point_batches_and_subsets(self):
        ds = eight_gaussians(64, seed=0)
        data = PointData.from_dataset(ds)
        b = data.batch(np.array([1, 5, 9]))
        np.testing.assert_array_equal(b["x"], ds.x[[1, 5, 9]])
        sub = data.subset(np.arange(10))
        assert sub.n == 10
        np.testing.assert_array_equal(sub.labels, ds.component[:10])

    def test_sequence_batches_pack_on_demand(self):
        spec = two_word_grammar()
        corpus = toy_text_corpus(spec, 12, seed=0)
        data = SequenceData(corpus.sequences, len(corpus.vocab), max_len=10)
        b = data.batch(np.arange(4))
        assert b["inputs"].shape == b["targets"].shape == b["mask"].shape
        assert b["inputs"].shape[0] == 4
        assert np.all(data.labels >= 0)

    def test_document_view(self):
        data = DocumentData(np.eye(3) * 2, labels=[0, 1, 0])
        b = data.batch(np.array([2]))
        np.testing.assert_array_equal(b["counts"], [[0, 0, 2.0]])


class TestStratifiedSubset:

    def test_fraction_per_class(self):
        labels = np.repeat(np.arange(4), 50)
        idx = stratified_label_subset(labels, 0.1, seed=3)
        assert idx.size == 4 * 5
        picked = labels[idx]
        np.testing.assert_array_equal(np.bincount(picked), [5, 5, 5, 5])

    def test_small_classes_keep_at_least_one(self):
        labels = np.array([0] * 40 + [1] * 2)
        idx = stratified_label_subset(labels, 0.05, seed=0)
        assert (labels[idx] == 1).sum() >= 1

    def test_sorted_and_deterministic(self):
        labels = np.repeat(np.arange(3), 30)
        a = stratified_label_subset(labels, 0.2, seed=8)
        b = stratified_label_subset(labels, 0.2, seed=8)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.diff(a) > 0)


# ---- file formats -----------------------------------------------------------


class TestFileFormats:

    def test_points_roundtrip(self, tmp_path):
        ds = eight_gaussians(32, seed=5)
        p = tmp_path / "pts.tsv"
        save_points(p, ds)
        back = load_points(p)
        np.testing.assert_allclose(back.x, ds.x, rtol=1e-9)
        np.testing.assert_array_equal(back.component, ds.component)

    def test_points_header_and_malformed_line_anchored(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("x\ty\tcomponent\n1.0\t2.0\t0\noops\n")
        with pytest.raises(DataError) as err:
            load_points(p)
        assert "3" in str(err.value)

    def test_corpus_roundtrip_with_labels(self, tmp_path):
        spec = two_word_grammar()
        corpus = toy_text_corpus(spec, 10, seed=6)
        p = tmp_path / "corpus.tsv"
        save_corpus(p, corpus.sequences, corpus.vocab)
        back = load_corpus(p, corpus.vocab)
        assert len(back) == 10
        for a, b in zip(corpus.sequences, back):
            assert a.ids == b.ids
            assert a.label == b.label

    def test_corpus_roundtrip_unlabeled(self, tmp_path):
        spec = two_word_grammar()
        corpus = toy_text_corpus(spec, 5, seed=7)
        p = tmp_path / "plain.tsv"
        save_corpus(p, corpus.sequences, corpus.vocab, with_labels=False)
        back = load_corpus(p, corpus.vocab)
        assert all(ex.label is None for ex in back)
        assert [ex.ids for ex in back] == [ex.ids for ex in corpus.sequences]

    def test_bow_roundtrip_sparse(self, tmp_path):
        counts = np.array([[0, 2, 0, 1], [3, 0, 0, 0]], dtype=np.float64)
        labels = np.array([1, 0])
        p = tmp_path / "bow.tsv"
        save_bow(p, counts, labels)
        back_counts, back_labels = load_bow(p, 4)
        np.testing.assert_array_equal(back_counts, counts)
        np.testing.assert_array_equal(back_labels, labels)

    def test_bow_malformed_entry_anchored(self, tmp_path):
        p = tmp_path / "bad.tsv"
        p.write_text("0\t1:2\n1\t9zz\n")
        with pytest.raises(DataError) as err:
            load_bow(p, 4)
        assert "2" in str(err.value)
