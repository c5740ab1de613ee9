import math

import numpy as np
import pytest

from loyalfuse.synthetic import (DEFAULT_VOCAB, LEVELS, SyntheticError,
                                 SyntheticSpec, bayes_accuracy,
                                 generate_synthetic, label_prior)


def phi(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def oracle_bayes(a, b, noise, modality):
    """Re-derived ceiling accuracy over the 4x4 level grid."""
    grid = [(s1, s2) for s1 in LEVELS for s2 in LEVELS]
    post = {pair: phi((a * pair[0] + b * pair[1]) / noise) for pair in grid}
    if modality == "Both":
        ps = list(post.values())
    elif modality == "X1":
        ps = [np.mean([post[(s1, s2)] for s2 in LEVELS]) for s1 in LEVELS]
    else:
        ps = [np.mean([post[(s1, s2)] for s1 in LEVELS]) for s2 in LEVELS]
    return float(np.mean([max(p, 1 - p) for p in ps]))


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(n=19),
        dict(j_in=0),
        dict(a=-0.1),
        dict(b=-1.0),
        dict(a=0.0, b=0.0),
        dict(noise=0.0),
        dict(noise=-1.0),
        dict(vocab=DEFAULT_VOCAB[:3]),
        dict(vocab=DEFAULT_VOCAB[:3] + ((),)),
        dict(vocab=DEFAULT_VOCAB[:3] + (DEFAULT_VOCAB[0],)),  # duplicate tokens
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(SyntheticError):
            SyntheticSpec(**kwargs)

    def test_one_sided_weights_allowed(self):
        SyntheticSpec(a=0.0, b=1.0)
        SyntheticSpec(a=1.0, b=0.0)


class TestClosedForm:
    def test_prior_is_half_by_symmetry(self):
        assert label_prior(SyntheticSpec()) == pytest.approx(0.5, abs=1e-12)

    def test_default_bayes_levels(self):
        spec = SyntheticSpec()
        both = bayes_accuracy(spec, "Both")
        x1 = bayes_accuracy(spec, "X1")
        x2 = bayes_accuracy(spec, "X2")
        assert both == pytest.approx(oracle_bayes(1, 1, 0.5, "Both"), abs=1e-12)
        assert x1 == pytest.approx(oracle_bayes(1, 1, 0.5, "X1"), abs=1e-12)
        assert x1 == x2  # a == b makes the marginals symmetric
        # fused view beats either single view by a wide margin here
        assert both - x1 > 0.10
        assert 0.86 < both < 0.88
        assert 0.74 < x1 < 0.76

    def test_uninformative_text_collapses_to_tabular(self):
        spec = SyntheticSpec(a=0.0, b=1.0)
        assert bayes_accuracy(spec, "Both") == pytest.approx(
            bayes_accuracy(spec, "X2"), abs=1e-12)
        assert bayes_accuracy(spec, "X1") == pytest.approx(0.5, abs=1e-12)

    def test_uninformative_tabular_collapses_to_text(self):
        spec = SyntheticSpec(a=1.0, b=0.0)
        assert bayes_accuracy(spec, "Both") == pytest.approx(
            bayes_accuracy(spec, "X1"), abs=1e-12)
        assert bayes_accuracy(spec, "X2") == pytest.approx(0.5, abs=1e-12)

    def test_low_noise_approaches_the_grid_ceiling(self):
        # at sigma -> 0 only the (s1+s2 == 0) diagonal stays uncertain
        spec = SyntheticSpec(noise=1e-6)
        assert bayes_accuracy(spec, "Both") == pytest.approx(1 - 2 / 16, abs=1e-6)

    def test_bad_modality(self):
        with pytest.raises(SyntheticError):
            bayes_accuracy(SyntheticSpec(), "fused")

    def test_monte_carlo_agrees_with_closed_form(self):
        """Simulate the generative story directly and apply the known-optimal
        decision rule; its accuracy must approach the closed form."""
        spec = SyntheticSpec()
        rng = np.random.default_rng(123)
        n = 200_000
        s1 = np.asarray(LEVELS)[rng.integers(0, 4, n)]
        s2 = np.asarray(LEVELS)[rng.integers(0, 4, n)]
        y = (spec.a * s1 + spec.b * s2 + rng.normal(0, spec.noise, n) > 0).astype(int)

        post = spec.a * s1 + spec.b * s2  # monotone in P(y=1|s1,s2)
        acc_both = np.mean((post > 0) == y)
        assert acc_both == pytest.approx(bayes_accuracy(spec, "Both"), abs=0.005)

        # marginal rule for the tabular-only view
        p1_given_s2 = {v: np.mean([phi((spec.a * u + spec.b * v) / spec.noise)
                                   for u in LEVELS]) for v in LEVELS}
        pred_x2 = np.asarray([p1_given_s2[v] > 0.5 for v in s2], dtype=int)
        acc_x2 = np.mean(pred_x2 == y)
        assert acc_x2 == pytest.approx(bayes_accuracy(spec, "X2"), abs=0.005)

        assert np.mean(y) == pytest.approx(label_prior(spec), abs=0.005)


class TestGeneration:
    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(n=50, seed=4))
        b = generate_synthetic(SyntheticSpec(n=50, seed=4))
        assert a.dataset.ids == b.dataset.ids
        assert a.dataset.texts == b.dataset.texts
        np.testing.assert_array_equal(a.dataset.feature_matrix(),
                                      b.dataset.feature_matrix())
        c = generate_synthetic(SyntheticSpec(n=50, seed=5))
        assert a.dataset.texts != c.dataset.texts

    def test_shapes_ids_and_schema(self):
        res = generate_synthetic(SyntheticSpec(n=40, j_in=3, seed=0))
        ds = res.dataset
        assert ds.n == 40
        assert ds.schema == ("f0", "f1", "f2")
        assert ds.ids[0] == "s00000" and ds.ids[-1] == "s00039"
        assert res.bayes_accuracy.keys() == {"Both", "X1", "X2"}
        assert res.label_prior == pytest.approx(0.5, abs=1e-12)

    def test_feature0_is_the_signal_level(self):
        ds = generate_synthetic(SyntheticSpec(n=200, seed=1)).dataset
        f0 = ds.feature_matrix()[:, 0]
        assert set(np.unique(f0)) <= set(LEVELS)

    @staticmethod
    def char_class_map(vocab):
        """The default class templates use disjoint character alphabets,
        so any single character pins down the class."""
        out = {}
        for k, tokens in enumerate(vocab):
            for ch in "".join(tokens):
                assert out.get(ch, k) == k
                out[ch] = k
        return out

    def test_texts_use_one_class_template_each(self):
        spec = SyntheticSpec(n=200, seed=2)
        ds = generate_synthetic(spec).dataset
        by_char = self.char_class_map(spec.vocab)
        tok_lens = {len(t) for toks in spec.vocab for t in toks}
        for text in ds.texts:
            classes = {by_char[ch] for ch in text}
            assert len(classes) == 1
            # 5..12 tokens drawn from one template, concatenated
            assert 5 * min(tok_lens) <= len(text) <= 12 * max(tok_lens)

    def test_text_level_distribution_covers_all_classes(self):
        spec = SyntheticSpec(n=400, seed=3)
        ds = generate_synthetic(spec).dataset
        by_char = self.char_class_map(spec.vocab)
        seen = {by_char[text[0]] for text in ds.texts}
        assert seen == {0, 1, 2, 3}

    def test_ratings_encode_labels(self):
        ds = generate_synthetic(SyntheticSpec(n=300, seed=4)).dataset
        for rec in ds.records:
            assert 1 <= rec.rating <= 7
        labels = ds.labels()
        ratings = np.asarray([rec.rating for rec in ds.records])
        assert np.array_equal(labels == 1, ratings >= 6)
        # both rating flavours appear on each side
        assert len(set(ratings[labels == 1])) >= 2
        assert len(set(ratings[labels == 0])) >= 2

    def test_empirical_prior_near_half(self):
        # averaged over seeds to stay well inside binomial noise
        rates = [float(np.mean(generate_synthetic(SyntheticSpec(n=2000, seed=s))
                               .dataset.labels()))
                 for s in (0, 1, 2)]
        assert abs(np.mean(rates) - 0.5) < 0.02

    def test_labels_follow_the_signal(self):
        """High combined signal should almost always be labeled loyal."""
        spec = SyntheticSpec(n=2000, seed=6)
        ds = generate_synthetic(spec).dataset
        by_char = self.char_class_map(spec.vocab)
        s1 = np.asarray([LEVELS[by_char[text[0]]] for text in ds.texts])
        s2 = ds.feature_matrix()[:, 0]
        y = ds.labels()
        strong = (s1 == 1.5) & (s2 == 1.5)
        assert strong.sum() > 50
        assert np.mean(y[strong]) > 0.95
