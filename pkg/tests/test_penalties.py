"""Training penalties: parsing, values against the reference, and gradients."""

import numpy as np
import pytest

from fairrec import (
    PENALTY_KINDS,
    PenaltySpec,
    UnsupportedFormatError,
    parse_penalty,
    penalty_gradient,
    penalty_value,
)

from conftest import (
    dataset_triples,
    gradient_to_vector,
    make_model,
    make_train_dataset,
    model_to_vector,
    vector_to_model,
)
from oracles import central_difference, oracle_penalty


class TestPenaltySpec:
    def test_none(self):
        spec = PenaltySpec.none()
        assert spec.is_none
        assert spec.label == "none"

    def test_single(self):
        spec = PenaltySpec.single("value")
        assert not spec.is_none
        assert spec.label == "value"
        assert spec.terms == (("value", 1.0),)

    def test_label_shows_non_unit_weights(self):
        spec = PenaltySpec((("under", 2.0), ("over", 1.0)))
        assert spec.label == "under:2+over"

    def test_rejects_unknown_kind(self):
        with pytest.raises(UnsupportedFormatError):
            PenaltySpec((("sideways", 1.0),))

    def test_rejects_negative_weight(self):
        with pytest.raises(ValueError):
            PenaltySpec((("value", -1.0),))

    def test_rejects_duplicate_kind(self):
        with pytest.raises(ValueError):
            PenaltySpec((("value", 1.0), ("value", 2.0)))

    def test_rejects_negative_smoothing(self):
        with pytest.raises(ValueError):
            PenaltySpec((("value", 1.0),), smoothing=-0.1)


class TestParsePenalty:
    def test_none(self):
        assert parse_penalty("none").is_none

    @pytest.mark.parametrize("kind", PENALTY_KINDS)
    def test_each_kind(self, kind):
        assert parse_penalty(kind).terms == ((kind, 1.0),)

    def test_combination(self):
        spec = parse_penalty("under+over")
        assert spec.terms == (("under", 1.0), ("over", 1.0))

    def test_weights(self):
        spec = parse_penalty("under:2+over:0.5")
        assert spec.terms == (("under", 2.0), ("over", 0.5))

    def test_label_round_trip(self):
        for text in ("none", "value", "under+over", "under:2+over",
                     "absolute:0.25"):
            assert parse_penalty(parse_penalty(text).label).terms \
                == parse_penalty(text).terms

    @pytest.mark.parametrize("bad", ["", "waffle", "value:x", "none+value",
                                     "value:"])
    def test_rejects_garbage(self, bad):
        with pytest.raises((UnsupportedFormatError, ValueError)):
            parse_penalty(bad)

    def test_smoothing_carried(self):
        assert parse_penalty("value", smoothing=0.01).smoothing == 0.01


class TestPenaltyValue:
    def test_none_is_zero(self, rng):
        d, _ = make_train_dataset(rng)
        m = make_model(rng, d.num_users, d.num_items)
        assert penalty_value(m, d, PenaltySpec.none()) == 0.0

    @pytest.mark.parametrize("kind", PENALTY_KINDS)
    def test_single_kinds_match_oracle(self, rng, kind):
        for _ in range(8):
            d, protected = make_train_dataset(rng)
            m = make_model(rng, d.num_users, d.num_items)
            want = oracle_penalty(m.user_factors, m.item_factors,
                                  m.user_bias, m.item_bias,
                                  dataset_triples(d), protected,
                                  d.num_items, [(kind, 1.0)])
            got = penalty_value(m, d, PenaltySpec.single(kind))
            assert got == pytest.approx(want, abs=1e-12)

    def test_weighted_combination_matches_oracle(self, rng):
        d, protected = make_train_dataset(rng)
        m = make_model(rng, d.num_users, d.num_items)
        terms = [("under", 2.0), ("over", 0.5)]
        want = oracle_penalty(m.user_factors, m.item_factors,
                              m.user_bias, m.item_bias,
                              dataset_triples(d), protected,
                              d.num_items, terms)
        got = penalty_value(m, d, PenaltySpec(tuple(terms)))
        assert got == pytest.approx(want, abs=1e-12)

    def test_under_plus_over_equals_value(self, rng):
        """The positive and negative parts of the signed gap add back up to
        its magnitude, so these two specs are the same function."""
        for _ in range(10):
            d, _ = make_train_dataset(rng)
            m = make_model(rng, d.num_users, d.num_items)
            combo = penalty_value(m, d, parse_penalty("under+over"))
            value = penalty_value(m, d, parse_penalty("value"))
            assert combo == pytest.approx(value, abs=1e-12)

    def test_smoothing_upper_bounds_exact(self, rng):
        d, _ = make_train_dataset(rng)
        m = make_model(rng, d.num_users, d.num_items)
        exact = penalty_value(m, d, PenaltySpec.single("value"))
        smooth = penalty_value(m, d, PenaltySpec.single("value", smoothing=0.05))
        assert smooth >= exact
        tighter = penalty_value(m, d, PenaltySpec.single("value", smoothing=1e-6))
        assert tighter == pytest.approx(exact, abs=1e-5)


def _fd_check(rng, spec, h=1e-6, margin=1e-4, tries=20):
    """Relative error between the analytic gradient and central differences,
    resampling when any per-item gap sits within ``margin`` of a kink."""
    for _ in range(tries):
        d, protected = make_train_dataset(rng)
        m = make_model(rng, d.num_users, d.num_items, d=2)
        base = penalty_value(m, d, spec)
        if base == 0.0:
            continue
        vec = model_to_vector(m)
        probe = central_difference(
            lambda v: penalty_value(vector_to_model(v, m), d, spec),
            vec.tolist(), h=margin)
        mid = central_difference(
            lambda v: penalty_value(vector_to_model(v, m), d, spec),
            vec.tolist(), h=margin / 2)
        if not np.allclose(probe, mid, rtol=0.05, atol=1e-9):
            continue  # too close to a kink for stable differences
        ana = gradient_to_vector(penalty_gradient(m, d, spec))
        num = np.asarray(central_difference(
            lambda v: penalty_value(vector_to_model(v, m), d, spec),
            vec.tolist(), h=h))
        denom = max(float(np.linalg.norm(num, np.inf)), 1e-12)
        return float(np.linalg.norm(ana - num, np.inf)) / denom
    pytest.skip("no smooth instance found")


class TestPenaltyGradient:
    @pytest.mark.parametrize("kind", PENALTY_KINDS)
    def test_single_kinds_match_differences(self, rng, kind):
        rel = _fd_check(rng, PenaltySpec.single(kind))
        assert rel < 1e-6

    def test_combination_matches_differences(self, rng):
        rel = _fd_check(rng, PenaltySpec((("under", 2.0), ("over", 1.0))))
        assert rel < 1e-6

    def test_smoothed_gradient_matches_differences(self, rng):
        rel = _fd_check(rng, PenaltySpec.single("absolute", smoothing=0.05))
        assert rel < 1e-6

    def test_none_gradient_is_zero(self, rng):
        d, _ = make_train_dataset(rng)
        m = make_model(rng, d.num_users, d.num_items)
        g = penalty_gradient(m, d, PenaltySpec.none())
        assert not gradient_to_vector(g).any()
