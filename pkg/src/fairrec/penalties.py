"""Training-time unfairness penalties and their analytic subgradients.

A penalty is a weighted sum of the unfairness scores, computed over the
observed training ratings only (held-out truth must stay invisible to the
learner). Each score is piecewise smooth; at kinks the subgradient
conventions are sign(0) = 0 and hinge'(0) = 0, so a perfectly fair model is
a stationary point. An optional smoothing mode replaces every absolute value
with sqrt(x^2 + eps^2) for kink-sensitivity studies; it is off by default so
the penalty equals the literal metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    EmptyGroupError,
    FactorModel,
    NoComparableItemsError,
    UnsupportedFormatError,
)
from .factorization import Gradient, _check_bounds, entry_gradient, predict_entries
from .metrics import GroupItemAverages, _averages_from_arrays

PENALTY_KINDS = ("value", "absolute", "under", "over", "parity")
_PER_ITEM_KINDS = ("value", "absolute", "under", "over")


@dataclass(frozen=True)
class PenaltySpec:
    """Which unfairness terms to penalize, with weights.

    ``terms`` is a tuple of (kind, weight) pairs; an empty tuple means no
    penalty. ``smoothing`` is the epsilon of the smoothed absolute value,
    0.0 for the exact subgradient conventions.
    """

    terms: tuple = ()
    smoothing: float = 0.0

    def __post_init__(self):
        terms = tuple((str(kind), float(weight)) for kind, weight in self.terms)
        for kind, weight in terms:
            if kind not in PENALTY_KINDS:
                raise UnsupportedFormatError(f"unknown penalty kind {kind!r}")
            if not np.isfinite(weight) or weight < 0:
                raise ValueError(f"penalty weight for {kind!r} must be finite and >= 0")
        kinds = [kind for kind, _ in terms]
        if len(set(kinds)) != len(kinds):
            raise ValueError("each penalty kind may appear only once")
        if not (np.isfinite(self.smoothing) and self.smoothing >= 0):
            raise ValueError("smoothing must be finite and >= 0")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "smoothing", float(self.smoothing))

    @property
    def is_none(self) -> bool:
        return not self.terms

    @property
    def label(self) -> str:
        """Canonical name, parseable back by parse_penalty."""
        if self.is_none:
            return "none"
        parts = [kind if weight == 1.0 else f"{kind}:{weight:g}" for kind, weight in self.terms]
        return "+".join(parts)

    @classmethod
    def none(cls) -> "PenaltySpec":
        return cls(())

    @classmethod
    def single(cls, kind: str, weight: float = 1.0, smoothing: float = 0.0) -> "PenaltySpec":
        return cls(((kind, weight),), smoothing)


def parse_penalty(text: str, smoothing: float = 0.0) -> PenaltySpec:
    """Parse "none", "value", "under:0.5,over:0.5", or "under+over"."""
    stripped = text.strip().lower()
    if not stripped:
        raise ValueError("empty penalty specification")
    parts = [p for chunk in stripped.split(",") for p in chunk.split("+")]
    if "none" in parts:
        if len(parts) > 1:
            raise ValueError('"none" cannot be combined with other penalty terms')
        return PenaltySpec((), smoothing)
    terms = []
    for part in parts:
        kind, sep, weight = part.partition(":")
        terms.append((kind.strip(), float(weight) if sep else 1.0))
    return PenaltySpec(tuple(terms), smoothing)


def _abs_and_slope(x, eps: float):
    """|x| and its derivative, smoothed to sqrt(x^2 + eps^2) when eps > 0."""
    if eps > 0.0:
        root = np.sqrt(x * x + eps * eps)
        return root, x / root
    return np.abs(x), np.sign(x)


def _per_item_terms(kind: str, dp: np.ndarray, da: np.ndarray, eps: float):
    """Per-item penalty terms and their derivatives w.r.t. each group's D.

    D is the group's (average prediction - average truth) on comparable
    items. Returns (phi, dphi/dDp, dphi/dDa).
    """
    if kind == "value":
        inner_p, slope_p = dp, 1.0
        inner_a, slope_a = da, 1.0
    elif kind == "absolute":
        inner_p, slope_p = _abs_and_slope(dp, eps)
        inner_a, slope_a = _abs_and_slope(da, eps)
    elif kind == "under":
        inner_p, slope_p = np.maximum(-dp, 0.0), -(dp < 0).astype(np.float64)
        inner_a, slope_a = np.maximum(-da, 0.0), -(da < 0).astype(np.float64)
    elif kind == "over":
        inner_p, slope_p = np.maximum(dp, 0.0), (dp > 0).astype(np.float64)
        inner_a, slope_a = np.maximum(da, 0.0), (da > 0).astype(np.float64)
    else:
        raise ValueError(f"unknown per-item penalty kind {kind!r}")
    phi, outer = _abs_and_slope(inner_p - inner_a, eps)
    return phi, outer * slope_p, -outer * slope_a


class _TrainingView:
    """Predictions and group structure of one (model, training set) pair.

    Group-item averages and overall group means are computed on demand so a
    parity-only penalty never trips the comparable-items requirement and
    vice versa.
    """

    def __init__(self, model: FactorModel, train: Dataset):
        _check_bounds(model, train.user_idx, train.item_idx)
        self.model = model
        self.train = train
        self.preds = predict_entries(model, train.user_idx, train.item_idx)
        self.in_protected = train.protected[train.user_idx]
        self._avgs = None

    @property
    def avgs(self) -> GroupItemAverages:
        if self._avgs is None:
            self._avgs = _averages_from_arrays(
                self.model, self.train.user_idx, self.train.item_idx,
                self.train.values, self.train.protected)
        return self._avgs

    def signed_errors(self):
        """(valid mask, D_protected, D_advantaged) over comparable items."""
        valid = self.avgs.comparable
        if not valid.any():
            raise NoComparableItemsError("no item has training ratings from both groups")
        dp = self.avgs.pred_protected[valid] - self.avgs.true_protected[valid]
        da = self.avgs.pred_advantaged[valid] - self.avgs.true_advantaged[valid]
        return valid, dp, da

    def group_sizes(self):
        n_p = int(self.in_protected.sum())
        n_a = len(self.in_protected) - n_p
        if n_p == 0 or n_a == 0:
            raise EmptyGroupError("both groups need at least one training rating")
        return n_p, n_a


def _term_value(view: _TrainingView, kind: str, eps: float) -> float:
    if kind == "parity":
        view.group_sizes()
        gap = np.mean(view.preds[view.in_protected]) - np.mean(view.preds[~view.in_protected])
        phi, _ = _abs_and_slope(gap, eps)
        return float(phi)
    _, dp, da = view.signed_errors()
    phi, _, _ = _per_item_terms(kind, dp, da, eps)
    return float(np.mean(phi))


def _term_entry_coeffs(view: _TrainingView, kind: str, eps: float) -> np.ndarray:
    """d(term)/d(prediction of each training entry), via the chain rule.

    Each entry feeds its group's per-item average with weight 1/(raters of
    that item in the group), and each comparable item feeds the mean with
    weight 1/(number of comparable items).
    """
    if kind == "parity":
        n_p, n_a = view.group_sizes()
        gap = np.mean(view.preds[view.in_protected]) - np.mean(view.preds[~view.in_protected])
        _, slope = _abs_and_slope(gap, eps)
        return np.where(view.in_protected, slope / n_p, -slope / n_a)
    valid, dp, da = view.signed_errors()
    _, g_dp, g_da = _per_item_terms(kind, dp, da, eps)
    num_valid = int(valid.sum())
    per_item_p = np.zeros(view.model.num_items)
    per_item_a = np.zeros(view.model.num_items)
    per_item_p[valid] = g_dp / (num_valid * view.avgs.count_protected[valid])
    per_item_a[valid] = g_da / (num_valid * view.avgs.count_advantaged[valid])
    items = view.train.item_idx
    return np.where(view.in_protected, per_item_p[items], per_item_a[items])


def penalty_value(model: FactorModel, train: Dataset, spec: PenaltySpec) -> float:
    """Weighted sum of the active unfairness scores on the training set."""
    if spec.is_none:
        return 0.0
    view = _TrainingView(model, train)
    return float(sum(weight * _term_value(view, kind, spec.smoothing)
                     for kind, weight in spec.terms))


def penalty_gradient(model: FactorModel, train: Dataset, spec: PenaltySpec) -> Gradient:
    """Analytic subgradient of penalty_value w.r.t. the model parameters."""
    if spec.is_none:
        return Gradient.zeros_like(model)
    view = _TrainingView(model, train)
    coeffs = np.zeros(train.num_ratings)
    for kind, weight in spec.terms:
        coeffs += weight * _term_entry_coeffs(view, kind, spec.smoothing)
    return entry_gradient(model, train.user_idx, train.item_idx, coeffs)
