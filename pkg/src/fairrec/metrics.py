"""Evaluation-time unfairness metrics and prediction error.

All five unfairness scores compare the disadvantaged (protected) user group
against the advantaged group. The four per-item scores average over items
where BOTH groups have at least one evaluation entry; items lacking a group
are dropped from numerator and denominator alike, and the count of surviving
items is reported alongside the scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    EmptyEvalSetError,
    EmptyGroupError,
    FactorModel,
    MetricReport,
    NoComparableItemsError,
    UnsupportedFormatError,
)
from .factorization import _check_bounds, predict_entries, scatter_sum

HELD_OUT = "held-out-ratings"
EXPECTED_VALUES = "expected-values"


@dataclass(frozen=True)
class EvalSet:
    """Triples to evaluate a model on, canonically sorted by (user, item).

    ``source`` records whether the truths are held-out observed ratings or
    block-model expected values; it does not change any computation.
    """

    user_idx: np.ndarray
    item_idx: np.ndarray
    values: np.ndarray
    source: str = HELD_OUT

    def __post_init__(self):
        u = np.asarray(self.user_idx, dtype=np.int64)
        i = np.asarray(self.item_idx, dtype=np.int64)
        v = np.asarray(self.values, dtype=np.float64)
        if not (u.ndim == i.ndim == v.ndim == 1 and len(u) == len(i) == len(v)):
            raise ValueError("user_idx, item_idx, values must be 1-d and equally long")
        if len(u) == 0:
            raise EmptyEvalSetError("evaluation set has no entries")
        if u.min() < 0 or i.min() < 0:
            raise ValueError("negative evaluation indices")
        order = np.lexsort((i, u))
        for name, arr in (("user_idx", u[order]), ("item_idx", i[order]), ("values", v[order])):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_dataset(cls, d: Dataset, source: str = HELD_OUT) -> "EvalSet":
        return cls(d.user_idx, d.item_idx, d.values, source)


@dataclass(frozen=True)
class GroupItemAverages:
    """Per-item mean predicted and true scores, split by user group.

    Averages are meaningful only where the matching count is positive; absent
    cells are filled with 0.0 and must be gated on the presence masks.
    """

    pred_protected: np.ndarray
    true_protected: np.ndarray
    count_protected: np.ndarray
    pred_advantaged: np.ndarray
    true_advantaged: np.ndarray
    count_advantaged: np.ndarray

    @property
    def protected_present(self) -> np.ndarray:
        return self.count_protected > 0

    @property
    def advantaged_present(self) -> np.ndarray:
        return self.count_advantaged > 0

    @property
    def comparable(self) -> np.ndarray:
        """Items with evaluation entries from both groups."""
        return self.protected_present & self.advantaged_present


def hinge(x: float) -> float:
    """x for x >= 0, else 0."""
    return x if x >= 0 else 0.0


def _averages_from_arrays(model: FactorModel, user_idx: np.ndarray, item_idx: np.ndarray,
                          values: np.ndarray, protected: np.ndarray) -> GroupItemAverages:
    """Shared core of group_item_averages, also reused for training penalties."""
    _check_bounds(model, user_idx, item_idx)
    m = model.num_items
    preds = predict_entries(model, user_idx, item_idx)
    in_protected = np.asarray(protected, dtype=bool)[user_idx]

    def side(mask):
        items = item_idx[mask]
        count = scatter_sum(items, np.ones(mask.sum()), m)
        denom = np.maximum(count, 1.0)
        avg_pred = scatter_sum(items, preds[mask], m) / denom
        avg_true = scatter_sum(items, values[mask], m) / denom
        return avg_pred, avg_true, count

    pp, tp, cp = side(in_protected)
    pa, ta, ca = side(~in_protected)
    return GroupItemAverages(pp, tp, cp, pa, ta, ca)


def group_item_averages(model: FactorModel, eval_set: EvalSet,
                        protected: np.ndarray) -> GroupItemAverages:
    """Average predictions and truths per item, separately per user group."""
    return _averages_from_arrays(model, eval_set.user_idx, eval_set.item_idx,
                                 eval_set.values, protected)


def _signed_errors(avgs: GroupItemAverages) -> tuple[np.ndarray, np.ndarray]:
    valid = avgs.comparable
    if not valid.any():
        raise NoComparableItemsError("no item has evaluation entries from both groups")
    dp = avgs.pred_protected[valid] - avgs.true_protected[valid]
    da = avgs.pred_advantaged[valid] - avgs.true_advantaged[valid]
    return dp, da


def value_unfairness(avgs: GroupItemAverages) -> float:
    """Mean per-item gap between the groups' signed estimation errors."""
    dp, da = _signed_errors(avgs)
    return float(np.mean(np.abs(dp - da)))


def absolute_unfairness(avgs: GroupItemAverages) -> float:
    """Mean per-item gap between the groups' unsigned estimation errors."""
    dp, da = _signed_errors(avgs)
    return float(np.mean(np.abs(np.abs(dp) - np.abs(da))))


def underestimation_unfairness(avgs: GroupItemAverages) -> float:
    """Mean per-item gap between how much each group is underestimated."""
    dp, da = _signed_errors(avgs)
    return float(np.mean(np.abs(np.maximum(-dp, 0.0) - np.maximum(-da, 0.0))))


def overestimation_unfairness(avgs: GroupItemAverages) -> float:
    """Mean per-item gap between how much each group is overestimated."""
    dp, da = _signed_errors(avgs)
    return float(np.mean(np.abs(np.maximum(dp, 0.0) - np.maximum(da, 0.0))))


def non_parity(model: FactorModel, eval_set: EvalSet, protected: np.ndarray) -> float:
    """Absolute difference between the groups' overall mean predictions."""
    _check_bounds(model, eval_set.user_idx, eval_set.item_idx)
    preds = predict_entries(model, eval_set.user_idx, eval_set.item_idx)
    in_protected = np.asarray(protected, dtype=bool)[eval_set.user_idx]
    if not in_protected.any() or in_protected.all():
        raise EmptyGroupError("both groups need at least one evaluation entry")
    return float(abs(np.mean(preds[in_protected]) - np.mean(preds[~in_protected])))


def rmse(model: FactorModel, eval_set: EvalSet) -> float:
    """Root mean squared prediction error over the evaluation entries."""
    _check_bounds(model, eval_set.user_idx, eval_set.item_idx)
    resid = predict_entries(model, eval_set.user_idx, eval_set.item_idx) - eval_set.values
    return float(np.sqrt(np.mean(resid**2)))


def mse(model: FactorModel, eval_set: EvalSet) -> float:
    """Mean squared prediction error, for setups that avoid the square root."""
    return rmse(model, eval_set) ** 2


def full_report(model: FactorModel, eval_set: EvalSet, protected: np.ndarray,
                error_metric: str = "rmse") -> MetricReport:
    """Bundle prediction error and all five unfairness scores."""
    if error_metric == "rmse":
        err = rmse(model, eval_set)
    elif error_metric == "mse":
        err = mse(model, eval_set)
    else:
        raise UnsupportedFormatError(f"unknown error metric {error_metric!r}")
    avgs = group_item_averages(model, eval_set, protected)
    return MetricReport(
        error=err,
        value=value_unfairness(avgs),
        absolute=absolute_unfairness(avgs),
        under=underestimation_unfairness(avgs),
        over=overestimation_unfairness(avgs),
        parity=non_parity(model, eval_set, protected),
        items_counted=int(avgs.comparable.sum()),
    )
