"""Biased matrix-factorization prediction, its squared-error objective, and
the analytic gradient of that objective.

The objective is  lam/2 * (||P||_F^2 + ||Q||_F^2) + mean over observed
entries of (prediction - rating)^2.  Bias terms are deliberately left out of
the Frobenius penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Dataset,
    EmptyTrainingSetError,
    FactorModel,
    IndexOutOfRangeError,
)


@dataclass(frozen=True)
class Gradient:
    """Partial derivatives with respect to every model parameter block."""

    d_user_factors: np.ndarray
    d_item_factors: np.ndarray
    d_user_bias: np.ndarray
    d_item_bias: np.ndarray

    @classmethod
    def zeros_like(cls, model: FactorModel) -> "Gradient":
        return cls(
            np.zeros_like(model.user_factors),
            np.zeros_like(model.item_factors),
            np.zeros_like(model.user_bias),
            np.zeros_like(model.item_bias),
        )

    def plus(self, other: "Gradient", weight: float = 1.0) -> "Gradient":
        return Gradient(
            self.d_user_factors + weight * other.d_user_factors,
            self.d_item_factors + weight * other.d_item_factors,
            self.d_user_bias + weight * other.d_user_bias,
            self.d_item_bias + weight * other.d_item_bias,
        )


def predict(model: FactorModel, user: int, item: int) -> float:
    """Predicted score for one (user, item) pair; never clamped to the
    rating scale."""
    if not 0 <= user < model.num_users:
        raise IndexOutOfRangeError(f"user {user} outside [0, {model.num_users})")
    if not 0 <= item < model.num_items:
        raise IndexOutOfRangeError(f"item {item} outside [0, {model.num_items})")
    return float(
        model.user_factors[user] @ model.item_factors[item]
        + model.user_bias[user]
        + model.item_bias[item]
    )


def predict_entries(model: FactorModel, user_idx: np.ndarray, item_idx: np.ndarray) -> np.ndarray:
    """Vectorized predictions for parallel index arrays (assumed in bounds)."""
    P = model.user_factors[user_idx]
    Q = model.item_factors[item_idx]
    return np.einsum("ij,ij->i", P, Q) + model.user_bias[user_idx] + model.item_bias[item_idx]


def _check_bounds(model: FactorModel, user_idx: np.ndarray, item_idx: np.ndarray) -> None:
    if len(user_idx) == 0:
        return
    if user_idx.min() < 0 or user_idx.max() >= model.num_users:
        raise IndexOutOfRangeError(f"user index outside [0, {model.num_users})")
    if item_idx.min() < 0 or item_idx.max() >= model.num_items:
        raise IndexOutOfRangeError(f"item index outside [0, {model.num_items})")


def scatter_sum(idx: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    return np.bincount(idx, weights=weights, minlength=size)


def scatter_rows(idx: np.ndarray, rows: np.ndarray, size: int) -> np.ndarray:
    """Sum the (k, d) rows into a (size, d) array grouped by idx."""
    out = np.empty((size, rows.shape[1]))
    for c in range(rows.shape[1]):
        out[:, c] = np.bincount(idx, weights=rows[:, c], minlength=size)
    return out


def entry_gradient(model: FactorModel, user_idx: np.ndarray, item_idx: np.ndarray,
                   coeffs: np.ndarray) -> Gradient:
    """Gradient of sum_e coeffs[e] * prediction_e over all parameters.

    Every loss here differentiates through predictions only, so its gradient
    is fully described by one coefficient per observed entry; this routine
    turns those coefficients into per-parameter sums.
    """
    w = coeffs[:, None]
    return Gradient(
        scatter_rows(user_idx, w * model.item_factors[item_idx], model.num_users),
        scatter_rows(item_idx, w * model.user_factors[user_idx], model.num_items),
        scatter_sum(user_idx, coeffs, model.num_users),
        scatter_sum(item_idx, coeffs, model.num_items),
    )


def objective(model: FactorModel, train: Dataset, lam: float) -> float:
    """Regularized mean squared reconstruction error on the training set."""
    if train.num_ratings == 0:
        raise EmptyTrainingSetError("objective needs at least one rating")
    _check_bounds(model, train.user_idx, train.item_idx)
    resid = predict_entries(model, train.user_idx, train.item_idx) - train.values
    # a diverging model overflows to inf here; the trainer turns that into
    # a DivergenceError, so the overflow itself is not worth a warning
    with np.errstate(over="ignore"):
        reg = 0.5 * lam * (
            float(np.sum(model.user_factors**2)) + float(np.sum(model.item_factors**2))
        )
        return reg + float(np.mean(resid**2))


def objective_gradient(model: FactorModel, train: Dataset, lam: float) -> Gradient:
    """Analytic gradient of ``objective``.

    Each observed entry contributes (2/k) * residual through the prediction;
    the Frobenius term adds lam * P and lam * Q for every row, including rows
    untouched by any rating. Biases receive no regularization.
    """
    if train.num_ratings == 0:
        raise EmptyTrainingSetError("objective gradient needs at least one rating")
    _check_bounds(model, train.user_idx, train.item_idx)
    resid = predict_entries(model, train.user_idx, train.item_idx) - train.values
    coeffs = (2.0 / train.num_ratings) * resid
    g = entry_gradient(model, train.user_idx, train.item_idx, coeffs)
    return Gradient(
        g.d_user_factors + lam * model.user_factors,
        g.d_item_factors + lam * model.item_factors,
        g.d_user_bias,
        g.d_item_bias,
    )
