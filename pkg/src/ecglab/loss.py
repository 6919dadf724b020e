"""Masked binary cross-entropy over partially observed multi-label targets.

Entries of the label matrix equal to -1 are unobserved. They are removed from
the loss through a 0/1 mask, and the masked sum is divided by the number of
observed entries plus a small epsilon so an all-missing batch yields 0.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError, ShapeError

EPSILON = 1e-8


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def build_mask(Y):
    """Return ``(M, Y_prime)``: the observation mask and labels with -1 replaced by 0."""
    Y = np.asarray(Y)
    if not np.isin(Y, (-1, 0, 1)).all():
        raise DataError("labels must be in {-1, 0, 1}")
    M = (Y != -1).astype(np.float64)
    Y_prime = np.where(Y == -1, 0, Y).astype(np.float64)
    return M, Y_prime


def bce_with_logits(logits, targets):
    """Element-wise BCE in logit form; never forms log(sigmoid) explicitly."""
    l = np.asarray(logits, dtype=np.float64)
    return np.maximum(l, 0.0) - l * targets + np.log1p(np.exp(-np.abs(l)))


def _check(logits, Y):
    logits = np.asarray(logits, dtype=np.float64)
    Y = np.asarray(Y)
    if logits.shape != Y.shape:
        raise ShapeError(f"logits {logits.shape} vs labels {Y.shape}")
    if logits.ndim != 2:
        raise ShapeError("expected N x C arrays")
    return logits, Y


def masked_bce(logits, Y, cfg: LossConfig = LossConfig()):
    logits, Y = _check(logits, Y)
    M, Y_prime = build_mask(Y)
    # where() rather than M * bce so a masked entry contributes an exact 0
    per_entry = np.where(M > 0, bce_with_logits(logits, Y_prime), 0.0)
    return float(per_entry.sum() / (M.sum() + cfg.epsilon))


def masked_bce_grad(logits, Y, cfg: LossConfig = LossConfig()):
    """d(masked_bce)/d(logits); exactly zero where the label is missing."""
    logits, Y = _check(logits, Y)
    M, Y_prime = build_mask(Y)
    return np.where(M > 0, expit(logits) - Y_prime, 0.0) / (M.sum() + cfg.epsilon)


def masked_bce_parts(logits, Y):
    """``(sum of observed BCE terms, observed count)`` for running averages."""
    logits, Y = _check(logits, Y)
    M, Y_prime = build_mask(Y)
    return float(np.where(M > 0, bce_with_logits(logits, Y_prime), 0.0).sum()), float(M.sum())
