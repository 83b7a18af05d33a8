"""
Losses and exact gradients for the retrieval adapter

All three losses are functions of cosine similarities between the adapted,
normalized query z/|z| (z = qW) and unit candidate documents c. With
s = <z/|z|, c> the derivative is ds/dz = (c - s * z/|z|) / |z|, and
dL/dW = sum_i q_i (x) dL/dz_i.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

from config.settings import FIT_EPS, INFONCE_TEMPERATURE, NORM_EPS, TRIPLET_MARGIN, UNIT_NORM_TOLERANCE
from utils.adapter_core import Adapter, normalize_rows
from utils.exceptions import ConfigError, DimensionMismatchError

logger = logging.getLogger('radapt.training')

LOSSES = ('infonce', 'triplet')


@dataclass(frozen=True, eq=False)
class LossValue:
    """Scalar loss, its gradient with respect to W, and the degenerate-row count"""
    value: float
    grad: np.ndarray
    degenerate: int = 0


@dataclass(frozen=True, eq=False)
class AlignmentBatch:
    """Pairs (E_q(d), E_d(d)) for the same documents, unit-normalized"""
    q_side: np.ndarray
    d_side: np.ndarray

    def __post_init__(self):
        q_side = np.asarray(self.q_side, dtype=np.float64)
        d_side = np.asarray(self.d_side, dtype=np.float64)
        if q_side.ndim != 2 or d_side.ndim != 2:
            raise DimensionMismatchError("alignment sides must be matrices")
        if q_side.shape[0] != d_side.shape[0]:
            raise DimensionMismatchError(
                f"alignment sides have {q_side.shape[0]} and {d_side.shape[0]} rows")
        for name, side in (('q_side', q_side), ('d_side', d_side)):
            if side.shape[0] and np.abs(np.linalg.norm(side, axis=1) - 1.0).max() > UNIT_NORM_TOLERANCE:
                raise DimensionMismatchError(f"{name} rows must be unit-norm")
        object.__setattr__(self, 'q_side', q_side)
        object.__setattr__(self, 'd_side', d_side)

    @classmethod
    def from_vectors(cls, q_side: np.ndarray, d_side: np.ndarray) -> 'AlignmentBatch':
        q_unit, q_bad = normalize_rows(q_side)
        d_unit, d_bad = normalize_rows(d_side)
        if q_bad.any() or d_bad.any():
            raise DimensionMismatchError("alignment pairs contain zero vectors")
        return cls(q_unit, d_unit)

    def __len__(self) -> int:
        return self.q_side.shape[0]

    def take(self, indices: Sequence[int]) -> 'AlignmentBatch':
        return AlignmentBatch(self.q_side[indices], self.d_side[indices])


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    """Queries E_q(q_i), positives E_d(d_i+) and k negatives E_d(d_ij-) per row"""
    queries: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        queries = np.asarray(self.queries, dtype=np.float64)
        positives = np.asarray(self.positives, dtype=np.float64)
        negatives = np.asarray(self.negatives, dtype=np.float64)
        if queries.ndim != 2 or positives.ndim != 2 or negatives.ndim != 3:
            raise DimensionMismatchError("contrastive batch needs (n,hq), (n,hd) and (n,k,hd) arrays")
        n = queries.shape[0]
        if positives.shape[0] != n or negatives.shape[0] != n:
            raise DimensionMismatchError("queries, positives and negatives disagree on batch size")
        if negatives.shape[1] < 1:
            raise DimensionMismatchError("every example needs at least one negative")
        if negatives.shape[2] != positives.shape[1]:
            raise DimensionMismatchError("positive and negative documents have different widths")
        object.__setattr__(self, 'queries', queries)
        object.__setattr__(self, 'positives', positives)
        object.__setattr__(self, 'negatives', negatives)

    @property
    def k(self) -> int:
        return self.negatives.shape[1]

    def __len__(self) -> int:
        return self.queries.shape[0]

    def take(self, indices: Sequence[int]) -> 'ContrastiveBatch':
        return ContrastiveBatch(self.queries[indices], self.positives[indices], self.negatives[indices])

    def candidates(self) -> np.ndarray:
        """Unit candidate documents, positive first: shape (n, k+1, hd)"""
        stacked = np.concatenate([self.positives[:, None, :], self.negatives], axis=1)
        n, m, width = stacked.shape
        unit, degenerate = normalize_rows(stacked.reshape(n * m, width))
        unit[degenerate] = 0.0
        return unit.reshape(n, m, width)


def _adapt(adapter: Adapter, queries: np.ndarray, doc_width: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if queries.shape[1] != adapter.query_dim or doc_width != adapter.doc_dim:
        raise DimensionMismatchError(
            f"batch is ({queries.shape[1]} -> {doc_width}), adapter is "
            f"({adapter.query_dim} -> {adapter.doc_dim})")
    z = queries @ adapter.weights
    norms = np.linalg.norm(z, axis=1)
    degenerate = norms <= NORM_EPS
    norms = np.where(degenerate, 1.0, norms)
    unit = z / norms[:, None]
    unit[degenerate] = 0.0
    return unit, norms, degenerate


def _weight_gradient(queries: np.ndarray, unit: np.ndarray, norms: np.ndarray, degenerate: np.ndarray,
                     candidates: np.ndarray, scores: np.ndarray, score_grad: np.ndarray) -> np.ndarray:
    """Chain dL/ds through the normalized adapted query back to W"""
    pull = np.einsum('nm,nmd->nd', score_grad, candidates)
    radial = (score_grad * scores).sum(axis=1)
    grad_z = (pull - radial[:, None] * unit) / norms[:, None]
    grad_z[degenerate] = 0.0
    return queries.T @ grad_z


def _report_degenerate(count: int, loss_name: str):
    if count:
        logger.debug(f"{loss_name}: {count} degenerate adapted vectors contributed zero gradient")


def alignment_loss(adapter: Adapter, batch: AlignmentBatch) -> LossValue:
    """Mean of 1 - cos(apply_adapter(q_row), d_row)"""
    n = len(batch)
    if n == 0:
        raise DimensionMismatchError("alignment batch is empty")
    unit, norms, degenerate = _adapt(adapter, batch.q_side, batch.d_side.shape[1])
    candidates = batch.d_side[:, None, :]
    scores = np.einsum('nd,nmd->nm', unit, candidates)

    value = float(np.mean(1.0 - scores[:, 0]))
    score_grad = np.full((n, 1), -1.0 / n)
    # pairs already fit to rounding error contribute zero gradient
    residual = np.linalg.norm(batch.d_side - scores[:, :1] * unit, axis=1)
    score_grad[residual <= FIT_EPS] = 0.0
    grad = _weight_gradient(batch.q_side, unit, norms, degenerate, candidates, scores, score_grad)

    _report_degenerate(int(degenerate.sum()), 'alignment')
    return LossValue(value, grad, int(degenerate.sum()))


def infonce_loss(adapter: Adapter, batch: ContrastiveBatch, temperature: float = INFONCE_TEMPERATURE) -> LossValue:
    """Softmax cross-entropy of the positive against its explicit negatives"""
    if not temperature > 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    n = len(batch)
    if n == 0:
        raise DimensionMismatchError("contrastive batch is empty")
    unit, norms, degenerate = _adapt(adapter, batch.queries, batch.positives.shape[1])
    candidates = batch.candidates()
    scores = np.einsum('nd,nmd->nm', unit, candidates)

    logits = scores / temperature
    peak = logits.max(axis=1, keepdims=True)
    shifted = np.exp(logits - peak)
    log_normalizer = peak[:, 0] + np.log(shifted.sum(axis=1))
    per_example = log_normalizer - logits[:, 0]
    value = float(np.mean(per_example))

    probabilities = shifted / shifted.sum(axis=1, keepdims=True)
    probabilities[:, 0] -= 1.0
    score_grad = probabilities / (temperature * n)
    grad = _weight_gradient(batch.queries, unit, norms, degenerate, candidates, scores, score_grad)

    _report_degenerate(int(degenerate.sum()), 'infonce')
    return LossValue(value, grad, int(degenerate.sum()))


def triplet_loss(adapter: Adapter, batch: ContrastiveBatch, margin: float = TRIPLET_MARGIN) -> LossValue:
    """Mean over (example, negative) pairs of max(0, margin - s+ + s-)"""
    if margin < 0:
        raise ConfigError(f"margin must be non-negative, got {margin}")
    n = len(batch)
    if n == 0:
        raise DimensionMismatchError("contrastive batch is empty")
    unit, norms, degenerate = _adapt(adapter, batch.queries, batch.positives.shape[1])
    candidates = batch.candidates()
    scores = np.einsum('nd,nmd->nm', unit, candidates)

    hinge = margin - scores[:, :1] + scores[:, 1:]
    active = (hinge > 0).astype(np.float64)
    pairs = hinge.size
    value = float(np.maximum(hinge, 0.0).sum() / pairs)

    score_grad = np.empty_like(scores)
    score_grad[:, 0] = -active.sum(axis=1) / pairs
    score_grad[:, 1:] = active / pairs
    grad = _weight_gradient(batch.queries, unit, norms, degenerate, candidates, scores, score_grad)

    _report_degenerate(int(degenerate.sum()), 'triplet')
    return LossValue(value, grad, int(degenerate.sum()))


def make_loss(name: str = 'infonce', temperature: float = INFONCE_TEMPERATURE,
              margin: float = TRIPLET_MARGIN) -> Callable[[Adapter, ContrastiveBatch], LossValue]:
    """Loss selector for the adaptation stage"""
    if name == 'infonce':
        if not temperature > 0:
            raise ConfigError(f"temperature must be positive, got {temperature}")
        return lambda adapter, batch: infonce_loss(adapter, batch, temperature)
    if name == 'triplet':
        if margin < 0:
            raise ConfigError(f"margin must be non-negative, got {margin}")
        return lambda adapter, batch: triplet_loss(adapter, batch, margin)
    raise ConfigError(f"unknown loss {name!r}; expected one of {LOSSES}")
