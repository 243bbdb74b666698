"""Logit and probability algebra for contrastive decoding.

Logits are plain float vectors indexed by token id; -inf marks a masked
token. Probability vectors are nonnegative and sum to one. All operations
are pure and vectorized with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "PlausibilityMask",
    "softmax",
    "jsd",
    "total_variation",
    "contrast_logits",
    "plausibility_mask",
    "contrast_distribution",
    "top_m_pairs",
    "argmax_token",
]


@dataclass(frozen=True)
class PlausibilityMask:
    """Token ids whose expert probability clears beta times the maximum."""

    allowed: frozenset[int]
    beta: float

    def __contains__(self, token_id: int) -> bool:
        return token_id in self.allowed


def _as_logits(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("logits must be a nonempty 1-D vector")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise InvalidInputError("logits must be finite or -inf")
    return arr


def softmax(logits) -> np.ndarray:
    """Max-subtracted exponentiation and normalization; -inf maps to 0."""
    arr = _as_logits(logits)
    top = arr.max()
    if np.isneginf(top):
        raise InvalidInputError("softmax of an all-masked logit vector")
    with np.errstate(invalid="ignore"):
        shifted = np.where(np.isneginf(arr), -np.inf, arr - top)
    expo = np.exp(shifted)
    return expo / expo.sum()


def _check_pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError("distributions must share a vocabulary size")
    return p, q


def jsd(p, q) -> float:
    """Base-2 Jensen-Shannon divergence; symmetric, 0 iff p == q, at most 1.

    Zero-probability terms follow the 0 * log(0 / x) := 0 continuity
    convention.
    """
    p, q = _check_pair(p, q)
    m = 0.5 * (p + q)
    return 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)


def _kl2(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / m[mask])))


def total_variation(p, q) -> float:
    """Half the L1 distance between two probability vectors."""
    p, q = _check_pair(p, q)
    return float(0.5 * np.abs(p - q).sum())


def contrast_logits(f_expert, f_amateur, alpha: float) -> np.ndarray:
    """Log-space contrast (1 + alpha) * f_expert - alpha * f_amateur.

    Entries masked (-inf) in the expert vector stay masked.
    """
    if alpha < 0:
        raise InvalidParameterError("amplification factor must be nonnegative")
    f_e = _as_logits(f_expert)
    f_a = _as_logits(f_amateur)
    if f_e.shape != f_a.shape:
        raise InvalidInputError("logit vectors must share a vocabulary size")
    masked = np.isneginf(f_e)
    with np.errstate(invalid="ignore"):
        out = (1.0 + alpha) * f_e - alpha * f_a
    out[masked] = -np.inf
    return out


def plausibility_mask(p_expert, beta: float) -> PlausibilityMask:
    """Adaptive plausibility set: tokens with p >= beta * max(p)."""
    if not 0 < beta < 1:
        raise InvalidParameterError("plausibility threshold must lie in (0, 1)")
    p = np.asarray(p_expert, dtype=float)
    threshold = beta * p.max()
    allowed = frozenset(int(i) for i in np.flatnonzero(p >= threshold))
    return PlausibilityMask(allowed=allowed, beta=beta)


def contrast_distribution(f_expert, f_amateur, alpha: float, beta: float) -> np.ndarray:
    """Masked contrastive distribution for one ordered FOV pair.

    The plausibility mask comes from the expert softmax; tokens outside it
    get exactly zero probability and the remainder renormalizes.
    """
    f_e = _as_logits(f_expert)
    mask = plausibility_mask(softmax(f_e), beta)
    contrasted = contrast_logits(f_e, f_amateur, alpha)
    keep = np.zeros(contrasted.shape, dtype=bool)
    keep[list(mask.allowed)] = True
    contrasted[~keep] = -np.inf
    return softmax(contrasted)


def top_m_pairs(dists, m: int) -> list[tuple[int, int]]:
    """Unordered index pairs ranked by JSD descending, lexicographic on ties.

    Returns the first min(m, n*(n-1)/2) pairs. Selection sees the full
    (unmasked) distributions.
    """
    if len(dists) < 2:
        raise InvalidInputError("need at least two distributions to pair")
    if m < 1:
        raise InvalidParameterError("pair buffer size must be at least 1")
    scored = []
    for i in range(len(dists)):
        for j in range(i + 1, len(dists)):
            scored.append((-jsd(dists[i], dists[j]), i, j))
    scored.sort()
    return [(i, j) for _, i, j in scored[:m]]


def argmax_token(p) -> int:
    """Lowest token id among the maximal probabilities."""
    return int(np.argmax(np.asarray(p, dtype=float)))
