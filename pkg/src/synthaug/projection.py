"""2-D projections of utterance latents: exact t-SNE and PCA."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._seeding import rng_for
from .errors import DegenerateInput, EmptyInput, PerplexityTooHigh


class PointLabel(str, enum.Enum):
    REAL = "Real"
    SYNTHETIC_MATCHED = "SyntheticMatched"
    SYNTHETIC_MISMATCHED = "SyntheticMismatched"


@dataclass(frozen=True)
class EmbeddedPoint:
    utterance_id: str
    coords: tuple[float, float]
    label: PointLabel

    def __post_init__(self):
        if not all(np.isfinite(self.coords)):
            raise ValueError(f"non-finite coordinates for {self.utterance_id!r}")


def mean_pool(latents: Sequence[Sequence[float]]) -> np.ndarray:
    frames = np.asarray(latents, dtype=float)
    if frames.ndim != 2 or len(frames) == 0:
        raise EmptyInput("need at least one frame")
    return frames.mean(axis=0)


# -- t-SNE ---------------------------------------------------------------------

PERPLEXITY_TOL = 1e-5


def default_perplexity(n: int) -> float:
    return float(min(30, (n - 1) // 3))


def _row_entropy(d_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # shift by the row minimum so the largest kernel value is exp(0)
    shifted = d_row - d_row.min()
    p = np.exp(-shifted * beta)
    s = p.sum()
    p /= s
    h = float(np.log(s) + beta * np.sum(shifted * p))
    return h, p


def conditional_affinities(X: np.ndarray, perplexity: float, tol: float = PERPLEXITY_TOL,
                           max_iter: int = 200) -> np.ndarray:
    """Row-stochastic P_{j|i} whose row entropies match log(perplexity)."""
    n = X.shape[0]
    sq = np.sum(X * X, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d_row = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        if d_row.max() > d_row.min():
            beta = 1.0 / np.median(d_row - d_row.min() + 1e-300)
        h, p = _row_entropy(d_row, beta)
        for _ in range(max_iter):
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _row_entropy(d_row, beta)
        P[i, np.arange(n) != i] = p
    return P


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    P = conditional_affinities(X, perplexity)
    return (P + P.T) / (2 * X.shape[0])


def _student_q(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sq = np.sum(Y * Y, axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2 * Y @ Y.T, 0.0))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    Q, _ = _student_q(Y)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))


def kl_gradient(P: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """dKL/dY_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)."""
    Q, num = _student_q(Y)
    W = (P - Q) * num
    return 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_initial: float
    kl_final: float
    perplexity: float
    kl_history: list[float] = field(default_factory=list)


def run_tsne(X, perplexity: float | None = None, iters: int = 1000, seed: int = 0,
             learning_rate: float | None = None, exaggeration: float = 12.0,
             exaggeration_iters: int = 250) -> TsneResult:
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 4:
        raise ValueError(f"t-SNE needs at least 4 points, got {n}")
    if np.allclose(X, X[0]):
        raise DegenerateInput("all input points coincide")
    if perplexity is None:
        perplexity = default_perplexity(n)
    if perplexity > (n - 1) / 3:
        raise PerplexityTooHigh(f"perplexity {perplexity} exceeds (N-1)/3 = {(n - 1) / 3:.3g}")
    if perplexity < 1:
        raise PerplexityTooHigh("perplexity must be at least 1")

    if learning_rate is None:
        learning_rate = max(n / exaggeration / 4.0, 50.0)
    P = np.maximum(joint_affinities(X, perplexity), 1e-12)
    P /= P.sum()
    Y = 1e-4 * rng_for(seed, "tsne-init").standard_normal((n, 2))
    kl0 = kl_divergence(P, Y)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    for it in range(iters):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        grad = kl_gradient(exag * P, Y)
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if (it + 1) % 50 == 0:
            history.append(kl_divergence(P, Y))
    return TsneResult(Y, kl0, kl_divergence(P, Y), perplexity, history)


def tsne_2d(X, perplexity: float | None = None, iters: int = 1000, seed: int = 0) -> np.ndarray:
    return run_tsne(X, perplexity, iters, seed).embedding


# -- PCA -----------------------------------------------------------------------

def pca(X, n_components: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Projection onto the top principal components and their explained variances.

    Each component's sign is fixed so its largest-magnitude coordinate is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("PCA needs at least 2 points")
    centered = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:n_components].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    proj = centered @ comps.T
    if proj.shape[1] < n_components:
        proj = np.hstack([proj, np.zeros((proj.shape[0], n_components - proj.shape[1]))])
    variances = s[:n_components] ** 2 / (X.shape[0] - 1)
    return proj, variances


def pca_2d(X) -> np.ndarray:
    return pca(X, 2)[0]
