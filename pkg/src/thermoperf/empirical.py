"""Data-driven cross-checks for the closed-form model.

A linear max-margin classifier trained on simulated traces gives the
"what a learner actually achieves" F1, and a Monte-Carlo likelihood-ratio
classifier gives brute-force ground truth for the Gaussian decision rule.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, StratificationError
from .heatsim import (
    ContactConditions,
    MaterialSample,
    SensorParams,
    TemperatureTrace,
    generate_trace,
    mean_temperature,
    sample_times,
    trace_seed,
)
from .matdb import sample_trials
from .perfmodel import EffusivityGrid, F1Matrix

SLOPE_WINDOW = 11


@dataclass
class FeatureVector:
    values: np.ndarray
    label: int | None = None


@dataclass
class CVResult:
    f1: float
    folds: int
    per_fold: list[float]


def local_slopes(temps: np.ndarray, dt: float, window: int = SLOPE_WINDOW) -> np.ndarray:
    """Least-squares slope over a centred window; edges use the truncated window."""
    temps = np.asarray(temps, dtype=float)
    n = len(temps)
    if window < 3 or window % 2 == 0:
        raise DomainError("slope window must be odd and >= 3")
    if window > n:
        raise DomainError(f"slope window {window} exceeds trace length {n}")
    half = window // 2
    slopes = np.empty(n)
    # interior: sum_k k (y[i+k] - y[i-k]) / (dt * sum k^2); differencing keeps constants exactly flat
    acc = np.zeros(n - 2 * half)
    for k in range(1, half + 1):
        acc += k * (temps[half + k:n - half + k] - temps[half - k:n - half - k])
    slopes[half:n - half] = acc / (dt * 2 * sum(k * k for k in range(1, half + 1)))
    for i in list(range(half)) + list(range(n - half, n)):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        idx = np.arange(lo, hi, dtype=float)
        idx -= idx.mean()
        seg = temps[lo:hi]
        slopes[i] = np.dot(idx, seg - seg.mean()) / (dt * np.dot(idx, idx))
    return slopes


def extract_features(trace: TemperatureTrace, slope_window: int = SLOPE_WINDOW,
                     label: int | None = None) -> FeatureVector:
    """Raw temperatures followed by local slopes (degC/s)."""
    dt = 1.0 / trace.meta.sample_rate
    slopes = local_slopes(trace.temps, dt, slope_window)
    return FeatureVector(np.concatenate([trace.temps, slopes]), label)


# --- linear soft-margin classifier ------------------------------------------

def fit_linear_svm(X: np.ndarray, y: np.ndarray, C: float = 1.0, epochs: int = 500) -> np.ndarray:
    """Full-batch subgradient descent on mean hinge loss + (reg/2)||w||^2.

    ``y`` in {-1, +1}; reg = 1/(n C); step 1/(reg * epoch) from w = 0, with the
    usual projection onto the ball of radius 1/sqrt(reg). A constant column is
    appended for the (regularized) bias. Returns the weight vector.
    """
    n = len(y)
    Xb = np.hstack([X, np.ones((n, 1))])
    reg = 1.0 / (n * C)
    radius = 1.0 / np.sqrt(reg)
    w = np.zeros(Xb.shape[1])
    for t in range(1, epochs + 1):
        active = y * (Xb @ w) < 1.0
        grad = reg * w - (y[active] @ Xb[active]) / n
        w = w - grad / (reg * t)
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
    return w


def predict_linear_svm(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.where(X @ w[:-1] + w[-1] > 0, 1, -1)


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """F1 with +1 as the positive class."""
    tp = np.sum((y_pred == 1) & (y_true == 1))
    fp = np.sum((y_pred == 1) & (y_true == -1))
    fn = np.sum((y_pred == -1) & (y_true == 1))
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


def cross_validate(feats_a: np.ndarray, feats_b: np.ndarray, folds: int = 3,
                   C: float = 1.0, epochs: int = 500) -> CVResult:
    """Stratified round-robin k-fold CV; class b is the positive class."""
    na, nb = len(feats_a), len(feats_b)
    if na < folds or nb < folds:
        raise StratificationError(f"need >= {folds} traces per class (got {na}, {nb})")
    X = np.vstack([feats_a, feats_b])
    y = np.concatenate([-np.ones(na), np.ones(nb)])
    fold_of = np.concatenate([np.arange(na) % folds, np.arange(nb) % folds])
    scores = []
    for k in range(folds):
        test = fold_of == k
        train = ~test
        if len(np.unique(y[train])) < 2 or len(np.unique(y[test])) < 2:
            raise StratificationError(f"fold {k} holds a single class")
        mu = X[train].mean(axis=0)
        sd = X[train].std(axis=0)
        sd[sd == 0] = 1.0
        w = fit_linear_svm((X[train] - mu) / sd, y[train], C, epochs)
        pred = predict_linear_svm(w, (X[test] - mu) / sd)
        scores.append(f1_score(y[test], pred))
    return CVResult(float(np.mean(scores)), folds, scores)


def train_eval_pair(traces_a: Sequence[TemperatureTrace], traces_b: Sequence[TemperatureTrace],
                    folds: int = 3, hyper: float = 1.0, *, slope_window: int = SLOPE_WINDOW,
                    epochs: int = 500) -> CVResult:
    """Cross-validated F1 of the linear classifier separating two trace sets.

    ``hyper`` is the soft-margin constant C.
    """
    lengths = {len(t) for t in list(traces_a) + list(traces_b)}
    if len(lengths) > 1:
        raise DomainError("all traces must have the same length")
    fa = np.array([extract_features(t, slope_window).values for t in traces_a])
    fb = np.array([extract_features(t, slope_window).values for t in traces_b])
    return cross_validate(fa, fb, folds, hyper, epochs)


# --- Monte-Carlo likelihood-ratio oracle -------------------------------------

def mc_oracle_f1(sensor: SensorParams, e1: float, e2: float, cond: ContactConditions,
                 sigma: float, n_pairs: int = 100_000, seed: int = 0,
                 chunk: int = 5000) -> float:
    """Brute-force F1 of the Gaussian likelihood-ratio classifier.

    Draws ``n_pairs`` noisy traces from each material (e2 is the positive
    class), labels each by the nearer mean curve (the likelihood-ratio rule
    under spherical covariance), breaks exact ties by a fair coin, and
    returns 2TP / (2TP + FP + FN).
    """
    if n_pairs < 1000:
        raise DomainError("n_pairs must be >= 1000")
    times = sample_times(sensor, cond.t_contact)
    mu1 = mean_temperature(sensor, MaterialSample(e1), cond, times)
    mu2 = mean_temperature(sensor, MaterialSample(e2), cond, times)
    rng = np.random.default_rng(seed)
    tp = fp = fn = 0
    done = 0
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        for mu, positive in ((mu1, False), (mu2, True)):
            x = mu + sigma * rng.standard_normal((m, len(times)))
            d_neg = np.sum((x - mu1) ** 2, axis=1)
            d_pos = np.sum((x - mu2) ** 2, axis=1)
            coin = rng.random(m) < 0.5
            says_pos = np.where(d_pos == d_neg, coin, d_pos < d_neg)
            if positive:
                tp += int(np.sum(says_pos))
                fn += int(np.sum(~says_pos))
            else:
                fp += int(np.sum(says_pos))
        done += m
    return 2 * tp / (2 * tp + fp + fn)


# --- empirical F1 matrix --------------------------------------------------------

def _cell_features(sensor, cond, grid, trials_per_interval, seed, stream, slope_window):
    samples = sample_trials(grid, trials_per_interval, trace_seed(seed, stream))
    feats = [[] for _ in range(len(grid))]
    for k, e in samples:
        t = len(feats[k])
        tr = generate_trace(sensor, MaterialSample(e), cond, trace_seed(seed, stream, k, t))
        feats[k].append(extract_features(tr, slope_window).values)
    return [np.array(f) for f in feats]


def empirical_matrix(sensor: SensorParams, grid: EffusivityGrid, cond: ContactConditions,
                     sigma: float, trials_per_interval: int = 50, seed: int = 0, *,
                     folds: int = 3, C: float = 1.0, epochs: int = 500,
                     slope_window: int = SLOPE_WINDOW,
                     progress: Callable[[int, int], None] | None = None) -> F1Matrix:
    """Cross-validated classifier F1 for every pair of grid cells.

    Each cell gets ``trials_per_interval`` traces at effusivities drawn
    uniformly inside it. The diagonal compares a cell against an independent
    second draw of the same cell. Off-diagonal pairs are evaluated once and
    mirrored.
    """
    noisy = replace(sensor, noise_sigma=sigma)
    feats = _cell_features(noisy, cond, grid, trials_per_interval, seed, 0, slope_window)
    twins = _cell_features(noisy, cond, grid, trials_per_interval, seed, 1, slope_window)
    size = len(grid)
    scores = np.empty((size, size))
    total = size * (size + 1) // 2
    done = 0
    for i in range(size):
        for j in range(i, size):
            other = twins[i] if i == j else feats[j]
            f1 = cross_validate(feats[i], other, folds, C, epochs).f1
            scores[i, j] = scores[j, i] = f1
            done += 1
            if progress:
                progress(done, total)
    return F1Matrix(grid, scores, sensor, cond, sigma, "empirical")
