"""Window statistics and a from-scratch SVM for movement classification.

Binary machines are trained with sequential minimal optimization using the
maximal-violating-pair working set; multiclass decisions use one-vs-one
voting.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateDataset,
    DimensionMismatch,
    NoConvergence,
    SegmentTooShort,
    TooFewExamplesPerClass,
)
from .ingest import MovementClass, SensorLog
from .segmentation import Segment

N_FEATURES = 24
FEATURE_CHANNELS = ("acc_x", "acc_y", "acc_z", "roll", "pitch", "yaw")
FEATURE_STATS = ("mean", "min", "max", "std")
FEATURE_NAMES = tuple(f"{c}_{s}" for c in FEATURE_CHANNELS for s in FEATURE_STATS)
MODEL_FORMAT_VERSION = 1
N_CLASSES = len(MovementClass)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        return isinstance(other, FeatureVector) and np.array_equal(self.values, other.values)


def _channel_stats(x: np.ndarray) -> tuple[float, float, float, float]:
    # fsum keeps the statistics exactly independent of sample order
    n = x.shape[0]
    lo, hi = float(x.min()), float(x.max())
    mean = min(max(math.fsum(x) / n, lo), hi)
    std = math.sqrt(math.fsum((x - mean) ** 2) / n)
    return mean, lo, hi, std


def window_features(acc: np.ndarray, euler: np.ndarray) -> FeatureVector:
    chans = np.hstack([np.asarray(acc, float), np.asarray(euler, float)])
    if chans.shape[0] < 2:
        raise SegmentTooShort("features need at least 2 samples")
    stats = [s for j in range(6) for s in _channel_stats(chans[:, j])]
    return FeatureVector(np.array(stats))


def extract_features(log: SensorLog, seg: Segment) -> FeatureVector:
    """Mean, min, max and population std of acc x/y/z and roll/pitch/yaw."""
    if seg.end > len(log):
        raise ValueError(f"segment [{seg.start}, {seg.end}) exceeds log of {len(log)} samples")
    if len(seg) < 2:
        raise SegmentTooShort(f"segment has {len(seg)} sample(s)")
    return window_features(log.acc[seg.start:seg.end], log.euler[seg.start:seg.end])


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "rbf"
    C: float = 10.0
    gamma: float | None = None  # None -> 1 / n_features
    tol: float = 1e-3
    max_iter: int = 200_000

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")


def kernel_matrix(X, Y, kernel: str, gamma: float) -> np.ndarray:
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if kernel == "linear":
        return X @ Y.T
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * (X @ Y.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True, eq=False)
class BinaryMachine:
    """One-vs-one machine; positive decision votes for ``pos``."""

    pos: int
    neg: int
    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float

    def decision(self, Z: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
        if self.alphas.size == 0:
            return np.full(Z.shape[0], self.bias)
        K = kernel_matrix(Z, self.support_vectors, kernel, gamma)
        return K @ (self.alphas * self.labels) + self.bias


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 200_000):
    """Solve the soft-margin SVM dual for a precomputed kernel matrix.

    Minimizes ``0.5 a'Qa - sum(a)`` with ``Q = yy' * K`` subject to
    ``0 <= a <= C`` and ``y'a = 0``. Each iteration updates the maximal
    violating pair; the loop ends when the KKT gap drops below ``tol``.

    Returns ``(alpha, bias, iterations)``.
    """
    n = y.shape[0]
    y = y.astype(float)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diag = np.diag(K).copy()
    tau = 1e-12
    for it in range(max_iter + 1):
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        yg_up = np.where(up, yg, -np.inf)
        yg_low = np.where(low, yg, np.inf)
        i = int(np.argmax(yg_up))
        j = int(np.argmin(yg_low))
        gap = yg_up[i] - yg_low[j]
        if gap < tol:
            break
        if it == max_iter:
            raise NoConvergence(f"SMO did not reach KKT gap {tol} in {max_iter} iterations (gap {gap:.3g})")
        eta = max(diag[i] + diag[j] - 2.0 * K[i, j], tau)
        step = gap / eta
        step = min(step, C - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else C - alpha[j])
        da_i = y[i] * step
        da_j = -y[j] * step
        alpha[i] = min(max(alpha[i] + da_i, 0.0), C)
        alpha[j] = min(max(alpha[j] + da_j, 0.0), C)
        grad += y * (K[:, i] * (y[i] * da_i) + K[:, j] * (y[j] * da_j))

    yg = -y * grad
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(yg[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        m = yg[up].max() if np.any(up) else 0.0
        M = yg[low].min() if np.any(low) else 0.0
        bias = float(0.5 * (m + M))
    return alpha, bias, it


@dataclass(frozen=True, eq=False)
class SvmModel:
    machines: tuple[BinaryMachine, ...]
    classes: tuple[int, ...]
    kernel: str
    gamma: float
    C: float
    scale_mean: np.ndarray
    scale_std: np.ndarray

    @property
    def class_pairs(self):
        return [(m.pos, m.neg) for m in self.machines]

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.scale_mean.shape[0]:
            raise DimensionMismatch(f"expected {self.scale_mean.shape[0]} features, got {X.shape[1]}")
        return (X - self.scale_mean) / self.scale_std

    def decision_votes(self, X):
        """Vote counts and summed margins per class index, shape ``(n, 5)``."""
        Z = self.transform(X)
        votes = np.zeros((Z.shape[0], N_CLASSES))
        margin = np.zeros((Z.shape[0], N_CLASSES))
        for m in self.machines:
            f = m.decision(Z, self.kernel, self.gamma)
            votes[:, m.pos] += f > 0
            votes[:, m.neg] += f <= 0
            margin[:, m.pos] += f
            margin[:, m.neg] -= f
        return votes, margin

    def predict_indices(self, X) -> np.ndarray:
        votes, margin = self.decision_votes(X)
        out = np.empty(votes.shape[0], dtype=int)
        present = np.zeros(N_CLASSES, dtype=bool)
        present[list(self.classes)] = True
        for r in range(votes.shape[0]):
            v = np.where(present, votes[r], -np.inf)
            tied = np.flatnonzero(v == v.max())
            if tied.size > 1:
                mg = margin[r, tied]
                tied = tied[mg == mg.max()]
            out[r] = int(tied.min())
        return out

    def to_json(self) -> str:
        doc = {
            "format": "lognokit-svm",
            "version": MODEL_FORMAT_VERSION,
            "kernel": self.kernel,
            "gamma": self.gamma,
            "C": self.C,
            "classes": [MovementClass.from_index(c).value for c in self.classes],
            "scaler": {"mean": self.scale_mean.tolist(), "std": self.scale_std.tolist()},
            "machines": [
                {
                    "pos": MovementClass.from_index(m.pos).value,
                    "neg": MovementClass.from_index(m.neg).value,
                    "support_vectors": m.support_vectors.tolist(),
                    "alphas": m.alphas.tolist(),
                    "labels": m.labels.tolist(),
                    "bias": m.bias,
                }
                for m in self.machines
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        doc = json.loads(text)
        if doc.get("format") != "lognokit-svm" or doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a lognokit SVM model (or unsupported version)")
        idx = lambda code: MovementClass(code).index  # noqa: E731
        machines = tuple(
            BinaryMachine(
                pos=idx(m["pos"]),
                neg=idx(m["neg"]),
                support_vectors=np.array(m["support_vectors"], dtype=float).reshape(-1, len(doc["scaler"]["mean"])),
                alphas=np.array(m["alphas"], dtype=float),
                labels=np.array(m["labels"], dtype=float),
                bias=float(m["bias"]),
            )
            for m in doc["machines"]
        )
        return cls(
            machines=machines,
            classes=tuple(idx(c) for c in doc["classes"]),
            kernel=doc["kernel"],
            gamma=float(doc["gamma"]),
            C=float(doc["C"]),
            scale_mean=np.array(doc["scaler"]["mean"], dtype=float),
            scale_std=np.array(doc["scaler"]["std"], dtype=float),
        )


def _as_matrix(features) -> np.ndarray:
    rows = [f.values if isinstance(f, FeatureVector) else np.asarray(f, dtype=float) for f in features]
    return np.vstack(rows) if rows else np.zeros((0, N_FEATURES))


def _as_indices(labels) -> np.ndarray:
    return np.array([MovementClass(lab).index if not isinstance(lab, (int, np.integer)) else int(lab)
                     for lab in labels], dtype=int)


def train_svm(features, labels, config: SvmConfig = SvmConfig()) -> SvmModel:
    """Fit the z-score scaler and one SMO machine per pair of classes.

    Raises
    ------
    DegenerateDataset
        Fewer than two classes, or a class with a single example.
    NoConvergence
        A binary problem exceeded ``config.max_iter`` SMO iterations.
    """
    X = _as_matrix(features)
    y = _as_indices(labels)
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DegenerateDataset("training needs at least two classes")
    if np.any(counts < 2):
        raise DegenerateDataset("every class needs at least two examples")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std
    gamma = config.gamma if config.gamma is not None else 1.0 / X.shape[1]
    K_all = kernel_matrix(Z, Z, config.kernel, gamma)

    machines = []
    for a, b in itertools.combinations(classes.tolist(), 2):
        sel = np.flatnonzero((y == a) | (y == b))
        yy = np.where(y[sel] == a, 1.0, -1.0)
        alpha, bias, _ = smo(K_all[np.ix_(sel, sel)], yy, config.C, config.tol, config.max_iter)
        sv = alpha > 0
        machines.append(BinaryMachine(
            pos=a,
            neg=b,
            support_vectors=Z[sel][sv].copy(),
            alphas=alpha[sv],
            labels=yy[sv],
            bias=bias,
        ))
    return SvmModel(
        machines=tuple(machines),
        classes=tuple(classes.tolist()),
        kernel=config.kernel,
        gamma=gamma,
        C=config.C,
        scale_mean=mean,
        scale_std=std,
    )


def predict(model: SvmModel, x) -> MovementClass:
    """Classify one feature vector by one-vs-one majority vote.

    Ties go to the class with the largest summed decision margin, then to the
    lowest class index.
    """
    v = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] != model.scale_mean.shape[0]:
        raise DimensionMismatch(f"expected a {model.scale_mean.shape[0]}-vector, got shape {v.shape}")
    return MovementClass.from_index(int(model.predict_indices(v[None, :])[0]))


def predict_many(model: SvmModel, features) -> list[MovementClass]:
    X = _as_matrix(features)
    return [MovementClass.from_index(int(i)) for i in model.predict_indices(X)]


@dataclass
class CvReport:
    fold_accuracies: list[float]
    mean_accuracy: float
    confusion: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "fold_accuracies": self.fold_accuracies,
            "mean_accuracy": self.mean_accuracy,
            "classes": [c.value for c in MovementClass],
            "confusion": self.confusion.tolist(),
        }


def stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per example: each class is shuffled and dealt round-robin."""
    fold = np.empty(y.shape[0], dtype=int)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


def group_folds(groups: Sequence, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per example keeping each group (e.g. subject) in one fold."""
    names = sorted(set(groups))
    if len(names) < k:
        raise TooFewExamplesPerClass(f"{len(names)} groups cannot fill {k} folds")
    order = rng.permutation(len(names))
    fold_of = {names[g]: i % k for i, g in enumerate(order)}
    return np.array([fold_of[g] for g in groups], dtype=int)


def cross_validate(features, labels, k: int = 5, config: SvmConfig = SvmConfig(), seed: int = 0,
                   groups: Sequence | None = None) -> CvReport:
    """Stratified k-fold accuracy, or grouped folds when ``groups`` is given."""
    if k < 2:
        raise ValueError("k must be at least 2")
    X = _as_matrix(features)
    y = _as_indices(labels)
    rng = np.random.default_rng(seed)
    if groups is None:
        _, counts = np.unique(y, return_counts=True)
        if counts.min() < k:
            raise TooFewExamplesPerClass(f"smallest class has {counts.min()} examples, fewer than k={k}")
        fold = stratified_folds(y, k, rng)
    else:
        fold = group_folds(list(groups), k, rng)

    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    accs = []
    for f in range(k):
        test = fold == f
        if not np.any(test):
            continue
        model = train_svm(X[~test], y[~test], config)
        pred = model.predict_indices(X[test])
        for t_, p_ in zip(y[test], pred):
            confusion[t_, p_] += 1
        accs.append(float(np.mean(pred == y[test])))
    total = confusion.sum()
    return CvReport(fold_accuracies=accs, mean_accuracy=float(np.trace(confusion) / total), confusion=confusion)
