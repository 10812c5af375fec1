"""One-vs-one RBF support vector classifier, hold-out splits and confusion matrices.

Binary machines solve the standard soft-margin dual

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0

by sequential minimal optimization with second-order working-set
selection (Fan, Chen and Lin, JMLR 2005). Pair selection is deterministic,
so training needs no seed.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .signal_io import CascadeSpec, TimeSeries, gen_binomial_cascade

MODEL_SCHEMA = "mfspeak-svm-model"
MODEL_VERSION = 1
CASCADE_MULTIPLIERS = (0.60, 0.65, 0.70, 0.75, 0.80)
# Every random stream is default_rng([seed, stage, ...]) from one top-level seed.
CORPUS_STREAM = 0
SPLIT_STREAM = 1
_TAU = 1e-12


class ClassifierError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmParams:
    C: float = 100.0
    gamma: float | str = "auto"
    tolerance: float = 1e-3
    max_passes: int = 10000

    def __post_init__(self):
        if not self.C > 0:
            raise ClassifierError(f"C must be positive, got {self.C}")
        if isinstance(self.gamma, str):
            if self.gamma != "auto":
                raise ClassifierError(f"gamma must be positive or 'auto', got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ClassifierError(f"gamma must be positive, got {self.gamma}")
        if not self.tolerance > 0:
            raise ClassifierError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_passes < 1:
            raise ClassifierError("max_passes must be >= 1")


@dataclass
class BinarySvm:
    """Dual solution for one class pair; ``positive`` gets y = +1."""

    positive: str
    negative: str
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    converged: bool = True
    iterations: int = 0

    def decision(self, x: np.ndarray, gamma: float) -> np.ndarray:
        k = rbf_gram(np.atleast_2d(x), self.support_vectors, gamma)
        return k @ self.dual_coef + self.bias


@dataclass
class SvmModel:
    params: SvmParams
    gamma: float
    classes: list[str]
    mean: np.ndarray
    std: np.ndarray
    machines: list[BinarySvm] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.machines)

    def standardize(self, x) -> np.ndarray:
        return (np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.mean) / self.std


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # counts[actual, predicted]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    @property
    def recall(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.counts) / rows, np.nan)

    @property
    def precision(self) -> np.ndarray:
        cols = self.counts.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cols > 0, np.diag(self.counts) / cols, np.nan)


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ClassifierError(f"dimension mismatch {x.shape} vs {y.shape}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


def smo_solve(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3,
              max_iter: int = 10000) -> tuple[np.ndarray, float, bool, int]:
    """Solve the binary dual for a precomputed kernel matrix.

    Returns ``(alpha, bias, converged, iterations)``; the decision function
    is ``sum_i alpha_i y_i K(x_i, x) + bias``.
    """
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    converged = False
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_up = score[i]
        m_low = score[low].min()
        if m_up - m_low < tol:
            converged = True
            break
        cand = np.flatnonzero(low & (score < m_up))
        b = m_up - score[cand]
        a = K[i, i] + K[cand, cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, _TAU)
        j = int(cand[np.argmin(-(b * b) / a)])

        # two-variable subproblem, as in LIBSVM's solver
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], _TAU)
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        it += 1

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub = np.where(((y < 0) & (alpha >= C)) | ((y > 0) & (alpha <= 0)), yg, np.inf).min()
        lb = np.where(((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0)), yg, -np.inf).max()
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else float(yg.mean())
    return alpha, -rho, converged, it


def _resolve_gamma(params: SvmParams, xs: np.ndarray) -> float:
    if params.gamma != "auto":
        return float(params.gamma)
    var = float(np.mean(np.var(xs, axis=0)))
    if not var > 0:
        var = 1.0
    return 1.0 / (xs.shape[1] * var)


def train_svm(X, labels, params: SvmParams | None = None) -> SvmModel:
    params = SvmParams() if params is None else params
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = [str(v) for v in labels]
    if X.shape[0] != len(labels):
        raise ClassifierError("feature rows and labels differ in length")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ClassifierError("training needs at least 2 classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (X - mean) / std
    gamma = _resolve_gamma(params, xs)
    lab = np.asarray(labels)
    model = SvmModel(params, gamma, classes, mean, std)
    for pos, neg in itertools.combinations(classes, 2):
        idx = np.flatnonzero((lab == pos) | (lab == neg))
        y = np.where(lab[idx] == pos, 1.0, -1.0)
        K = rbf_gram(xs[idx], xs[idx], gamma)
        alpha, bias, ok, it = smo_solve(K, y, params.C, params.tolerance, params.max_passes)
        sv = alpha > 0
        if not ok:
            warnings.warn(f"SMO for pair ({pos}, {neg}) hit max_passes={params.max_passes}",
                          ConvergenceWarning, stacklevel=2)
        model.machines.append(
            BinarySvm(pos, neg, xs[idx][sv], (alpha * y)[sv], bias, ok, it)
        )
    return model


def _votes(model: SvmModel, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    index = {c: k for k, c in enumerate(model.classes)}
    votes = np.zeros((xs.shape[0], len(model.classes)), dtype=np.int64)
    margin = np.zeros((xs.shape[0], len(model.classes)))
    for m in model.machines:
        d = m.decision(xs, model.gamma)
        win = np.where(d > 0, index[m.positive], index[m.negative])
        rows = np.arange(xs.shape[0])
        votes[rows, win] += 1
        margin[rows, win] += np.abs(d)
    return votes, margin


def predict_many(model: SvmModel, X) -> list[str]:
    """Majority vote; ties go to the largest summed margin, then the first label."""
    xs = model.standardize(X)
    votes, margin = _votes(model, xs)
    out = []
    for v, g in zip(votes, margin):
        tied = np.flatnonzero(v == v.max())
        best = tied[np.argmax(g[tied])]
        out.append(model.classes[int(best)])
    return out


def predict(model: SvmModel, x) -> str:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.mean.size:
        raise ClassifierError(f"expected a feature vector of length {model.mean.size}")
    return predict_many(model, x[None, :])[0]


def evaluate(model: SvmModel, X, labels) -> ConfusionMatrix:
    labels = [str(v) for v in labels]
    if not labels:
        raise ClassifierError("empty test set")
    return confusion_matrix(labels, predict_many(model, X), model.classes)


def confusion_matrix(actual, predicted, labels=None) -> ConfusionMatrix:
    if labels is None:
        labels = sorted(set(actual) | set(predicted))
    labels = list(labels)
    for v in itertools.chain(actual, predicted):
        if v not in labels:
            labels.append(v)
    index = {c: k for k, c in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        counts[index[a], index[p]] += 1
    return ConfusionMatrix(labels, counts)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_holdout(labels, holdout_ratio: float = 0.25, seed: int = 0,
                       stratified: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Split sample indices into train and test sets.

    With ``stratified`` each class sends round(ratio * size) of its samples
    to the test set. Shuffles draw from ``default_rng([seed, SPLIT_STREAM])``.
    Returns sorted ``(train_idx, test_idx)``.
    """
    if not 0 < holdout_ratio < 1:
        raise ClassifierError(f"holdout ratio must lie in (0, 1), got {holdout_ratio}")
    labels = np.asarray([str(v) for v in labels])
    rng = np.random.default_rng([seed, SPLIT_STREAM])
    classes = sorted(set(labels.tolist()))
    test: list[int] = []
    if stratified:
        for c in classes:
            members = np.flatnonzero(labels == c)
            n_test = _round_half_up(holdout_ratio * members.size)
            if n_test == 0 or n_test == members.size:
                raise ClassifierError(
                    f"class {c!r} with {members.size} samples gets an empty train or test split"
                )
            test.extend(rng.permutation(members)[:n_test].tolist())
    else:
        n_test = _round_half_up(holdout_ratio * labels.size)
        test = rng.permutation(labels.size)[:n_test].tolist()
        train_classes = set(np.delete(labels, test).tolist())
        if n_test == 0 or train_classes != set(classes):
            raise ClassifierError("unstratified split leaves a class without training samples")
    test_idx = np.sort(np.asarray(test, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


def corpus_jitter(seed: int, k: int, j: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, CORPUS_STREAM, k, j]).standard_normal(n)


def speaker_label(k: int) -> str:
    return f"Speaker{k + 1}"


def make_synthetic_corpus(n_classes: int = 5, clips_per_class: int = 20, seed: int = 0,
                          noise: float = 0.05, levels: int = 14) -> list[tuple[str, TimeSeries]]:
    """Labelled cascade clips standing in for recorded speakers.

    Class k is a binomial cascade with multiplier ``CASCADE_MULTIPLIERS[k]``.
    Clip j of class k adds Gaussian noise of standard deviation
    ``noise * std(cascade)`` drawn from ``default_rng([seed, CORPUS_STREAM, k, j])``.
    """
    if not 1 <= n_classes <= len(CASCADE_MULTIPLIERS):
        raise ClassifierError(
            f"n_classes must be between 1 and {len(CASCADE_MULTIPLIERS)}, got {n_classes}"
        )
    if clips_per_class < 1:
        raise ClassifierError("clips_per_class must be >= 1")
    corpus = []
    for k in range(n_classes):
        a = CASCADE_MULTIPLIERS[k]
        base = gen_binomial_cascade(CascadeSpec(levels, a)).samples
        amp = noise * base.std()
        for j in range(clips_per_class):
            jitter = corpus_jitter(seed, k, j, base.size)
            ts = TimeSeries(base + amp * jitter, 1.0,
                            f"cascade(levels={levels},a={a},noise={noise},seed={seed},k={k},j={j})")
            corpus.append((speaker_label(k), ts))
    return corpus


def _params_dict(p: SvmParams) -> dict:
    return asdict(p)


def save_model(model: SvmModel, path) -> None:
    """Write the model as JSON; floats round-trip exactly through repr."""
    doc = {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "params": _params_dict(model.params),
        "gamma": model.gamma,
        "classes": model.classes,
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "machines": [
            {
                "positive": m.positive,
                "negative": m.negative,
                "support_vectors": m.support_vectors.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "bias": m.bias,
                "converged": m.converged,
                "iterations": m.iterations,
            }
            for m in model.machines
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> SvmModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != MODEL_SCHEMA or doc.get("version") != MODEL_VERSION:
        raise ClassifierError(f"{path}: not a {MODEL_SCHEMA} v{MODEL_VERSION} file")
    model = SvmModel(
        SvmParams(**doc["params"]),
        float(doc["gamma"]),
        list(doc["classes"]),
        np.asarray(doc["mean"], dtype=np.float64),
        np.asarray(doc["std"], dtype=np.float64),
    )
    dim = model.mean.size
    for m in doc["machines"]:
        model.machines.append(BinarySvm(
            m["positive"], m["negative"],
            np.asarray(m["support_vectors"], dtype=np.float64).reshape(-1, dim),
            np.asarray(m["dual_coef"], dtype=np.float64),
            float(m["bias"]), bool(m["converged"]), int(m["iterations"]),
        ))
    return model


def format_table(cm: ConfusionMatrix) -> str:
    """Human-readable confusion matrix with recall and precision margins."""
    def pct(v: float) -> str:
        if np.isnan(v):
            return "-"
        return f"{100 * v:.1f}".rstrip("0").rstrip(".") + "%"

    width = max(8, *(len(c) for c in cm.labels)) + 2
    head = "actual \\ predicted".ljust(20) + "".join(c.rjust(width) for c in cm.labels) + "Total".rjust(width)
    lines = [head]
    for k, c in enumerate(cm.labels):
        cells = "".join(str(v).rjust(width) for v in cm.counts[k])
        lines.append(c.ljust(20) + cells + pct(cm.recall[k]).rjust(width))
    lines.append("Total".ljust(20) + "".join(pct(v).rjust(width) for v in cm.precision)
                 + pct(cm.accuracy).rjust(width))
    return "\n".join(lines)
