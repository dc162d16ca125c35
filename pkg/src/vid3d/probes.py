"""Downstream evaluation layer: one-vs-rest linear SVM, PCA, video-pair
similarity features with z-normalization, ROC/AUC and cross-validation.

The pair feature for two videos is 12 distances per activation type
(prob, fc7, fc6, pool5 order), 48 values total, symmetric in the pair.
"""

from dataclasses import dataclass

import numpy as np

from . import descriptor as descr
from .errors import ConfigError, DataError, ShapeError

FEATURE_TYPES = ("prob", "fc7", "fc6", "pool5")

DISTANCE_NAMES = ("dot", "cosine", "l1", "l2", "linf", "canberra", "braycurtis",
                  "pearson", "chisquare", "hellinger", "intersection", "jensenshannon")

_EPS = 1e-12


# ---------------------------------------------------------------------------
# linear SVM (one-vs-rest, stochastic subgradient on the primal hinge loss)

@dataclass
class SvmModel:
    weights: np.ndarray  # (classes, dim)
    biases: np.ndarray   # (classes,)
    mean: np.ndarray     # (dim,) training-feature mean, subtracted before scoring
    lam: float
    seed: int


def svm_train(features, labels, lam=1e-4, epochs=100, seed=0):
    """One-vs-rest hinge-loss minimization with step 1/(lam*t).

    Features are centered on the training mean internally, which makes the
    learned decision rule exactly equivariant under an orthogonal change of
    basis of the inputs. Deterministic for a fixed seed.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"features {X.shape} inconsistent with labels {y.shape}")
    classes = int(y.max()) + 1
    if classes < 2 or len(np.unique(y)) < 2:
        raise DataError("SVM training needs at least two classes")
    if lam <= 0:
        raise ConfigError(f"regularization must be positive, got {lam}")
    n, dim = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    rng = np.random.default_rng(seed)
    W = np.zeros((classes, dim))
    b = np.zeros(classes)
    t = 0
    order = np.arange(n)
    for _ in range(epochs):
        rng.shuffle(order)
        for i in order:
            t += 1
            eta = 1.0 / (lam * t)
            x = Xc[i]
            margins = W @ x + b
            ybin = np.where(np.arange(classes) == y[i], 1.0, -1.0)
            violated = ybin * margins < 1.0
            W *= 1.0 - eta * lam
            if violated.any():
                W[violated] += eta * np.outer(ybin[violated], x)
                b[violated] += eta * ybin[violated]
    return SvmModel(W, b, mean, lam, seed)


def svm_scores(model, features):
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None]
    if X.shape[1] != model.weights.shape[1]:
        raise ShapeError(f"feature dimension {X.shape[1]} != model "
                         f"{model.weights.shape[1]}")
    scores = (X - model.mean) @ model.weights.T + model.biases
    return scores[0] if single else scores


def svm_predict(model, features):
    """(label, per-class scores); ties resolve to the lowest class index."""
    scores = svm_scores(model, features)
    if scores.ndim == 1:
        return int(scores.argmax()), scores
    return scores.argmax(axis=1), scores


def svm_hinge_loss(model, features, labels):
    """Regularized one-vs-rest hinge objective (diagnostic)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    scores = svm_scores(model, X)
    ybin = np.where(y[:, None] == np.arange(model.weights.shape[0])[None, :], 1.0, -1.0)
    hinge = np.maximum(0.0, 1.0 - ybin * scores).sum(axis=1).mean()
    return hinge + 0.5 * model.lam * float((model.weights ** 2).sum())


# ---------------------------------------------------------------------------
# PCA

@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray   # (k, dim), orthonormal rows
    eigenvalues: np.ndarray  # (k,), non-increasing


def pca_fit(features, k):
    """Top-k eigenvectors of the sample covariance via a symmetric
    eigensolve. Sign convention: each component's largest-magnitude entry is
    positive, making the basis deterministic."""
    X = np.asarray(features, dtype=np.float64)
    n, dim = X.shape
    if not 1 <= k <= min(n - 1, dim):
        raise ConfigError(f"k must be in [1, min(samples-1, dim)] = "
                          f"[1, {min(n - 1, dim)}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    idx = np.argsort(evals)[::-1][:k]
    comps = evecs[:, idx].T.copy()
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return PcaModel(mean, comps, evals[idx].copy())


def pca_project(model, features):
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None]
    if X.shape[1] != model.components.shape[1]:
        raise ShapeError(f"feature dimension {X.shape[1]} != model "
                         f"{model.components.shape[1]}")
    Z = (X - model.mean) @ model.components.T
    return Z[0] if single else Z


# ---------------------------------------------------------------------------
# pair distances

def _shift_normalize(v):
    """Map to a nonnegative unit-sum vector: shift by the minimum, add a tiny
    epsilon, divide by the sum. Makes the distributional measures finite on
    arbitrary real inputs."""
    p = v - v.min() + _EPS
    return p / p.sum()


def pair_distances(x, y):
    """The fixed 12-measure vector, in DISTANCE_NAMES order. Every entry is
    symmetric in (x, y) and finite for arbitrary real inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"pair_distances needs two equal-length vectors, "
                         f"got {x.shape} and {y.shape}")
    out = np.empty(12)
    diff = x - y
    out[0] = float(x @ y)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    out[1] = float(x @ y / (nx * ny)) if nx > 0 and ny > 0 else 0.0
    out[2] = float(np.abs(diff).sum())
    out[3] = float(np.linalg.norm(diff))
    out[4] = float(np.abs(diff).max())
    denom = np.abs(x) + np.abs(y)
    terms = np.divide(np.abs(diff), denom, out=np.zeros_like(denom), where=denom > 0)
    out[5] = float(terms.sum())
    tot = float(np.abs(x + y).sum())
    out[6] = float(np.abs(diff).sum() / tot) if tot > 0 else 0.0
    xm, ym = x - x.mean(), y - y.mean()
    sx, sy = np.linalg.norm(xm), np.linalg.norm(ym)
    out[7] = float(xm @ ym / (sx * sy)) if sx > 0 and sy > 0 else 0.0
    p, q = _shift_normalize(x), _shift_normalize(y)
    out[8] = float((np.square(p - q) / (p + q)).sum())
    out[9] = float(np.linalg.norm(np.sqrt(p) - np.sqrt(q)) / np.sqrt(2.0))
    out[10] = float(np.minimum(p, q).sum())
    m = 0.5 * (p + q)
    out[11] = float(0.5 * (p * np.log(p / m)).sum() + 0.5 * (q * np.log(q / m)).sum())
    return out


def pair_feature_from_descriptors(desc_a, desc_b, types=FEATURE_TYPES):
    """48-dim pair feature from per-type L2-normalized video descriptors,
    concatenated type-major in FEATURE_TYPES order."""
    blocks = [pair_distances(desc_a[t], desc_b[t]) for t in types]
    return np.concatenate(blocks)


def video_feature_set(net, frames, video_id=-1, types=FEATURE_TYPES):
    """Per-type L2-normalized video descriptors for the pair pipeline."""
    return {t: descr.video_descriptor(net, frames, t, video_id).values for t in types}


def similarity_features(net, frames_a, frames_b, types=FEATURE_TYPES):
    """Pair feature for two raw videos (order-invariant)."""
    da = video_feature_set(net, frames_a, types=types)
    db = video_feature_set(net, frames_b, types=types)
    return pair_feature_from_descriptors(da, db, types)


# ---------------------------------------------------------------------------
# z-normalization

@dataclass
class ZNormalizer:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray  # bool mask; constant dimensions map to 0


def znorm_fit(train_pairs):
    X = np.asarray(train_pairs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("z-normalization needs at least two training pairs")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return ZNormalizer(mean, std, std > 0)


def znorm_apply(norm, pairs):
    X = np.asarray(pairs, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None]
    Z = np.where(norm.keep[None, :], (X - norm.mean) / np.where(norm.keep, norm.std, 1.0), 0.0)
    return Z[0] if single else Z


# ---------------------------------------------------------------------------
# ROC / AUC

def roc_auc(scores, labels):
    """Probability that a random positive outranks a random negative, ties
    counting one half. Computed by exact counting, so it agrees bitwise with
    a brute-force loop over all positive/negative pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = np.sort(s[y == 1])
    neg = np.sort(s[y == 0])
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("AUC needs both a positive and a negative example")
    wins = 0.0
    for v in pos:  # each term is a half-integer: the sum is exact
        less = np.searchsorted(neg, v, side="left")
        leq = np.searchsorted(neg, v, side="right")
        wins += less + 0.5 * (leq - less)
    return wins / (len(pos) * len(neg))


def roc_points(scores, labels):
    """(fpr, tpr) arrays swept over score thresholds, for plotting."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    tp = np.cumsum(y_sorted == 1)
    fp = np.cumsum(y_sorted == 0)
    # collapse threshold groups with equal scores
    distinct = np.nonzero(np.diff(s[order]))[0]
    idx = np.append(distinct, len(s) - 1)
    tpr = np.concatenate([[0.0], tp[idx] / max(tp[-1], 1)])
    fpr = np.concatenate([[0.0], fp[idx] / max(fp[-1], 1)])
    return fpr, tpr


# ---------------------------------------------------------------------------
# cross-validation

def fold_indices(n, protocol, seed=0):
    """List of (train_ids, test_ids) partitions. protocol is ("k-fold", k)
    or ("leave-one-out",)."""
    if protocol[0] == "leave-one-out":
        return [(np.delete(np.arange(n), i), np.array([i])) for i in range(n)]
    if protocol[0] == "k-fold":
        k = int(protocol[1])
        if k < 2 or k > n:
            raise ConfigError(f"k-fold needs 2 <= k <= {n}, got {k}")
        rng = np.random.default_rng(seed)
        order = np.arange(n)
        rng.shuffle(order)
        folds = [order[i::k] for i in range(k)]
        return [(np.sort(np.concatenate(folds[:i] + folds[i + 1:])), np.sort(folds[i]))
                for i in range(k)]
    raise ConfigError(f"unknown protocol {protocol[0]!r}")


@dataclass
class CvResult:
    fold_accuracy: list
    fold_auc: list  # empty unless binary labels
    mean_accuracy: float
    mean_auc: float  # nan unless binary labels


def cross_validate(features, labels, protocol, seed=0, lam=1e-4, epochs=100,
                   normalize=False):
    """Linear-SVM cross-validation. Folds partition the samples; per-fold
    seeds derive deterministically from the master seed. With normalize=True
    the features are z-normalized on each fold's training statistics only.
    Binary problems also report per-fold AUC of the class-1 score margin."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    binary = set(np.unique(y)) == {0, 1}
    accs, aucs = [], []
    for f, (train, test) in enumerate(fold_indices(len(y), protocol, seed)):
        Xtr, Xte = X[train], X[test]
        if normalize:
            norm = znorm_fit(Xtr)
            Xtr, Xte = znorm_apply(norm, Xtr), znorm_apply(norm, Xte)
        model = svm_train(Xtr, y[train], lam=lam, epochs=epochs, seed=seed * 100003 + f)
        pred, scores = svm_predict(model, Xte)
        accs.append(float((pred == y[test]).mean()))
        if binary and len(np.unique(y[test])) == 2:
            aucs.append(roc_auc(scores[:, 1] - scores[:, 0], y[test]))
    return CvResult(accs, aucs, float(np.mean(accs)),
                    float(np.mean(aucs)) if aucs else float("nan"))


def save_cv_csv(result, path, extra_header="", extra_rows=None):
    with open(path, "w") as f:
        has_auc = bool(result.fold_auc)
        f.write("fold,accuracy" + (",auc" if has_auc else "") + "\n")
        for i, acc in enumerate(result.fold_accuracy):
            row = f"{i},{acc!r}"
            if has_auc:
                row += f",{result.fold_auc[i]!r}"
            f.write(row + "\n")
        f.write(f"mean,{result.mean_accuracy!r}")
        if has_auc:
            f.write(f",{result.mean_auc!r}")
        f.write("\n")
