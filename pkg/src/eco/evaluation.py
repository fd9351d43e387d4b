"""Nearest-neighbor retrieval with recall curves and a regularized softmax
strip classifier over fixed features."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergedError

DEFAULT_LABELS = ["bread", "cereal", "cheese", "dairy", "frozen-food", "meat"]


@dataclass
class LabeledCorpus:
    vectors: np.ndarray  # N x D
    labels: list[str]
    ids: list[int]
    stores: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in corpus")
        if len(self.labels) != len(self.ids) or len(self.vectors) != len(self.ids):
            raise ValueError("corpus fields disagree in length")


def _distances(query, corpus_vectors, metric):
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if metric == "cosine":
        qn = q / max(np.linalg.norm(q), 1e-12)
        cn = corpus_vectors / np.maximum(
            np.linalg.norm(corpus_vectors, axis=1, keepdims=True), 1e-12)
        return 1.0 - cn @ qn
    diff = corpus_vectors - q
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def nn_retrieve(query, corpus: LabeledCorpus, k: int, metric: str = "euclidean") -> list[int]:
    """Top-k corpus ids by ascending distance; ties broken by ascending id."""
    if len(corpus.ids) == 0:
        raise ValueError("empty corpus")
    if k > len(corpus.ids):
        raise ValueError("k exceeds corpus size")
    dists = _distances(query, corpus.vectors, metric)
    ids = np.asarray(corpus.ids)
    order = np.lexsort((ids, dists))
    return [int(ids[i]) for i in order[:k]]


def recall_curve(queries: LabeledCorpus, corpus: LabeledCorpus, k_max: int,
                 metric: str = "euclidean") -> dict[str, list[float]]:
    """recall@k per category: fraction of queries with >=1 same-label hit in top k."""
    k_max = min(k_max, len(corpus.ids))
    label_by_id = dict(zip(corpus.ids, corpus.labels))
    first_hit: dict[str, list[int]] = {}
    for q, lab in zip(queries.vectors, queries.labels):
        ranked = nn_retrieve(q, corpus, k_max, metric)
        hit = next((i + 1 for i, rid in enumerate(ranked) if label_by_id[rid] == lab),
                   k_max + 1)
        first_hit.setdefault(lab, []).append(hit)
    return {
        lab: [float(np.mean([h <= k for h in hits])) for k in range(1, k_max + 1)]
        for lab, hits in sorted(first_hit.items())
    }


@dataclass
class LinearClassifier:
    W: np.ndarray  # D x n_classes
    b: np.ndarray
    classes: list[str]

    def logits(self, X):
        return np.atleast_2d(X) @ self.W + self.b

    def predict(self, X):
        idx = np.argmax(self.logits(X), axis=1)
        return [self.classes[i] for i in idx]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classifier_loss_grads(W, b, X, Y, l2_weight):
    """Softmax cross-entropy + L2 on the weight matrix; exact gradients."""
    n = len(X)
    p = _softmax(X @ W + b)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), Y], 1e-300)))
    loss += l2_weight * np.sum(W * W)
    dlogits = p.copy()
    dlogits[np.arange(n), Y] -= 1.0
    dlogits /= n
    dW = X.T @ dlogits + 2.0 * l2_weight * W
    db = dlogits.sum(axis=0)
    return loss, dW, db


def train_classifier(features, labels, l2_weight=1e-4, steps=5000, lr=0.1,
                     seed=0) -> LinearClassifier:
    """Single logits layer over fixed features, full-batch gradient descent."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    classes = sorted(set(labels))
    Y = np.array([classes.index(l) for l in labels])
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, 0.01, size=(X.shape[1], len(classes)))
    b = np.zeros(len(classes))
    for step in range(steps):
        loss, dW, db = classifier_loss_grads(W, b, X, Y, l2_weight)
        if not np.isfinite(loss):
            raise TrainingDivergedError(step)
        W -= lr * dW
        b -= lr * db
    return LinearClassifier(W=W, b=b, classes=classes)


def per_category_accuracy(clf: LinearClassifier, corpus: LabeledCorpus) -> dict[str, float]:
    preds = clf.predict(corpus.vectors)
    totals: dict[str, list[int]] = {}
    for pred, lab in zip(preds, corpus.labels):
        hit_total = totals.setdefault(lab, [0, 0])
        hit_total[0] += int(pred == lab)
        hit_total[1] += 1
    return {lab: hits / total for lab, (hits, total) in sorted(totals.items())}


def write_recall_csv(path, curves: dict[str, list[float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "category", "recall"])
        for category, values in sorted(curves.items()):
            for k, r in enumerate(values, start=1):
                writer.writerow([k, category, repr(float(r))])


def write_accuracy_csv(path, accuracies: dict[str, float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "accuracy"])
        for category, acc in sorted(accuracies.items()):
            writer.writerow([category, repr(float(acc))])
