"""L2-regularized logistic classifier trained by full-batch gradient descent."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from riskstrat import kernels
from riskstrat.errors import (
    DimensionMismatch,
    NonFinite,
    SingleClass,
    TooFewPerClass,
    UnsupportedVersion,
)
from riskstrat.fileio import atomic_write
from riskstrat.ingest import DesignMatrix, Recipe, encode_matrix

MODEL_VERSION = 1


def sigmoid(z):
    """Logistic link, stable for large |z|; accepts scalars or arrays."""
    if np.ndim(z) == 0:
        z = float(z)
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def linear_predictor(x: np.ndarray, weights: np.ndarray, intercept: float) -> np.ndarray:
    # column-by-column accumulation keeps every row's rounding identical
    # regardless of batch size
    x = np.atleast_2d(x)
    z = np.full(x.shape[0], float(intercept))
    for k in range(weights.shape[0]):
        z = z + x[:, k] * weights[k]
    return z


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1.0
    max_iters: int = 500
    tolerance: float = 1e-8
    learning_rate: float = 0.1
    seed: int = 0
    folds: int = 5

    def __post_init__(self):
        if not self.l2_lambda >= 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.max_iters < 1 or not self.tolerance > 0 or not self.learning_rate > 0:
            raise ValueError("max_iters, tolerance and learning_rate must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class RiskModel:
    weights: np.ndarray
    intercept: float
    recipe: Recipe
    train_config: TrainConfig = field(default_factory=TrainConfig)
    stop_reason: str = "converged"
    n_iter: int = 0

    def __post_init__(self):
        if self.weights.shape[0] != len(self.recipe.columns):
            raise DimensionMismatch(
                f"{self.weights.shape[0]} weights for {len(self.recipe.columns)} encoded columns"
            )

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.recipe.schema.names

    @property
    def feature_columns(self) -> list[str]:
        return [c.name for c in self.recipe.columns]

    def predict_design(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.weights.shape[0]:
            raise DimensionMismatch(f"rows have {x.shape[1]} columns, model expects {self.weights.shape[0]}")
        return sigmoid(linear_predictor(x, self.weights, self.intercept))

    def predict_raw(self, raw) -> np.ndarray:
        """Probabilities for raw (k, M) records; encoding happens here."""
        return self.predict_design(encode_matrix(self.recipe, np.atleast_2d(raw)))

    def group_logit_terms(self, raw) -> np.ndarray:
        """Logit contribution of each schema feature for raw (k, M) records.

        The logit is ``intercept + terms.sum(axis=1)``; explain uses this to
        evaluate coalitions without re-encoding composite rows.
        """
        x = encode_matrix(self.recipe, np.atleast_2d(raw))
        groups = self.recipe.groups()
        terms = np.zeros((x.shape[0], len(groups)))
        for g, cols in enumerate(groups):
            for k in cols:
                terms[:, g] = terms[:, g] + x[:, k] * self.weights[k]
        return terms

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "feature_columns": self.feature_columns,
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "recipe": self.recipe.to_dict(),
            "train_config": asdict(self.train_config),
            "stop_reason": self.stop_reason,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, doc) -> RiskModel:
        if doc.get("version") != MODEL_VERSION:
            raise UnsupportedVersion(doc.get("version"))
        recipe = Recipe.from_dict(doc["recipe"])
        if [c.name for c in recipe.columns] != list(doc["feature_columns"]):
            raise DimensionMismatch("feature_columns do not match the stored recipe")
        weights = np.array(doc["weights"], dtype=np.float64)
        weights.setflags(write=False)
        return cls(
            weights,
            float(doc["intercept"]),
            recipe,
            TrainConfig(**doc["train_config"]),
            doc.get("stop_reason", "converged"),
            int(doc.get("n_iter", 0)),
        )


def save_model(model: RiskModel, path) -> None:
    atomic_write(path, json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path) -> RiskModel:
    with open(path, encoding="utf-8") as fh:
        return RiskModel.from_dict(json.load(fh))


def predict_proba(model: RiskModel, row) -> float:
    row = np.asarray(row, dtype=np.float64).reshape(-1)
    if row.shape[0] != model.weights.shape[0]:
        raise DimensionMismatch(f"row has {row.shape[0]} values, model expects {model.weights.shape[0]}")
    return float(model.predict_design(row[None, :])[0])


# -- training -----------------------------------------------------------------

def loss_and_grad(params, x, y, l2_lambda):
    """Mean negative log-likelihood plus (lambda / 2n) * ||w||^2, intercept unpenalized.

    ``params`` is ``[intercept, *weights]``; returns ``(loss, gradient)``.
    """
    n = x.shape[0]
    b, w = params[0], params[1:]
    z = linear_predictor(x, w, b)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2_lambda / n * np.dot(w, w))
    r = sigmoid(z) - y
    grad = np.empty_like(params)
    grad[0] = r.mean()
    grad[1:] = x.T @ r / n + l2_lambda / n * w
    return loss, grad


def _check_classes(labels):
    pos = int(np.sum(labels))
    if pos == 0 or pos == labels.shape[0]:
        raise SingleClass()
    return pos


def train(matrix: DesignMatrix, config: TrainConfig | None = None, trace: list | None = None) -> RiskModel:
    """Fit by gradient descent with Armijo backtracking.

    Each iteration tries twice the previously accepted step (the first trial
    is ``learning_rate``) and halves until the loss decreases sufficiently, so
    no accepted step ever increases the loss.  Stops when the gradient max-norm
    falls below ``tolerance`` or after ``max_iters`` iterations.  ``trace``
    collects the loss at the start point and after every accepted step.
    """
    config = config or TrainConfig()
    x = np.asarray(matrix.values, dtype=np.float64)
    y = np.asarray(matrix.labels, dtype=np.float64)
    if x.shape[0] < 2:
        raise SingleClass("need at least two rows")
    pos = _check_classes(y)
    prevalence = pos / y.shape[0]

    params = np.zeros(x.shape[1] + 1)
    params[0] = math.log(prevalence / (1.0 - prevalence))
    loss, grad = loss_and_grad(params, x, y, config.l2_lambda)
    if trace is not None:
        trace.append(loss)
    step = config.learning_rate
    stop_reason = "max_iters"
    it = 0
    for it in range(1, config.max_iters + 1):
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NonFinite(f"non-finite loss or gradient at iteration {it}")
        gnorm2 = float(np.dot(grad, grad))
        if np.max(np.abs(grad)) < config.tolerance:
            stop_reason = "converged"
            it -= 1
            break
        while True:
            candidate = params - step * grad
            new_loss, new_grad = loss_and_grad(candidate, x, y, config.l2_lambda)
            if math.isfinite(new_loss) and new_loss <= loss - 1e-4 * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-20:
                raise NonFinite("line search failed to find a decreasing step")
        params, loss, grad = candidate, new_loss, new_grad
        if trace is not None:
            trace.append(loss)
        step *= 2.0
    else:
        if np.max(np.abs(grad)) < config.tolerance:
            stop_reason = "converged"

    weights = params[1:].copy()
    weights.setflags(write=False)
    return RiskModel(weights, float(params[0]), matrix.recipe, config, stop_reason, it)


# -- cross-validation ---------------------------------------------------------

@dataclass(frozen=True)
class FoldResult:
    auc: float
    brier: float
    n_test: int


@dataclass(frozen=True)
class CVReport:
    folds: tuple[FoldResult, ...]
    probabilities: np.ndarray
    labels: np.ndarray
    fold_of: np.ndarray

    @property
    def pooled_auc(self) -> float:
        return float(kernels.rank_auc(self.probabilities, self.labels))

    def pairs(self):
        return list(zip(self.probabilities.tolist(), self.labels.tolist()))


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Seeded stratified assignment; each class is dealt round-robin after shuffling.

    The negative class starts dealing where the positives stopped, so fold
    sizes differ by at most one overall as well as per class.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.shape[0], dtype=np.int64)
    offset = 0
    for cls in (1, 0):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        fold_of[idx] = (np.arange(idx.shape[0]) + offset) % folds
        offset = (offset + idx.shape[0]) % folds
    return fold_of


def cross_validate(matrix: DesignMatrix, config: TrainConfig | None = None, eval_labels=None) -> CVReport:
    """Stratified k-fold CV; every row is scored exactly once by a model that never saw it.

    ``eval_labels`` optionally replaces the labels the held-out predictions are
    scored against (the fold models still train on ``matrix.labels``); this is
    how a development/deployment outcome shift is evaluated.
    """
    from riskstrat.metrics import brier_score

    config = config or TrainConfig()
    y = np.asarray(matrix.labels)
    _check_classes(y)
    smallest = int(min(y.sum(), y.shape[0] - y.sum()))
    if smallest < config.folds:
        raise TooFewPerClass(smallest, config.folds)
    scored = y if eval_labels is None else np.asarray(eval_labels, dtype=np.int8)
    if scored.shape != y.shape:
        raise DimensionMismatch("eval_labels length differs from the matrix")

    fold_of = stratified_folds(y, config.folds, config.seed)
    oof = np.empty(y.shape[0])
    results = []
    for k in range(config.folds):
        test = fold_of == k
        model = train(matrix.subset(~test), config)
        oof[test] = model.predict_design(matrix.values[test])
        t_labels = scored[test]
        fold_auc = float(kernels.rank_auc(oof[test], t_labels)) if 0 < t_labels.sum() < t_labels.shape[0] else math.nan
        results.append(FoldResult(fold_auc, brier_score(oof[test], t_labels), int(test.sum())))
    oof.setflags(write=False)
    return CVReport(tuple(results), oof, np.array(scored, dtype=np.int8), fold_of)
