"""Interventional Shapley attributions over schema-level features.

A model is anything with ``feature_names`` and ``predict_raw(raw) -> probs``
taking (k, M) raw records.  Models that are additive on the logit scale
(they also expose ``intercept`` and ``group_logit_terms``) take a fast path
through the compiled coalition kernel; results are the same up to rounding.

Coalitions are bitmasks: bit ``i`` set means feature ``i`` takes the target's
value, otherwise the background row's value.  Categorical features move as a
unit because composition happens on raw records, before encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from riskstrat import kernels
from riskstrat.errors import SchemaError, TooManyFeatures
from riskstrat.ingest import Cohort

MAX_EXACT_FEATURES = 20
UNITS = "probability"


class Model(Protocol):
    feature_names: Sequence[str]

    def predict_raw(self, raw: np.ndarray) -> np.ndarray: ...


def _is_logit_additive(model) -> bool:
    return hasattr(model, "group_logit_terms") and hasattr(model, "intercept")


@dataclass(frozen=True)
class BackgroundSet:
    """Reference rows (raw records) defining what an absent feature looks like."""

    rows: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] == 0:
            raise SchemaError("background set must be a nonempty 2-D array")
        if self.rows.shape[1] != len(self.feature_names):
            raise SchemaError("background width does not match its feature names")
        if np.isnan(self.rows).any():
            raise SchemaError("background rows must be complete")

    def __len__(self):
        return self.rows.shape[0]


def make_background(cohort: Cohort, size: int = 128, seed: int = 0) -> BackgroundSet:
    """Sample up to ``size`` rows without replacement, kept in cohort order."""
    if np.isnan(cohort.values).any():
        raise SchemaError("impute the cohort before drawing a background set")
    rng = np.random.default_rng(seed)
    k = min(size, cohort.n)
    idx = np.sort(rng.choice(cohort.n, size=k, replace=False))
    rows = np.array(cohort.values[idx])
    rows.setflags(write=False)
    return BackgroundSet(rows, cohort.schema.names)


@dataclass(frozen=True)
class Attribution:
    feature_names: tuple[str, ...]
    phi: np.ndarray
    base_value: float
    prediction: float
    target_row: np.ndarray
    units: str = UNITS

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "base_value": self.base_value,
            "prediction": self.prediction,
            "contributions": [
                {"feature": s.feature, "value": s.value, "phi": s.phi} for s in waterfall(self)
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> Attribution:
        """Inverse of ``to_dict``; features come back in waterfall order."""
        contribs = doc["contributions"]
        return cls(
            tuple(c["feature"] for c in contribs),
            np.array([float(c["phi"]) for c in contribs]),
            float(doc["base_value"]),
            float(doc["prediction"]),
            np.array([float(c["value"]) for c in contribs]),
            doc.get("units", UNITS),
        )


def _target(model, target) -> np.ndarray:
    names = tuple(model.feature_names)
    if isinstance(target, dict):
        return np.array([float(target[n]) for n in names])
    row = np.asarray(target, dtype=np.float64).reshape(-1)
    if row.shape[0] != len(names):
        raise SchemaError(f"target has {row.shape[0]} values, model has {len(names)} features")
    return row


def _mask_of(coalition: Iterable, names: Sequence[str]) -> int:
    mask = 0
    for f in coalition:
        i = names.index(f) if isinstance(f, str) else int(f)
        if not 0 <= i < len(names):
            raise SchemaError(f"feature index {i} out of range")
        mask |= 1 << i
    return mask


def _predict_one(model, row: np.ndarray) -> float:
    return float(model.predict_raw(row[None, :])[0])


def _mean_over_rows(values: np.ndarray) -> np.ndarray:
    """Mean along the last axis, exact when every entry equals the first."""
    first = values[..., :1]
    return (first + (values - first).mean(axis=-1, keepdims=True))[..., 0]


def _value_of_mask(model, target: np.ndarray, background: BackgroundSet, mask: int) -> float:
    m = target.shape[0]
    if mask == (1 << m) - 1:
        return _predict_one(model, target)
    composite = np.array(background.rows, dtype=np.float64)
    for i in range(m):
        if mask >> i & 1:
            composite[:, i] = target[i]
    return float(_mean_over_rows(np.asarray(model.predict_raw(composite), dtype=np.float64)))


def coalition_value(model: Model, target, background: BackgroundSet, coalition: Iterable) -> float:
    """Mean model output with coalition features fixed to the target, the rest from background rows."""
    t = _target(model, target)
    return _value_of_mask(model, t, background, _mask_of(coalition, list(model.feature_names)))


def coalition_table(model: Model, targets: np.ndarray, background: BackgroundSet) -> np.ndarray:
    """v(S) for every coalition of every target row: shape (n, 2**M)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n, m = targets.shape
    full = (1 << m) - 1
    if _is_logit_additive(model):
        t_terms = model.group_logit_terms(targets)
        b_terms = model.group_logit_terms(background.rows)
        table = kernels.coalition_values_linear(t_terms, b_terms, float(model.intercept))
        # a coalition whose absent groups match the target in every background row
        # leaves the logit untouched, so it takes the full-coalition value below
        inert = np.all(b_terms[None, :, :] == t_terms[:, None, :], axis=1)  # (n, M)
        inert_bits = (inert.astype(np.int64) << np.arange(m)).sum(axis=1)
        same = (np.arange(1 << m)[None, :] | inert_bits[:, None]) == full
    else:
        b = len(background)
        masks = np.arange(1 << m)
        inside = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)  # (2**M, M)
        table = np.empty((n, 1 << m))
        chunk = max(1, (1 << 20) // b)
        for r in range(n):
            for lo in range(0, 1 << m, chunk):
                sel = inside[lo:lo + chunk]
                composite = np.where(sel[:, None, :], targets[r][None, None, :], background.rows[None, :, :])
                preds = model.predict_raw(composite.reshape(-1, m)).reshape(sel.shape[0], b)
                table[r, lo:lo + chunk] = _mean_over_rows(preds)
        same = np.zeros((n, 1 << m), dtype=bool)
    # the full coalition is the model output itself, not an average of copies
    same[:, full] = True
    f = np.asarray(model.predict_raw(targets), dtype=np.float64)
    table[same] = np.broadcast_to(f[:, None], table.shape)[same]
    return table


def exact_shap(model: Model, target, background: BackgroundSet) -> Attribution:
    """Shapley values by enumerating all 2**M coalitions (each evaluated once)."""
    t = _target(model, target)
    m = t.shape[0]
    if m > MAX_EXACT_FEATURES:
        raise TooManyFeatures(m, MAX_EXACT_FEATURES)
    table = coalition_table(model, t[None, :], background)
    phi = kernels.shapley_from_values(table, m)[0]
    return Attribution(tuple(model.feature_names), phi, float(table[0, 0]), float(table[0, -1]), t)


def sampled_shap(model: Model, target, background: BackgroundSet, n_permutations: int, seed: int = 0) -> Attribution:
    """Permutation-sampling estimate with a closing correction.

    Marginal contributions are averaged over uniformly random orderings.  Any
    residual ``prediction - base - sum(phi)`` left by rounding is spread in
    proportion to ``|phi|`` (evenly if all are zero) so the waterfall closes.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    t = _target(model, target)
    m = t.shape[0]
    rng = np.random.default_rng(seed)
    cache: dict[int, float] = {}

    def v(mask):
        if mask not in cache:
            cache[mask] = _value_of_mask(model, t, background, mask)
        return cache[mask]

    base = v(0)
    phi = np.zeros(m)
    for _ in range(n_permutations):
        mask, prev = 0, base
        for i in rng.permutation(m):
            mask |= 1 << int(i)
            cur = v(mask)
            phi[i] += cur - prev
            prev = cur
    phi /= n_permutations
    prediction = v((1 << m) - 1)
    residual = prediction - base - phi.sum()
    mag = np.abs(phi)
    phi = phi + residual * (mag / mag.sum() if mag.sum() > 0 else np.full(m, 1.0 / m))
    return Attribution(tuple(model.feature_names), phi, base, prediction, t)


@dataclass(frozen=True)
class GlobalImportance:
    feature_names: tuple[str, ...]
    importance: np.ndarray
    phi: np.ndarray  # (n, M)
    values: np.ndarray  # (n, M) raw feature values (codes for categoricals)
    base_value: float

    def ranking(self) -> list[str]:
        order = sorted(range(len(self.feature_names)), key=lambda i: (-self.importance[i], i))
        return [self.feature_names[i] for i in order]

    def pairs(self) -> list[tuple[str, float, float]]:
        """(feature, phi, value) for every instance and feature, row-major."""
        return [
            (name, float(self.phi[r, j]), float(self.values[r, j]))
            for r in range(self.phi.shape[0])
            for j, name in enumerate(self.feature_names)
        ]

    def to_dict(self) -> dict:
        return {
            "units": UNITS,
            "base_value": self.base_value,
            "importance": {n: float(v) for n, v in zip(self.feature_names, self.importance)},
            "ranking": self.ranking(),
        }


def global_importance(model: Model, cohort: Cohort | np.ndarray, background: BackgroundSet,
                      batch_size: int = 512) -> GlobalImportance:
    """Exact attributions for every row; importance is the mean absolute phi."""
    raw = cohort.values if isinstance(cohort, Cohort) else np.atleast_2d(np.asarray(cohort, dtype=np.float64))
    if raw.shape[0] == 0:
        raise SchemaError("cohort is empty")
    m = raw.shape[1]
    if m > MAX_EXACT_FEATURES:
        raise TooManyFeatures(m, MAX_EXACT_FEATURES)
    phi = np.empty(raw.shape)
    base = None
    for lo in range(0, raw.shape[0], batch_size):
        table = coalition_table(model, raw[lo:lo + batch_size], background)
        phi[lo:lo + batch_size] = kernels.shapley_from_values(table, m)
        base = float(table[0, 0])
    return GlobalImportance(tuple(model.feature_names), np.abs(phi).mean(axis=0), phi, np.array(raw), base)


@dataclass(frozen=True)
class WaterfallStep:
    feature: str
    value: float
    phi: float
    start: float
    end: float


def waterfall(attribution: Attribution) -> list[WaterfallStep]:
    """Contributions by descending |phi| (schema order on ties), as running sums from base to prediction."""
    a = attribution
    order = sorted(range(len(a.feature_names)), key=lambda i: (-abs(a.phi[i]), i))
    steps = []
    level = a.base_value
    for k, i in enumerate(order):
        end = a.prediction if k == len(order) - 1 else level + float(a.phi[i])
        steps.append(WaterfallStep(a.feature_names[i], float(a.target_row[i]), float(a.phi[i]), level, end))
        level = end
    return steps

