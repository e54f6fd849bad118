"""Seeded synthetic cohorts standing in for the unreleased survey extract.

Features are drawn independently from documented marginals.  The true logit
is linear: continuous features enter through a population z-score (fixed
centre and scale derived analytically from the marginals) and categorical
features through per-level offsets relative to their lowest code.

Random streams for features, label noise and missingness are separate
children of one seed, so two configurations that differ only in
``miscalibration_shift`` yield identical features and coupled labels
(a row positive without the shift stays positive with a positive shift).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from riskstrat.fileio import atomic_write
from riskstrat.ingest import Cohort, default_schema, make_cohort, write_cohort
from riskstrat.model import sigmoid


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def clipped_lognormal_moments(mu: float, sigma: float, cap: float) -> tuple[float, float]:
    """Mean and standard deviation of ``min(LogNormal(mu, sigma), cap)``."""
    a = (math.log(cap) - mu) / sigma
    tail = 1.0 - _norm_cdf(a)
    m1 = math.exp(mu + sigma**2 / 2) * _norm_cdf(a - sigma) + cap * tail
    m2 = math.exp(2 * mu + 2 * sigma**2) * _norm_cdf(a - 2 * sigma) + cap**2 * tail
    return m1, math.sqrt(m2 - m1**2)


@dataclass(frozen=True)
class SynthConfig:
    n: int = 4000
    seed: int = 0
    intercept: float = -0.919
    # per population standard deviation
    age_coef: float = 0.23
    income_coef: float = -0.28
    # offsets relative to the lowest code
    ethnicity_coefs: Mapping[int, float] = field(default_factory=lambda: {2: -0.024, 3: -0.168, 4: -0.024, 5: -0.096})
    gender_coefs: Mapping[int, float] = field(default_factory=lambda: {2: -0.18})
    history_coefs: Mapping[int, float] = field(default_factory=lambda: {2: -0.01})
    age_range: tuple[int, int] = (2, 17)
    income_log_mean: float = math.log(2.0)
    income_log_sd: float = 1.4
    income_cap: float = 5.0
    ethnicity_weights: Mapping[int, float] = field(
        default_factory=lambda: {1: 0.22, 2: 0.10, 3: 0.33, 4: 0.22, 5: 0.13}
    )
    female_probability: float = 0.49
    history_weights: Mapping[int, float] = field(default_factory=lambda: {1: 0.12, 2: 0.86, 9: 0.02})
    missing_rate: Mapping[str, float] = field(
        default_factory=lambda: {"RIDAGEYR": 0.0, "INDFMPIR": 0.06, "RIDRETH1": 0.0, "RIAGENDR": 0.0, "MCQ010": 0.0}
    )
    miscalibration_shift: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        lo, hi = self.age_range
        if lo > hi:
            raise ValueError("age_range must be ascending")
        for name, weights in (
            ("ethnicity_weights", self.ethnicity_weights),
            ("history_weights", self.history_weights),
        ):
            w = np.array(list(weights.values()), dtype=float)
            if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
                raise ValueError(f"{name} must be a probability vector")
        probs = [self.female_probability, *self.missing_rate.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if not (self.income_log_sd > 0 and self.income_cap > 0):
            raise ValueError("income marginal parameters must be positive")

    @property
    def age_reference(self) -> tuple[float, float]:
        lo, hi = self.age_range
        k = hi - lo + 1
        return (lo + hi) / 2.0, math.sqrt((k * k - 1) / 12.0)

    @property
    def income_reference(self) -> tuple[float, float]:
        return clipped_lognormal_moments(self.income_log_mean, self.income_log_sd, self.income_cap)


def default_replica() -> SynthConfig:
    """The frozen replica operating point (n = 4000).

    Coefficients put the true AUC near 0.60 with age and income the dominant,
    opposite-signed effects and medical history nearly inert.  The logit is
    bounded; its full range maps into roughly (0.12, 0.46), centred on
    probability 0.25, so equal-width reliability bins are not left with a
    handful of extreme rows.
    """
    return SynthConfig()


@dataclass(frozen=True)
class SynthResult:
    cohort: Cohort
    true_probability: np.ndarray
    config: SynthConfig


def true_logit(config: SynthConfig, raw: np.ndarray) -> np.ndarray:
    """Linear predictor of the generator for complete raw rows (code 9 contributes 0)."""
    age_c, age_s = config.age_reference
    inc_c, inc_s = config.income_reference
    z = np.full(raw.shape[0], config.intercept)
    z = z + config.age_coef * (raw[:, 0] - age_c) / age_s
    z = z + config.income_coef * (raw[:, 1] - inc_c) / inc_s
    for j, coefs in ((2, config.ethnicity_coefs), (3, config.gender_coefs), (4, config.history_coefs)):
        for code, c in coefs.items():
            z = z + c * (raw[:, j] == code)
    return z


def _draw_features(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.n
    lo, hi = config.age_range
    age = rng.integers(lo, hi + 1, size=n).astype(np.float64)
    income = np.exp(rng.normal(config.income_log_mean, config.income_log_sd, size=n))
    income = np.round(np.clip(income, 0.0, config.income_cap), 2)
    eth_codes = np.array(list(config.ethnicity_weights), dtype=np.float64)
    eth = rng.choice(eth_codes, size=n, p=list(config.ethnicity_weights.values()))
    gender = np.where(rng.random(n) < config.female_probability, 2.0, 1.0)
    hist_codes = np.array(list(config.history_weights), dtype=np.float64)
    hist = rng.choice(hist_codes, size=n, p=list(config.history_weights.values()))
    return np.column_stack((age, income, eth, gender, hist))


def generate_cohort(config: SynthConfig) -> SynthResult:
    """Draw a cohort and the per-row probability its labels were sampled from."""
    feat_seed, label_seed, miss_seed = np.random.SeedSequence(config.seed).spawn(3)
    raw = _draw_features(config, np.random.default_rng(feat_seed))
    p = sigmoid(true_logit(config, raw) + config.miscalibration_shift)
    labels = (np.random.default_rng(label_seed).random(config.n) < p).astype(np.int8)

    schema = default_schema()
    values = raw.copy()
    miss_rng = np.random.default_rng(miss_seed)
    for j, spec in enumerate(schema.features):
        rate = config.missing_rate.get(spec.name, 0.0)
        draw = miss_rng.random(config.n)
        values[draw < rate, j] = np.nan
        if spec.missing_codes:
            values[np.isin(values[:, j], spec.missing_codes), j] = np.nan
    p.setflags(write=False)
    return SynthResult(make_cohort(schema, values, labels), p, config)


def write_synth(result: SynthResult, cohort_path, sidecar_path) -> None:
    """Cohort CSV in the ingest format plus a ``row,true_probability`` sidecar."""
    write_cohort(result.cohort, cohort_path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "true_probability"])
    for i, p in enumerate(result.true_probability.tolist()):
        writer.writerow([i, repr(p)])
    atomic_write(sidecar_path, buf.getvalue())


# logit offset used when the CLI enables miscalibration without a value
DEFAULT_SHIFT = 0.75


def with_shift(config: SynthConfig, shift: float) -> SynthConfig:
    return replace(config, miscalibration_shift=shift)
