"""End-to-end run: ingest, cross-validated training, evaluation, explanation, figures.

Every random choice (synthetic draw, fold split, background sample, permutation
order, plot jitter) is seeded from the single run seed, and JSON is written
with a fixed key order, so a rerun reproduces every artifact byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from riskstrat import report
from riskstrat.errors import DimensionMismatch, IndexOutOfRange, UsageError
from riskstrat.explain import (
    Attribution,
    GlobalImportance,
    exact_shap,
    global_importance,
    make_background,
    sampled_shap,
)
from riskstrat.fileio import atomic_write
from riskstrat.ingest import DEFAULT_LABEL, Cohort, default_schema, encode, impute_missing, load_cohort
from riskstrat.metrics import EvalReport, evaluate
from riskstrat.model import CVReport, RiskModel, TrainConfig, cross_validate, save_model, train
from riskstrat.synth import SynthResult, default_replica, generate_cohort


@dataclass(frozen=True)
class CohortSource:
    """A cohort plus, for synthetic runs with a shift, the labels it is scored against."""

    cohort: Cohort
    eval_labels: np.ndarray | None = None
    synth: SynthResult | None = None


def load_source(input_path=None, synth: bool = False, seed: int = 0, label_column: str = DEFAULT_LABEL,
                miscalibration_shift: float = 0.0, n: int | None = None) -> CohortSource:
    if synth == (input_path is not None):
        raise UsageError("give exactly one of --input or --synth")
    if not synth:
        if miscalibration_shift:
            raise UsageError("--miscalibration-shift only applies to --synth cohorts")
        return CohortSource(load_cohort(input_path, default_schema(label_column)))
    dev = synth_result(seed, n, 0.0, label_column)
    if not miscalibration_shift:
        return CohortSource(dev.cohort, None, dev)
    # same features, labels drawn with the shifted logit
    shifted = synth_result(seed, n, miscalibration_shift, label_column)
    return CohortSource(dev.cohort, shifted.cohort.labels, dev)


def synth_result(seed: int = 0, n: int | None = None, miscalibration_shift: float = 0.0,
                 label_column: str = DEFAULT_LABEL) -> SynthResult:
    """The replica cohort for a seed, optionally resized, shifted or relabelled."""
    config = replace(default_replica(), seed=seed, miscalibration_shift=miscalibration_shift)
    if n is not None:
        config = replace(config, n=n)
    result = generate_cohort(config)
    if label_column != DEFAULT_LABEL:
        result = replace(result, cohort=replace(result.cohort, schema=default_schema(label_column)))
    return result


@dataclass(frozen=True)
class PipelineResult:
    model: RiskModel
    cv: CVReport
    evaluation: EvalReport
    importance: GlobalImportance
    attribution: Attribution
    explain_index: int
    method: str
    n_permutations: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def top_features(self, k: int = 2) -> list[str]:
        return self.importance.ranking()[:k]

    def summary_lines(self) -> list[str]:
        return [
            f"AUC (pooled out-of-fold): {self.evaluation.auc:.3f}",
            f"Brier score: {self.evaluation.brier:.3f}",
            "top features: " + ", ".join(self.top_features(2)),
        ]


def explain_row(model: RiskModel, cohort: Cohort, index: int, background_size: int = 128,
                n_permutations: int = 0, seed: int = 0) -> tuple[Attribution, str]:
    """Attribution for one row of an imputed cohort; ``n_permutations = 0`` means exact."""
    if tuple(model.feature_names) != tuple(cohort.schema.names):
        raise DimensionMismatch("model and cohort features differ")
    if not 0 <= index < cohort.n:
        raise IndexOutOfRange(index, cohort.n)
    background = make_background(cohort, background_size, seed)
    target = cohort.values[index]
    if n_permutations:
        return sampled_shap(model, target, background, n_permutations, seed), "sampled"
    return exact_shap(model, target, background), "exact"


def run(source: CohortSource, train_config: TrainConfig, n_bins: int = 10, background_size: int = 128,
        explain_index: int = 0, n_permutations: int = 0) -> PipelineResult:
    cohort = impute_missing(source.cohort)
    matrix = encode(cohort)
    cv = cross_validate(matrix, train_config, source.eval_labels)
    evaluation = evaluate(cv.probabilities, cv.labels, n_bins, cv.folds)
    model = train(matrix, train_config)
    seed = train_config.seed
    importance = global_importance(model, cohort, make_background(cohort, background_size, seed))
    attribution, method = explain_row(model, cohort, explain_index, background_size, n_permutations, seed)
    return PipelineResult(model, cv, evaluation, importance, attribution, explain_index, method,
                          n_permutations, tuple(matrix.warnings))


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def eval_document(evaluation: EvalReport, importance: GlobalImportance | None = None) -> dict:
    doc = evaluation.to_dict()
    if importance is not None:
        doc["importance"] = importance.to_dict()
    return doc


def attribution_document(attribution: Attribution, index: int, method: str, n_permutations: int = 0) -> dict:
    doc = {"row": index, "method": method}
    if method == "sampled":
        doc["n_permutations"] = n_permutations
    doc.update(attribution.to_dict())
    return doc


def artifact_path(out_dir, run_id: str, kind: str, suffix: str = "json") -> Path:
    return Path(out_dir) / f"{run_id}_{kind}.{suffix}"


def write_artifacts(result: PipelineResult, out_dir, run_id: str, seed: int = 0) -> list[Path]:
    """Model, eval and attribution JSON plus the four figures."""
    model_path = artifact_path(out_dir, run_id, "model")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    save_model(result.model, model_path)
    paths = [
        model_path,
        atomic_write(artifact_path(out_dir, run_id, "eval"), dumps(eval_document(result.evaluation, result.importance))),
        atomic_write(
            artifact_path(out_dir, run_id, "attribution"),
            dumps(attribution_document(result.attribution, result.explain_index, result.method, result.n_permutations)),
        ),
    ]
    figures = {
        "waterfall": report.render_waterfall(result.attribution),
        "summary": report.render_summary(result.importance, seed=seed),
        "roc": report.render_roc(result.evaluation.roc),
        "calibration": report.render_calibration(result.evaluation.calibration),
    }
    for kind, svg in figures.items():
        paths.append(report.write_figure(svg, out_dir, run_id, kind))
    return paths
