"""Command-line entry point: ``riskstrat <command> [options]``.

Exit status is 0 on success, 2 for usage or input problems (bad flags,
unreadable or malformed files, data a model cannot be fit to) and 1 for
anything else.  Failures print one line to stderr:

    riskstrat: error category=<file|schema|training|usage|rendering|internal> type=<Name>: <message>
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from riskstrat import __version__, pipeline, report
from riskstrat.errors import InputFileError, NonFinite, RiskStratError, UsageError
from riskstrat.explain import Attribution, global_importance, make_background
from riskstrat.ingest import DEFAULT_LABEL, encode, impute_missing
from riskstrat.metrics import CalibrationCurve, RocCurve, evaluate
from riskstrat.model import TrainConfig, cross_validate, load_model, save_model, train
from riskstrat.synth import DEFAULT_SHIFT, write_synth

COMMANDS = ("synth", "train", "evaluate", "explain", "report", "pipeline")
SEED_ENV = "RISKSTRAT_SEED"
DEFAULT_SEED = 0


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path | None
    synth: bool
    model: Path | None
    out_dir: Path
    run_id: str
    seed: int
    label_column: str = DEFAULT_LABEL
    folds: int = 5
    l2_lambda: float = 1.0
    bins: int = 10
    background_size: int = 128
    explain_index: int = 0
    n_permutations: int = 0
    miscalibration_shift: float = 0.0
    n: int | None = None

    def train_config(self) -> TrainConfig:
        return TrainConfig(l2_lambda=self.l2_lambda, seed=self.seed, folds=self.folds)

    def source(self) -> pipeline.CohortSource:
        return pipeline.load_source(self.input, self.synth, self.seed, self.label_column,
                                    self.miscalibration_shift, self.n)

    def path(self, kind: str, suffix: str = "json") -> Path:
        return pipeline.artifact_path(self.out_dir, self.run_id, kind, suffix)

    def validate(self):
        if self.command == "explain" and self.model is None:
            raise UsageError(f"{self.command} needs --model")
        if self.model is not None and not self.model.is_file():
            raise InputFileError(f"file not found: {self.model}")
        if self.input is not None and not self.input.is_file():
            raise InputFileError(f"file not found: {self.input}")
        if self.bins < 2:
            raise UsageError("--bins must be >= 2")
        if self.background_size < 1:
            raise UsageError("--background-size must be >= 1")
        if self.n_permutations < 0:
            raise UsageError("--n-permutations must be >= 0")
        if self.n is not None and self.n < 1:
            raise UsageError("--n must be >= 1")
        if not self.run_id or os.sep in self.run_id:
            raise UsageError("--run-id must be a nonempty file-name stem")


def _env_seed() -> int:
    text = os.environ.get(SEED_ENV)
    if text is None or not text.strip():
        return DEFAULT_SEED
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskstrat", description="Pediatric dental risk stratification with Shapley explanations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "synth": "write a synthetic replica cohort and its true-probability sidecar",
        "train": "fit the classifier on a cohort and save it as JSON",
        "evaluate": "cross-validated (or saved-model) discrimination and calibration",
        "explain": "Shapley attribution for one cohort row",
        "report": "re-render figures from saved run artifacts",
        "pipeline": "ingest, train with CV, evaluate, explain and render in one run",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        src = p.add_mutually_exclusive_group()
        src.add_argument("--input", type=Path, help="cohort CSV")
        src.add_argument("--synth", action="store_true", help="use the synthetic replica cohort")
        p.add_argument("--model", type=Path, help="saved model JSON")
        p.add_argument("--label-column", default=DEFAULT_LABEL, help="label column name (default %(default)s)")
        p.add_argument("--seed", type=int, default=None,
                       help=f"run seed (default ${SEED_ENV}, else {DEFAULT_SEED})")
        p.add_argument("--folds", type=int, default=5, help="cross-validation folds (default %(default)s)")
        p.add_argument("--lambda", dest="l2_lambda", type=float, default=1.0,
                       help="L2 penalty strength (default %(default)s)")
        p.add_argument("--bins", type=int, default=10, help="calibration bins (default %(default)s)")
        p.add_argument("--background-size", type=int, default=128,
                       help="background rows for Shapley values (default %(default)s)")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="artifact directory (default cwd)")
        p.add_argument("--run-id", default="run", help="artifact file-name prefix (default %(default)s)")
        p.add_argument("--explain-index", type=int, default=0, help="row to explain (default %(default)s)")
        p.add_argument("--n-permutations", type=int, default=0,
                       help="use permutation sampling with this many orderings (default 0: exact)")
        p.add_argument("--miscalibration-shift", type=float, nargs="?", const=DEFAULT_SHIFT, default=0.0,
                       help=f"synthetic outcome logit shift (bare flag: {DEFAULT_SHIFT})")
        p.add_argument("--n", type=int, default=None, help="synthetic cohort size (default 4000)")
    return parser


def config_from_args(args) -> RunConfig:
    seed = args.seed if args.seed is not None else _env_seed()
    cfg = RunConfig(
        command=args.command,
        input=args.input,
        synth=args.synth,
        model=args.model,
        out_dir=args.out_dir,
        run_id=args.run_id,
        seed=seed,
        label_column=args.label_column,
        folds=args.folds,
        l2_lambda=args.l2_lambda,
        bins=args.bins,
        background_size=args.background_size,
        explain_index=args.explain_index,
        n_permutations=args.n_permutations,
        miscalibration_shift=args.miscalibration_shift,
        n=args.n,
    )
    cfg.validate()
    return cfg


# -- commands -----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out):
    if cfg.input is not None:
        raise UsageError("synth does not read --input")
    result = pipeline.synth_result(cfg.seed, cfg.n, cfg.miscalibration_shift, cfg.label_column)
    cohort_path, truth_path = cfg.path("cohort", "csv"), cfg.path("truth", "csv")
    write_synth(result, cohort_path, truth_path)
    c = result.cohort
    print(f"wrote {c.n} rows (prevalence {c.labels.mean():.3f}) to {cohort_path}", file=out)
    print(f"wrote true probabilities to {truth_path}", file=out)


def cmd_train(cfg: RunConfig, out):
    cohort = impute_missing(cfg.source().cohort)
    matrix = encode(cohort)
    for w in matrix.warnings:
        print(f"warning: {w}", file=out)
    model = train(matrix, cfg.train_config())
    path = cfg.path("model")
    save_model(model, path)
    print(f"trained on {cohort.n} rows: {model.stop_reason} after {model.n_iter} iterations", file=out)
    print(f"wrote {path}", file=out)


def cmd_evaluate(cfg: RunConfig, out):
    src = cfg.source()
    cohort = impute_missing(src.cohort)
    labels = src.eval_labels if src.eval_labels is not None else cohort.labels
    if cfg.model is not None:
        # external validation of a saved model
        probs = load_model(cfg.model).predict_raw(cohort.values)
        evaluation = evaluate(probs, labels, cfg.bins)
    else:
        cv = cross_validate(encode(cohort), cfg.train_config(), src.eval_labels)
        evaluation = evaluate(cv.probabilities, cv.labels, cfg.bins, cv.folds)
    pipeline.atomic_write(cfg.path("eval"), pipeline.dumps(pipeline.eval_document(evaluation)))
    report.write_figure(report.render_roc(evaluation.roc), cfg.out_dir, cfg.run_id, "roc")
    report.write_figure(report.render_calibration(evaluation.calibration), cfg.out_dir, cfg.run_id, "calibration")
    print(f"AUC: {evaluation.auc:.3f}", file=out)
    print(f"Brier score: {evaluation.brier:.3f}", file=out)


def cmd_explain(cfg: RunConfig, out):
    model = load_model(cfg.model)
    cohort = impute_missing(cfg.source().cohort)
    attr, method = pipeline.explain_row(model, cohort, cfg.explain_index, cfg.background_size,
                                        cfg.n_permutations, cfg.seed)
    doc = pipeline.attribution_document(attr, cfg.explain_index, method, cfg.n_permutations)
    pipeline.atomic_write(cfg.path("attribution"), pipeline.dumps(doc))
    report.write_figure(report.render_waterfall(attr), cfg.out_dir, cfg.run_id, "waterfall")
    print(f"row {cfg.explain_index}: base {attr.base_value:.4f} -> prediction {attr.prediction:.4f} ({method})", file=out)
    for c in doc["contributions"]:
        print(f"  {c['feature']:<10} {c['phi']:+.4f}", file=out)


def _read_json(path: Path):
    try:
        with path.open(encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputFileError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputFileError(f"{path} is not valid JSON: {exc}") from None


def cmd_report(cfg: RunConfig, out):
    """Figures from ``<run-id>_eval.json`` and ``<run-id>_attribution.json``.

    The summary plot needs per-row attributions, so it is recomputed when a
    model and a cohort are given.
    """
    doc = _read_json(cfg.path("eval"))
    roc = RocCurve.from_list(doc["roc"], doc["auc"])
    curve = CalibrationCurve.from_list(doc["calibration"], doc.get("n_bins", cfg.bins))
    written = [
        report.write_figure(report.render_roc(roc), cfg.out_dir, cfg.run_id, "roc"),
        report.write_figure(report.render_calibration(curve), cfg.out_dir, cfg.run_id, "calibration"),
    ]
    attr_path = cfg.path("attribution")
    if attr_path.exists():
        attr = Attribution.from_dict(_read_json(attr_path))
        written.append(report.write_figure(report.render_waterfall(attr), cfg.out_dir, cfg.run_id, "waterfall"))
    if cfg.model is not None and (cfg.input is not None or cfg.synth):
        cohort = impute_missing(cfg.source().cohort)
        imp = global_importance(load_model(cfg.model), cohort, make_background(cohort, cfg.background_size, cfg.seed))
        written.append(report.write_figure(report.render_summary(imp, seed=cfg.seed), cfg.out_dir, cfg.run_id, "summary"))
    for p in written:
        print(f"wrote {p}", file=out)


def cmd_pipeline(cfg: RunConfig, out):
    result = pipeline.run(cfg.source(), cfg.train_config(), cfg.bins, cfg.background_size,
                         cfg.explain_index, cfg.n_permutations)
    paths = pipeline.write_artifacts(result, cfg.out_dir, cfg.run_id, cfg.seed)
    for w in result.warnings:
        print(f"warning: {w}", file=out)
    for line in result.summary_lines():
        print(line, file=out)
    print(f"wrote {len(paths)} artifacts to {cfg.out_dir}", file=out)


HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def exit_code(err: BaseException) -> int:
    if isinstance(err, RiskStratError) and not isinstance(err, NonFinite):
        return 1 if err.category in ("rendering", "internal") else 2
    return 1


def error_line(err: BaseException) -> str:
    category = err.category if isinstance(err, RiskStratError) else "internal"
    message = " ".join(str(err).split()) or type(err).__name__
    return f"riskstrat: error category={category} type={type(err).__name__}: {message}"


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        cfg = config_from_args(args)
        HANDLERS[cfg.command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one line
        print(error_line(exc), file=err)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
