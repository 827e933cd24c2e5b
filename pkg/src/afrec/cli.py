"""Command-line interface exposing the pipeline as subcommands.

Subcommands: synth, parse, vectorize, cohort, score, train, evaluate,
pipeline. A plain-text ``key=value`` config file names the five rule files
and the run parameters; command-line flags override config values. All
randomness is governed by ``--seed``. Logs are line-delimited JSON events on
standard error. Every emitted artifact embeds the resolved config hash and
seed as leading ``#`` comment lines (JSON artifacts carry a ``provenance``
field).

Exit codes: 0 success; 2 usage error; 3 missing or unreadable path;
4 schema/format mismatch; 5 invalid data; 6 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shlex
import subprocess
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import models
from .clinical_scores import SCORE_NAMES, score_dataset
from .data_model import (
    CorpusError,
    Dataset,
    SchemaError,
    canonical_schema,
    load_coded_records,
    load_corpus,
    load_dataset,
    load_schema,
    save_dataset,
    save_matrix,
)
from .entity_extractor import bundled_rulepack, load_rulepack
from .evaluation import (
    EvalReport,
    SignificanceEntry,
    paired_bootstrap_test,
    report_to_csv,
    report_to_text,
    subgroup_report,
)
from .pipeline import (
    Resources,
    annotate_report,
    apply_system,
    build_cohort,
    build_dataset,
    load_predictions,
    report_vectors_for,
    save_predictions,
    train_system,
    write_manifest,
)
from .section_parser import bundled_lexicon, load_lexicon
from .structured2vector import bundled_code_map, degrade_records, load_code_map, vectorize_coded
from .synthetic_corpus import GeneratorConfig, generate_to_dir, load_death_dates
from .vector_merger import bundled_windows, load_windows

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PATH = 3
EXIT_SCHEMA = 4
EXIT_DATA = 5
EXIT_INTERNAL = 6


def log_event(event: str, **fields) -> None:
    record = {"event": event}
    record.update(fields)
    print(json.dumps(record, sort_keys=True, default=str), file=sys.stderr)


def load_config(path: str | None) -> dict:
    config = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file {path!r} not found")
        for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorpusError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
    return config


def config_hash(config: dict, seed: int) -> str:
    canonical = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    canonical += f"\nseed={seed}"
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def resolve_resources(config: dict) -> Resources:
    res = Resources(
        schema=load_schema(config["schema"]) if config.get("schema") else canonical_schema(),
        lexicon=load_lexicon(config["lexicon"]) if config.get("lexicon") else bundled_lexicon(),
        rulepack=load_rulepack(config["rulepack"]) if config.get("rulepack") else bundled_rulepack(),
        code_map=load_code_map(config["codemap"]) if config.get("codemap") else bundled_code_map(),
        windows=load_windows(config["windows"]) if config.get("windows") else bundled_windows(),
    )
    res.validate()
    return res


def _cfg(args, config: dict, key: str, default=None, cast=str):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return cast(config[key])
    return default


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, config, provenance) -> int:
    out_dir = Path(_cfg(args, config, "out_dir", "synth_out"))
    gen_config = GeneratorConfig(
        n_patients=int(_cfg(args, config, "n_patients", 100, int)),
        seed=args.seed,
        recurrence_prevalence=float(_cfg(args, config, "prevalence", 0.63, float)),
        discard_fraction=float(_cfg(args, config, "discard_fraction", 0.08, float)),
        corruption_rate=float(_cfg(args, config, "corruption", 0.0, float)),
        language=_cfg(args, config, "language", "es"),
    )
    corpus = generate_to_dir(gen_config, out_dir, provenance)
    log_event("synth_complete", out_dir=str(out_dir), patients=gen_config.n_patients,
              reports=len(corpus.reports), coded=len(corpus.coded))
    return EXIT_OK


_WORKER_RESOURCES = None


def _init_worker(res: Resources) -> None:
    global _WORKER_RESOURCES
    _WORKER_RESOURCES = res


def _annotate_json(report) -> dict:
    sectioned, mentions, onset = annotate_report(report, _WORKER_RESOURCES)
    obj = sectioned.to_json()
    obj["mentions"] = [
        {"start": m.start, "end": m.end, "section": m.section, "label": m.label.value,
         "target_kind": m.target_kind, "target": m.target, "negated": m.negated,
         "value": m.value}
        for m in mentions
    ]
    obj["onset"] = {"is_af_report": onset.is_af_report, "is_onset": onset.is_onset,
                    "prior_af_in_history": onset.prior_af_in_history,
                    "af_type": onset.af_type.value}
    return obj


def cmd_parse(args, config, provenance) -> int:
    res = resolve_resources(config)
    reports = load_corpus(args.corpus, format=args.format)
    workers = int(_cfg(args, config, "workers", os.cpu_count() or 1, int))
    workers = max(1, min(workers, len(reports)))
    if workers > 1:
        with Pool(workers, initializer=_init_worker, initargs=(res,)) as pool:
            annotated = pool.map(_annotate_json, reports)
    else:
        _init_worker(res)
        annotated = [_annotate_json(r) for r in reports]
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        for key in sorted(provenance):
            fh.write(f"# {key}={provenance[key]}\n")
        for obj in annotated:
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    log_event("parse_complete", out=str(out), reports=len(reports))
    return EXIT_OK


def cmd_vectorize(args, config, provenance) -> int:
    res = resolve_resources(config)
    out_dir = Path(_cfg(args, config, "out_dir", "vectors_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.corpus:
        reports = load_corpus(args.corpus)
        vectors = report_vectors_for(reports, res)
        save_matrix(out_dir / "report_vectors.csv", res.schema, vectors, provenance)
        log_event("vectorize_reports", count=len(vectors))
    if args.coded:
        records = load_coded_records(args.coded)
        if args.degrade_rate:
            records = degrade_records(records, args.degrade_rate, seed=args.seed)
        by_patient: dict[str, list] = {}
        for record in records:
            by_patient.setdefault(record.patient_id, []).append(record)
        vectors = []
        unmapped = 0
        for pid in sorted(by_patient):
            result = vectorize_coded(by_patient[pid], res.code_map, res.schema)
            vectors.extend(result.vectors)
            unmapped += result.unmapped_codes
        save_matrix(out_dir / "coded_vectors.csv", res.schema, vectors, provenance)
        log_event("vectorize_coded", count=len(vectors), unmapped_codes=unmapped)
    return EXIT_OK


def cmd_cohort(args, config, provenance) -> int:
    res = resolve_resources(config)
    reports = load_corpus(args.corpus)
    coded = load_coded_records(args.coded)
    death_dates = load_death_dates(args.deaths) if args.deaths else {}
    cohort = build_cohort(reports, coded, res, death_dates)
    out = Path(args.out or "cohort_manifest.csv")
    write_manifest(out, cohort, provenance)
    labeled = cohort.manifest_rows()
    log_event("cohort_complete", out=str(out), confirmed=len(labeled))
    return EXIT_OK


def cmd_score(args, config, provenance) -> int:
    dataset = load_dataset(args.dataset)
    rows = score_dataset(dataset)
    out = Path(args.out or "scores.csv")
    import csv as _csv
    with open(out, "w", newline="", encoding="utf-8") as fh:
        for key in sorted(provenance):
            fh.write(f"# {key}={provenance[key]}\n")
        writer = _csv.writer(fh)
        writer.writerow(["patient_id", "chads2vasc", "hatch", "apple",
                         "pred_chads2vasc", "pred_hatch", "pred_apple"])
        for row in rows:
            writer.writerow([
                row.patient_id,
                row.scores["chads2_vasc"], row.scores["hatch"], row.scores["apple"],
                row.predictions["chads2_vasc"], row.predictions["hatch"],
                row.predictions["apple"],
            ])
    log_event("score_complete", out=str(out), patients=len(rows))
    return EXIT_OK


def _train_one(dataset, kind, args, config, seed):
    grid_raw = _cfg(args, config, "grid_regularization", "0.01,0.1,1,10")
    grid = [{"regularization": float(x)} for x in str(grid_raw).split(",")]
    fs_method = _cfg(args, config, "fs_method", "rfe")
    if fs_method in ("none", ""):
        fs_method = None
    fit_params = {}
    for key in ("epochs", "batch_size"):
        value = _cfg(args, config, key, None)
        if value is not None:
            fit_params[key] = int(value)
    lr = _cfg(args, config, "learning_rate", None)
    if lr is not None:
        fit_params["learning_rate"] = float(lr)
    return train_system(
        dataset, kind,
        fs_method=fs_method,
        fs_target=int(v) if (v := _cfg(args, config, "fs_target", None)) is not None else None,
        fs_step=int(_cfg(args, config, "fs_step", 1, int)),
        use_undersample=str(_cfg(args, config, "undersample", "0")) in ("1", "true"),
        grid=grid,
        cv_folds=int(_cfg(args, config, "cv_folds", 5, int)),
        seed=seed,
        fit_params=fit_params or None,
    )


def cmd_train(args, config, provenance) -> int:
    dataset = load_dataset(args.dataset)
    out_dir = Path(_cfg(args, config, "out_dir", "train_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    kinds = str(_cfg(args, config, "model_kinds", args.kind or "logistic")).split(",")
    test_idx = dataset.split("test")
    test_ids = [dataset.rows[i].patient_id for i in test_idx]
    for kind in kinds:
        system = _train_one(dataset, kind, args, config, args.seed)
        payload = system.model.to_json()
        payload["provenance"] = provenance
        (out_dir / f"model_{kind}.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        prep = system.preprocessing.to_json()
        prep["provenance"] = provenance
        (out_dir / f"preprocessing_{kind}.json").write_text(
            json.dumps(prep, indent=2) + "\n", encoding="utf-8")
        cv_payload = {"summary": system.cv.summary, "best_params": system.cv.best_params,
                      "provenance": provenance}
        (out_dir / f"cv_{kind}.json").write_text(
            json.dumps(cv_payload, indent=2) + "\n", encoding="utf-8")
        if test_idx:
            probs, preds = apply_system(system, dataset, test_idx)
            save_predictions(out_dir / f"predictions_{kind}.csv", test_ids, probs,
                             preds, provenance)
        log_event("train_complete", kind=kind, best=system.cv.best_params,
                  selected=len(system.preprocessing.selected_columns))
    return EXIT_OK


def _evaluate(dataset: Dataset, prediction_sets: dict, seed: int) -> EvalReport:
    test_idx = dataset.split("test")
    test_ids = [dataset.rows[i].patient_id for i in test_idx]
    labels = np.array([dataset.labels[i] for i in test_idx])
    gender = np.array([dataset.rows[i].cells.get("gender", np.nan) for i in test_idx])
    age = np.array([dataset.rows[i].cells.get("age", np.nan) for i in test_idx])
    systems = []
    aligned: dict[str, np.ndarray] = {}
    for name in sorted(prediction_sets):
        mapping = prediction_sets[name]
        missing = [pid for pid in test_ids if pid not in mapping]
        if missing:
            raise SchemaError(
                f"predictions {name!r} missing {len(missing)} test patients "
                f"(first: {missing[0]})")
        probs = np.array([mapping[pid][0] for pid in test_ids])
        preds = np.array([mapping[pid][1] for pid in test_ids])
        aligned[name] = preds
        systems.append(subgroup_report(name, labels, preds, gender, age, probs))
    significance = []
    names = sorted(aligned)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for metric in ("acc", "mcc"):
                test = paired_bootstrap_test(labels, aligned[a], aligned[b],
                                             metric=metric, seed=seed)
                significance.append(SignificanceEntry(
                    system_a=a, system_b=b, metric=metric,
                    diff=test.diff, p_value=test.p_value))
    return EvalReport(systems=tuple(systems), significance=tuple(significance))


def cmd_evaluate(args, config, provenance) -> int:
    dataset = load_dataset(args.dataset)
    prediction_sets = {}
    for spec in args.pred or []:
        name, _, path = spec.partition("=")
        if not path:
            raise CorpusError(f"--pred expects name=path, got {spec!r}")
        if not Path(path).is_file():
            raise FileNotFoundError(f"predictions file {path!r} not found")
        prediction_sets[name] = load_predictions(path)
    if not prediction_sets:
        raise CorpusError("evaluate needs at least one --pred name=path")
    report = _evaluate(dataset, prediction_sets, args.seed)
    out_dir = Path(_cfg(args, config, "out_dir", "eval_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    report_to_csv(report, out_dir / "eval_report.csv", provenance)
    (out_dir / "eval_report.txt").write_text(report_to_text(report), encoding="utf-8")
    log_event("evaluate_complete", systems=sorted(prediction_sets),
              out=str(out_dir / "eval_report.csv"))
    return EXIT_OK


def cmd_pipeline(args, config, provenance) -> int:
    res = resolve_resources(config)
    out_dir = Path(_cfg(args, config, "out_dir", "pipeline_out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    synth_dir = out_dir / "synth"
    gen_config = GeneratorConfig(
        n_patients=int(_cfg(args, config, "n_patients", 100, int)),
        seed=args.seed,
        recurrence_prevalence=float(_cfg(args, config, "prevalence", 0.63, float)),
        discard_fraction=float(_cfg(args, config, "discard_fraction", 0.08, float)),
        corruption_rate=float(_cfg(args, config, "corruption", 0.0, float)),
        language=_cfg(args, config, "language", "es"),
    )
    generate_to_dir(gen_config, synth_dir, provenance)
    log_event("stage_complete", stage="synth")

    reports = load_corpus(synth_dir / "reports.jsonl")
    coded = load_coded_records(synth_dir / "coded.csv")
    death_dates = load_death_dates(synth_dir / "deaths.csv")
    cohort = build_cohort(reports, coded, res, death_dates)
    write_manifest(out_dir / "cohort_manifest.csv", cohort, provenance)
    log_event("stage_complete", stage="cohort")

    dataset = build_dataset(cohort, res.schema, seed=args.seed,
                            test_fraction=float(_cfg(args, config, "test_fraction", 0.2, float)))
    save_dataset(out_dir / "dataset", dataset, provenance)
    log_event("stage_complete", stage="dataset", rows=len(dataset.rows))

    score_args = argparse.Namespace(dataset=out_dir / "dataset",
                                    out=out_dir / "scores.csv", seed=args.seed)
    cmd_score(score_args, config, provenance)
    log_event("stage_complete", stage="score")

    test_idx = dataset.split("test")
    test_ids = [dataset.rows[i].patient_id for i in test_idx]
    prediction_files = {}
    kinds = str(_cfg(args, config, "model_kinds", "logistic,hinge")).split(",")
    for kind in kinds:
        system = _train_one(dataset, kind, args, config, args.seed)
        payload = system.model.to_json()
        payload["provenance"] = provenance
        (out_dir / f"model_{kind}.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        prep = system.preprocessing.to_json()
        prep["provenance"] = provenance
        (out_dir / f"preprocessing_{kind}.json").write_text(
            json.dumps(prep, indent=2) + "\n", encoding="utf-8")
        probs, preds = apply_system(system, dataset, test_idx)
        path = out_dir / f"predictions_{kind}.csv"
        save_predictions(path, test_ids, probs, preds, provenance)
        prediction_files[kind] = path
        log_event("stage_complete", stage=f"train_{kind}")

    # Clinical scores as prediction systems over the test rows.
    score_rows = {r.patient_id: r for r in score_dataset(dataset)}
    for score_name in SCORE_NAMES:
        path = out_dir / f"predictions_{score_name}.csv"
        preds = [score_rows[pid].predictions[score_name] for pid in test_ids]
        save_predictions(path, test_ids, [float(p) for p in preds], preds, provenance)
        prediction_files[score_name] = path

    external_cmd = _cfg(args, config, "external_cmd", None)
    if external_cmd:
        ext_path = out_dir / "predictions_external.csv"
        code = _run_external(external_cmd, out_dir / "dataset", dataset, ext_path)
        if code == 0:
            prediction_files["external"] = ext_path
        else:
            log_event("external_skipped", exit_code=code)

    prediction_sets = {name: load_predictions(path)
                       for name, path in prediction_files.items()}
    report = _evaluate(dataset, prediction_sets, args.seed)
    report_to_csv(report, out_dir / "eval_report.csv", provenance)
    (out_dir / "eval_report.txt").write_text(report_to_text(report), encoding="utf-8")
    log_event("pipeline_complete", out_dir=str(out_dir),
              systems=sorted(prediction_sets))
    return EXIT_OK


def _run_external(command: str, dataset_dir: Path, dataset: Dataset, out: Path) -> int:
    """Invoke an external predictor over the interchange files.

    The primary pipeline never depends on the adapter being present: any
    nonzero exit is logged and the system is skipped.
    """
    train_idx = dataset.split("train")
    test_idx = dataset.split("test")
    tmp = out.parent / "external_io"
    tmp.mkdir(parents=True, exist_ok=True)
    save_matrix(tmp / "train.csv", dataset.schema,
                [dataset.rows[i] for i in train_idx])
    save_matrix(tmp / "test.csv", dataset.schema,
                [dataset.rows[i] for i in test_idx])
    with open(tmp / "train_labels.csv", "w", encoding="utf-8") as fh:
        fh.write("patient_id,label\n")
        for i in train_idx:
            fh.write(f"{dataset.rows[i].patient_id},{dataset.labels[i]}\n")
    argv = shlex.split(command) + [
        "predict", "--train", str(tmp / "train.csv"),
        "--labels", str(tmp / "train_labels.csv"),
        "--test", str(tmp / "test.csv"), "--out", str(out), "--variant", "raw",
    ]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except FileNotFoundError:
        return 127
    if proc.returncode != 0:
        log_event("external_stderr", stderr=proc.stderr[-2000:])
    return proc.returncode


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="afrec",
        description="AF recurrence pipeline: synthetic corpora, NLP extraction, "
                    "cohort building, risk scores, linear models and evaluation.",
    )
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed governing all randomness (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--n-patients", dest="n_patients", type=int)
    p.add_argument("--prevalence", type=float)
    p.add_argument("--corruption", type=float)
    p.add_argument("--language", choices=("es", "en"))

    p = sub.add_parser("parse", help="section + extract reports to annotated JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default="report-JSONL",
                   choices=("report-JSONL", "text-directory-with-sidecar"))
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("vectorize", help="reports/coded records to feature matrices")
    p.add_argument("--corpus")
    p.add_argument("--coded")
    p.add_argument("--degrade-rate", dest="degrade_rate", type=float, default=0.0,
                   help="drop this fraction of coded records before vectorizing")
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("cohort", help="inclusion, exclusions and silver labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--coded", required=True)
    p.add_argument("--deaths")
    p.add_argument("--out")

    p = sub.add_parser("score", help="clinical scores per patient")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--out")

    p = sub.add_parser("train", help="preprocess + fit + cross-validate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=models.KINDS)
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("evaluate", help="metrics, subgroups, significance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred", action="append", metavar="NAME=PATH")
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("pipeline", help="all stages end to end")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--n-patients", dest="n_patients", type=int)

    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "parse": cmd_parse,
    "vectorize": cmd_vectorize,
    "cohort": cmd_cohort,
    "score": cmd_score,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is None:
            args.seed = int(config.get("seed", 0))
        provenance = {"config_hash": config_hash(config, args.seed), "seed": args.seed}
        return _COMMANDS[args.command](args, config, provenance)
    except FileNotFoundError as exc:
        log_event("error", code=EXIT_PATH, message=str(exc))
        return EXIT_PATH
    except SchemaError as exc:
        log_event("error", code=EXIT_SCHEMA, message=str(exc))
        return EXIT_SCHEMA
    except CorpusError as exc:
        log_event("error", code=EXIT_DATA, message=str(exc))
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        log_event("error", code=EXIT_INTERNAL, message=f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
