import csv
import hashlib
import json
from pathlib import Path

import pytest

from afrec.cli import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_PATH,
    config_hash,
    load_config,
    main,
)
from afrec.data_model import canonical_schema, load_matrix


def run(*argv):
    return main([str(a) for a in argv])


def read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


def tree_hashes(root):
    root = Path(root)
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file()
    }


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = run("--seed", 21, "synth", "--out-dir", out, "--n-patients", 25)
    assert code == EXIT_OK
    return out


def test_synth_outputs(synth_dir):
    for name in ("reports.jsonl", "coded.csv", "truth.csv", "deaths.csv"):
        assert (synth_dir / name).is_file()
    first = (synth_dir / "coded.csv").read_text(encoding="utf-8").splitlines()[0]
    assert first.startswith("# config_hash=")


def test_parse_emits_annotated_jsonl(synth_dir, tmp_path):
    out = tmp_path / "annotated.jsonl"
    assert run("--seed", 21, "parse", "--corpus", synth_dir / "reports.jsonl",
               "--out", out) == EXIT_OK
    lines = [json.loads(ln) for ln in out.read_text(encoding="utf-8").splitlines()
             if not ln.startswith("#")]
    assert lines and all("sections" in obj and "onset" in obj for obj in lines)


def test_parse_with_workers_matches_sequential(synth_dir, tmp_path):
    seq, par = tmp_path / "seq.jsonl", tmp_path / "par.jsonl"
    run("--seed", 21, "parse", "--corpus", synth_dir / "reports.jsonl", "--out", seq)
    run("--seed", 21, "parse", "--corpus", synth_dir / "reports.jsonl", "--out", par,
        "--workers", 2)
    assert seq.read_text(encoding="utf-8") == par.read_text(encoding="utf-8")


def test_vectorize_matrices_load(synth_dir, tmp_path):
    out = tmp_path / "vectors"
    assert run("--seed", 21, "vectorize", "--corpus", synth_dir / "reports.jsonl",
               "--coded", synth_dir / "coded.csv", "--out-dir", out) == EXIT_OK
    schema = canonical_schema()
    assert load_matrix(out / "report_vectors.csv", schema)
    assert load_matrix(out / "coded_vectors.csv", schema)


def test_cohort_counts_match_truth(synth_dir, tmp_path):
    out = tmp_path / "manifest.csv"
    assert run("--seed", 21, "cohort", "--corpus", synth_dir / "reports.jsonl",
               "--coded", synth_dir / "coded.csv",
               "--deaths", synth_dir / "deaths.csv", "--out", out) == EXIT_OK
    rows = read_csv_rows(out)
    header, body = rows[0], rows[1:]
    assert header == ["patient_id", "onset_date", "label", "excluded", "exclusion_reason"]
    truth_rows = read_csv_rows(synth_dir / "truth.csv")[1:]
    truth = {r[0]: r for r in truth_rows}
    assert len(body) == len(truth)
    for pid, onset, label, excluded, reason in body:
        assert truth[pid][2] == onset
        assert truth[pid][3] == label
        assert truth[pid][4] == excluded
        assert truth[pid][5] == reason


def test_evaluate_missing_predictions_file(tmp_path, synth_dir):
    code = run("--seed", 21, "evaluate", "--dataset", tmp_path / "nope",
               "--pred", f"x={tmp_path / 'missing.csv'}")
    assert code == EXIT_PATH


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        run("synth", "--bogus-flag", "x")
    assert exc.value.code == 2


def test_config_file_and_hash(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n_patients=7\nout_dir=" + str(tmp_path / "o") + "\n",
                   encoding="utf-8")
    config = load_config(cfg)
    assert config["n_patients"] == "7"
    assert config_hash(config, 1) != config_hash(config, 2)
    assert run("--config", cfg, "--seed", 4, "synth") == EXIT_OK
    assert (tmp_path / "o" / "truth.csv").is_file()


def test_bad_config_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("just a line\n", encoding="utf-8")
    assert run("--config", cfg, "--seed", 0, "synth") == EXIT_DATA


PIPELINE_CFG = """
n_patients=40
test_fraction=0.3
model_kinds=logistic,hinge
grid_regularization=0.1,1
epochs=40
fs_step=16
cv_folds=3
"""


@pytest.mark.slow
def test_pipeline_end_to_end_and_deterministic(tmp_path):
    cfg = tmp_path / "pipe.cfg"
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    cfg.write_text(PIPELINE_CFG, encoding="utf-8")
    for out in (out_a, out_b):
        run_cfg = cfg.read_text(encoding="utf-8") + f"out_dir={out}\n"
        cfg_run = tmp_path / f"{out.name}.cfg"
        cfg_run.write_text(run_cfg, encoding="utf-8")
        assert run("--config", cfg_run, "--seed", 42, "pipeline") == EXIT_OK
    hashes_a, hashes_b = tree_hashes(out_a), tree_hashes(out_b)
    # The config lines differ only in out_dir; strip the hash-bearing comment
    # lines before comparing artifact bytes.
    def strip_comments(root):
        out = {}
        for p in sorted(Path(root).rglob("*")):
            if not p.is_file():
                continue
            raw = p.read_bytes()
            body = b"\n".join(ln for ln in raw.split(b"\n")
                              if not ln.startswith(b"#") and b"config_hash" not in ln)
            out[str(p.relative_to(root))] = hashlib.sha256(body).hexdigest()
        return out
    assert strip_comments(out_a) == strip_comments(out_b)
    for name in ("cohort_manifest.csv", "scores.csv", "eval_report.csv",
                 "eval_report.txt", "predictions_logistic.csv",
                 "predictions_hinge.csv", "predictions_hatch.csv"):
        assert (out_a / name).is_file(), name
    report = (out_a / "eval_report.txt").read_text(encoding="utf-8")
    assert "== general" in report and "significance" in report
