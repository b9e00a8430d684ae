import json

import numpy as np

from parityproxy import (
    MaskDataset,
    build_program,
    load_model,
    load_spectrum,
    solve,
)
from parityproxy.cli import main
from parityproxy.masks import load_mask_list


def write_table_vf(path, n, fn):
    doc = {
        "kind": "table",
        "n": n,
        "entries": [
            {"mask": [i for i in range(n) if b >> i & 1], "value": fn(b)}
            for b in range(1 << n)
        ],
    }
    path.write_text(json.dumps(doc))


class TestSampleEval:
    def test_sample_writes_mask_list(self, tmp_path):
        out = tmp_path / "masks.jsonl"
        assert main(["sample", "--n", "6", "--count", "20", "--seed", "3",
                     "--out", str(out)]) == 0
        n, masks = load_mask_list(str(out))
        assert n == 6 and len(masks) == 20

    def test_eval_against_table(self, tmp_path):
        vf_path = tmp_path / "vf.json"
        write_table_vf(vf_path, 4, lambda b: float(b))
        masks = tmp_path / "masks.jsonl"
        data = tmp_path / "data.jsonl"
        main(["sample", "--n", "4", "--count", "10", "--seed", "1", "--out", str(masks)])
        assert main(["eval", "--vf", str(vf_path), "--masks", str(masks),
                     "--out", str(data)]) == 0
        back = MaskDataset.load(str(data))
        assert all(v == float(m.bits) for m, v in back.samples)


class TestFitExtractPath:
    def test_fit_extract_sparsify_refine(self, tmp_path, capsys):
        vf_path = tmp_path / "vf.json"
        write_table_vf(vf_path, 6, lambda b: float((b & 1) * 2 + (b >> 1 & 1)))
        data = tmp_path / "data.jsonl"
        main(["eval", "--vf", str(vf_path), "--count", "150", "--seed", "2",
              "--out", str(data)])
        model_path = tmp_path / "model.json"
        assert main(["fit", "--data", str(data), "--out", str(model_path)]) == 0
        chosen = json.loads(capsys.readouterr().out.strip())
        assert "max_depth" in chosen
        model = load_model(str(model_path))
        spec_path = tmp_path / "spec.jsonl"
        assert main(["extract", "--model", str(model_path), "--out", str(spec_path)]) == 0
        sparse_path = tmp_path / "sparse.jsonl"
        assert main(["sparsify", "--spectrum", str(spec_path), "--k", "4",
                     "--out", str(sparse_path)]) == 0
        assert len(load_spectrum(str(sparse_path))) <= 4
        refined_path = tmp_path / "refined.jsonl"
        assert main(["refine", "--spectrum", str(sparse_path), "--data", str(data),
                     "--out", str(refined_path)]) == 0
        notes = json.loads(capsys.readouterr().out.strip())
        assert "accepted" in notes


class TestConvert:
    def test_constant_spectrum_shapley_all_zero(self, tmp_path, capsys):
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text(
            json.dumps({"n": 3, "basis": "fourier"}) + "\n"
            + json.dumps({"set": [], "coef": 4.0}) + "\n"
        )
        assert main(["convert", "--spectrum", str(spec_path), "--index", "shapley"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert all(e["value"] == 0.0 for e in doc["entries"])

    def test_csv_format(self, tmp_path, capsys):
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text(
            json.dumps({"n": 2, "basis": "fourier"}) + "\n"
            + json.dumps({"set": [1], "coef": 2.0}) + "\n"
        )
        assert main(["convert", "--spectrum", str(spec_path), "--index", "banzhaf",
                     "--format", "csv"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "set,value"


class TestIdentify:
    def test_cli_matches_library(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        lines = [json.dumps({"n": 10, "basis": "fourier"})]
        seen = set()
        while len(seen) < 15:
            size = int(rng.integers(0, 4))
            members = sorted(int(i) for i in rng.choice(10, size=size, replace=False))
            key = tuple(members)
            if key in seen:
                continue
            seen.add(key)
            lines.append(
                json.dumps({"set": members, "coef": float(rng.uniform(-1, 1))})
            )
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text("\n".join(lines) + "\n")

        assert main(["identify", "--spectrum", str(spec_path), "--remove", "3",
                     "--method", "bnb", "--direction", "max"]) == 0
        via_cli = json.loads(capsys.readouterr().out)

        spec = load_spectrum(str(spec_path))
        program = build_program(spec, 3, "max")
        sol = solve(program, "bnb")
        assert via_cli["objective"] == sol.objective
        assert via_cli["retained_set"] == list(sol.mask.indices())
        assert via_cli["optimality"] == "proven"

    def test_bnb_equals_brute_through_cli(self, tmp_path, capsys):
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text(
            json.dumps({"n": 6, "basis": "fourier"}) + "\n"
            + json.dumps({"set": [0, 1], "coef": -1.0}) + "\n"
            + json.dumps({"set": [2], "coef": 0.5}) + "\n"
            + json.dumps({"set": [3, 4, 5], "coef": 0.75}) + "\n"
        )
        results = {}
        for method in ("brute", "bnb"):
            assert main(["identify", "--spectrum", str(spec_path), "--remove", "2",
                         "--method", method]) == 0
            results[method] = json.loads(capsys.readouterr().out)
        assert results["brute"]["objective"] == results["bnb"]["objective"]


class TestMetricsCommand:
    def test_csv_rows(self, tmp_path, capsys):
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text(
            json.dumps({"n": 3, "basis": "fourier"}) + "\n"
            + json.dumps({"set": [], "coef": 3.0}) + "\n"
            + json.dumps({"set": [1], "coef": 2.0}) + "\n"
            + json.dumps({"set": [1, 2], "coef": 1.0}) + "\n"
        )
        assert main(["metrics", "--spectrum", str(spec_path), "--k", "3"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "name,value,params"
        names = [line.split(",")[0] for line in lines[1:]]
        assert names == ["dsr", "scr", "shr"]


class TestSynthAndRun:
    def test_end_to_end_smoke(self, tmp_path):
        vf_path = tmp_path / "vf.json"
        truth_path = tmp_path / "truth.jsonl"
        assert main(["synth", "--family", "complete_hierarchy", "--n", "16",
                     "--seed", "3", "--cardinality", "4", "--num-sets", "4",
                     "--out", str(vf_path), "--truth-out", str(truth_path)]) == 0
        assert load_spectrum(str(truth_path)).n == 16
        report_path = tmp_path / "r.json"
        csv_path = tmp_path / "m.csv"
        assert main(["run", "--vf", str(vf_path), "--alpha", "8", "--k", "200",
                     "--test-masks", "300", "--seed", "1",
                     "--hierarchy-k", "20", "--indices", "shapley",
                     "--identify", "2", "--metrics-csv", str(csv_path),
                     "--report", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        rows = {r["name"]: r["value"] for r in report["metrics"]}
        assert np.isfinite(rows["r2_test_gbt"])
        assert csv_path.read_text().startswith("name,value,params")


class TestConfigFile:
    def test_run_from_config_file_with_flag_override(self, tmp_path):
        vf_path = tmp_path / "vf.json"
        write_table_vf(vf_path, 6, lambda b: float(b % 5))
        cfg = {
            "vf": str(vf_path),
            "alpha": 4,
            "test_masks": 100,
            "k": 30,
            "seed": 7,
            "grid": [
                {"max_depth": 3, "num_trees": 40, "learning_rate": 0.5, "folds": 3}
            ],
            "hierarchy_ks": [5],
            "indices": ["shapley", "faith_banzhaf:2"],
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        report_path = tmp_path / "report.json"
        assert main(["run", "--config", str(cfg_path), "--seed", "9",
                     "--report", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert report["seed"] == 9  # flag overrides file
        assert report["config"]["k"] == 30
        assert len(report["indices"]) == 2
        assert report["indices"][1]["order"] == 2


class TestErrorPaths:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        err = capsys.readouterr().err
        assert json.loads(err.splitlines()[0])["error"] == "UsageError"

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["sample", "--n", "4", "--count", "2", "--wat", "x"]) == 1

    def test_missing_file_is_runtime_error(self, capsys):
        assert main(["extract", "--model", "/no/such/file.json",
                     "--out", "/tmp/x.jsonl"]) == 2
        err = json.loads(capsys.readouterr().err.splitlines()[0])
        assert err["error"] == "OSError"

    def test_engine_error_emits_json(self, tmp_path, capsys):
        spec_path = tmp_path / "s.jsonl"
        spec_path.write_text(
            json.dumps({"n": 3, "basis": "fourier"}) + "\n"
            + json.dumps({"set": [0], "coef": 1.0}) + "\n"
        )
        assert main(["identify", "--spectrum", str(spec_path), "--remove", "9"]) == 2
        err = json.loads(capsys.readouterr().err.splitlines()[0])
        assert err["error"] == "InvalidArgumentError"
