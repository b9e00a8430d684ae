import json
import math

import pytest

from parityproxy import (
    FitConfig,
    InvalidArgumentError,
    Mask,
    ProviderError,
    RunConfig,
    run,
)
from parityproxy.masks import TableValueFunction
from parityproxy.proxy import RegressionTree, TreeNode


def tree_table_provider(n=8):
    """Lookup-table provider whose ground truth is a depth-3 tree."""
    tree = RegressionTree(
        TreeNode(
            feature=0,
            left=TreeNode(
                feature=3,
                left=TreeNode(value=2.0),
                right=TreeNode(
                    feature=5, left=TreeNode(value=-1.0), right=TreeNode(value=0.5)
                ),
            ),
            right=TreeNode(
                feature=1,
                left=TreeNode(value=1.0),
                right=TreeNode(value=-2.0),
            ),
        )
    )
    table = {Mask(n, b): tree(Mask(n, b)) for b in range(1 << n)}
    return TableValueFunction(n, table)


def small_grid():
    return [FitConfig(max_depth=3, num_trees=60, learning_rate=0.5, folds=3)]


class TestRun:
    def test_tree_realizable_target_high_r2(self):
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=8.0,
            test_masks=400,
            grid=small_grid(),
            k=100,
            seed=3,
        )
        report = run(config).data
        rows = {r["name"]: r["value"] for r in report["metrics"]}
        assert rows["r2_test_gbt"] >= 0.99
        assert rows["r2_test_spectrum"] >= 0.99

    def test_determinism_modulo_timings(self):
        config = dict(
            vf={"kind": "synthetic", "family": "complete_hierarchy", "n": 8,
                "num_sets": 3, "cardinality": 3, "seed": 5},
            alpha=4.0,
            test_masks=200,
            k=50,
            seed=11,
            hierarchy_ks=[10],
            index_queries=[("shapley", None), ("mobius", None)],
            identify_removals=[2],
        )
        a = run(RunConfig(grid=small_grid(), **config))
        b = run(RunConfig(grid=small_grid(), **config))
        assert a.without_timings() == b.without_timings()
        assert json.dumps(a.without_timings(), sort_keys=True) == json.dumps(
            b.without_timings(), sort_keys=True
        )
        assert "timings" in a.data

    def test_budget_accounting(self):
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=2.0,
            test_masks=150,
            grid=small_grid(),
            seed=0,
        )
        report = run(config).data
        n = report["n"]
        expected_train = math.ceil(2.0 * n * math.log2(n))
        assert report["queries"]["train"] == expected_train
        assert report["queries"]["test"] == 150
        assert report["queries"]["total_core"] == expected_train + 150
        assert "identify" not in report["queries"]

    def test_report_contents(self):
        config = RunConfig(
            vf={"kind": "synthetic", "family": "staircase", "n": 8,
                "cardinality": 2, "seed": 1},
            alpha=4.0,
            test_masks=100,
            grid=small_grid(),
            k=20,
            seed=2,
            hierarchy_ks=[4],
            index_queries=[("shapley", None), ("faith_banzhaf", 2)],
            identify_removals=[1, 2],
        )
        report = run(config).data
        assert report["rng"] == "numpy.random.PCG64"
        assert report["support"]["extracted"] >= report["support"]["sparsified"]
        assert report["gbt"]["chosen"]["max_depth"] == 3
        assert len(report["gbt"]["cv_mse"]) == 1
        assert {r["name"] for r in report["metrics"]} >= {
            "r2_train_gbt",
            "r2_test_gbt",
            "r2_train_spectrum",
            "r2_test_spectrum",
            "dsr",
            "scr",
            "shr",
        }
        assert len(report["indices"]) == 2
        idents = report["identification"]
        assert [e["removed"] for e in idents] == [1, 2]
        for e in idents:
            assert len(e["retained_set"]) == 8 - e["removed"]
            assert e["optimality"] == "proven"
            assert e["true_delta_output"] is not None
        assert report["queries"]["identify"] == 4

    def test_refinement_can_be_disabled(self):
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=2.0,
            test_masks=100,
            grid=small_grid(),
            refine_step=False,
            seed=1,
        )
        report = run(config).data
        assert report["refine"] == {"accepted": False, "skipped": True}

    def test_depth_cap_recorded_for_unbounded_grid(self):
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=2.0,
            test_masks=100,
            grid=[FitConfig(max_depth=None, num_trees=20, learning_rate=0.5, folds=3)],
            seed=1,
        )
        report = run(config).data
        assert report["gbt"]["depth_capped_for_extraction"] is True
        assert report["gbt"]["chosen"]["max_depth"] == 10

    def test_stage_label_on_provider_failure(self):
        partial = TableValueFunction(6, {Mask(6, 0): 1.0})
        config = RunConfig(vf=partial, alpha=2.0, test_masks=50, grid=small_grid())
        with pytest.raises(ProviderError) as err:
            run(config)
        assert "[stage sample_and_query]" in str(err.value)

    def test_n_below_two_rejected(self):
        vf = TableValueFunction(1, {Mask(1, 0): 1.0, Mask(1, 1): 2.0})
        with pytest.raises(InvalidArgumentError):
            run(RunConfig(vf=vf, alpha=2.0))

    def test_save_dir_persists_artifacts(self, tmp_path):
        out = tmp_path / "artifacts"
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=2.0,
            test_masks=60,
            grid=small_grid(),
            seed=4,
            save_dir=str(out),
        )
        run(config)
        for name in ("train.jsonl", "test.jsonl", "model.json", "spectrum.jsonl"):
            assert (out / name).exists()

    def test_metrics_csv_shape(self):
        config = RunConfig(
            vf=tree_table_provider(),
            alpha=2.0,
            test_masks=60,
            grid=small_grid(),
            seed=5,
            hierarchy_ks=[3],
        )
        report = run(config)
        lines = report.metrics_csv().strip().splitlines()
        assert lines[0] == "name,value,params"
        assert any(line.startswith("dsr,") for line in lines)

    def test_alpha_validation(self):
        with pytest.raises(InvalidArgumentError):
            RunConfig(vf=tree_table_provider(), alpha=0.0)
