"""End-to-end orchestration: sample, query, fit, extract, sparsify, refine,
then answer the requested metric/index/identification queries.

A run is a pure function of (config, seed): the report it produces is
byte-identical across repeats except for the timings block. Query budgets
are accounted explicitly; the core run spends exactly train + test queries,
and optional extras (kernel-SHAP baseline, true-output removal checks) are
itemized separately.
"""

from __future__ import annotations

import json
import math
import os
import time
from collections.abc import Mapping, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field

from . import __version__
from .errors import EngineError, InvalidArgumentError
from .masks import (
    GENERATOR_NAME,
    ValueFunction,
    evaluate_dataset,
    make_value_function,
    sample_masks,
    subseed,
)
from .extract import EXTRACTION_DEPTH_CAP, extract_model
from .identify import most_influential_removal
from .indices import index_report
from .metrics import delta_output, dsr, hierarchy_rate, r2, top_k_family
from .proxy import (
    FitConfig,
    cross_validate,
    desk_grid,
    fit_lasso,
    kernel_shap,
    predict_batch,
    save_model,
)
from .spectrum import refine, save_spectrum, sparsify

DEFAULT_TEST_MASKS = 1000
DEFAULT_SPARSITY = 200


@dataclass
class RunConfig:
    """Everything a run needs; see the CLI for the file-level mirror.

    vf is either a provider description (dict) or an already-built
    ValueFunction. Training masks number ceil(alpha * n * log2(n)).
    """

    vf: Mapping | ValueFunction
    alpha: float
    test_masks: int = DEFAULT_TEST_MASKS
    grid: list[FitConfig] | None = None
    k: int = DEFAULT_SPARSITY
    refine_step: bool = True
    seed: int = 0
    batch_size: int = 256
    baseline_lasso: bool = False
    baseline_kernel_shap: bool = False
    hierarchy_ks: list[int] = field(default_factory=list)
    index_queries: list[tuple[str, int | None]] = field(default_factory=list)
    identify_removals: list[int] = field(default_factory=list)
    identify_method: str = "bnb"
    save_dir: str | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidArgumentError("alpha must be positive")
        if self.test_masks < 1:
            raise InvalidArgumentError("test_masks must be >= 1")


@dataclass
class RunReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def without_timings(self) -> dict:
        out = dict(self.data)
        out.pop("timings", None)
        return out

    def metrics_csv(self) -> str:
        lines = ["name,value,params"]
        for row in self.data.get("metrics", []):
            params = ";".join(f"{k}={v}" for k, v in sorted(row["params"].items()))
            value = "" if row["value"] is None else repr(row["value"])
            lines.append(f"{row['name']},{value},{params}")
        return "\n".join(lines) + "\n"


def _parse_index_items(items) -> list[tuple[str, int | None]]:
    out = []
    for item in items:
        if isinstance(item, str) and ":" in item:
            kind, order = item.split(":", 1)
            out.append((kind, int(order)))
        elif isinstance(item, (list, tuple)):
            kind, order = item
            out.append((str(kind), None if order is None else int(order)))
        else:
            out.append((str(item), None))
    return out


def config_from_dict(doc: Mapping) -> RunConfig:
    """Build a RunConfig from the documented key/value config format.

    Keys mirror RunConfig: vf (inline provider description or a path to a
    provider JSON file), alpha, test_masks, k, grid ("desk", "full", or a
    list of {max_depth, num_trees, learning_rate, min_leaf, folds}),
    refine, seed, batch_size, baseline_lasso, baseline_kernel_shap,
    hierarchy_ks, indices (["shapley", "faith_banzhaf:2", ...]),
    identify_removals, identify_method, save_dir.
    """
    from .errors import ConfigError
    from .proxy import full_grid

    if "vf" not in doc or "alpha" not in doc:
        raise ConfigError("run config needs at least 'vf' and 'alpha'")
    vf = doc["vf"]
    if isinstance(vf, str):
        with open(vf) as fh:
            vf = json.load(fh)

    grid = doc.get("grid", "desk")
    if grid == "desk":
        grid = desk_grid()
    elif grid == "full":
        grid = full_grid()
    elif isinstance(grid, (list, tuple)):
        grid = [FitConfig(**entry) for entry in grid]
    else:
        raise ConfigError(f"unknown grid spec {grid!r}")

    return RunConfig(
        vf=vf,
        alpha=float(doc["alpha"]),
        test_masks=int(doc.get("test_masks", DEFAULT_TEST_MASKS)),
        grid=grid,
        k=int(doc.get("k", DEFAULT_SPARSITY)),
        refine_step=bool(doc.get("refine", True)),
        seed=int(doc.get("seed", 0)),
        batch_size=int(doc.get("batch_size", 256)),
        baseline_lasso=bool(doc.get("baseline_lasso", False)),
        baseline_kernel_shap=bool(doc.get("baseline_kernel_shap", False)),
        hierarchy_ks=[int(k) for k in doc.get("hierarchy_ks", [])],
        index_queries=_parse_index_items(doc.get("indices", [])),
        identify_removals=[int(r) for r in doc.get("identify_removals", [])],
        identify_method=str(doc.get("identify_method", "bnb")),
        save_dir=doc.get("save_dir"),
    )


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except EngineError as exc:
        exc.args = (f"[stage {name}] {exc.args[0] if exc.args else ''}",)
        raise
    finally:
        timings[name] = time.perf_counter() - start


def _metric_row(name: str, value: float, params: dict, counts: dict | None = None):
    nanable = isinstance(value, float) and math.isnan(value)
    return {
        "name": name,
        "value": None if nanable else value,
        "undefined": nanable,
        "params": params,
        "sample_counts": counts or {},
    }


def _cap_grid(grid: Sequence[FitConfig]) -> tuple[list[FitConfig], bool]:
    """Extraction needs depth <= cap, so unbounded/over-cap grid entries are
    capped at fitting time; the report records that this happened."""
    capped = []
    changed = False
    for cfg in grid:
        if cfg.max_depth is None or cfg.max_depth > EXTRACTION_DEPTH_CAP:
            capped.append(
                FitConfig(
                    max_depth=EXTRACTION_DEPTH_CAP,
                    num_trees=cfg.num_trees,
                    learning_rate=cfg.learning_rate,
                    min_leaf=cfg.min_leaf,
                    folds=cfg.folds,
                )
            )
            changed = True
        else:
            capped.append(cfg)
    return capped, changed


def run(config: RunConfig) -> RunReport:
    timings: dict[str, float] = {}
    report: dict = {
        "engine_version": __version__,
        "rng": GENERATOR_NAME,
        "seed": config.seed,
    }

    vf = (
        make_value_function(config.vf)
        if isinstance(config.vf, Mapping)
        else config.vf
    )
    n = vf.n
    if n < 2:
        raise InvalidArgumentError("pipeline needs n >= 2")
    report["n"] = n

    seeds = {
        "train_masks": subseed(config.seed, 0),
        "test_masks": subseed(config.seed, 1),
        "cv": subseed(config.seed, 2),
        "refine": subseed(config.seed, 3),
        "kernel_shap": subseed(config.seed, 4),
    }
    report["stage_seeds"] = seeds

    train_count = math.ceil(config.alpha * n * math.log2(n))
    report["config"] = {
        "alpha": config.alpha,
        "k": config.k,
        "train_masks": train_count,
        "test_masks": config.test_masks,
        "refine": config.refine_step,
        "batch_size": config.batch_size,
        "identify_method": config.identify_method,
    }

    with _stage("sample_and_query", timings):
        train_masks = sample_masks(n, train_count, seeds["train_masks"])
        train = evaluate_dataset(vf, train_masks, config.batch_size)
        test_masks_ = sample_masks(n, config.test_masks, seeds["test_masks"])
        test = evaluate_dataset(vf, test_masks_, config.batch_size)
    y_train = train.values()
    y_test = test.values()
    report["train_values"] = {
        "mean": float(y_train.mean()),
        "variance": float(y_train.var()),
    }
    queries = {"train": train_count, "test": config.test_masks}

    with _stage("fit", timings):
        grid = config.grid if config.grid is not None else desk_grid()
        grid, depth_capped = _cap_grid(grid)
        scores: list[float] = []
        best_cfg, model = cross_validate(train, grid, seeds["cv"], scores)
    report["gbt"] = {
        "depth_capped_for_extraction": depth_capped,
        "chosen": {
            "max_depth": best_cfg.max_depth,
            "num_trees": best_cfg.num_trees,
            "learning_rate": best_cfg.learning_rate,
            "min_leaf": best_cfg.min_leaf,
            "folds": best_cfg.folds,
        },
        "cv_mse": scores,
        "grid": [
            {
                "max_depth": c.max_depth,
                "num_trees": c.num_trees,
                "learning_rate": c.learning_rate,
            }
            for c in grid
        ],
    }

    with _stage("extract", timings):
        full_spec = extract_model(model)
        sparse_spec = sparsify(full_spec, config.k)
    report["support"] = {
        "extracted": len(full_spec),
        "sparsified": len(sparse_spec),
    }

    final_spec = sparse_spec
    if not config.refine_step:
        report["refine"] = {"accepted": False, "skipped": True}
    elif len(sparse_spec) > len(train):
        # OLS needs at least as many samples as coefficients
        report["refine"] = {
            "accepted": False,
            "skipped": True,
            "reason": "support_exceeds_samples",
        }
    else:
        with _stage("refine", timings):
            res = refine(sparse_spec, train, folds=5, seed=seeds["refine"])
        final_spec = res.spectrum
        report["refine"] = {
            "accepted": res.accepted,
            "cv_mse_refined": res.cv_mse_refined,
            "cv_mse_original": res.cv_mse_original,
        }

    with _stage("score", timings):
        pred_train_gbt = predict_batch(model, train_masks)
        pred_test_gbt = predict_batch(model, test_masks_)
        pred_train_spec = final_spec.evaluate_batch(train_masks)
        pred_test_spec = final_spec.evaluate_batch(test_masks_)
        rows = [
            _metric_row("r2_train_gbt", r2(pred_train_gbt, y_train), {}),
            _metric_row("r2_test_gbt", r2(pred_test_gbt, y_test), {}),
            _metric_row("r2_train_spectrum", r2(pred_train_spec, y_train), {}),
            _metric_row("r2_test_spectrum", r2(pred_test_spec, y_test), {}),
        ]
        for k in config.hierarchy_ks:
            _, eff = top_k_family(final_spec, k)
            params = {"k": k, "effective_k": eff}
            rows.append(_metric_row("dsr", dsr(final_spec, k), params))
            rows.append(
                _metric_row("scr", hierarchy_rate(final_spec, k, "scr"), params)
            )
            rows.append(
                _metric_row("shr", hierarchy_rate(final_spec, k, "shr"), params)
            )

    if config.baseline_lasso:
        with _stage("baseline_lasso", timings):
            lasso_spec = fit_lasso(train)
            pred_test_lasso = lasso_spec.evaluate_batch(test_masks_)
            rows.append(
                _metric_row("r2_test_lasso", r2(pred_test_lasso, y_test), {})
            )
            report["lasso_support"] = len(lasso_spec)

    if config.baseline_kernel_shap:
        with _stage("baseline_kernel_shap", timings):
            estimates = kernel_shap(vf, train_count, seeds["kernel_shap"])
        report["kernel_shap_baseline"] = [float(v) for v in estimates]
        queries["kernel_shap_baseline"] = train_count

    report["metrics"] = rows

    if config.index_queries:
        with _stage("indices", timings):
            report["indices"] = [
                index_report(final_spec, kind, order).to_dict()
                for kind, order in config.index_queries
            ]

    if config.identify_removals:
        with _stage("identify", timings):
            ident_rows = []
            for r in config.identify_removals:
                res = most_influential_removal(
                    final_spec, r, method=config.identify_method
                )
                true_delta = delta_output(vf, res.solution.mask)
                queries["identify"] = queries.get("identify", 0) + 2
                ident_rows.append(
                    {
                        "removed": r,
                        "retained_set": list(res.solution.mask.indices()),
                        "direction": res.direction,
                        "surrogate_objective": res.solution.objective,
                        "surrogate_delta": res.surrogate_delta,
                        "optimality": res.solution.optimality,
                        "nodes_explored": res.solution.nodes_explored,
                        "true_delta_output": None
                        if math.isnan(true_delta)
                        else true_delta,
                    }
                )
            report["identification"] = ident_rows

    queries["total_core"] = queries["train"] + queries["test"]
    report["queries"] = queries

    if config.save_dir is not None:
        os.makedirs(config.save_dir, exist_ok=True)
        train.save(os.path.join(config.save_dir, "train.jsonl"))
        test.save(os.path.join(config.save_dir, "test.jsonl"))
        save_model(os.path.join(config.save_dir, "model.json"), model)
        save_spectrum(os.path.join(config.save_dir, "spectrum.jsonl"), final_spec)

    report["timings"] = timings
    return RunReport(report)
