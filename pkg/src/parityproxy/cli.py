"""Command-line surface. Every subcommand is a thin adapter over library
calls: arguments in, files or stdout out, no numeric logic of its own.

Exit codes: 0 success, 1 usage error, 2 runtime error. Runtime errors emit
one JSON object on stderr ({"error": class, "message": text}) so harnesses
can parse failures. --seed is honored wherever randomness exists;
--threads (or SPEX_THREADS) caps worker parallelism passed to modules.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .errors import EngineError
from .identify import most_influential_removal, build_program, solve
from .indices import PER_FEATURE_KINDS, SET_KINDS, index_report
from .masks import (
    MaskDataset,
    evaluate_dataset,
    load_mask_list,
    load_value_function,
    sample_masks,
    save_mask_list,
)
from .metrics import dsr, hierarchy_rate, r2, top_k_family
from .pipeline import config_from_dict, run
from .proxy import cross_validate, desk_grid, full_grid, load_model, save_model
from .extract import extract_model
from .spectrum import load_spectrum, refine, save_spectrum, sparsify
from .synth import DEFAULT_CARDINALITY, DEFAULT_NUM_SETS, SyntheticSpec, make_synthetic


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _write_or_print(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _cmd_sample(args):
    masks = sample_masks(args.n, args.count, args.seed)
    save_mask_list(args.out, args.n, masks)
    return 0


def _cmd_eval(args):
    vf = load_value_function(args.vf)
    try:
        if args.masks:
            _, masks = load_mask_list(args.masks)
        else:
            masks = sample_masks(vf.n, args.count, args.seed)
        data = evaluate_dataset(vf, masks, args.batch)
        data.save(args.out)
    finally:
        vf.close()
    return 0


def _cmd_fit(args):
    data = MaskDataset.load(args.data)
    grid = full_grid() if args.grid == "full" else desk_grid()
    best, model = cross_validate(data, grid, seed=args.seed)
    save_model(args.out, model)
    print(
        json.dumps(
            {
                "max_depth": best.max_depth,
                "num_trees": best.num_trees,
                "learning_rate": best.learning_rate,
            }
        )
    )
    return 0


def _cmd_extract(args):
    model = load_model(args.model)
    save_spectrum(args.out, extract_model(model))
    return 0


def _cmd_sparsify(args):
    spec = load_spectrum(args.spectrum)
    save_spectrum(args.out, sparsify(spec, args.k))
    return 0


def _cmd_refine(args):
    spec = load_spectrum(args.spectrum)
    data = MaskDataset.load(args.data)
    result = refine(spec, data, folds=args.folds, seed=args.seed)
    save_spectrum(args.out, result.spectrum)
    print(
        json.dumps(
            {
                "accepted": result.accepted,
                "cv_mse_refined": result.cv_mse_refined,
                "cv_mse_original": result.cv_mse_original,
            }
        )
    )
    return 0


def _cmd_convert(args):
    spec = load_spectrum(args.spectrum)
    report = index_report(spec, args.index, args.order)
    if args.format == "csv":
        lines = ["set,value"]
        for entry in report.to_dict()["entries"]:
            lines.append("{},{}".format(" ".join(map(str, entry["set"])), repr(entry["value"])))
        _write_or_print("\n".join(lines), args.out)
    else:
        _write_or_print(json.dumps(report.to_dict(), indent=2), args.out)
    return 0


def _cmd_identify(args):
    spec = load_spectrum(args.spectrum)
    if args.direction == "influence":
        res = most_influential_removal(
            spec, args.remove, method=args.method, max_nodes=args.max_nodes
        )
        sol, direction = res.solution, res.direction
        extra = {"surrogate_delta": res.surrogate_delta}
    else:
        program = build_program(spec, args.remove, args.direction)
        sol, direction = solve(program, args.method, args.max_nodes), args.direction
        extra = {}
    doc = {
        "retained_set": list(sol.mask.indices()),
        "objective": sol.objective,
        "direction": direction,
        "optimality": sol.optimality,
        "nodes_explored": sol.nodes_explored,
        **extra,
    }
    _write_or_print(json.dumps(doc, indent=2), args.out)
    return 0


def _cmd_metrics(args):
    spec = load_spectrum(args.spectrum)
    rows = []
    for k in args.k:
        _, eff = top_k_family(spec, k)
        rows.append(("dsr", dsr(spec, k), {"k": k, "effective_k": eff}))
        rows.append(("scr", hierarchy_rate(spec, k, "scr"), {"k": k, "effective_k": eff}))
        rows.append(("shr", hierarchy_rate(spec, k, "shr"), {"k": k, "effective_k": eff}))
    if args.data:
        data = MaskDataset.load(args.data)
        pred = spec.evaluate_batch(data.masks())
        rows.append(("r2", r2(pred, data.values()), {"samples": len(data)}))
    if args.format == "csv":
        lines = ["name,value,params"]
        for name, value, params in rows:
            p = ";".join(f"{k}={v}" for k, v in sorted(params.items()))
            lines.append(f"{name},{value!r},{p}")
        _write_or_print("\n".join(lines), args.out)
    else:
        doc = [
            {"name": name, "value": value, "params": params}
            for name, value, params in rows
        ]
        _write_or_print(json.dumps(doc, indent=2), args.out)
    return 0


def _cmd_synth(args):
    spec = SyntheticSpec(
        family=args.family,
        n=args.n,
        num_sets=args.num_sets,
        cardinality=args.cardinality,
        seed=args.seed,
    )
    _, truth = make_synthetic(spec)
    provider = {
        "kind": "synthetic",
        "family": args.family,
        "n": args.n,
        "num_sets": args.num_sets,
        "cardinality": args.cardinality,
        "seed": args.seed,
    }
    with open(args.out, "w") as fh:
        json.dump(provider, fh, indent=2)
    if args.truth_out:
        save_spectrum(args.truth_out, truth)
    return 0


def _cmd_run(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    # explicit flags override config-file values
    overrides = {
        "vf": args.vf,
        "alpha": args.alpha,
        "test_masks": args.test_masks,
        "k": args.k,
        "grid": args.grid,
        "seed": args.seed,
        "batch_size": args.batch,
        "save_dir": args.save_dir,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if args.no_refine:
        doc["refine"] = False
    if args.baseline_lasso:
        doc["baseline_lasso"] = True
    if args.baseline_kernel_shap:
        doc["baseline_kernel_shap"] = True
    if args.hierarchy_k:
        doc["hierarchy_ks"] = args.hierarchy_k
    if args.indices:
        doc["indices"] = args.indices
    if args.identify:
        doc["identify_removals"] = args.identify
    report = run(config_from_dict(doc))
    report.save(args.report)
    if args.metrics_csv:
        with open(args.metrics_csv, "w") as fh:
            fh.write(report.metrics_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parityproxy", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SPEX_THREADS", "0")) or None,
        help="cap worker parallelism (currently advisory; modules are "
        "sequential)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw uniform masks to a mask-list file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("eval", help="query a value function over masks")
    p.add_argument("--vf", required=True, help="provider description JSON")
    p.add_argument("--masks", help="mask-list file; omit to sample fresh")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("fit", help="cross-validate and fit the tree ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", choices=["desk", "full"], default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("extract", help="exact spectrum of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("sparsify", help="keep the k largest coefficients")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sparsify)

    p = sub.add_parser("refine", help="least-squares coefficient refinement")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("convert", help="attribution indices from a spectrum")
    p.add_argument("--spectrum", required=True)
    p.add_argument(
        "--index", required=True, choices=list(PER_FEATURE_KINDS) + list(SET_KINDS)
    )
    p.add_argument("--order", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("identify", help="optimal feature removal on the surrogate")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--remove", type=int, required=True)
    p.add_argument("--method", choices=["brute", "bnb"], default="bnb")
    p.add_argument(
        "--direction", choices=["max", "min", "influence"], default="influence"
    )
    p.add_argument("--max-nodes", type=int, default=10**6)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("metrics", help="hierarchy and faithfulness metrics")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--k", type=int, nargs="*", default=[])
    p.add_argument("--data", help="dataset for spectrum R2")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("synth", help="write a synthetic provider description")
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--num-sets", type=int, default=DEFAULT_NUM_SETS)
    p.add_argument("--cardinality", type=int, default=DEFAULT_CARDINALITY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("run", help="full sample/fit/extract/score run")
    p.add_argument("--config", help="JSON run config; explicit flags override")
    p.add_argument("--vf", help="provider description JSON path")
    p.add_argument("--alpha", type=float)
    p.add_argument("--test-masks", type=int, dest="test_masks")
    p.add_argument("--k", type=int)
    p.add_argument("--grid", choices=["desk", "full"])
    p.add_argument("--seed", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--baseline-lasso", action="store_true")
    p.add_argument("--baseline-kernel-shap", action="store_true")
    p.add_argument("--hierarchy-k", type=int, nargs="*", default=[])
    p.add_argument(
        "--indices",
        nargs="*",
        default=[],
        help="index kinds, order-bounded ones as kind:order",
    )
    p.add_argument("--identify", type=int, nargs="*", default=[])
    p.add_argument("--save-dir")
    p.add_argument("--metrics-csv")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(
            json.dumps({"error": "UsageError", "message": str(exc)}) + "\n"
        )
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except EngineError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 2
    except OSError as exc:
        sys.stderr.write(
            json.dumps({"error": "OSError", "message": str(exc)}) + "\n"
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
