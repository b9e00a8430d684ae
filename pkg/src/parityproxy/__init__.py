"""Sparse Boolean-Fourier surrogates for black-box set functions.

Fit a gradient boosted tree proxy to masked queries of any real-valued set
function, extract its exact sparse spectrum, and answer attribution
queries: interaction indices, Shapley values, influential-feature
identification, and hierarchy diagnostics.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    EngineError,
    InvalidArgumentError,
    ProviderError,
)
from .masks import (
    Mask,
    MaskDataset,
    ValueFunction,
    evaluate_dataset,
    make_value_function,
    sample_masks,
)
from .spectrum import (
    FourierSpectrum,
    MobiusSpectrum,
    exact_transform,
    fourier_to_mobius,
    load_spectrum,
    refine,
    save_spectrum,
    sparsify,
)
from .proxy import (
    FitConfig,
    GbtModel,
    RegressionTree,
    cross_validate,
    desk_grid,
    fit_gbt,
    fit_lasso,
    full_grid,
    kernel_shap,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from .extract import extract_model, extract_tree
from .indices import IndexReport, feature_index, index_report, interaction_index, shapley
from .identify import (
    IdentProgram,
    IdentSolution,
    build_program,
    most_influential_removal,
    solve,
)
from .metrics import compare_shapley, delta_output, dsr, hierarchy_rate, r2
from .synth import SyntheticSpec, make_synthetic
from .pipeline import RunConfig, RunReport, run

__all__ = [
    "CapacityError",
    "ConfigError",
    "EngineError",
    "FitConfig",
    "FourierSpectrum",
    "GbtModel",
    "IdentProgram",
    "IdentSolution",
    "IndexReport",
    "InvalidArgumentError",
    "Mask",
    "MaskDataset",
    "MobiusSpectrum",
    "ProviderError",
    "RegressionTree",
    "RunConfig",
    "RunReport",
    "SyntheticSpec",
    "ValueFunction",
    "build_program",
    "compare_shapley",
    "cross_validate",
    "delta_output",
    "desk_grid",
    "dsr",
    "evaluate_dataset",
    "exact_transform",
    "extract_model",
    "extract_tree",
    "feature_index",
    "fit_gbt",
    "fit_lasso",
    "fourier_to_mobius",
    "full_grid",
    "hierarchy_rate",
    "index_report",
    "interaction_index",
    "kernel_shap",
    "load_model",
    "load_spectrum",
    "make_synthetic",
    "make_value_function",
    "most_influential_removal",
    "predict",
    "predict_batch",
    "r2",
    "refine",
    "run",
    "sample_masks",
    "save_model",
    "save_spectrum",
    "shapley",
    "solve",
    "sparsify",
]
