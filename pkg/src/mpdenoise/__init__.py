"""Low-rank matrix denoising under Marchenko-Pastur noise."""

from .bench import __version__, run_experiment
from .config import ExperimentConfig, load_config, load_preset, parse_config
from .denoise import (
    detect_q,
    estimate_noise,
    rie_denoise,
    shrink_singular_value,
    stepwise_svd,
    tsvd_denoise,
)
from .errors import ConfigError, DegenerateError, DomainError, MatrixFileError
from .linalg import full_svd, two_means_1d
from .matrixio import load_matrix, store_matrix
from .spectral import (
    AspectRatio,
    a1,
    a2,
    critical_strength,
    edges,
    m1c,
    m2c,
    p_inverse,
    p_of_d,
    t_product,
    t_real,
)
from .synth import NoiseSpec, SignalSpec, assemble

__all__ = [
    "__version__", "run_experiment", "ExperimentConfig", "load_config", "load_preset", "parse_config",
    "detect_q", "estimate_noise", "rie_denoise", "shrink_singular_value", "stepwise_svd", "tsvd_denoise",
    "ConfigError", "DegenerateError", "DomainError", "MatrixFileError", "full_svd", "two_means_1d",
    "load_matrix", "store_matrix", "AspectRatio", "a1", "a2", "critical_strength", "edges", "m1c", "m2c",
    "p_inverse", "p_of_d", "t_product", "t_real", "NoiseSpec", "SignalSpec", "assemble",
]
