"""simodec: exact joint ML channel estimation and non-coherent data
detection for massive SIMO block-fading channels, with pilot-based baseline
detectors and a reproducible Monte Carlo harness."""

__version__ = "0.1.0"

from .baselines import BaselineKind, Estimator, coherent_detect, iterative_detect, pilot_estimate
from .decoder import (
    DecodeResult,
    FailureAction,
    RadiusPolicy,
    SearchMatrix,
    build_search_matrix,
    estimate_channel,
    exhaustive_ml,
    partial_metric,
    search_matrix_from_gram,
    sphere_decode,
)
from .experiments import (
    ComplexityTable,
    ExperimentConfig,
    SerTable,
    oracle_check,
    run_complexity,
    run_ser_sweep,
    validate_asymptotics,
)
from .model import (
    BPSK,
    QAM4,
    Constellation,
    ObservationBlock,
    generate_block,
    get_constellation,
    quantize,
    snr_to_noise_var,
)
from .numerics import NotPositiveSemidefiniteError, cholesky_psd, gram, max_eigenvalue
