"""Edge malware detection from power traces.

Pipeline: synthesize or acquire a power trace (`trace`, `synth`),
extract sliding-window Welch PSD features (`psd`), train a small
autoencoder on healthy features (`autoencoder`), flag anomalies with a
two-threshold rule (`detector`), score labeled runs (`evaluation`),
and ship verdicts from edge agents to a collector (`netmon`). The
`paella` executable (`cli`) exposes each stage as a subcommand.
"""

from .autoencoder import (
    ACTIVATIONS,
    LAYER_DIMS,
    AeModel,
    StandardizerState,
    TrainConfig,
    adagrad_step,
    batch_loss,
    fit_standardizer,
    forward,
    gradients,
    load_model,
    loss,
    save_model,
    standardize,
    train,
)
from .detector import (
    BatchVerdict,
    DetectorConfig,
    batch_decision,
    calibrate_threshold,
    classify_psd,
    reconstruction_error,
    reconstruction_errors,
    replay,
    run_stream,
)
from .errors import (
    FeatureFormatError,
    ModelFormatError,
    PaellaError,
    TraceFormatError,
    TransportError,
)
from .evaluation import (
    EvalReport,
    LabeledRun,
    SplitSpec,
    build_report,
    classify_run,
    rates,
    report_to_csv,
    report_to_text,
    split_runs,
    weighted_f1,
)
from .psd import (
    FeatureMatrix,
    PsdFeature,
    WelchConfig,
    feature_matrix,
    fft_real,
    read_features,
    sliding_psd,
    welch_psd,
    write_features,
)
from .synth import (
    PulseTrainSpec,
    SignatureSpec,
    gaussian_noise,
    gen_pulse_train,
    gen_signature,
    perturb,
    quantize_12bit,
)
from .trace import (
    DEFAULT_SAMPLE_RATE_HZ,
    DecimationSpec,
    PowerTrace,
    decimate_avg,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "LAYER_DIMS",
    "DEFAULT_SAMPLE_RATE_HZ",
    "AeModel",
    "BatchVerdict",
    "DecimationSpec",
    "DetectorConfig",
    "EvalReport",
    "FeatureFormatError",
    "FeatureMatrix",
    "LabeledRun",
    "ModelFormatError",
    "PaellaError",
    "PowerTrace",
    "PsdFeature",
    "PulseTrainSpec",
    "SignatureSpec",
    "SplitSpec",
    "StandardizerState",
    "TraceFormatError",
    "TrainConfig",
    "TransportError",
    "WelchConfig",
    "adagrad_step",
    "batch_decision",
    "batch_loss",
    "build_report",
    "calibrate_threshold",
    "classify_psd",
    "classify_run",
    "decimate_avg",
    "feature_matrix",
    "fft_real",
    "fit_standardizer",
    "forward",
    "gaussian_noise",
    "gen_pulse_train",
    "gen_signature",
    "gradients",
    "load_model",
    "loss",
    "perturb",
    "quantize_12bit",
    "rates",
    "read_features",
    "read_trace",
    "reconstruction_error",
    "reconstruction_errors",
    "replay",
    "report_to_csv",
    "report_to_text",
    "run_stream",
    "save_model",
    "sliding_psd",
    "split_runs",
    "standardize",
    "train",
    "weighted_f1",
    "welch_psd",
    "write_features",
    "write_trace",
]
