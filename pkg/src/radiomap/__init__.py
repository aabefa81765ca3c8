"""Radio map estimation toolkit."""

from .core import (
    CombiningMode,
    EmptyPatchError,
    EstimationInstance,
    GridSpec,
    Location,
    MeasurementSet,
    ObservationSplit,
    Patch,
    QuantizedGrid,
    admissible_corners,
    grid_point_location,
    quantize,
    sample_patch,
    split_clustered,
    split_uniform,
)
from .evaluation import MetricKind, MetricReport, normalized_density, run_sweep
from .synth import GroundTruthMap, PropagationConfig, generate_map, sample_measurements, synthetic_set

__version__ = "0.1.0"
