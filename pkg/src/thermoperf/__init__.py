"""Predict and check how well a heated tactile sensor can tell materials apart by effusivity."""
from .calib import FitConfig, FitResult, SensorCalibration, calibrate_sensor, fit_material, residual_sse
from .empirical import (
    CVResult,
    FeatureVector,
    cross_validate,
    empirical_matrix,
    extract_features,
    mc_oracle_f1,
    train_eval_pair,
)
from .errors import (
    DatabaseParseError,
    DatabaseValidationError,
    DegenerateNormalizationError,
    DimensionError,
    DomainError,
    EmptyTraceError,
    FitConvergenceError,
    QuadratureError,
    RangeError,
    SeriesConvergenceError,
    StratificationError,
    ThermoperfError,
)
from .heatsim import (
    ContactConditions,
    MaterialSample,
    SensorParams,
    TemperatureTrace,
    TraceMeta,
    generate_trace,
    mean_temperature,
    normalize_trace,
    read_trace,
    surface_temperature,
    write_trace,
)
from .matdb import Category, MaterialDatabase, MaterialRecord, builtin_appendix_table, load_database
from .perfmodel import (
    BinaryMap,
    EffusivityGrid,
    F1Matrix,
    MinDifference,
    binary_map,
    build_node_graph,
    f1_matrix,
    f1_pair,
    material_pair_avg_f1,
    matrix_match,
    min_distinguishable_difference,
    noncentrality_lambda,
    to_dot,
)
from .specfun import SeriesTolerance, erfc, noncentral_f_cdf, reg_inc_beta

__version__ = "0.1.0"
