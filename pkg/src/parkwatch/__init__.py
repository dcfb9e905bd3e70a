"""Cross-dataset parking-space occupancy classification."""

from .augment import AugmentParams, augment_batch
from .backbones import (
    BackboneSpec,
    ModelHandle,
    build_model,
    count_params,
    default_spec,
    load_model,
    predict_proba,
    save_model,
)
from .errors import DataError, ParkwatchError, RuntimeFailure
from .evaluation import EvalCell, EvalReport, aggregate_runs, evaluate_framework, render_report
from .fusion import (
    MetaModel,
    Pool,
    build_single_model,
    dynse_predict,
    majority_vote,
    posterior_vector,
    stacking_predict,
    train_dynse_selector,
    train_pool,
    train_stacking_meta,
)
from .geometry import SpotGeometry, SpotMap, crop_spot
from .records import (
    DatasetIndex,
    SampleRecord,
    read_manifest,
    write_manifest,
)
from .splits import ScenarioSplit, balance_classes, temporal_split
from .training import TrainConfig, TrainRun, run_seeds, train

__version__ = "0.1.0"
