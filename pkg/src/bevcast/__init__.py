"""bevcast: bird's-eye-view trajectory forecasting for highway recordings.

Pipeline: tabular track recordings (or synthetic scenes) are rasterized into
TV-centered occupancy images, encoded patch-by-patch into a social tensor,
pooled into a context vector, and decoded into 31 per-step bivariate Gaussian
distributions over the target vehicle's future positions.
"""

from __future__ import annotations

from .decoder import (
    GaussianDecoder,
    GaussianParams,
    GaussianSequence,
    decode,
    nll,
    predicted_means,
)
from .encoder import PatchEncoder, encode_patch, encode_scene
from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    EvaluationError,
    FormatError,
    GenerationError,
    IntegrityError,
    NumericError,
    PipelineError,
    RangeError,
    ShapeError,
    SplitError,
)
from .evaluation import (
    HorizonReport,
    constant_position_baseline,
    constant_velocity_baseline,
    horizon_step,
    render_report,
    rmse_per_horizon,
)
from .raster import (
    GridSpec,
    RoiBox,
    SceneRaster,
    area_resize,
    assemble_grid,
    compute_roi,
    partition_grid,
    rasterize_frame,
    render_preview,
)
from .social import SocialPool, pool_social
from .synthetic import SceneSpec, SyntheticScene, generate_scene, oracle_future, write_scene
from .tracks import (
    RecordingMeta,
    Track,
    VehicleState,
    filter_direction,
    meters_to_pixels,
    parse_recording_meta,
    parse_tracks,
    select_target_vehicles,
)
from .training import (
    Checkpoint,
    Forecaster,
    TrainConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .windows import Window, extract_corpus, extract_window, load_window, save_window, split_dataset

__version__ = "0.1.0"
