"""Underwater acoustic localization against aerial semantic maps.

A particle filter matches forward-looking sonar frames against
pose-conditioned polar crops of a segmented aerial map; a deterministic
simulator and an evaluation harness reproduce the filter-versus-dead-reckoning
comparison end to end.
"""

from .filtering import (
    Belief,
    ControlInput,
    FilterConfig,
    estimate,
    init,
    predict,
    resample,
    update,
)
from .geomap import (
    MOVABLE,
    STRUCTURE,
    UNKNOWN,
    WATER,
    CropImage,
    MapFormatError,
    Pose2D,
    PoseValidity,
    SemanticMap,
    SonarFootprint,
    crop_from_pose,
    load_semantic_map,
    pose_validity,
    save_semantic_map,
    wrap_angle,
)
from .harness import RunResult, evaluate, run_localization, write_metrics_csv
from .logs import MessageLog, load_message_log, save_message_log
from .matcher import (
    DimensionMismatch,
    EmptyInput,
    MissingGroundTruth,
    baseline_scorer,
    normalize_scores,
    oracle_scorer,
)
from .simulator import (
    EmptyLog,
    InvalidSpec,
    InvalidTrajectory,
    NoiseSpec,
    WorldSpec,
    dead_reckoning,
    generate_world,
    render_sonar,
    simulate_run,
)
from .sonar import (
    AcousticImage,
    DegenerateCloud,
    RigidTransform2D,
    enhance,
    extract_centroids,
    icp_align,
    is_informative,
    load_acoustic_frame,
    save_acoustic_frame,
)

__version__ = "0.1.0"
