"""Event-camera table tennis: perception pipeline and one-step return learner.

Public surface: event stream types and IO, the synthetic scene oracle, the
five-stage ball detector, stereo triangulation and trajectory prediction,
the rally environment, the DDPG-style learner with curriculum training, and
scoring utilities. The ``evpong`` CLI exposes the same pieces as subcommands.
"""

from .ballistics import GRAVITY, FlightPath, simulate_flight
from .detect import (
    BallDetection2D,
    BallDetector,
    ClusterFeatures,
    DetectConfig,
    cluster,
    dbscan_labels,
    denoise,
    detect_step,
    geometric_verify,
    localize,
    min_enclosing_circle,
    polarity_filter,
)
from .env import (
    BallState,
    EnvConfig,
    LandingOutcome,
    ServeResult,
    classify_landing,
    serve,
    strike,
    whiff_outcome,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateGeometryError,
    DivergedTrainingError,
    EventFormatError,
    EvpongError,
    InsufficientDataError,
    NoInterceptError,
    OrderingError,
)
from .events import (
    Event,
    EventArray,
    EventBatch,
    Roi,
    clip_to_roi,
    read_events_binary,
    read_events_csv,
    read_event_stream,
    window_event_array,
    window_events,
    write_events_binary,
    write_events_csv,
)
from .geometry import (
    BallisticParams,
    BallObservation3D,
    CameraModel,
    HitState,
    Ray,
    StereoRig,
    TrajectoryPredictor,
    detect_bounce,
    fit_trajectory,
    look_at_camera,
    pixel_to_ray,
    predict_hit,
    standard_rig,
    triangulate,
    two_stage_hit_state,
)
from .learner import (
    AgentParams,
    CurriculumStage,
    DdpgAgent,
    EpisodeRecord,
    ExplorationSchedule,
    ReplayBuffer,
    RewardConfig,
    Transition,
    action_to_quaternion,
    cdta_reward,
    cdta_weights,
    evaluate_policy,
    exploration_noise,
    load_checkpoint,
    migrate_buffer,
    save_checkpoint,
    simple_reward,
    train_curriculum,
)
from .metrics import DetectionScore, TrainingScore, score_detections, score_training
from .synth import (
    CapsuleDistractor,
    GroundTruthLabel,
    RectDistractor,
    SceneRender,
    SceneSpec,
    scene_by_name,
    simulate_events,
    simulate_scene,
    standard_scenes,
)

__version__ = "0.1.0"
