"""Goal-centered reward geometry and curriculum PPO for drone visual tracking."""

from .geometry import (
    BehindCamera,
    CameraIntrinsics,
    GroundProjection,
    InvalidViewpoint,
    PlaneCoeffs,
    RigidTransform,
    corner_rays,
    focal_length,
    plane_in_frame,
    project_frustum,
    project_to_image,
    world_to_camera,
)
from .reward import (
    ContourGrid,
    CounterexamplePair,
    Deviation,
    RewardConfig,
    contour_grid,
    deviation,
    distance_reward,
    find_counterexample,
    goal_centered_reward,
    max_offset,
    sparse_reward,
)
from .env import (
    Action,
    Behavior,
    DroneState,
    EpisodeConfig,
    StepAfterDone,
    TargetState,
    TrackingEnv,
    WorldState,
    camera_pose,
    target_update,
)
from .policy import PolicyParams, init_params
from .training import (
    CurriculumConfig,
    PpoConfig,
    Transition,
    curriculum_train,
    gae_advantages,
    load_checkpoint,
    ppo_loss,
    ppo_update,
    save_checkpoint,
)
from .evaluate import (
    EvalProtocol,
    EvalResult,
    ablation_report,
    run_protocol,
    verify_geometry,
    verify_proposition,
)

__version__ = "0.1.0"
