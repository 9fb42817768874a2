"""sfmotion: motion estimation of tumbling rigid bodies from SfM output.

Given a time-sequenced relative camera-pose trajectory and the sparse point
cloud produced by a structure-from-motion run on images of a free-floating
target, this package estimates the target's linear velocity, angular
velocity and periodic rotation parameters. A rigid-body kinematics
simulator generates ground truth for quantitative validation.
"""

from .errors import (AliasingError, ConfigError, DegenerateGeometryError,
                     EmptyInputError, NoPeriodicityError, ParseError,
                     PipelineError, SchemaError, SfmotionError,
                     SimulationError, UnsupportedFormatError)
from .geometry import (Pose, Rotation, Vec3, as_vec3, pose_from_rt,
                       rotation_compose, rotation_inverse, slerp, so3_exp,
                       so3_log, vec3)
from .model import FeatureFrame, FeatureReport, PointCloud, PoseTrajectory
from .rigidbody import (InertiaModel, RigidBodyState, SimConfig,
                        euler_derivative, inject_pose_noise, rk4_step,
                        simulate, states_at, to_camera_trajectory)
from .ingest import (assign_timestamps, parse_colmap_text,
                     parse_reconstruction_json, read_ply, read_trajectory_csv,
                     write_ply, write_trajectory_csv)
from .cloud import (Plane, TargetFrame, centroid, complete_shape,
                    define_target_frame, detect_planes, median_nn_distance,
                    radius_outlier_removal, ransac_plane, voxel_downsample)
from .motion import (MotionEstimate, ScaleReference, SineFit,
                     angular_velocity, estimate_motion, fit_sine,
                     linear_motion, period_of, radius_vectors,
                     rotation_increments, scale_from_known_length)
from .evaluate import (EvalReport, TruthSeries, evaluate_motion,
                       period_relative_error, rmse, truth_from_config)

__version__ = "0.1.0"
