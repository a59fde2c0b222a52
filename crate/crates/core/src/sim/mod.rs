//! Synthetic data generator: reference profiles, an admittance-controlled
//! motor, a kinematic human observer, and the labeled dataset format.

pub mod dataset;
pub mod human;
pub mod motor;
pub mod profile;
pub mod trajectory;

pub use dataset::{
    generate_dataset, load_dataset, prepare_output_dir, read_manifest, read_trajectory_csv, write_dataset,
    write_manifest, write_trajectory_csv, Dataset, DatasetSpec, Manifest, Split, SplitCounts, Standardization,
    TrajectoryEntry, MANIFEST_FILE,
};
pub use human::{mirror_observation, HumanModel, HumanParams, Observation, KEYPOINTS, OBS_DIM};
pub use motor::{admittance_accel, command_step, plant_step, torque_estimate, MotorParams, MotorState};
pub use profile::{
    integrate_reference, reference_angle_exact, reference_velocity, Arm, Condition, Motion, ProfileParams, Speed,
    VelocityProfile,
};
pub use trajectory::{
    generate_trajectory, simulate, GeneratorConfig, Rollout, Schedule, Segment, StepRecord, Trajectory, ACTION_DIM,
};
