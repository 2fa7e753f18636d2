//! Numerical experiments on low-rank linear classifiers: the rank
//! bottleneck, cross-entropy versus Frobenius training, softmax perturbation
//! bounds, and loss-landscape probes.

pub mod bottleneck;
pub mod bounds;
pub mod fig5;
pub mod saddle;

pub use bottleneck::{bottleneck_model, BottleneckGrads, BottleneckModel, LossKind};
pub use bounds::{grouped_mhe_cp_output, theorem4_bound_check, theorem4_monte_carlo, BoundCheck};
pub use fig5::{run_fig5_experiment, Fig5Config, Optimizer, Trajectory, TrajectoryPoint};
pub use saddle::{
    descend, frobenius_restarts, one_hot_targets, saddle_probe, theorem2_toy, theorem3_witness,
    truncated_projection_optimum, DescentConfig, DescentResult, SaddleReport,
};
