"""Scenario runner, estimator variants and error metrics."""
from .metrics import RunMetrics, Trajectory, compute_metrics, path_length, truth_trajectory
from .odometry import wheel_inertial_odometry, wheel_odometry
from .runner import (ALL_VARIANTS, EstimatorVariant, ExperimentResult, VariantRun, read_metrics,
                     read_trajectory, run_experiment, run_variant, variant_config,
                     write_experiment, write_metrics, write_trajectory)
from .stepresponse import StepResponse, body_twist, response_curve, step_response
