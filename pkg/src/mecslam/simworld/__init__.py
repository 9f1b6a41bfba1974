"""Deterministic Mecanum chassis simulator with fault injection."""
from .config import (CameraParams, CommandSegment, ConfigError, Extrinsics, Fault, NoiseParams,
                     PlantParams, Rates, ScenarioConfig)
from .plant import GROUNDED, LIFTED, SLIPPING, GroundTruth, initial_state, step
from .scenario import SensorLog, run_scenario, run_summary
from .sensors import (FeatureObservation, ImuBiasState, ImuSample, WheelOdomSample,
                      generate_landmarks, project, sample_features, sample_imu, sample_wheels)
from .logio import read_log, write_log
