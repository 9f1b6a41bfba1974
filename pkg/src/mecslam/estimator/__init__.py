"""Sliding-window visual-inertial-wheel estimator."""
from .factors import (imu_residual, mahalanobis, plane_residual, robust_loss, triangulate,
                      visual_batch, visual_residual, wheel_residual)
from .pipeline import (EstimatorResult, add_keyframe, initial_prior, initial_state,
                       predict_state, run_estimator, triangulate_features)
from .solver import SolveReport, evaluate, marginalize, optimize
from .state import (STATE_DIM, EstimatorConfig, Feature, KeyframeState, Link,
                    MarginalizationPrior, SlidingWindow)
