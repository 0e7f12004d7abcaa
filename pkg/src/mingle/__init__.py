"""Mobility-induced graph learning for WiFi RTT positioning.

A numpy/scipy library covering the full pipeline: inertial course
segmentation, RTT multilateration, combinatorial pseudo-labels, two mobility
graphs, a cross-graph GCN trained with a pace regularizer, classic baseline
localizers, a synthetic scenario simulator, and evaluation tooling.
"""

from .baselines import EkfConfig, cda_trajectory, ekf_trajectory, lls_rs_trajectory
from .errors import (ContractViolation, DegenerateGeometryError,
                     DivergenceError, NumericalFailure)
from .features import (CdaLabels, FeatureSet, build_f1, build_pels_and_f2,
                       cda_label, default_cda_params, enumerate_combos)
from .gcn import (ALL_ROUTINGS, DEFAULT_ROUTING, FeatureKind, GcnParams,
                  ModelOutput, Routing, forward, init_params, load_params,
                  save_params)
from .geometry import (SPEED_OF_LIGHT, ApConstellation, lls_multilaterate,
                       ranging_error, rtt_to_range)
from .graphs import (MobilityGraphs, build_dmg, build_graphs, build_tmg,
                     normalize_adjacency)
from .harness import (EvalReport, TrajectoryEstimate, evaluate, load_scenario,
                      mingle_localize, prepare, run_ablation,
                      run_lambda_sweep, save_scenario)
from .sensing import (CourseSegmentation, ImuStream, heading_change,
                      quantize_heading, segment_courses, segment_stream,
                      speed_variation)
from .simulator import Leg, Scenario, ScenarioSpec, generate, preset
from .training import (LossBreakdown, TrainConfig, TrainResult,
                       gamma_variance, gradients, loss, split_nodes, train)

__version__ = "0.1.0"
