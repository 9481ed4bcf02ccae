"""Three-timescale stochastic approximation for quantile optimization of noisy black boxes."""

from .estimators import (
    CrnMode,
    TrackerState,
    draw_direction,
    quantile_step,
    sd_gradient_step,
    sp_gradient_step,
)
from .optimizers import (
    QgConfig,
    RunTrace,
    project_box,
    run_qg,
    run_sdqo,
    run_sdqo_batch,
    run_sdqo_penalized,
    run_spqo,
    run_spqo_batch,
    run_spqo_penalized,
)
from .problems import (
    BlackBoxProblem,
    FeasibleBox,
    Mm1Config,
    NoiseKind,
    QuadraticPenalty,
    case_optimum,
    make_case,
    make_mm1,
    mm1_optimum,
    mm1_sojourn_sample,
    mm1_true_cost,
    noise_quantile,
)
from .schedules import GainSchedule, adaptive_perturbation, gains_at, paper_recipe
from .stats import ExperimentSummary, empirical_rate, order_statistic_quantile, summarize

__version__ = "0.1.0"
