"""Cumulative restricted Boltzmann machines for ordinal vectors and matrices."""

from .errors import (
    CrbmError,
    DegenerateMassError,
    DuplicateRatingWarning,
    EmptyDatasetError,
    EmptyEvaluationError,
    MissingTimestampsError,
    OutOfRangeLevelError,
    ParseError,
    SchemaMismatchError,
    TrainingDivergedError,
)
from .truncnorm import (
    Interval,
    interval_mass,
    sample_truncated,
    sample_truncated_batch,
    std_normal_cdf,
    truncated_density_at,
    truncated_mean,
)
from .model import (
    OrdinalScale,
    VectorCrbmParameters,
    even_scale,
    factor_activations,
    init_parameters,
    level_probabilities,
    utility_interval,
    utility_means,
)
from .inference import (
    GibbsState,
    MeanFieldState,
    factor_posterior_mcmc,
    factor_posterior_meanfield,
    gibbs_sweep,
    point_predictions,
    predict_mcmc,
    predict_variational,
)
from .learning import (
    ChainState,
    EssAccumulator,
    TrainConfig,
    clamped_phase_ess,
    free_phase_ess,
    gradient_step,
    threshold_gradient,
    train_vector,
)
from .matrix import (
    MatrixCrbmParameters,
    PosteriorTables,
    cell_thresholds,
    cell_utility_mean,
    column_view,
    predict_cell,
    row_view,
    smooth_posteriors,
    structured_mean_field_epoch,
    train_matrix,
)
from .data import (
    ObservationSet,
    load_ratings,
    load_survey,
    rescale_levels,
    save_ratings,
    split_protocol,
)
from .metrics import mae, pseudo_log_likelihood, rmse
from .serialize import load_model, save_matrix_model, save_vector_model
from .synth import sample_matrix_dataset, sample_vector_dataset

__version__ = "0.1.0"
