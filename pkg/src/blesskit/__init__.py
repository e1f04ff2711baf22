"""Bottom-up ridge leverage score sampling and preconditioned Nystrom kernel ridge regression."""

__version__ = "0.1.0"

from .baselines import exact_rls_dict, two_pass, uniform_dict
from .bless import BlessParams, DictionaryPath, Schedule, bless, bless_r, make_schedule
from .datasets import load_dataset, save_dataset
from .errors import (
    BlessKitError,
    DataFormatError,
    InvalidArgumentError,
    NumericError,
    ResourceLimitError,
)
from .experiments import (
    ExperimentConfig,
    auc,
    run_learning_experiment,
    run_runtime_experiment,
    run_scores_experiment,
)
from .falkon import (
    FalkonModel,
    KernelExpansion,
    build_preconditioner,
    falkon_train,
    krr_direct,
    materialize_W,
    nystrom_krr_direct,
    predict,
)
from .kernels import Dataset, KernelSpec, eval_kernel, kernel_block
from .leverage import (
    Dictionary,
    ScoreVector,
    dictionary_scores,
    exact_scores,
    oos_scores,
    prepare_generator,
    score_summaries,
)
from .reports import emit_report
