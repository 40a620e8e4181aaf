"""CorePPR: personalized PageRank propagation reweighted by a learnable CoreRank mix."""

from .datasets import Dataset, generate_sbm, load_dataset, load_features, load_labels, load_splits
from .diffusion import (
    DiffusionConfig,
    PropagationRow,
    build_row,
    build_rows,
    combine_gamma,
    ot_inference,
    read_row_cache,
    tt_inference,
    write_row_cache,
)
from .errors import (
    ConvergenceError,
    CorePPRError,
    DanglingNodeError,
    DataFormatError,
    GraphFormatError,
    TrainingError,
)
from .graph import CoreScores, Graph, core_numbers, core_scores, corerank, load_edge_list
from .neural import Model, adam_step, batch_logits, init_model, load_model, loss_and_grads, mlp_forward, save_model
from .ppr import PprParams, SparseScoreRow, elbow_select, elbow_truncate, exact_ppr, push_appr, top_l
from .trainer import RunReport, TrainConfig, evaluate, precompute_rows, predict, train

__version__ = "0.1.0"
