"""Sparse frozen-projection LoRA with a context-aware neuromodulation gate."""

from .adapter import (
    VARIANTS,
    AdapterConfig,
    AdapterState,
    ForwardTrace,
    adapter_backward,
    adapter_forward,
    expert_utilization,
    init_adapter,
    select_topk,
)
from .continual import AccuracyMatrix, backward_transfer, run_sequence
from .gate import GateParams, gate_backward, gate_forward
from .losses import (
    LossConfig,
    batch_orthogonality_loss,
    orthogonality_loss,
    task_loss,
    total_loss,
)
from .merging import MergeRecipe, merge_task_arithmetic, merge_ties, subspace_overlap_report
from .numerics import Rng
from .optim import AdamState, OptimizerConfig, adamw_step, lr_at
from .projection import SparseTernaryProjection, generate_projection, project
from .tasks import TaskDataset, gen_contextual_regression, gen_task_family
from .train import TrainConfig, train_epochs

__version__ = "0.1.0"
