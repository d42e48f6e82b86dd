# Embedding network, training loop and checkpoints
from .checkpoint import TrainState, checkpoint_load, checkpoint_save, read_checkpoint_digest
from .network import (
    EmbeddingNet,
    NetworkConfig,
    embed,
    net_backward,
    net_forward,
    stats_pool,
    stats_pool_backward,
)
from .trainer import (
    PlateauScheduler,
    SegmentBatch,
    TrainConfig,
    Trainer,
    TrainResult,
    build_net,
    plateau_scheduler_step,
    sample_batch,
    sgd_apply,
)
