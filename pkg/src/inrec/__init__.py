"""Lossy signal compression by overfitting a variational coordinate network
and transmitting a posterior weight sample at roughly its KL cost."""

from .gaussians import (
    DiagonalGaussian,
    bits_to_nats,
    kl_divergence,
    kl_divergence_bits,
    kl_terms,
    log_density,
    nats_to_bits,
    prior_update,
    sample,
)
from .network import (
    INRConfig,
    PosteriorOptimizer,
    SignalBatch,
    forward,
    forward_local_reparam,
    fourier_embed,
    loss_and_grads,
    param_count,
    siren_init,
)
from .partition import BlockPartition, compute_block_count, partition_weights
from .pipeline import (
    CompressedObject,
    FineTuneSettings,
    adjust_multipliers,
    compress,
    decompress,
    fit_posterior,
    measure,
    progressive_encode,
)
from .priors import (
    PriorModel,
    TrainingSchedule,
    estimate_coding_cost,
    learn_prior,
    per_weight_kl,
)
from .rec import (
    EncodedBlock,
    RecSettings,
    astar_decode,
    astar_encode,
    code_indices,
    decode_indices,
    proposal_samples,
    sample_budget,
    truncated_gumbel,
)
from .seeds import SeedTree, derive_seed
from .signals import SignalDescriptor, coordinate_grid, load_signal, save_signal

__version__ = "0.1.0"

__all__ = [
    "DiagonalGaussian",
    "bits_to_nats",
    "kl_divergence",
    "kl_divergence_bits",
    "kl_terms",
    "log_density",
    "nats_to_bits",
    "prior_update",
    "sample",
    "INRConfig",
    "PosteriorOptimizer",
    "SignalBatch",
    "forward",
    "forward_local_reparam",
    "fourier_embed",
    "loss_and_grads",
    "param_count",
    "siren_init",
    "BlockPartition",
    "compute_block_count",
    "partition_weights",
    "CompressedObject",
    "FineTuneSettings",
    "adjust_multipliers",
    "compress",
    "decompress",
    "fit_posterior",
    "measure",
    "progressive_encode",
    "PriorModel",
    "TrainingSchedule",
    "estimate_coding_cost",
    "learn_prior",
    "per_weight_kl",
    "EncodedBlock",
    "RecSettings",
    "astar_decode",
    "astar_encode",
    "code_indices",
    "decode_indices",
    "proposal_samples",
    "sample_budget",
    "truncated_gumbel",
    "SeedTree",
    "derive_seed",
    "SignalDescriptor",
    "coordinate_grid",
    "load_signal",
    "save_signal",
]
