"""Grouping weights into blocks of roughly equal coding cost.

Weights are shuffled with a seeded permutation, then packed greedily: the
current block absorbs weights until the next one would push its summed
average KL past the budget, at which point a new block opens (next-fit).
A single weight whose own KL already exceeds the budget gets a block to
itself; next-fit cannot split items.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np


@dataclasses.dataclass(frozen=True)
class BlockPartition:
    """Disjoint, exhaustive index blocks in coding order.

    Fully determined by (per-weight KLs, kappa_bits, permutation_seed), so
    it is never serialized; the decoder rebuilds it from the prior file and
    the stream header.
    """

    blocks: tuple
    kappa_bits: float
    permutation_seed: int

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=np.int64) for b in self.blocks)
        if not blocks:
            raise ValueError("partition needs at least one block")
        for b in blocks:
            if b.size == 0:
                raise ValueError("empty block")
        flat = np.concatenate(blocks)
        if np.unique(flat).size != flat.size:
            raise ValueError("blocks overlap")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def n_weights(self):
        return sum(b.size for b in self.blocks)

    def block_ids(self) -> np.ndarray:
        """Block index per weight coordinate."""
        ids = np.empty(self.n_weights, dtype=np.int64)
        for k, b in enumerate(self.blocks):
            ids[b] = k
        return ids


def compute_block_count(c_beta_bits: float, kappa_bits: float) -> int:
    """A-priori block count ceil(c_beta/kappa), at least one.

    Next-fit may produce a different count; the pipeline always uses the
    partition's actual count.
    """
    if kappa_bits <= 0:
        raise ValueError("kappa must be positive")
    if c_beta_bits < 0:
        raise ValueError("coding cost cannot be negative")
    return max(1, math.ceil(c_beta_bits / kappa_bits))


def partition_weights(per_weight_kl, kappa_bits: float, seed: int) -> BlockPartition:
    """Next-fit packing of permuted weights against the kappa budget."""
    kls = np.asarray(per_weight_kl, dtype=np.float64)
    if kls.ndim != 1 or kls.size == 0:
        raise ValueError("per-weight KL must be a nonempty vector")
    if np.any(kls < 0) or not np.all(np.isfinite(kls)):
        raise ValueError("per-weight KL entries must be finite and nonnegative")
    if kappa_bits <= 0:
        raise ValueError("kappa must be positive")

    order = np.random.default_rng(seed).permutation(kls.size)
    blocks = []
    current = []
    current_sum = 0.0
    for idx in order:
        cost = kls[idx]
        if current and current_sum + cost > kappa_bits:
            blocks.append(np.array(current, dtype=np.int64))
            current = [idx]
            current_sum = cost
        else:
            current.append(idx)
            current_sum += cost
    blocks.append(np.array(current, dtype=np.int64))
    return BlockPartition(tuple(blocks), float(kappa_bits), int(seed))
