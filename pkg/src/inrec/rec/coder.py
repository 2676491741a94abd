"""Relative entropy coding of one Gaussian block.

The encoder walks N = floor(2^(KL_bits + t)) shared proposals, perturbs each
log importance ratio with a strictly decreasing truncated Gumbel chain, and
transmits the argmax index. The decoder re-materializes the winning proposal
from the shared deterministic stream; the Gumbel noise is encoder-only and
never shared.

Proposals come from a counter-mode generator keyed by (seed, block id): the
raw 64-bit words are reduced to a 2^-32 grid of open-(0,1) midpoints and
pushed through the fixed normal quantile. Counter mode gives three things a
stateful generator would not: O(1) random access for the decoder, the prefix
property (proposal i never depends on N), and a stream defined by the
algorithm itself rather than by library internals.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..gaussians import MIN_VARIANCE, DiagonalGaussian, kl_divergence_bits
from .normal import standard_normal_quantile

_CHUNK = 8192

# Philox-4x64 emits four words per counter step; one proposal occupies a
# whole number of counter steps so any index is seekable without draining
# the words in between.
_WORDS_PER_COUNTER = 4


def _counters_per_point(dim: int) -> int:
    return (dim + _WORDS_PER_COUNTER - 1) // _WORDS_PER_COUNTER


def _proposal_generator(seed: int, block_id: int):
    key = np.array([np.uint64(seed), np.uint64(block_id)], dtype=np.uint64)
    return np.random.Philox(key=key)


def _words_to_standard_normals(words: np.ndarray, dim: int) -> np.ndarray:
    u = ((words >> np.uint64(32)).astype(np.float64) + 0.5) * 2.0 ** -32
    return standard_normal_quantile(u[..., :dim])


@dataclasses.dataclass(frozen=True)
class RecSettings:
    """Shared coding parameters.

    t_bits buys lower sample bias at one extra bit per unit; the cap turns
    runaway KLs into a loud failure instead of an unbounded search.
    """

    t_bits: float = 0.0
    max_samples_cap: int = 2 ** 24
    seed: int = 0

    def __post_init__(self):
        if self.t_bits < 0:
            raise ValueError("t_bits must be nonnegative")
        if self.max_samples_cap < 1:
            raise ValueError("sample cap must be at least 1")


@dataclasses.dataclass(frozen=True)
class EncodedBlock:
    index: int
    n_samples: int
    block_id: int = 0

    def __post_init__(self):
        if not 1 <= self.index <= self.n_samples:
            raise ValueError(
                f"index {self.index} outside [1, {self.n_samples}]")


def _open_uniform(source, size=None):
    """Uniform draws from the open interval (0, 1); zeros are redrawn."""
    if size is None:
        u = source.random()
        while u == 0.0:
            u = source.random()
        return u
    u = source.random(size)
    zeros = u == 0.0
    while zeros.any():
        u[zeros] = source.random(int(zeros.sum()))
        zeros = u == 0.0
    return u


def truncated_gumbel(bound: float, source) -> float:
    """Standard Gumbel conditioned on being at most `bound`.

    Inverse-CDF draw: -ln(exp(-bound) - ln U). bound may be +inf, giving an
    unconditional Gumbel.
    """
    u = _open_uniform(source)
    return -math.log(math.exp(-bound) - math.log(u))


def sample_budget(kl_bits: float, settings: RecSettings) -> int:
    """N = floor(2^(kl_bits + t)), at least 1; exceeding the cap is an error."""
    exponent = kl_bits + settings.t_bits
    if exponent > math.log2(settings.max_samples_cap):
        raise ValueError(
            f"block KL of {kl_bits:.2f} bits needs more than "
            f"{settings.max_samples_cap} proposals (t={settings.t_bits}); "
            "the rate controller should have kept this block near its budget"
        )
    return max(1, int(math.floor(2.0 ** exponent)))


def proposal_samples(prior_block: DiagonalGaussian, n: int, seed: int,
                     block_id: int = 0) -> np.ndarray:
    """First n proposals for a block, shape (n, dim).

    Deterministic given (seed, block id, dimension) with the prefix
    property: sample i is identical for every n >= i. Draws are independent
    across indices, which the sampling guarantees of the search rely on;
    distinct blocks get distinct streams.
    """
    if n < 1:
        raise ValueError("need at least one proposal")
    dim = prior_block.dim
    per_point = _counters_per_point(dim) * _WORDS_PER_COUNTER
    raw = _proposal_generator(seed, block_id).random_raw(n * per_point)
    z = _words_to_standard_normals(raw.reshape(n, per_point), dim)
    std = np.sqrt(np.maximum(prior_block.variance, MIN_VARIANCE))
    return prior_block.mean[None, :] + std[None, :] * z


def _proposal_at(prior_block: DiagonalGaussian, seed: int, block_id: int,
                 index: int) -> np.ndarray:
    counters = _counters_per_point(prior_block.dim)
    gen = _proposal_generator(seed, block_id)
    gen.advance((index - 1) * counters)
    raw = gen.random_raw(counters * _WORDS_PER_COUNTER)
    z = _words_to_standard_normals(raw[None, :], prior_block.dim)[0]
    std = np.sqrt(np.maximum(prior_block.variance, MIN_VARIANCE))
    return prior_block.mean + std * z


def astar_encode(target_block: DiagonalGaussian, prior_block: DiagonalGaussian,
                 settings: RecSettings, gumbel_source,
                 block_id: int = 0) -> tuple[EncodedBlock, np.ndarray]:
    """Select the proposal with the greatest perturbed importance weight.

    gumbel_source is a numpy Generator (pseudo-random; encoder side only).
    Ties break toward the smaller index. Returns the transmitted block and
    the chosen sample, the latter reproduced through the decode path so both
    sides hold identical bits.
    """
    if target_block.dim != prior_block.dim:
        raise ValueError("target and prior dimensions differ")
    n = sample_budget(kl_divergence_bits(target_block, prior_block), settings)

    dim = prior_block.dim
    per_point = _counters_per_point(dim) * _WORDS_PER_COUNTER
    gen = _proposal_generator(settings.seed, block_id)
    p_var = np.maximum(prior_block.variance, MIN_VARIANCE)
    q_var = np.maximum(target_block.variance, MIN_VARIANCE)
    p_std = np.sqrt(p_var)
    log_var_ratio = float(np.sum(np.log(p_var / q_var)))

    best_value = -math.inf
    best_index = 0
    arrivals = 0.0  # cumulative exponential clock; G_i = -ln(arrivals_i)
    for start in range(1, n + 1, _CHUNK):
        count = min(_CHUNK, n + 1 - start)
        raw = gen.random_raw(count * per_point)
        z = _words_to_standard_normals(raw.reshape(count, per_point), dim)
        w = prior_block.mean[None, :] + p_std[None, :] * z
        # log q(w) - log p(w), using the standardized z for the prior part;
        # overflow surfaces as the explicit error below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            quad_q = np.sum((w - target_block.mean[None, :]) ** 2 / q_var[None, :], axis=1)
            ratios = 0.5 * (log_var_ratio + np.sum(z * z, axis=1) - quad_q)
        if not np.all(np.isfinite(ratios)):
            raise ArithmeticError("non-finite importance weight in A* search")
        # strictly decreasing truncated-Gumbel chain via its arrival-time form
        arrivals = arrivals + np.cumsum(-np.log(_open_uniform(gumbel_source, count)))
        perturbed = ratios - np.log(arrivals)
        pick = int(np.argmax(perturbed))
        if perturbed[pick] > best_value:
            best_value = float(perturbed[pick])
            best_index = start + pick
        arrivals = float(arrivals[-1])

    encoded = EncodedBlock(index=best_index, n_samples=n, block_id=block_id)
    # reproduce the winner through the decode path so both sides are bitwise equal
    return encoded, _proposal_at(prior_block, settings.seed, block_id, best_index)


def astar_decode(prior_block: DiagonalGaussian, encoded: EncodedBlock,
                 settings: RecSettings) -> np.ndarray:
    """Re-materialize the transmitted proposal from the shared stream."""
    if encoded.index < 1 or encoded.index > encoded.n_samples:
        raise ValueError(
            f"corrupt stream: index {encoded.index} outside [1, {encoded.n_samples}]")
    return _proposal_at(prior_block, settings.seed, encoded.block_id, encoded.index)
