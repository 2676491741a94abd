"""Coordinate-descent training of the shared weight prior.

Alternates two steps over a training set: every datum's posterior takes a
fixed number of Adam steps on its rate-distortion objective (independent
problems, parallelizable), then the prior jumps to the closed-form minimizer
of the average KL. The finished prior ships with the training-set coding
statistics (average total KL and its per-weight breakdown) that the encoder
and decoder both need to build identical weight partitions.
"""

from __future__ import annotations

import dataclasses
import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .binio import FormatError, Reader, Writer
from .gaussians import (
    DiagonalGaussian,
    kl_terms,
    nats_to_bits,
    prior_update,
    read_gaussian,
    write_gaussian,
)
from .network import INRConfig, PosteriorOptimizer, param_count, siren_init
from .seeds import SeedTree, derive_seed

PRIOR_MAGIC = b"CMBR"
PRIOR_VERSION = 1


@dataclasses.dataclass(frozen=True)
class TrainingSchedule:
    """Epoch structure and optimizer knobs for prior training.

    Defaults are the published small-image settings; the first epoch runs
    longer so posteriors leave their initialization before the first prior
    update.
    """

    epochs: int = 128
    iters_per_epoch: int = 100
    first_epoch_iters: int = 250
    learning_rate: float = 2e-4
    posterior_var_init: float = 9e-6

    def __post_init__(self):
        if self.epochs < 1 or self.iters_per_epoch < 1 or self.first_epoch_iters < 1:
            raise ValueError("epoch and iteration counts must be positive")
        if self.learning_rate <= 0 or self.posterior_var_init <= 0:
            raise ValueError("learning rate and variance init must be positive")


@dataclasses.dataclass(frozen=True)
class PriorModel:
    """Everything the decoder shares with the encoder.

    weight_kl_bits is the per-weight KL averaged over the training set; the
    partition both sides build is a deterministic function of it, so it is
    part of the format. content_hash digests every field and gates decoding
    against a mismatched prior file.
    """

    config: INRConfig
    fourier_seed: int
    prior: DiagonalGaussian
    beta: float
    c_beta_bits: float
    weight_kl_bits: np.ndarray
    index_histogram: np.ndarray | None = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c_beta_bits < 0:
            raise ValueError("coding cost cannot be negative")
        dim = param_count(self.config)
        if self.prior.dim != dim:
            raise ValueError(
                f"prior has dimension {self.prior.dim}, architecture needs {dim}")
        kl = np.asarray(self.weight_kl_bits, dtype=np.float64)
        if kl.shape != (dim,):
            raise ValueError("per-weight KL vector does not match the architecture")
        if np.any(kl < 0) or not np.all(np.isfinite(kl)):
            raise ValueError("per-weight KL entries must be finite and nonnegative")
        object.__setattr__(self, "weight_kl_bits", kl)
        if self.index_histogram is not None:
            hist = np.asarray(self.index_histogram, dtype=np.uint64)
            if hist.ndim != 1 or hist.size == 0:
                raise ValueError("index histogram must be a nonempty count vector")
            object.__setattr__(self, "index_histogram", hist)

    def _body(self) -> bytes:
        w = Writer()
        w.raw(PRIOR_MAGIC)
        w.u16(PRIOR_VERSION)
        cfg = self.config
        w.u32(cfg.input_dim)
        w.u32(cfg.output_dim)
        w.u32(cfg.num_layers)
        w.u32(cfg.hidden_units)
        w.u32(cfg.fourier_embeddings)
        w.f64(cfg.frequency_scale)
        w.f64(cfg.activation_scale)
        w.u64(self.fourier_seed)
        w.f64(self.beta)
        w.f64(self.c_beta_bits)
        write_gaussian(w, self.prior)
        w.f64_array(self.weight_kl_bits)
        if self.index_histogram is None:
            w.u8(0)
        else:
            w.u8(1)
            w.u64_array(self.index_histogram)
        return w.getvalue()

    @property
    def content_hash(self) -> bytes:
        return hashlib.sha256(self._body()).digest()

    def serialize(self) -> bytes:
        body = self._body()
        return body + hashlib.sha256(body).digest()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.serialize())

    @staticmethod
    def deserialize(data: bytes) -> "PriorModel":
        if len(data) < 38:
            raise FormatError("prior file is truncated")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise FormatError("prior file content digest mismatch")
        r = Reader(body)
        if r.raw(4) != PRIOR_MAGIC:
            raise FormatError("not a prior model file")
        version = r.u16()
        if version != PRIOR_VERSION:
            raise FormatError(f"unsupported prior format version {version}")
        config = INRConfig(
            input_dim=r.u32(),
            output_dim=r.u32(),
            num_layers=r.u32(),
            hidden_units=r.u32(),
            fourier_embeddings=r.u32(),
            frequency_scale=r.f64(),
            activation_scale=r.f64(),
        )
        fourier_seed = r.u64()
        beta = r.f64()
        c_beta = r.f64()
        prior = read_gaussian(r)
        weight_kl = r.f64_array()
        histogram = None
        if r.u8():
            histogram = r.u64_array()
        if r.remaining():
            raise FormatError("trailing bytes after prior model")
        return PriorModel(config, fourier_seed, prior, beta, c_beta,
                          weight_kl, histogram)

    @staticmethod
    def load(path) -> "PriorModel":
        with open(path, "rb") as fh:
            return PriorModel.deserialize(fh.read())


def estimate_coding_cost(posteriors, prior: DiagonalGaussian) -> float:
    """Average total KL over the training posteriors, in bits."""
    posteriors = list(posteriors)
    if not posteriors:
        raise ValueError("need at least one posterior")
    total = sum(float(np.sum(kl_terms(q, prior))) for q in posteriors)
    return nats_to_bits(total / len(posteriors))


def per_weight_kl(posteriors, prior: DiagonalGaussian) -> np.ndarray:
    """Elementwise KL averaged over the training posteriors, in bits.

    Entries sum to estimate_coding_cost by additivity of the factorized KL.
    """
    posteriors = list(posteriors)
    if not posteriors:
        raise ValueError("need at least one posterior")
    acc = np.zeros(prior.dim)
    for q in posteriors:
        acc += kl_terms(q, prior)
    return nats_to_bits(acc / len(posteriors))


def _run_epoch(optimizers, iterations, jobs, epoch):
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(lambda opt: opt.run(iterations), optimizers))
        else:
            for opt in optimizers:
                opt.run(iterations)
    except ArithmeticError as err:
        raise ArithmeticError(f"training diverged in epoch {epoch}: {err}") from err


def learn_prior(dataset, config: INRConfig, beta: float,
                schedule: TrainingSchedule, seed: int, *,
                jobs: int = 1, freeze_noise: bool = False,
                early_stop_tol: float | None = None, on_epoch=None):
    """Train the shared prior by coordinate descent over the dataset.

    Every datum keeps its own optimizer (and Adam state) across epochs, all
    seeded identically so identical data yield identical posteriors and the
    parallel path is observation-free. `on_epoch(epoch, before, after)`
    reports the average rate-distortion objective just before and just after
    each prior update; the update itself can only lower it, since the new
    prior is the exact minimizer of the averaged KL term. `early_stop_tol`
    ends training once an epoch improves the objective by less than that
    amount. With `freeze_noise` the optimizers reuse one noise draw every
    step, making the whole descent deterministic.

    Returns the trained PriorModel and the final per-datum posteriors.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("cannot learn a prior from an empty dataset")
    if jobs < 1:
        raise ValueError("jobs must be positive")
    dim = param_count(config)
    tree = SeedTree(seed)

    init_rng = np.random.default_rng(derive_seed(seed, "init"))
    init_mean = siren_init(config, init_rng)
    init_variance = np.full(dim, schedule.posterior_var_init)
    fresh = DiagonalGaussian(init_mean, init_variance)
    prior = prior_update([fresh])

    # With frozen noise the evaluation pass must see the exact draw the
    # optimizers train on, otherwise descent is not measured on the surface
    # being descended.
    eval_seed = tree.noise if freeze_noise else derive_seed(seed, "eval")

    optimizers = [
        PosteriorOptimizer(
            batch, config, prior,
            fourier_seed=tree.fourier, noise_seed=tree.noise,
            init_mean=init_mean, init_variance=init_variance,
            learning_rate=schedule.learning_rate,
            lambdas=np.array([beta]), freeze_noise=freeze_noise,
        )
        for batch in dataset
    ]

    def average_objective():
        return float(np.mean([opt.objective_value(beta, eval_seed)
                              for opt in optimizers]))

    previous = None
    for epoch in range(schedule.epochs):
        iterations = schedule.first_epoch_iters if epoch == 0 else schedule.iters_per_epoch
        _run_epoch(optimizers, iterations, jobs, epoch)
        posteriors = [opt.posterior() for opt in optimizers]
        before = average_objective()
        prior = prior_update(posteriors)
        for opt in optimizers:
            opt.set_prior(prior)
        after = average_objective()
        if on_epoch is not None:
            on_epoch(epoch, before, after)
        if early_stop_tol is not None and previous is not None:
            if previous - after < early_stop_tol:
                break
        previous = after

    posteriors = [opt.posterior() for opt in optimizers]
    c_beta = estimate_coding_cost(posteriors, prior)
    weight_kl = per_weight_kl(posteriors, prior)
    model = PriorModel(config=config, fourier_seed=tree.fourier, prior=prior,
                       beta=beta, c_beta_bits=c_beta, weight_kl_bits=weight_kl)
    return model, posteriors
