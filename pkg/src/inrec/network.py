"""Sinusoidal coordinate network with random Fourier inputs and factorized
Gaussian weights.

Flat weight layout (the decoder depends on it): layers in order, each layer's
weight matrix in row-major order followed by its bias vector. The first layer
consumes the Fourier embedding; hidden layers apply sin(activation_scale * z);
the last layer is linear.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch

from .gaussians import MIN_VARIANCE, DiagonalGaussian

# Keeps sqrt differentiable when every variance feeding a pre-activation is
# frozen to zero; negligible against the 1e-12 variance floor.
_VAR_EPS = 1e-30


@dataclasses.dataclass(frozen=True)
class INRConfig:
    """Architecture of one coordinate network.

    num_layers counts all linear maps, so a 4-layer net has 3 sine layers
    and a linear head. fourier_embeddings is the embedding width (split
    evenly between sin and cos components).
    """

    input_dim: int
    output_dim: int
    num_layers: int
    hidden_units: int
    fourier_embeddings: int
    frequency_scale: float = 10.0
    activation_scale: float = 30.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or self.hidden_units < 1:
            raise ValueError("dimensions must be positive")
        if self.num_layers < 2:
            raise ValueError("need at least two layers (one sine, one linear head)")
        if self.fourier_embeddings < 2 or self.fourier_embeddings % 2:
            raise ValueError("fourier_embeddings must be even and at least 2")
        if self.frequency_scale <= 0 or self.activation_scale <= 0:
            raise ValueError("scales must be positive")


def layer_shapes(config: INRConfig):
    """(fan_out, fan_in) per layer."""
    shapes = [(config.hidden_units, config.fourier_embeddings)]
    for _ in range(config.num_layers - 2):
        shapes.append((config.hidden_units, config.hidden_units))
    shapes.append((config.output_dim, config.hidden_units))
    return shapes


def param_count(config: INRConfig) -> int:
    return sum(out * fan_in + out for out, fan_in in layer_shapes(config))


def layer_slices(config: INRConfig):
    """Flat-vector slices [(weight_slice, bias_slice, out, fan_in), ...]."""
    out = []
    pos = 0
    for fan_out, fan_in in layer_shapes(config):
        w = slice(pos, pos + fan_out * fan_in)
        pos += fan_out * fan_in
        b = slice(pos, pos + fan_out)
        pos += fan_out
        out.append((w, b, fan_out, fan_in))
    return out


@dataclasses.dataclass(frozen=True)
class SignalBatch:
    """Coordinate/value pairs for one datum.

    coords: (n_points, input_dim) in [-1, 1]; targets: (n_points, output_dim)
    in [0, 1].
    """

    coords: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if coords.ndim != 2 or targets.ndim != 2:
            raise ValueError("coords and targets must be 2-D")
        if coords.shape[0] != targets.shape[0]:
            raise ValueError("coords and targets must have matching row counts")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(targets))):
            raise ValueError("coords and targets must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "targets", targets)

    @property
    def n_points(self):
        return self.coords.shape[0]


def fourier_frequencies(config: INRConfig, seed: int) -> np.ndarray:
    """Frequency matrix B, shape (fourier_embeddings/2, input_dim)."""
    rng = np.random.default_rng(seed)
    half = config.fourier_embeddings // 2
    return rng.standard_normal((half, config.input_dim)) * config.frequency_scale


def fourier_embed(coords, config: INRConfig, seed: int) -> np.ndarray:
    """[sin(2*pi*Bx), cos(2*pi*Bx)], bounded in [-1, 1]."""
    coords = np.asarray(coords, dtype=np.float64)
    freqs = fourier_frequencies(config, seed)
    angles = 2.0 * np.pi * coords @ freqs.T
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def siren_init(config: INRConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform fan-in initialization for the flat weight vector.

    First layer U(-1/fan_in, 1/fan_in); later layers
    U(-sqrt(6/fan_in)/activation_scale, +...). Biases use the usual
    U(-1/sqrt(fan_in), +...) so initial pre-activations stay spread.
    """
    values = np.empty(param_count(config))
    for i, (w_sl, b_sl, fan_out, fan_in) in enumerate(layer_slices(config)):
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = math.sqrt(6.0 / fan_in) / config.activation_scale
        values[w_sl] = rng.uniform(-bound, bound, fan_out * fan_in)
        values[b_sl] = rng.uniform(-1.0, 1.0, fan_out) / math.sqrt(fan_in)
    return values


def forward(weights, batch: SignalBatch, config: INRConfig, fourier_seed: int) -> np.ndarray:
    """Deterministic prediction matrix for a flat weight vector."""
    weights = np.asarray(weights, dtype=np.float64)
    expected = param_count(config)
    if weights.shape != (expected,):
        raise ValueError(f"weight vector has shape {weights.shape}, expected ({expected},)")
    h = fourier_embed(batch.coords, config, fourier_seed)
    slices = layer_slices(config)
    for i, (w_sl, b_sl, fan_out, fan_in) in enumerate(slices):
        w = weights[w_sl].reshape(fan_out, fan_in)
        z = h @ w.T + weights[b_sl]
        h = z if i == len(slices) - 1 else np.sin(config.activation_scale * z)
    return h


def forward_local_reparam(posterior: DiagonalGaussian, batch: SignalBatch,
                          config: INRConfig, source, fourier_seed: int) -> np.ndarray:
    """One stochastic pass sampling pre-activations instead of weights.

    Per layer the pre-activation is N(W_mu h + b_mu, W_var (h*h) + b_var)
    sampled with independent noise from `source`, drawn layer by layer.
    """
    if posterior.dim != param_count(config):
        raise ValueError("posterior dimension does not match the architecture")
    variance = np.maximum(posterior.variance, MIN_VARIANCE)
    h = fourier_embed(batch.coords, config, fourier_seed)
    slices = layer_slices(config)
    for i, (w_sl, b_sl, fan_out, fan_in) in enumerate(slices):
        w_mu = posterior.mean[w_sl].reshape(fan_out, fan_in)
        w_var = variance[w_sl].reshape(fan_out, fan_in)
        z_mu = h @ w_mu.T + posterior.mean[b_sl]
        z_var = (h * h) @ w_var.T + variance[b_sl]
        eps = source.standard_normal(z_mu.shape)
        z = z_mu + np.sqrt(z_var) * eps
        h = z if i == len(slices) - 1 else np.sin(config.activation_scale * z)
    return h


class _Objective:
    """Torch graph builder shared by the public gradient op and the trainers.

    Holds the embedded inputs and targets for one datum; evaluates the
    rate-distortion objective for given posterior parameters, block
    multipliers, and frozen-coordinate state.
    """

    def __init__(self, batch: SignalBatch, config: INRConfig, fourier_seed: int):
        self.config = config
        self.n_points = batch.n_points
        self.embedded = torch.from_numpy(fourier_embed(batch.coords, config, fourier_seed))
        self.targets = torch.from_numpy(np.asarray(batch.targets, dtype=np.float64))
        self.slices = layer_slices(config)
        self.dim = param_count(config)

    def noise_shapes(self, n_points=None):
        n = self.n_points if n_points is None else n_points
        return [(n, fan_out) for _, _, fan_out, _ in self.slices]

    def draw_noise(self, generator, n_points=None):
        return [torch.randn(shape, generator=generator, dtype=torch.float64)
                for shape in self.noise_shapes(n_points)]

    def predictions(self, mean_eff, var_eff, noise, rows=None):
        h = self.embedded if rows is None else self.embedded[rows]
        last = len(self.slices) - 1
        omega = self.config.activation_scale
        for i, (w_sl, b_sl, fan_out, fan_in) in enumerate(self.slices):
            w_mu = mean_eff[w_sl].view(fan_out, fan_in)
            w_var = var_eff[w_sl].view(fan_out, fan_in)
            z_mu = h @ w_mu.T + mean_eff[b_sl]
            z_var = (h * h) @ w_var.T + var_eff[b_sl]
            z = z_mu + torch.sqrt(z_var + _VAR_EPS) * noise[i]
            h = z if i == last else torch.sin(omega * z)
        return h

    def distortion(self, mean_eff, var_eff, noise, rows=None):
        pred = self.predictions(mean_eff, var_eff, noise, rows)
        target = self.targets if rows is None else self.targets[rows]
        err = ((pred - target) ** 2).sum()
        if rows is not None:
            # minibatch estimate rescaled to the full summed-error objective
            err = err * (self.n_points / len(rows))
        return err


def _kl_terms_torch(mean, variance, prior_mean, prior_var):
    return 0.5 * (torch.log(prior_var) - torch.log(variance)
                  + (variance + (mean - prior_mean) ** 2) / prior_var - 1.0)


def loss_and_grads(posterior: DiagonalGaussian, prior: DiagonalGaussian,
                   batch: SignalBatch, weight_multipliers, partition,
                   config: INRConfig, source, fourier_seed: int,
                   frozen_mask=None, frozen_values=None):
    """Objective pieces and reverse-mode gradients for one noise draw.

    weight_multipliers has one entry per uncompressed (non-frozen) block of
    `partition`. Returns (distortion, per-uncompressed-block KL in nats,
    gradient w.r.t. posterior mean, gradient w.r.t. posterior log-variance);
    gradients vanish on frozen coordinates.
    """
    dim = param_count(config)
    if posterior.dim != dim or prior.dim != dim:
        raise ValueError("posterior/prior dimension does not match the architecture")
    blocks = list(partition.blocks)
    covered = np.sort(np.concatenate([np.asarray(b) for b in blocks]))
    if covered.shape[0] != dim or not np.array_equal(covered, np.arange(dim)):
        raise ValueError("partition must cover every weight exactly once")

    if frozen_mask is None:
        frozen_mask = np.zeros(dim, dtype=bool)
    frozen_mask = np.asarray(frozen_mask, dtype=bool)
    if frozen_values is None:
        frozen_values = np.zeros(dim)
    open_blocks = [k for k, b in enumerate(blocks) if not frozen_mask[np.asarray(b)].any()]
    for k in range(len(blocks)):
        idx = np.asarray(blocks[k])
        if 0 < frozen_mask[idx].sum() < idx.shape[0]:
            raise ValueError(f"block {k} is partially frozen")
    multipliers = np.asarray(weight_multipliers, dtype=np.float64)
    if multipliers.shape != (len(open_blocks),):
        raise ValueError(
            f"expected {len(open_blocks)} multipliers (one per uncompressed block), "
            f"got {multipliers.shape}"
        )

    objective = _Objective(batch, config, fourier_seed)
    mean = torch.from_numpy(posterior.mean.copy()).requires_grad_(True)
    log_var = torch.from_numpy(np.log(posterior.variance).copy()).requires_grad_(True)
    frozen_t = torch.from_numpy(frozen_mask)
    frozen_vals_t = torch.from_numpy(np.asarray(frozen_values, dtype=np.float64))

    variance = torch.clamp(torch.exp(log_var), min=MIN_VARIANCE)
    mean_eff = torch.where(frozen_t, frozen_vals_t, mean)
    var_eff = torch.where(frozen_t, torch.zeros_like(variance), variance)

    noise = [torch.from_numpy(source.standard_normal(shape))
             for shape in objective.noise_shapes()]
    distortion = objective.distortion(mean_eff, var_eff, noise)

    prior_mean = torch.from_numpy(prior.mean)
    prior_var = torch.from_numpy(np.maximum(prior.variance, MIN_VARIANCE))
    kl = _kl_terms_torch(mean, variance, prior_mean, prior_var)

    block_kls = []
    loss = distortion
    for lam, k in zip(multipliers, open_blocks):
        block_kl = kl[np.asarray(blocks[k])].sum()
        block_kls.append(block_kl)
        loss = loss + lam * block_kl
    loss.backward()

    kl_vector = np.array([b.item() for b in block_kls])
    grad_mean = mean.grad.numpy().copy()
    grad_log_var = log_var.grad.numpy().copy()
    grad_mean[frozen_mask] = 0.0
    grad_log_var[frozen_mask] = 0.0
    return float(distortion.item()), kl_vector, grad_mean, grad_log_var


class PosteriorOptimizer:
    """Adam loop over one datum's posterior parameters.

    Owns the posterior mean/log-variance tensors, the per-block multiplier
    vector, and the frozen-coordinate state used by progressive encoding.
    All tensors are float64 and every draw flows from the constructor seeds,
    so runs are reproducible and independent across data.
    """

    def __init__(self, batch, config, prior, *, fourier_seed, noise_seed,
                 init_mean, init_variance, learning_rate,
                 block_ids=None, n_blocks=1, lambdas=None,
                 freeze_noise=False, batch_fraction=None):
        self.objective = _Objective(batch, config, fourier_seed)
        self.config = config
        dim = self.objective.dim
        self.mean = torch.from_numpy(np.asarray(init_mean, dtype=np.float64).copy())
        self.mean.requires_grad_(True)
        init_variance = np.maximum(np.asarray(init_variance, dtype=np.float64), MIN_VARIANCE)
        self.log_var = torch.from_numpy(np.log(init_variance).copy())
        self.log_var.requires_grad_(True)
        self.opt = torch.optim.Adam([self.mean, self.log_var], lr=learning_rate)
        self.set_prior(prior)

        if block_ids is None:
            block_ids = np.zeros(dim, dtype=np.int64)
            n_blocks = 1
        self.block_ids = torch.from_numpy(np.asarray(block_ids, dtype=np.int64))
        self.n_blocks = n_blocks
        if lambdas is None:
            lambdas = np.ones(n_blocks)
        self.lambdas = np.asarray(lambdas, dtype=np.float64).copy()

        self.frozen = torch.zeros(dim, dtype=torch.bool)
        self.frozen_values = torch.zeros(dim, dtype=torch.float64)
        self._frozen_mean = torch.zeros(dim, dtype=torch.float64)
        self._frozen_log_var = torch.zeros(dim, dtype=torch.float64)

        self._noise_seed = noise_seed
        self._freeze_noise = freeze_noise
        self.generator = torch.Generator().manual_seed(noise_seed)
        self._batch_fraction = batch_fraction
        self.step_count = 0
        self.last_distortion = math.nan

    def set_prior(self, prior):
        self.prior_mean = torch.from_numpy(prior.mean.copy())
        self.prior_var = torch.from_numpy(np.maximum(prior.variance, MIN_VARIANCE).copy())

    def _effective_moments(self):
        variance = torch.clamp(torch.exp(self.log_var), min=MIN_VARIANCE)
        mean_eff = torch.where(self.frozen, self.frozen_values, self.mean)
        var_eff = torch.where(self.frozen, torch.zeros_like(variance), variance)
        return mean_eff, var_eff, variance

    def _kl_terms(self, variance):
        kl = _kl_terms_torch(self.mean, variance, self.prior_mean, self.prior_var)
        return torch.where(self.frozen, torch.zeros_like(kl), kl)

    def block_kl_nats(self) -> np.ndarray:
        """Closed-form per-block KL at the current parameters (frozen -> 0)."""
        with torch.no_grad():
            _, _, variance = self._effective_moments()
            kl = self._kl_terms(variance)
            sums = torch.zeros(self.n_blocks, dtype=torch.float64)
            sums.index_add_(0, self.block_ids, kl)
        return sums.numpy()

    def step(self):
        if self._freeze_noise:
            self.generator.manual_seed(self._noise_seed)
        rows = None
        if self._batch_fraction is not None and self._batch_fraction < 1.0:
            n = self.objective.n_points
            count = max(1, int(round(self._batch_fraction * n)))
            rows = torch.randperm(n, generator=self.generator)[:count]
        self.opt.zero_grad(set_to_none=True)
        mean_eff, var_eff, variance = self._effective_moments()
        noise = self.objective.draw_noise(
            self.generator, None if rows is None else len(rows))
        distortion = self.objective.distortion(mean_eff, var_eff, noise, rows)
        kl = self._kl_terms(variance)
        block_kl = torch.zeros(self.n_blocks, dtype=torch.float64)
        block_kl = block_kl.index_add(0, self.block_ids, kl)
        loss = distortion + (torch.from_numpy(self.lambdas) * block_kl).sum()
        value = loss.item()
        if not math.isfinite(value):
            raise ArithmeticError(f"objective diverged at step {self.step_count}")
        loss.backward()
        self.opt.step()
        with torch.no_grad():
            # frozen coordinates must never move, Adam momentum included
            if bool(self.frozen.any()):
                self.mean.data[self.frozen] = self._frozen_mean[self.frozen]
                self.log_var.data[self.frozen] = self._frozen_log_var[self.frozen]
        self.step_count += 1
        self.last_distortion = float(distortion.item())
        return value

    def run(self, iterations: int):
        for _ in range(iterations):
            self.step()

    def freeze_block(self, indices, values):
        idx = torch.from_numpy(np.asarray(indices, dtype=np.int64))
        with torch.no_grad():
            self.frozen[idx] = True
            self.frozen_values[idx] = torch.from_numpy(np.asarray(values, dtype=np.float64))
            self._frozen_mean[idx] = self.mean.data[idx]
            self._frozen_log_var[idx] = self.log_var.data[idx]

    def all_frozen(self) -> bool:
        return bool(self.frozen.all())

    def posterior(self) -> DiagonalGaussian:
        with torch.no_grad():
            variance = torch.clamp(torch.exp(self.log_var), min=MIN_VARIANCE)
        return DiagonalGaussian(self.mean.detach().numpy().copy(),
                                variance.numpy().copy())

    def block_posterior(self, indices) -> DiagonalGaussian:
        q = self.posterior()
        return q.subset(np.asarray(indices))

    def frozen_weight_vector(self) -> np.ndarray:
        if not self.all_frozen():
            raise RuntimeError("weight vector requested before all blocks were frozen")
        return self.frozen_values.numpy().copy()

    def objective_value(self, beta: float, eval_seed: int) -> float:
        """Deterministic rate-distortion objective with its own noise stream.

        Used to track coordinate-descent progress; the evaluation noise is
        re-seeded every call so successive epochs see the same draw.
        """
        gen = torch.Generator().manual_seed(eval_seed)
        with torch.no_grad():
            mean_eff, var_eff, variance = self._effective_moments()
            noise = self.objective.draw_noise(gen)
            distortion = self.objective.distortion(mean_eff, var_eff, noise)
            kl = self._kl_terms(variance).sum()
        return float(distortion.item() + beta * kl.item())
