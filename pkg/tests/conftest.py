import numpy as np
import pytest
import torch

import inrec

# Single-threaded torch keeps every trajectory bitwise reproducible, which
# the parallel-vs-sequential and round-trip tests rely on. The matrices here
# are far too small for threading to pay off anyway.
torch.set_num_threads(1)

MINI_CONFIG = inrec.INRConfig(input_dim=2, output_dim=3, num_layers=3,
                              hidden_units=8, fourier_embeddings=8)
MINI_BETA = 1e-4


def smooth_image(seed, size=8, channels=3, knots=3):
    """Random smooth image in [0, 1]: coarse noise upsampled bilinearly."""
    rng = np.random.default_rng(seed)
    base = rng.random((knots, knots, channels))
    xs = np.linspace(0.0, knots - 1.0, size)
    img = np.empty((size, size, channels))
    for c in range(channels):
        cols = np.array([np.interp(xs, np.arange(knots), base[:, j, c])
                         for j in range(knots)]).T
        img[:, :, c] = np.array([np.interp(xs, np.arange(knots), cols[i, :])
                                 for i in range(size)])
    return img


def image_batch(img):
    """(SignalBatch, SignalDescriptor) for an HxWxC array in [0, 1]."""
    descriptor = inrec.SignalDescriptor("image", img.shape)
    coords = inrec.coordinate_grid(descriptor)
    return inrec.SignalBatch(coords, img.reshape(-1, img.shape[-1])), descriptor


def fast_settings(**overrides):
    """Short-fit encoder settings that stay clear of the proposal cap.

    Starting the multipliers high makes every block's KL grow toward the
    budget from below, so truncated fits cannot leave a block far above it.
    """
    options = dict(fit_iterations=400, inter_block_iterations=3,
                   lambda_init=1.0, learning_rate=1e-3)
    options.update(overrides)
    return inrec.FineTuneSettings(**options)


@pytest.fixture(scope="session")
def mini_dataset():
    return [image_batch(smooth_image(s))[0] for s in (1, 2)]


@pytest.fixture(scope="session")
def mini_trained(mini_dataset):
    schedule = inrec.TrainingSchedule(epochs=3, iters_per_epoch=40,
                                      first_epoch_iters=60, learning_rate=2e-3,
                                      posterior_var_init=1e-4)
    return inrec.learn_prior(mini_dataset, MINI_CONFIG, MINI_BETA, schedule, 11)


@pytest.fixture(scope="session")
def mini_prior(mini_trained):
    return mini_trained[0]


@pytest.fixture(scope="session")
def cifar_scale_prior():
    config = inrec.INRConfig(input_dim=2, output_dim=3, num_layers=4,
                             hidden_units=16, fourier_embeddings=32)
    data = [image_batch(smooth_image(s, size=32, knots=5))[0] for s in (21, 22)]
    schedule = inrec.TrainingSchedule(epochs=2, iters_per_epoch=40,
                                      first_epoch_iters=60, learning_rate=1e-3,
                                      posterior_var_init=1e-5)
    model, _ = inrec.learn_prior(data, config, 1e-5, schedule, 7)
    return model
