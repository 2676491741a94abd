"""Loading signals into coordinate/value batches and writing them back.

Images (PNG/PPM, 8-bit) become 2-D grids with RGB or gray channels as
outputs; audio (WAV, 16-bit PCM mono) becomes a 1-D grid. Coordinates are
endpoint-inclusive in [-1, 1] per axis and values live in [0, 1], so the
quantize/de-quantize pair round-trips losslessly.
"""

from __future__ import annotations

import dataclasses
import wave

import numpy as np
from PIL import Image

from .network import SignalBatch

IMAGE_EXTENSIONS = (".png", ".ppm", ".pgm")
AUDIO_EXTENSIONS = (".wav",)


@dataclasses.dataclass(frozen=True)
class SignalDescriptor:
    """Shape and kind of one signal; enough to rebuild its coordinate grid."""

    kind: str
    shape: tuple
    sample_rate: int | None = None

    def __post_init__(self):
        if self.kind not in ("image", "audio"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        shape = tuple(int(s) for s in self.shape)
        if any(s < 1 for s in shape):
            raise ValueError("shape entries must be positive")
        if self.kind == "image" and len(shape) != 3:
            raise ValueError("image shape must be (height, width, channels)")
        if self.kind == "audio":
            if len(shape) != 2 or shape[1] != 1:
                raise ValueError("audio shape must be (n_samples, 1)")
            if not self.sample_rate or self.sample_rate < 1:
                raise ValueError("audio needs a positive sample rate")
        object.__setattr__(self, "shape", shape)

    @property
    def input_dim(self):
        return 2 if self.kind == "image" else 1

    @property
    def output_dim(self):
        return self.shape[2] if self.kind == "image" else 1

    @property
    def n_points(self):
        if self.kind == "image":
            return self.shape[0] * self.shape[1]
        return self.shape[0]


def _axis_positions(size: int) -> np.ndarray:
    if size == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(size) / (size - 1)


def coordinate_grid(descriptor: SignalDescriptor) -> np.ndarray:
    """Endpoint-inclusive [-1, 1] grid, rows in row-major scan order."""
    if descriptor.kind == "image":
        h, w, _ = descriptor.shape
        rows = _axis_positions(h)
        cols = _axis_positions(w)
        grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
        return np.stack([grid_r.ravel(), grid_c.ravel()], axis=1)
    return _axis_positions(descriptor.shape[0])[:, None]


def infer_kind(path) -> str:
    name = str(path).lower()
    if name.endswith(IMAGE_EXTENSIONS):
        return "image"
    if name.endswith(AUDIO_EXTENSIONS):
        return "audio"
    raise ValueError(f"cannot infer signal kind from {path!r}")


def _load_image(path):
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    descriptor = SignalDescriptor("image", arr.shape)
    values = arr.reshape(-1, arr.shape[2]) / 255.0
    return values, descriptor


def _load_audio(path):
    with wave.open(str(path), "rb") as wav:
        if wav.getnchannels() != 1:
            raise ValueError("only mono audio is supported")
        if wav.getsampwidth() != 2:
            raise ValueError("only 16-bit PCM audio is supported")
        rate = wav.getframerate()
        frames = wav.readframes(wav.getnframes())
    pcm = np.frombuffer(frames, dtype="<i2").astype(np.float64)
    descriptor = SignalDescriptor("audio", (pcm.shape[0], 1), sample_rate=rate)
    values = ((pcm + 32768.0) / 65535.0)[:, None]
    return values, descriptor


def load_signal(path, kind: str | None = None):
    """Read a file into (SignalBatch, SignalDescriptor).

    kind defaults to the file extension; passing it explicitly guards
    against surprise (a .wav handed to an image pipeline is an error, not a
    conversion).
    """
    inferred = infer_kind(path)
    if kind is not None and kind != inferred:
        raise ValueError(f"{path!r} looks like {inferred}, not {kind}")
    if inferred == "image":
        values, descriptor = _load_image(path)
    else:
        values, descriptor = _load_audio(path)
    coords = coordinate_grid(descriptor)
    return SignalBatch(coords, values), descriptor


def save_signal(values, descriptor: SignalDescriptor, path):
    """Clamp to [0, 1], quantize to the container depth, and write."""
    values = np.asarray(values, dtype=np.float64)
    expected = (descriptor.n_points, descriptor.output_dim)
    if values.shape != expected:
        raise ValueError(f"predictions have shape {values.shape}, expected {expected}")
    clipped = np.clip(values, 0.0, 1.0)
    if descriptor.kind == "image":
        codes = np.rint(clipped * 255.0).astype(np.uint8)
        arr = codes.reshape(descriptor.shape)
        img = Image.fromarray(arr[:, :, 0] if descriptor.shape[2] == 1 else arr,
                              mode="L" if descriptor.shape[2] == 1 else "RGB")
        img.save(path)
    else:
        pcm = np.rint(clipped[:, 0] * 65535.0) - 32768.0
        pcm = np.clip(pcm, -32768, 32767).astype("<i2")
        with wave.open(str(path), "wb") as wav:
            wav.setnchannels(1)
            wav.setsampwidth(2)
            wav.setframerate(descriptor.sample_rate)
            wav.writeframes(pcm.tobytes())
