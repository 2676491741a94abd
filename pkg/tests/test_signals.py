import wave

import numpy as np
import pytest
from PIL import Image

from inrec import SignalDescriptor, coordinate_grid, load_signal, save_signal
from inrec.signals import infer_kind

from conftest import smooth_image


def test_descriptor_validation():
    SignalDescriptor("image", (4, 6, 3))
    SignalDescriptor("audio", (100, 1), sample_rate=16000)
    with pytest.raises(ValueError):
        SignalDescriptor("image", (4, 6))
    with pytest.raises(ValueError):
        SignalDescriptor("image", (0, 6, 3))
    with pytest.raises(ValueError):
        SignalDescriptor("audio", (100, 1))  # missing rate
    with pytest.raises(ValueError):
        SignalDescriptor("video", (4, 6, 3))


def test_descriptor_dimensions():
    image = SignalDescriptor("image", (8, 5, 3))
    assert image.input_dim == 2 and image.output_dim == 3
    assert image.n_points == 40
    audio = SignalDescriptor("audio", (512, 1), sample_rate=16000)
    assert audio.input_dim == 1 and audio.output_dim == 1
    assert audio.n_points == 512


def test_two_by_two_grid_hits_corners():
    grid = coordinate_grid(SignalDescriptor("image", (2, 2, 3)))
    assert np.array_equal(grid, np.array([[-1.0, -1.0], [-1.0, 1.0],
                                          [1.0, -1.0], [1.0, 1.0]]))


def test_grid_is_row_major_and_endpoint_inclusive():
    grid = coordinate_grid(SignalDescriptor("image", (3, 4, 1)))
    assert grid.shape == (12, 2)
    assert grid[0, 0] == -1.0 and grid[-1, 0] == 1.0
    assert grid[0, 1] == -1.0 and grid[3, 1] == 1.0
    # second row of pixels keeps the same column sweep
    assert np.array_equal(grid[4:8, 1], grid[0:4, 1])
    assert np.all(grid[4:8, 0] == 0.0)


def test_single_row_maps_to_zero():
    grid = coordinate_grid(SignalDescriptor("image", (1, 5, 1)))
    assert np.all(grid[:, 0] == 0.0)


def test_audio_grid_is_one_dimensional():
    grid = coordinate_grid(SignalDescriptor("audio", (48000, 1), sample_rate=16000))
    assert grid.shape == (48000, 1)
    assert grid[0, 0] == -1.0 and grid[-1, 0] == 1.0


def test_infer_kind():
    assert infer_kind("x/a.png") == "image"
    assert infer_kind("b.WAV") == "audio"
    with pytest.raises(ValueError):
        infer_kind("c.txt")


def write_png(path, img):
    arr = np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB" if arr.ndim == 3 else "L").save(path)


def write_wav(path, pcm, rate=16000):
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(pcm.astype("<i2").tobytes())


def test_image_load_round_trip(tmp_path):
    src = tmp_path / "img.png"
    write_png(src, smooth_image(0, size=5))
    batch, descriptor = load_signal(src)
    assert descriptor.kind == "image" and descriptor.shape == (5, 5, 3)
    assert batch.coords.shape == (25, 2)
    assert batch.targets.min() >= 0.0 and batch.targets.max() <= 1.0

    out = tmp_path / "out.png"
    save_signal(batch.targets, descriptor, out)
    assert np.array_equal(np.asarray(Image.open(out)), np.asarray(Image.open(src)))


def test_grayscale_image_kept_single_channel(tmp_path):
    src = tmp_path / "gray.png"
    arr = (np.arange(16).reshape(4, 4) * 16).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(src)
    batch, descriptor = load_signal(src)
    assert descriptor.shape == (4, 4, 1)
    assert np.allclose(batch.targets[:, 0], arr.reshape(-1) / 255.0)


def test_three_second_wav_has_48000_rows(tmp_path):
    src = tmp_path / "tone.wav"
    t = np.arange(48000) / 16000.0
    pcm = np.rint(1000 * np.sin(2 * np.pi * 440 * t)).astype(np.int16)
    write_wav(src, pcm)
    batch, descriptor = load_signal(src)
    assert descriptor.kind == "audio"
    assert descriptor.shape == (48000, 1)
    assert descriptor.sample_rate == 16000
    assert batch.coords.shape == (48000, 1)


def test_audio_round_trip_within_one_lsb(tmp_path):
    rng = np.random.default_rng(3)
    pcm = rng.integers(-32768, 32768, size=2000, dtype=np.int16)
    src = tmp_path / "noise.wav"
    write_wav(src, pcm)
    batch, descriptor = load_signal(src)

    out = tmp_path / "back.wav"
    save_signal(batch.targets, descriptor, out)
    with wave.open(str(out), "rb") as handle:
        back = np.frombuffer(handle.readframes(handle.getnframes()), dtype="<i2")
        assert handle.getframerate() == 16000
    assert np.max(np.abs(back.astype(int) - pcm.astype(int))) <= 1


def test_save_clamps_out_of_range(tmp_path):
    descriptor = SignalDescriptor("image", (1, 2, 1))
    out = tmp_path / "clamp.png"
    save_signal(np.array([[1.7], [-0.4]]), descriptor, out)
    arr = np.asarray(Image.open(out))
    assert arr.reshape(-1).tolist() == [255, 0]


def test_save_rejects_wrong_row_count(tmp_path):
    descriptor = SignalDescriptor("image", (2, 2, 1))
    with pytest.raises(ValueError):
        save_signal(np.zeros((3, 1)), descriptor, tmp_path / "bad.png")


def test_load_rejects_kind_mismatch(tmp_path):
    src = tmp_path / "img.png"
    write_png(src, smooth_image(1, size=4))
    with pytest.raises(ValueError):
        load_signal(src, kind="audio")


def test_load_rejects_stereo(tmp_path):
    src = tmp_path / "stereo.wav"
    with wave.open(str(src), "wb") as handle:
        handle.setnchannels(2)
        handle.setsampwidth(2)
        handle.setframerate(16000)
        handle.writeframes(np.zeros(400, dtype="<i2").tobytes())
    with pytest.raises(ValueError):
        load_signal(src)
