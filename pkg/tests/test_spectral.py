import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from springverb import SpectralError, StftConfig, Tensor, fft, stft, stft_magnitude
from springverb.gradcheck import check_gradients
from springverb.spectral import frame_count, hann_window, rfft


def test_fft_examples():
    np.testing.assert_allclose(fft([1, 0, 0, 0]), [1, 1, 1, 1])
    np.testing.assert_allclose(fft(np.ones(4)), [4, 0, 0, 0], atol=1e-12)


def test_fft_matches_numpy(rng):
    x = rng.normal(size=(3, 256)) + 1j * rng.normal(size=(3, 256))
    np.testing.assert_allclose(fft(x), np.fft.fft(x, axis=-1), atol=1e-9)
    np.testing.assert_allclose(fft(fft(x), inverse=True), x, atol=1e-12)
    np.testing.assert_allclose(rfft(x.real), np.fft.rfft(x.real, axis=-1), atol=1e-9)


def test_fft_rejects_other_lengths():
    with pytest.raises(SpectralError, match="power of two"):
        fft(np.ones(12))


def test_config_validation():
    with pytest.raises(SpectralError):
        StftConfig(fft_size=1000)
    with pytest.raises(SpectralError):
        StftConfig(fft_size=512, hop=256, win_length=1024)
    assert StftConfig.from_fft(2048) == StftConfig(2048, 512, 2048)


def test_window_is_periodic_hann_centred():
    window = hann_window(8, 16)
    assert np.all(window[:4] == 0) and np.all(window[12:] == 0)
    np.testing.assert_allclose(window[4:12], 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8))


@given(st.integers(512, 5000), st.sampled_from([128, 256, 512]))
def test_frame_count(length, hop):
    cfg = StftConfig(fft_size=512, hop=hop, win_length=512)
    frames = frame_count(length, cfg)
    assert frames == 1 + (length - 512) // hop
    assert (frames - 1) * hop + 512 <= length < frames * hop + 512


def test_stft_matches_framewise_numpy(rng):
    cfg = StftConfig(fft_size=256, hop=64, win_length=128)
    x = rng.normal(size=1000)
    window = hann_window(128, 256)
    expected = []
    for f in range(frame_count(1000, cfg)):
        frame = np.zeros(256)
        frame[64:192] = x[f * 64:f * 64 + 128]
        expected.append(np.fft.rfft(frame * window))
    np.testing.assert_allclose(stft(x, cfg), np.array(expected), atol=1e-9)


def test_magnitude_examples():
    cfg = StftConfig.from_fft(512)
    assert np.all(stft_magnitude(Tensor(np.zeros(2048)), cfg).numpy() == 0)

    k, rate = 37, 16000
    t = np.arange(4096) / rate
    tone = np.sin(2 * np.pi * k * rate / 512 * t)
    mag = stft_magnitude(Tensor(tone), cfg).numpy()
    assert mag.shape == (frame_count(4096, cfg), 257)
    assert np.all(mag.argmax(axis=-1) == k)


def test_magnitude_is_batched(rng):
    cfg = StftConfig.from_fft(256)
    x = rng.normal(size=(2, 1, 1024))
    batched = stft_magnitude(Tensor(x), cfg).numpy()
    np.testing.assert_allclose(batched[1, 0], stft_magnitude(Tensor(x[1, 0]), cfg).numpy())


def test_short_signal_is_rejected():
    with pytest.raises(SpectralError, match="shorter than window"):
        stft_magnitude(Tensor(np.zeros(100)), StftConfig.from_fft(512))


def test_magnitude_gradient(float64, rng):
    cfg = StftConfig(fft_size=128, hop=32, win_length=96)
    x = Tensor(rng.normal(size=(2, 400)), requires_grad=True)
    weights = Tensor(rng.normal(size=(2, frame_count(400, cfg), cfg.bins)))

    def loss():
        return (stft_magnitude(x, cfg) * weights).sum()

    rows = check_gradients(loss, {"x": x}, rng, samples=16)
    assert rows[0].passed, rows[0].rel_error


@given(arrays(np.float64, 256, elements=st.floats(-1, 1)))
def test_fft_preserves_energy(x):
    spectrum = fft(x)
    np.testing.assert_allclose(np.sum(np.abs(spectrum) ** 2), 256 * np.sum(x * x),
                               rtol=1e-9, atol=1e-9)


@given(arrays(np.float64, 600, elements=st.floats(-1, 1)),
       st.sampled_from([(256, 64, 128), (128, 32, 128), (256, 128, 256)]))
def test_stft_frame_energy(x, shape):
    cfg = StftConfig(*shape)
    power = np.abs(stft(x, cfg)) ** 2
    energy = power[:, 0] + power[:, -1] + 2.0 * power[:, 1:-1].sum(axis=-1)
    window = hann_window(cfg.win_length, cfg.fft_size)
    offset = (cfg.fft_size - cfg.win_length) // 2
    for f in range(frame_count(len(x), cfg)):
        frame = np.zeros(cfg.fft_size)
        frame[offset:offset + cfg.win_length] = x[f * cfg.hop:f * cfg.hop + cfg.win_length]
        expected = cfg.fft_size * np.sum((frame * window) ** 2)
        np.testing.assert_allclose(energy[f], expected, rtol=1e-6, atol=1e-9)


@given(arrays(np.float64, 512, elements=st.floats(-1, 1)),
       arrays(np.float64, 512, elements=st.floats(-1, 1)),
       st.floats(-4, 4), st.floats(-4, 4))
def test_stft_is_linear(x, y, a, b):
    cfg = StftConfig(fft_size=128, hop=32, win_length=96)
    np.testing.assert_allclose(stft(a * x + b * y, cfg), a * stft(x, cfg) + b * stft(y, cfg),
                               atol=1e-9)
