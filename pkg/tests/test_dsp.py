import numpy as np
import pytest
import torch

from fxmap import dsp


def test_mid_side_round_trip(rng):
    s = rng.standard_normal((2, 1000))
    ms = dsp.mid_side(s)
    back = np.stack([(ms.mid + ms.side) / 2, (ms.mid - ms.side) / 2])
    assert np.max(np.abs(back - s)) <= 1e-9


def test_frame_matches_unfold(rng):
    x = torch.from_numpy(rng.standard_normal((2, 5000)))
    for size, hop in ((128, 32), (512, 128), (2048, 1024), (100, 30)):
        frames = dsp.frame(x, size, hop)
        count = dsp.num_frames(5000, size, hop)
        pad = torch.nn.functional.pad(x, (0, (count - 1) * hop + size - 5000))
        ref = pad.unfold(-1, size, hop)
        assert frames.shape == ref.shape and torch.equal(frames, ref)


def test_stft_matches_torch(rng):
    x = torch.from_numpy(rng.standard_normal(3000))
    ours = dsp.stft_torch(x, 512, 128)
    win = torch.hann_window(512, periodic=True, dtype=torch.float64)
    ref = torch.stft(x[:2944], 512, 128, window=win, center=False, return_complex=True)
    ours = ours[:, : ref.shape[1]]
    assert ours.shape == ref.shape and torch.allclose(ours, ref, atol=1e-10)


def test_activity_fraction():
    x = np.zeros(4096)
    x[:2048] = 0.1
    assert dsp.activity_fraction(x) == 0.5
    assert dsp.activity_fraction(np.full(1024, 1e-4)) == 0.0  # -80 dB


def test_audio_buffer_validation():
    with pytest.raises(ValueError):
        dsp.AudioBuffer(np.zeros((3, 10)))
    with pytest.raises(ValueError, match="expected 44100"):
        dsp.AudioBuffer(np.zeros(10), 48000).require_rate()
