import json

import numpy as np
import pytest

from fxmap import protocol
from fxmap.effects import layout
from fxmap.encoders import EmbeddingBank, StereoEmbedding, StyleEmbedding
from fxmap.objective import ReferenceSet
from fxmap.prior import PresetDataset, fit_gaussian

SR = 44100


def test_fully_active_44s_gives_two_and_two(rng):
    n = 44 * SR
    split = protocol.segment_and_split(0.1 * rng.standard_normal(n), 0.1 * rng.standard_normal((2, n)), 3)
    assert len(split.a) == len(split.b) == 2
    segs = sorted(split.a + split.b)
    assert segs == [(k * 11 * SR, (k + 1) * 11 * SR) for k in range(4)]


def test_silent_segments_dropped(rng):
    n = 55 * SR
    wet = 0.1 * rng.standard_normal((2, n))
    for k in (1, 3):
        wet[:, k * 11 * SR : (k + 1) * 11 * SR] = 0.0
    split = protocol.segment_and_split(np.zeros(n), wet, 0)
    kept = sorted(s[0] // (11 * SR) for s in split.a + split.b)
    assert kept == [0, 2, 4]
    assert abs(len(split.a) - len(split.b)) <= 1


def test_split_is_seeded(rng):
    n = 88 * SR
    dry, wet = np.zeros(n), 0.1 * rng.standard_normal((2, n))
    s1 = protocol.segment_and_split(dry, wet, [7, 1])
    s2 = protocol.segment_and_split(dry, wet, [7, 1])
    assert s1.a == s2.a and s1.b == s2.b


def test_insufficient_segments(rng):
    n = 15 * SR
    with pytest.raises(ValueError, match="insufficient segments"):
        protocol.segment_and_split(np.zeros(n), 0.1 * rng.standard_normal((2, n)), 0)


def test_mean_baseline_is_bit_exact(rng):
    pr = fit_gaussian(PresetDataset(rng.standard_normal((130, 20))))
    out = protocol.mean_baseline(pr)
    assert np.array_equal(out, pr.mean) and out is not pr.mean


def test_nn_theta_hand_placed():
    base = layout.neutral()
    data = PresetDataset(np.stack([base + 3.0, base - 1.0, base + 0.5], axis=1))
    assert protocol.nn_index(base, data) == 2
    assert protocol.nn_index(base + 3.0, data) == 0


def test_nn_tie_goes_to_lowest_index(rng):
    col = rng.standard_normal(130)
    data = PresetDataset(np.stack([col + 5, col, col, col + 1], axis=1))
    assert protocol.nn_index(col, data) == 1


def test_nn_empty_is_an_error():
    with pytest.raises(ValueError, match="empty"):
        protocol.nn_index(np.zeros(130), PresetDataset(np.zeros((130, 0))))


def _unit(rng, d=4):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_nn_embedding_space(rng):
    enc = "mfcc"
    vecs = [_unit(rng) for _ in range(6)]
    bank = EmbeddingBank(enc, {f"{k}/{c}": StyleEmbedding(vecs[2 * k + i], enc)
                               for k in range(3) for i, c in enumerate(("mid", "side"))})
    data = PresetDataset(rng.standard_normal((130, 3)))
    refs = ReferenceSet([StereoEmbedding(StyleEmbedding(vecs[2], enc), StyleEmbedding(vecs[3], enc), False)], enc)
    assert protocol.nn_index(refs, data, "mfcc", bank) == 1
    with pytest.raises(ValueError):
        protocol.nn_index(refs, data, "mir", bank)


def test_report_medians_and_json(rng):
    tracks = [{"track_id": f"t{i}", "scores": {k: float(v) for k, v in zip(protocol.SCORE_KEYS, rng.random(5))}}
              for i in range(4)]
    tracks.append({"track_id": "bad", "error": "ValueError: insufficient segments"})
    rep = protocol.EvalReport("mean", {}, 0, tracks, protocol.EvalReport.compute_medians(tracks))
    assert rep.check_medians()
    vals = sorted(t["scores"]["pmse"] for t in tracks[:4])
    assert rep.medians["pmse"] == (vals[1] + vals[2]) / 2
    back = protocol.EvalReport.from_dict(json.loads(rep.to_json()))
    assert back.check_medians() and back.to_json() == rep.to_json()


def test_run_protocol_records_failures(rng):
    n = 22 * SR
    dry = 0.1 * rng.standard_normal(n)
    theta = layout.neutral()
    from fxmap.effects import render

    good = protocol.TrackEntry("a", dry, render(dry, theta), theta)
    short = protocol.TrackEntry("b", dry[: 12 * SR], render(dry[: 12 * SR], theta), theta)
    pr = fit_gaussian(PresetDataset(np.tile(theta[:, None], (1, 3))))
    rep = protocol.run_protocol(protocol.Manifest([short, good], prior=pr), protocol.Method("mean"), seed=1)
    assert [t["track_id"] for t in rep.tracks] == ["a", "b"]
    assert "insufficient segments" in rep.tracks[1]["error"]
    assert rep.medians["pmse"] == 0.0
    assert rep.medians["mss_lr"] == pytest.approx(0.0, abs=1e-12)
