import json

import numpy as np
import pytest

from fxmap import cli, io
from fxmap.effects import layout, render
from fxmap.prior import PresetDataset


@pytest.fixture
def files(tmp_path, rng):
    x = 0.1 * rng.standard_normal(22050)
    rows = layout.neutral()[None] + 0.3 * rng.standard_normal((8, 130))
    io.save_dataset(tmp_path / "d.json", PresetDataset.from_rows(rows))
    io.write_wav(tmp_path / "in.wav", x)
    io.write_wav(tmp_path / "ref.wav", render(0.1 * rng.standard_normal(22050), rows[3]))
    io.save_preset(tmp_path / "q.json", rows[5] + 1e-3)
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_usage_errors(capsys):
    assert run("render", "--input", "a", "--params", "b", "--out", "c", "--frobnicate") == 1
    assert "--frobnicate" in capsys.readouterr().err
    assert run() == 1
    assert run("nosuch") == 1


def test_runtime_error(tmp_path):
    assert run("render", "--input", tmp_path / "missing.wav", "--params", "p", "--out", tmp_path / "o.wav") == 2


def test_fit_prior_then_transfer(files):
    d = files
    assert run("fit-prior", "--presets", d / "d.json", "--shrinkage", "1e-3", "--out", d / "prior.json") == 0
    io.load_prior(d / "prior.json")
    log = json.loads((d / "prior.runlog.json").read_text())
    assert log["command"] == "fit-prior" and "numpy" in log["versions"]
    argv = ["transfer", "--input", d / "in.wav", "--reference", d / "ref.wav", "--prior", d / "prior.json",
            "--encoder", "mfcc", "--alpha", "0.1", "--steps", "3", "--lr", "0.01", "--seed", "7",
            "--out", d / "out.wav", "--params-out", d / "th.json"]
    assert run(*argv) == 0
    out = io.read_wav(d / "out.wav")
    assert out.channels == 2 and out.frames == 22050
    first = (d / "th.json").read_bytes(), (d / "out.wav").read_bytes(), (d / "th.runlog.json").read_bytes()
    assert run(*argv) == 0
    assert first == ((d / "th.json").read_bytes(), (d / "out.wav").read_bytes(), (d / "th.runlog.json").read_bytes())


def test_nearest_and_render(files, capsys):
    d = files
    assert run("nearest", "--presets", d / "d.json", "--query", d / "q.json", "--out", d / "nn.json") == 0
    assert capsys.readouterr().out.strip() == "5"
    assert run("render", "--input", d / "in.wav", "--params", d / "nn.json", "--out", d / "r.wav") == 0
    np.testing.assert_allclose(io.read_wav(d / "r.wav").samples,
                               render(io.read_wav(d / "in.wav").mono, io.load_preset(d / "nn.json")), atol=1e-7)


def test_embed_bank_and_embedding_nearest(files, capsys):
    d = files
    assert run("embed", "--presets", d / "d.json", "--source", d / "in.wav", "--encoder", "mir",
               "--out", d / "bank.json") == 0
    assert len(json.loads((d / "bank.json").read_text())) == 16
    assert run("nearest", "--presets", d / "d.json", "--space", "mir", "--reference", d / "ref.wav",
               "--bank", d / "bank.json", "--out", d / "nn.json") == 0
    assert 0 <= int(capsys.readouterr().out) < 8
