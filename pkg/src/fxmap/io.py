"""WAV and JSON artifact I/O."""

from __future__ import annotations

import json
import platform
import warnings
from pathlib import Path

import numpy as np
import scipy.io.wavfile

from .dsp import SAMPLE_RATE, AudioBuffer
from .effects.layout import LAYOUT_VERSION, NUM_PARAMS
from .prior import GaussianPrior, PresetDataset

_INT_SCALE = {np.dtype("int16"): 32768.0, np.dtype("int32"): 2.0**31}


def read_wav(path) -> AudioBuffer:
    """Load PCM16, PCM24 or float32 audio as doubles in [-1, 1].

    scipy left-justifies 24-bit samples into int32, so both 24- and 32-bit PCM
    are scaled by 2^31.
    """
    rate, data = scipy.io.wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise ValueError(f"{path}: sample rate: expected {SAMPLE_RATE}, got {rate}")
    if data.dtype in _INT_SCALE:
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: sample format: unsupported {data.dtype}")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    if samples.shape[0] not in (1, 2):
        raise ValueError(f"{path}: channels: expected 1 or 2, got {samples.shape[0]}")
    return AudioBuffer(np.ascontiguousarray(samples), rate)


def write_wav(path, audio) -> None:
    """Write a float32 WAV at 44.1 kHz; samples beyond +-1 are kept as is."""
    buf = audio if isinstance(audio, AudioBuffer) else AudioBuffer(audio)
    buf.require_rate()
    if np.max(np.abs(buf.samples), initial=0.0) > 1.0:
        warnings.warn(f"{path}: samples exceed full scale; written unclamped", RuntimeWarning, stacklevel=2)
    data = buf.samples.astype(np.float32)
    scipy.io.wavfile.write(path, SAMPLE_RATE, data[0] if buf.channels == 1 else np.ascontiguousarray(data.T))


# JSON -------------------------------------------------------------------------


def dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _check_version(obj, path):
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected a JSON object")
    version = obj.get("layout_version")
    if version != LAYOUT_VERSION:
        raise ValueError(f"{path}: layout_version {version!r} does not match {LAYOUT_VERSION!r}")
    if obj.get("M") != NUM_PARAMS:
        raise ValueError(f"{path}: M must be {NUM_PARAMS}, got {obj.get('M')!r}")


def _row(values, where) -> np.ndarray:
    row = np.asarray(values, dtype=np.float64)
    if row.shape != (NUM_PARAMS,):
        raise ValueError(f"{where}: expected {NUM_PARAMS} values, got shape {row.shape}")
    if not np.all(np.isfinite(row)):
        raise ValueError(f"{where}: values must be finite")
    return row


def preset_record(theta) -> dict:
    return {"layout_version": LAYOUT_VERSION, "M": NUM_PARAMS, "raw": [float(v) for v in _row(theta, "preset")]}


def save_preset(path, theta, **extra) -> None:
    dump_json(path, dict(preset_record(theta), **extra))


def load_preset(path) -> np.ndarray:
    obj = load_json(path)
    _check_version(obj, path)
    if "raw" not in obj:
        raise ValueError(f"{path}: not a single preset (missing 'raw')")
    return _row(obj["raw"], path)


def save_dataset(path, data: PresetDataset) -> None:
    dump_json(path, {
        "layout_version": LAYOUT_VERSION,
        "M": NUM_PARAMS,
        "count": data.count,
        "data": [[float(v) for v in data[i]] for i in range(data.count)],
    })


def load_dataset(path) -> PresetDataset:
    obj = load_json(path)
    _check_version(obj, path)
    if "data" not in obj:
        raise ValueError(f"{path}: not a preset dataset (missing 'data')")
    rows = [_row(r, f"{path}: row {i}") for i, r in enumerate(obj["data"])]
    if obj.get("count") != len(rows):
        raise ValueError(f"{path}: count {obj.get('count')!r} does not match {len(rows)} rows")
    if not rows:
        raise ValueError(f"{path}: dataset is empty")
    return PresetDataset.from_rows(rows, source={"path": str(path)})


def save_prior(path, prior: GaussianPrior) -> None:
    dump_json(path, {
        "layout_version": LAYOUT_VERSION,
        "M": NUM_PARAMS,
        "shrinkage": prior.shrinkage,
        "mean": [float(v) for v in prior.mean],
        "covariance": [[float(v) for v in r] for r in prior.cov],
    })


def load_prior(path) -> GaussianPrior:
    obj = load_json(path)
    _check_version(obj, path)
    mean = _row(obj["mean"], f"{path}: mean")
    cov = np.asarray(obj["covariance"], dtype=np.float64)
    if cov.shape != (NUM_PARAMS, NUM_PARAMS):
        raise ValueError(f"{path}: covariance must be {NUM_PARAMS}x{NUM_PARAMS}")
    return GaussianPrior(mean, cov, obj.get("shrinkage", 0.0))


def versions() -> dict:
    import numba
    import scipy
    import torch

    from . import __version__

    return {
        "fxmap": __version__,
        "layout_version": LAYOUT_VERSION,
        "numba": numba.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "scipy": scipy.__version__,
        "torch": torch.__version__,
    }


def write_run_log(path, command: str, config: dict, seeds: dict, outputs=()) -> None:
    """Run-log JSON. No timestamps, so identical runs give identical logs."""
    dump_json(path, {
        "command": command,
        "config": config,
        "outputs": [str(p) for p in outputs],
        "seeds": seeds,
        "versions": versions(),
    })


def run_log_path(output) -> Path:
    p = Path(output)
    return p.with_name(p.stem + ".runlog.json")
