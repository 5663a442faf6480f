"""Versioned layout of the 130 raw effect parameters.

Every field maps an unconstrained raw value to physical units through one of
four smooth, strictly increasing maps:

``lin``  lo + (hi - lo) * sigmoid(raw / scale)
``log``  exp(log lo + (log hi - log lo) * sigmoid(raw / scale))
``sym``  hi * tanh(raw), range (-hi, hi)
``exp``  lo + exp(raw), range (lo, inf)
``aff``  lo + hi * raw, unbounded (``lo`` is the offset, ``hi`` the slope)

``scale`` is 1 except for delay times. A raw unit there would otherwise move
the delay by thousands of samples, which makes the loss oscillate in raw space
faster than a 1e-4 finite-difference step can resolve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

LAYOUT_VERSION = "fxmap-layout-1"
NUM_PARAMS = 130
NUM_LINES = 6
DELAY_SCALE = 100.0
FDN_DELAY_SCALE = 100.0


@dataclass(frozen=True)
class Field:
    name: str
    kind: str
    lo: float
    hi: float
    neutral: float  # physical value at the neutral point
    unit: str = ""
    scale: float = 1.0  # raw-space temperature of the lin/log maps


def _householder(n: int) -> np.ndarray:
    return np.eye(n) - 2.0 / n * np.ones((n, n))


def _mid(kind, lo, hi):
    if kind == "lin":
        return (lo + hi) / 2
    if kind == "log":
        return float(np.sqrt(lo * hi))
    return 0.0


def _build() -> list[Field]:
    f: list[Field] = []

    def add(name, kind, lo, hi, neutral=None, unit="", scale=1.0):
        f.append(Field(name, kind, lo, hi, _mid(kind, lo, hi) if neutral is None else neutral, unit, scale))

    peq = [
        ("peq.lowshelf", (30.0, 600.0), (0.3, 1.5)),
        ("peq.peak1", (60.0, 1000.0), (0.2, 10.0)),
        ("peq.peak2", (150.0, 3000.0), (0.2, 10.0)),
        ("peq.peak3", (500.0, 8000.0), (0.2, 10.0)),
        ("peq.peak4", (1500.0, 16000.0), (0.2, 10.0)),
        ("peq.highshelf", (2000.0, 18000.0), (0.3, 1.5)),
    ]
    for band, (flo, fhi), (qlo, qhi) in peq:
        add(f"{band}.freq", "log", flo, fhi, unit="Hz")
        add(f"{band}.gain", "sym", -12.0, 12.0, unit="dB")
        add(f"{band}.q", "log", qlo, qhi)

    add("drc.threshold", "lin", -60.0, 0.0, unit="dB")
    # ratio 1 + e^-20: the compressor is inert at the neutral point
    add("drc.ratio", "exp", 1.0, np.inf, neutral=1.0 + np.exp(-20.0))
    add("drc.knee", "lin", 1.0, 24.0, unit="dB")
    add("drc.attack", "log", 0.1, 100.0, unit="ms")
    add("drc.release", "log", 10.0, 1000.0, unit="ms")
    add("drc.makeup", "sym", -12.0, 12.0, unit="dB")

    add("delay.time", "log", 1.0, 1000.0, unit="ms", scale=DELAY_SCALE)
    add("delay.feedback", "lin", 0.0, 0.9)
    add("delay.cross", "lin", 0.0, 1.0)
    add("delay.damping", "log", 500.0, 20000.0, unit="Hz")
    add("delay.wet", "sym", -12.0, 12.0, unit="dB")
    add("delay.to_reverb", "sym", -1.0, 1.0)

    add("pan.position", "sym", -1.0, 1.0)

    add("send.delay", "sym", -1.0, 1.0)
    add("send.reverb", "sym", -1.0, 1.0)
    add("send.dry", "sym", -12.0, 12.0, unit="dB")

    h = _householder(NUM_LINES)
    for i in range(NUM_LINES):
        for j in range(NUM_LINES):
            add(f"fdn.matrix.{i}{j}", "aff", float(h[i, j]), 0.5, neutral=float(h[i, j]))
    for i, g in enumerate([0.5, -0.5, 0.5, -0.5, 0.5, -0.5]):
        add(f"fdn.input.{i}", "sym", -1.0, 1.0, neutral=g)
    out_l = [0.5, -0.5, 0.5, 0.5, -0.5, -0.5]
    out_r = [0.5, 0.5, -0.5, -0.5, 0.5, -0.5]
    for ch, gains in (("l", out_l), ("r", out_r)):
        for i, g in enumerate(gains):
            add(f"fdn.output.{ch}{i}", "sym", -1.0, 1.0, neutral=g)
    for i, ms in enumerate([23.7, 29.3, 33.1, 37.9, 43.3, 47.9]):
        add(f"fdn.delay.{i}", "log", 5.0, 100.0, neutral=ms, unit="ms", scale=FDN_DELAY_SCALE)
    for i in range(NUM_LINES):
        # decay rates in dB per second keep RT60 within [0.2, 1] s
        add(f"fdn.absorb.{i}.low", "lin", -300.0, -60.0, neutral=-90.0, unit="dB/s")
        add(f"fdn.absorb.{i}.high", "lin", -300.0, -60.0, neutral=-150.0, unit="dB/s")
        add(f"fdn.absorb.{i}.crossover", "log", 200.0, 10000.0, neutral=2000.0, unit="Hz")
        add(f"fdn.absorb.{i}.broadband", "lin", 0.7, 1.0, neutral=0.95)
    tone = [
        ("fdn.tone.lowshelf", (50.0, 500.0)),
        ("fdn.tone.peak1", (200.0, 2000.0)),
        ("fdn.tone.peak2", (1000.0, 8000.0)),
        ("fdn.tone.highshelf", (3000.0, 16000.0)),
    ]
    for band, (flo, fhi) in tone:
        add(f"{band}.freq", "log", flo, fhi, unit="Hz")
        add(f"{band}.gain", "sym", -12.0, 12.0, unit="dB")
        add(f"{band}.q", "log", 0.3, 3.0)
    return f


FIELDS: tuple[Field, ...] = tuple(_build())
assert len(FIELDS) == NUM_PARAMS
INDEX = {fld.name: i for i, fld in enumerate(FIELDS)}

_KINDS = ("lin", "log", "sym", "exp", "aff")
_kind_idx = {k: torch.tensor([i for i, f in enumerate(FIELDS) if f.kind == k], dtype=torch.long) for k in _KINDS}
_lo = torch.tensor([f.lo for f in FIELDS], dtype=torch.float64)
_hi = torch.tensor([f.hi if np.isfinite(f.hi) else 0.0 for f in FIELDS], dtype=torch.float64)
_scale = torch.tensor([f.scale for f in FIELDS], dtype=torch.float64)


def group(prefix: str) -> slice:
    idx = [i for i, f in enumerate(FIELDS) if f.name.startswith(prefix + ".")]
    return slice(idx[0], idx[-1] + 1)


def to_physical(raw: torch.Tensor) -> torch.Tensor:
    """Map raw parameters ``(..., 130)`` to physical units."""
    out = torch.empty_like(raw)
    for kind, idx in _kind_idx.items():
        if len(idx) == 0:
            continue
        r = raw[..., idx]
        lo, hi = _lo[idx], _hi[idx]
        if kind == "lin":
            v = lo + (hi - lo) * torch.sigmoid(r / _scale[idx])
        elif kind == "log":
            v = torch.exp(torch.log(lo) + (torch.log(hi) - torch.log(lo)) * torch.sigmoid(r / _scale[idx]))
        elif kind == "sym":
            v = hi * torch.tanh(r)
        elif kind == "exp":
            v = lo + torch.exp(r)
        else:
            v = lo + hi * r
        out[..., idx] = v
    return out


def _logit(p):
    return np.log(p) - np.log1p(-p)


def to_raw(physical) -> np.ndarray:
    """Inverse of :func:`to_physical` for values strictly inside each range."""
    phys = np.asarray(physical, dtype=np.float64)
    if phys.shape[-1] != NUM_PARAMS:
        raise ValueError(f"expected {NUM_PARAMS} parameters")
    raw = np.empty_like(phys)
    for i, f in enumerate(FIELDS):
        v = phys[..., i]
        if f.kind == "lin":
            raw[..., i] = f.scale * _logit((v - f.lo) / (f.hi - f.lo))
        elif f.kind == "log":
            raw[..., i] = f.scale * _logit((np.log(v) - np.log(f.lo)) / (np.log(f.hi) - np.log(f.lo)))
        elif f.kind == "sym":
            raw[..., i] = np.arctanh(v / f.hi)
        elif f.kind == "exp":
            raw[..., i] = np.log(v - f.lo)
        else:
            raw[..., i] = (v - f.lo) / f.hi
    return raw


NEUTRAL_PHYSICAL = np.array([f.neutral for f in FIELDS])
THETA_NEUTRAL = to_raw(NEUTRAL_PHYSICAL)
THETA_NEUTRAL[INDEX["drc.ratio"]] = -20.0  # exact, avoids log round-off


def neutral() -> np.ndarray:
    return THETA_NEUTRAL.copy()


def with_physical(theta, **values) -> np.ndarray:
    """Copy of ``theta`` with selected fields set from physical values.

    Keyword names use ``__`` for dots, e.g. ``delay__time=100.0``.
    """
    out = np.array(theta, dtype=np.float64, copy=True)
    phys = to_physical(torch.from_numpy(out)).numpy()
    for key, val in values.items():
        phys[INDEX[key.replace("__", ".")]] = val
    raw = to_raw(phys)
    for key in values:
        i = INDEX[key.replace("__", ".")]
        out[i] = raw[i]
    return out


def describe() -> str:
    """Markdown table of the layout."""
    rows = [
        f"Layout `{LAYOUT_VERSION}`, {NUM_PARAMS} parameters.",
        "",
        "| index | field | map | range | raw scale | neutral | unit |",
        "|---|---|---|---|---|---|---|",
    ]
    for i, f in enumerate(FIELDS):
        if f.kind == "sym":
            rng = f"({-f.hi:g}, {f.hi:g})"
        elif f.kind == "exp":
            rng = f"({f.lo:g}, inf)"
        elif f.kind == "aff":
            rng = f"{f.lo:+.4f} + {f.hi:g}*raw"
        else:
            rng = f"({f.lo:g}, {f.hi:g})"
        rows.append(f"| {i} | {f.name} | {f.kind} | {rng} | {f.scale:g} | {f.neutral:.6g} | {f.unit} |")
    return "\n".join(rows) + "\n"
