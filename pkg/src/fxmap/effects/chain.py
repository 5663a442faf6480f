"""Differentiable vocal effects chain: mono in, stereo out.

Routing::

    x -> PEQ -> DRC -+-> Panner ----------------+-> out
                     +-> Delay ----+------------+
                     +-------------+-> Reverb --+

PEQ and DRC run sample by sample. The panner is a pair of gains. Delay and
reverb are linear and time invariant, so their combined stereo response is
built on an FFT grid and applied by a single convolution. Delay and reverb
tails past the input length are discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .. import dsp
from .._kernels import ballistics, biquad, fdn_shelf_response, irfft, pingpong_response, rfft, wet_mix
from . import layout
from .layout import INDEX, NUM_LINES, NUM_PARAMS

REVERB_IR_LENGTH = 2**16
FDN_MATRIX_GAIN = 0.999


@dataclass
class PhysicalParams:
    """Physical view of a raw parameter vector (numpy, SI-ish units)."""

    peq: np.ndarray  # (6, 3): freq Hz, gain dB, Q
    drc: dict
    delay: dict
    pan: float
    sends: dict
    fdn: dict
    flat: np.ndarray = field(repr=False)


def _check_theta(theta) -> torch.Tensor:
    t = torch.as_tensor(theta, dtype=torch.float64)
    if t.shape[-1:] != (NUM_PARAMS,) or t.ndim != 1:
        raise ValueError(f"expected {NUM_PARAMS} parameters")
    if not torch.all(torch.isfinite(t)):
        raise ValueError("parameters must be finite")
    return t


def map_params(raw) -> PhysicalParams:
    t = _check_theta(raw)
    p = layout.to_physical(t).numpy()

    def named(prefix):
        sl = layout.group(prefix)
        return {layout.FIELDS[i].name[len(prefix) + 1 :]: float(p[i]) for i in range(sl.start, sl.stop)}

    fdn = p[layout.group("fdn")]
    return PhysicalParams(
        peq=p[layout.group("peq")].reshape(6, 3),
        drc=named("drc"),
        delay=named("delay"),
        pan=float(p[INDEX["pan.position"]]),
        sends=named("send"),
        fdn={
            "matrix": fdn[:36].reshape(6, 6),
            "input": fdn[36:42],
            "output": fdn[42:54].reshape(2, 6),
            "delay_ms": fdn[54:60],
            "absorption": fdn[60:84].reshape(6, 4),
            "tone": fdn[84:96].reshape(4, 3),
        },
        flat=p,
    )


# RBJ cookbook sections; every argument is a tensor of matching shape.
def _section(kind: str, freq, gain_db, q, sr: float):
    A = 10.0 ** (gain_db / 40.0)
    w0 = 2 * math.pi * freq / sr
    cw, sw = torch.cos(w0), torch.sin(w0)
    alpha = sw / (2 * q)
    if kind == "peak":
        b = (1 + alpha * A, -2 * cw, 1 - alpha * A)
        a = (1 + alpha / A, -2 * cw, 1 - alpha / A)
    elif kind == "lowshelf":
        sa = 2 * torch.sqrt(A) * alpha
        b = (A * ((A + 1) - (A - 1) * cw + sa), 2 * A * ((A - 1) - (A + 1) * cw), A * ((A + 1) - (A - 1) * cw - sa))
        a = ((A + 1) + (A - 1) * cw + sa, -2 * ((A - 1) + (A + 1) * cw), (A + 1) + (A - 1) * cw - sa)
    elif kind == "highshelf":
        sa = 2 * torch.sqrt(A) * alpha
        b = (A * ((A + 1) + (A - 1) * cw + sa), -2 * A * ((A - 1) + (A + 1) * cw), A * ((A + 1) + (A - 1) * cw - sa))
        a = ((A + 1) - (A - 1) * cw + sa, 2 * ((A - 1) - (A + 1) * cw), (A + 1) - (A - 1) * cw - sa)
    else:
        raise ValueError(kind)
    return torch.stack([b[0] / a[0], b[1] / a[0], b[2] / a[0], a[1] / a[0], a[2] / a[0]])


_BAND_KINDS = ("lowshelf", "peak", "peak", "peak", "peak", "highshelf")
_TONE_KINDS = ("lowshelf", "peak", "peak", "highshelf")


def _section_response(coeffs: torch.Tensor, z1: torch.Tensor) -> torch.Tensor:
    """Evaluate a normalised biquad at ``z1 = exp(-j w)``."""
    num = coeffs[0] + coeffs[1] * z1 + coeffs[2] * z1 * z1
    den = 1 + coeffs[3] * z1 + coeffs[4] * z1 * z1
    return num / den


def compressor_gain_db(level_db, threshold, ratio, knee):
    """Static soft-knee curve: gain in dB for an input level in dB."""
    over = level_db - threshold
    slope = 1 / ratio - 1
    above = slope * over
    inside = slope * (over + knee / 2) ** 2 / (2 * knee)
    zero = torch.zeros_like(level_db)
    return torch.where(2 * over < -knee, zero, torch.where(2 * over > knee, above, inside))


def fft_length(minimum: int) -> int:
    """Smallest ``2**a * 3**b`` not below ``minimum``."""
    best = 1 << max(0, (minimum - 1).bit_length())
    p3 = 1
    while p3 < best:
        p2 = p3
        while p2 < minimum:
            p2 *= 2
        best = min(best, p2)
        p3 *= 3
    return best


class EffectsChain:
    def __init__(self, sample_rate: int = dsp.SAMPLE_RATE, max_length: int = 600 * dsp.SAMPLE_RATE):
        if sample_rate != dsp.SAMPLE_RATE:
            raise ValueError(f"expected {dsp.SAMPLE_RATE} Hz, got {sample_rate}")
        self.sample_rate = sample_rate
        self.max_length = max_length
        w = 2 * math.pi * torch.arange(REVERB_IR_LENGTH // 2 + 1, dtype=torch.float64) / REVERB_IR_LENGTH
        self._rev_z1 = torch.exp(-1j * w)

    # stages ---------------------------------------------------------------
    def peq(self, x: torch.Tensor, phys: torch.Tensor) -> torch.Tensor:
        bands = phys[layout.group("peq")].reshape(6, 3)
        for kind, band in zip(_BAND_KINDS, bands):
            x = biquad(x, _section(kind, band[0], band[1], band[2], self.sample_rate))
        return x

    def drc(self, x: torch.Tensor, phys: torch.Tensor) -> torch.Tensor:
        sr = self.sample_rate
        thr, ratio, knee, att, rel, makeup = phys[layout.group("drc")]
        ca = 1 - torch.exp(-1000.0 / (att * sr))
        cr = 1 - torch.exp(-1000.0 / (rel * sr))
        env = ballistics(x * x, ca, cr)
        level = 10 * torch.log10(env + 1e-10)
        gain = compressor_gain_db(level, thr, ratio, knee) + makeup
        return x * 10.0 ** (gain / 20)

    def pan_gains(self, phys: torch.Tensor) -> torch.Tensor:
        """Constant-power law: angle (p + 1) * pi / 4, gains (cos, sin)."""
        angle = (phys[INDEX["pan.position"]] + 1) * (math.pi / 4)
        return torch.stack([torch.cos(angle), torch.sin(angle)])

    def delay_response(self, phys: torch.Tensor, n: int, n_fft: int) -> torch.Tensor:
        """Stereo ping-pong echo train on an ``n_fft`` grid, unit send/wet.

        One line per channel, each with a fractional delay and a one-pole
        damping filter. The input enters the left line; ``cross`` sets how much
        of each line's feedback goes to the other side (1 = pure ping-pong).
        Only the echoes starting before ``n`` are summed, so the result has no
        wrap-around within the first ``n`` samples.
        """
        sr = self.sample_rate
        d = phys[INDEX["delay.time"]] * (sr / 1000.0)
        pole = torch.exp(-2 * math.pi * phys[INDEX["delay.damping"]] / sr)
        echoes = max(1, math.ceil(n / d.item()))
        return pingpong_response(d, phys[INDEX["delay.feedback"]], phys[INDEX["delay.cross"]], pole, echoes, n_fft)

    def feedback_matrix(self, phys: torch.Tensor) -> torch.Tensor:
        w = phys[layout.group("fdn.matrix")].reshape(6, 6)
        return FDN_MATRIX_GAIN * w / torch.linalg.matrix_norm(w, ord=2)

    def reverb_ir(self, phys: torch.Tensor) -> torch.Tensor:
        """Stereo FDN impulse response of length ``REVERB_IR_LENGTH``."""
        sr = self.sample_rate
        fdn = phys[layout.group("fdn")]
        A = self.feedback_matrix(phys)
        b = fdn[36:42]
        C = fdn[42:54].reshape(2, 6)
        delays = fdn[54:60] * (sr / 1000.0)
        absorb = fdn[60:84].reshape(NUM_LINES, 4)
        seconds = delays / sr
        Y = fdn_shelf_response(
            delays,
            10.0 ** (absorb[:, 0] * seconds / 20),
            10.0 ** (absorb[:, 1] * seconds / 20),
            torch.exp(-2 * math.pi * absorb[:, 2] / sr),
            absorb[:, 3],
            A,
            b,
            C,
            REVERB_IR_LENGTH,
        )
        tone = fdn[84:96].reshape(4, 3)
        for kind, band in zip(_TONE_KINDS, tone):
            Y = Y * _section_response(_section(kind, band[0], band[1], band[2], sr), self._rev_z1)
        return torch.fft.irfft(Y, n=REVERB_IR_LENGTH)

    # full chain -----------------------------------------------------------
    def forward(self, x: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
        """Render ``x`` of shape ``(N,)`` or ``(batch, N)`` to ``(..., 2, N)``."""
        n = x.shape[-1]
        phys = layout.to_physical(theta)
        u = self.drc(self.peq(x, phys), phys)
        direct = phys[INDEX["send.dry"]]
        dry = 10.0 ** (direct / 20) * self.pan_gains(phys)
        out = dry[:, None] * u[..., None, :]

        n_fft = fft_length(2 * n - 1)
        delay_gain = phys[INDEX["send.delay"]] * 10.0 ** (phys[INDEX["delay.wet"]] / 20)
        dly = self.delay_response(phys, n, n_fft)
        rev = rfft(self.reverb_ir(phys)[:, : min(n, REVERB_IR_LENGTH)], n_fft)
        U = rfft(u, n_fft)
        Y = wet_mix(U, dly, rev, delay_gain, phys[INDEX["send.reverb"]], phys[INDEX["delay.to_reverb"]])
        wet = irfft(Y, n_fft)[..., :n]
        return out + wet

    def render(self, x, theta) -> np.ndarray:
        """Render a mono buffer with raw parameters; returns ``(2, N)`` numpy."""
        if isinstance(x, dsp.AudioBuffer):
            x.require_rate()
            if x.channels != 1:
                raise ValueError("expected mono input")
            x = x.mono
        xa = np.asarray(x, dtype=np.float64)
        if xa.ndim != 1:
            raise ValueError("expected mono input")
        if xa.shape[0] > self.max_length:
            raise ValueError(f"input longer than maximum render length {self.max_length}")
        t = _check_theta(theta)
        with torch.no_grad():
            return self.forward(torch.from_numpy(xa), t).numpy()


_default_chain: EffectsChain | None = None


def default_chain() -> EffectsChain:
    global _default_chain
    if _default_chain is None:
        _default_chain = EffectsChain()
    return _default_chain


def render(x, theta, chain: EffectsChain | None = None) -> np.ndarray:
    return (chain or default_chain()).render(x, theta)
