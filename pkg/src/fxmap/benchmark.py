"""Closed-loop calibration benchmark.

A synthetic preset population is drawn around the neutral preset, a prior is
fitted to it, and ground-truth presets from the same population are recovered
from rendered reference audio with and without the prior term.
"""

from __future__ import annotations

import statistics
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cli, io, metrics
from .effects import layout
from .effects.chain import render
from .prior import PresetDataset, fit_gaussian
from .synth import vocal_like

LATENT_DIM = 8
LATENT_SCALE = 0.6
NOISE_SCALE = 0.05


@dataclass
class PresetPopulation:
    """``theta = neutral + A z + noise`` with standard normal ``z``."""

    basis: np.ndarray
    noise: float = NOISE_SCALE

    @classmethod
    def seeded(cls, seed, latent_dim: int = LATENT_DIM, scale: float = LATENT_SCALE):
        rng = np.random.default_rng(seed)
        return cls(scale * rng.standard_normal((layout.NUM_PARAMS, latent_dim)) / np.sqrt(latent_dim))

    def draw(self, rng, n: int) -> np.ndarray:
        z = rng.standard_normal((self.basis.shape[1], n))
        eps = self.noise * rng.standard_normal((self.basis.shape[0], n))
        return layout.neutral()[:, None] + self.basis @ z + eps


@dataclass
class BenchmarkResult:
    pmse: dict = field(default_factory=dict)  # alpha -> per-trial values
    mss: dict = field(default_factory=dict)

    def median(self, table: str, alpha: float) -> float:
        return statistics.median(getattr(self, table)[alpha])


def run_benchmark(trials: int = 10, steps: int = 300, alphas=(0.0, 0.1), seconds: float = 5.0, seed: int = 0,
                  n_presets: int = 50, encoder: str = "mfcc", workdir=None, progress=None) -> BenchmarkResult:
    rng = np.random.default_rng(seed)
    population = PresetPopulation.seeded(rng.integers(2**32))
    data = PresetDataset(population.draw(rng, n_presets))
    res = BenchmarkResult({a: [] for a in alphas}, {a: [] for a in alphas})
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        d = Path(tmp)
        io.save_dataset(d / "presets.json", data)
        io.save_prior(d / "prior.json", fit_gaussian(data))
        for trial in range(trials):
            truth = population.draw(rng, 1)[:, 0]
            ref_src = vocal_like(seconds, rng.integers(2**32))
            inp = vocal_like(seconds, rng.integers(2**32))
            io.write_wav(d / "ref.wav", render(ref_src, truth))
            io.write_wav(d / "in.wav", inp)
            inp32 = io.read_wav(d / "in.wav").mono
            target = render(inp32, truth)
            for a in alphas:
                argv = ["--log", str(d / "run.log.json"), "transfer", "--input", str(d / "in.wav"),
                        "--reference", str(d / "ref.wav"), "--prior", str(d / "prior.json"), "--encoder", encoder,
                        "--alpha", repr(a), "--steps", str(steps), "--lr", "0.01", "--seed", str(seed),
                        "--params-out", str(d / "theta.json")]
                code = cli.main(argv)
                if code != 0:
                    raise RuntimeError(f"transfer exited with {code}")
                theta = io.load_preset(d / "theta.json")
                res.pmse[a].append(metrics.pmse(theta, truth))
                res.mss[a].append(metrics.mss(render(inp32, theta), target))
                if progress is not None:
                    progress(trial, a, res.pmse[a][-1], res.mss[a][-1])
    return res
