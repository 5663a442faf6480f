"""Self-supervised A/B evaluation protocol and the Mean / NN baselines.

Each track is cut into non-overlapping 11 s segments. Segments whose wet
audio is active (at least half of its frames above -60 dB) are shuffled and
split in two: the wet audio of set A supplies the style references, the dry
audio of set B is processed with the estimate and scored against B's wet.
"""

from __future__ import annotations

import json
import statistics
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp, metrics
from .effects.chain import default_chain, render
from .effects.layout import LAYOUT_VERSION
from .encoders import EmbeddingBank, StereoEmbedding, embed_stereo, load_embeddings
from .objective import CLAMP, MAPObjective, ObjectiveConfig, ReferenceSet
from .optim import adam_minimize
from .prior import GaussianPrior, PresetDataset

SEGMENT_SECONDS = 11.0
MIN_ACTIVE = 0.5
GATE_DB = -60.0
SCORE_KEYS = ("mss_lr", "mss_ms", "mldr_lr", "mldr_ms", "pmse")
METHODS = ("mean", "nn", "map", "oracle")
SPACES = ("theta", "mfcc", "mir", "precomputed")


@dataclass
class SegmentSplit:
    a: list  # (start, stop) sample bounds
    b: list
    seed: object

    def as_dict(self) -> dict:
        return {"A": [list(s) for s in self.a], "B": [list(s) for s in self.b]}


def segment_and_split(dry, wet, seed, segment_seconds: float = SEGMENT_SECONDS) -> SegmentSplit:
    d = dry.mono if isinstance(dry, dsp.AudioBuffer) else np.asarray(dry, dtype=np.float64)
    w = wet.samples if isinstance(wet, dsp.AudioBuffer) else np.asarray(wet, dtype=np.float64)
    if d.ndim != 1 or w.ndim != 2:
        raise ValueError("expected mono dry and stereo wet audio")
    if d.shape[0] != w.shape[1]:
        raise ValueError(f"length mismatch: dry {d.shape[0]} vs wet {w.shape[1]} samples")
    length = int(round(segment_seconds * dsp.SAMPLE_RATE))
    bounds = [(k * length, (k + 1) * length) for k in range(d.shape[0] // length)]
    active = [s for s in bounds if dsp.activity_fraction(w[:, s[0]:s[1]], GATE_DB) >= MIN_ACTIVE]
    if len(active) < 2:
        raise ValueError(f"insufficient segments: {len(active)} active, need 2")
    order = np.random.default_rng(seed).permutation(len(active))
    half = len(active) // 2
    return SegmentSplit([active[i] for i in order[:half]], [active[i] for i in order[half:]], seed)


def track_seed(seed: int, track_id: str) -> list:
    return [int(seed), zlib.crc32(track_id.encode())]


# baselines --------------------------------------------------------------------


def mean_baseline(prior: GaussianPrior) -> np.ndarray:
    return prior.mean.copy()


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.arccos(np.clip(a @ b, -1 + CLAMP, 1 - CLAMP)))


def embedding_distance(refs: ReferenceSet, candidate: StereoEmbedding) -> float:
    """Mean over references of the mid angle plus the side angle.

    The side term is left out for a pair where either side is degenerate.
    """
    total = 0.0
    for r in refs.pairs:
        d = _angle(r.mid.values, candidate.mid.values)
        if not (r.side_degenerate or candidate.side_degenerate):
            d += _angle(r.side.values, candidate.side.values)
        total += d
    return total / len(refs.pairs)


def nn_index(query, presets: PresetDataset, space: str = "theta", bank: EmbeddingBank | None = None) -> int:
    if space not in SPACES:
        raise ValueError(f"space must be one of {SPACES}, got {space!r}")
    if presets.count == 0:
        raise ValueError("preset dataset is empty")
    if space == "theta":
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (presets.theta.shape[0],):
            raise ValueError("query must be a parameter vector")
        dist = np.sum((presets.theta - q[:, None]) ** 2, axis=0)
    else:
        if bank is None:
            raise ValueError(f"space {space!r} needs an embedding bank of preset renders")
        if space != "precomputed" and bank.encoder_id != space:
            raise ValueError(f"bank holds {bank.encoder_id!r} embeddings, space is {space!r}")
        if query.encoder_id != bank.encoder_id:
            raise ValueError(f"query from {query.encoder_id!r}, bank from {bank.encoder_id!r}")
        dist = np.array([embedding_distance(query, bank.stereo(str(k))) for k in range(presets.count)])
    return int(np.argmin(dist))  # first minimum, i.e. the lowest index on ties


def nn_baseline(query, presets: PresetDataset, space: str = "theta", bank: EmbeddingBank | None = None) -> np.ndarray:
    """Nearest preset to ``query``: Euclidean in theta space, mean angular
    distance to the reference set in embedding spaces. Ties go to the lowest index."""
    return presets[nn_index(query, presets, space, bank)].copy()


# protocol ---------------------------------------------------------------------


@dataclass
class Method:
    name: str
    space: str = "theta"
    alpha: float = 0.1
    encoder: str = "mfcc"
    sigma: object = "adaptive"
    steps: int = 1000
    lr: float = 0.01

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.name!r}")
        if self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}, got {self.space!r}")

    def as_dict(self) -> dict:
        d = {"name": self.name}
        if self.name == "nn":
            d["space"] = self.space
        if self.name == "map":
            d.update(alpha=self.alpha, encoder=self.encoder, sigma=self.sigma, steps=self.steps, lr=self.lr)
        return d


@dataclass
class TrackEntry:
    """Paths or arrays for one track; arrays are used as is."""

    track_id: str
    dry: object
    wet: object
    oracle: object


@dataclass
class Manifest:
    tracks: list
    presets: object = None  # PresetDataset or path
    bank: object = None  # EmbeddingBank or path
    prior: object = None  # GaussianPrior or path


def load_manifest(path) -> Manifest:
    """Read a manifest; relative paths resolve against its directory.

    Accepts a bare track list or an object with ``tracks`` and optional
    ``presets``, ``bank`` and ``prior`` paths.
    """
    base = Path(path).resolve().parent
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, list):
        obj = {"tracks": obj}
    if not isinstance(obj, dict) or not isinstance(obj.get("tracks"), list):
        raise ValueError(f"{path}: manifest must be a track list or an object with 'tracks'")

    def resolve(p):
        return None if p is None else str(base / p)

    tracks, seen = [], set()
    for i, t in enumerate(obj["tracks"]):
        try:
            tid = str(t["track_id"])
            entry = TrackEntry(tid, resolve(t["dry_wav"]), resolve(t["wet_wav"]), resolve(t["oracle_preset"]))
        except (KeyError, TypeError):
            raise ValueError(f"{path}: track {i} needs track_id, dry_wav, wet_wav and oracle_preset") from None
        if tid in seen:
            raise ValueError(f"{path}: duplicate track_id {tid!r}")
        seen.add(tid)
        tracks.append(entry)
    return Manifest(tracks, resolve(obj.get("presets")), resolve(obj.get("bank")), resolve(obj.get("prior")))


@dataclass
class EvalReport:
    method: str
    config: dict
    seed: int
    tracks: list
    medians: dict = field(default_factory=dict)
    layout_version: str = LAYOUT_VERSION

    @staticmethod
    def compute_medians(tracks) -> dict:
        ok = [t["scores"] for t in tracks if "scores" in t]
        return {k: (statistics.median(s[k] for s in ok) if ok else None) for k in SCORE_KEYS}

    def check_medians(self) -> bool:
        return self.compute_medians(self.tracks) == self.medians

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "failed": sum("error" in t for t in self.tracks),
            "layout_version": self.layout_version,
            "medians": self.medians,
            "method": self.method,
            "seed": self.seed,
            "tracks": self.tracks,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        if d.get("layout_version") != LAYOUT_VERSION:
            raise ValueError(f"report layout_version {d.get('layout_version')!r} does not match {LAYOUT_VERSION!r}")
        return cls(d["method"], d["config"], d["seed"], d["tracks"], d["medians"], d["layout_version"])


def _load(obj, loader):
    return loader(obj) if isinstance(obj, (str, Path)) else obj


def _track_audio(entry: TrackEntry):
    from . import io

    dry = _load(entry.dry, io.read_wav)
    wet = _load(entry.wet, io.read_wav)
    dry = dry.mono if isinstance(dry, dsp.AudioBuffer) else np.asarray(dry, dtype=np.float64)
    wet = wet.samples if isinstance(wet, dsp.AudioBuffer) else np.asarray(wet, dtype=np.float64)
    if dry.ndim != 1:
        raise ValueError("dry track must be mono")
    if wet.ndim != 2 or wet.shape[0] != 2:
        raise ValueError("wet track must be stereo")
    return dry, wet, np.asarray(_load(entry.oracle, io.load_preset), dtype=np.float64)


def _estimate(method: Method, dry, wet, split, oracle, prior, presets, bank, chain):
    if method.name == "oracle":
        return oracle.copy()
    if method.name == "mean":
        if prior is None:
            raise ValueError("method 'mean' needs a prior")
        return mean_baseline(prior)
    if method.name == "nn":
        if presets is None:
            raise ValueError("method 'nn' needs a preset dataset")
        if method.space == "theta":
            return nn_baseline(oracle, presets, "theta")
        if bank is None:
            raise ValueError("embedding-space NN needs a bank")
        refs = ReferenceSet([embed_stereo(wet[:, a:b], bank.encoder_id) for a, b in split.a], bank.encoder_id)
        return nn_baseline(refs, presets, method.space, bank)
    if prior is None:
        raise ValueError("method 'map' needs a prior")
    cfg = ObjectiveConfig(method.alpha, method.encoder, method.sigma)
    refs = ReferenceSet([embed_stereo(wet[:, a:b], method.encoder) for a, b in split.a], method.encoder)
    objective = MAPObjective([dry[a:b] for a, b in split.b], refs, prior, cfg, chain)
    return adam_minimize(objective, prior.mean, method.steps, method.lr, thin=method.steps).theta


def score_track(theta, oracle, dry, wet, segments, chain=None) -> dict:
    """Metrics averaged over the scored segments, plus PMSE to the oracle."""
    sums = dict.fromkeys(SCORE_KEYS[:4], 0.0)
    for a, b in segments:
        y = render(dry[a:b], theta, chain)
        t = wet[:, a:b]
        sums["mss_lr"] += metrics.mss(y, t, "lr")
        sums["mss_ms"] += metrics.mss(y, t, "ms")
        sums["mldr_lr"] += metrics.mldr(y, t, "lr")
        sums["mldr_ms"] += metrics.mldr(y, t, "ms")
    scores = {k: v / len(segments) for k, v in sums.items()}
    scores["pmse"] = metrics.pmse(theta, oracle)
    return scores


def run_protocol(manifest: Manifest, method: Method, seed: int = 0, *, segment_seconds: float = SEGMENT_SECONDS,
                 progress=None) -> EvalReport:
    from . import io

    prior = _load(manifest.prior, io.load_prior)
    presets = _load(manifest.presets, io.load_dataset)
    bank = _load(manifest.bank, load_embeddings)
    chain = default_chain()
    rows = []
    for entry in sorted(manifest.tracks, key=lambda t: t.track_id):
        row = {"track_id": entry.track_id}
        try:
            dry, wet, oracle = _track_audio(entry)
            split = segment_and_split(dry, wet, track_seed(seed, entry.track_id), segment_seconds)
            theta = _estimate(method, dry, wet, split, oracle, prior, presets, bank, chain)
            row["scores"] = score_track(theta, oracle, dry, wet, split.b, chain)
            row["segments"] = split.as_dict()
            row["theta"] = [float(v) for v in theta]
        except Exception as exc:  # recorded per track, kept out of the medians
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        if progress is not None:
            progress(row)
    config = dict(method.as_dict(), segment_seconds=segment_seconds, min_active=MIN_ACTIVE, gate_db=GATE_DB)
    return EvalReport(method.name, config, int(seed), rows, EvalReport.compute_medians(rows))
