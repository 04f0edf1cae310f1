"""Seeded synthetic skip logs with three-tier ground truth.

Each user/video has a latent factor; affinity is sigmoid(u . v). High-affinity
pairs are watched to the end, mid-affinity pairs are skipped after the
quick-skip window, low-affinity pairs are skipped inside it.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Iterable

import numpy as np
from scipy.special import expit

from .ingest import INTERACTION_HEADER, Interaction, classify


@dataclass
class SynthConfig:
    n_users: int = 2000
    n_videos: int = 1000
    rank: int = 8
    interactions_per_user: int = 30
    duration_min: float = 10.0
    duration_max: float = 60.0
    tau_high: float = 0.9
    tau_low: float = 0.6
    skip_window: float = 5.0
    # std of u . v across all pairs
    logit_std: float = 1.62
    # feed exposure: videos are drawn without replacement with weight
    # popularity * exp(bias * u . v), so the feed is partly personalised and
    # partly driven by taste-independent popularity (lognormal, this spread)
    exposure_bias: float = 0.3
    popularity_std: float = 2.0
    d: int = 128
    feature_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau_low < self.tau_high < 1.0:
            raise ValueError("need 0 < tau_low < tau_high < 1")
        if not 5.0 <= self.duration_min <= self.duration_max <= 60.0:
            raise ValueError("duration range must lie within [5, 60]")
        if not 0.0 < self.skip_window <= 5.0:
            raise ValueError("quick-skip window must lie in (0, 5]")
        if self.duration_min <= self.skip_window:
            raise ValueError("duration_min must exceed the quick-skip window "
                             "or delayed skips have an empty interval")
        if self.interactions_per_user > self.n_videos:
            raise ValueError("interactions_per_user exceeds the catalog size")
        if self.popularity_std < 0:
            raise ValueError("popularity_std must be non-negative")
        if min(self.n_users, self.n_videos, self.rank, self.d) < 1:
            raise ValueError("sizes must be positive")

    @classmethod
    def from_dict(cls, values: dict) -> "SynthConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in names})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthTruth:
    user_factors: np.ndarray
    video_factors: np.ndarray

    def affinity(self, users, videos) -> np.ndarray:
        return expit(np.sum(self.user_factors[users] * self.video_factors[videos], axis=1))


@dataclass
class SynthDataset:
    interactions_csv: str
    features_csv: str
    features: np.ndarray  # row j belongs to video "v{j}"
    truth: SynthTruth
    config: SynthConfig


def playing_times(affinity: np.ndarray, duration: np.ndarray, config: SynthConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Watch time implied by each affinity tier."""
    affinity = np.asarray(affinity, dtype=np.float64)
    duration = np.asarray(duration, dtype=np.float64)
    late = rng.uniform(config.skip_window, duration)
    quick = rng.uniform(0.0, config.skip_window, size=affinity.shape)
    return np.where(affinity >= config.tau_high, duration,
                    np.where(affinity >= config.tau_low, late, quick))


def _expose(user_factor, video_factors, log_popularity, config: SynthConfig,
            rng: np.random.Generator):
    # Gumbel top-k: a weighted draw without replacement
    keys = (config.exposure_bias * (video_factors @ user_factor) + log_popularity
            + rng.gumbel(size=len(video_factors)))
    top = np.argpartition(-keys, config.interactions_per_user - 1)[:config.interactions_per_user]
    return np.sort(top)


def _fmt(x: float) -> str:
    return repr(float(x))


def generate(config: SynthConfig) -> SynthDataset:
    r = config.rank
    scale = np.sqrt(config.logit_std) / r ** 0.25
    base = np.random.default_rng([config.seed, 0])
    user_factors = base.normal(0.0, scale, size=(config.n_users, r))
    video_factors = base.normal(0.0, scale, size=(config.n_videos, r))
    truth = SynthTruth(user_factors, video_factors)
    log_popularity = np.random.default_rng([config.seed, 3]).normal(
        0.0, config.popularity_std, size=config.n_videos) if config.popularity_std > 0 else np.zeros(config.n_videos)

    buf = io.StringIO()
    buf.write(",".join(INTERACTION_HEADER) + "\n")
    for u in range(config.n_users):
        rng = np.random.default_rng([config.seed, 1, u])
        videos = _expose(user_factors[u], video_factors, log_popularity, config, rng)
        aff = truth.affinity(np.full(len(videos), u), videos)
        duration = rng.uniform(config.duration_min, config.duration_max, size=len(videos))
        played = playing_times(aff, duration, config, rng)
        for j, (v, p, dur) in enumerate(zip(videos, played, duration)):
            buf.write(f"u{u},v{v},{_fmt(p)},{_fmt(dur)},{u * 1000 + j}\n")

    feat_rng = np.random.default_rng([config.seed, 2])
    projection = feat_rng.normal(0.0, 1.0 / np.sqrt(r), size=(r, config.d))
    features = video_factors @ projection / scale
    features += feat_rng.normal(0.0, config.feature_noise, size=features.shape)
    fbuf = io.StringIO()
    fbuf.write("video_id," + ",".join(f"f{i}" for i in range(config.d)) + "\n")
    for j, row in enumerate(features):
        fbuf.write(f"v{j}," + ",".join(_fmt(x) for x in row) + "\n")
    return SynthDataset(buf.getvalue(), fbuf.getvalue(), features, truth, config)


def tier_histogram(interactions: Iterable[Interaction], threshold: float = 5.0) -> dict[str, int]:
    counts = Counter(classify(it, threshold).short for it in interactions)
    return {c: counts.get(c, 0) for c in "HLN"}
