"""Synthetic corpus generation and round-over-round evaluation.

The clean-speech proxy is a pitch-modulated pulse train with aspiration
noise and silent gaps: deterministic, full-band to near Nyquist, and free
of dataset licensing, which keeps the acceptance loop self-contained.
Noise injection draws the target SNR in dB from a Rayleigh distribution
and scales freshly generated noise to hit it exactly. Quality deltas
follow the metric-difference template Q(enhanced, clean) - Q(noisy,
clean), with a built-in segmental SNR and room for external metrics.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio_io import AudioBuffer, frame_len_samples, frame_matrix, write_wav
from .curation import DEFAULT_RHO_BIN_WIDTH_DB, load_manifest, rho_bin_counts
from .dsp import rms_db

logger = logging.getLogger(__name__)

NOISE_KINDS = ("white", "pink", "babble_proxy")

SEGSNR_MIN_DB = -10.0
SEGSNR_MAX_DB = 35.0
SEGSNR_ENERGY_SCREEN_DB = -60.0


@dataclass(frozen=True)
class NoiseSpec:
    """Noise flavor, Rayleigh scale for the SNR draw (in dB), clip range
    and RNG seed."""

    noise_kind: str = "white"
    rayleigh_sigma: float = 15.0
    snr_clip: tuple[float, float] = (0.0, 60.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}; expected one of {NOISE_KINDS}")
        if self.rayleigh_sigma <= 0:
            raise ValueError(f"rayleigh_sigma must be positive, got {self.rayleigh_sigma}")
        lo, hi = self.snr_clip
        if not lo < hi:
            raise ValueError(f"snr_clip must satisfy min < max, got {self.snr_clip}")


@dataclass
class EvalTriple:
    """Clean / noisy / enhanced versions of one signal plus the true
    per-frame SNR of the mix."""

    clean: AudioBuffer
    noisy: AudioBuffer
    enhanced: AudioBuffer
    true_snr_db: np.ndarray

    def __post_init__(self) -> None:
        lens = {len(self.clean), len(self.noisy), len(self.enhanced)}
        rates = {self.clean.sample_rate, self.noisy.sample_rate, self.enhanced.sample_rate}
        if len(lens) != 1 or len(rates) != 1:
            raise ValueError(f"triple buffers disagree: lengths {lens}, rates {rates}")

    @classmethod
    def from_components(
        cls,
        clean: AudioBuffer,
        noisy: AudioBuffer,
        enhanced: AudioBuffer,
        frame_seconds: float = 1.0,
    ) -> "EvalTriple":
        flen = frame_len_samples(clean.sample_rate, frame_seconds)
        noise = frame_matrix(noisy.samples - clean.samples, flen)
        ref = frame_matrix(clean.samples, flen)
        snr = np.array(
            [rms_db(ref[:, l]) - rms_db(noise[:, l]) for l in range(ref.shape[1])]
        )
        return cls(clean=clean, noisy=noisy, enhanced=enhanced, true_snr_db=snr)


@dataclass(frozen=True)
class QualityDelta:
    """Metric difference between the enhanced and noisy renditions."""

    delta: float
    metric_id: str


def synth_clean(duration_seconds: float, sample_rate: int = 48000, seed: int = 0) -> AudioBuffer:
    """Deterministic speech-like proxy: voiced stretches of a wandering-
    pitch pulse train (90-250 Hz) with aspiration noise, separated by
    silent gaps, peak-normalized to -3 dBFS."""
    if duration_seconds <= 0:
        raise ValueError(f"duration must be positive, got {duration_seconds}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_seconds * sample_rate))
    x = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)

    # voiced runs of 1.2-2.2 s with 0.25-0.45 s silent gaps: every 1-s frame
    # stays majority-voiced, while silence still covers well over a tenth of
    # the timeline (the energy VAD estimates its floor from that tail)
    start = 0
    f0 = rng.uniform(110.0, 220.0)
    while start < n:
        v_end = min(n, start + int(rng.uniform(1.2, 2.2) * sample_rate))
        # first pulse lands a few ms into the run, never on the exact first
        # sample (an overlap-add enhancer cannot reconstruct sample 0)
        pos = start + rng.uniform(0.002, 0.006) * sample_rate
        while pos < v_end:
            idx = int(round(pos))
            if idx < n:
                x[idx] += rng.uniform(0.8, 1.2)
            f0 = float(np.clip(f0 * np.exp(rng.normal(0.0, 0.02)), 90.0, 250.0))
            pos += sample_rate / f0
        voiced[start:v_end] = True
        start = v_end + int(rng.uniform(0.25, 0.45) * sample_rate)

    # gentle spectral tilt; keeps harmonics strong out to Nyquist
    x = np.convolve(x, np.array([1.0, 0.4, -0.25]))[:n]

    breath = rng.standard_normal(n)
    spec = np.fft.rfft(breath)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec *= np.clip(freqs / 1500.0, 0.1, 1.0)  # de-emphasize lows, keep it airy
    breath = np.fft.irfft(spec, n=n)
    breath /= max(np.max(np.abs(breath)), 1e-12)
    x += np.where(voiced, breath * 0.02, 0.0)

    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 10.0 ** (-3.0 / 20.0) / peak
    return AudioBuffer(x, sample_rate)


def _make_noise(kind: str, n: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    if kind == "white":
        return white
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    if kind == "pink":
        spec[1:] /= np.sqrt(freqs[1:])
        spec[0] = 0.0
        return np.fft.irfft(spec, n=n)
    # babble_proxy: speech-band emphasis plus slow amplitude modulation
    shape = (freqs / (freqs + 150.0)) / (1.0 + (freqs / 2500.0) ** 2)
    spec *= shape
    out = np.fft.irfft(spec, n=n)
    t = np.arange(n) / sample_rate
    out *= 1.0 + 0.5 * np.sin(2.0 * np.pi * 3.7 * t + rng.uniform(0.0, 2.0 * np.pi))
    return out


def draw_target_snr(spec: NoiseSpec, rng: np.random.Generator) -> float:
    """One Rayleigh-distributed SNR draw in dB, clipped to the spec range."""
    raw = rng.rayleigh(spec.rayleigh_sigma)
    return float(np.clip(raw, *spec.snr_clip))


def inject_noise(clean: AudioBuffer, spec: NoiseSpec) -> tuple[AudioBuffer, float]:
    """Mix freshly generated noise into the clean signal at a Rayleigh-drawn
    SNR; the scaling is exact, so the realized clean-to-noise RMS ratio
    matches the draw."""
    rng = np.random.default_rng(spec.seed)
    target_snr_db = draw_target_snr(spec, rng)
    rms_clean = float(np.sqrt(np.mean(np.square(clean.samples))))
    if rms_clean < 1e-9:
        raise ValueError("cannot set an SNR against digital silence")
    noise = _make_noise(spec.noise_kind, len(clean), clean.sample_rate, rng)
    rms_noise = float(np.sqrt(np.mean(np.square(noise))))
    scale = rms_clean / (rms_noise * 10.0 ** (target_snr_db / 20.0))
    noisy = AudioBuffer(clean.samples + noise * scale, clean.sample_rate, source=clean.source)
    return noisy, target_snr_db


def segmental_snr(
    reference: AudioBuffer,
    degraded: AudioBuffer,
    frame_ms: float = 32.0,
) -> float:
    """Mean per-frame SNR in dB over non-overlapping frames, each clamped
    to [-10, 35], counting only frames whose reference level exceeds
    -60 dBFS."""
    if len(reference) != len(degraded):
        raise ValueError(
            f"length mismatch: reference {len(reference)} vs degraded {len(degraded)}"
        )
    flen = max(1, int(round(reference.sample_rate * frame_ms / 1000.0)))
    ref = frame_matrix(reference.samples, flen)
    deg = frame_matrix(degraded.samples, flen)
    if ref.shape[1] == 0:
        raise ValueError("signal shorter than one metric frame")
    ref_energy = np.sum(np.square(ref), axis=0)
    err_energy = np.sum(np.square(ref - deg), axis=0)
    level_db = 10.0 * np.log10(np.maximum(ref_energy / flen, 1e-20))
    keep = level_db > SEGSNR_ENERGY_SCREEN_DB
    if not keep.any():
        raise ValueError("no frame passes the reference energy screen")
    snr = 10.0 * np.log10(ref_energy[keep] / np.maximum(err_energy[keep], 1e-300))
    return float(np.mean(np.clip(snr, SEGSNR_MIN_DB, SEGSNR_MAX_DB)))


MetricFn = Callable[[AudioBuffer, AudioBuffer], float]

_METRICS: dict[str, MetricFn] = {"segmental_snr": segmental_snr}


def register_metric(metric_id: str, fn: MetricFn) -> None:
    """Add an in-process quality metric; fn(reference, degraded) -> score."""
    _METRICS[metric_id] = fn


def _external_metric(command: str) -> MetricFn:
    def run(reference: AudioBuffer, degraded: AudioBuffer) -> float:
        exdir = Path(tempfile.gettempdir())
        tag = uuid.uuid4().hex[:12]
        ref_path = exdir / f"metric_{tag}_ref.wav"
        deg_path = exdir / f"metric_{tag}_deg.wav"
        write_wav(ref_path, reference, "float32")
        write_wav(deg_path, degraded, "float32")
        argv = [
            tok.format(reference=str(ref_path), degraded=str(deg_path))
            for tok in shlex.split(command)
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
            if proc.returncode != 0:
                raise ValueError(
                    f"external metric exited {proc.returncode}: stderr={proc.stderr.strip()!r}"
                )
            return float(proc.stdout.strip().splitlines()[-1])
        finally:
            ref_path.unlink(missing_ok=True)
            deg_path.unlink(missing_ok=True)

    return run


def resolve_metric(metric_id: str) -> MetricFn:
    if metric_id in _METRICS:
        return _METRICS[metric_id]
    if metric_id.startswith("external:"):
        command = metric_id[len("external:") :]
        if "{reference}" not in command or "{degraded}" not in command:
            raise ValueError("external metric command must contain {reference} and {degraded}")
        return _external_metric(command)
    raise ValueError(f"unknown metric {metric_id!r}")


def delta_quality(triple: EvalTriple, metric_id: str = "segmental_snr") -> QualityDelta:
    """Q(enhanced, clean) - Q(noisy, clean) for the named metric."""
    metric = resolve_metric(metric_id)
    q_enhanced = metric(triple.clean, triple.enhanced)
    q_noisy = metric(triple.clean, triple.noisy)
    return QualityDelta(delta=float(q_enhanced - q_noisy), metric_id=metric_id)


def rho_histogram(
    manifests: Sequence[str | Path],
    bin_width_db: float = DEFAULT_RHO_BIN_WIDTH_DB,
) -> dict[int, dict[str, int]]:
    """Binned counts of per-frame SNR estimates, keyed by round."""
    per_round: dict[int, list[float]] = {}
    for path in manifests:
        segments, skipped = load_manifest(path)
        if skipped:
            logger.warning("%s: skipped %d malformed record(s)", path, skipped)
        for seg in segments:
            per_round.setdefault(seg.round_id, []).extend(seg.frame_rho)
    return {rid: rho_bin_counts(vals, bin_width_db) for rid, vals in sorted(per_round.items())}


def accepted_hours(manifests: Sequence[str | Path]) -> dict[int, float]:
    """Total curated duration in hours, keyed by round."""
    seconds: dict[int, float] = {}
    for path in manifests:
        segments, skipped = load_manifest(path)
        if skipped:
            logger.warning("%s: skipped %d malformed record(s)", path, skipped)
        for seg in segments:
            seconds[seg.round_id] = seconds.get(seg.round_id, 0.0) + seg.duration_seconds
    return {rid: s / 3600.0 for rid, s in sorted(seconds.items())}
