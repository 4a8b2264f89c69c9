"""Keypress timestamp detection from the keypad's feedback sound.

Every key on the pads emits the same tone, so the audio track carries timing
information only. The detector band-passes the track around the pad's
feedback frequency, rectifies and smooths it into an envelope, and picks
peaks separated by at least a minimum gap. Detected times are then mapped to
video frame indices via the recording's fps and media offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import AlignmentFailed, NegativeFrame, NoPeaksFound

FILTER_ORDER = 4


@dataclass(frozen=True)
class AudioTrack:
    """Mono PCM audio, samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz < 8000:
            raise ValueError(f"sample rate {self.sample_rate_hz} Hz below 8000 Hz minimum")
        if samples.ndim != 1:
            raise ValueError("audio must be mono (1-D)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-9:
            raise ValueError("samples exceed [-1, 1]")

    @property
    def duration_ms(self) -> float:
        return 1000.0 * self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class DetectionConfig:
    """Band-pass peak-picking parameters.

    ``noise_gate`` rejects tracks whose envelope maximum does not stand out
    from the envelope median; without it, relative thresholding would always
    "detect" the loudest noise sample on burst-free tracks.
    """

    center_freq_hz: float
    bandwidth_hz: float = 400.0
    min_gap_ms: float = 150.0
    threshold_mode: str = "relative_to_max"
    threshold_value: float = 0.3
    envelope_ms: float = 10.0
    noise_gate: float = 6.0

    def __post_init__(self):
        if not 0 < self.bandwidth_hz < self.center_freq_hz:
            raise ValueError("require 0 < bandwidth_hz < center_freq_hz")
        if self.min_gap_ms <= 0:
            raise ValueError("min_gap_ms must be positive")
        if self.threshold_mode not in ("relative_to_max", "absolute"):
            raise ValueError(f"unknown threshold_mode {self.threshold_mode!r}")


def _envelope(track: AudioTrack, cfg: DetectionConfig) -> np.ndarray:
    nyq = track.sample_rate_hz / 2.0
    lo = (cfg.center_freq_hz - cfg.bandwidth_hz / 2.0) / nyq
    hi = (cfg.center_freq_hz + cfg.bandwidth_hz / 2.0) / nyq
    if not 0 < lo < hi < 1:
        raise ValueError("pass band outside the representable frequency range")
    sos = signal.butter(FILTER_ORDER, [lo, hi], btype="band", output="sos")
    # Zero-phase filtering keeps burst timing unbiased by group delay.
    filtered = signal.sosfiltfilt(sos, track.samples)
    win = max(1, int(round(cfg.envelope_ms / 1000.0 * track.sample_rate_hz)))
    kernel = np.full(win, 1.0 / win)
    return np.convolve(np.abs(filtered), kernel, mode="same")


def detect_keypress_times(track: AudioTrack, cfg: DetectionConfig) -> list[int]:
    """Return keypress times (ms, sorted) from feedback-tone bursts.

    Raises :class:`NoPeaksFound` when the track is silent or carries no
    burst at the configured frequency.
    """
    if track.samples.size == 0:
        raise NoPeaksFound("empty audio track")
    env = _envelope(track, cfg)
    peak = float(np.max(env))
    if peak <= 0.0:
        raise NoPeaksFound("silent track")
    floor = float(np.median(env))
    if peak < cfg.noise_gate * floor:
        raise NoPeaksFound(
            f"envelope max {peak:.3g} does not clear the noise floor "
            f"({floor:.3g} median, gate x{cfg.noise_gate})"
        )
    if cfg.threshold_mode == "relative_to_max":
        height = cfg.threshold_value * peak
    else:
        height = cfg.threshold_value
    distance = max(1, int(round(cfg.min_gap_ms / 1000.0 * track.sample_rate_hz)))
    idx, _ = signal.find_peaks(env, height=height, distance=distance)
    if idx.size == 0:
        raise NoPeaksFound("no envelope peaks above threshold")
    times = np.round(idx * 1000.0 / track.sample_rate_hz).astype(int)
    return [int(t) for t in times]


def times_to_frames(times: list[int], fps: float, media_offset_ms: int = 0) -> list[int]:
    """Map keypress times (keylog or detection clock) to video frame indices."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    frames = []
    for t in times:
        f = int(round((t + media_offset_ms) * fps / 1000.0))
        if f < 0:
            raise NegativeFrame(f"time {t} ms with offset {media_offset_ms} ms maps to frame {f}")
        frames.append(f)
    return frames


def estimate_media_offset(
    detected: list[int],
    keylog_downs: list[int],
    tolerance_ms: int = 100,
) -> tuple[int, int]:
    """Estimate the keylog-to-media clock offset by event alignment.

    Tries every pairwise difference as a candidate offset, greedily matches
    events one-to-one within ``tolerance_ms``, and keeps the candidate with
    the most matches (ties: least total absolute mismatch). The returned
    offset is the value added to keylog times to land on media times.

    Returns ``(offset_ms, matched)``. Raises :class:`AlignmentFailed` when
    fewer than half of the keylog events can be matched.
    """
    if not detected or not keylog_downs:
        raise AlignmentFailed("cannot align empty event lists")
    det = np.sort(np.asarray(detected, dtype=np.int64))
    logs = np.sort(np.asarray(keylog_downs, dtype=np.int64))

    def match(offset: int) -> tuple[int, int, list[int]]:
        shifted = logs + offset
        i = j = 0
        count = 0
        total = 0
        residuals: list[int] = []
        while i < det.size and j < shifted.size:
            diff = int(det[i] - shifted[j])
            if abs(diff) <= tolerance_ms:
                count += 1
                total += abs(diff)
                residuals.append(diff)
                i += 1
                j += 1
            elif diff < 0:
                i += 1
            else:
                j += 1
        return count, total, residuals

    candidates = sorted({int(d - k) for d in det for k in logs})
    best = None
    for off in candidates:
        count, total, residuals = match(off)
        key = (-count, total)
        if best is None or key < best[0]:
            best = (key, off, residuals)
    (neg_count, _), offset, residuals = best
    matched = -neg_count
    if matched < 0.5 * len(keylog_downs):
        raise AlignmentFailed(
            f"only {matched}/{len(keylog_downs)} keylog events matched within {tolerance_ms} ms"
        )
    # Refine: the median residual centers the offset on the matched pairs.
    refined = offset + int(round(float(np.median(residuals))))
    count, _, _ = match(refined)
    if count < matched:
        refined = offset
    return refined, matched
