"""Synthetic recording generator: procedurally rendered keypad video, a
feedback-tone audio track, and a matching keylog.

The rendered scene is a keypad (4 key rows, fiducial markers at the crop
corners) partially covered by a moving dark blob standing in for the
non-typing hand. The blob's pose is digit-dependent: its centroid moves to
the pressed key's position (scaled by ``signal_strength``) and arrives
exactly on the keypress frame, which makes the corpus learnable by the
classifier at full strength and chance-level at strength zero.

Audio bursts are amplitude-symmetric (raised-cosine envelope) and centered
on the key-down time, so detected envelope peaks line up with the keylog and
the estimated media offset is zero. Only digit keys beep; enter does not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .audio import AudioTrack
from .ingest import DatasetManifest, KeyEvent, build_manifest, save_audio, write_keylog
from .video import key_center

# Dark scene with a bright occluder: the covering hand is the dominant
# feature, which keeps the corpus learnable through the max-pool stack.
BACKGROUND = 0.12
KEY_SHADE = 0.30
OCCLUDER_SHADE = 0.90
MARKER_SHADE = 1.0

# Occluder half-axes as fractions of the keypad rect (width, height).
OCCLUDER_AXES = {
    "side": (0.10, 0.16),
    "over": (0.18, 0.11),
    "top": (0.14, 0.14),
}

TRANSITION_FRAMES = 5


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 6
    pins_per_participant: int = 100
    pin_len: int = 5
    fps: float = 30.0
    frame_size: int = 64
    sample_rate_hz: int = 16000
    keypad_models: tuple[tuple[str, float], ...] = (("synth-A", 2900.0), ("synth-B", 2500.0))
    n_participants_second: int = 0  # tail participants assigned to the second pad
    n_blacklisted: int = 0  # tail participants of each pad flagged as badly covered
    burst_ms: float = 50.0
    burst_amplitude: float = 0.5
    audio_snr_db: float = 30.0
    inter_key_ms: tuple[float, float] = (400.0, 700.0)
    lead_ms: tuple[float, float] = (600.0, 900.0)
    tail_ms: float = 500.0
    key_hold_ms: float = 70.0
    occluder_styles: tuple[str, ...] = ("side", "over", "top")
    signal_strength: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must be in [0, 1]")
        if self.n_participants_second > self.n_participants:
            raise ValueError("n_participants_second exceeds n_participants")


def keypad_rect(frame_size: int) -> tuple[int, int, int, int]:
    """Keypad bounding box within a synthetic frame (also the crop rect)."""
    margin = frame_size // 5
    side = frame_size - 2 * margin
    return margin, margin, side, side


@dataclass
class SynthRecording:
    recording_id: str
    participant_id: str
    pin: tuple[int, ...]
    frames: np.ndarray  # (T, S, S) float32 in [0, 1]
    audio: AudioTrack
    events: list[KeyEvent]
    meta: dict

    def write(self, root: str | Path) -> Path:
        rec_dir = Path(root) / self.recording_id
        rec_dir.mkdir(parents=True, exist_ok=True)
        np.save(rec_dir / "video.npy", np.round(self.frames * 255.0).astype(np.uint8))
        save_audio(rec_dir / "audio.wav", self.audio)
        write_keylog(rec_dir / "keylog.csv", self.events)
        (rec_dir / "meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True))
        return rec_dir


# --- audio -------------------------------------------------------------------


def make_tone_track(
    times_ms,
    duration_ms: float,
    freq_hz: float,
    sample_rate_hz: int = 16000,
    burst_ms: float = 50.0,
    amplitude: float = 0.5,
    snr_db: float | None = None,
    seed: int = 0,
) -> AudioTrack:
    """Tone bursts with raised-cosine envelopes centered at the given times.

    When ``snr_db`` is set, white noise is added at that level relative to
    the mean in-burst signal power.
    """
    n = int(round(duration_ms / 1000.0 * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    signal = np.zeros(n)
    half = burst_ms / 2000.0
    for tm in times_ms:
        center = tm / 1000.0
        lo = max(0, int(np.ceil((center - half) * sample_rate_hz)))
        hi = min(n, int(np.floor((center + half) * sample_rate_hz)) + 1)
        if lo >= hi:
            continue
        seg = t[lo:hi]
        envelope = 0.5 * (1.0 + np.cos(np.pi * (seg - center) / half))
        signal[lo:hi] += amplitude * envelope * np.sin(2 * np.pi * freq_hz * (seg - center))
    if snr_db is not None:
        # mean power of A*hann*sin over a burst: A^2 * (3/8) * (1/2)
        p_signal = amplitude**2 * 3.0 / 16.0
        noise_std = float(np.sqrt(p_signal / 10.0 ** (snr_db / 10.0)))
        signal = signal + np.random.default_rng(seed).normal(0.0, noise_std, size=n)
    peak = np.max(np.abs(signal)) if n else 0.0
    if peak > 1.0:
        signal = signal / peak
    return AudioTrack(samples=signal, sample_rate_hz=sample_rate_hz)


# --- video -------------------------------------------------------------------


def _render_background(size: int) -> np.ndarray:
    frame = np.full((size, size), BACKGROUND, dtype=np.float32)
    x, y, w, h = keypad_rect(size)
    pad_w, pad_h = 0.24, 0.18  # key face size as a fraction of cell size
    for digit in range(10):
        cx, cy = key_center(digit, (x, y, w, h))
        kw, kh = int(round(pad_w * w / 2)), int(round(pad_h * h / 2))
        frame[
            int(round(cy)) - kh : int(round(cy)) + kh + 1,
            int(round(cx)) - kw : int(round(cx)) + kw + 1,
        ] = KEY_SHADE
    # Fiducial markers: single max-intensity pixels at the crop corners.
    for my in (y, y + h - 1):
        for mx in (x, x + w - 1):
            frame[my, mx] = MARKER_SHADE
    return frame


def _draw_occluder(frame: np.ndarray, center_xy, style: str, rect) -> np.ndarray:
    x, y, w, h = rect
    ax_w, ax_h = OCCLUDER_AXES[style]
    axes = (max(1, int(round(ax_w * w))), max(1, int(round(ax_h * h))))
    roi = frame[y : y + h, x : x + w].copy()
    local = (int(round(center_xy[0] - x)), int(round(center_xy[1] - y)))
    # The "hand" never extends past the pad edge: drawn on the rect ROI only.
    cv2.ellipse(roi, local, axes, 0.0, 0.0, 360.0, OCCLUDER_SHADE, thickness=-1)
    out = frame.copy()
    out[y : y + h, x : x + w] = roi
    return out


def _digit_pose(
    digit: int,
    rect,
    strength: float,
    base_offset: np.ndarray,
    jitter: np.ndarray,
) -> np.ndarray:
    x, y, w, h = rect
    pad_center = np.array([x + w / 2.0, y + h / 2.0])
    target = np.asarray(key_center(digit, rect))
    return pad_center + strength * (target - pad_center) + base_offset + jitter


def generate_recording(
    pin,
    cfg: SynthConfig,
    rng_seed,
    participant_id: str = "p00",
    recording_id: str = "p00_000",
    keypad_model: str | None = None,
    feedback_freq_hz: float | None = None,
    occluder_style: str = "side",
    blacklisted: bool = False,
) -> SynthRecording:
    """Render one PIN-entry session (frames + audio + keylog)."""
    rng = np.random.default_rng(rng_seed)
    pin = tuple(int(d) for d in pin)
    model_name, model_freq = cfg.keypad_models[0]
    keypad_model = keypad_model or model_name
    feedback_freq_hz = feedback_freq_hz or model_freq
    rect = keypad_rect(cfg.frame_size)

    # Keypress timeline (ms).
    t = rng.uniform(*cfg.lead_ms)
    press_ms = []
    for _ in pin:
        press_ms.append(t)
        t += rng.uniform(*cfg.inter_key_ms)
    enter_ms = t
    duration_ms = enter_ms + cfg.tail_ms

    events: list[KeyEvent] = []
    for tm, digit in zip(press_ms, pin):
        events.append(KeyEvent(int(round(tm)), str(digit), "down"))
        events.append(KeyEvent(int(round(tm + cfg.key_hold_ms)), str(digit), "up"))
    events.append(KeyEvent(int(round(enter_ms)), "enter", "down"))
    events.append(KeyEvent(int(round(enter_ms + cfg.key_hold_ms)), "enter", "up"))

    # Per-participant pose bias; per-keypress jitter.
    base_rng = np.random.default_rng(hash((participant_id, cfg.seed)) % (2**32))
    base_offset = base_rng.uniform(-0.03, 0.03, size=2) * rect[2]
    poses = [
        _digit_pose(d, rect, cfg.signal_strength, base_offset, rng.uniform(-0.015, 0.015, 2) * rect[2])
        for d in pin
    ]
    neutral = np.array([rect[0] + rect[2] / 2.0, rect[1] + rect[3] / 2.0]) + base_offset

    n_frames = int(np.ceil(duration_ms / 1000.0 * cfg.fps)) + 1
    arrival = [int(round(tm * cfg.fps / 1000.0)) for tm in press_ms]
    background = _render_background(cfg.frame_size)
    frames = np.empty((n_frames, cfg.frame_size, cfg.frame_size), dtype=np.float32)
    for f in range(n_frames):
        # Pose: hold the last reached key, transition in the final frames
        # before the next arrival so the target pose is exact on arrival.
        i = np.searchsorted(arrival, f, side="right") - 1
        held = poses[i] if i >= 0 else neutral
        pose = held
        if i + 1 < len(arrival):
            nxt = arrival[i + 1]
            start = nxt - TRANSITION_FRAMES
            if f >= start:
                alpha = (f - start) / float(nxt - start)
                pose = held + alpha * (poses[i + 1] - held)
        frames[f] = _draw_occluder(background, pose, occluder_style, rect)

    audio = make_tone_track(
        [int(round(tm)) for tm in press_ms],
        duration_ms=duration_ms,
        freq_hz=feedback_freq_hz,
        sample_rate_hz=cfg.sample_rate_hz,
        burst_ms=cfg.burst_ms,
        amplitude=cfg.burst_amplitude,
        snr_db=cfg.audio_snr_db,
        seed=int(rng.integers(0, 2**31)),
    )
    meta = {
        "id": recording_id,
        "participant_id": participant_id,
        "keypad_model": keypad_model,
        "feedback_freq_hz": feedback_freq_hz,
        "camera_position": "center",
        "covering_strategy": occluder_style,
        "blacklisted": blacklisted,
        "fps": cfg.fps,
        "media_offset_ms": 0,
    }
    return SynthRecording(
        recording_id=recording_id,
        participant_id=participant_id,
        pin=pin,
        frames=frames,
        audio=audio,
        events=events,
        meta=meta,
    )


def participant_plan(cfg: SynthConfig) -> list[dict]:
    """Deterministic per-participant assignment of pad model, style, blacklist."""
    plan = []
    n_first = cfg.n_participants - cfg.n_participants_second
    for idx in range(cfg.n_participants):
        model, freq = cfg.keypad_models[0] if idx < n_first else cfg.keypad_models[1]
        group = range(n_first) if idx < n_first else range(n_first, cfg.n_participants)
        blacklisted = idx >= group[-1] - cfg.n_blacklisted + 1 if cfg.n_blacklisted else False
        plan.append(
            {
                "participant_id": f"p{idx:02d}",
                "keypad_model": model,
                "feedback_freq_hz": freq,
                "occluder_style": cfg.occluder_styles[idx % len(cfg.occluder_styles)],
                "blacklisted": blacklisted,
            }
        )
    return plan


def _ensure_digit_coverage(pins: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Patch redundant digit slots so every digit 0-9 appears at least once.

    Splits are per participant, so each participant's pins must cover all
    ten classes for the training contract to hold on any role assignment.
    """
    flat = [list(p) for p in pins]
    counts = np.bincount([d for p in flat for d in p], minlength=10)
    missing = [d for d in range(10) if counts[d] == 0]
    if not missing or sum(counts) < 10:  # best effort only below ten keypresses
        return pins
    for i in reversed(range(len(flat))):
        for j in reversed(range(len(flat[i]))):
            if not missing:
                return [tuple(p) for p in flat]
            old = flat[i][j]
            if counts[old] > 1:
                new = missing.pop(0)
                flat[i][j] = new
                counts[old] -= 1
                counts[new] += 1
    return [tuple(p) for p in flat]


def generate_corpus(cfg: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Write a full corpus in the ingest layout and return its manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root_seq = np.random.SeedSequence(cfg.seed)
    part_seqs = root_seq.spawn(cfg.n_participants)
    for p_idx, info in enumerate(participant_plan(cfg)):
        pin_rng = np.random.default_rng(part_seqs[p_idx])
        rec_seeds = part_seqs[p_idx].spawn(cfg.pins_per_participant)
        pins = [
            tuple(int(d) for d in pin_rng.integers(0, 10, size=cfg.pin_len))
            for _ in range(cfg.pins_per_participant)
        ]
        pins = _ensure_digit_coverage(pins)
        for j in range(cfg.pins_per_participant):
            pin = pins[j]
            rec = generate_recording(
                pin,
                cfg,
                rec_seeds[j],
                participant_id=info["participant_id"],
                recording_id=f"{info['participant_id']}_{j:03d}",
                keypad_model=info["keypad_model"],
                feedback_freq_hz=info["feedback_freq_hz"],
                occluder_style=info["occluder_style"],
                blacklisted=info["blacklisted"],
            )
            rec.write(out_dir)
    return build_manifest(out_dir)


# --- keylog-only generation (ingest testing) ----------------------------------


def generate_session_keylog(
    pins,
    rng_seed=0,
    expected_len: int = 5,
    malformed: int = 0,
    inter_key_ms: tuple[float, float] = (200.0, 400.0),
    key_hold_ms: float = 55.0,
) -> list[KeyEvent]:
    """Multi-PIN session keylog; ``malformed`` entries get a wrong length.

    Malformed entries are spread deterministically across the session (every
    ``len(pins) // malformed``-th entry loses or gains a digit).
    """
    rng = np.random.default_rng(rng_seed)
    bad = set()
    if malformed:
        step = max(1, len(pins) // malformed)
        bad = {i * step for i in range(malformed)}
    events: list[KeyEvent] = []
    t = 100.0
    for i, pin in enumerate(pins):
        digits = [int(d) for d in pin]
        if i in bad:
            digits = digits[:-1] if rng.random() < 0.5 else digits + [int(rng.integers(0, 10))]
            if len(digits) == expected_len:  # guard against a no-op mutation
                digits = digits[:-1]
        for d in digits:
            events.append(KeyEvent(int(round(t)), str(d), "down"))
            events.append(KeyEvent(int(round(t + key_hold_ms)), str(d), "up"))
            t += rng.uniform(*inter_key_ms)
        events.append(KeyEvent(int(round(t)), "enter", "down"))
        events.append(KeyEvent(int(round(t + key_hold_ms)), "enter", "up"))
        t += rng.uniform(*inter_key_ms) + 300.0
    return events
