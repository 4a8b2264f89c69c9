"""Frame pre-processing, per-keypress segmentation, augmentation, and
countermeasure transforms.

A keypress sample is a fixed-length sequence of 11 grayscale frames with the
target keypress at index 5; missing neighborhood frames are black padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import CropOutOfBounds, InvalidNeighborhood, UnknownCoverage

SEQUENCE_LEN = 11
TARGET_INDEX = 5
HALF_WINDOW = SEQUENCE_LEN // 2

# Two-sided 99% normal quantile: frame-error confidence k means
# Pr(|error| > k) < 0.01, i.e. sigma = k / 2.576.
FRAME_ERROR_Z = 2.576

# Key rows top to bottom; None marks the blank corners beside the 0 key.
KEYPAD_ROWS: tuple[tuple[int | None, ...], ...] = (
    (1, 2, 3),
    (4, 5, 6),
    (7, 8, 9),
    (None, 0, None),
)


def digit_cell(digit: int) -> tuple[int, int]:
    """Row/column of a digit key on the 4x3 pad layout."""
    if digit == 0:
        return 3, 1
    if not 1 <= digit <= 9:
        raise ValueError(f"not a keypad digit: {digit}")
    return (digit - 1) // 3, (digit - 1) % 3


def key_center(digit: int, keypad_rect: tuple[int, int, int, int]) -> tuple[float, float]:
    """Pixel center (x, y) of a digit key within the keypad rectangle."""
    x, y, w, h = keypad_rect
    row, col = digit_cell(digit)
    return x + (col + 0.5) * w / 3.0, y + (row + 0.5) * h / 4.0


@dataclass(frozen=True)
class PreprocessConfig:
    crop_rect: tuple[int, int, int, int]  # x, y, w, h in source pixels
    out_size: int = 250

    def __post_init__(self):
        if self.out_size < 16:
            raise ValueError("out_size must be >= 16")


@dataclass(frozen=True)
class AugmentParams:
    max_rotation_deg: float = 7.0
    max_shift_frac: float = 0.10
    zoom_range: tuple[float, float] = (0.9, 1.1)
    synthetic_fraction: float = 0.20

    def __post_init__(self):
        if not 0.0 <= self.synthetic_fraction <= 1.0:
            raise ValueError("synthetic_fraction must be in [0, 1]")
        if self.zoom_range[0] > self.zoom_range[1]:
            raise ValueError("zoom_range must be (low, high)")


@dataclass
class KeypressSample:
    """11 grayscale frames centered on one keypress.

    ``frames`` is float32 ``(11, S, S)`` in [0, 1]; black-padding frames are
    all-zero. The target frame (index 5) is always a real frame.
    """

    frames: np.ndarray
    label: int | None
    recording_id: str
    position_in_pin: int
    tk_frame: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3 or self.frames.shape[0] != SEQUENCE_LEN:
            raise ValueError(f"expected ({SEQUENCE_LEN}, S, S) frames, got {self.frames.shape}")
        if self.frames.shape[1] != self.frames.shape[2]:
            raise ValueError("frames must be square")
        if self.label is not None and not 0 <= self.label <= 9:
            raise ValueError(f"label must be a digit, got {self.label}")

    @property
    def size(self) -> int:
        return int(self.frames.shape[1])

    @property
    def padding_mask(self) -> np.ndarray:
        """Boolean per-slot mask, True where the slot is black padding."""
        return ~self.frames.any(axis=(1, 2))

    def replace_frames(self, frames: np.ndarray) -> "KeypressSample":
        return KeypressSample(
            frames=frames,
            label=self.label,
            recording_id=self.recording_id,
            position_in_pin=self.position_in_pin,
            tk_frame=self.tk_frame,
        )


# --- frame pre-processing ----------------------------------------------------


def preprocess_frame(raw_frame: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Grayscale, normalize to [0, 1], crop to the keypad, resize to out_size."""
    frame = np.asarray(raw_frame)
    if frame.ndim == 3:
        frame = cv2.cvtColor(frame, cv2.COLOR_RGB2GRAY)
    if frame.dtype == np.uint8:
        frame = frame.astype(np.float32) / 255.0
    else:
        frame = np.clip(frame.astype(np.float32), 0.0, 1.0)
    x, y, w, h = cfg.crop_rect
    height, width = frame.shape
    if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > width or y + h > height:
        raise CropOutOfBounds(f"crop {cfg.crop_rect} outside {width}x{height} frame")
    crop = frame[y : y + h, x : x + w]
    interp = cv2.INTER_AREA if cfg.out_size < min(w, h) else cv2.INTER_LINEAR
    out = cv2.resize(crop, (cfg.out_size, cfg.out_size), interpolation=interp)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def derive_crop_rect(frame: np.ndarray, marker_threshold: float = 0.99) -> tuple[int, int, int, int]:
    """Recover the keypad crop from fiducial markers (max-intensity corner dots)."""
    mask = np.asarray(frame) >= marker_threshold
    if not mask.any():
        raise CropOutOfBounds("no fiducial markers found")
    rows = np.where(mask.any(axis=1))[0]
    cols = np.where(mask.any(axis=0))[0]
    x, y = int(cols[0]), int(rows[0])
    return x, y, int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)


# --- segmentation -------------------------------------------------------------


def segment_keypress(
    frame_count: int,
    tk: int,
    prev_tk: int | None = None,
    next_tk: int | None = None,
) -> list[int | None]:
    """Slot layout for one keypress: 5 before, target, 5 after.

    Real slots hold frame indices strictly between the neighboring keypresses
    (at most 5 each side); missing slots are ``None`` (black padding). A first
    digit takes no frames before the target, a last digit none after.
    """
    if not 0 <= tk < frame_count:
        raise InvalidNeighborhood(f"target frame {tk} outside [0, {frame_count})")
    if prev_tk is not None and prev_tk >= tk:
        raise InvalidNeighborhood(f"prev_tk {prev_tk} not before tk {tk}")
    if next_tk is not None and next_tk <= tk:
        raise InvalidNeighborhood(f"next_tk {next_tk} not after tk {tk}")

    if prev_tk is None:
        before: list[int] = []
    else:
        before = [f for f in range(tk - HALF_WINDOW, tk) if f > prev_tk and f >= 0]
    if next_tk is None:
        after: list[int] = []
    else:
        after = [f for f in range(tk + 1, tk + HALF_WINDOW + 1) if f < next_tk and f < frame_count]

    head: list[int | None] = [None] * (HALF_WINDOW - len(before)) + list(before)
    tail: list[int | None] = list(after) + [None] * (HALF_WINDOW - len(after))
    return head + [tk] + tail


def segment_pin(frame_count: int, tks: list[int]) -> list[list[int | None]]:
    """Segment a whole PIN entry: each keypress with its actual neighbors."""
    slots = []
    for i, tk in enumerate(tks):
        prev_tk = tks[i - 1] if i > 0 else None
        next_tk = tks[i + 1] if i < len(tks) - 1 else None
        slots.append(segment_keypress(frame_count, tk, prev_tk, next_tk))
    return slots


def build_sample(
    frames: np.ndarray,
    slots: list[int | None],
    label: int | None,
    recording_id: str,
    position_in_pin: int,
) -> KeypressSample:
    """Materialize a slot layout against preprocessed recording frames."""
    size = frames.shape[1]
    stack = np.zeros((SEQUENCE_LEN, size, size), dtype=np.float32)
    for i, slot in enumerate(slots):
        if slot is not None:
            stack[i] = frames[slot]
    return KeypressSample(
        frames=stack,
        label=label,
        recording_id=recording_id,
        position_in_pin=position_in_pin,
        tk_frame=int(slots[TARGET_INDEX]),
    )


# --- augmentation --------------------------------------------------------------


def apply_affine(
    sample: KeypressSample,
    rotation_deg: float,
    shift_x_frac: float,
    shift_y_frac: float,
    zoom: float,
) -> KeypressSample:
    """Apply one rotation+shift+zoom to all frames; padding stays black."""
    size = sample.size
    center = ((size - 1) / 2.0, (size - 1) / 2.0)
    m = cv2.getRotationMatrix2D(center, rotation_deg, zoom)
    m[0, 2] += shift_x_frac * size
    m[1, 2] += shift_y_frac * size
    out = np.empty_like(sample.frames)
    padding = sample.padding_mask
    for i in range(SEQUENCE_LEN):
        if padding[i]:
            out[i] = 0.0
            continue
        out[i] = cv2.warpAffine(
            sample.frames[i],
            m,
            (size, size),
            flags=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_CONSTANT,
            borderValue=0.0,
        )
    return sample.replace_frames(np.clip(out, 0.0, 1.0))


def augment(sample: KeypressSample, params: AugmentParams, rng_seed) -> KeypressSample:
    """Random rotation, shift, and zoom drawn once and applied to all frames."""
    rng = np.random.default_rng(rng_seed)
    rotation = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg)
    shift_x = rng.uniform(-params.max_shift_frac, params.max_shift_frac)
    shift_y = rng.uniform(-params.max_shift_frac, params.max_shift_frac)
    zoom = rng.uniform(params.zoom_range[0], params.zoom_range[1])
    if rotation == 0.0 and shift_x == 0.0 and shift_y == 0.0 and zoom == 1.0:
        return sample.replace_frames(sample.frames.copy())
    return apply_affine(sample, rotation, shift_x, shift_y, zoom)


# --- countermeasure transforms ---------------------------------------------------

SHIELD_COVERAGES = (25, 50, 75, 100)


def apply_shield(
    target: KeypressSample | np.ndarray,
    coverage_pct: int,
    keypad_rows_rect: tuple[int, int, int, int],
):
    """Black out the top ``coverage_pct`` of the key-row region.

    25% covers the 1-2-3 row, 50% the first two rows, 75% the first three,
    100% all four. Masking is idempotent and monotone in coverage.
    """
    if coverage_pct not in SHIELD_COVERAGES:
        raise UnknownCoverage(f"coverage {coverage_pct} not in {SHIELD_COVERAGES}")
    x, y, w, h = keypad_rows_rect
    depth = int(round(h * coverage_pct / 100.0))

    def mask(frame: np.ndarray) -> np.ndarray:
        out = frame.copy()
        out[y : y + depth, x : x + w] = 0.0
        return out

    if isinstance(target, KeypressSample):
        padding = target.padding_mask
        frames = np.stack(
            [target.frames[i] if padding[i] else mask(target.frames[i]) for i in range(SEQUENCE_LEN)]
        )
        return target.replace_frames(frames)
    return mask(np.asarray(target, dtype=np.float32))


def downscale_frame(frame: np.ndarray, size: int) -> np.ndarray:
    out = cv2.resize(frame, (size, size), interpolation=cv2.INTER_AREA)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def downscale(sample: KeypressSample, size: int) -> KeypressSample:
    """Reduce sample resolution (simulates lower camera quality / distance)."""
    if size >= sample.size:
        raise ValueError(f"downscale target {size} not below current {sample.size}")
    frames = np.stack([downscale_frame(f, size) for f in sample.frames])
    return sample.replace_frames(frames)


def inject_frame_error(tk: int, confidence_k: int, rng_seed, frame_count: int) -> int:
    """Perturb a detected keypress frame with seeded Gaussian error.

    ``confidence_k`` is the two-sided 99% bound on the error magnitude:
    sigma = k / 2.576, so Pr(|error| > k) < 0.01 before clamping.
    """
    if tk < 0:
        raise ValueError("tk must be non-negative")
    if confidence_k <= 0:
        raise ValueError("confidence_k must be positive")
    rng = np.random.default_rng(rng_seed)
    sigma = confidence_k / FRAME_ERROR_Z
    eps = rng.normal(0.0, sigma)
    return int(np.clip(tk + int(round(eps)), 0, frame_count - 1))


# --- sample persistence ------------------------------------------------------------


def save_samples(directory: str | Path, recording_id: str, samples: list[KeypressSample]) -> None:
    """Persist one recording's samples: raw float32 stack plus a JSON index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stack = np.stack([s.frames for s in samples]).astype(np.float32)
    np.save(directory / f"{recording_id}.npy", stack)
    index = [
        {
            "recording_id": s.recording_id,
            "position_in_pin": s.position_in_pin,
            "label": s.label,
            "tk_frame": s.tk_frame,
        }
        for s in samples
    ]
    (directory / f"{recording_id}.json").write_text(json.dumps(index, indent=2))


def load_samples(directory: str | Path, recording_id: str) -> list[KeypressSample]:
    directory = Path(directory)
    stack = np.load(directory / f"{recording_id}.npy")
    index = json.loads((directory / f"{recording_id}.json").read_text())
    if len(index) != stack.shape[0]:
        raise ValueError(f"index length {len(index)} != archive length {stack.shape[0]}")
    return [
        KeypressSample(
            frames=stack[i],
            label=entry["label"],
            recording_id=entry["recording_id"],
            position_in_pin=entry["position_in_pin"],
            tk_frame=entry["tk_frame"],
        )
        for i, entry in enumerate(index)
    ]


def load_all_samples(directory: str | Path) -> list[KeypressSample]:
    directory = Path(directory)
    samples: list[KeypressSample] = []
    for npy in sorted(directory.glob("*.npy")):
        samples.extend(load_samples(directory, npy.stem))
    return samples
