"""Recording ingest: keylogs, media loading, and the dataset manifest.

A recording is one typing session backed by three companion files in a
per-recording directory::

    <root>/<recording_id>/
        video.npy | video.npz | video.<container>   frames
        audio.wav                                   mono PCM feedback track
        keylog.csv                                  t_ms,key,kind per line
        meta.json                                   recording metadata

Keylog timestamps are milliseconds from session start; ``media_offset_ms``
shifts them onto the media clock (estimated from audio or supplied manually).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .audio import AudioTrack
from .errors import (
    DuplicateRecordingId,
    EmptyFile,
    MalformedKeylog,
    MissingCompanionFile,
)

SCHEMA_VERSION = "1"

DIGIT_KEYS = tuple(str(d) for d in range(10))
CONTROL_KEYS = ("enter", "cancel", "clear")
VALID_KEYS = DIGIT_KEYS + CONTROL_KEYS
VALID_KINDS = ("down", "up")

# Feedback-tone frequency per known pad model.
KNOWN_FEEDBACK_HZ = {"D-8201F": 2900.0, "D-8203B": 2500.0}

CAMERA_POSITIONS = ("left", "center", "right")
COVERING_STRATEGIES = ("side", "over", "top", "unknown")


@dataclass(frozen=True)
class KeyEvent:
    t_ms: int
    key: str
    kind: str


@dataclass(frozen=True)
class PinEntry:
    """One enter-terminated digit sequence; timestamps are key-down times."""

    digits: tuple[int, ...]
    keydown_ms: tuple[int, ...]
    terminated_by: str = "enter"

    def __post_init__(self):
        if len(self.digits) != len(self.keydown_ms):
            raise ValueError("digits and keydown_ms lengths differ")
        if any(b <= a for a, b in zip(self.keydown_ms, self.keydown_ms[1:])):
            raise ValueError("keydown timestamps must be strictly increasing")


@dataclass
class Recording:
    id: str
    participant_id: str
    keypad_model: str
    feedback_freq_hz: float
    camera_position: str = "center"
    covering_strategy: str = "unknown"
    blacklisted: bool = False
    fps: float = 30.0
    video_path: str = ""
    audio_path: str = ""
    keylog_path: str = ""
    media_offset_ms: int = 0
    crop_rect: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.feedback_freq_hz <= 0:
            raise ValueError("feedback_freq_hz must be positive")
        if self.camera_position not in CAMERA_POSITIONS:
            raise ValueError(f"camera_position {self.camera_position!r} not in {CAMERA_POSITIONS}")
        if self.covering_strategy not in COVERING_STRATEGIES:
            raise ValueError(
                f"covering_strategy {self.covering_strategy!r} not in {COVERING_STRATEGIES}"
            )
        if self.crop_rect is not None:
            object.__setattr__(self, "crop_rect", tuple(int(v) for v in self.crop_rect))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crop_rect"] = list(self.crop_rect) if self.crop_rect is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Recording":
        d = dict(d)
        if d.get("crop_rect") is not None:
            d["crop_rect"] = tuple(d["crop_rect"])
        return cls(**d)


@dataclass
class DatasetManifest:
    records: list[Recording] = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION
    summary: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def participants(self) -> list[str]:
        return sorted({r.participant_id for r in self.records})

    def by_participant(self, participant_id: str) -> list[Recording]:
        return [r for r in self.records if r.participant_id == participant_id]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "records": [r.to_dict() for r in self.records],
            "summary": self.summary,
            "warnings": self.warnings,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            records=[Recording.from_dict(r) for r in d.get("records", [])],
            schema_version=d.get("schema_version", SCHEMA_VERSION),
            summary=dict(d.get("summary", {})),
            warnings=list(d.get("warnings", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- keylog parsing ---------------------------------------------------------


def parse_keylog(path: str | Path) -> list[KeyEvent]:
    """Parse a ``t_ms,key,kind`` CSV into sorted key events.

    The header line is optional. Raises :class:`MalformedKeylog` with the
    offending line number on bad fields, decreasing timestamps, or unpaired
    down/up events; :class:`EmptyFile` when no events are present.
    """
    text = Path(path).read_text()
    events: list[KeyEvent] = []
    pressed: dict[str, int] = {}
    last_t = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line_no == 1 and line.lower().replace(" ", "") == "t_ms,key,kind":
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise MalformedKeylog(f"expected 3 fields, got {len(parts)}", line_no)
        t_raw, key, kind = parts
        try:
            t_ms = int(t_raw)
        except ValueError:
            raise MalformedKeylog(f"bad timestamp {t_raw!r}", line_no) from None
        if t_ms < 0:
            raise MalformedKeylog(f"negative timestamp {t_ms}", line_no)
        if key not in VALID_KEYS:
            raise MalformedKeylog(f"unknown key {key!r}", line_no)
        if kind not in VALID_KINDS:
            raise MalformedKeylog(f"unknown event kind {kind!r}", line_no)
        if last_t is not None and t_ms < last_t:
            raise MalformedKeylog(f"timestamp {t_ms} decreases from {last_t}", line_no)
        last_t = t_ms
        if kind == "down":
            if key in pressed:
                raise MalformedKeylog(f"key {key!r} pressed twice without release", line_no)
            pressed[key] = line_no
        else:
            if key not in pressed:
                raise MalformedKeylog(f"release of key {key!r} that was never pressed", line_no)
            del pressed[key]
        events.append(KeyEvent(t_ms, key, kind))
    if not events:
        raise EmptyFile(f"no key events in {path}")
    if pressed:
        key, line_no = next(iter(pressed.items()))
        raise MalformedKeylog(f"key {key!r} never released", line_no)
    return events


def write_keylog(path: str | Path, events: list[KeyEvent], header: bool = True) -> None:
    lines = ["t_ms,key,kind"] if header else []
    lines += [f"{e.t_ms},{e.key},{e.kind}" for e in events]
    Path(path).write_text("\n".join(lines) + "\n")


def extract_pin_entries(
    events: list[KeyEvent], expected_len: int = 5
) -> tuple[list[PinEntry], int]:
    """Split events into enter-terminated PIN entries of the expected length.

    Sequences of any other length, and sequences aborted by cancel/clear, are
    counted in ``discarded`` rather than raising. An enter or cancel with no
    pending digits is ignored. Trailing digits without a terminator are
    dropped silently.
    """
    entries: list[PinEntry] = []
    discarded = 0
    digits: list[int] = []
    downs: list[int] = []
    for ev in events:
        if ev.kind != "down":
            continue
        if ev.key in DIGIT_KEYS:
            digits.append(int(ev.key))
            downs.append(ev.t_ms)
        elif ev.key == "enter":
            if digits:
                if len(digits) == expected_len:
                    entries.append(PinEntry(tuple(digits), tuple(downs)))
                else:
                    discarded += 1
            digits, downs = [], []
        else:  # cancel / clear abort the pending sequence
            if digits:
                discarded += 1
            digits, downs = [], []
    return entries, discarded


# --- media loading ----------------------------------------------------------


def load_frames(path: str | Path) -> np.ndarray:
    """Load video frames as float32 ``(T, H, W)`` grayscale in [0, 1].

    Raw ``.npy``/``.npz`` archives hold either uint8 (scaled by 255) or float
    arrays; any other extension is decoded with OpenCV.
    """
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
    elif path.suffix == ".npz":
        arr = np.load(path)["frames"]
    else:
        arr = _decode_video(path)
    if arr.ndim == 4 and arr.shape[-1] == 3:
        arr = arr.mean(axis=-1)
    if arr.ndim != 3:
        raise ValueError(f"expected (T, H, W) frames in {path}, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / 255.0
    return np.clip(arr.astype(np.float32), 0.0, 1.0)


def _decode_video(path: Path) -> np.ndarray:
    import cv2

    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise MissingCompanionFile(f"cannot open video {path}")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY))
    cap.release()
    if not frames:
        raise EmptyFile(f"no frames decoded from {path}")
    return np.stack(frames)


def load_audio(path: str | Path) -> AudioTrack:
    from scipy.io import wavfile

    rate, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    return AudioTrack(samples=samples, sample_rate_hz=int(rate))


def save_audio(path: str | Path, track: AudioTrack) -> None:
    from scipy.io import wavfile

    pcm = np.clip(track.samples, -1.0, 1.0)
    wavfile.write(str(path), track.sample_rate_hz, (pcm * 32767.0).astype(np.int16))


# --- manifest building ------------------------------------------------------

_VIDEO_NAMES = ("video.npy", "video.npz", "video.mp4", "video.avi")


def build_manifest(
    root_dir: str | Path, metadata_file: str | Path | None = None
) -> DatasetManifest:
    """Scan a dataset root and build a validated manifest.

    ``metadata_file`` may hold a JSON object mapping recording id to field
    overrides (e.g. blacklist flags assigned after data review).
    """
    root = Path(root_dir)
    overrides: dict[str, dict] = {}
    if metadata_file is not None:
        overrides = json.loads(Path(metadata_file).read_text())

    records: list[Recording] = []
    warnings: list[str] = []
    seen_ids: set[str] = set()
    entry_count = 0
    discard_count = 0
    for rec_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        meta_path = rec_dir / "meta.json"
        if not meta_path.exists():
            raise MissingCompanionFile(f"{rec_dir} lacks meta.json")
        keylog = rec_dir / "keylog.csv"
        if not keylog.exists():
            raise MissingCompanionFile(f"{rec_dir} lacks keylog.csv")
        audio = rec_dir / "audio.wav"
        if not audio.exists():
            raise MissingCompanionFile(f"{rec_dir} lacks audio.wav")
        video = next((rec_dir / n for n in _VIDEO_NAMES if (rec_dir / n).exists()), None)
        if video is None:
            raise MissingCompanionFile(f"{rec_dir} lacks a video file ({'|'.join(_VIDEO_NAMES)})")

        meta = json.loads(meta_path.read_text())
        meta.setdefault("id", rec_dir.name)
        meta.update(overrides.get(meta["id"], {}))
        meta["video_path"] = str(video)
        meta["audio_path"] = str(audio)
        meta["keylog_path"] = str(keylog)
        rec = Recording.from_dict(meta)
        if rec.id in seen_ids:
            raise DuplicateRecordingId(rec.id)
        seen_ids.add(rec.id)
        try:
            entries, discarded = extract_pin_entries(parse_keylog(keylog))
            entry_count += len(entries)
            discard_count += discarded
        except (MalformedKeylog, EmptyFile) as exc:
            warnings.append(f"{rec.id}: {exc}")
        records.append(rec)

    manifest = DatasetManifest(records=records, warnings=warnings)
    manifest.summary = {
        "recordings": len(records),
        "participants": len(manifest.participants()),
        "entries": entry_count,
        "discarded": discard_count,
    }
    return manifest
