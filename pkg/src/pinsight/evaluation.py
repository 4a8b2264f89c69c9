"""Scenario splits, Top-N metrics, confusion/heat-map summaries, and the
countermeasure experiment runner.

Splits are user-independent: a participant's recordings appear in exactly one
of train/validation/test, and participants flagged as badly covered
(blacklisted) are kept out of validation and test. The ``independent``
scenario trains and validates on the first pad's participants and tests on
the second pad's.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import ingest
from .audio import DetectionConfig, detect_keypress_times, times_to_frames
from .errors import (
    EmptySubset,
    InsufficientParticipants,
    InvalidConfig,
    LengthMismatch,
    MissingClass,
    NoPeaksFound,
)
from .ingest import DatasetManifest, Recording
from .model import (
    LrcnClassifier,
    ModelConfig,
    TrainConfig,
    build_model,
    predict_batch,
    train,
)
from .rank import ensure_distribution, rank_pins, swap_heuristic_guesses, truncate_for_4digit
from .video import (
    KEYPAD_ROWS,
    KeypressSample,
    PreprocessConfig,
    apply_shield,
    build_sample,
    derive_crop_rect,
    downscale,
    inject_frame_error,
    preprocess_frame,
    segment_pin,
)

SCENARIOS = ("single", "independent", "mixed")
N_CLASSES = 10


@dataclass(frozen=True)
class ScenarioSplit:
    scenario: str
    train: frozenset[str]
    val: frozenset[str]
    test: frozenset[str]
    blacklist: frozenset[str]
    seed: int

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario {self.scenario!r} not in {SCENARIOS}")
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise ValueError("train/val/test participant sets must be disjoint")
        if self.blacklist & (self.val | self.test):
            raise ValueError("blacklisted participants cannot enter val or test")


def _participant_models(manifest: DatasetManifest) -> dict[str, str]:
    assignment: dict[str, str] = {}
    for rec in manifest.records:
        assignment.setdefault(rec.participant_id, rec.keypad_model)
    return assignment


def make_split(
    manifest: DatasetManifest,
    scenario: str,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    blacklist: set[str] | None = None,
    seed: int = 0,
    blacklist_in_train: bool = True,
) -> ScenarioSplit:
    """Deterministic user-independent split for an attack scenario.

    ``single`` uses only the first pad's participants, ``mixed`` all of them;
    both allocate floor(train_ratio * n) participants to training and divide
    the remainder between validation and test by the ratio of their shares.
    ``independent`` tests on every eligible second-pad participant and sizes
    validation as floor(val_ratio * total participants), drawn from the
    first pad.

    Blacklisted participants stay in training by default and are dropped
    entirely when ``blacklist_in_train`` is false.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario {scenario!r} not in {SCENARIOS}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError("ratios must be three non-negative values summing to 1")
    models = _participant_models(manifest)
    pads = sorted(set(models.values()))
    if not pads:
        raise InsufficientParticipants("manifest has no recordings")
    first = sorted(p for p, m in models.items() if m == pads[0])
    second = sorted(p for p, m in models.items() if m != pads[0])
    flagged = {r.participant_id for r in manifest.records if r.blacklisted}
    bl = frozenset(flagged | set(blacklist or ()))
    rng = np.random.default_rng(seed)

    def draw_eval(pool: list[str], n_val: int, n_test: int) -> tuple[set, set, set]:
        eligible = [p for p in pool if p not in bl]
        if len(eligible) < n_val + n_test:
            raise InsufficientParticipants(
                f"{len(eligible)} eligible participants, need {n_val + n_test} for val+test"
            )
        picked = [str(p) for p in rng.permutation(eligible)]
        val = set(picked[:n_val])
        test = set(picked[n_val : n_val + n_test])
        train_set = set(pool) - val - test
        if not blacklist_in_train:
            train_set -= bl
        return train_set, val, test

    if scenario in ("single", "mixed"):
        pool = first if scenario == "single" else first + second
        n = len(pool)
        n_train = int(np.floor(ratios[0] * n))
        remainder = n - n_train
        share = ratios[1] / (ratios[1] + ratios[2]) if (ratios[1] + ratios[2]) > 0 else 0.0
        n_val = int(round(share * remainder))
        n_test = remainder - n_val
        if n_train < 1 or n_val < 1 or n_test < 1:
            raise InsufficientParticipants(f"{n} participants cannot fill all three splits")
        train_set, val, test = draw_eval(pool, n_val, n_test)
    else:
        if not second:
            raise InsufficientParticipants("independent scenario needs a second pad")
        test = {p for p in second if p not in bl}
        if not test:
            raise InsufficientParticipants("no eligible second-pad participants for test")
        n_val = int(np.floor(ratios[1] * len(models)))
        if n_val < 1 or len(first) - n_val < 1:
            raise InsufficientParticipants("first pad too small for train+val")
        eligible = [p for p in first if p not in bl]
        if len(eligible) < n_val:
            raise InsufficientParticipants("not enough eligible first-pad participants for val")
        val = {str(p) for p in rng.permutation(eligible)[:n_val]}
        train_set = set(first) - val
        if not blacklist_in_train:
            train_set -= bl

    return ScenarioSplit(
        scenario=scenario,
        train=frozenset(train_set),
        val=frozenset(val),
        test=frozenset(test),
        blacklist=bl,
        seed=seed,
    )


# --- metrics ------------------------------------------------------------------


def key_top_n_accuracy(preds, labels, n: int) -> float:
    """Fraction of samples whose true digit is among the n most probable."""
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    if len(preds) == 0:
        raise LengthMismatch("empty prediction list")
    if not 1 <= n <= N_CLASSES:
        raise ValueError("n must be in 1..10")
    hits = 0
    for p, label in zip(preds, labels):
        arr = ensure_distribution(p)
        order = sorted(range(N_CLASSES), key=lambda d: (-arr[d], d))
        hits += int(label in order[:n])
    return hits / len(preds)


def pin_top_n_accuracy(per_pin_dists, true_pins, n: int, strategy: str = "product") -> float:
    """Fraction of PINs recovered within the first n guesses of a strategy."""
    if strategy not in ("product", "swap"):
        raise ValueError(f"strategy {strategy!r} not in ('product', 'swap')")
    if len(per_pin_dists) != len(true_pins):
        raise LengthMismatch(f"{len(per_pin_dists)} PINs vs {len(true_pins)} truths")
    if len(per_pin_dists) == 0:
        raise LengthMismatch("empty PIN list")
    hits = 0
    for dists, pin in zip(per_pin_dists, true_pins):
        truth = tuple(int(d) for d in pin)
        if strategy == "product":
            guesses = [c.digits for c in rank_pins(dists, n)]
        else:
            guesses = swap_heuristic_guesses(dists, attempts=n)
        hits += int(truth in guesses)
    return hits / len(per_pin_dists)


def confusion_and_heatmaps(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic confusion matrix and per-digit mean distributions.

    ``confusion[i, j]`` is the fraction of true-i samples argmax-predicted j
    (ties to the lowest digit). ``heatmaps[d]`` is the mean predicted
    distribution over true-d samples, for rendering on the pad layout.
    """
    if len(preds) == 0 or len(preds) != len(labels):
        raise LengthMismatch("need equally many predictions and labels")
    labels = np.asarray(labels, dtype=int)
    missing = set(range(N_CLASSES)) - set(labels.tolist())
    if missing:
        raise MissingClass(f"labels lack digits {sorted(missing)}")
    stacked = np.stack([ensure_distribution(p) for p in preds])
    confusion = np.zeros((N_CLASSES, N_CLASSES))
    heatmaps = np.zeros((N_CLASSES, N_CLASSES))
    for digit in range(N_CLASSES):
        rows = stacked[labels == digit]
        predicted = rows.argmax(axis=1)
        for j in predicted:
            confusion[digit, j] += 1
        confusion[digit] /= rows.shape[0]
        heatmaps[digit] = rows.mean(axis=0)
    return confusion, heatmaps


def keypad_grid(vec: np.ndarray) -> np.ndarray:
    """Lay a 10-vector onto the 4x3 pad (NaN in the blank corners)."""
    grid = np.full((4, 3), np.nan)
    for r, row in enumerate(KEYPAD_ROWS):
        for c, digit in enumerate(row):
            if digit is not None:
                grid[r, c] = vec[digit]
    return grid


# --- reports --------------------------------------------------------------------


@dataclass
class EvalReport:
    scenario: str
    strategy: str
    key_top_n: dict[int, float]
    pin_top_n_5: dict[int, float]
    pin_top_n_4: dict[int, float]
    confusion: list[list[float]]
    heatmaps: list[list[float]]
    label_counts: list[int]
    n_train: int
    n_val: int
    n_test: int
    n_entries: int
    metadata: dict = field(default_factory=dict)

    def validate(self, tol: float = 1e-6) -> None:
        """Assert the report's internal consistency contracts."""
        for series in (self.key_top_n, self.pin_top_n_5, self.pin_top_n_4):
            ns = sorted(series)
            vals = [series[n] for n in ns]
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise ValueError(f"accuracy outside [0, 1]: {series}")
            if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
                raise ValueError(f"top-n accuracy not non-decreasing: {series}")
        conf = np.asarray(self.confusion)
        if conf.shape != (N_CLASSES, N_CLASSES):
            raise ValueError("confusion must be 10x10")
        if np.any(np.abs(conf.sum(axis=1) - 1.0) > tol):
            raise ValueError("confusion rows must sum to 1")
        counts = np.asarray(self.label_counts, dtype=float)
        if 1 in self.key_top_n and counts.sum() > 0:
            diag = float((counts / counts.sum()) @ np.diag(conf))
            if abs(diag - self.key_top_n[1]) > 1e-9:
                raise ValueError("key top-1 must equal the count-weighted confusion diagonal")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["key_top_n"] = {str(k): v for k, v in self.key_top_n.items()}
        d["pin_top_n_5"] = {str(k): v for k, v in self.pin_top_n_5.items()}
        d["pin_top_n_4"] = {str(k): v for k, v in self.pin_top_n_4.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        for key in ("key_top_n", "pin_top_n_5", "pin_top_n_4"):
            d[key] = {int(k): float(v) for k, v in d[key].items()}
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --- dataset assembly --------------------------------------------------------------


@dataclass
class EntrySamples:
    """One PIN entry's ordered keypress samples plus its ground truth."""

    recording_id: str
    entry_index: int
    pin: tuple[int, ...]
    samples: list[KeypressSample]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "single"
    strategy: str = "product"
    sample_size: int = 64
    resolution: int | None = None  # countermeasure downscale target
    shield_pct: int = 0
    frame_error_k: int = 0
    timestamps: str = "audio"  # attack-set timestamp source: 'audio' | 'keylog'
    camera: str | None = None
    covering: str | None = None
    blacklist_in_train: bool = True
    pin_len: int = 5
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    model: ModelConfig | None = None
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=8, learning_rate=0.025, momentum=0.9)
    )
    keypad_rows_rect: tuple[int, int, int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.timestamps not in ("audio", "keylog"):
            raise InvalidConfig(f"timestamps {self.timestamps!r} not in ('audio', 'keylog')")
        if self.strategy not in ("product", "swap"):
            raise InvalidConfig(f"strategy {self.strategy!r} not in ('product', 'swap')")

    def final_size(self) -> int:
        if self.resolution is not None and self.resolution < self.sample_size:
            return self.resolution
        return self.sample_size

    def model_config(self) -> ModelConfig:
        if self.model is not None:
            if self.model.input_size != self.final_size():
                raise InvalidConfig(
                    f"model input {self.model.input_size} != sample size {self.final_size()}"
                )
            return self.model
        return ModelConfig.small(self.final_size())


def filter_by_covering_strategy(manifest: DatasetManifest, strategy: str) -> DatasetManifest:
    """Manifest subset with one covering strategy; raises on an empty result."""
    if strategy not in ("side", "over", "top"):
        raise ValueError(f"strategy {strategy!r} not in ('side', 'over', 'top')")
    subset = [r for r in manifest.records if r.covering_strategy == strategy]
    if not subset:
        raise EmptySubset(f"no recordings with covering strategy {strategy!r}")
    return _subset_manifest(manifest, subset)


def _filter_by_camera(manifest: DatasetManifest, camera: str) -> DatasetManifest:
    subset = [r for r in manifest.records if r.camera_position == camera]
    if not subset:
        raise EmptySubset(f"no recordings from the {camera!r} camera")
    return _subset_manifest(manifest, subset)


def _subset_manifest(manifest: DatasetManifest, records: list[Recording]) -> DatasetManifest:
    sub = DatasetManifest(records=list(records), schema_version=manifest.schema_version)
    sub.summary = {
        "recordings": len(records),
        "participants": len({r.participant_id for r in records}),
    }
    return sub


def _entry_seed(seed: int, recording_id: str, entry_index: int, position: int) -> int:
    return int(
        np.random.SeedSequence(
            [seed, zlib.crc32(recording_id.encode()), entry_index, position]
        ).generate_state(1)[0]
    )


def _strictly_increasing(tks: list[int], frame_count: int) -> list[int]:
    """Restore strict ordering after noisy perturbation (attack segments a
    monotone timestamp sequence, so ties are nudged forward)."""
    out = list(tks)
    for i in range(1, len(out)):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + 1
    overflow = out[-1] - (frame_count - 1)
    if overflow > 0:
        out = [tk - overflow for tk in out]
    floor = 0
    for i in range(len(out)):  # repair head underflow from the shift above
        out[i] = max(out[i], floor)
        floor = out[i] + 1
    return out


def _attack_times(
    rec: Recording, entries: list[ingest.PinEntry], fallback_counter: list[int]
) -> list[list[int]]:
    """Per-entry keypress times on the media clock, detected from audio.

    Expected (keylog + offset) times anchor the association; a digit with no
    detection within 150 ms falls back to its expected time.
    """
    try:
        track = ingest.load_audio(rec.audio_path)
        detected = detect_keypress_times(track, DetectionConfig(center_freq_hz=rec.feedback_freq_hz))
    except NoPeaksFound:
        detected = []
        fallback_counter[0] += sum(len(e.digits) for e in entries)
        return [[t + rec.media_offset_ms for t in e.keydown_ms] for e in entries]
    det = np.asarray(detected)
    times: list[list[int]] = []
    for entry in entries:
        entry_times = []
        for t in entry.keydown_ms:
            expected = t + rec.media_offset_ms
            nearest = int(np.argmin(np.abs(det - expected))) if det.size else -1
            if nearest >= 0 and abs(int(det[nearest]) - expected) <= 150:
                entry_times.append(int(det[nearest]))
            else:
                entry_times.append(expected)
                fallback_counter[0] += 1
        times.append(entry_times)
    return times


def _recording_entries(
    rec: Recording, cfg: ExperimentConfig, attack_set: bool, fallback_counter: list[int]
) -> list[EntrySamples]:
    frames = ingest.load_frames(rec.video_path)
    crop = rec.crop_rect or derive_crop_rect(frames[0])
    pp = PreprocessConfig(crop_rect=crop, out_size=cfg.sample_size)
    processed = np.stack([preprocess_frame(f, pp) for f in frames])
    events = ingest.parse_keylog(rec.keylog_path)
    entries, _ = ingest.extract_pin_entries(events, expected_len=cfg.pin_len)

    if attack_set and cfg.timestamps == "audio" and cfg.frame_error_k == 0:
        per_entry_times = _attack_times(rec, entries, fallback_counter)
        offsets = [0] * len(entries)  # already on the media clock
    else:
        per_entry_times = [list(e.keydown_ms) for e in entries]
        offsets = [rec.media_offset_ms] * len(entries)

    out: list[EntrySamples] = []
    frame_count = processed.shape[0]
    for entry_idx, (entry, times, offset) in enumerate(zip(entries, per_entry_times, offsets)):
        tks = times_to_frames(times, rec.fps, offset)
        tks = [min(tk, frame_count - 1) for tk in tks]
        if attack_set and cfg.frame_error_k > 0:
            tks = [
                inject_frame_error(
                    tk, cfg.frame_error_k, _entry_seed(cfg.seed, rec.id, entry_idx, pos), frame_count
                )
                for pos, tk in enumerate(tks)
            ]
            tks = sorted(tks)
        tks = _strictly_increasing(tks, frame_count)
        slots = segment_pin(frame_count, tks)
        samples = [
            build_sample(processed, slot, entry.digits[i], rec.id, i + 1)
            for i, slot in enumerate(slots)
        ]
        out.append(EntrySamples(rec.id, entry_idx, entry.digits, samples))
    return out


def _transform(sample: KeypressSample, cfg: ExperimentConfig) -> KeypressSample:
    out = sample
    if cfg.shield_pct:
        rect = cfg.keypad_rows_rect or (0, 0, out.size, out.size)
        out = apply_shield(out, cfg.shield_pct, rect)
    if cfg.resolution is not None and cfg.resolution < cfg.sample_size:
        out = downscale(out, cfg.resolution)
    return out


def recording_entries(
    rec: Recording, cfg: ExperimentConfig, attack_set: bool = False
) -> list[EntrySamples]:
    """Segment one recording into per-entry samples, countermeasures applied."""
    entries = _recording_entries(rec, cfg, attack_set, [0])
    for entry in entries:
        entry.samples = [_transform(s, cfg) for s in entry.samples]
    return entries


def build_role_entries(
    manifest: DatasetManifest,
    participants: frozenset[str],
    cfg: ExperimentConfig,
    attack_set: bool = False,
) -> tuple[list[EntrySamples], int]:
    """All entries for one split role, countermeasures applied.

    Returns the entry list and the number of detection fallbacks.
    """
    fallback_counter = [0]
    entries: list[EntrySamples] = []
    for rec in manifest.records:
        if rec.participant_id not in participants:
            continue
        entries.extend(_recording_entries(rec, cfg, attack_set, fallback_counter))
    for entry in entries:
        entry.samples = [_transform(s, cfg) for s in entry.samples]
    return entries, fallback_counter[0]


@dataclass
class ExperimentOutcome:
    report: EvalReport
    model: LrcnClassifier
    history: list


def run_experiment(
    manifest: DatasetManifest,
    split: ScenarioSplit,
    cfg: ExperimentConfig,
    model: LrcnClassifier | None = None,
    out_dir: str | Path | None = None,
) -> ExperimentOutcome:
    """Train (unless a model is supplied) and evaluate one knob setting."""
    working = manifest
    if cfg.camera is not None:
        working = _filter_by_camera(working, cfg.camera)
    if cfg.covering is not None:
        working = filter_by_covering_strategy(working, cfg.covering)

    history: list = []
    if model is None:
        train_entries, _ = build_role_entries(working, split.train, cfg)
        val_entries, _ = build_role_entries(working, split.val, cfg)
        train_samples = [s for e in train_entries for s in e.samples]
        val_samples = [s for e in val_entries for s in e.samples]
        model = build_model(cfg.model_config(), seed=cfg.seed)
        result = train(model, train_samples, val_samples, cfg.train)
        history = result.history
        # Attack with the best-validation checkpoint, not the last epoch.
        model.load_state_dict(result.best_state)
        n_train, n_val = len(train_samples), len(val_samples)
    else:
        n_train = n_val = 0

    test_entries, fallbacks = build_role_entries(working, split.test, cfg, attack_set=True)
    test_samples = [s for e in test_entries for s in e.samples]
    if not test_samples:
        raise InsufficientParticipants("test split produced no samples")
    dists = predict_batch(model, test_samples)
    labels = [s.label for s in test_samples]

    per_entry = []
    cursor = 0
    for entry in test_entries:
        per_entry.append(dists[cursor : cursor + len(entry.samples)])
        cursor += len(entry.samples)
    true_pins = [e.pin for e in test_entries]

    key_top = {n: key_top_n_accuracy(dists, labels, n) for n in (1, 2, 3)}
    pin5 = {
        n: pin_top_n_accuracy(per_entry, true_pins, n, cfg.strategy) for n in (1, 2, 3)
    }
    pin4 = {
        n: pin_top_n_accuracy(
            [truncate_for_4digit(d) for d in per_entry],
            [p[:-1] for p in true_pins],
            n,
            cfg.strategy,
        )
        for n in (1, 2, 3)
    }
    confusion, heatmaps = confusion_and_heatmaps(dists, labels)
    counts = np.bincount(np.asarray(labels), minlength=N_CLASSES)

    report = EvalReport(
        scenario=split.scenario,
        strategy=cfg.strategy,
        key_top_n=key_top,
        pin_top_n_5=pin5,
        pin_top_n_4=pin4,
        confusion=confusion.tolist(),
        heatmaps=heatmaps.tolist(),
        label_counts=counts.tolist(),
        n_train=n_train,
        n_val=n_val,
        n_test=len(test_samples),
        n_entries=len(test_entries),
        metadata={
            "shield_pct": cfg.shield_pct,
            "resolution": cfg.final_size(),
            "frame_error_k": cfg.frame_error_k,
            "frame_error_sigma": cfg.frame_error_k / 2.576 if cfg.frame_error_k else 0.0,
            "timestamps": "ground-truth+noise" if cfg.frame_error_k else cfg.timestamps,
            "camera": cfg.camera,
            "covering": cfg.covering,
            "blacklist_in_train": cfg.blacklist_in_train,
            "strategy": cfg.strategy,
            "seed": cfg.seed,
            "detection_fallbacks": fallbacks,
            "best_epoch": max(history, key=lambda h: h.val_acc).epoch if history else None,
            "best_val_acc": max((h.val_acc for h in history), default=None),
        },
    )
    report.validate()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.save(out_dir / "report.json")
        render_report(report, out_dir)
    return ExperimentOutcome(report=report, model=model, history=history)


# --- rendering -----------------------------------------------------------------


def render_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Write bar charts, the confusion matrix, and per-digit heat maps."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    series = [
        ("Key", report.key_top_n),
        ("5-digit PIN", report.pin_top_n_5),
        ("4-digit PIN", report.pin_top_n_4),
    ]
    for ax, (title, data) in zip(axes, series):
        ns = sorted(data)
        ax.bar([f"Top-{n}" for n in ns], [data[n] for n in ns], color="#4878a8")
        ax.set_ylim(0, 1)
        ax.set_title(f"{title} accuracy ({report.scenario})")
    fig.tight_layout()
    path = out_dir / "accuracy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(np.asarray(report.confusion), vmin=0, vmax=1, cmap="viridis")
    ax.set_xlabel("predicted digit")
    ax.set_ylabel("true digit")
    ax.set_xticks(range(10))
    ax.set_yticks(range(10))
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    path = out_dir / "confusion.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    heat = np.asarray(report.heatmaps)
    fig, axes = plt.subplots(2, 5, figsize=(14, 5.5))
    for digit, ax in enumerate(axes.flat):
        grid = keypad_grid(heat[digit])
        im = ax.imshow(grid, vmin=0, vmax=1, cmap="magma")
        for r, row in enumerate(KEYPAD_ROWS):
            for c, key in enumerate(row):
                if key is not None:
                    ax.text(c, r, f"{key}\n{grid[r, c]:.2f}", ha="center", va="center", fontsize=7, color="w")
        ax.set_title(f"true digit {digit}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    path = out_dir / "heatmaps.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
