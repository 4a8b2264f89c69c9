import numpy as np
import pytest

from pinsight.audio import DetectionConfig, detect_keypress_times, estimate_media_offset
from pinsight.ingest import extract_pin_entries, load_audio, load_frames
from pinsight.synth import (
    SynthConfig,
    generate_corpus,
    generate_recording,
    generate_session_keylog,
    keypad_rect,
    make_tone_track,
    participant_plan,
)
from pinsight.video import derive_crop_rect


class TestGenerateRecording:
    def test_keylog_and_audio_counts(self):
        cfg = SynthConfig(seed=0)
        rec = generate_recording((7, 3, 6, 3, 3), cfg, rng_seed=1)
        digit_downs = [e for e in rec.events if e.kind == "down" and e.key != "enter"]
        enters = [e for e in rec.events if e.key == "enter" and e.kind == "down"]
        assert len(digit_downs) == 5
        assert len(enters) == 1
        times = detect_keypress_times(rec.audio, DetectionConfig(center_freq_hz=2900.0))
        assert len(times) == 5  # enter emits no burst

    def test_fixed_seed_bit_identical(self):
        cfg = SynthConfig(seed=0)
        a = generate_recording((1, 2, 3, 4, 5), cfg, rng_seed=9)
        b = generate_recording((1, 2, 3, 4, 5), cfg, rng_seed=9)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.audio.samples, b.audio.samples)
        assert a.events == b.events

    def test_burst_times_align_with_keylog(self):
        cfg = SynthConfig(seed=0)
        rec = generate_recording((9, 1, 4, 2, 8), cfg, rng_seed=3)
        detected = detect_keypress_times(rec.audio, DetectionConfig(center_freq_hz=2900.0))
        downs = [e.t_ms for e in rec.events if e.kind == "down" and e.key != "enter"]
        offset, matched = estimate_media_offset(detected, downs)
        assert offset == 0
        assert matched == 5

    def test_fiducials_recover_crop(self):
        cfg = SynthConfig(frame_size=96, seed=0)
        rec = generate_recording((0, 0, 0, 0, 0), cfg, rng_seed=4)
        assert derive_crop_rect(rec.frames[0]) == keypad_rect(96)

    def test_signal_strength_zero_removes_digit_dependence(self):
        cfg = SynthConfig(signal_strength=0.0, seed=0)
        centroids = {}
        for digit in (1, 5, 9, 0):
            rec = generate_recording((digit,) * 5, cfg, rng_seed=50 + digit)
            frame = rec.frames[-1]
            occ = frame >= 0.85  # bright occluder, below marker intensity
            ys, xs = np.nonzero(occ)
            centroids[digit] = (xs.mean(), ys.mean())
        values = list(centroids.values())
        spread = max(
            np.hypot(a[0] - b[0], a[1] - b[1]) for a in values for b in values
        )
        assert spread <= 3.0  # jitter only, no per-digit offset

    def test_signal_strength_full_separates_digits(self):
        cfg = SynthConfig(signal_strength=1.0, seed=0)
        centroids = {}
        for digit in (1, 9):
            rec = generate_recording((digit,) * 5, cfg, rng_seed=70 + digit)
            occ = rec.frames[-1] >= 0.85
            ys, xs = np.nonzero(occ)
            centroids[digit] = (xs.mean(), ys.mean())
        d = np.hypot(
            centroids[1][0] - centroids[9][0], centroids[1][1] - centroids[9][1]
        )
        assert d > 10.0


class TestCorpus:
    def test_counts_and_layout(self, tiny_corpus):
        root, cfg, manifest = tiny_corpus
        assert manifest.summary["recordings"] == cfg.n_participants * cfg.pins_per_participant
        rec_dirs = [p for p in root.iterdir() if p.is_dir()]
        assert len(rec_dirs) == 6
        one = sorted(rec_dirs)[0]
        assert (one / "video.npy").exists()
        assert (one / "audio.wav").exists()
        assert (one / "keylog.csv").exists()
        assert (one / "meta.json").exists()

    def test_media_roundtrip_through_ingest(self, tiny_corpus):
        _, cfg, manifest = tiny_corpus
        rec = manifest.records[0]
        frames = load_frames(rec.video_path)
        assert frames.ndim == 3 and frames.shape[1:] == (cfg.frame_size, cfg.frame_size)
        assert 0.0 <= frames.min() and frames.max() <= 1.0
        track = load_audio(rec.audio_path)
        assert track.sample_rate_hz == cfg.sample_rate_hz

    def test_seed_determinism(self, tmp_path):
        cfg = SynthConfig(n_participants=2, pins_per_participant=2, seed=21)
        m1 = generate_corpus(cfg, tmp_path / "a")
        m2 = generate_corpus(cfg, tmp_path / "b")
        f1 = load_frames(m1.records[0].video_path)
        f2 = load_frames(m2.records[0].video_path)
        assert np.array_equal(f1, f2)

    def test_two_pad_models_for_independent_scenario(self, tmp_path):
        cfg = SynthConfig(
            n_participants=4, pins_per_participant=1, n_participants_second=2, seed=2
        )
        manifest = generate_corpus(cfg, tmp_path)
        freqs = {r.keypad_model: r.feedback_freq_hz for r in manifest.records}
        assert freqs == {"synth-A": 2900.0, "synth-B": 2500.0}

    def test_covering_styles_cycle(self, tmp_path):
        cfg = SynthConfig(n_participants=3, pins_per_participant=1, seed=2)
        manifest = generate_corpus(cfg, tmp_path)
        styles = {r.participant_id: r.covering_strategy for r in manifest.records}
        assert styles == {"p00": "side", "p01": "over", "p02": "top"}

    def test_blacklist_plan(self):
        cfg = SynthConfig(n_participants=5, n_participants_second=2, n_blacklisted=1)
        plan = participant_plan(cfg)
        flags = [p["blacklisted"] for p in plan]
        assert flags == [False, False, True, False, True]

    def test_every_participant_covers_all_digits(self, tiny_corpus):
        _, _, manifest = tiny_corpus
        by_participant = {}
        for rec in manifest.records:
            from pinsight.ingest import parse_keylog

            entries, _ = extract_pin_entries(parse_keylog(rec.keylog_path))
            digits = by_participant.setdefault(rec.participant_id, set())
            for e in entries:
                digits.update(e.digits)
        for participant, digits in by_participant.items():
            assert digits == set(range(10)), participant


class TestSessionKeylog:
    def test_malformed_count_exact(self):
        pins = [(1, 2, 3, 4, 5)] * 50
        events = generate_session_keylog(pins, rng_seed=0, malformed=5)
        entries, discarded = extract_pin_entries(events)
        assert discarded == 5
        assert len(entries) == 45


class TestToneTrack:
    def test_peak_amplitude_no_noise(self):
        track = make_tone_track([500], duration_ms=1000, freq_hz=2900.0, amplitude=0.5, snr_db=None)
        assert float(np.max(np.abs(track.samples))) == pytest.approx(0.5, abs=0.01)

    def test_silence_outside_bursts(self):
        track = make_tone_track([500], duration_ms=1500, freq_hz=2900.0, snr_db=None)
        tail = track.samples[int(1.0 * track.sample_rate_hz) :]
        assert np.allclose(tail, 0.0)
