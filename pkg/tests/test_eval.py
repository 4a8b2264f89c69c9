import numpy as np
import pytest

from pinsight.errors import (
    EmptySubset,
    InsufficientParticipants,
    LengthMismatch,
    MissingClass,
)
from pinsight.evaluation import (
    EvalReport,
    _filter_by_camera,
    confusion_and_heatmaps,
    filter_by_covering_strategy,
    key_top_n_accuracy,
    keypad_grid,
    make_split,
    pin_top_n_accuracy,
    render_report,
)
from pinsight.rank import rank_pins

from conftest import one_hot, paper_population_manifest, random_dists


class TestMakeSplit:
    def test_single_scenario_reproduces_study_counts(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "single", seed=0)
        assert (len(split.train), len(split.val), len(split.test)) == (32, 4, 4)
        assert all(p.startswith("a") for p in split.train | split.val | split.test)

    def test_independent_scenario_reproduces_study_counts(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "independent", seed=0)
        assert (len(split.train), len(split.val), len(split.test)) == (35, 5, 16)
        assert all(p.startswith("a") for p in split.train | split.val)
        assert all(p.startswith("b") for p in split.test)

    def test_mixed_scenario_reproduces_study_counts(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "mixed", seed=0)
        assert (len(split.train), len(split.val), len(split.test)) == (46, 6, 6)

    def test_blacklisted_kept_out_of_val_and_test(self):
        manifest = paper_population_manifest()
        for scenario in ("single", "independent", "mixed"):
            split = make_split(manifest, scenario, seed=3)
            assert not split.blacklist & split.val
            assert not split.blacklist & split.test

    def test_blacklisted_in_train_by_default(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "single", seed=0)
        assert {f"a{i:02d}" for i in range(26, 40)} <= split.train

    def test_blacklist_excluded_entirely_when_flagged(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "single", seed=0, blacklist_in_train=False)
        assert len(split.train) == 32 - 14
        assert not split.blacklist & split.train

    def test_deterministic_for_seed(self):
        manifest = paper_population_manifest()
        a = make_split(manifest, "mixed", seed=11)
        b = make_split(manifest, "mixed", seed=11)
        c = make_split(manifest, "mixed", seed=12)
        assert a == b
        assert a != c

    def test_pairwise_disjoint(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "mixed", seed=5)
        assert not split.train & split.val
        assert not split.train & split.test
        assert not split.val & split.test

    def test_manual_blacklist_merged(self):
        manifest = paper_population_manifest()
        split = make_split(manifest, "single", blacklist={"a00"}, seed=0)
        assert "a00" in split.blacklist
        assert "a00" in split.train

    def test_too_few_participants(self):
        manifest = paper_population_manifest()
        manifest.records = manifest.records[:3]
        with pytest.raises(InsufficientParticipants):
            make_split(manifest, "single", seed=0)

    def test_independent_needs_second_pad(self):
        manifest = paper_population_manifest()
        manifest.records = [r for r in manifest.records if r.keypad_model == "D-8201F"]
        with pytest.raises(InsufficientParticipants):
            make_split(manifest, "independent", seed=0)


class TestKeyTopN:
    def test_one_hot_correct_for_all_n(self):
        preds = [one_hot(d) for d in range(10)]
        labels = list(range(10))
        for n in range(1, 11):
            assert key_top_n_accuracy(preds, labels, n) == 1.0

    def test_uniform_preds_with_tie_break(self):
        # Uniform rows tie-break to digits 0..n-1, so balanced labels score n/10.
        preds = [np.full(10, 0.1) for _ in range(10)]
        labels = list(range(10))
        assert key_top_n_accuracy(preds, labels, 3) == pytest.approx(0.3)

    def test_truth_always_fourth(self):
        preds = []
        labels = []
        for d in range(10):
            p = np.zeros(10)
            others = [x for x in range(10) if x != d][:3]
            for o in others:
                p[o] = 0.3
            p[d] = 0.1
            preds.append(p)
            labels.append(d)
        assert key_top_n_accuracy(preds, labels, 3) == 0.0
        assert key_top_n_accuracy(preds, labels, 4) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            key_top_n_accuracy([one_hot(1)], [1, 2], 1)


class TestPinTopN:
    def test_one_hot_first_attempt(self):
        dists = [[one_hot(d) for d in (1, 2, 3, 4, 5)]]
        assert pin_top_n_accuracy(dists, [(1, 2, 3, 4, 5)], 1) == 1.0

    def test_worked_example_found_at_second_attempt(self, fig9_dists):
        truth = [(7, 3, 6, 3, 3)]
        assert pin_top_n_accuracy([fig9_dists], truth, 1, "product") == 0.0
        assert pin_top_n_accuracy([fig9_dists], truth, 2, "product") == 1.0
        assert pin_top_n_accuracy([fig9_dists], truth, 2, "swap") == 1.0

    def test_matches_brute_force_membership(self):
        rng = np.random.default_rng(17)
        per_pin = [random_dists(rng, 4) for _ in range(30)]
        pins = [tuple(rng.integers(0, 10, 4)) for _ in range(30)]
        for n in (1, 3, 10):
            got = pin_top_n_accuracy(per_pin, pins, n, "product")
            hits = 0
            for dists, pin in zip(per_pin, pins):
                top = [c.digits for c in rank_pins(dists, n, method="exhaustive")]
                hits += int(tuple(pin) in top)
            assert got == pytest.approx(hits / 30)

    def test_unknown_strategy(self, fig9_dists):
        with pytest.raises(ValueError):
            pin_top_n_accuracy([fig9_dists], [(1, 2, 3, 4, 5)], 1, "magic")


class TestConfusionAndHeatmaps:
    def test_perfect_predictions_identity(self):
        preds = [one_hot(d) for d in range(10)]
        confusion, heatmaps = confusion_and_heatmaps(preds, list(range(10)))
        assert np.array_equal(confusion, np.eye(10))
        assert np.array_equal(heatmaps, np.eye(10))

    def test_uniform_predictions(self):
        preds = [np.full(10, 0.1) for _ in range(20)]
        labels = list(range(10)) * 2
        confusion, heatmaps = confusion_and_heatmaps(preds, labels)
        assert np.allclose(heatmaps, 0.1)
        # Argmax ties resolve to the lowest digit.
        assert np.array_equal(confusion[:, 0], np.ones(10))

    def test_rows_stochastic(self):
        rng = np.random.default_rng(2)
        preds = random_dists(rng, 60)
        labels = (list(range(10)) * 6)[:60]
        confusion, heatmaps = confusion_and_heatmaps(preds, labels)
        assert np.allclose(confusion.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(heatmaps.sum(axis=1), 1.0, atol=1e-6)

    def test_missing_class_rejected(self):
        preds = [one_hot(1)] * 5
        with pytest.raises(MissingClass):
            confusion_and_heatmaps(preds, [1] * 5)

    def test_keypad_grid_layout(self):
        grid = keypad_grid(np.arange(10) / 10.0)
        assert grid.shape == (4, 3)
        assert np.isnan(grid[3, 0]) and np.isnan(grid[3, 2])
        assert grid[0, 0] == 0.1 and grid[0, 2] == 0.3  # 1..3 row
        assert grid[2, 1] == 0.8  # digit 8
        assert grid[3, 1] == 0.0  # digit 0 centered on the last row


class TestFilters:
    def test_covering_filter_counts(self, tiny_corpus):
        _, _, manifest = tiny_corpus
        side = filter_by_covering_strategy(manifest, "side")
        over = filter_by_covering_strategy(manifest, "over")
        top = filter_by_covering_strategy(manifest, "top")
        total = len(side.records) + len(over.records) + len(top.records)
        assert total == len(manifest.records)
        assert {r.covering_strategy for r in side.records} == {"side"}

    def test_empty_subset(self, tiny_corpus):
        _, _, manifest = tiny_corpus
        original = [r.covering_strategy for r in manifest.records]
        try:
            for r in manifest.records:
                r.covering_strategy = "side"
            with pytest.raises(EmptySubset):
                filter_by_covering_strategy(manifest, "top")
        finally:
            for r, cov in zip(manifest.records, original):
                r.covering_strategy = cov

    def test_camera_filter(self, tiny_corpus):
        _, _, manifest = tiny_corpus
        center = _filter_by_camera(manifest, "center")
        assert len(center.records) == len(manifest.records)
        with pytest.raises(EmptySubset):
            _filter_by_camera(manifest, "left")


def _dummy_report(key1=0.6):
    confusion = np.full((10, 10), (1 - key1) / 9)
    np.fill_diagonal(confusion, key1)
    heatmaps = confusion.copy()
    return EvalReport(
        scenario="single",
        strategy="product",
        key_top_n={1: key1, 2: min(1.0, key1 + 0.1), 3: min(1.0, key1 + 0.15)},
        pin_top_n_5={1: 0.2, 2: 0.25, 3: 0.3},
        pin_top_n_4={1: 0.3, 2: 0.35, 3: 0.4},
        confusion=confusion.tolist(),
        heatmaps=heatmaps.tolist(),
        label_counts=[10] * 10,
        n_train=400,
        n_val=100,
        n_test=100,
        n_entries=20,
        metadata={"shield_pct": 0},
    )


class TestEvalReport:
    def test_validate_passes_consistent_report(self):
        _dummy_report().validate()

    def test_validate_rejects_nonmonotone_topn(self):
        report = _dummy_report()
        report.key_top_n = {1: 0.6, 2: 0.5, 3: 0.7}
        with pytest.raises(ValueError):
            report.validate()

    def test_validate_rejects_bad_confusion_rows(self):
        report = _dummy_report()
        report.confusion[0][0] += 0.5
        with pytest.raises(ValueError):
            report.validate()

    def test_validate_ties_top1_to_diagonal(self):
        report = _dummy_report()
        report.key_top_n = {1: 0.9, 2: 0.95, 3: 1.0}  # diagonal says 0.6
        with pytest.raises(ValueError):
            report.validate()

    def test_json_roundtrip(self, tmp_path):
        report = _dummy_report()
        path = tmp_path / "report.json"
        report.save(path)
        assert EvalReport.load(path) == report

    def test_render_writes_plots(self, tmp_path):
        written = render_report(_dummy_report(), tmp_path)
        names = {p.name for p in written}
        assert names == {"accuracy.png", "confusion.png", "heatmaps.png"}
        assert all(p.stat().st_size > 0 for p in written)
