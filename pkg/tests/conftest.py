"""Shared fixtures: the worked ranking example and a tiny synthetic corpus."""

from __future__ import annotations

import numpy as np
import pytest

from pinsight import synth
from pinsight.ingest import DatasetManifest, Recording

# Per-digit top-3 predictions of the worked 73633 example, one row per
# keypress. The remaining probability mass is spread uniformly over the
# unlisted digits.
FIG9_TOP3 = [
    {7: 0.999, 4: 0.000, 8: 0.000},
    {3: 0.979, 2: 0.012, 6: 0.005},
    {6: 0.819, 9: 0.170, 8: 0.009},
    {3: 0.809, 2: 0.092, 5: 0.069},
    {2: 0.329, 3: 0.315, 6: 0.185},
]


def fig9_distributions() -> list[np.ndarray]:
    dists = []
    for top in FIG9_TOP3:
        p = np.zeros(10)
        for digit, prob in top.items():
            p[digit] = prob
        rest = [d for d in range(10) if d not in top]
        p[rest] = (1.0 - p.sum()) / len(rest)
        dists.append(p)
    return dists


@pytest.fixture(scope="session")
def fig9_dists() -> list[np.ndarray]:
    return fig9_distributions()


def one_hot(digit: int) -> np.ndarray:
    p = np.zeros(10)
    p[digit] = 1.0
    return p


def random_dists(rng: np.random.Generator, n: int) -> list[np.ndarray]:
    out = []
    for _ in range(n):
        p = rng.random(10) + 1e-3
        out.append(p / p.sum())
    return out


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """3 participants x 2 PINs on disk, for ingest and pipeline smoke tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    cfg = synth.SynthConfig(n_participants=3, pins_per_participant=2, seed=5)
    manifest = synth.generate_corpus(cfg, root)
    return root, cfg, manifest


def paper_population_manifest() -> DatasetManifest:
    """A manifest shaped like the study population: 40 participants on the
    first pad (14 badly covering) plus 18 on the second (2 badly covering).
    Paths are placeholders; split logic never touches media."""
    records = []
    for i in range(40):
        records.append(
            Recording(
                id=f"a{i:02d}_000",
                participant_id=f"a{i:02d}",
                keypad_model="D-8201F",
                feedback_freq_hz=2900.0,
                blacklisted=i >= 26,
            )
        )
    for i in range(18):
        records.append(
            Recording(
                id=f"b{i:02d}_000",
                participant_id=f"b{i:02d}",
                keypad_model="D-8203B",
                feedback_freq_hz=2500.0,
                blacklisted=i >= 16,
            )
        )
    return DatasetManifest(records=records)
