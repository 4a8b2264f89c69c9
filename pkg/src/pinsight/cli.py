"""Command-line entry point wiring all pipeline stages.

Configuration layering is file < environment < flags: ``--config`` supplies
a JSON default map, ``PINSIGHT_*`` variables override it, explicit flags win.
Every run writes a ``run.json`` provenance record into its output directory.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import evaluation, ingest, model as model_mod, rank as rank_mod, synth, video
from .audio import DetectionConfig, detect_keypress_times, times_to_frames
from .errors import PinsightError

CONTEXT = dict(auto_envvar_prefix="PINSIGHT", help_option_names=["-h", "--help"])


def _write_run_record(out_dir: Path, subcommand: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "tool": "pinsight",
        "version": __version__,
        "subcommand": subcommand,
        "params": {k: v for k, v in sorted(params.items())},
    }
    (out_dir / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True))


def _load_config(ctx: click.Context, param, value):
    if value:
        ctx.default_map = json.loads(Path(value).read_text())
    return value


@click.group(context_settings=CONTEXT)
@click.option("--config", type=click.Path(exists=True), callback=_load_config,
              expose_value=False, is_eager=True, help="JSON file with default options.")
@click.version_option(__version__)
def main():
    """Reconstruct covered-hand keypad PINs from video+audio recordings."""


@main.command("synth-gen")
@click.option("--participants", default=6, show_default=True)
@click.option("--pins", default=20, show_default=True, help="PINs per participant.")
@click.option("--frame-size", default=64, show_default=True)
@click.option("--signal-strength", default=1.0, show_default=True)
@click.option("--second-pad", default=0, show_default=True,
              help="Participants assigned to the second keypad model.")
@click.option("--blacklisted", default=0, show_default=True,
              help="Badly-covering participants per pad.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth_gen(participants, pins, frame_size, signal_strength, second_pad, blacklisted, seed, out):
    """Generate a synthetic corpus in the ingest layout."""
    cfg = synth.SynthConfig(
        n_participants=participants,
        pins_per_participant=pins,
        frame_size=frame_size,
        signal_strength=signal_strength,
        n_participants_second=second_pad,
        n_blacklisted=blacklisted,
        seed=seed,
    )
    out = Path(out)
    manifest = synth.generate_corpus(cfg, out)
    manifest.save(out / "manifest.json")
    _write_run_record(out, "synth-gen", {
        "participants": participants, "pins": pins, "frame_size": frame_size,
        "signal_strength": signal_strength, "second_pad": second_pad,
        "blacklisted": blacklisted, "seed": seed,
    })
    click.echo(f"wrote {manifest.summary['recordings']} recordings to {out}")


@main.command("ingest")
@click.option("--root", required=True, type=click.Path(exists=True),
              envvar="PINSIGHT_DATA", help="Dataset root directory.")
@click.option("--metadata", type=click.Path(exists=True), help="Per-recording overrides (JSON).")
@click.option("--out", required=True, type=click.Path())
def ingest_cmd(root, metadata, out):
    """Scan a dataset root into a validated manifest."""
    manifest = ingest.build_manifest(root, metadata)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    manifest.save(out)
    for warning in manifest.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"manifest: {json.dumps(manifest.summary)}")


@main.command()
@click.option("--audio", "audio_path", required=True, type=click.Path(exists=True))
@click.option("--feedback-freq", default=2900.0, show_default=True)
@click.option("--fps", default=30.0, show_default=True)
@click.option("--offset", default=0, show_default=True, help="Media offset in ms.")
@click.option("--out", type=click.Path(), help="CSV output (t_ms per line); stdout otherwise.")
def detect(audio_path, feedback_freq, fps, offset, out):
    """Detect keypress timestamps from the feedback-tone audio track."""
    track = ingest.load_audio(audio_path)
    times = detect_keypress_times(track, DetectionConfig(center_freq_hz=feedback_freq))
    frames = times_to_frames(times, fps, offset)
    lines = "\n".join(str(t) for t in times)
    if out:
        Path(out).write_text("t_ms\n" + lines + "\n")
        click.echo(f"{len(times)} keypresses -> {out}")
    else:
        click.echo(lines)
    click.echo(f"frames: {frames}", err=True)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--sample-size", default=64, show_default=True)
@click.option("--source", type=click.Choice(["keylog", "audio"]), default="keylog",
              show_default=True, help="Timestamp source for segmentation.")
@click.option("--out", required=True, type=click.Path())
def segment(manifest_path, sample_size, source, out):
    """Segment every recording into labeled 11-frame keypress samples."""
    manifest = ingest.DatasetManifest.load(manifest_path)
    cfg = evaluation.ExperimentConfig(sample_size=sample_size, timestamps=source)
    out_dir = Path(out)
    total = 0
    for rec in manifest.records:
        entries = evaluation.recording_entries(rec, cfg, attack_set=(source == "audio"))
        samples = [s for e in entries for s in e.samples]
        if samples:
            video.save_samples(out_dir, rec.id, samples)
            total += len(samples)
    _write_run_record(out_dir, "segment", {
        "manifest": str(manifest_path), "sample_size": sample_size, "source": source,
    })
    click.echo(f"wrote {total} samples to {out_dir}")


@main.command()
@click.option("--samples", "samples_dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--scenario", type=click.Choice(list(evaluation.SCENARIOS)), default="single",
              show_default=True)
@click.option("--epochs", default=8, show_default=True)
@click.option("--learning-rate", default=0.025, show_default=True)
@click.option("--model-size", type=click.Choice(["small", "paper"]), default="small",
              show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train(samples_dir, manifest_path, scenario, epochs, learning_rate, model_size, seed, out):
    """Train the digit classifier on segmented samples."""
    manifest = ingest.DatasetManifest.load(manifest_path)
    split = evaluation.make_split(manifest, scenario, seed=seed)
    by_rec = {rec.id: rec.participant_id for rec in manifest.records}
    samples = video.load_all_samples(samples_dir)
    train_samples = [s for s in samples if by_rec[s.recording_id] in split.train]
    val_samples = [s for s in samples if by_rec[s.recording_id] in split.val]
    size = train_samples[0].size if train_samples else 64
    cfg = model_mod.ModelConfig.small(size) if model_size == "small" else model_mod.ModelConfig(input_size=size)
    net = model_mod.build_model(cfg, seed=seed)
    tcfg = model_mod.TrainConfig(epochs=epochs, learning_rate=learning_rate, seed=seed)
    result = model_mod.train(net, train_samples, val_samples, tcfg)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_mod.save_model(net, out_dir / "model.pt", metadata={"seed": seed, "scenario": scenario})
    model_mod.history_to_csv(result.history, out_dir / "history.csv")
    _write_run_record(out_dir, "train", {
        "samples": str(samples_dir), "scenario": scenario, "epochs": epochs,
        "learning_rate": learning_rate, "model_size": model_size, "seed": seed,
    })
    click.echo(f"best val acc {result.best_val_acc:.3f} at epoch {result.best_epoch}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--samples", "samples_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def predict(model_path, samples_dir, out):
    """Per-keypress digit distributions for segmented samples."""
    net, _ = model_mod.load_model(model_path)
    samples = video.load_all_samples(samples_dir)
    dists = model_mod.predict_batch(net, samples)
    payload = [
        {
            "recording_id": s.recording_id,
            "position_in_pin": s.position_in_pin,
            "label": s.label,
            "p": [float(x) for x in dist],
        }
        for s, dist in zip(samples, dists)
    ]
    Path(out).write_text(json.dumps(payload, indent=2))
    click.echo(f"wrote {len(payload)} distributions to {out}")


@main.command()
@click.option("--dists", "dists_path", required=True, type=click.Path(exists=True),
              help="JSON array of N 10-vectors.")
@click.option("--k", default=3, show_default=True)
@click.option("--strategy", type=click.Choice(["product", "swap"]), default="product",
              show_default=True)
@click.option("--out", type=click.Path(), help="JSON output; stdout list otherwise.")
def rank(dists_path, k, strategy, out):
    """Rank candidate PINs from per-digit distributions."""
    dists = [np.asarray(d, dtype=float) for d in json.loads(Path(dists_path).read_text())]
    if strategy == "product":
        candidates = rank_mod.rank_pins(dists, k)
        rows = [{"pin": c.pin, "prob": c.prob, "rank": c.rank} for c in candidates]
    else:
        guesses = rank_mod.swap_heuristic_guesses(dists, attempts=k)
        rows = [
            {
                "pin": "".join(str(d) for d in g),
                "prob": rank_mod.pin_probability(dists, g),
                "rank": i + 1,
            }
            for i, g in enumerate(guesses)
        ]
    for row in rows:
        click.echo(f"{row['rank']}. {row['pin']}  p={row['prob']:.4f}")
    if out:
        Path(out).write_text(json.dumps(rows, indent=2))


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--scenario", type=click.Choice(list(evaluation.SCENARIOS)), default="single",
              show_default=True)
@click.option("--strategy", type=click.Choice(["product", "swap"]), default="product",
              show_default=True)
@click.option("--shield", type=click.Choice(["0", "25", "50", "75", "100"]), default="0",
              show_default=True)
@click.option("--resolution", type=click.Choice(["250", "125", "64"]), default=None)
@click.option("--frame-error-k", type=click.Choice(["0", "3", "5", "10", "15", "20"]),
              default="0", show_default=True)
@click.option("--camera", type=click.Choice(["left", "center", "right"]), default=None)
@click.option("--covering", type=click.Choice(["side", "over", "top", "all"]), default="all",
              show_default=True)
@click.option("--blacklist-in-train", type=bool, default=True, show_default=True)
@click.option("--sample-size", default=64, show_default=True)
@click.option("--model-size", type=click.Choice(["small", "paper"]), default="small",
              show_default=True)
@click.option("--epochs", default=8, show_default=True)
@click.option("--learning-rate", default=0.025, show_default=True)
@click.option("--momentum", default=0.9, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True, help="Reserved worker bound.")
@click.option("--out", required=True, type=click.Path())
def evaluate(manifest_path, scenario, strategy, shield, resolution, frame_error_k, camera,
             covering, blacklist_in_train, sample_size, model_size, epochs, learning_rate,
             momentum, seed, jobs, out):
    """Full pipeline: split, train, attack, and report one knob setting."""
    manifest = ingest.DatasetManifest.load(manifest_path)
    final = int(resolution) if resolution and int(resolution) < sample_size else sample_size
    model_cfg = (
        model_mod.ModelConfig.small(final)
        if model_size == "small"
        else model_mod.ModelConfig(input_size=final)
    )
    cfg = evaluation.ExperimentConfig(
        scenario=scenario,
        strategy=strategy,
        sample_size=sample_size,
        resolution=int(resolution) if resolution else None,
        shield_pct=int(shield),
        frame_error_k=int(frame_error_k),
        camera=camera,
        covering=None if covering == "all" else covering,
        blacklist_in_train=blacklist_in_train,
        model=model_cfg,
        train=model_mod.TrainConfig(
            epochs=epochs, learning_rate=learning_rate, momentum=momentum, seed=seed
        ),
        seed=seed,
    )
    split = evaluation.make_split(
        manifest, scenario, cfg.ratios, seed=seed, blacklist_in_train=blacklist_in_train
    )
    out_dir = Path(out)
    outcome = evaluation.run_experiment(manifest, split, cfg, out_dir=out_dir)
    model_mod.save_model(outcome.model, out_dir / "model.pt", metadata={"seed": seed})
    if outcome.history:
        model_mod.history_to_csv(outcome.history, out_dir / "history.csv")
    _write_run_record(out_dir, "evaluate", {
        "manifest": str(manifest_path), "scenario": scenario, "strategy": strategy,
        "shield": int(shield), "resolution": resolution, "frame_error_k": int(frame_error_k),
        "camera": camera, "covering": covering, "blacklist_in_train": blacklist_in_train,
        "sample_size": sample_size, "model_size": model_size, "epochs": epochs,
        "learning_rate": learning_rate, "momentum": momentum, "seed": seed, "jobs": jobs,
    })
    report = outcome.report
    click.echo(f"key top-1/2/3: " + "/".join(f"{report.key_top_n[n]:.3f}" for n in (1, 2, 3)))
    click.echo(f"pin top-1/2/3: " + "/".join(f"{report.pin_top_n_5[n]:.3f}" for n in (1, 2, 3)))


@main.command()
@click.option("--eval", "report_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def report(report_path, out):
    """Render plots from a saved evaluation report."""
    rep = evaluation.EvalReport.load(report_path)
    written = evaluation.render_report(rep, out)
    _write_run_record(Path(out), "report", {"eval": str(report_path)})
    for path in written:
        click.echo(str(path))


def cli_main(argv=None) -> int:
    """Entry point with categorized error handling (1 = stage error, 2 = usage)."""
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        click.echo(main.get_help(click.Context(main)), err=True)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 1
    except PinsightError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
