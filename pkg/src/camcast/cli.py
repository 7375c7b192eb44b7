"""Command-line entry points for the whole toolkit.

Subcommands: build-dataset, fit-normalizer, train, nowcast, analog,
eval-sample, eval-serve, eval-report, selftest. Operational failures exit 1
with a message; usage errors exit 2.
"""

from __future__ import annotations

import json
import sys
from datetime import timedelta
from pathlib import Path

import click
import numpy as np

from . import analogs as analog_mod
from . import archive as archive_mod
from . import descriptors as desc_mod
from . import evaluation as eval_mod
from . import synthesis as synth_mod
from . import training as train_mod
from .models import DiscriminatorConfig, GeneratorConfig


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _parse_years(text: str) -> set[int]:
    return {int(part) for part in text.split(",") if part.strip()}


def _parse_leads(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


@click.group()
def main() -> None:
    """Photographic weather-forecast visualization toolkit."""


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

@main.command("build-dataset")
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--exclusions", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--train-years", default="2019", show_default=True)
@click.option("--test-years", default="2020", show_default=True)
@click.option("--max-lead", default=archive_mod.MAX_LEAD_MINUTES, show_default=True)
@click.option("--step", default=archive_mod.GRID_MINUTES, show_default=True)
def build_dataset(images_dir, site_id, nwp_csv, out_dir, exclusions,
                  train_years, test_years, max_lead, step) -> None:
    """Index the archive, enumerate training pairs, write split manifests."""
    try:
        excluded = archive_mod.load_exclusions(exclusions) if exclusions else None
        index = archive_mod.index_archive(images_dir, site_id, excluded)
        records = desc_mod.read_nwp_csv(nwp_csv, site_id=site_id)
        series = desc_mod.DescriptorSeries(records)
        stats = archive_mod.EnumerationStats()
        refs = list(
            archive_mod.enumerate_tuples(index.frames, series, max_lead, step, stats)
        )
        train, test = archive_mod.split_by_year(
            refs, _parse_years(train_years), _parse_years(test_years)
        )
    except (archive_mod.ArchiveError, desc_mod.IngestionError, ValueError) as err:
        raise _fail(str(err))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    archive_mod.write_manifest(train, out / "train.csv")
    archive_mod.write_manifest(test, out / "test.csv")
    report = {
        "site_id": site_id,
        "frames": len(index.frames),
        "gaps": len(index.gaps),
        "rejected_offgrid": len(index.rejected_offgrid),
        "excluded": len(index.excluded),
        "pairs_total": len(refs),
        "pairs_train": len(train),
        "pairs_test": len(test),
        "skipped_no_descriptor": stats.skipped_no_descriptor,
    }
    (out / "dataset_report.json").write_text(json.dumps(report, indent=2))
    click.echo(
        f"{len(index.frames)} frames, {len(refs)} pairs "
        f"({len(train)} train / {len(test)} test); report in {out / 'dataset_report.json'}"
    )


@main.command("fit-normalizer")
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--dataset-id", default=None, help="Identifier recorded in the normalizer.")
def fit_normalizer_cmd(nwp_csv, site_id, out_path, dataset_id) -> None:
    """Fit descriptor standardization moments on hourly NWP records."""
    try:
        records = desc_mod.read_nwp_csv(nwp_csv, site_id=site_id)
        if len(records) < 2:
            raise _fail(f"need at least 2 records for site {site_id!r}, found {len(records)}")
        built = [desc_mod.build_descriptor(r, r.timestamp) for r in records]
        normalizer = desc_mod.fit_normalizer(built, dataset_id or f"{site_id}-nwp")
    except desc_mod.IngestionError as err:
        raise _fail(str(err))
    normalizer.save(out_path)
    click.echo(f"normalizer '{normalizer.fitted_on}' fitted on {len(built)} records -> {out_path}")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@main.command("train")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--normalizer", "normalizer_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "run_dir", required=True, type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice(["adversarial", "l1-baseline"]), default="adversarial",
              show_default=True)
@click.option("--steps", default=1000, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lr-g", default=1e-4, show_default=True)
@click.option("--lr-d", default=5e-5, show_default=True)
@click.option("--stages", default=5, show_default=True)
@click.option("--base-channels", default=64, show_default=True)
@click.option("--height", default=archive_mod.TRAIN_HEIGHT, show_default=True)
@click.option("--width", default=archive_mod.TRAIN_WIDTH, show_default=True)
@click.option("--checkpoint-interval", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Training config file; overrides the model/optimizer flags.")
def train_cmd(manifest, images_dir, site_id, nwp_csv, normalizer_path, run_dir, mode,
              steps, batch_size, seed, lr_g, lr_d, stages, base_channels,
              height, width, checkpoint_interval, config_path) -> None:
    """Train the generator (adversarially or as the regression baseline)."""
    try:
        if config_path:
            gen_config, disc_config, settings = train_mod.read_training_config(config_path)
            height, width = gen_config.input_h, gen_config.input_w
        else:
            gen_config = GeneratorConfig(
                stages=stages, base_channels=base_channels, input_h=height, input_w=width
            )
            disc_config = DiscriminatorConfig(
                stages=stages, base_channels=base_channels, input_h=height, input_w=width
            )
            settings = train_mod.OptimizerSettings(
                lr_g=lr_g, lr_d=lr_d, batch_size=batch_size, steps=steps,
                checkpoint_interval=checkpoint_interval,
            )
        normalizer = desc_mod.DescriptorNormalizer.load(normalizer_path)
        index = archive_mod.index_archive(images_dir, site_id)
        series = desc_mod.DescriptorSeries(desc_mod.read_nwp_csv(nwp_csv, site_id=site_id))
        rows = archive_mod.read_manifest(manifest)
        refs = archive_mod.resolve_manifest(rows, index, series)
        if not refs:
            raise _fail("manifest resolved to an empty dataset")
        dataset = [
            archive_mod.load_tuple(ref, height, width, normalizer) for ref in refs
        ]
        state = train_mod.fit(
            gen_config, disc_config, settings, dataset,
            mode=mode.replace("-", "_"),
            run_dir=run_dir, seed=seed, normalizer_id=normalizer.fitted_on,
        )
    except train_mod.TrainingDivergedError as err:
        raise _fail(f"training diverged: {err}")
    except (archive_mod.ArchiveError, desc_mod.IngestionError, ValueError) as err:
        raise _fail(str(err))
    click.echo(f"trained {state.step} steps; artifacts in {run_dir}")


# ---------------------------------------------------------------------------
# Nowcasting
# ---------------------------------------------------------------------------

@main.command("nowcast")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--t0", "t0_text", required=True, help="Present time (ISO-8601 UTC).")
@click.option("--normalizer", "normalizer_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--leads", default="0,60,120,180,240,300,360", show_default=True,
              help="Lead minutes, comma separated.")
@click.option("--sigma", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--fresh-latent-per-lead", is_flag=True, default=False,
              help="Draw a new latent per lead instead of sharing one.")
@click.option("--aspect", default=2.0, show_default=True,
              help="Original width/height ratio for export.")
def nowcast_cmd(checkpoint, image_path, nwp_csv, site_id, t0_text, normalizer_path,
                out_dir, leads, sigma, seed, fresh_latent_per_lead, aspect) -> None:
    """Synthesize a nowcast sequence from a present image and NWP descriptors."""
    try:
        bundle = synth_mod.load_generator_bundle(checkpoint)
        normalizer = desc_mod.DescriptorNormalizer.load(normalizer_path)
        t0 = desc_mod.parse_utc(t0_text)
        series = desc_mod.DescriptorSeries(desc_mod.read_nwp_csv(nwp_csv, site_id=site_id))
        from PIL import Image

        with Image.open(image_path) as img:
            present = archive_mod.preprocess_image(
                np.asarray(img.convert("RGB")), bundle.config.input_h, bundle.config.input_w
            )
        lead_list = _parse_leads(leads)
        request = synth_mod.NowcastRequest(
            present_image=present,
            present_descriptor=series.at(t0),
            forecast=[series.at(t0 + timedelta(minutes=lead)) for lead in lead_list],
            sigma=sigma,
            seed=seed,
            share_latent=not fresh_latent_per_lead,
            site_id=site_id,
        )
        sequence = synth_mod.synthesize_sequence(request, bundle, normalizer)
        written = synth_mod.export_strip(sequence, out_dir, aspect_ratio=aspect)
    except (desc_mod.CoverageError, desc_mod.NormalizerMismatchError,
            desc_mod.IngestionError, archive_mod.ArchiveError, ValueError) as err:
        raise _fail(str(err))
    if sequence.lead0_mae is not None:
        click.echo(f"lead-0 reproduction MAE: {sequence.lead0_mae:.4f}")
    click.echo(f"wrote {len(written)} file(s) to {out_dir}")


# ---------------------------------------------------------------------------
# Analog baselines
# ---------------------------------------------------------------------------

@main.command("analog")
@click.option("--mode", type=click.Choice(["individual", "sequence"]), required=True)
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--normalizer", "normalizer_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--query-nwp", "query_csv", required=True, type=click.Path(exists=True, dir_okay=False),
              help="NWP CSV providing the forecast descriptors to match.")
@click.option("--t0", "t0_text", required=True, help="Forecast start time (ISO-8601 UTC).")
@click.option("--leads", default="0,60,120,180,240,300,360", show_default=True)
@click.option("--cadence", default=60, show_default=True,
              help="Sequence cadence in minutes (sequence mode).")
def analog_cmd(mode, images_dir, site_id, nwp_csv, normalizer_path, query_csv,
               t0_text, leads, cadence) -> None:
    """Retrieve nearest archived frames for a forecast descriptor series."""
    try:
        normalizer = desc_mod.DescriptorNormalizer.load(normalizer_path)
        index = archive_mod.index_archive(images_dir, site_id)
        series = desc_mod.DescriptorSeries(desc_mod.read_nwp_csv(nwp_csv, site_id=site_id))
        pairs = []
        for frame in index.frames:
            try:
                descriptor = normalizer.normalize(series.at(frame.timestamp))
            except desc_mod.CoverageError:
                continue
            pairs.append((frame, descriptor))
        if not pairs:
            raise _fail("no archive frames have descriptor coverage")
        table = analog_mod.build_archive(pairs, normalizer.fitted_on)
        t0 = desc_mod.parse_utc(t0_text)
        query_series = desc_mod.DescriptorSeries(desc_mod.read_nwp_csv(query_csv, site_id=site_id))
        forecast = [
            normalizer.normalize(query_series.at(t0 + timedelta(minutes=lead)))
            for lead in _parse_leads(leads)
        ]
        if mode == "individual":
            for descriptor, lead in zip(forecast, _parse_leads(leads)):
                frame = analog_mod.retrieve_individual(table, descriptor)
                click.echo(f"+{lead:3d} min -> {frame.path}")
        else:
            frames = analog_mod.retrieve_sequence(table, forecast, cadence)
            for lead, frame in zip(_parse_leads(leads), frames):
                click.echo(f"+{lead:3d} min -> {frame.path}")
    except analog_mod.NoGaplessRunError as err:
        raise _fail(str(err))
    except (desc_mod.CoverageError, desc_mod.NormalizerMismatchError,
            desc_mod.IngestionError, archive_mod.ArchiveError, ValueError) as err:
        raise _fail(str(err))


# ---------------------------------------------------------------------------
# Evaluation workflow
# ---------------------------------------------------------------------------

@main.command("eval-sample")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Test-split dataset manifest.")
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--site", "site_id", required=True)
@click.option("--nwp", "nwp_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--normalizer", "normalizer_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-pairs", default=75, show_default=True)
@click.option("--sigma", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--examiners", default="", help="Comma-separated examiner ids to assign.")
@click.option("--per-examiner", default=30, show_default=True)
@click.option("--aspect", default=2.0, show_default=True)
def eval_sample_cmd(manifest, images_dir, site_id, nwp_csv, normalizer_path, checkpoint,
                    out_dir, n_pairs, sigma, seed, examiners, per_examiner, aspect) -> None:
    """Sample the blinded realism study set and materialize it for serving."""
    try:
        bundle = synth_mod.load_generator_bundle(checkpoint)
        normalizer = desc_mod.DescriptorNormalizer.load(normalizer_path)
        if normalizer.fitted_on != bundle.normalizer_id:
            raise _fail(
                f"normalizer {normalizer.fitted_on!r} does not match "
                f"checkpoint's {bundle.normalizer_id!r}"
            )
        index = archive_mod.index_archive(images_dir, site_id)
        series = desc_mod.DescriptorSeries(desc_mod.read_nwp_csv(nwp_csv, site_id=site_id))
        rows = archive_mod.read_manifest(manifest)
        refs = archive_mod.resolve_manifest(rows, index, series)
        candidates = []
        for ref in refs:
            tup = archive_mod.load_tuple(
                ref, bundle.config.input_h, bundle.config.input_w
            )
            candidates.append(
                eval_mod.EvalCandidate(
                    site_id=site_id,
                    t0=ref.present.timestamp,
                    lead_minutes=ref.lead_minutes,
                    present_image=tup.present_image,
                    present_descriptor=tup.present_descriptor,
                    future_image=tup.future_image,
                    future_descriptor=tup.future_descriptor,
                )
            )

        def generate(candidate: eval_mod.EvalCandidate, rng: np.random.Generator) -> np.ndarray:
            request = synth_mod.NowcastRequest(
                present_image=candidate.present_image,
                present_descriptor=candidate.present_descriptor,
                forecast=[candidate.future_descriptor],
                sigma=sigma,
                seed=int(rng.integers(2**31)),
                site_id=site_id,
            )
            sequence = synth_mod.synthesize_sequence(request, bundle, normalizer)
            return sequence.frames[0][1]

        items = eval_mod.sample_realism_set(candidates, generate, n_pairs=n_pairs, seed=seed)
        out = Path(out_dir)
        eval_mod.write_items(items, out, aspect_ratio=aspect)
        examiner_ids = [e.strip() for e in examiners.split(",") if e.strip()]
        if examiner_ids:
            assignment = eval_mod.assign_items(items, examiner_ids, per_examiner, seed=seed)
        else:
            assignment = {}
        eval_mod.write_assignments(assignment, out / eval_mod.ASSIGNMENTS_FILE_NAME)
    except eval_mod.EvaluationError as err:
        raise _fail(str(err))
    except (desc_mod.CoverageError, desc_mod.NormalizerMismatchError,
            desc_mod.IngestionError, archive_mod.ArchiveError, ValueError) as err:
        raise _fail(str(err))
    click.echo(
        f"{len(items)} items ({n_pairs} pairs) written to {out_dir}; "
        f"{len(assignment)} examiner(s) assigned"
    )


@main.command("eval-serve")
@click.option("--items", "items_manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--judgments", "judgments_path", required=True, type=click.Path(dir_okay=False))
@click.option("--static", "static_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def eval_serve_cmd(items_manifest, judgments_path, static_dir, host, port) -> None:
    """Serve the labeling API (and UI assets, if built) for examiners."""
    from .service import ServiceConfig, run_service

    config = ServiceConfig(
        items_manifest=Path(items_manifest),
        judgments_path=Path(judgments_path),
        static_dir=Path(static_dir) if static_dir else None,
    )
    try:
        config.validate()
    except FileNotFoundError as err:
        raise _fail(str(err))
    click.echo(f"serving study {items_manifest} on http://{host}:{port}")
    run_service(config, host=host, port=port)


@main.command("eval-report")
@click.option("--judgments", "judgments_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--checklists", "checklists_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--title", default="camcast evaluation")
def eval_report_cmd(judgments_path, truth_path, checklists_path, title) -> None:
    """Render the realism confusion matrix and/or the condition-audit table."""
    if not judgments_path and not checklists_path:
        raise _fail("nothing to report: pass --judgments/--truth and/or --checklists")
    try:
        if judgments_path:
            if not truth_path:
                raise _fail("--judgments requires --truth (sealed truth file)")
            matrix = eval_mod.aggregate_confusion(
                eval_mod.read_judgments(judgments_path), eval_mod.read_truth(truth_path)
            )
            click.echo(eval_mod.render_confusion_text(matrix, title=f"{title}: realism study"))
        if checklists_path:
            summary = eval_mod.score_condition_audit(
                eval_mod.read_checklists_csv(checklists_path)
            )
            click.echo(eval_mod.render_audit_text(summary, title=f"{title}: condition audit"))
    except eval_mod.EvaluationError as err:
        raise _fail(str(err))


@main.command("selftest")
def selftest_cmd() -> None:
    """Run the built-in invariant checks."""
    from .selftest import run_selftest

    results = run_selftest()
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        click.echo(f"[{status}] {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        raise _fail(f"{failed} of {len(results)} checks failed")
    click.echo(f"all {len(results)} checks passed")


if __name__ == "__main__":
    main()
