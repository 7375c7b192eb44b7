"""Adversarial and regression training with two-timescale ADAM.

Each adversarial step ascends the critic's three-term objective, then
descends the generator's fooling-plus-diversity objective, advancing every
layer's spectral-norm power iteration once per network update. The
regression mode trains the generator alone against the mean-absolute-error
objective and never touches the critic.

All randomness (batch sampling, latent draws, cut-mix masks) flows through
one torch.Generator owned by the training state, so a checkpoint restores
bit-identical continuation on the same hardware arithmetic.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .archive import SampleTuple
from .descriptors import format_utc
from .losses import (
    compose_cutmix,
    discriminator_loss,
    generator_loss,
    l1_regression_loss,
    make_cutmix_mask,
)
from .models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    LatentSpec,
    assemble_condition,
    init_weights,
    power_iterate,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "camcast-checkpoint"
CHECKPOINT_VERSION = 1

ADVERSARIAL_COMPONENTS = ("real_patch", "fake_patch", "cutmix_pixel", "fooling", "diversity")
MODE_ADVERSARIAL = "adversarial"
MODE_L1_BASELINE = "l1_baseline"


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; carries a manifest of the offending batch."""

    def __init__(self, message: str, batch_manifest: list[dict]):
        super().__init__(message)
        self.batch_manifest = batch_manifest


@dataclass(kw_only=True)
class OptimizerSettings:
    """ADAM settings and step schedule for both networks."""

    lr_g: float = 1e-4
    lr_d: float = 5e-5
    beta1: float = 0.0
    beta2: float = 0.9
    batch_size: int = 16
    steps: int = 0
    d_steps_per_g_step: int = 1
    lambda_diversity: float = 1.0
    sigma_train: float = 1.0
    cutmix_prob: float = 0.5
    checkpoint_interval: int = 0  # 0 = final checkpoint only
    diversity_probe_interval: int = 0  # 0 = no probe column values

    def __post_init__(self) -> None:
        # Zero learning rates are allowed for diagnostics (they freeze updates).
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("ADAM betas must lie in [0, 1)")
        if self.batch_size < 1 or self.steps < 0 or self.d_steps_per_g_step < 1:
            raise ValueError("bad step schedule")
        if not 0 <= self.cutmix_prob <= 1:
            raise ValueError("cutmix_prob must be a probability")
        if self.sigma_train < 0 or self.lambda_diversity < 0:
            raise ValueError("sigma_train and lambda_diversity must be non-negative")


@dataclass
class TrainState:
    """Everything needed to continue (or reproduce) a run."""

    step: int
    mode: str
    generator: Generator
    discriminator: Discriminator
    gen_config: GeneratorConfig
    disc_config: DiscriminatorConfig
    settings: OptimizerSettings
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: torch.Generator
    seed: int
    normalizer_id: str = ""
    metrics: list[dict] = field(default_factory=list)


def build_state(
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    settings: OptimizerSettings,
    mode: str = MODE_ADVERSARIAL,
    seed: int = 0,
    normalizer_id: str = "",
) -> TrainState:
    if mode not in (MODE_ADVERSARIAL, MODE_L1_BASELINE):
        raise ValueError(f"unknown training mode: {mode}")
    generator = init_weights(Generator(gen_config), seed)
    discriminator = init_weights(Discriminator(disc_config), seed + 1)
    opt_g = torch.optim.Adam(
        generator.parameters(), lr=settings.lr_g, betas=(settings.beta1, settings.beta2)
    )
    opt_d = torch.optim.Adam(
        discriminator.parameters(), lr=settings.lr_d, betas=(settings.beta1, settings.beta2)
    )
    rng = torch.Generator().manual_seed(seed + 2)
    return TrainState(
        step=0,
        mode=mode,
        generator=generator,
        discriminator=discriminator,
        gen_config=gen_config,
        disc_config=disc_config,
        settings=settings,
        opt_g=opt_g,
        opt_d=opt_d,
        rng=rng,
        seed=seed,
        normalizer_id=normalizer_id,
    )


# ---------------------------------------------------------------------------
# Batch plumbing
# ---------------------------------------------------------------------------

def batch_tensors(
    batch: Sequence[SampleTuple], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack a batch into (present, target, condition) model tensors."""
    if not batch:
        raise ValueError("batch must be nonempty")
    present = torch.as_tensor(
        np.stack([t.present_image.transpose(2, 0, 1) for t in batch])
    ).to(dtype)
    target = torch.as_tensor(
        np.stack([t.future_image.transpose(2, 0, 1) for t in batch])
    ).to(dtype)
    condition = torch.as_tensor(
        np.stack([assemble_condition(t.present_descriptor, t.future_descriptor) for t in batch])
    ).to(dtype)
    return present, target, condition


def batch_manifest(batch: Sequence[SampleTuple]) -> list[dict]:
    return [
        {
            "t0": format_utc(t.present_descriptor.valid_time),
            "t": format_utc(t.future_descriptor.valid_time),
            "lead_minutes": t.lead_minutes,
        }
        for t in batch
    ]


def _draw_latent(count: int, dim: int, sigma: float, rng: torch.Generator,
                 dtype: torch.dtype) -> torch.Tensor:
    return LatentSpec(dim=dim, sigma=sigma).sample(count, rng, dtype)


def _require_finite(value: torch.Tensor, what: str, batch: Sequence[SampleTuple]) -> None:
    if not torch.isfinite(value).all():
        raise TrainingDivergedError(
            f"non-finite {what} at training time; aborting", batch_manifest(batch)
        )


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

def train_step(state: TrainState, batch: Sequence[SampleTuple]) -> TrainState:
    """One optimizer round: critic update(s), then one generator update."""
    if state.mode == MODE_L1_BASELINE:
        return _l1_step(state, batch)
    return _adversarial_step(state, batch)


def _adversarial_step(state: TrainState, batch: Sequence[SampleTuple]) -> TrainState:
    settings = state.settings
    G, D = state.generator, state.discriminator
    dtype = next(G.parameters()).dtype
    present, target, condition = batch_tensors(batch, dtype)
    b = present.shape[0]
    started = time.perf_counter()

    row: dict[str, float | None] = {"step": state.step}
    for _ in range(settings.d_steps_per_g_step):
        power_iterate(D)
        z = _draw_latent(b, state.gen_config.latent_dim, settings.sigma_train, state.rng, dtype)
        with torch.no_grad():
            fake = G(present, condition, z)
        real_patch, _ = D(target, present, condition)
        fake_patch, _ = D(fake, present, condition)
        use_cutmix = bool(torch.rand((), generator=state.rng) < settings.cutmix_prob)
        if use_cutmix:
            mask = make_cutmix_mask(b, present.shape[2], present.shape[3], state.rng).to(dtype)
            real_stack = D.assemble(target, present, condition)
            fake_stack = D.assemble(fake, present, condition)
            _, comp_pixel = D.forward_stack(compose_cutmix(real_stack, fake_stack, mask))
            terms = discriminator_loss(real_patch, fake_patch, comp_pixel, mask)
        else:
            terms = discriminator_loss(real_patch, fake_patch)
        loss_d = -terms.objective
        _require_finite(loss_d, "critic loss", batch)
        state.opt_d.zero_grad()
        loss_d.backward()
        state.opt_d.step()
    row["real_patch"] = float(terms.real_patch.detach())
    row["fake_patch"] = float(terms.fake_patch.detach())
    row["cutmix_pixel"] = (
        float(terms.cutmix_pixel.detach()) if terms.cutmix_pixel is not None else None
    )

    power_iterate(G)
    z1 = _draw_latent(b, state.gen_config.latent_dim, settings.sigma_train, state.rng, dtype)
    z2 = _draw_latent(b, state.gen_config.latent_dim, settings.sigma_train, state.rng, dtype)
    fake1 = G(present, condition, z1)
    fake2 = G(present, condition, z2)
    patch_probs, pixel_probs = D(fake1, present, condition)
    g_terms = generator_loss(patch_probs, pixel_probs, fake1, fake2, settings.lambda_diversity)
    loss_g = g_terms.total
    _require_finite(loss_g, "generator loss", batch)
    state.opt_g.zero_grad()
    state.opt_d.zero_grad()  # discard critic grads from the generator pass
    loss_g.backward()
    state.opt_g.step()

    row["fooling"] = float(g_terms.fooling.detach())
    row["diversity"] = float(g_terms.diversity.detach())
    if (
        settings.diversity_probe_interval
        and state.step % settings.diversity_probe_interval == 0
    ):
        row["diversity_probe"] = diversity_metric(
            G, batch[0], sigma=settings.sigma_train, n_pairs=2, seed=state.seed + state.step
        )
    else:
        row["diversity_probe"] = None
    row["wall_time"] = time.perf_counter() - started
    state.metrics.append(row)
    state.step += 1
    return state


def _l1_step(state: TrainState, batch: Sequence[SampleTuple]) -> TrainState:
    G = state.generator
    dtype = next(G.parameters()).dtype
    present, target, condition = batch_tensors(batch, dtype)
    started = time.perf_counter()
    power_iterate(G)
    # The regression baseline is deterministic: no latent noise.
    z = torch.zeros(present.shape[0], state.gen_config.latent_dim, dtype=dtype)
    loss = l1_regression_loss(G(present, condition, z), target)
    _require_finite(loss, "regression loss", batch)
    state.opt_g.zero_grad()
    loss.backward()
    state.opt_g.step()
    state.metrics.append(
        {"step": state.step, "l1": float(loss.detach()), "wall_time": time.perf_counter() - started}
    )
    state.step += 1
    return state


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------

def fit(
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    settings: OptimizerSettings,
    dataset: Sequence[SampleTuple],
    mode: str = MODE_ADVERSARIAL,
    run_dir: Path | str | None = None,
    seed: int = 0,
    normalizer_id: str = "",
) -> TrainState:
    """Run a training schedule over a materialized dataset.

    Batches are sampled uniformly with replacement through the state's RNG.
    With ``run_dir`` set, writes the run manifest up front, metrics on the
    way out, periodic checkpoints, and a diagnostic dump if a loss diverges.
    """
    state = build_state(gen_config, disc_config, settings, mode, seed, normalizer_id)
    return continue_fit(state, dataset, run_dir=run_dir)


def continue_fit(
    state: TrainState,
    dataset: Sequence[SampleTuple],
    run_dir: Path | str | None = None,
    steps: int | None = None,
) -> TrainState:
    """Run ``steps`` more optimizer rounds (defaults to the settings' schedule)."""
    settings = state.settings
    steps = settings.steps if steps is None else steps
    if steps and not dataset:
        raise ValueError("cannot train on an empty dataset")
    run_dir = Path(run_dir) if run_dir is not None else None
    metrics_file = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        write_run_manifest(run_dir / "run_manifest.json", state)
        metrics_path = run_dir / "metrics.csv"
        fresh = not metrics_path.exists() or metrics_path.stat().st_size == 0
        metrics_file = metrics_path.open("a", newline="")
        if fresh:
            csv.writer(metrics_file).writerow(metric_columns(state.mode))
            metrics_file.flush()

    def append_metrics_row() -> None:
        if metrics_file is None or not state.metrics:
            return
        row = state.metrics[-1]
        csv.writer(metrics_file).writerow(
            ["" if row.get(c) is None else row.get(c) for c in metric_columns(state.mode)]
        )
        metrics_file.flush()

    try:
        for _ in range(steps):
            picks = torch.randint(len(dataset), (settings.batch_size,), generator=state.rng)
            batch = [dataset[int(i)] for i in picks]
            train_step(state, batch)
            append_metrics_row()
            if (
                run_dir is not None
                and settings.checkpoint_interval
                and state.step % settings.checkpoint_interval == 0
            ):
                save_checkpoint(run_dir / f"checkpoint_{state.step:07d}.pt", state)
    except TrainingDivergedError as err:
        if run_dir is not None:
            (run_dir / "diverged_batch.json").write_text(
                json.dumps({"step": state.step, "batch": err.batch_manifest}, indent=2)
            )
        raise
    finally:
        if metrics_file is not None:
            metrics_file.close()
    if run_dir is not None:
        save_checkpoint(run_dir / "checkpoint_final.pt", state)
    return state


def diversity_metric(
    generator: Generator,
    probe: SampleTuple,
    sigma: float,
    n_pairs: int,
    seed: int = 0,
) -> float:
    """Mean absolute difference between generated pairs at latent scale sigma."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    dtype = next(generator.parameters()).dtype
    present, _, condition = batch_tensors([probe], dtype)
    rng = torch.Generator().manual_seed(seed)
    was_training = generator.training
    generator.eval()
    total = 0.0
    try:
        with torch.no_grad():
            for _ in range(n_pairs):
                z1 = _draw_latent(1, generator.config.latent_dim, sigma, rng, dtype)
                z2 = _draw_latent(1, generator.config.latent_dim, sigma, rng, dtype)
                out1 = generator(present, condition, z1)
                out2 = generator(present, condition, z2)
                total += float((out1 - out2).abs().mean())
    finally:
        generator.train(was_training)
    return total / n_pairs


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_training_config(
    path: Path | str,
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    settings: OptimizerSettings,
) -> None:
    """Persist a complete training configuration as structured text."""
    payload = {
        "format": "camcast-training-config",
        "version": 1,
        "optimizer": asdict(settings),
        "generator": asdict(gen_config),
        "discriminator": asdict(disc_config),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def read_training_config(
    path: Path | str,
) -> tuple[GeneratorConfig, DiscriminatorConfig, OptimizerSettings]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "camcast-training-config":
        raise ValueError(f"{path}: not a training config file")
    return (
        GeneratorConfig(**payload["generator"]),
        DiscriminatorConfig(**payload["discriminator"]),
        OptimizerSettings(**payload["optimizer"]),
    )


def write_run_manifest(path: Path | str, state: TrainState) -> None:
    """Echo every hyperparameter of the run verbatim for audit."""
    settings = state.settings
    manifest = {
        "mode": state.mode,
        "seed": state.seed,
        "normalizer_id": state.normalizer_id,
        "lr_g": settings.lr_g,
        "lr_d": settings.lr_d,
        "beta1": settings.beta1,
        "beta2": settings.beta2,
        "lambda_diversity": settings.lambda_diversity,
        "sigma_train": settings.sigma_train,
        "batch_size": settings.batch_size,
        "steps": settings.steps,
        "d_steps_per_g_step": settings.d_steps_per_g_step,
        "cutmix_prob": settings.cutmix_prob,
        "generator_config": asdict(state.gen_config),
        "discriminator_config": asdict(state.disc_config),
    }
    Path(path).write_text(json.dumps(manifest, indent=2))


def metric_columns(mode: str) -> list[str]:
    if mode == MODE_L1_BASELINE:
        return ["step", "l1", "wall_time"]
    return ["step", *ADVERSARIAL_COMPONENTS, "diversity_probe", "wall_time"]


def write_metrics_csv(path: Path | str, state: TrainState) -> None:
    """Dump the in-memory metrics table (one row per step) to a fresh CSV."""
    columns = metric_columns(state.mode)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in state.metrics:
            writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])


def _state_digest(state: TrainState) -> str:
    digest = hashlib.sha256()
    for _, tensor in sorted(state.generator.state_dict().items()):
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()[:12]


def save_checkpoint(path: Path | str, state: TrainState) -> str:
    """Serialize the full training state; returns the checkpoint id."""
    checkpoint_id = f"{state.mode}-step{state.step}-{_state_digest(state)}"
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "checkpoint_id": checkpoint_id,
        "step": state.step,
        "mode": state.mode,
        "seed": state.seed,
        "normalizer_id": state.normalizer_id,
        "gen_config": asdict(state.gen_config),
        "disc_config": asdict(state.disc_config),
        "settings": asdict(state.settings),
        "generator": state.generator.state_dict(),
        "discriminator": state.discriminator.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "rng_state": state.rng.get_state(),
        "metrics": [
            {k: (None if v is None else v) for k, v in row.items()} for row in state.metrics
        ],
    }
    torch.save(payload, Path(path))
    return checkpoint_id


def read_checkpoint_payload(path: Path | str) -> dict:
    payload = torch.load(Path(path), weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a training checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    return payload


def load_checkpoint(path: Path | str) -> TrainState:
    """Rebuild a TrainState that continues bit-identically to the saved run."""
    payload = read_checkpoint_payload(path)
    gen_config = GeneratorConfig(**payload["gen_config"])
    disc_config = DiscriminatorConfig(**payload["disc_config"])
    settings = OptimizerSettings(**payload["settings"])
    generator = Generator(gen_config)
    generator.load_state_dict(payload["generator"])
    discriminator = Discriminator(disc_config)
    discriminator.load_state_dict(payload["discriminator"])
    opt_g = torch.optim.Adam(
        generator.parameters(), lr=settings.lr_g, betas=(settings.beta1, settings.beta2)
    )
    opt_g.load_state_dict(payload["opt_g"])
    opt_d = torch.optim.Adam(
        discriminator.parameters(), lr=settings.lr_d, betas=(settings.beta1, settings.beta2)
    )
    opt_d.load_state_dict(payload["opt_d"])
    rng = torch.Generator()
    rng.set_state(payload["rng_state"])
    return TrainState(
        step=payload["step"],
        mode=payload["mode"],
        generator=generator,
        discriminator=discriminator,
        gen_config=gen_config,
        disc_config=disc_config,
        settings=settings,
        opt_g=opt_g,
        opt_d=opt_d,
        rng=rng,
        seed=payload["seed"],
        normalizer_id=payload["normalizer_id"],
        metrics=list(payload["metrics"]),
    )
