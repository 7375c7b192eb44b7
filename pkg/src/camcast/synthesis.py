"""Nowcast sequence synthesis, aspect restoration, and strip export.

A trained generator turns a present frame plus a descriptor series into one
frame per requested lead time. The latent draw is shared across leads by
default so consecutive frames evolve smoothly; its scale trades visual
continuity against diversity. Frames train squashed to 64x128, so export
restores the camera's native aspect ratio with a horizontal-only resize.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .descriptors import (
    DescriptorNormalizer,
    NormalizerMismatchError,
    WeatherDescriptor,
    ensure_utc,
    format_utc,
    format_utc_compact,
)
from .models import Generator, GeneratorConfig, generator_forward, init_weights
from .training import read_checkpoint_payload

log = logging.getLogger(__name__)

SIDECAR_FORMAT = "camcast-nowcast"


@dataclass
class NowcastRequest:
    """One synthesis job: present image + raw descriptors for each lead."""

    present_image: np.ndarray
    present_descriptor: WeatherDescriptor
    forecast: list[WeatherDescriptor]
    sigma: float = 0.5
    seed: int = 0
    share_latent: bool = True
    site_id: str = "camera"

    def __post_init__(self) -> None:
        if not self.forecast:
            raise ValueError("forecast must contain at least one descriptor")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        leads = self.lead_minutes()
        if leads[0] < 0:
            raise ValueError("first lead time must be non-negative")
        if any(b <= a for a, b in zip(leads, leads[1:])):
            raise ValueError("forecast lead times must be strictly increasing")

    def lead_minutes(self) -> list[int]:
        t0 = self.present_descriptor.valid_time
        leads = []
        for descriptor in self.forecast:
            delta = (descriptor.valid_time - t0).total_seconds() / 60.0
            if delta != int(delta):
                raise ValueError("forecast times must be whole minutes from the present")
            leads.append(int(delta))
        return leads


@dataclass
class NowcastSequence:
    """Ordered output frames with full provenance for reproducibility."""

    frames: list[tuple[int, np.ndarray]]
    provenance: dict
    lead0_mae: float | None = None


@dataclass
class GeneratorBundle:
    """A trained generator plus the identifiers synthesis must verify."""

    generator: Generator
    config: GeneratorConfig
    normalizer_id: str
    checkpoint_id: str


def load_generator_bundle(path: Path | str) -> GeneratorBundle:
    payload = read_checkpoint_payload(path)
    config = GeneratorConfig(**payload["gen_config"])
    generator = init_weights(Generator(config), seed=0)
    generator.load_state_dict(payload["generator"])
    generator.eval()
    return GeneratorBundle(
        generator=generator,
        config=config,
        normalizer_id=payload["normalizer_id"],
        checkpoint_id=payload["checkpoint_id"],
    )


def synthesize_sequence(
    request: NowcastRequest,
    bundle: GeneratorBundle,
    normalizer: DescriptorNormalizer,
) -> NowcastSequence:
    """Generate one frame per requested lead, deterministically from the seed.

    The normalizer must be the one the generator was trained with; a
    mismatching dataset id is refused. With ``share_latent`` one latent draw
    is reused for every lead (visual continuity); otherwise each lead draws
    its own.
    """
    if normalizer.fitted_on != bundle.normalizer_id:
        raise NormalizerMismatchError(
            f"generator was trained with normalizer {bundle.normalizer_id!r}, "
            f"got {normalizer.fitted_on!r}"
        )
    w0 = normalizer.normalize(request.present_descriptor)
    leads = request.lead_minutes()
    rng = torch.Generator().manual_seed(request.seed)
    dim = bundle.config.latent_dim

    def draw() -> np.ndarray:
        z = torch.randn(dim, generator=rng, dtype=torch.float64)
        return (request.sigma * z).numpy()

    shared = draw() if request.share_latent else None
    frames: list[tuple[int, np.ndarray]] = []
    for lead, raw_wt in zip(leads, request.forecast):
        wt = normalizer.normalize(raw_wt)
        latent = shared if shared is not None else draw()
        frame = generator_forward(bundle.generator, request.present_image, w0, wt, latent)
        frames.append((lead, frame))
    lead0_mae = None
    if leads[0] == 0:
        lead0_mae = float(np.abs(frames[0][1] - request.present_image).mean())
        log.info("lead-0 reproduction MAE: %.4f", lead0_mae)
    provenance = {
        "site_id": request.site_id,
        "t0": format_utc(request.present_descriptor.valid_time),
        "leads": leads,
        "sigma": request.sigma,
        "seed": request.seed,
        "share_latent": request.share_latent,
        "checkpoint_id": bundle.checkpoint_id,
        "normalizer_id": bundle.normalizer_id,
    }
    return NowcastSequence(frames=frames, provenance=provenance, lead0_mae=lead0_mae)


# ---------------------------------------------------------------------------
# Display conversion and export
# ---------------------------------------------------------------------------

def to_display(frame: np.ndarray) -> np.ndarray:
    """Map a [-1, 1] frame to uint8, rounding halves up (0.0 -> 128)."""
    levels = np.floor((np.asarray(frame, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    return np.clip(levels, 0, 255).astype(np.uint8)


def restore_aspect(frame: np.ndarray, original_w_over_h: float) -> np.ndarray:
    """Undo the training squash: horizontal-only resize to the native ratio.

    Height is preserved; the result is a display (uint8) image of width
    round(height * ratio).
    """
    if original_w_over_h <= 0:
        raise ValueError("aspect ratio must be positive")
    display = to_display(frame)
    h, w = display.shape[:2]
    target_w = int(np.floor(h * original_w_over_h + 0.5))
    if target_w == w:
        return display
    resized = Image.fromarray(display).resize((target_w, h), Image.BILINEAR)
    return np.asarray(resized)


def write_png(path: Path | str, display_image: np.ndarray) -> None:
    Image.fromarray(display_image).save(Path(path), format="PNG")


def export_strip(
    sequence: NowcastSequence,
    destination: Path | str,
    aspect_ratio: float = 2.0,
) -> list[Path]:
    """Write per-lead PNGs, a horizontal strip PNG, and a JSON sidecar.

    Returns the written paths (one image per frame, the strip, then the
    sidecar).
    """
    if not sequence.frames:
        raise ValueError("cannot export an empty sequence")
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    site = sequence.provenance.get("site_id", "camera")
    t0_compact = format_utc_compact(_parse_provenance_t0(sequence))
    written: list[Path] = []
    restored: list[np.ndarray] = []
    for lead, frame in sequence.frames:
        display = restore_aspect(frame, aspect_ratio)
        restored.append(display)
        path = destination / f"{site}_{t0_compact}_{lead:03d}.png"
        write_png(path, display)
        written.append(path)
    strip = np.concatenate(restored, axis=1)
    strip_path = destination / f"{site}_{t0_compact}_strip.png"
    write_png(strip_path, strip)
    written.append(strip_path)
    sidecar = {
        "format": SIDECAR_FORMAT,
        "version": 1,
        "aspect_ratio": aspect_ratio,
        "lead0_mae": sequence.lead0_mae,
        **sequence.provenance,
    }
    sidecar_path = destination / f"{site}_{t0_compact}_nowcast.json"
    sidecar_path.write_text(json.dumps(sidecar, indent=2))
    written.append(sidecar_path)
    return written


def _parse_provenance_t0(sequence: NowcastSequence) -> datetime:
    from .descriptors import parse_utc

    return ensure_utc(parse_utc(sequence.provenance["t0"]))
