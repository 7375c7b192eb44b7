"""Adversarial objectives and the pixel-regression baseline.

The discriminator maximizes three terms: log-probability of real images at
the patch level, log-improbability of generated images at the patch level,
and per-pixel binary cross-entropy against the cut-mix provenance mask. The
generator minimizes the negation of its patch- and pixel-level fooling
terms minus a weighted latent-diversity term that penalizes mode collapse.
Sums over patches/pixels are taken as means so magnitudes are resolution
invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_EPS = 1e-7


def clamp_probs(probs: torch.Tensor) -> torch.Tensor:
    """Clamp probabilities away from {0, 1} before taking logs."""
    return probs.clamp(PROB_EPS, 1.0 - PROB_EPS)


# ---------------------------------------------------------------------------
# Cut-mix compositing
# ---------------------------------------------------------------------------

@dataclass
class CutMixComposite:
    """Composite input stack plus the provenance mask (1 = real pixel)."""

    composite: torch.Tensor
    mask: torch.Tensor


def make_cutmix_mask(
    batch: int,
    height: int,
    width: int,
    rng: torch.Generator,
    max_area: float = 0.5,
) -> torch.Tensor:
    """Random single-rectangle masks of shape (batch, 1, H, W).

    Each mask cuts one axis-aligned rectangle with uniformly random center
    and area fraction uniform in [0, max_area], clipped at the borders; the
    cut direction (real-into-generated or the reverse) is a fair coin.
    """
    masks = torch.empty(batch, 1, height, width)
    for b in range(batch):
        area = max_area * torch.rand((), generator=rng).item()
        rect_h = int(round(height * area ** 0.5))
        rect_w = int(round(width * area ** 0.5))
        ci = int(torch.randint(0, height, (), generator=rng))
        cj = int(torch.randint(0, width, (), generator=rng))
        r0 = max(ci - rect_h // 2, 0)
        r1 = min(r0 + rect_h, height)
        c0 = max(cj - rect_w // 2, 0)
        c1 = min(c0 + rect_w, width)
        real_base = bool(torch.rand((), generator=rng) < 0.5)
        fill = 1.0 if real_base else 0.0
        masks[b].fill_(fill)
        masks[b, :, r0:r1, c0:c1] = 1.0 - fill
    return masks


def compose_cutmix(
    real_stack: torch.Tensor, fake_stack: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Select per pixel from the real stack where mask is 1, else the fake stack.

    Applies to every channel identically, so tiled descriptor channels are
    mixed exactly like image channels.
    """
    if real_stack.shape != fake_stack.shape:
        raise ValueError("real and fake stacks must have identical shapes")
    return torch.where(mask.to(torch.bool), real_stack, fake_stack)


def cutmix(
    real_stack: torch.Tensor, fake_stack: torch.Tensor, rng: torch.Generator
) -> CutMixComposite:
    b, _, h, w = real_stack.shape
    mask = make_cutmix_mask(b, h, w, rng).to(real_stack.dtype)
    return CutMixComposite(
        composite=compose_cutmix(real_stack, fake_stack, mask), mask=mask
    )


# ---------------------------------------------------------------------------
# Loss components
# ---------------------------------------------------------------------------

def patch_real_term(real_patch_probs: torch.Tensor) -> torch.Tensor:
    """Mean log D over patches of real images (maximized by the critic)."""
    return torch.log(clamp_probs(real_patch_probs)).mean()


def patch_fake_term(fake_patch_probs: torch.Tensor) -> torch.Tensor:
    """Mean log(1 - D) over patches of generated images (maximized by the critic)."""
    return torch.log(1.0 - clamp_probs(fake_patch_probs)).mean()


def cutmix_pixel_term(pixel_probs: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Per-pixel cross-entropy of the pixel head against the provenance mask.

    Maximized when the head reproduces the mask exactly (up to clamping).
    """
    probs = clamp_probs(pixel_probs)
    mask = mask.reshape(probs.shape).to(probs.dtype)
    return (mask * torch.log(probs) + (1.0 - mask) * torch.log(1.0 - probs)).mean()


@dataclass
class DiscriminatorLossTerms:
    real_patch: torch.Tensor
    fake_patch: torch.Tensor
    cutmix_pixel: torch.Tensor | None

    @property
    def objective(self) -> torch.Tensor:
        """Scalar the critic ascends (its loss is the negation)."""
        total = self.real_patch + self.fake_patch
        if self.cutmix_pixel is not None:
            total = total + self.cutmix_pixel
        return total


def discriminator_loss(
    real_patch_probs: torch.Tensor,
    fake_patch_probs: torch.Tensor,
    composite_pixel_probs: torch.Tensor | None = None,
    mask: torch.Tensor | None = None,
) -> DiscriminatorLossTerms:
    """Three-component critic objective over one batch.

    Generated images must be detached by the caller; the critic never
    propagates gradient into the generator.
    """
    if (composite_pixel_probs is None) != (mask is None):
        raise ValueError("composite pixel probabilities and mask must come together")
    pixel = None
    if composite_pixel_probs is not None:
        pixel = cutmix_pixel_term(composite_pixel_probs, mask)
    return DiscriminatorLossTerms(
        real_patch=patch_real_term(real_patch_probs),
        fake_patch=patch_fake_term(fake_patch_probs),
        cutmix_pixel=pixel,
    )


@dataclass
class GeneratorLossTerms:
    patch: torch.Tensor
    pixel: torch.Tensor
    diversity: torch.Tensor

    @property
    def fooling(self) -> torch.Tensor:
        return self.patch + self.pixel

    @property
    def total(self) -> torch.Tensor:
        """Scalar the generator descends (non-saturating form)."""
        return -self.patch - self.pixel - self.diversity


def diversity_term(first_sample: torch.Tensor, second_sample: torch.Tensor,
                   weight: float = 1.0) -> torch.Tensor:
    """Weighted mean absolute difference between two latent draws' outputs."""
    return weight * (first_sample - second_sample).abs().mean()


def generator_loss(
    fake_patch_probs: torch.Tensor,
    fake_pixel_probs: torch.Tensor,
    first_sample: torch.Tensor,
    second_sample: torch.Tensor,
    diversity_weight: float = 1.0,
) -> GeneratorLossTerms:
    """Generator objective over one batch.

    The fooling terms are evaluated on the first latent draw's output; the
    diversity term reuses that output against a second draw, so each step
    needs only two generator evaluations.
    """
    return GeneratorLossTerms(
        patch=torch.log(clamp_probs(fake_patch_probs)).mean(),
        pixel=torch.log(clamp_probs(fake_pixel_probs)).mean(),
        diversity=diversity_term(first_sample, second_sample, diversity_weight),
    )


def l1_regression_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over pixels and channels."""
    if generated.shape != target.shape:
        raise ValueError("generated and target shapes must match")
    return (generated - target).abs().mean()
