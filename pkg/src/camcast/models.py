"""Spectrally normalized U-Net generator and two-headed discriminator.

Both networks are encoder-decoder stacks of Conv-BN-ReLU stages with skip
concatenations between matching resolutions. The generator transforms the
present camera frame into a future frame conditioned on tiled
weather-descriptor channels, with a Gaussian latent injected at the
innermost stage; the discriminator judges the same conditioning stack at
patch granularity (from the encoder) and pixel granularity (from the
decoder).

Every convolution and transposed convolution divides its kernel by a
running power-iteration estimate of the largest singular value. The
estimate's left vector ``u`` is persistent state advanced explicitly by the
training engine (once per layer per optimizer update), so a forward pass is
a pure function of parameters and inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .descriptors import WeatherDescriptor
from .fields import DESCRIPTOR_DIM

SIGMA_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _check_divisible(h: int, w: int, stages: int) -> None:
    factor = 2 ** stages
    if h % factor or w % factor:
        raise ValueError(f"input {h}x{w} not divisible by 2^{stages}")


@dataclass
class GeneratorConfig:
    stages: int = 5
    base_channels: int = 64
    latent_dim: int = 100
    latent_channels: int = 128
    input_h: int = 64
    input_w: int = 128
    descriptor_dim: int = DESCRIPTOR_DIM
    max_channels: int = 512

    def __post_init__(self) -> None:
        if self.stages < 1:
            raise ValueError("need at least one encoder stage")
        if self.latent_dim <= 0:
            raise ValueError("latent_dim must be positive")
        _check_divisible(self.input_h, self.input_w, self.stages)

    @property
    def inner_h(self) -> int:
        return self.input_h // (2 ** self.stages)

    @property
    def inner_w(self) -> int:
        return self.input_w // (2 ** self.stages)

    def encoder_channels(self) -> list[int]:
        """Output width of each encoder stage; doubling is capped at max_channels."""
        return [
            min(self.base_channels * 2 ** (s + 1), self.max_channels)
            for s in range(self.stages)
        ]


@dataclass
class DiscriminatorConfig:
    stages: int = 5
    base_channels: int = 64
    input_h: int = 64
    input_w: int = 128
    descriptor_dim: int = DESCRIPTOR_DIM
    max_channels: int = 512

    def __post_init__(self) -> None:
        if self.stages < 1:
            raise ValueError("need at least one encoder stage")
        _check_divisible(self.input_h, self.input_w, self.stages)

    @property
    def patch_h(self) -> int:
        return self.input_h // (2 ** self.stages)

    @property
    def patch_w(self) -> int:
        return self.input_w // (2 ** self.stages)

    def encoder_channels(self) -> list[int]:
        return [
            min(self.base_channels * 2 ** (s + 1), self.max_channels)
            for s in range(self.stages)
        ]


@dataclass
class LatentSpec:
    """Latent sampling law: standard normal scaled by sigma."""

    dim: int = 100
    sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def sample(self, count: int, rng: torch.Generator, dtype=torch.float32) -> torch.Tensor:
        draw = torch.randn(count, self.dim, generator=rng, dtype=torch.float64)
        return (self.sigma * draw).to(dtype)


# ---------------------------------------------------------------------------
# Spectral normalization
# ---------------------------------------------------------------------------

def l2_normalize(vector: torch.Tensor, eps: float = SIGMA_FLOOR) -> torch.Tensor:
    return vector / vector.norm().clamp_min(eps)


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """One power-iteration step on a 2-D weight view.

    Updates the left vector estimate, forms sigma_hat = u' W v, and returns
    (weight / sigma_hat, u'). A zero weight matrix hits the sigma floor
    instead of dividing by zero.
    """
    if weight.dim() != 2:
        raise ValueError("spectral_normalize expects a rank-2 weight view")
    with torch.no_grad():
        v = l2_normalize(weight.t().mv(u))
        u_new = l2_normalize(weight.mv(v))
    sigma = torch.dot(u_new, weight.mv(v)).clamp_min(SIGMA_FLOOR)
    return weight / sigma, u_new


class _SpectralConvBase(nn.Module):
    """Shared raw-kernel + persistent-u machinery for normalized convolutions."""

    weight: nn.Parameter
    u: torch.Tensor

    def weight_2d(self) -> torch.Tensor:
        raise NotImplementedError

    def power_iterate(self) -> None:
        """Advance the largest-singular-value estimate by one iteration."""
        with torch.no_grad():
            _, u_new = spectral_normalize(self.weight_2d(), self.u)
            self.u.copy_(u_new)

    def sigma_estimate(self) -> torch.Tensor:
        w2d = self.weight_2d()
        with torch.no_grad():
            v = l2_normalize(w2d.t().mv(self.u))
        # u and v are constants here; gradients flow through the kernel only.
        return torch.dot(self.u, w2d.mv(v)).clamp_min(SIGMA_FLOOR)

    def normalized_weight(self) -> torch.Tensor:
        return self.weight / self.sigma_estimate()


class SNConv2d(_SpectralConvBase):
    def __init__(self, in_ch: int, out_ch: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.in_channels = in_ch
        self.out_channels = out_ch
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(torch.empty(out_ch, in_ch, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.register_buffer("u", torch.zeros(out_ch))
        self._default_init()

    def _default_init(self) -> None:
        fan_in = self.in_channels * self.kernel_size ** 2
        with torch.no_grad():
            self.weight.normal_(0.0, math.sqrt(2.0 / fan_in))
            self.u.copy_(l2_normalize(torch.randn(self.out_channels)))

    def weight_2d(self) -> torch.Tensor:
        return self.weight.reshape(self.out_channels, -1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.normalized_weight(), self.bias,
                        stride=self.stride, padding=self.padding)


class SNConvTranspose2d(_SpectralConvBase):
    def __init__(self, in_ch: int, out_ch: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        super().__init__()
        self.in_channels = in_ch
        self.out_channels = out_ch
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = nn.Parameter(torch.empty(in_ch, out_ch, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.register_buffer("u", torch.zeros(out_ch))
        self._default_init()

    def _default_init(self) -> None:
        fan_in = self.in_channels * self.kernel_size ** 2
        with torch.no_grad():
            self.weight.normal_(0.0, math.sqrt(2.0 / fan_in))
            self.u.copy_(l2_normalize(torch.randn(self.out_channels)))

    def weight_2d(self) -> torch.Tensor:
        # Matricized as (out_channels) x (in_channels * kh * kw).
        return self.weight.transpose(0, 1).reshape(self.out_channels, -1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv_transpose2d(x, self.normalized_weight(), self.bias,
                                  stride=self.stride, padding=self.padding)


def power_iterate(module: nn.Module) -> None:
    """Advance every spectrally normalized layer in a network by one step."""
    for layer in module.modules():
        if isinstance(layer, _SpectralConvBase):
            layer.power_iterate()


def spectral_layers(module: nn.Module) -> list[_SpectralConvBase]:
    return [m for m in module.modules() if isinstance(m, _SpectralConvBase)]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

class DownStage(nn.Module):
    """Strided Conv-BN-ReLU: halves height/width."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = SNConv2d(in_ch, out_ch, 4, stride=2, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


class UpStage(nn.Module):
    """Transposed Conv-BN-ReLU: doubles height/width."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = SNConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


class ProcessBlock(nn.Module):
    """Same-resolution Conv-BN-ReLU used for pre- and post-processing."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = SNConv2d(in_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


def _build_decoder(stages: int, enc_channels: list[int], base: int,
                   innermost_extra: int) -> nn.ModuleList:
    """Decoder stages ordered innermost-first.

    Stage producing resolution level s (s = stages-1 .. 0) takes the previous
    decoder output concatenated with the matching encoder skip; the innermost
    stage takes the deepest encoder output plus ``innermost_extra`` channels.
    """
    decoders = []
    for s in range(stages - 1, -1, -1):
        if s == stages - 1:
            in_ch = enc_channels[-1] + innermost_extra
        else:
            in_ch = 2 * enc_channels[s]
        out_ch = enc_channels[s - 1] if s >= 1 else base
        decoders.append(UpStage(in_ch, out_ch))
    return nn.ModuleList(decoders)


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

class Generator(nn.Module):
    """Transforms the present frame into a future frame under conditioning.

    Input channels: 3 (present image) + 2 * descriptor_dim (tiled present and
    forecast descriptors). The latent is mapped by a dense layer onto the
    innermost feature map and concatenated there.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        cond_channels = 2 * config.descriptor_dim
        enc = config.encoder_channels()
        self.pre = ProcessBlock(3 + cond_channels, config.base_channels)
        downs = []
        prev = config.base_channels
        for width in enc:
            downs.append(DownStage(prev, width))
            prev = width
        self.encoders = nn.ModuleList(downs)
        self.latent_fc = nn.Linear(
            config.latent_dim, config.latent_channels * config.inner_h * config.inner_w
        )
        self.decoders = _build_decoder(
            config.stages, enc, config.base_channels, config.latent_channels
        )
        self.post = ProcessBlock(config.base_channels, config.base_channels)
        self.to_rgb = SNConv2d(config.base_channels, 3, 1, bias=True)

    def forward(self, present: torch.Tensor, condition: torch.Tensor,
                latent: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        b, _, h, w = present.shape
        tiled = condition[:, :, None, None].expand(-1, -1, h, w)
        x = self.pre(torch.cat([present, tiled], dim=1))
        skips = []
        for stage in self.encoders:
            x = stage(x)
            skips.append(x)
        zmap = self.latent_fc(latent).view(b, cfg.latent_channels, cfg.inner_h, cfg.inner_w)
        x = torch.cat([x, zmap], dim=1)
        for i, stage in enumerate(self.decoders):
            x = stage(x)
            s = cfg.stages - 1 - i
            if s >= 1:
                x = torch.cat([x, skips[s - 1]], dim=1)
        return torch.tanh(self.to_rgb(self.post(x)))


class Discriminator(nn.Module):
    """Two-headed critic over the full conditioning stack.

    Input channels: 3 (judged image) + 3 (present image) + 2 * descriptor_dim
    (tiled descriptors). The patch head reads the deepest encoder features;
    the pixel head reads the decoder's post-processing output. Both heads
    emit probabilities via a sigmoid.
    """

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        cond_channels = 2 * config.descriptor_dim
        enc = config.encoder_channels()
        self.pre = ProcessBlock(6 + cond_channels, config.base_channels)
        downs = []
        prev = config.base_channels
        for width in enc:
            downs.append(DownStage(prev, width))
            prev = width
        self.encoders = nn.ModuleList(downs)
        self.patch_head = SNConv2d(enc[-1], 1, 1, bias=True)
        self.decoders = _build_decoder(config.stages, enc, config.base_channels, 0)
        self.post = ProcessBlock(config.base_channels, config.base_channels)
        self.pixel_head = SNConv2d(config.base_channels, 1, 1, bias=True)

    def assemble(self, image: torch.Tensor, present: torch.Tensor,
                 condition: torch.Tensor) -> torch.Tensor:
        """Stack all input channels (image, present image, tiled descriptors)."""
        _, _, h, w = image.shape
        tiled = condition[:, :, None, None].expand(-1, -1, h, w)
        return torch.cat([image, present, tiled], dim=1)

    def forward_stack(self, stack: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        cfg = self.config
        x = self.pre(stack)
        skips = []
        for stage in self.encoders:
            x = stage(x)
            skips.append(x)
        patch = torch.sigmoid(self.patch_head(x)).squeeze(1)
        for i, stage in enumerate(self.decoders):
            x = stage(x)
            s = cfg.stages - 1 - i
            if s >= 1:
                x = torch.cat([x, skips[s - 1]], dim=1)
        pixel = torch.sigmoid(self.pixel_head(self.post(x))).squeeze(1)
        return patch, pixel

    def forward(self, image: torch.Tensor, present: torch.Tensor,
                condition: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.forward_stack(self.assemble(image, present, condition))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_weights(model: nn.Module, seed: int) -> nn.Module:
    """Deterministically (re)initialize a network.

    Kernels get zero-mean normals scaled for ReLU fan-in, batch norms get
    scale 1 / shift 0 with reset running statistics, and each spectral-norm
    left vector is drawn fresh on the unit sphere.
    """
    rng = torch.Generator().manual_seed(seed)

    def draw(shape, std=1.0):
        return (std * torch.randn(shape, generator=rng, dtype=torch.float64))

    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (SNConv2d, SNConvTranspose2d)):
                fan_in = module.in_channels * module.kernel_size ** 2
                module.weight.copy_(draw(module.weight.shape, math.sqrt(2.0 / fan_in))
                                    .to(module.weight.dtype))
                if module.bias is not None:
                    module.bias.zero_()
                module.u.copy_(l2_normalize(draw(module.u.shape).to(module.u.dtype)))
            elif isinstance(module, nn.Linear):
                fan_in = module.in_features
                module.weight.copy_(draw(module.weight.shape, math.sqrt(2.0 / fan_in))
                                    .to(module.weight.dtype))
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.reset_running_stats()
                if module.affine:
                    module.weight.fill_(1.0)
                    module.bias.zero_()
    return model


# ---------------------------------------------------------------------------
# Single-example functional wrappers
# ---------------------------------------------------------------------------

def assemble_condition(w_present: WeatherDescriptor, w_future: WeatherDescriptor) -> np.ndarray:
    """Concatenate present and forecast descriptor vectors (present first)."""
    return np.concatenate([w_present.vector, w_future.vector])


def _to_model_dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def generator_forward(
    model: Generator,
    present_image: np.ndarray,
    w_present: WeatherDescriptor,
    w_future: WeatherDescriptor,
    latent: np.ndarray,
) -> np.ndarray:
    """Run one example through the generator in inference mode; returns (H, W, 3)."""
    dtype = _to_model_dtype(model)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            present = torch.as_tensor(
                np.ascontiguousarray(present_image.transpose(2, 0, 1))
            ).to(dtype).unsqueeze(0)
            cond = torch.as_tensor(assemble_condition(w_present, w_future)).to(dtype).unsqueeze(0)
            z = torch.as_tensor(np.asarray(latent)).to(dtype).reshape(1, -1)
            out = model(present, cond, z)
    finally:
        model.train(was_training)
    return out.squeeze(0).permute(1, 2, 0).numpy().astype(np.float32)


def discriminator_forward(
    model: Discriminator,
    image: np.ndarray,
    present_image: np.ndarray,
    w_present: WeatherDescriptor,
    w_future: WeatherDescriptor,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one example through the discriminator; returns (patch, pixel) prob maps."""
    dtype = _to_model_dtype(model)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            img = torch.as_tensor(np.ascontiguousarray(image.transpose(2, 0, 1))).to(dtype).unsqueeze(0)
            pres = torch.as_tensor(
                np.ascontiguousarray(present_image.transpose(2, 0, 1))
            ).to(dtype).unsqueeze(0)
            cond = torch.as_tensor(assemble_condition(w_present, w_future)).to(dtype).unsqueeze(0)
            patch, pixel = model(img, pres, cond)
    finally:
        model.train(was_training)
    return patch.squeeze(0).numpy(), pixel.squeeze(0).numpy()
