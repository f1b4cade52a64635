"""Generators (pix2pix U-Net, residual-in-residual, DeblurGAN-style) and the PatchGAN critic."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .attention import ChannelAttention, SelfAttention
from .blocks import (
    MAX_CHANNELS,
    DecodeBlock,
    EncodeBlock,
    FeedbackCell,
    FeedbackState,
    PlainResBlock,
    RiRDecodeBlock,
    RiREncodeBlock,
    encoder_widths,
    global_residual,
)
from .nn import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from .tensor import Tensor, add, leaky_relu, mean, relu, tanh

ARCHS = ("pix2pix", "rir", "rir_large", "deblurgan")
DEFAULT_BASE = {"pix2pix": 64, "rir": 32, "rir_large": 32, "deblurgan": 64}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    arch: str = "pix2pix"
    use_self_attention: bool = False
    use_channel_attention: bool = False
    use_global_residual: bool = False
    use_spectral_norm: bool = False
    use_edge_channel: bool = False
    feedback_iterations: int = 0
    input_size: tuple[int, int] = (256, 256)
    base_channels: int = 0  # 0 picks the architecture default
    rir_depth: int = 3
    res_blocks: int = 9
    ca_reduction: int = 16
    # global-residual generators start as the identity map (spectral final layers excepted)
    residual_zero_init: bool = True

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if self.base_channels == 0 and self.arch in DEFAULT_BASE:
            object.__setattr__(self, "base_channels", DEFAULT_BASE[self.arch])
        self.validate()

    @property
    def in_channels(self) -> int:
        return 4 if self.use_edge_channel else 3

    @property
    def depth(self) -> int:
        """Number of stride-2 stages between input and bottleneck."""
        if self.arch == "pix2pix":
            return int(math.log2(self.input_size[0]))
        if self.arch == "rir":
            return self.rir_depth
        if self.arch == "rir_large":
            return self.rir_depth + 1
        return 2

    def validate(self) -> None:
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.feedback_iterations < 0:
            raise ConfigError("feedback_iterations must be >= 0")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be positive")
        h, w = self.input_size
        if self.arch == "pix2pix":
            if h != w or h < 4 or h & (h - 1):
                raise ConfigError(f"pix2pix needs a square power-of-two input >= 4, got {h}x{w}")
        else:
            m = 2 ** self.depth
            if h % m or w % m:
                raise ConfigError(f"{self.arch} needs H and W divisible by {m}, got {h}x{w}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d


@dataclass(frozen=True)
class DiscriminatorConfig:
    widths: tuple[int, ...] = (64, 128, 256, 512)
    use_spectral_norm: bool = False
    in_channels: int = 3
    kernel: int = 4
    padding: int = 1

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(v) for v in self.widths))
        if len(self.widths) < 2:
            raise ConfigError("PatchGAN needs at least two conv layers")

    def strides(self) -> list[int]:
        # every layer halves except the last hidden layer and the scoring layer
        return [2] * (len(self.widths) - 1) + [1, 1]

    def receptive_field(self) -> int:
        rf, jump = 1, 1
        for s in self.strides():
            rf += (self.kernel - 1) * jump
            jump *= s
        return rf

    def output_size(self, size: int) -> int:
        for s in self.strides():
            size = (size + 2 * self.padding - self.kernel) // s + 1
        return size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


def _every_third(count: int) -> list[bool]:
    """Attention slots after blocks 3, 6, ... excluding the last block of the run."""
    return [(i + 1) % 3 == 0 and i < count - 1 for i in range(count)]


class _Attend(Module):
    """Self-attention then channel attention, whichever are enabled."""

    def __init__(self, channels, cfg: GeneratorConfig, rng, self_attn: bool, chan_attn: bool):
        sn = cfg.use_spectral_norm
        self.sa = SelfAttention(channels, rng, spectral=sn) if self_attn else None
        self.ca = ChannelAttention(channels, rng, min(cfg.ca_reduction, channels), spectral=sn) if chan_attn else None

    def forward(self, x):
        if self.sa is not None:
            x = self.sa(x)
        if self.ca is not None:
            x = self.ca(x)
        return x


class Generator(Module):
    """Shared wiring: ``encode -> bottleneck (+attention, +feedback) -> decode -> residual``."""

    cfg: GeneratorConfig

    def _make_bottleneck(self, channels, rng):
        cfg = self.cfg
        self.bottleneck = _Attend(channels, cfg, rng, False, cfg.use_channel_attention)
        self.feedback = FeedbackCell(channels, rng, spectral=cfg.use_spectral_norm) if cfg.feedback_iterations else None

    def _bottleneck(self, z: Tensor) -> Tensor:
        z = self.bottleneck(z)
        if self.feedback is None:
            return z
        # each pass re-reads the same encoded image; only the recurrent state changes
        state = FeedbackState.zeros_like(z)
        for _ in range(self.cfg.feedback_iterations):
            y, state = self.feedback(z, state)
        return y

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(f"generator expects [N,{cfg.in_channels},H,W] input, got {x.shape}")
        if tuple(x.shape[2:]) != cfg.input_size:
            raise ValueError(f"generator configured for {cfg.input_size}, got {tuple(x.shape[2:])}")
        out = self._restore(x)
        return global_residual(out, x) if cfg.use_global_residual else out

    def _restore(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def final_layer(self) -> Module:
        raise NotImplementedError


class Pix2PixGenerator(Generator):
    def __init__(self, cfg: GeneratorConfig, rng):
        self.cfg = cfg
        depth, sn = cfg.depth, cfg.use_spectral_norm
        widths = encoder_widths(depth, base=cfg.base_channels)
        self.widths = widths
        attn = cfg.use_self_attention or cfg.use_channel_attention
        self.encoders, self.enc_attn = [], []
        cin = cfg.in_channels
        for i, (w, slot) in enumerate(zip(widths, _every_third(depth))):
            self.encoders.append(EncodeBlock(cin, w, rng, spectral=sn, skip_degenerate_norm=i == depth - 1))
            self.enc_attn.append(_Attend(w, cfg, rng, cfg.use_self_attention, cfg.use_channel_attention)
                                 if slot and attn else None)
            cin = w
        self._make_bottleneck(widths[-1], rng)
        self.decoders, self.dec_attn = [], []
        for j, slot in enumerate(_every_third(depth)):
            last = j == depth - 1
            cin = widths[-1] if j == 0 else 2 * widths[depth - 1 - j]
            cout = 3 if last else widths[depth - 2 - j]
            self.decoders.append(DecodeBlock(cin, cout, rng, spectral=sn, final=last))
            self.dec_attn.append(_Attend(cout, cfg, rng, cfg.use_self_attention, cfg.use_channel_attention)
                                 if slot and attn else None)

    def _restore(self, x):
        skips = []
        h = x
        for enc, att in zip(self.encoders, self.enc_attn):
            h = enc(h)
            if att is not None:
                h = att(h)
            skips.append(h)
        h = self._bottleneck(h)
        skips.pop()
        for j, (dec, att) in enumerate(zip(self.decoders, self.dec_attn)):
            h = dec(h, skips.pop() if j else None)
            if att is not None:
                h = att(h)
        return h

    def final_layer(self):
        return self.decoders[-1].conv


class RiRGenerator(Generator):
    def __init__(self, cfg: GeneratorConfig, rng):
        self.cfg = cfg
        depth, sn, r = cfg.depth, cfg.use_spectral_norm, cfg.ca_reduction
        chans = [cfg.base_channels]
        for _ in range(depth):
            chans.append(min(2 * chans[-1], MAX_CHANNELS))
        self.head = Conv2d(cfg.in_channels, chans[0], 3, rng, spectral=sn)
        self.encoders, self.enc_attn = [], []
        for i, slot in enumerate(_every_third(depth)):
            self.encoders.append(RiREncodeBlock(chans[i], chans[i + 1], rng, reduction=r, spectral=sn))
            self.enc_attn.append(_Attend(chans[i + 1], cfg, rng, cfg.use_self_attention, cfg.use_channel_attention)
                                 if slot and cfg.use_self_attention else None)
        self.bottleneck_sa = SelfAttention(chans[-1], rng, spectral=sn) if cfg.use_self_attention else None
        self._make_bottleneck(chans[-1], rng)
        self.decoders, self.dec_attn = [], []
        for j, slot in enumerate(_every_third(depth)):
            cin, cout = chans[depth - j], chans[depth - j - 1]
            self.decoders.append(RiRDecodeBlock(cin, cout, rng, reduction=r, spectral=sn))
            self.dec_attn.append(_Attend(cout, cfg, rng, cfg.use_self_attention, cfg.use_channel_attention)
                                 if slot and cfg.use_self_attention else None)
        self.tail = Conv2d(chans[0], 3, 3, rng, spectral=sn)

    def _restore(self, x):
        h = relu(self.head(x))
        skips = [h]
        for enc, att in zip(self.encoders, self.enc_attn):
            h = enc(h)
            if att is not None:
                h = att(h)
            skips.append(h)
        skips.pop()
        if self.bottleneck_sa is not None:
            h = self.bottleneck_sa(h)
        h = self._bottleneck(h)
        for dec, att in zip(self.decoders, self.dec_attn):
            h = add(dec(h), skips.pop())
            if att is not None:
                h = att(h)
        return tanh(self.tail(h))

    def final_layer(self):
        return self.tail


class DeblurGANGenerator(Generator):
    def __init__(self, cfg: GeneratorConfig, rng):
        self.cfg = cfg
        b, sn = cfg.base_channels, cfg.use_spectral_norm
        self.head = Conv2d(cfg.in_channels, b, 7, rng, bias=False, spectral=sn)
        self.head_bn = BatchNorm2d(b)
        self.down = [Conv2d(b, 2 * b, 3, rng, stride=2, bias=False, spectral=sn),
                     Conv2d(2 * b, 4 * b, 3, rng, stride=2, bias=False, spectral=sn)]
        self.down_bn = [BatchNorm2d(2 * b), BatchNorm2d(4 * b)]
        self.trunk = [PlainResBlock(4 * b, rng, spectral=sn) for _ in range(cfg.res_blocks)]
        self.trunk_attn = [_Attend(4 * b, cfg, rng, cfg.use_self_attention, cfg.use_channel_attention)
                           if slot and cfg.use_self_attention else None
                           for slot in _every_third(cfg.res_blocks)]
        self._make_bottleneck(4 * b, rng)
        self.up = [ConvTranspose2d(4 * b, 2 * b, 4, rng, stride=2, bias=False, spectral=sn),
                   ConvTranspose2d(2 * b, b, 4, rng, stride=2, bias=False, spectral=sn)]
        self.up_bn = [BatchNorm2d(2 * b), BatchNorm2d(b)]
        self.tail = Conv2d(b, 3, 7, rng, spectral=sn)

    def _restore(self, x):
        h = relu(self.head_bn(self.head(x)))
        for conv, bn in zip(self.down, self.down_bn):
            h = relu(bn(conv(h)))
        for block, att in zip(self.trunk, self.trunk_attn):
            h = block(h)
            if att is not None:
                h = att(h)
        h = self._bottleneck(h)
        for conv, bn in zip(self.up, self.up_bn):
            h = relu(bn(conv(h)))
        return tanh(self.tail(h))

    def final_layer(self):
        return self.tail


_GENERATORS = {"pix2pix": Pix2PixGenerator, "rir": RiRGenerator, "rir_large": RiRGenerator,
               "deblurgan": DeblurGANGenerator}


def build_generator(cfg: GeneratorConfig, rng: np.random.Generator) -> Generator:
    cfg.validate()
    model = _GENERATORS[cfg.arch](cfg, rng)
    if cfg.use_global_residual and cfg.residual_zero_init and model.final_layer().sn is None:
        zero_final_layer(model)
    return model


def generator_forward(model: Generator, x: Tensor) -> Tensor:
    return model(x)


def zero_final_layer(model: Generator) -> None:
    layer = model.final_layer()
    layer.weight.data[...] = 0
    if layer.bias is not None:
        layer.bias.data[...] = 0


class PatchDiscriminator(Module):
    """Markovian critic: one raw (sigmoid-free) score per receptive-field patch."""

    def __init__(self, cfg: DiscriminatorConfig, rng):
        self.cfg = cfg
        k, p, sn = cfg.kernel, cfg.padding, cfg.use_spectral_norm
        strides = cfg.strides()
        self.convs, self.bns = [], []
        cin = cfg.in_channels
        for i, w in enumerate(cfg.widths):
            self.convs.append(Conv2d(cin, w, k, rng, stride=strides[i], padding=p, bias=i == 0, spectral=sn))
            self.bns.append(BatchNorm2d(w) if i else None)
            cin = w
        self.score = Conv2d(cin, 1, k, rng, stride=1, padding=p, spectral=sn)

    def forward(self, image: Tensor) -> Tensor:
        if image.ndim != 4 or image.shape[1] != self.cfg.in_channels:
            raise ValueError(f"discriminator expects [N,{self.cfg.in_channels},H,W], got {image.shape}")
        h = image
        for conv, bn in zip(self.convs, self.bns):
            h = conv(h)
            if bn is not None:
                h = bn(h)
            h = leaky_relu(h, 0.2)
        return self.score(h)


def build_discriminator(cfg: DiscriminatorConfig, rng: np.random.Generator) -> PatchDiscriminator:
    return PatchDiscriminator(cfg, rng)


def discriminator_forward(model: PatchDiscriminator, image: Tensor) -> tuple[Tensor, Tensor]:
    """Return ``(patch_map [N,1,h,w], mean score)``."""
    patch = model(image)
    return patch, mean(patch)


@dataclass(frozen=True)
class TableRow:
    name: str
    generator: GeneratorConfig
    classical: str = "l1"


def config_slug(cfg: GeneratorConfig, classical: str = "l1") -> str:
    """Short name listing the enabled options, e.g. ``pix2pix-sa-gr-l1``."""
    flags = [("sa", cfg.use_self_attention), ("ca", cfg.use_channel_attention), ("gr", cfg.use_global_residual),
             ("sn", cfg.use_spectral_norm), ("edge", cfg.use_edge_channel)]
    parts = [cfg.arch] + [tag for tag, on in flags if on]
    if cfg.feedback_iterations:
        parts.append(f"fb{cfg.feedback_iterations}")
    return "-".join(parts + [classical])


def table_rows() -> list[TableRow]:
    """The ten named ablation configurations, at their full-resolution input sizes."""
    p2p = GeneratorConfig(arch="pix2pix", input_size=(256, 256))
    rir = GeneratorConfig(arch="rir", input_size=(720, 1280), use_self_attention=True, use_channel_attention=True,
                          use_spectral_norm=True, use_global_residual=True)
    dg = GeneratorConfig(arch="deblurgan", input_size=(720, 1280), use_global_residual=True)
    rows = [
        (p2p, "l1"),
        (replace(p2p, use_self_attention=True), "l1"),
        (replace(p2p, use_self_attention=True, use_global_residual=True), "l1"),
        (replace(p2p, use_self_attention=True, use_spectral_norm=True), "l1"),
        (replace(p2p, use_self_attention=True, use_channel_attention=True, use_global_residual=True,
                 use_spectral_norm=True), "perceptual"),
        (rir, "perceptual"),
        (replace(rir, arch="rir_large", input_size=(768, 1280)), "l1"),
        (dg, "l1"),
        (replace(dg, use_edge_channel=True), "l1"),
        (replace(dg, feedback_iterations=4), "l1"),
    ]
    return [TableRow(config_slug(g, c), g, c) for g, c in rows]
