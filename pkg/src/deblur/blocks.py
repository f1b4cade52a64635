"""Encoder/decoder, residual, residual-in-residual and feedback blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import ChannelAttention, channel_attention
from .nn import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from .tensor import Tensor, add, clamp, concat, mul, relu, sigmoid, slice_channels, tanh

MAX_CHANNELS = 512


def encoder_widths(depth: int, in_channels: int = 3, base: int = 64, cap: int = MAX_CHANNELS) -> list[int]:
    """Channel count after each encoder block: base, then doubling up to ``cap``."""
    widths = []
    c = base
    for _ in range(depth):
        widths.append(c)
        c = min(c * 2, cap)
    return widths


class EncodeBlock(Module):
    """Stride-2 convolution, batch norm, ReLU.

    With ``skip_degenerate_norm`` the batch norm is bypassed in training when
    there is a single value per channel (a 1x1 map at batch size 1).
    """

    def __init__(self, cin, cout, rng, kernel=4, spectral=False, skip_degenerate_norm=False):
        self.conv = Conv2d(cin, cout, kernel, rng, stride=2, bias=False, spectral=spectral)
        self.bn = BatchNorm2d(cout)
        self.skip_degenerate_norm = skip_degenerate_norm

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ValueError(f"encode block needs even spatial dims, got {x.shape[2:]}")
        y = self.conv(x)
        n, _, h, w = y.shape
        if not (self.skip_degenerate_norm and self.training and n * h * w < 2):
            y = self.bn(y)
        return relu(y)


class DecodeBlock(Module):
    """Transpose convolution doubling the spatial size.

    The skip tensor, if given, is concatenated on the channel axis before the
    convolution. Inner blocks use batch norm + ReLU; the final block is a
    biased transpose convolution followed by tanh.
    """

    def __init__(self, cin, cout, rng, kernel=4, spectral=False, final=False):
        self.conv = ConvTranspose2d(cin, cout, kernel, rng, stride=2, bias=final, spectral=spectral)
        self.bn = None if final else BatchNorm2d(cout)
        self.in_channels = cin
        self.final = final

    def forward(self, x: Tensor, skip: Tensor | None = None) -> Tensor:
        if skip is not None:
            if skip.shape[0] != x.shape[0] or skip.shape[2:] != x.shape[2:]:
                raise ValueError(f"skip shape {skip.shape} does not match {x.shape}")
            x = concat([x, skip], axis=1)
        if x.shape[1] != self.in_channels:
            raise ValueError(f"decode block expects {self.in_channels} input channels, got {x.shape[1]}")
        y = self.conv(x)
        if self.final:
            return tanh(y)
        return relu(self.bn(y))


class ResBlock(Module):
    """``x + CA(conv(CA(conv(x))))`` with 3x3 stride-1 convolutions."""

    def __init__(self, channels, rng, kernel=3, reduction=16, spectral=False):
        reduction = min(reduction, channels)
        self.conv1 = Conv2d(channels, channels, kernel, rng, spectral=spectral)
        self.ca1 = ChannelAttention(channels, rng, reduction, spectral=spectral)
        self.conv2 = Conv2d(channels, channels, kernel, rng, spectral=spectral)
        self.ca2 = ChannelAttention(channels, rng, reduction, spectral=spectral)

    def forward(self, x: Tensor) -> Tensor:
        y = channel_attention(self.conv1(x), self.ca1)[0]
        y = channel_attention(self.conv2(y), self.ca2)[0]
        return add(x, y)


class PlainResBlock(Module):
    """``x + BN(conv(ReLU(BN(conv(x)))))``, the residual unit of the DeblurGAN trunk."""

    def __init__(self, channels, rng, kernel=3, spectral=False):
        self.conv1 = Conv2d(channels, channels, kernel, rng, bias=False, spectral=spectral)
        self.bn1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, kernel, rng, bias=False, spectral=spectral)
        self.bn2 = BatchNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        y = relu(self.bn1(self.conv1(x)))
        return add(x, self.bn2(self.conv2(y)))


class RiREncodeBlock(Module):
    """Two residual blocks, stride-2 conv, BN, ReLU; plus a conv shortcut of the input."""

    def __init__(self, cin, cout, rng, kernel=4, reduction=16, spectral=False):
        self.res1 = ResBlock(cin, rng, reduction=reduction, spectral=spectral)
        self.res2 = ResBlock(cin, rng, reduction=reduction, spectral=spectral)
        self.conv = Conv2d(cin, cout, kernel, rng, stride=2, bias=False, spectral=spectral)
        self.bn = BatchNorm2d(cout)
        self.shortcut = Conv2d(cin, cout, 2, rng, stride=2, spectral=spectral)

    def forward(self, x: Tensor) -> Tensor:
        main = relu(self.bn(self.conv(self.res2(self.res1(x)))))
        return add(main, self.shortcut(x))


class RiRDecodeBlock(Module):
    """Mirror of :class:`RiREncodeBlock` with transpose convolutions."""

    def __init__(self, cin, cout, rng, kernel=4, reduction=16, spectral=False):
        self.res1 = ResBlock(cin, rng, reduction=reduction, spectral=spectral)
        self.res2 = ResBlock(cin, rng, reduction=reduction, spectral=spectral)
        self.conv = ConvTranspose2d(cin, cout, kernel, rng, stride=2, bias=False, spectral=spectral)
        self.bn = BatchNorm2d(cout)
        self.shortcut = ConvTranspose2d(cin, cout, 2, rng, stride=2, spectral=spectral)

    def forward(self, x: Tensor) -> Tensor:
        main = relu(self.bn(self.conv(self.res2(self.res1(x)))))
        return add(main, self.shortcut(x))


def global_residual(model_output: Tensor, input_image: Tensor) -> Tensor:
    """Add the (3-channel) input image to the model output and clamp to [-1, 1].

    An input carrying an extra edge channel contributes only its first three
    channels.
    """
    if input_image.shape[1] > model_output.shape[1]:
        input_image = slice_channels(input_image, 0, model_output.shape[1])
    if input_image.shape != model_output.shape:
        raise ValueError(f"global residual: {model_output.shape} vs {input_image.shape}")
    return clamp(add(model_output, input_image), -1.0, 1.0)


@dataclass
class FeedbackState:
    hidden: Tensor
    cell: Tensor

    @classmethod
    def zeros_like(cls, x: Tensor) -> "FeedbackState":
        z = np.zeros(x.shape, dtype=x.dtype)
        return cls(Tensor(z, dtype=x.dtype), Tensor(z.copy(), dtype=x.dtype))


class FeedbackCell(Module):
    """Convolutional LSTM cell; one 3x3 convolution produces all four gates.

    Gate order along the channel axis: input, forget, output, candidate.
    """

    def __init__(self, channels, rng, kernel=3, spectral=False):
        self.channels = channels
        self.gates = Conv2d(2 * channels, 4 * channels, kernel, rng, spectral=spectral)

    def forward(self, x: Tensor, state: FeedbackState | None = None) -> tuple[Tensor, FeedbackState]:
        return feedback_cell(x, state if state is not None else FeedbackState.zeros_like(x), self)


def feedback_cell(x: Tensor, state: FeedbackState, cell: FeedbackCell) -> tuple[Tensor, FeedbackState]:
    """One recurrent update; returns ``(hidden', state')``."""
    if x.shape[1] != cell.channels:
        raise ValueError(f"feedback cell built for {cell.channels} channels, got {x.shape[1]}")
    if state.hidden.shape != x.shape or state.cell.shape != x.shape:
        raise ValueError(f"feedback state {state.hidden.shape} drifted from input {x.shape}")
    c = cell.channels
    z = cell.gates(concat([x, state.hidden], axis=1))
    i = sigmoid(slice_channels(z, 0, c))
    f = sigmoid(slice_channels(z, c, 2 * c))
    o = sigmoid(slice_channels(z, 2 * c, 3 * c))
    g = tanh(slice_channels(z, 3 * c, 4 * c))
    new_cell = add(mul(f, state.cell), mul(i, g))
    hidden = mul(o, tanh(new_cell))
    return hidden, FeedbackState(hidden, new_cell)
