"""Minimal module system: named parameters, buffers, and the basic layers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import norm
from .tensor import Parameter, Tensor, conv2d, conv2d_transpose, default_dtype

INIT_STD = 0.02


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; identical across platforms for a given seed."""
    return np.random.Generator(np.random.PCG64(seed))


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal draws with anything beyond two standard deviations redrawn."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2
    return (out * std).astype(default_dtype())


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        if "_buffers" not in vars(self):
            self._buffers = {}
        self._buffers[name] = value

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in vars(self).get("_buffers", {}).items():
            yield prefix + name, value
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.data.size for _, p in self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            state["buffer:" + name] = buf
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, target in own.items():
            src = np.asarray(state[name])
            if src.shape != target.shape:
                raise ValueError(f"{name}: shape {src.shape} does not match {target.shape}")
            target[...] = src

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)


class SpectralNorm(Module):
    """Holds the persistent power-iteration vectors of one weight."""

    def __init__(self, weight_shape, rng: np.random.Generator, n_power_iterations: int = 1):
        state = norm.SpectralState.init(weight_shape[0], rng, n_power_iterations, default_dtype())
        self.n_power_iterations = n_power_iterations
        self.register_buffer("u", state.u)
        self.register_buffer("v", np.zeros(int(np.prod(weight_shape[1:])), dtype=default_dtype()))
        self.register_buffer("primed", np.zeros(1, dtype=default_dtype()))

    def forward(self, w: Tensor) -> Tensor:
        b = self._buffers
        state = norm.SpectralState(b["u"], b["v"] if b["primed"][0] else None, self.n_power_iterations)
        w_hat, new = norm.spectral_normalize(w, state, update=self.training)
        b["u"][...] = new.u
        b["v"][...] = new.v
        b["primed"][0] = 1
        return w_hat


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, rng, stride=1, padding="same", bias=True, spectral=False):
        self.weight = Parameter(truncated_normal(rng, (cout, cin, kernel, kernel)))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = padding
        self.sn = SpectralNorm(self.weight.shape, rng) if spectral else None

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        w = self.sn(self.weight) if self.sn is not None else self.weight
        return conv2d(x, w, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, kernel, rng, stride=1, padding="same", bias=True, spectral=False):
        self.weight = Parameter(truncated_normal(rng, (cin, cout, kernel, kernel)))
        self.bias = Parameter(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = padding
        self.sn = SpectralNorm(self.weight.shape, rng) if spectral else None

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        w = self.sn(self.weight) if self.sn is not None else self.weight
        return conv2d_transpose(x, w, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    """Learnable scale/shift plus running statistics for one feature map."""

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        if not 0 < momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        self.scale = Parameter(np.ones(channels))
        self.shift = Parameter(np.zeros(channels))
        self.momentum = momentum
        self.eps = eps
        self.register_buffer("running_mean", np.zeros(channels, dtype=default_dtype()))
        self.register_buffer("running_var", np.ones(channels, dtype=default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        b = self._buffers
        return norm.batch_norm(x, self.scale, self.shift, b["running_mean"], b["running_var"],
                               self.training, self.momentum, self.eps)
