"""Learnable layers: convolution wrappers, layer norm, global response norm,
and the residual ConvNeXt v2 block used by both spectrum predictors.

Layout convention: activations are channels x frames. Conv weights use
Kaiming-uniform fan-in init, biases start at zero, and GRN affine parameters
start at zero so a fresh block perturbs the residual stream only through its
convolution path.
"""

from __future__ import annotations

import numpy as np

import apvoc.autodiff as ad
from apvoc.autodiff import AutodiffError, Parameter


class Module:
    """Base with parameter discovery over attributes and module lists."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def to_dtype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = p.grad.astype(dtype)
        return self


def assign_parameter_names(module: Module, prefix: str = ""):
    """Stamp each parameter with its stable dotted path (checkpoint keys)."""
    for name, p in module.named_parameters(prefix):
        p.name = name
    return module


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, *,
                 stride=1, padding=None, dilation=1, groups=1, dtype=np.float32):
        if padding is None:
            padding = dilation * (kernel_size - 1) // 2
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.groups = groups
        fan_in = (in_channels // groups) * kernel_size
        self.weight = Parameter(
            kaiming_uniform(rng, (out_channels, in_channels // groups, kernel_size),
                            fan_in, dtype),
            "weight",
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), "bias")

    def __call__(self, x):
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride,
                         padding=self.padding, dilation=self.dilation,
                         groups=self.groups)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, *,
                 stride=(1, 1), padding=(0, 0), dtype=np.float32):
        kh, kw = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kh * kw
        self.weight = Parameter(
            kaiming_uniform(rng, (out_channels, in_channels, kh, kw), fan_in, dtype),
            "weight",
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), "bias")

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride,
                         padding=self.padding)


class LayerNorm(Module):
    """Normalize each frame across channels, then scale/shift per channel."""

    def __init__(self, channels, eps: float = 1e-6, dtype=np.float32):
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), "beta")

    def __call__(self, x):
        if x.shape[0] != self.gamma.size:
            raise AutodiffError(
                f"layer_norm: {self.gamma.size} channels expected, got {x.shape[0]}"
            )
        mu = ad.mean(x, axis=0, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.mean(ad.mul(centered, centered), axis=0, keepdims=True)
        normed = ad.mul(centered, ad.power(ad.add(var, self.eps), -0.5))
        c = self.gamma.size
        return ad.add(ad.mul(normed, ad.reshape(self.gamma, (c, 1))),
                      ad.reshape(self.beta, (c, 1)))


class GRN(Module):
    """Global response normalization: recalibrate channels by their global
    L2 norms over frames. Zero-initialized, so it starts as the identity."""

    def __init__(self, channels, eps: float = 1e-6, dtype=np.float32):
        self.eps = eps
        self.gamma = Parameter(np.zeros(channels, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), "beta")

    def __call__(self, x):
        c = self.gamma.size
        if x.shape[0] != c:
            raise AutodiffError(f"grn: {c} channels expected, got {x.shape[0]}")
        # tiny guard keeps the norm's gradient finite for an all-zero channel
        sq = ad.add(ad.tsum(ad.mul(x, x), axis=1, keepdims=True), 1e-24)
        g = ad.sqrt(sq)
        n = ad.div(g, ad.add(ad.mean(g, axis=0, keepdims=True), self.eps))
        calibrated = ad.mul(ad.reshape(self.gamma, (c, 1)), ad.mul(x, n))
        return ad.add(ad.add(calibrated, ad.reshape(self.beta, (c, 1))), x)


class ConvNeXtV2Block(Module):
    """Depthwise large-kernel conv -> LN -> pointwise expand -> GELU -> GRN
    -> pointwise contract, with a residual connection. Shape-preserving."""

    def __init__(self, channels, expansion, rng, *, kernel_size=7, dtype=np.float32):
        self.dwconv = Conv1d(channels, channels, kernel_size, rng,
                             groups=channels, dtype=dtype)
        self.norm = LayerNorm(channels, dtype=dtype)
        self.pw_up = Conv1d(channels, expansion, 1, rng, dtype=dtype)
        self.grn = GRN(expansion, dtype=dtype)
        self.pw_down = Conv1d(expansion, channels, 1, rng, dtype=dtype)
        self.channels = channels

    def __call__(self, x, trace=None, tag=""):
        if x.shape[0] != self.channels:
            raise AutodiffError(
                f"block expects {self.channels} channels, got {x.shape[0]}"
            )
        h = self.dwconv(x)
        _trace(trace, f"{tag}dwconv", h)
        h = self.norm(h)
        _trace(trace, f"{tag}norm", h)
        h = self.pw_up(h)
        _trace(trace, f"{tag}pw_up", h)
        h = ad.gelu(h)
        _trace(trace, f"{tag}gelu", h)
        h = self.grn(h)
        _trace(trace, f"{tag}grn", h)
        h = self.pw_down(h)
        _trace(trace, f"{tag}pw_down", h)
        return ad.add(x, h)


def _trace(trace, name, tensor):
    if trace is not None:
        trace.append((name, tensor.shape))
