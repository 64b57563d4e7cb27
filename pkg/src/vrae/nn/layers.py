"""Parameter-holding wrappers around :mod:`vrae.nn.functional`.

``forward`` returns the output together with a backward closure.  The
closure takes the upstream gradient and a dict into which parameter
gradients are accumulated by full parameter name, and returns the gradient
with respect to the layer input.  Layers keep no per-call state, so a built
network can be evaluated from several threads at once.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import functional as F

Backward = Callable[[np.ndarray, dict], np.ndarray]


def _accumulate(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] = grads[name] + g
    else:
        grads[name] = g


class Layer:
    name: str = ""

    def children(self) -> list["Layer"]:
        return []

    def own_params(self) -> dict[str, np.ndarray]:
        return {}

    def own_buffers(self) -> dict[str, np.ndarray]:
        return {}

    def own_init_rules(self) -> dict[str, tuple[np.ndarray, str, float]]:
        return {}

    def parameters(self) -> dict[str, np.ndarray]:
        out = dict(self.own_params())
        for child in self.children():
            out.update(child.parameters())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = dict(self.own_buffers())
        for child in self.children():
            out.update(child.buffers())
        return out

    def init_rules(self) -> dict[str, tuple[np.ndarray, str, float]]:
        out = dict(self.own_init_rules())
        for child in self.children():
            out.update(child.init_rules())
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, Backward]:
        raise NotImplementedError

    def __call__(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        return self.forward(x, train)[0]


class Conv2d(Layer):
    def __init__(self, name: str, spec: F.ConvSpec, dtype=np.float32):
        self.name, self.spec = name, spec
        self.weight = np.zeros((spec.out_channels, spec.in_channels, *spec.kernel), dtype=dtype)
        self.bias = np.zeros(spec.out_channels, dtype=dtype) if spec.has_bias else None

    def own_params(self):
        out = {f"{self.name}.weight": self.weight}
        if self.bias is not None:
            out[f"{self.name}.bias"] = self.bias
        return out

    def own_init_rules(self):
        p, q = self.spec.kernel
        rules = {f"{self.name}.weight": (self.weight, "kaiming", self.spec.in_channels * p * q)}
        if self.bias is not None:
            rules[f"{self.name}.bias"] = (self.bias, "zeros", 0)
        return rules

    def forward(self, x, train=False):
        y = F.conv2d_forward(x, self.spec, self.weight, self.bias)

        def backward(g, grads):
            lg = F.conv2d_backward(x, self.spec, self.weight, g)
            for key, val in lg.params.items():
                _accumulate(grads, f"{self.name}.{key}", val)
            return lg.input

        return y, backward


class ConvTranspose2d(Layer):
    def __init__(self, name: str, spec: F.ConvSpec, dtype=np.float32,
                 weight_gain: float = 1.0, bias_value: float = 0.0):
        self.name, self.spec = name, spec
        self.weight_gain, self.bias_value = weight_gain, bias_value
        self.weight = np.zeros((spec.in_channels, spec.out_channels, *spec.kernel), dtype=dtype)
        self.bias = np.zeros(spec.out_channels, dtype=dtype) if spec.has_bias else None

    def own_params(self):
        out = {f"{self.name}.weight": self.weight}
        if self.bias is not None:
            out[f"{self.name}.bias"] = self.bias
        return out

    def own_init_rules(self):
        p, q = self.spec.kernel
        sh, sw = self.spec.stride
        # each output pixel sees in * (p/sh) * (q/sw) taps
        fan_in = self.spec.in_channels * p * q / (sh * sw)
        rules = {f"{self.name}.weight": (self.weight, "kaiming", fan_in, self.weight_gain)}
        if self.bias is not None:
            rules[f"{self.name}.bias"] = (self.bias, "constant", self.bias_value)
        return rules

    def forward(self, x, train=False):
        y = F.transposed_conv2d(x, self.spec, self.weight, "forward", bias=self.bias)

        def backward(g, grads):
            lg = F.transposed_conv2d(x, self.spec, self.weight, "backward", upstream_grad=g)
            for key, val in lg.params.items():
                _accumulate(grads, f"{self.name}.{key}", val)
            return lg.input

        return y, backward


class BatchNorm2d(Layer):
    def __init__(self, name: str, channels: int, dtype=np.float32):
        self.name = name
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running = F.RunningStats(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def own_params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def own_buffers(self):
        return {f"{self.name}.running_mean": self.running.mean, f"{self.name}.running_var": self.running.var}

    def own_init_rules(self):
        return {f"{self.name}.gamma": (self.gamma, "ones", 0), f"{self.name}.beta": (self.beta, "zeros", 0)}

    def forward(self, x, train=False):
        y, cache = F.batchnorm(x, self.gamma, self.beta, self.running, "train" if train else "eval")

        def backward(g, grads):
            lg = F.batchnorm_backward(cache, g)
            for key, val in lg.params.items():
                _accumulate(grads, f"{self.name}.{key}", val)
            return lg.input

        return y, backward


class ReLU(Layer):
    def forward(self, x, train=False):
        return F.relu(x), lambda g, grads: F.relu_backward(x, g)


class MaxPool3s2(Layer):
    def forward(self, x, train=False):
        y, arg = F.maxpool3s2(x)
        return y, lambda g, grads: F.maxpool3s2_backward(x.shape, arg, g)


class AdaptiveAvgPool(Layer):
    def __init__(self, target_h: int, target_w: int):
        self.target = (target_h, target_w)

    def forward(self, x, train=False):
        if x.shape[2:] == self.target:
            return x, lambda g, grads: g
        y = F.adaptive_avgpool(x, *self.target)
        return y, lambda g, grads: F.adaptive_avgpool_backward(x.shape, g)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, train=False):
        backs = []
        for layer in self.layers:
            x, back = layer.forward(x, train)
            backs.append(back)

        def backward(g, grads):
            for back in reversed(backs):
                g = back(g, grads)
            return g

        return x, backward
