"""VRAE-k and AE-k networks built from ResNet-50 stages.

Stage 1 is the ResNet stem, stages 2..5 are bottleneck stacks.  In the VRAE
variant every stage i < k also gets an auxiliary block that maps the raw
input straight to the shape of that stage's output; the two are summed
before entering stage i + 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .nn import functional as F
from .nn.init import init_parameters
from .nn.layers import (
    AdaptiveAvgPool,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Layer,
    MaxPool3s2,
    ReLU,
    Sequential,
)

RESNET50_WIDTHS = (64, 256, 512, 1024, 2048)
RESNET50_BLOCKS = (3, 4, 6, 3)
DECODER_MIN_CHANNELS = 16
# Output layer starts near mid-gray with small weights so the final ReLU is
# alive for most pixels at step 0.
OUTPUT_WEIGHT_GAIN = 0.1
OUTPUT_BIAS = 0.5


@dataclass(frozen=True)
class VraeConfig:
    depth: int = 3
    arch: Literal["vrae", "ae"] = "vrae"
    input_hw: tuple[int, int] = (256, 256)
    widths: tuple[int, ...] = RESNET50_WIDTHS
    blocks: tuple[int, ...] = RESNET50_BLOCKS

    def __post_init__(self):
        if self.depth not in (2, 3, 4, 5):
            raise ValueError(f"depth must be one of 2, 3, 4, 5; got {self.depth}")
        if self.arch not in ("vrae", "ae"):
            raise ValueError(f"arch must be 'vrae' or 'ae', got {self.arch!r}")
        if len(self.widths) < self.depth or len(self.blocks) < self.depth - 1:
            raise ValueError(f"widths/blocks too short for depth {self.depth}")
        for w in self.widths[1:self.depth]:
            if w % 4:
                raise ValueError(f"bottleneck stage width {w} is not divisible by 4")
        factor = 2 ** self.depth
        h, w = self.input_hw
        if h % factor or w % factor:
            raise ValueError(f"input {h}x{w} must be divisible by {factor} for depth {self.depth}")
        object.__setattr__(self, "input_hw", tuple(self.input_hw))
        object.__setattr__(self, "widths", tuple(self.widths))
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def label(self) -> str:
        return f"{self.arch.upper()}{self.depth}"

    def stage_shape(self, i: int) -> tuple[int, int, int]:
        """(channels, h, w) of main stage ``i`` (1-based) output."""
        h, w = self.input_hw
        shift = 2 + max(0, i - 2)
        return self.widths[i - 1], h >> shift, w >> shift

    def decoder_channels(self) -> list[int]:
        chans = [self.widths[self.depth - 1]]
        for _ in range(self.depth - 1):
            chans.append(max(chans[-1] // 4, DECODER_MIN_CHANNELS))
        chans.append(3)
        return chans

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_hw"] = list(self.input_hw)
        d["widths"] = list(self.widths)
        d["blocks"] = list(self.blocks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VraeConfig":
        return cls(
            depth=int(d["depth"]),
            arch=d["arch"],
            input_hw=tuple(d["input_hw"]),
            widths=tuple(d["widths"]),
            blocks=tuple(d["blocks"]),
        )

    @classmethod
    def reduced(cls, depth: int, arch: str = "vrae", size: int = 32, scale: float = 0.125,
                blocks: tuple[int, ...] | None = None) -> "VraeConfig":
        """Width-scaled variant for CPU-sized experiments and gradient checks."""
        widths = [max(4, int(round(w * scale / 4)) * 4) for w in RESNET50_WIDTHS]
        widths[0] = max(4, int(round(RESNET50_WIDTHS[0] * scale)))
        return cls(depth=depth, arch=arch, input_hw=(size, size), widths=tuple(widths),
                   blocks=RESNET50_BLOCKS if blocks is None else blocks)


class Stem(Layer):
    """7x7/s2 conv -> BN -> ReLU -> 3x3/s2 max pool."""

    def __init__(self, name: str, width: int, dtype=np.float32):
        self.name = name
        self.conv = Conv2d(f"{name}.conv", F.ConvSpec(3, width, (7, 7), (2, 2), 3), dtype)
        self.bn = BatchNorm2d(f"{name}.bn", width, dtype)
        self.seq = Sequential([self.conv, self.bn, ReLU(), MaxPool3s2()])

    def children(self):
        return [self.seq]

    def forward(self, x, train=False, taps=None):
        y, back = self.seq.forward(x, train)
        if taps is not None:
            taps.append(y)
        return y, back


class Bottleneck(Layer):
    """1x1 reduce -> 3x3 -> 1x1 expand, plus a (projected) skip connection."""

    def __init__(self, name: str, cin: int, cout: int, stride: int = 1, dtype=np.float32):
        self.name = name
        mid = cout // 4
        self.conv1 = Conv2d(f"{name}.conv1", F.ConvSpec(cin, mid, (1, 1)), dtype)
        self.bn1 = BatchNorm2d(f"{name}.bn1", mid, dtype)
        self.conv2 = Conv2d(f"{name}.conv2", F.ConvSpec(mid, mid, (3, 3), (stride, stride), 1), dtype)
        self.bn2 = BatchNorm2d(f"{name}.bn2", mid, dtype)
        self.conv3 = Conv2d(f"{name}.conv3", F.ConvSpec(mid, cout, (1, 1)), dtype)
        self.bn3 = BatchNorm2d(f"{name}.bn3", cout, dtype)
        self.unit1 = Sequential([self.conv1, self.bn1, ReLU()])
        self.unit2 = Sequential([self.conv2, self.bn2, ReLU()])
        self.unit3 = Sequential([self.conv3, self.bn3])
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = Sequential([
                Conv2d(f"{name}.downsample.conv", F.ConvSpec(cin, cout, (1, 1), (stride, stride)), dtype),
                BatchNorm2d(f"{name}.downsample.bn", cout, dtype),
            ])

    def children(self):
        kids = [self.unit1, self.unit2, self.unit3]
        if self.downsample is not None:
            kids.append(self.downsample)
        return kids

    def conv_layers(self) -> list[Conv2d]:
        return [self.conv1, self.conv2, self.conv3]

    def forward(self, x, train=False, taps=None):
        h1, b1 = self.unit1.forward(x, train)
        h2, b2 = self.unit2.forward(h1, train)
        h3, b3 = self.unit3.forward(h2, train)
        if self.downsample is not None:
            skip, bs = self.downsample.forward(x, train)
        else:
            skip, bs = x, None
        pre = h3 + skip
        out = F.relu(pre)
        if taps is not None:
            taps.extend([h1, h2, out])

        def backward(g, grads):
            g = F.relu_backward(pre, g)
            gx = b1(b2(b3(g, grads), grads), grads)
            return gx + (bs(g, grads) if bs is not None else g)

        return out, backward


class Stage(Layer):
    def __init__(self, blocks: list[Bottleneck]):
        self.blocks = blocks

    def children(self):
        return self.blocks

    def forward(self, x, train=False, taps=None):
        backs = []
        for block in self.blocks:
            x, back = block.forward(x, train, taps)
            backs.append(back)

        def backward(g, grads):
            for back in reversed(backs):
                g = back(g, grads)
            return g

        return x, backward


class AuxBlock(Layer):
    """Adaptive average pool of the raw input -> 3x3 reflect conv -> BN -> ReLU."""

    def __init__(self, name: str, width: int, target_hw: tuple[int, int], dtype=np.float32):
        self.name = name
        self.conv = Conv2d(f"{name}.conv", F.ConvSpec(3, width, (3, 3), (1, 1), 1, "reflect"), dtype)
        self.bn = BatchNorm2d(f"{name}.bn", width, dtype)
        self.seq = Sequential([AdaptiveAvgPool(*target_hw), self.conv, self.bn, ReLU()])

    def children(self):
        return [self.seq]

    def forward(self, x, train=False):
        return self.seq.forward(x, train)


@dataclass
class ForwardTrace:
    stage_inputs: list[np.ndarray] = field(default_factory=list)
    stage_outputs: list[np.ndarray] = field(default_factory=list)
    aux_outputs: list[np.ndarray] = field(default_factory=list)
    decoder_outputs: list[np.ndarray] = field(default_factory=list)
    # per stage: the stage input followed by the output of every conv unit
    block_features: list[list[np.ndarray]] = field(default_factory=list)
    output: np.ndarray | None = None


@dataclass(frozen=True)
class ParamCount:
    total: int
    main: int
    auxiliary: int
    decoder: int


class VraeNetwork(Layer):
    def __init__(self, config: VraeConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        k = config.depth
        self.main: list[Layer] = [Stem("main.1", config.widths[0], dtype)]
        cin = config.widths[0]
        for i in range(2, k + 1):
            cout = config.widths[i - 1]
            stride = 1 if i == 2 else 2
            blocks = [
                Bottleneck(f"main.{i}.{j}", cin if j == 0 else cout, cout, stride if j == 0 else 1, dtype)
                for j in range(config.blocks[i - 2])
            ]
            self.main.append(Stage(blocks))
            cin = cout

        self.aux: list[AuxBlock] = []
        if config.arch == "vrae":
            for i in range(1, k):
                c, h, w = config.stage_shape(i)
                self.aux.append(AuxBlock(f"aux.{i}", c, (h, w), dtype))

        chans = config.decoder_channels()
        dec: list[Layer] = []
        for j in range(len(chans) - 1):
            spec = F.ConvSpec(chans[j], chans[j + 1], (4, 4), (2, 2), 1, has_bias=True)
            last = j == len(chans) - 2
            dec += [
                ConvTranspose2d(f"decoder.{j + 1}", spec, dtype,
                                weight_gain=OUTPUT_WEIGHT_GAIN if last else 1.0,
                                bias_value=OUTPUT_BIAS if last else 0.0),
                ReLU(),
            ]
        self.decoder = Sequential(dec)

    def children(self):
        return [*self.main, *self.aux, self.decoder]

    def _run(self, x: np.ndarray, train: bool, trace: ForwardTrace | None):
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != (3, *cfg.input_hw):
            raise F.ShapeError(f"expected input (n, 3, {cfg.input_hw[0]}, {cfg.input_hw[1]}), got {x.shape}")
        x = x.astype(self.dtype, copy=False)
        taps = [] if trace is not None else None
        h, back = self.main[0].forward(x, train, taps)
        main_backs, aux_backs = [back], []
        if trace is not None:
            trace.stage_inputs.append(x)
            trace.stage_outputs.append(h)
            trace.block_features.append([x, *taps])
        for i in range(2, cfg.depth + 1):
            if self.aux:
                a, aback = self.aux[i - 2].forward(x, train)
                if a.shape != h.shape:
                    raise F.ShapeError(f"auxiliary {i - 1} shape {a.shape} != stage {i - 1} shape {h.shape}")
                aux_backs.append(aback)
                if trace is not None:
                    trace.aux_outputs.append(a)
                h = h + a
            taps = [] if trace is not None else None
            stage_in = h
            h, back = self.main[i - 1].forward(h, train, taps)
            main_backs.append(back)
            if trace is not None:
                trace.stage_inputs.append(stage_in)
                trace.stage_outputs.append(h)
                trace.block_features.append([stage_in, *taps])

        if trace is not None:
            y, dec_backs = h, []
            for layer in self.decoder.layers:
                y, b = layer.forward(y, train)
                dec_backs.append(b)
                if isinstance(layer, ReLU):
                    trace.decoder_outputs.append(y)
            trace.output = y

            def dback(g, grads):
                for b in reversed(dec_backs):
                    g = b(g, grads)
                return g
        else:
            y, dback = self.decoder.forward(h, train)

        def backward(g: np.ndarray) -> dict[str, np.ndarray]:
            grads: dict[str, np.ndarray] = {}
            g = dback(g, grads)
            for i in range(cfg.depth, 1, -1):
                g = main_backs[i - 1](g, grads)
                if aux_backs:
                    aux_backs[i - 2](g, grads)
            main_backs[0](g, grads)
            return grads

        return y, backward

    def forward(self, x: np.ndarray, capture_trace: bool = False, train: bool = False):
        """Restore ``x``.  Returns ``x_hat`` or ``(x_hat, trace)`` with ``capture_trace``."""
        trace = ForwardTrace() if capture_trace else None
        y, _ = self._run(x, train, trace)
        return (y, trace) if capture_trace else y

    def __call__(self, x, train=False):
        return self._run(x, train, None)[0]

    def forward_backward(self, x: np.ndarray, train: bool = True):
        """Forward pass plus a closure mapping dL/dx_hat to parameter gradients."""
        return self._run(x, train, None)

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray, train: bool = True):
        y, backward = self._run(x, train, None)
        loss, g = F.mse_loss(y, target.astype(y.dtype, copy=False))
        return loss, backward(g)

    def conv_layers(self) -> list[list[Conv2d]]:
        """Main-path conv layers grouped by encoder block, in execution order."""
        groups = [[self.main[0].conv]]
        for stage in self.main[1:]:
            groups.append([c for block in stage.blocks for c in block.conv_layers()])
        return groups

    def set_train_buffers(self, populated: bool = True) -> None:
        for layer in _walk(self):
            if isinstance(layer, BatchNorm2d):
                layer.running.populated = populated


def _walk(layer: Layer):
    yield layer
    for child in layer.children():
        yield from _walk(child)


def build_network(config: VraeConfig, seed: int = 0, dtype=np.float32) -> VraeNetwork:
    net = VraeNetwork(config, dtype)
    init_parameters(net.init_rules(), seed)
    # fresh running stats (mean 0, var 1) are valid for eval-mode use
    net.set_train_buffers(True)
    return net


def forward(net: VraeNetwork, x: np.ndarray, capture_trace: bool = False):
    return net.forward(x, capture_trace=capture_trace)


def count_parameters(net: VraeNetwork) -> ParamCount:
    counts = {"main": 0, "aux": 0, "decoder": 0}
    for name, arr in net.parameters().items():
        counts[name.split(".", 1)[0]] += arr.size
    return ParamCount(
        total=sum(counts.values()),
        main=counts["main"],
        auxiliary=counts["aux"],
        decoder=counts["decoder"],
    )


def auxiliary_param_total(widths: tuple[int, ...], depth: int) -> int:
    """Closed form: each auxiliary conv has 3*3*3*C weights plus 2*C BN affine terms."""
    return sum(27 * c + 2 * c for c in widths[:depth - 1])
