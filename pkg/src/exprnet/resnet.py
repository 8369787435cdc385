"""ResNet-18 topology with a configurable classification head.

Parameter naming follows dotted paths (stem.conv.weight,
stage3.block1.conv2.weight, head.weight, ...) so checkpoints stay portable
and inspectable. Batchnorm running statistics are non-trainable buffers but
travel with checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor, TensorError

STAGE_WIDTHS = (64, 128, 256, 512)
BLOCKS_PER_STAGE = 2


@dataclass
class ModelConfig:
    num_classes: int = 7
    input_channels: int = 3
    input_size: int = 224
    width_multiplier: float = 1.0
    batchnorm_momentum: float = 0.1
    batchnorm_epsilon: float = 1e-5

    def validate(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.input_size < 32:
            raise ValueError("input_size must be >= 32")
        for base in STAGE_WIDTHS:
            scaled = base * self.width_multiplier
            if abs(scaled - round(scaled)) > 1e-9 or round(scaled) < 1:
                raise ValueError(
                    f"width_multiplier {self.width_multiplier} gives non-integer width for base {base}")

    def stage_widths(self):
        return tuple(int(round(b * self.width_multiplier)) for b in STAGE_WIDTHS)


def _uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class ConvLayer:
    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int,
                 stride: int, padding: int, rng: np.random.Generator):
        self.stride = stride
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(f"{name}.weight",
                                _uniform_fan_in(rng, (out_ch, in_ch, kernel, kernel), fan_in))

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, stride=self.stride, padding=self.padding)

    def parameters(self):
        return [self.weight]


class BatchNormLayer:
    def __init__(self, name: str, channels: int, momentum: float, epsilon: float):
        self.name = name
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=np.float32))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return T.batch_norm2d(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, training,
                              momentum=self.momentum, epsilon=self.epsilon)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]


class BasicBlock:
    """Two 3x3 conv-BN pairs with an identity or 1x1-projection skip."""

    def __init__(self, name: str, in_ch: int, out_ch: int, stride: int,
                 cfg: ModelConfig, rng: np.random.Generator):
        self.conv1 = ConvLayer(f"{name}.conv1", in_ch, out_ch, 3, stride, 1, rng)
        self.bn1 = BatchNormLayer(f"{name}.bn1", out_ch, cfg.batchnorm_momentum, cfg.batchnorm_epsilon)
        self.conv2 = ConvLayer(f"{name}.conv2", out_ch, out_ch, 3, 1, 1, rng)
        self.bn2 = BatchNormLayer(f"{name}.bn2", out_ch, cfg.batchnorm_momentum, cfg.batchnorm_epsilon)
        if stride != 1 or in_ch != out_ch:
            self.down_conv = ConvLayer(f"{name}.down.conv", in_ch, out_ch, 1, stride, 0, rng)
            self.down_bn = BatchNormLayer(f"{name}.down.bn", out_ch,
                                          cfg.batchnorm_momentum, cfg.batchnorm_epsilon)
        else:
            self.down_conv = None
            self.down_bn = None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        out = T.relu(self.bn1(self.conv1(x), training))
        out = self.bn2(self.conv2(out), training)
        if self.down_conv is not None:
            skip = self.down_bn(self.down_conv(x), training)
        else:
            skip = x
        return T.relu(T.add(out, skip))

    def layers(self):
        out = [self.conv1, self.bn1, self.conv2, self.bn2]
        if self.down_conv is not None:
            out += [self.down_conv, self.down_bn]
        return out


class Model:
    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        widths = config.stage_widths()
        self.stem_conv = ConvLayer("stem.conv", config.input_channels, widths[0], 7, 2, 3, rng)
        self.stem_bn = BatchNormLayer("stem.bn", widths[0],
                                      config.batchnorm_momentum, config.batchnorm_epsilon)
        self.stages = []
        in_ch = widths[0]
        for s, out_ch in enumerate(widths, start=1):
            blocks = []
            for b in range(1, BLOCKS_PER_STAGE + 1):
                stride = 2 if (s > 1 and b == 1) else 1
                blocks.append(BasicBlock(f"stage{s}.block{b}", in_ch, out_ch, stride, config, rng))
                in_ch = out_ch
            self.stages.append(blocks)
        fan_in = widths[-1]
        self.head_weight = Parameter("head.weight",
                                     _uniform_fan_in(rng, (config.num_classes, fan_in), fan_in))
        self.head_bias = Parameter("head.bias",
                                   _uniform_fan_in(rng, (config.num_classes,), fan_in))

    def reinit_head(self, seed: int):
        rng = np.random.default_rng(seed)
        fan_in = self.head_weight.shape[1]
        self.head_weight.data = _uniform_fan_in(rng, self.head_weight.shape, fan_in)
        self.head_bias.data = _uniform_fan_in(rng, self.head_bias.shape, fan_in)
        self.head_weight.zero_grad()
        self.head_bias.zero_grad()

    def forward(self, batch: Tensor, training: bool = False) -> Tensor:
        cfg = self.config
        if batch.data.ndim != 4 or batch.shape[1] != cfg.input_channels \
                or batch.shape[2] != cfg.input_size or batch.shape[3] != cfg.input_size:
            raise TensorError(
                f"expected batch N×{cfg.input_channels}×{cfg.input_size}×{cfg.input_size}, got {batch.shape}")
        x = T.relu(self.stem_bn(self.stem_conv(batch), training))
        x = T.max_pool2d(x, kernel=3, stride=2, padding=1)
        for blocks in self.stages:
            for block in blocks:
                x = block(x, training)
        x = T.global_avg_pool2d(x)
        return T.linear(x, self.head_weight, self.head_bias)

    def __call__(self, batch: Tensor, training: bool = False) -> Tensor:
        return self.forward(batch, training)

    def _bn_layers(self):
        out = [self.stem_bn]
        for blocks in self.stages:
            for block in blocks:
                for layer in block.layers():
                    if isinstance(layer, BatchNormLayer):
                        out.append(layer)
        return out

    def parameters(self) -> list[Parameter]:
        params = self.stem_conv.parameters() + self.stem_bn.parameters()
        for blocks in self.stages:
            for block in blocks:
                for layer in block.layers():
                    params.extend(layer.parameters())
        params += [self.head_weight, self.head_bias]
        names = [p.name for p in params]
        assert len(names) == len(set(names)), "duplicate parameter names"
        return params

    def state_entries(self) -> list[tuple[str, np.ndarray]]:
        """Everything a checkpoint stores: parameters plus running stats, in order."""
        entries = [(p.name, p.data) for p in self.parameters()]
        for bn in self._bn_layers():
            entries.extend(bn.buffers())
        return entries

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def build_model(config: Optional[ModelConfig] = None, seed: int = 0) -> Model:
    return Model(config or ModelConfig(), seed)
