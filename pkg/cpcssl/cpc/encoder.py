"""Patch and sentence encoders g_enc."""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from cpcssl.autodiff import Tensor, mac_category, ops
from cpcssl.core.exceptions import ShapeError
from cpcssl.cpc.params import NamedParams, init_bias, init_weight
from cpcssl.data.samples import SequenceSample

TEXT_WIDTHS = (3, 4, 5)


@dataclass(frozen=True)
class ConvLayer:
    filters: int
    kernel: int
    stride: int


def conv_output_side(side: int, kernel: int, stride: int) -> int:
    if kernel > side:
        raise ShapeError(f"conv kernel {kernel} larger than input side {side}")
    return (side - kernel) // stride + 1


@dataclass
class VisionEncoderParams:
    """Conv stack (ReLU after each layer), optional hidden ReLU layer, linear map to D_z."""

    patch_shape: Tuple[int, int, int]
    layers: List[ConvLayer]
    kernels: List[Tensor]
    biases: List[Tensor]
    hidden_w: Union[Tensor, None]
    hidden_b: Union[Tensor, None]
    out_w: Tensor
    out_b: Tensor
    kind: str = field(default="vision", init=False)

    @classmethod
    def init(cls, gen: np.random.Generator, patch_shape: Sequence[int], layers: Sequence[ConvLayer],
             hidden: int, d_z: int, scale: float = 1.0) -> "VisionEncoderParams":
        channels, height, width = patch_shape
        kernels, biases = [], []
        for i, layer in enumerate(layers):
            kernels.append(init_weight(gen, (layer.filters, channels, layer.kernel, layer.kernel), f"enc.conv{i}.w",
                                       scale, fan_in=channels * layer.kernel * layer.kernel))
            biases.append(init_bias(layer.filters, f"enc.conv{i}.b"))
            height = conv_output_side(height, layer.kernel, layer.stride)
            width = conv_output_side(width, layer.kernel, layer.stride)
            channels = layer.filters
        flat = channels * height * width
        hidden_w = hidden_b = None
        if hidden:
            hidden_w = init_weight(gen, (flat, hidden), "enc.hidden.w", scale)
            hidden_b = init_bias(hidden, "enc.hidden.b")
            flat = hidden
        return cls(tuple(patch_shape), list(layers), kernels, biases, hidden_w, hidden_b,
                   init_weight(gen, (flat, d_z), "enc.out.w", scale), init_bias(d_z, "enc.out.b"))

    @property
    def d_z(self) -> int:
        return self.out_w.shape[1]

    def named(self) -> NamedParams:
        params = [*self.kernels, *self.biases, self.out_w, self.out_b]
        if self.hidden_w is not None:
            params += [self.hidden_w, self.hidden_b]
        return {p.name: p for p in params}

    def encode(self, patches: np.ndarray) -> Tensor:
        """``B×C×h×w`` patches to ``B×D_z`` codes."""
        if tuple(patches.shape[1:]) != self.patch_shape:
            raise ShapeError(f"patch shape {tuple(patches.shape[1:])} does not match encoder {self.patch_shape}")
        with mac_category("enc"):
            h = Tensor(patches)
            for kernel, bias, layer in zip(self.kernels, self.biases, self.layers):
                h = ops.relu(ops.add(ops.conv2d(h, kernel, layer.stride), ops.reshape(bias, (-1, 1, 1))))
            h = ops.reshape(h, (patches.shape[0], -1))
            if self.hidden_w is not None:
                h = ops.relu(ops.add(ops.matmul(h, self.hidden_w), self.hidden_b))
            return ops.add(ops.matmul(h, self.out_w), self.out_b)


@dataclass
class TextEncoderParams:
    """Token embeddings, three 1-D filter groups (widths 3/4/5), ReLU, max-pool, concat."""

    embedding: Tensor
    kernels: List[Tensor]
    biases: List[Tensor]
    max_tokens: int
    kind: str = field(default="text", init=False)

    @classmethod
    def init(cls, gen: np.random.Generator, vocab_size: int, embed: int, filters: int, max_tokens: int,
             scale: float = 1.0) -> "TextEncoderParams":
        if max_tokens < max(TEXT_WIDTHS):
            raise ShapeError(f"max_tokens {max_tokens} shorter than widest filter {max(TEXT_WIDTHS)}")
        embedding = init_weight(gen, (vocab_size, embed), "enc.embed", scale, fan_in=1)
        kernels = [init_weight(gen, (filters, w, embed), f"enc.text{w}.w", scale, fan_in=w * embed) for w in TEXT_WIDTHS]
        biases = [init_bias(filters, f"enc.text{w}.b") for w in TEXT_WIDTHS]
        return cls(embedding, kernels, biases, max_tokens)

    @property
    def d_z(self) -> int:
        return sum(k.shape[0] for k in self.kernels)

    @property
    def patch_shape(self) -> Tuple[int]:
        return (self.max_tokens,)

    def named(self) -> NamedParams:
        return {p.name: p for p in (self.embedding, *self.kernels, *self.biases)}

    def encode(self, token_ids: np.ndarray) -> Tensor:
        """``B×L`` token ids to ``B×3F`` sentence codes."""
        if token_ids.ndim != 2 or token_ids.shape[1] != self.max_tokens:
            raise ShapeError(f"token block shape {token_ids.shape} does not match encoder length {self.max_tokens}")
        with mac_category("enc"):
            embedded = ops.take(self.embedding, token_ids.astype(np.int64))
            features = []
            for kernel, bias in zip(self.kernels, self.biases):
                response = ops.relu(ops.add(ops.conv1d(embedded, kernel), bias))
                features.append(ops.max(response, axis=1))
            return ops.concat(features, axis=1)


EncoderParams = Union[VisionEncoderParams, TextEncoderParams]


def encode_patches(patches: np.ndarray, enc: EncoderParams) -> Tensor:
    return enc.encode(patches)


def encode_sequence(sample: SequenceSample, enc: EncoderParams) -> Tensor:
    """``T×D_z`` codes, row i is g_enc(x_i)."""
    return enc.encode(np.asarray(sample.patches))
