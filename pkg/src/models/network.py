"""
Toy x-vector style embedding network with hand-written backward pass.

Frame-level valid temporal convolutions, statistics pooling, then affine
segment-level layers. Each layer is affine followed by BN and ReLU in the
configured order; the last segment layer drops its ReLU when
remove_last_relu is set. Segments are batched as B x T x D arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ShapeError
from ..numkit import Matrix, RngStream, check_finite

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-10

Mode = Literal["train", "eval"]


class NetworkConfig(BaseModel):
    """Layer sizes and layer-ordering switches of the embedding network."""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(10, ge=1)
    frame_kernel_sizes: List[int] = Field(default_factory=lambda: [5, 5, 7, 1, 1])
    frame_widths: List[int] = Field(default_factory=lambda: [32, 32, 32, 32, 32])
    segment_widths: List[int] = Field(default_factory=lambda: [64, 64])
    embedding_layer_index: int = Field(0, ge=0)
    use_batchnorm: bool = True
    remove_last_relu: bool = True
    bn_before_relu: bool = True
    bn_momentum: float = Field(0.99, ge=0.0, lt=1.0)
    bn_eps: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_layers(self) -> "NetworkConfig":
        if not self.frame_kernel_sizes:
            raise ValueError("at least one frame layer is required")
        if len(self.frame_kernel_sizes) != len(self.frame_widths):
            raise ValueError(
                f"{len(self.frame_kernel_sizes)} kernel sizes for {len(self.frame_widths)} frame widths"
            )
        for k in self.frame_kernel_sizes:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        if not self.segment_widths:
            raise ValueError("at least one segment layer is required after pooling")
        if any(w < 1 for w in self.frame_widths + self.segment_widths):
            raise ValueError("layer widths must be positive")
        if self.embedding_layer_index >= len(self.segment_widths):
            raise ValueError(
                f"embedding_layer_index {self.embedding_layer_index} is out of range for "
                f"{len(self.segment_widths)} segment layers"
            )
        return self

    @property
    def receptive_field(self) -> int:
        return sum(k - 1 for k in self.frame_kernel_sizes) + 1

    @property
    def min_frames(self) -> int:
        # Pooling needs at least two frames after the convolutions.
        return self.receptive_field + 1

    @property
    def feature_dim(self) -> int:
        return self.segment_widths[-1]

    @property
    def embedding_dim(self) -> int:
        return self.segment_widths[self.embedding_layer_index]


@dataclass(frozen=True)
class LayerSpec:
    name: str
    stage: str
    kernel: int
    in_dim: int
    out_dim: int
    ops: Tuple[str, ...]

    @property
    def has_bn(self) -> bool:
        return "bn" in self.ops


def build_layers(config: NetworkConfig) -> List[LayerSpec]:
    """Layer layout in declaration order."""
    bn_relu = ("bn", "relu") if config.bn_before_relu else ("relu", "bn")
    if not config.use_batchnorm:
        bn_relu = ("relu",)

    layers = []
    in_dim = config.input_dim
    for i, (k, width) in enumerate(zip(config.frame_kernel_sizes, config.frame_widths)):
        layers.append(LayerSpec(f"frame{i}", "frame", k, in_dim, width, bn_relu))
        in_dim = width
    in_dim = 2 * in_dim
    last = len(config.segment_widths) - 1
    for i, width in enumerate(config.segment_widths):
        ops = bn_relu
        if i == last and config.remove_last_relu:
            ops = tuple(op for op in bn_relu if op != "relu")
        layers.append(LayerSpec(f"segment{i}", "segment", 1, in_dim, width, ops))
        in_dim = width
    return layers


class EmbeddingNet:
    """Parameters, BN running statistics, the Ring target R and the output-layer weights."""

    def __init__(self, config: NetworkConfig, n_classes: int = 0, ring_target: float = 20.0):
        self.config = config
        self.layers = build_layers(config)
        self.n_classes = int(n_classes)
        self.ring_target = float(ring_target)
        self.params: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        for layer in self.layers:
            if layer.stage == "frame":
                self.params[f"{layer.name}.weight"] = np.zeros((layer.kernel, layer.in_dim, layer.out_dim))
            else:
                self.params[f"{layer.name}.weight"] = np.zeros((layer.in_dim, layer.out_dim))
            self.params[f"{layer.name}.bias"] = np.zeros(layer.out_dim)
            if layer.has_bn:
                self.params[f"{layer.name}.bn_gamma"] = np.ones(layer.out_dim)
                self.params[f"{layer.name}.bn_beta"] = np.zeros(layer.out_dim)
                self.buffers[f"{layer.name}.running_mean"] = np.zeros(layer.out_dim)
                self.buffers[f"{layer.name}.running_var"] = np.ones(layer.out_dim)
        if self.n_classes > 0:
            self.params["output.weight"] = np.zeros((config.feature_dim, self.n_classes))

    @classmethod
    def initialize(
        cls,
        config: NetworkConfig,
        rng: RngStream,
        n_classes: int = 0,
        ring_target: float = 20.0,
    ) -> "EmbeddingNet":
        """Fan-in scaled Gaussian weights, zero biases, BN scale 1 and shift 0."""
        net = cls(config, n_classes=n_classes, ring_target=ring_target)
        for name, value in net.params.items():
            if not name.endswith(".weight"):
                continue
            fan_in = int(np.prod(value.shape[:-1]))
            gain = 1.0 if name == "output.weight" else 2.0
            net.params[name] = rng.gaussian(value.size).reshape(value.shape) * np.sqrt(gain / fan_in)
        logger.debug("Initialized %d parameter tensors", len(net.params))
        return net

    @property
    def output_weights(self) -> Optional[Matrix]:
        return self.params.get("output.weight")

    def tensors(self) -> Dict[str, np.ndarray]:
        """Parameters then buffers, in declaration order."""
        return {**self.params, **self.buffers}

    def copy(self) -> "EmbeddingNet":
        clone = EmbeddingNet(self.config, n_classes=self.n_classes, ring_target=self.ring_target)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return clone

    def check_finite(self) -> None:
        for name, value in self.tensors().items():
            check_finite(name, value)


@dataclass
class StatsPoolCache:
    centered: np.ndarray
    std: np.ndarray
    floored: np.ndarray
    frames: int


def stats_pool(frames: npt.ArrayLike) -> Tuple[np.ndarray, StatsPoolCache]:
    """
    Mean and standard deviation over time, concatenated.

    Accepts T x H or B x T x H. The variance is the population variance,
    floored at 1e-10 before the square root.
    """
    h = np.asarray(frames, dtype=np.float64)
    if h.ndim not in (2, 3):
        raise ShapeError(f"frames must be T x H or B x T x H, got shape {h.shape}")
    t = h.shape[-2]
    if t < 2:
        raise ShapeError(f"statistics pooling needs at least 2 frames, got {t}")
    mean = h.mean(axis=-2)
    centered = h - np.expand_dims(mean, -2)
    var = np.mean(centered * centered, axis=-2)
    floored = var <= VARIANCE_FLOOR
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    pooled = np.concatenate([mean, std], axis=-1)
    return pooled, StatsPoolCache(centered=centered, std=std, floored=floored, frames=t)


def stats_pool_backward(cache: StatsPoolCache, grad_output: npt.ArrayLike) -> np.ndarray:
    grad = np.asarray(grad_output, dtype=np.float64)
    width = cache.std.shape[-1]
    grad_mean, grad_std = grad[..., :width], grad[..., width:]
    # d std / d var is zero on the floor.
    grad_var = np.where(cache.floored, 0.0, grad_std / (2.0 * cache.std))
    return (
        np.expand_dims(grad_mean, -2) / cache.frames
        + 2.0 * np.expand_dims(grad_var, -2) * cache.centered / cache.frames
    )


@dataclass
class _LayerCache:
    spec: LayerSpec
    layer_input: np.ndarray
    windows: Optional[np.ndarray] = None
    op_inputs: List[np.ndarray] = field(default_factory=list)
    bn_xhat: Optional[np.ndarray] = None
    bn_inv_std: Optional[np.ndarray] = None


@dataclass
class NetCache:
    mode: str
    layers: List[_LayerCache]
    pool: StatsPoolCache
    squeezed: bool
    embedding_layer: str
    params: Dict[str, np.ndarray]


@dataclass
class NetOutput:
    feature: np.ndarray
    embedding: np.ndarray
    cache: NetCache


def _batch_norm(
    net: EmbeddingNet, spec: LayerSpec, z: np.ndarray, train: bool, update_stats: bool
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    flat = z.reshape(-1, z.shape[-1])
    mean_key, var_key = f"{spec.name}.running_mean", f"{spec.name}.running_var"
    if train:
        if flat.shape[0] < 2:
            raise ShapeError(f"{spec.name}: train-mode batch norm needs more than one value per channel")
        mean = flat.mean(axis=0)
        var = flat.var(axis=0)
        if update_stats:
            momentum = net.config.bn_momentum
            net.buffers[mean_key] = momentum * net.buffers[mean_key] + (1.0 - momentum) * mean
            net.buffers[var_key] = momentum * net.buffers[var_key] + (1.0 - momentum) * var
    else:
        mean, var = net.buffers[mean_key], net.buffers[var_key]
    inv_std = 1.0 / np.sqrt(var + net.config.bn_eps)
    xhat = (z - mean) * inv_std
    out = net.params[f"{spec.name}.bn_gamma"] * xhat + net.params[f"{spec.name}.bn_beta"]
    return out, xhat, inv_std


def _batch_norm_backward(
    grad: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray, gamma: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = grad.shape[-1]
    g = grad.reshape(-1, width)
    xh = xhat.reshape(-1, width)
    m = g.shape[0]
    grad_gamma = np.sum(g * xh, axis=0)
    grad_beta = np.sum(g, axis=0)
    grad_xhat = g * gamma
    grad_z = (inv_std / m) * (
        m * grad_xhat - grad_xhat.sum(axis=0) - xh * np.sum(grad_xhat * xh, axis=0)
    )
    return grad_z.reshape(grad.shape), grad_gamma, grad_beta


def net_forward(
    net: EmbeddingNet,
    segments: npt.ArrayLike,
    mode: Mode = "train",
    update_stats: bool = True,
) -> NetOutput:
    """
    Run segments (T x D, or B x T x D) through the network.

    Returns the loss-input feature x (output of the last segment layer) and the
    embedding (affine output of segment layer embedding_layer_index). Train
    mode normalizes with batch statistics and, if update_stats, moves the
    running statistics; eval mode uses the running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(segments, dtype=np.float64)
    squeezed = x.ndim == 2
    if squeezed:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[-1] != net.config.input_dim:
        raise ShapeError(
            f"segments must be T x {net.config.input_dim} or B x T x {net.config.input_dim}, "
            f"got shape {np.shape(segments)}"
        )
    if x.shape[1] < net.config.min_frames:
        raise ShapeError(
            f"segment has {x.shape[1]} frames; the network needs at least {net.config.min_frames}"
        )
    check_finite("segments", x)

    train = mode == "train"
    embedding_layer = f"segment{net.config.embedding_layer_index}"
    caches: List[_LayerCache] = []
    embedding = None
    pool_cache = None
    activation = x
    for spec in net.layers:
        if spec.stage == "segment" and pool_cache is None:
            activation, pool_cache = stats_pool(activation)
        cache = _LayerCache(spec=spec, layer_input=activation)
        weight = net.params[f"{spec.name}.weight"]
        if spec.stage == "frame":
            cache.windows = sliding_window_view(activation, spec.kernel, axis=1)
            z = np.einsum("btik,kio->bto", cache.windows, weight)
        else:
            z = activation @ weight
        z = z + net.params[f"{spec.name}.bias"]
        if spec.name == embedding_layer:
            embedding = z
        for op in spec.ops:
            cache.op_inputs.append(z)
            if op == "bn":
                z, cache.bn_xhat, cache.bn_inv_std = _batch_norm(net, spec, z, train, update_stats)
            else:
                z = np.maximum(z, 0.0)
        caches.append(cache)
        activation = z

    feature = activation
    if squeezed:
        feature, embedding = feature[0], embedding[0]
    cache = NetCache(
        mode=mode,
        layers=caches,
        pool=pool_cache,
        squeezed=squeezed,
        embedding_layer=embedding_layer,
        params=dict(net.params),
    )
    return NetOutput(feature=feature, embedding=embedding, cache=cache)


def net_backward(
    cache: NetCache,
    grad_feature: npt.ArrayLike,
    grad_embedding: Optional[npt.ArrayLike] = None,
) -> Dict[str, np.ndarray]:
    """Gradients of every network parameter given upstream gradients on x and the embedding."""
    if cache.mode != "train":
        raise ValueError("net_backward needs a train-mode cache")
    params = cache.params
    grad = np.asarray(grad_feature, dtype=np.float64)
    if cache.squeezed:
        grad = grad[None, :]
    grad_emb = None
    if grad_embedding is not None:
        grad_emb = np.asarray(grad_embedding, dtype=np.float64)
        if cache.squeezed:
            grad_emb = grad_emb[None, :]

    grads: Dict[str, np.ndarray] = {}
    for layer in reversed(cache.layers):
        spec = layer.spec
        for op, op_input in zip(reversed(spec.ops), reversed(layer.op_inputs)):
            if op == "bn":
                grad, grads[f"{spec.name}.bn_gamma"], grads[f"{spec.name}.bn_beta"] = (
                    _batch_norm_backward(
                        grad, layer.bn_xhat, layer.bn_inv_std, params[f"{spec.name}.bn_gamma"]
                    )
                )
            else:
                grad = grad * (op_input > 0.0)
        if spec.name == cache.embedding_layer and grad_emb is not None:
            grad = grad + grad_emb

        weight = params[f"{spec.name}.weight"]
        if spec.stage == "frame":
            grads[f"{spec.name}.weight"] = np.einsum("btik,bto->kio", layer.windows, grad)
            grads[f"{spec.name}.bias"] = grad.sum(axis=(0, 1))
            grad_input = np.zeros_like(layer.layer_input)
            steps = grad.shape[1]
            for tap in range(spec.kernel):
                grad_input[:, tap : tap + steps, :] += grad @ weight[tap].T
        else:
            grads[f"{spec.name}.weight"] = layer.layer_input.T @ grad
            grads[f"{spec.name}.bias"] = grad.sum(axis=0)
            grad_input = grad @ weight.T
            if spec.name == "segment0":
                grad_input = stats_pool_backward(cache.pool, grad_input)
        grad = grad_input

    return {name: grads[name] for name in params if name in grads}


def embed(net: EmbeddingNet, segment: npt.ArrayLike) -> np.ndarray:
    """Eval-mode embedding of one T x D segment."""
    return net_forward(net, segment, mode="eval").embedding
