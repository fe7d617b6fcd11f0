"""Residual survival network with exact manual backpropagation.

The network stacks residual blocks and ends in a linear head producing one
scalar risk score per sample. Each block computes

    y = F(x) + W_s x

where the main channel F applies [dense -> batch norm -> activation ->
dropout] once per dense layer and the shortcut W_s is a learned bias-free
linear map. Nothing follows the residual sum: no activation, normalization,
or dropout touches y or the shortcut path.

Backward passes are hand-derived and exact, including the path through the
batch statistics, so analytic gradients match finite differences of the
composed Cox loss to numerical precision. Arrays are row-major with samples
as rows: features (n, p), per-layer activations (n, width).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import StandardizationParams

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

# "linear" is a test-only identity activation; the protocol sweeps the first three
ACTIVATION_KINDS = ("tanh", "selu", "relu", "linear")

CHECKPOINT_MAGIC = b"RESSURVCKPT1\n"
CHECKPOINT_FORMAT = "ressurv-checkpoint-v1"


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass
class DenseLayerParams:
    """Affine map z = a W^T + b; bias-free when b is None (shortcut maps)."""

    W: np.ndarray                 # (out_dim, in_dim)
    b: np.ndarray | None = None   # (out_dim,)

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


@dataclass
class BatchNormParams:
    """Per-feature scale/shift plus running statistics for eval mode.

    Running statistics start life as the first train-mode batch statistics
    (the first update copies them outright; later updates are an
    exponential moving average with `momentum`). With full-batch training
    this makes eval mode consistent with the training data from epoch one.
    """

    gamma: np.ndarray
    beta_shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    n_updates: int = 0

    @classmethod
    def identity(cls, dim: int, epsilon: float = 1e-5, momentum: float = 0.1):
        return cls(
            gamma=np.ones(dim),
            beta_shift=np.zeros(dim),
            running_mean=np.zeros(dim),
            running_var=np.ones(dim),
            epsilon=epsilon,
            momentum=momentum,
        )


@dataclass
class ResBlockParams:
    """One residual block: dense layers with their batch norms, plus the
    learned shortcut. `shortcut=None` is the no-shortcut ablation (y = F(x))."""

    dense_layers: list[DenseLayerParams]
    batch_norms: list[BatchNormParams]
    shortcut: DenseLayerParams | None

    @property
    def in_dim(self) -> int:
        return self.dense_layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.dense_layers[-1].out_dim


@dataclass
class ResSurvParams:
    """All learnable state of the network plus its architectural knobs."""

    blocks: list[ResBlockParams]
    output_head: DenseLayerParams
    activation_kind: str
    dropout_rate: float

    @property
    def in_dim(self) -> int:
        return self.blocks[0].in_dim

    def copy(self) -> "ResSurvParams":
        """Deep copy; used to snapshot the best epoch during training."""
        import copy

        return copy.deepcopy(self)


def init_params(
    n_features: int,
    block_widths: list[int],
    dense_layers_per_block: int,
    activation_kind: str,
    dropout_rate: float,
    seed: int,
    with_shortcut: bool = True,
) -> ResSurvParams:
    """Fresh parameters: dense weights ~ uniform(-L, L) with
    L = sqrt(6 / (fan_in + fan_out)), zero biases, identity batch norms.
    Deterministic for a fixed seed (fixed traversal order).
    """
    if activation_kind not in ACTIVATION_KINDS:
        raise ValueError(f"unknown activation {activation_kind!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must lie in [0, 1)")
    if not block_widths or any(w < 1 for w in block_widths) or n_features < 1:
        raise ValueError("widths and feature count must be positive")
    if dense_layers_per_block < 1:
        raise ValueError("need at least one dense layer per block")

    rng = np.random.default_rng(seed)

    def glorot(out_dim: int, in_dim: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-limit, limit, size=(out_dim, in_dim))

    blocks = []
    in_dim = n_features
    for width in block_widths:
        dense_layers = []
        batch_norms = []
        layer_in = in_dim
        for _ in range(dense_layers_per_block):
            dense_layers.append(DenseLayerParams(glorot(width, layer_in), np.zeros(width)))
            batch_norms.append(BatchNormParams.identity(width))
            layer_in = width
        shortcut = DenseLayerParams(glorot(width, in_dim), None) if with_shortcut else None
        blocks.append(ResBlockParams(dense_layers, batch_norms, shortcut))
        in_dim = width
    head = DenseLayerParams(glorot(1, in_dim), np.zeros(1))
    return ResSurvParams(blocks, head, activation_kind, dropout_rate)


# ---------------------------------------------------------------------------
# Flat parameter view (learnable tensors only; running stats excluded)
# ---------------------------------------------------------------------------

def _learnable_tensors(params: ResSurvParams):
    """Fixed traversal: per block, per layer W, b, gamma, beta; then the
    shortcut W; finally head W, head b. Decay flag marks weight matrices."""
    for bi, block in enumerate(params.blocks):
        for li, (dense, bn) in enumerate(zip(block.dense_layers, block.batch_norms)):
            yield f"block{bi}.layer{li}.W", dense.W, True
            yield f"block{bi}.layer{li}.b", dense.b, False
            yield f"block{bi}.layer{li}.bn.gamma", bn.gamma, False
            yield f"block{bi}.layer{li}.bn.beta", bn.beta_shift, False
        if block.shortcut is not None:
            yield f"block{bi}.shortcut.W", block.shortcut.W, True
    yield "head.W", params.output_head.W, True
    yield "head.b", params.output_head.b, False


def to_flat(params: ResSurvParams) -> np.ndarray:
    """All learnable tensors concatenated in the documented traversal order."""
    return np.concatenate([arr.ravel() for _, arr, _ in _learnable_tensors(params)])


def set_flat(params: ResSurvParams, flat: np.ndarray) -> None:
    """Write a flat vector back into the parameter tensors, in place."""
    flat = np.asarray(flat, dtype=np.float64).ravel()
    pos = 0
    for _, arr, _ in _learnable_tensors(params):
        size = arr.size
        arr[...] = flat[pos : pos + size].reshape(arr.shape)
        pos += size
    if pos != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")


def flat_layout(params: ResSurvParams) -> list[tuple[str, slice, tuple]]:
    """(name, slice into the flat vector, shape) for every learnable tensor."""
    layout = []
    pos = 0
    for name, arr, _ in _learnable_tensors(params):
        layout.append((name, slice(pos, pos + arr.size), arr.shape))
        pos += arr.size
    return layout


def decay_mask(params: ResSurvParams) -> np.ndarray:
    """True on dense-layer and shortcut weight-matrix entries; biases and
    batch-norm scale/shift are never penalized."""
    parts = [
        np.full(arr.size, decayed, dtype=bool)
        for _, arr, decayed in _learnable_tensors(params)
    ]
    return np.concatenate(parts)


def n_params(params: ResSurvParams) -> int:
    return sum(arr.size for _, arr, _ in _learnable_tensors(params))


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def activation_forward(z: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise nonlinearity. Returns (output, cache for backward)."""
    if kind == "tanh":
        out = np.tanh(z)
        return out, out
    if kind == "relu":
        return np.maximum(z, 0.0), z
    if kind == "selu":
        out = SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(z))
        return out, z
    if kind == "linear":
        return z, z
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(grad_out: np.ndarray, cache: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return grad_out * (1.0 - cache * cache)
    if kind == "relu":
        return grad_out * (cache > 0)
    if kind == "selu":
        return grad_out * (SELU_SCALE * np.where(cache > 0, 1.0, SELU_ALPHA * np.exp(cache)))
    if kind == "linear":
        return grad_out
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def batchnorm_forward(
    inputs: np.ndarray,
    params: BatchNormParams,
    mode: str,
    update_running: bool = True,
) -> tuple[np.ndarray, BatchNormCache | None]:
    """Normalize each feature across the batch (train) or by running
    statistics (eval); then scale by gamma and shift by beta.

    Train mode uses the population (divide-by-n) batch variance and needs a
    batch of at least 2 samples.
    """
    if mode == "train":
        n = inputs.shape[0]
        if n < 2:
            raise ValueError("train-mode batch normalization needs a batch of >= 2")
        mean = inputs.mean(axis=0)
        var = inputs.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + params.epsilon)
        xhat = (inputs - mean) * inv_std
        if update_running:
            if params.n_updates == 0:
                params.running_mean[...] = mean
                params.running_var[...] = var
            else:
                m = params.momentum
                params.running_mean[...] = (1.0 - m) * params.running_mean + m * mean
                params.running_var[...] = (1.0 - m) * params.running_var + m * var
            params.n_updates += 1
        out = params.gamma * xhat + params.beta_shift
        return out, BatchNormCache(xhat, inv_std, params.gamma)
    if mode == "eval":
        inv_std = 1.0 / np.sqrt(params.running_var + params.epsilon)
        out = params.gamma * (inputs - params.running_mean) * inv_std + params.beta_shift
        return out, None
    raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")


def batchnorm_backward(
    grad_out: np.ndarray, cache: BatchNormCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients through the batch statistics (mean and variance both
    depend on the inputs). Returns (grad_inputs, grad_gamma, grad_beta)."""
    n = grad_out.shape[0]
    grad_gamma = (grad_out * cache.xhat).sum(axis=0)
    grad_beta = grad_out.sum(axis=0)
    grad_xhat = grad_out * cache.gamma
    grad_in = (cache.inv_std / n) * (
        n * grad_xhat
        - grad_xhat.sum(axis=0)
        - cache.xhat * (grad_xhat * cache.xhat).sum(axis=0)
    )
    return grad_in, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------

class DropoutStream:
    """Counter-based deterministic dropout masks.

    Masks are keyed by (seed, epoch, block, layer), so re-running a forward
    pass for the same epoch reproduces them exactly, so training runs are
    reproducible and gradient checks see frozen masks for free.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def mask(self, shape, rate: float, epoch: int, block: int, layer: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, int(epoch), int(block), int(layer)])
        )
        keep = rng.random(shape) >= rate
        return keep / (1.0 - rate)


def dropout_forward(
    activations: np.ndarray, rate: float, mode: str, mask: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: zero units with probability `rate` and scale
    survivors by 1/(1-rate) in train mode; identity in eval mode or at rate 0."""
    if mode == "eval" or rate == 0.0:
        return activations, None
    if mask is None:
        raise ValueError("train-mode dropout at rate > 0 requires a mask")
    return activations * mask, mask


# ---------------------------------------------------------------------------
# Residual block
# ---------------------------------------------------------------------------

@dataclass
class LayerCache:
    a_in: np.ndarray
    bn: BatchNormCache
    act: np.ndarray
    mask: np.ndarray | None


@dataclass
class BlockCache:
    x: np.ndarray
    layers: list[LayerCache]


def resblock_forward(
    x: np.ndarray,
    block: ResBlockParams,
    activation_kind: str,
    dropout_rate: float,
    mode: str,
    stream: DropoutStream | None = None,
    epoch: int = 0,
    block_idx: int = 0,
    update_running: bool = True,
) -> tuple[np.ndarray, BlockCache | None]:
    """y = F(x) + W_s x, with F = [dense -> batch norm -> activation ->
    dropout] per dense layer. Returns a cache only in train mode."""
    train = mode == "train"
    layer_caches: list[LayerCache] = []
    a = x
    for li, (dense, bn) in enumerate(zip(block.dense_layers, block.batch_norms)):
        z = a @ dense.W.T + dense.b
        bn_out, bn_cache = batchnorm_forward(z, bn, mode, update_running)
        act_out, act_cache = activation_forward(bn_out, activation_kind)
        mask = None
        if train and dropout_rate > 0.0:
            if stream is None:
                raise ValueError("train-mode dropout requires a DropoutStream")
            mask = stream.mask(act_out.shape, dropout_rate, epoch, block_idx, li)
        dropped, mask = dropout_forward(act_out, dropout_rate, mode, mask)
        if train:
            layer_caches.append(LayerCache(a, bn_cache, act_cache, mask))
        a = dropped
    y = a if block.shortcut is None else a + x @ block.shortcut.W.T
    return y, (BlockCache(x, layer_caches) if train else None)


def resblock_backward(
    grad_y: np.ndarray,
    block: ResBlockParams,
    cache: BlockCache,
    activation_kind: str,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backward through one block: the main-channel chain plus the shortcut
    term W_s^T grad_y. Returns (grad_x, per-tensor gradients keyed like the
    flat layout names but block-local: 'layer0.W', ..., 'shortcut.W')."""
    grads: dict[str, np.ndarray] = {}
    grad = grad_y
    for li in range(len(block.dense_layers) - 1, -1, -1):
        dense = block.dense_layers[li]
        lc = cache.layers[li]
        if lc.mask is not None:
            grad = grad * lc.mask
        grad = activation_backward(grad, lc.act, activation_kind)
        grad, g_gamma, g_beta = batchnorm_backward(grad, lc.bn)
        grads[f"layer{li}.bn.gamma"] = g_gamma
        grads[f"layer{li}.bn.beta"] = g_beta
        grads[f"layer{li}.W"] = grad.T @ lc.a_in
        grads[f"layer{li}.b"] = grad.sum(axis=0)
        grad = grad @ dense.W
    grad_x = grad
    if block.shortcut is not None:
        grads["shortcut.W"] = grad_y.T @ cache.x
        grad_x = grad_x + grad_y @ block.shortcut.W
    return grad_x, grads


# ---------------------------------------------------------------------------
# Whole network
# ---------------------------------------------------------------------------

@dataclass
class ModelCache:
    blocks: list[BlockCache]
    head_in: np.ndarray


def model_forward(
    X: np.ndarray,
    params: ResSurvParams,
    mode: str = "eval",
    stream: DropoutStream | None = None,
    epoch: int = 0,
    update_running: bool | None = None,
) -> tuple[np.ndarray, ModelCache | None]:
    """Risk scores h(x), one scalar per input row.

    Eval mode uses running batch-norm statistics and disables dropout, so
    predictions are deterministic and independent of batch composition.
    Train mode returns the cache the backward pass needs.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ValueError(
            f"input of shape {X.shape} does not match model input dim {params.in_dim}"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if update_running is None:
        update_running = mode == "train"

    train = mode == "train"
    block_caches: list[BlockCache] = []
    a = X
    for bi, block in enumerate(params.blocks):
        a, bc = resblock_forward(
            a, block, params.activation_kind, params.dropout_rate,
            mode, stream, epoch, bi, update_running,
        )
        if train:
            block_caches.append(bc)
    head = params.output_head
    h = (a @ head.W.T + head.b).ravel()
    return h, (ModelCache(block_caches, a) if train else None)


def model_backward(
    grad_h: np.ndarray, params: ResSurvParams, cache: ModelCache
) -> np.ndarray:
    """Exact chain rule from per-sample score gradients down to every
    learnable tensor; returns the gradient in flat-view layout."""
    grad_h = np.asarray(grad_h, dtype=np.float64).reshape(-1, 1)
    head = params.output_head
    grads: dict[str, np.ndarray] = {
        "head.W": grad_h.T @ cache.head_in,
        "head.b": grad_h.sum(axis=0),
    }
    grad = grad_h @ head.W
    for bi in range(len(params.blocks) - 1, -1, -1):
        grad, block_grads = resblock_backward(
            grad, params.blocks[bi], cache.blocks[bi], params.activation_kind
        )
        for key, value in block_grads.items():
            grads[f"block{bi}.{key}"] = value
    return np.concatenate(
        [grads[name].ravel() for name, _, _ in _learnable_tensors(params)]
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _all_named_arrays(params: ResSurvParams):
    """Learnables plus batch-norm running statistics, in traversal order."""
    for bi, block in enumerate(params.blocks):
        for li, (dense, bn) in enumerate(zip(block.dense_layers, block.batch_norms)):
            yield f"block{bi}.layer{li}.W", dense.W
            yield f"block{bi}.layer{li}.b", dense.b
            yield f"block{bi}.layer{li}.bn.gamma", bn.gamma
            yield f"block{bi}.layer{li}.bn.beta", bn.beta_shift
            yield f"block{bi}.layer{li}.bn.running_mean", bn.running_mean
            yield f"block{bi}.layer{li}.bn.running_var", bn.running_var
        if block.shortcut is not None:
            yield f"block{bi}.shortcut.W", block.shortcut.W
    yield "head.W", params.output_head.W
    yield "head.b", params.output_head.b


def save_checkpoint(
    path,
    params: ResSurvParams,
    standardization: StandardizationParams | None = None,
    extra: dict | None = None,
) -> None:
    """Write a single self-describing checkpoint file.

    The format is deliberately bespoke: a magic line, a JSON header (layout,
    batch-norm state, the standardization applied at training time, an array
    manifest), then the raw row-major float64 little-endian tensor data.
    Unlike a zip-based container it embeds no timestamps, so identical state
    produces identical bytes.
    """
    arrays = list(_all_named_arrays(params))
    header = {
        "format": CHECKPOINT_FORMAT,
        "activation_kind": params.activation_kind,
        "dropout_rate": params.dropout_rate,
        "n_features": params.in_dim,
        "block_widths": [b.out_dim for b in params.blocks],
        "dense_layers_per_block": len(params.blocks[0].dense_layers),
        "with_shortcut": params.blocks[0].shortcut is not None,
        "batch_norm": [
            {
                "block": bi,
                "layer": li,
                "epsilon": bn.epsilon,
                "momentum": bn.momentum,
                "n_updates": bn.n_updates,
            }
            for bi, block in enumerate(params.blocks)
            for li, bn in enumerate(block.batch_norms)
        ],
        "standardization": (
            None
            if standardization is None
            else {
                "means": standardization.means.tolist(),
                "stddevs": standardization.stddevs.tolist(),
            }
        ),
        "extra": extra,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(
    path,
) -> tuple[ResSurvParams, StandardizationParams | None, dict | None]:
    """Read a checkpoint written by `save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported format {header.get('format')!r}")
        params = init_params(
            n_features=header["n_features"],
            block_widths=header["block_widths"],
            dense_layers_per_block=header["dense_layers_per_block"],
            activation_kind=header["activation_kind"],
            dropout_rate=header["dropout_rate"],
            seed=0,
            with_shortcut=header["with_shortcut"],
        )
        by_name = dict(_all_named_arrays(params))
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            arr = np.frombuffer(raw, dtype="<f8").reshape(shape)
            target = by_name.get(entry["name"])
            if target is None or target.shape != arr.shape:
                raise ValueError(f"{path}: unexpected array {entry['name']!r}")
            target[...] = arr
    for meta in header["batch_norm"]:
        bn = params.blocks[meta["block"]].batch_norms[meta["layer"]]
        bn.epsilon = meta["epsilon"]
        bn.momentum = meta["momentum"]
        bn.n_updates = meta["n_updates"]
    std = None
    if header["standardization"] is not None:
        std = StandardizationParams(
            np.array(header["standardization"]["means"]),
            np.array(header["standardization"]["stddevs"]),
        )
    return params, std, header.get("extra")
