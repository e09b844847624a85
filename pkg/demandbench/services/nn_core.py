"""
Reverse-mode kernel for the two-stage structural network.

Only the two fixed topologies are supported: embedding lookups feeding a stack
of dense layers (F_emb), whose output is concatenated with numeric inputs and
fed to a second stack with batch normalization (F_FC).
"""
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from demandbench.services.errors import DimensionError, InputError, TapeMismatchError


SCHEMA_VERSION = 1
BN_EPS = 1e-5
INIT_GAIN = math.sqrt(6.0)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class DenseSpec:
    """One dense layer: linear map, optional batch norm, optional ReLU, optional dropout."""
    n_in: int
    n_out: int
    activation: bool = True
    dropout: float = 0.0
    batch_norm: bool = False


@dataclass(frozen=True)
class NetworkArch:
    """Shapes of both subnetworks."""
    vocab_sizes: tuple[int, ...]
    embedding_dim: int
    n_numeric: int
    emb_layers: tuple[DenseSpec, ...]
    fc_layers: tuple[DenseSpec, ...]
    bn_momentum: float = 0.1

    @property
    def lookup_width(self) -> int:
        return len(self.vocab_sizes) * self.embedding_dim

    @property
    def embedding_width(self) -> int:
        return self.emb_layers[-1].n_out

    @property
    def output_width(self) -> int:
        return self.fc_layers[-1].n_out

    def validate(self, embedding_width: int = 64, output_width: int = 2) -> None:
        """
        Check that widths chain and both heads end at the required widths.

        Raises:
            DimensionError: If any width is inconsistent
        """
        if not self.vocab_sizes or min(self.vocab_sizes) < 1:
            raise DimensionError("every categorical field needs a vocabulary of size >= 1")
        expected = self.lookup_width
        for name, layers in (("F_emb", self.emb_layers), ("F_FC", self.fc_layers)):
            if not layers:
                raise DimensionError(f"{name} has no layers")
            for i, spec in enumerate(layers):
                if spec.n_in != expected:
                    raise DimensionError(f"{name} layer {i} expects width {spec.n_in}, receives {expected}")
                expected = spec.n_out
            if name == "F_emb":
                if expected != embedding_width:
                    raise DimensionError(f"F_emb must end at width {embedding_width}, ends at {expected}")
                expected = embedding_width + self.n_numeric
        if expected != output_width:
            raise DimensionError(f"F_FC must end at width {output_width}, ends at {expected}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "vocab_sizes": list(self.vocab_sizes),
            "embedding_dim": self.embedding_dim,
            "n_numeric": self.n_numeric,
            "emb_layers": [spec.__dict__ for spec in self.emb_layers],
            "fc_layers": [spec.__dict__ for spec in self.fc_layers],
            "bn_momentum": self.bn_momentum,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NetworkArch":
        return cls(
            vocab_sizes=tuple(data["vocab_sizes"]),
            embedding_dim=data["embedding_dim"],
            n_numeric=data["n_numeric"],
            emb_layers=tuple(DenseSpec(**spec) for spec in data["emb_layers"]),
            fc_layers=tuple(DenseSpec(**spec) for spec in data["fc_layers"]),
            bn_momentum=data["bn_momentum"],
        )


@dataclass
class NetworkParams:
    """Trainable tensors plus batch-norm running statistics."""
    arch: NetworkArch
    tensors: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
        )


@dataclass
class OptimizerState:
    """Adam moments, step counter and step-decay schedule."""
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    base_lr: float
    steps_per_epoch: int
    decay: float = 0.5


@dataclass
class Batch:
    """Network inputs for a set of rows. Prices are carried for the loss only."""
    categorical: np.ndarray
    numeric: np.ndarray
    prices: np.ndarray
    quantities: np.ndarray

    def __post_init__(self):
        self.categorical = np.asarray(self.categorical, dtype=np.int64)
        self.numeric = np.asarray(self.numeric, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        self.quantities = np.asarray(self.quantities, dtype=float)
        if self.categorical.ndim == 1:
            self.categorical = self.categorical[:, None]
        if self.numeric.ndim == 1:
            self.numeric = self.numeric[:, None]
        n = self.categorical.shape[0]
        sizes = {self.numeric.shape[0], self.prices.shape[0], self.quantities.shape[0]}
        if sizes != {n}:
            raise DimensionError(f"batch row counts differ: {sorted(sizes | {n})}")

    def __len__(self) -> int:
        return self.categorical.shape[0]

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(
            categorical=self.categorical[rows],
            numeric=self.numeric[rows],
            prices=self.prices[rows],
            quantities=self.quantities[rows],
        )


@dataclass
class Tape:
    """Intermediates recorded by forward for backward."""
    params: NetworkParams
    categorical: np.ndarray
    emb_records: list[dict[str, Any]]
    fc_records: list[dict[str, Any]]
    output_shape: tuple[int, int]


def _dense_names(prefix: str) -> dict[str, str]:
    return {
        "W": f"{prefix}.W",
        "b": f"{prefix}.b",
        "gamma": f"{prefix}.gamma",
        "beta": f"{prefix}.beta",
        "mean": f"{prefix}.running_mean",
        "var": f"{prefix}.running_var",
    }


def _layers(arch: NetworkArch):
    for i, spec in enumerate(arch.emb_layers):
        yield f"emb.dense{i}", spec
    for i, spec in enumerate(arch.fc_layers):
        yield f"fc.dense{i}", spec


def init_params(arch: NetworkArch, seed: int) -> NetworkParams:
    """
    Initialize weights uniformly within +-sqrt(6 / fan_in), biases at zero.

    Args:
        arch: Network shapes
        seed: RNG seed

    Returns:
        NetworkParams, identical for the same seed
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}

    for f, vocab in enumerate(arch.vocab_sizes):
        bound = 1.0 / math.sqrt(arch.embedding_dim)
        tensors[f"emb.table{f}"] = rng.uniform(-bound, bound, (vocab, arch.embedding_dim))

    for prefix, spec in _layers(arch):
        names = _dense_names(prefix)
        bound = INIT_GAIN * math.sqrt(1.0 / spec.n_in)
        tensors[names["W"]] = rng.uniform(-bound, bound, (spec.n_in, spec.n_out))
        tensors[names["b"]] = np.zeros(spec.n_out)
        if spec.batch_norm:
            tensors[names["gamma"]] = np.ones(spec.n_out)
            tensors[names["beta"]] = np.zeros(spec.n_out)
            buffers[names["mean"]] = np.zeros(spec.n_out)
            buffers[names["var"]] = np.ones(spec.n_out)

    return NetworkParams(arch=arch, tensors=tensors, buffers=buffers)


def _dense_forward(
    params: NetworkParams,
    prefix: str,
    spec: DenseSpec,
    x: np.ndarray,
    train: bool,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, dict[str, Any]]:
    names = _dense_names(prefix)
    z = x @ params.tensors[names["W"]] + params.tensors[names["b"]]
    cache: dict[str, Any] = {"prefix": prefix, "spec": spec, "x": x}
    h = z

    if spec.batch_norm:
        n = z.shape[0]
        use_batch = train and n > 1
        if use_batch:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            momentum = params.arch.bn_momentum
            params.buffers[names["mean"]] = (1 - momentum) * params.buffers[names["mean"]] + momentum * mean
            params.buffers[names["var"]] = (
                (1 - momentum) * params.buffers[names["var"]] + momentum * var * n / (n - 1)
            )
        else:
            # single-row batches fall back to running statistics
            mean = params.buffers[names["mean"]]
            var = params.buffers[names["var"]]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (z - mean) * inv_std
        cache.update(xhat=xhat, inv_std=inv_std, use_batch=use_batch)
        h = params.tensors[names["gamma"]] * xhat + params.tensors[names["beta"]]

    if spec.activation:
        mask = h > 0
        h = h * mask
        cache["relu"] = mask

    if train and spec.dropout > 0:
        if rng is None:
            raise InputError("train-mode forward with dropout needs an rng")
        keep = (rng.random(h.shape) >= spec.dropout) / (1.0 - spec.dropout)
        h = h * keep
        cache["dropout"] = keep

    return h, cache


def _lookup(params: NetworkParams, categorical: np.ndarray) -> np.ndarray:
    arch = params.arch
    if categorical.shape[1] != len(arch.vocab_sizes):
        raise DimensionError(
            f"expected {len(arch.vocab_sizes)} categorical fields, got {categorical.shape[1]}"
        )
    for f, vocab in enumerate(arch.vocab_sizes):
        column = categorical[:, f]
        bad = np.flatnonzero((column < 0) | (column >= vocab))
        if bad.size:
            raise InputError(f"categorical field {f} index {column[bad[0]]} outside vocabulary {vocab}", row=int(bad[0]))
    return np.concatenate(
        [params.tensors[f"emb.table{f}"][categorical[:, f]] for f in range(categorical.shape[1])],
        axis=1,
    )


def embed(params: NetworkParams, categorical: np.ndarray) -> np.ndarray:
    """Eval-mode F_emb output for the given categorical rows."""
    categorical = np.asarray(categorical, dtype=np.int64)
    if categorical.ndim == 1:
        categorical = categorical[:, None]
    h = _lookup(params, categorical)
    for i, spec in enumerate(params.arch.emb_layers):
        h, _ = _dense_forward(params, f"emb.dense{i}", spec, h, False, None)
    return h


def forward(
    params: NetworkParams,
    batch: Batch,
    mode: Literal["train", "eval"] = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, Tape]:
    """
    Predict theta = (alpha, beta) per row. The price column is never read.

    Args:
        params: Network parameters (train mode updates batch-norm running statistics)
        batch: Inputs
        mode: 'train' applies dropout and batch statistics; 'eval' is deterministic
        rng: Dropout randomness, required in train mode

    Returns:
        (theta of shape (N, 2), tape)

    Raises:
        InputError: If a categorical index is outside its vocabulary
    """
    arch = params.arch
    train = mode == "train"
    if batch.numeric.shape[1] != arch.n_numeric:
        raise DimensionError(f"expected {arch.n_numeric} numeric columns, got {batch.numeric.shape[1]}")

    h = _lookup(params, batch.categorical)
    emb_records = []
    for i, spec in enumerate(arch.emb_layers):
        h, cache = _dense_forward(params, f"emb.dense{i}", spec, h, train, rng)
        emb_records.append(cache)

    h = np.concatenate([h, batch.numeric], axis=1)
    fc_records = []
    for i, spec in enumerate(arch.fc_layers):
        h, cache = _dense_forward(params, f"fc.dense{i}", spec, h, train, rng)
        fc_records.append(cache)

    tape = Tape(
        params=params,
        categorical=batch.categorical,
        emb_records=emb_records,
        fc_records=fc_records,
        output_shape=h.shape,
    )
    return h, tape


def structural_loss(theta: np.ndarray, prices: np.ndarray, quantities: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Mean squared error of the linear demand head alpha + beta * P against q.

    Returns:
        (loss, gradient with respect to theta, shape (N, 2))
    """
    theta = np.asarray(theta, dtype=float)
    prices = np.asarray(prices, dtype=float)
    quantities = np.asarray(quantities, dtype=float)
    if not theta.shape[0] == prices.shape[0] == quantities.shape[0]:
        raise DimensionError("theta, prices and quantities need the same row count")
    n = theta.shape[0]
    residual = theta[:, 0] + theta[:, 1] * prices - quantities
    loss = float(np.mean(residual ** 2))
    scale = 2.0 * residual / n
    grad = np.column_stack([scale, scale * prices])
    return loss, grad


def _dense_backward(
    params: NetworkParams,
    cache: dict[str, Any],
    g: np.ndarray,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    spec: DenseSpec = cache["spec"]
    names = _dense_names(cache["prefix"])

    if "dropout" in cache:
        g = g * cache["dropout"]
    if "relu" in cache:
        g = g * cache["relu"]
    if spec.batch_norm:
        xhat, inv_std = cache["xhat"], cache["inv_std"]
        grads[names["gamma"]] = (g * xhat).sum(axis=0)
        grads[names["beta"]] = g.sum(axis=0)
        dxhat = g * params.tensors[names["gamma"]]
        if cache["use_batch"]:
            n = g.shape[0]
            g = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            g = dxhat * inv_std

    grads[names["W"]] = cache["x"].T @ g
    grads[names["b"]] = g.sum(axis=0)
    return g @ params.tensors[names["W"]].T


def backward(tape: Tape, loss_grad: np.ndarray, params: NetworkParams | None = None) -> dict[str, np.ndarray]:
    """
    Gradients of the loss for every trainable tensor.

    Embedding rows absent from the batch get exactly zero; duplicate indices sum.

    Raises:
        TapeMismatchError: If the tape belongs to other parameters or the gradient shape is wrong
    """
    if params is not None and params is not tape.params:
        raise TapeMismatchError("tape was recorded with different parameters")
    loss_grad = np.asarray(loss_grad, dtype=float)
    if loss_grad.shape != tape.output_shape:
        raise TapeMismatchError(f"loss gradient has shape {loss_grad.shape}, tape output is {tape.output_shape}")

    params = tape.params
    arch = params.arch
    grads = {name: np.zeros_like(tensor) for name, tensor in params.tensors.items()}

    g = loss_grad
    for cache in reversed(tape.fc_records):
        g = _dense_backward(params, cache, g, grads)

    g = g[:, :arch.embedding_width]
    for cache in reversed(tape.emb_records):
        g = _dense_backward(params, cache, g, grads)

    d = arch.embedding_dim
    for f in range(len(arch.vocab_sizes)):
        np.add.at(grads[f"emb.table{f}"], tape.categorical[:, f], g[:, f * d:(f + 1) * d])

    return grads


def lr_schedule(step: int, base_lr: float, steps_per_epoch: int = 1, decay: float = 0.5) -> float:
    """Step decay: base_lr * decay ** completed_epochs."""
    if step < 0:
        raise InputError(f"step must be >= 0, got {step}")
    return base_lr * decay ** (step // max(steps_per_epoch, 1))


def init_optimizer(params: NetworkParams, base_lr: float, steps_per_epoch: int, decay: float = 0.5) -> OptimizerState:
    """Zero moments for every trainable tensor."""
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.tensors.items()},
        v={k: np.zeros_like(v) for k, v in params.tensors.items()},
        step=0,
        base_lr=base_lr,
        steps_per_epoch=steps_per_epoch,
        decay=decay,
    )


def adam_step(
    params: NetworkParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
) -> tuple[NetworkParams, OptimizerState]:
    """One bias-corrected Adam update; returns new params and state."""
    lr = lr_schedule(state.step, state.base_lr, state.steps_per_epoch, state.decay)
    t = state.step + 1
    tensors = dict(params.tensors)
    m = dict(state.m)
    v = dict(state.v)

    for name, grad in grads.items():
        if grad.shape != tensors[name].shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, tensor is {tensors[name].shape}")
        m[name] = ADAM_BETA1 * state.m[name] + (1 - ADAM_BETA1) * grad
        v[name] = ADAM_BETA2 * state.v[name] + (1 - ADAM_BETA2) * grad * grad
        m_hat = m[name] / (1 - ADAM_BETA1 ** t)
        v_hat = v[name] / (1 - ADAM_BETA2 ** t)
        tensors[name] = tensors[name] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    new_params = NetworkParams(arch=params.arch, tensors=tensors, buffers=params.buffers)
    new_state = OptimizerState(
        m=m,
        v=v,
        step=t,
        base_lr=state.base_lr,
        steps_per_epoch=state.steps_per_epoch,
        decay=state.decay,
    )
    return new_params, new_state


def encode_tensor(array: np.ndarray) -> dict[str, Any]:
    """Row-major tensor with its shape; floats as hex strings so the round trip is exact."""
    array = np.asarray(array, dtype=float)
    return {"shape": list(array.shape), "data": [float(x).hex() for x in array.ravel()]}


def decode_tensor(payload: dict[str, Any]) -> np.ndarray:
    data = np.array([float.fromhex(x) for x in payload["data"]], dtype=float)
    return data.reshape(payload["shape"])


def network_to_dict(params: NetworkParams, state: OptimizerState | None = None) -> dict[str, Any]:
    """Versioned structured form of arch, tensors, buffers and optimizer state."""
    payload: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "arch": params.arch.to_dict(),
        "tensors": {k: encode_tensor(v) for k, v in sorted(params.tensors.items())},
        "buffers": {k: encode_tensor(v) for k, v in sorted(params.buffers.items())},
        "optimizer": None,
    }
    if state is not None:
        payload["optimizer"] = {
            "step": state.step,
            "base_lr": float(state.base_lr).hex(),
            "steps_per_epoch": state.steps_per_epoch,
            "decay": float(state.decay).hex(),
            "m": {k: encode_tensor(v) for k, v in sorted(state.m.items())},
            "v": {k: encode_tensor(v) for k, v in sorted(state.v.items())},
        }
    return payload


def network_from_dict(payload: dict[str, Any]) -> tuple[NetworkParams, OptimizerState | None]:
    """
    Inverse of network_to_dict.

    Raises:
        InputError: If the schema version is unknown
    """
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported model schema version {payload.get('schema_version')}")
    arch = NetworkArch.from_dict(payload["arch"])
    params = NetworkParams(
        arch=arch,
        tensors={k: decode_tensor(v) for k, v in payload["tensors"].items()},
        buffers={k: decode_tensor(v) for k, v in payload["buffers"].items()},
    )
    state = None
    if payload.get("optimizer"):
        opt = payload["optimizer"]
        state = OptimizerState(
            m={k: decode_tensor(v) for k, v in opt["m"].items()},
            v={k: decode_tensor(v) for k, v in opt["v"].items()},
            step=opt["step"],
            base_lr=float.fromhex(opt["base_lr"]),
            steps_per_epoch=opt["steps_per_epoch"],
            decay=float.fromhex(opt["decay"]),
        )
    return params, state
