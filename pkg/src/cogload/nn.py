"""Multitask feed-forward network written directly in numpy.

Shared trunk of leaky-ReLU dense layers with inverted dropout, two
single-unit sigmoid heads (expertise, high cognitive load), summed binary
cross-entropy plus an L2 penalty on weights, trained with Adam.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataValidationError, NumericalError

PROB_EPS = 1e-7
HEADS = ("expert", "high_load")
INIT_SCHEMES = {
    "glorot_uniform": lambda fan_in, fan_out: np.sqrt(6.0 / (fan_in + fan_out)),
    "he_uniform": lambda fan_in, fan_out: np.sqrt(6.0 / fan_in),
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 20
    hidden_sizes: tuple[int, ...] = (64, 64, 64, 128, 128, 128, 256)
    leaky_slope: float = 0.01
    dropout_rate: float = 0.5
    l2_coeff: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 400
    seed: int = 0
    init_scheme: str = "glorot_uniform"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("layer sizes must be positive and at least one hidden layer is required")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_coeff < 0:
            raise ConfigError("l2_coeff must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {sorted(INIT_SCHEMES)}, got {self.init_scheme!r}")

    @property
    def shape_chain(self) -> list[tuple[int, int]]:
        sizes = (self.input_dim, *self.hidden_sizes)
        trunk = list(zip(sizes[:-1], sizes[1:]))
        return trunk + [(sizes[-1], 1)] * len(HEADS)


@dataclass(eq=False)
class NetworkParams:
    """Weights and biases for the trunk layers followed by the two heads.

    ``input_mean`` / ``input_scale`` standardise raw features before the first
    layer; they are fitted on the training set and are not trainable.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_mean: np.ndarray
    input_scale: np.ndarray

    @property
    def n_trunk(self) -> int:
        return len(self.weights) - len(HEADS)

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def with_arrays(self, arrays: list[np.ndarray]) -> "NetworkParams":
        n = len(self.weights)
        return NetworkParams(list(arrays[:n]), list(arrays[n:]), self.input_mean, self.input_scale)

    def shape_chain(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def equals(self, other: "NetworkParams") -> bool:
        mine, theirs = self.arrays(), other.arrays()
        return (
            len(mine) == len(theirs)
            and all(np.array_equal(a, b) for a, b in zip(mine, theirs))
            and np.array_equal(self.input_mean, other.input_mean)
            and np.array_equal(self.input_scale, other.input_scale)
        )


@dataclass(frozen=True)
class LossBreakdown:
    l_expertise: float
    l_cognitive_load: float
    l_total: float
    l2_penalty: float


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


@dataclass(eq=False)
class ForwardCache:
    params: NetworkParams
    inputs: list[np.ndarray]  # input to each trunk layer, post-standardisation for layer 0
    pre_activations: list[np.ndarray]
    masks: list[np.ndarray | None]
    head_input: np.ndarray
    probs: np.ndarray
    leaky_slope: float


@dataclass
class TrainResult:
    params: NetworkParams
    loss_curves: dict[str, list[float]] = field(default_factory=dict)


def init_network(config: NetworkConfig, seed: int | None = None) -> NetworkParams:
    """Uniform weights with the configured bound, zero biases.

    ``glorot_uniform`` uses ``sqrt(6/(fan_in+fan_out))``; ``he_uniform`` uses
    ``sqrt(6/fan_in)``, which saturates the heads in training mode once seven
    layers of 0.5 inverted dropout compound.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed).spawn(1)[0])
    weights, biases = [], []
    for fan_in, fan_out in config.shape_chain:
        bound = INIT_SCHEMES[config.init_scheme](fan_in, fan_out)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases, np.zeros(config.input_dim), np.ones(config.input_dim))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _mask_rng(mask_seed) -> np.random.Generator:
    if isinstance(mask_seed, np.random.Generator):
        return mask_seed
    return np.random.default_rng(mask_seed)


def forward(
    params: NetworkParams,
    batch,
    mode: str = "eval",
    mask_seed: int | np.random.Generator | None = None,
    dropout_rate: float = 0.5,
    leaky_slope: float = 0.01,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network; returns an ``(N, 2)`` array of (p_expert, p_high_load).

    In ``"train"`` mode every trunk activation gets inverted dropout drawn
    from ``mask_seed``; ``"eval"`` mode is deterministic with no rescaling.
    Probabilities are clipped to ``[1e-7, 1 - 1e-7]``.
    """
    if mode not in ("train", "eval"):
        raise DataValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.atleast_2d(np.asarray(batch, dtype=float))
    if x.shape[1] != params.weights[0].shape[0]:
        raise DataValidationError(f"batch has {x.shape[1]} columns, network expects {params.weights[0].shape[0]}")
    a = (x - params.input_mean) / params.input_scale
    drop = mode == "train" and dropout_rate > 0
    rng = _mask_rng(mask_seed) if drop else None
    inputs, pre, masks = [], [], []
    for w, b in zip(params.weights[: params.n_trunk], params.biases[: params.n_trunk]):
        inputs.append(a)
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, leaky_slope * z) if leaky_slope <= 1 else np.where(z > 0, z, leaky_slope * z)
        if drop:
            mask = (rng.random(z.shape) >= dropout_rate) / (1.0 - dropout_rate)
            a = a * mask
        else:
            mask = None
        masks.append(mask)
    logits = np.hstack([a @ w + b for w, b in zip(params.weights[params.n_trunk:], params.biases[params.n_trunk:])])
    probs = np.clip(_sigmoid(logits), PROB_EPS, 1 - PROB_EPS)
    return probs, ForwardCache(params, inputs, pre, masks, a, probs, leaky_slope)


def l2_penalty(params: NetworkParams, l2_coeff: float) -> float:
    if l2_coeff == 0:
        return 0.0
    return l2_coeff * float(sum(np.vdot(w, w) for w in params.weights))


def loss(probs, labels, params: NetworkParams | None = None, l2_coeff: float = 0.0) -> LossBreakdown:
    """Mean binary cross-entropy per head, their sum, plus ``l2_coeff * sum(W**2)``."""
    p = np.clip(np.atleast_2d(np.asarray(probs, dtype=float)), PROB_EPS, 1 - PROB_EPS)
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    if p.shape != y.shape or p.shape[1] != len(HEADS):
        raise DataValidationError(f"probabilities {p.shape} and labels {y.shape} do not align")
    bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p), axis=0)
    penalty = l2_penalty(params, l2_coeff) if params is not None else 0.0
    le, lc = float(bce[0]), float(bce[1])
    return LossBreakdown(le, lc, le + lc + penalty, penalty)


def backward(cache: ForwardCache, labels, l2_coeff: float = 0.0) -> NetworkParams:
    """Exact gradients of the total loss for the batch that produced ``cache``."""
    params = cache.params
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    if y.shape != cache.probs.shape:
        raise DataValidationError(f"labels {y.shape} do not match cached batch {cache.probs.shape}")
    n = y.shape[0]
    dlogits = (cache.probs - y) / n
    nt = params.n_trunk
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    da = np.zeros_like(cache.head_input)
    for k, head in enumerate(range(nt, len(params.weights))):
        g = dlogits[:, k : k + 1]
        gw[head] = cache.head_input.T @ g
        gb[head] = g.sum(axis=0)
        da += g @ params.weights[head].T
    for layer in reversed(range(nt)):
        if cache.masks[layer] is not None:
            da = da * cache.masks[layer]
        z = cache.pre_activations[layer]
        dz = da * np.where(z > 0, 1.0, cache.leaky_slope)
        gw[layer] = cache.inputs[layer].T @ dz
        gb[layer] = dz.sum(axis=0)
        if layer:
            da = dz @ params.weights[layer].T
    if l2_coeff:
        gw = [g + 2.0 * l2_coeff * w for g, w in zip(gw, params.weights)]
    return NetworkParams(gw, gb, params.input_mean, params.input_scale)


def _adam_inplace(params: list[np.ndarray], grads: list[np.ndarray], m: list[np.ndarray],
                  v: list[np.ndarray], t: int, lr: float, beta1: float, beta2: float, eps: float) -> None:
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    for p, g, mk, vk in zip(params, grads, m, v):
        mk *= beta1
        mk += (1 - beta1) * g
        vk *= beta2
        vk += (1 - beta2) * (g * g)
        p -= lr * (mk / c1) / (np.sqrt(vk / c2) + eps)


def adam_step(
    params: NetworkParams,
    grads: NetworkParams,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise DataValidationError("gradient shapes do not match parameter shapes")
    if len(state.m) != len(p_arrays) or any(p.shape != m.shape for p, m in zip(p_arrays, state.m)):
        raise DataValidationError("optimizer state shapes do not match parameter shapes")
    new_p = [p.copy() for p in p_arrays]
    new_m = [m.copy() for m in state.m]
    new_v = [v.copy() for v in state.v]
    _adam_inplace(new_p, g_arrays, new_m, new_v, state.t + 1, lr, beta1, beta2, eps)
    return params.with_arrays(new_p), AdamState(new_m, new_v, state.t + 1)


def _standardiser(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    return mean, np.where(scale > 1e-12, scale, 1.0)


def train(features, labels, config: NetworkConfig, standardize: bool = True) -> TrainResult:
    """Mini-batch Adam training for ``config.epochs`` epochs.

    ``features`` is ``(N, input_dim)``; ``labels`` is ``(N, 2)`` with columns
    (expert, high_load).  Initialisation, per-epoch shuffling and dropout
    masks are all derived from ``config.seed``.  The recorded curves are the
    size-weighted mean training-mode losses of each epoch.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise DataValidationError("training set is empty")
    if y.shape != (len(x), len(HEADS)):
        raise DataValidationError(f"labels must have shape ({len(x)}, {len(HEADS)}), got {y.shape}")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataValidationError("labels must be 0/1")
    if not np.all(np.isfinite(x)):
        raise DataValidationError("training features must be finite")

    _, shuffle_seq, mask_seq = np.random.SeedSequence(config.seed).spawn(3)  # child 0 seeds init_network
    params = init_network(config)
    if standardize:
        params.input_mean, params.input_scale = _standardiser(x)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    mask_rng = np.random.default_rng(mask_seq)
    state = AdamState.zeros_like(params)
    curves = {"l_expertise": [], "l_cognitive_load": [], "l_total": []}
    n = len(x)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            probs, cache = forward(params, x[idx], "train", mask_rng, config.dropout_rate, config.leaky_slope)
            lb = loss(probs, y[idx], params, config.l2_coeff)
            if not np.isfinite(lb.l_total):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            sums += len(idx) * np.array([lb.l_expertise, lb.l_cognitive_load, lb.l_total])
            grads = backward(cache, y[idx], config.l2_coeff)
            state.t += 1
            _adam_inplace(params.arrays(), grads.arrays(), state.m, state.v, state.t,
                          config.learning_rate, 0.9, 0.999, 1e-8)
        for key, value in zip(curves, sums / n):
            curves[key].append(float(value))
    return TrainResult(params, curves)


def predict_proba(params: NetworkParams, features) -> np.ndarray:
    probs, _ = forward(params, features, "eval")
    return probs


def predict(params: NetworkParams, features, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode probabilities and ``prob >= threshold`` decisions, each ``(N, 2)``."""
    probs = predict_proba(params, features)
    return probs, (probs >= threshold).astype(int)


def save_checkpoint(path, params: NetworkParams, config: NetworkConfig) -> None:
    from .io import atomic_write_text

    payload = {
        "format": "cogload-checkpoint",
        "version": 1,
        "config": config_to_dict(config),
        "seed": config.seed,
        "layer_shapes": [list(w.shape) for w in params.weights],
        "weights": [w.ravel(order="C").tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "input_mean": params.input_mean.tolist(),
        "input_scale": params.input_scale.tolist(),
    }
    atomic_write_text(path, json.dumps(payload, indent=1))


def load_checkpoint(path) -> tuple[NetworkParams, NetworkConfig]:
    """Read a checkpoint and check its layer shapes against the echoed config."""
    try:
        payload = json.loads(Path(path).read_text())
        config = NetworkConfig(**{**payload["config"], "hidden_sizes": tuple(payload["config"]["hidden_sizes"])})
        shapes = [tuple(s) for s in payload["layer_shapes"]]
        weights = [np.array(w, dtype=float).reshape(s) for w, s in zip(payload["weights"], shapes)]
        biases = [np.array(b, dtype=float) for b in payload["biases"]]
        params = NetworkParams(weights, biases, np.array(payload["input_mean"], float),
                               np.array(payload["input_scale"], float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataValidationError(f"malformed checkpoint {path}: {exc}") from exc
    if shapes != config.shape_chain or len(weights) != len(shapes):
        raise DataValidationError(f"checkpoint layer shapes {shapes} do not match config chain {config.shape_chain}")
    if any(b.shape != (s[1],) for b, s in zip(biases, shapes)):
        raise DataValidationError("checkpoint bias shapes do not match layer shapes")
    if not all(np.all(np.isfinite(a)) for a in params.arrays()):
        raise DataValidationError("checkpoint contains non-finite parameters")
    return params, config


def config_to_dict(config: NetworkConfig) -> dict:
    d = asdict(config)
    d["hidden_sizes"] = list(config.hidden_sizes)
    return d
