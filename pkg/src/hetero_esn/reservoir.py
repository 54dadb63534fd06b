"""Fixed random reservoirs and their state-update regimes.

Four variants share one leaky-integrator update:

* ``shallow``         one reservoir driven by the input
* ``deep``            a unidirectional stack, layer i driven by layer i-1
* ``hetero_shallow``  one reservoir split into sub-groups, each reading its
                      own slice of the state from ``tau_g`` steps ago
* ``hetero_deep``     a stack where layer i reads its own state from
                      ``tau_i`` steps ago

With ``leak_on_activation=True`` (the default) the update is::

    x' = (1 - a) * x_prev + a * tanh(W_in @ drive + W @ x_prev + theta)

otherwise the activation term is not scaled by ``a``.  ``x_prev`` is the
plain previous state for the homogeneous variants and the delayed state
for the heterogeneous ones.  States before the start of a sequence are
zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, EmptyInputError, NumericalError, ShapeError
from .spectral import spectral_radius

VARIANTS = ("shallow", "deep", "hetero_shallow", "hetero_deep")
MAX_REDRAWS = 10


@dataclass(frozen=True)
class LayerConfig:
    """Hyperparameters of one reservoir layer (or of the single reservoir)."""

    size: int
    spectral_radius: float = 0.3
    leak_rate: float = 0.5
    input_scale: float = 0.1
    bias_scale: float = 0.0
    connectivity: float = 0.1
    delay: int = 0
    seed: int = 0
    leak_on_activation: bool = True

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ConfigError(f"layer size must be a positive integer, got {self.size}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ConfigError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not self.spectral_radius > 0.0:
            raise ConfigError(f"spectral_radius must be positive, got {self.spectral_radius}")
        if not 0.0 < self.connectivity <= 1.0:
            raise ConfigError(f"connectivity must lie in (0, 1], got {self.connectivity}")
        if not self.input_scale > 0.0:
            raise ConfigError(f"input_scale must be positive, got {self.input_scale}")
        if self.bias_scale < 0.0:
            raise ConfigError(f"bias_scale must be nonnegative, got {self.bias_scale}")
        if int(self.delay) != self.delay or self.delay < 0:
            raise ConfigError(f"delay must be a nonnegative integer, got {self.delay}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LayerWeights:
    """Frozen random matrices of one layer: recurrent ``W``, input ``W_in``, bias ``theta``."""

    W: sparse.csr_matrix
    W_in: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        W = sparse.csr_matrix(self.W, dtype=np.float64)
        W.sum_duplicates()
        W.sort_indices()
        for arr in (W.data, W.indices, W.indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "W_in", _freeze(np.atleast_2d(self.W_in)))
        object.__setattr__(self, "theta", _freeze(np.ravel(self.theta)))
        n = self.W.shape[0]
        if self.W.shape != (n, n):
            raise ShapeError(f"W must be square, got {self.W.shape}")
        if self.W_in.shape[0] != n:
            raise ShapeError(f"W_in has {self.W_in.shape[0]} rows, reservoir has {n} units")
        if self.theta.shape != (n,):
            raise ShapeError(f"theta has shape {self.theta.shape}, expected ({n},)")

    @property
    def size(self) -> int:
        return self.W.shape[0]

    @property
    def n_in(self) -> int:
        return self.W_in.shape[1]


@dataclass(frozen=True)
class Layer:
    config: LayerConfig
    weights: LayerWeights


@dataclass(frozen=True)
class SubGroupPartition:
    """Contiguous sub-groups of one reservoir, each with its own read delay."""

    group_sizes: tuple
    group_delays: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        delays = tuple(int(d) for d in self.group_delays)
        if len(sizes) != len(delays) or not sizes:
            raise ConfigError("group_sizes and group_delays must be non-empty and of equal length")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"group sizes must be positive, got {sizes}")
        if any(d < 0 for d in delays):
            raise ConfigError(f"group delays must be nonnegative, got {delays}")
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "group_delays", delays)

    @property
    def size(self) -> int:
        return sum(self.group_sizes)

    @property
    def max_delay(self) -> int:
        return max(self.group_delays)

    def slices(self) -> list[slice]:
        bounds = np.concatenate([[0], np.cumsum(self.group_sizes)])
        return [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]

    @classmethod
    def equal(cls, size: int, delays: Sequence[int]) -> "SubGroupPartition":
        """Split ``size`` units as evenly as possible; earlier groups get the remainder."""
        k = len(delays)
        base, extra = divmod(size, k)
        return cls(tuple(base + (i < extra) for i in range(k)), tuple(delays))


class DelayBuffer:
    """Ring buffer of the most recent ``capacity`` state vectors.

    ``read(0)`` is the newest pushed state, ``read(d)`` the one pushed
    ``d`` pushes earlier.  Reads past the stored history return zeros.
    """

    def __init__(self, size: int, capacity: int):
        if capacity < 1:
            raise ConfigError("DelayBuffer capacity must be at least 1")
        self.capacity = capacity
        self._data = np.zeros((capacity, size))
        self._head = -1
        self._count = 0

    def push(self, x: np.ndarray) -> None:
        self._head = (self._head + 1) % self.capacity
        self._data[self._head] = x
        self._count = min(self._count + 1, self.capacity)

    def read(self, delay: int) -> np.ndarray:
        if delay >= self.capacity:
            raise ConfigError(f"delay {delay} exceeds buffer capacity {self.capacity}")
        if delay >= self._count:
            return np.zeros(self._data.shape[1])
        return self._data[(self._head - delay) % self.capacity].copy()

    def clear(self) -> None:
        self._data[:] = 0.0
        self._head = -1
        self._count = 0

    def __len__(self) -> int:
        return self._count


@dataclass(frozen=True)
class ReservoirModel:
    variant: str
    layers: tuple
    partition: SubGroupPartition | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ConfigError("a reservoir model needs at least one layer")
        if self.variant in ("shallow", "hetero_shallow") and len(layers) != 1:
            raise ConfigError(f"{self.variant} models have exactly one layer")
        for i in range(1, len(layers)):
            if layers[i].weights.n_in != layers[i - 1].weights.size:
                raise ShapeError(
                    f"layer {i + 1} expects {layers[i].weights.n_in} inputs "
                    f"but layer {i} has {layers[i - 1].weights.size} units"
                )
        if self.variant == "hetero_shallow":
            if self.partition is None:
                raise ConfigError("hetero_shallow models need a SubGroupPartition")
            if self.partition.size != layers[0].weights.size:
                raise ShapeError(
                    f"partition covers {self.partition.size} units, "
                    f"reservoir has {layers[0].weights.size}"
                )
        elif self.partition is not None:
            raise ConfigError(f"{self.variant} models take no partition")

    @property
    def n_in(self) -> int:
        return self.layers[0].weights.n_in

    @property
    def state_dim(self) -> int:
        return sum(layer.weights.size for layer in self.layers)

    @property
    def layer_sizes(self) -> list[int]:
        return [layer.weights.size for layer in self.layers]


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def init_layer(config: LayerConfig, n_in: int) -> LayerWeights:
    """Draw the frozen weights of one layer; fully determined by ``config.seed``.

    ``W`` has i.i.d. entries, nonzero with probability ``connectivity`` and
    uniform on [-1, 1], then rescaled to the configured spectral radius.
    A draw whose spectral radius is zero is replaced by a fresh draw from
    the next sub-seed, at most ``MAX_REDRAWS`` times.
    """
    if n_in < 1:
        raise ConfigError(f"n_in must be at least 1, got {n_in}")
    n = config.size
    for attempt in range(MAX_REDRAWS):
        rng = _rng(config.seed, 0, attempt)
        mask = rng.random((n, n)) < config.connectivity
        rows, cols = np.nonzero(mask)
        vals = rng.uniform(-1.0, 1.0, size=rows.size)
        W = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        rho = spectral_radius(W, seed=config.seed % 2**32)
        if rho > 0.0:
            break
    else:
        raise NumericalError(
            f"recurrent matrix had zero spectral radius in {MAX_REDRAWS} draws "
            f"(size={n}, connectivity={config.connectivity})"
        )
    W = W * (config.spectral_radius / rho)
    W_in = _rng(config.seed, 1).uniform(-config.input_scale, config.input_scale, size=(n, n_in))
    theta = _rng(config.seed, 2).uniform(-config.bias_scale, config.bias_scale, size=n)
    return LayerWeights(W, W_in, theta)


def layer_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed for layer ``index`` of a model seeded with ``master_seed``."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def build_model(
    variant: str,
    n_in: int,
    configs: Sequence[LayerConfig],
    partition: SubGroupPartition | None = None,
) -> ReservoirModel:
    """Initialise every layer; layer i's input width is layer i-1's size."""
    layers = []
    width = n_in
    for cfg in configs:
        layers.append(Layer(cfg, init_layer(cfg, width)))
        width = cfg.size
    return ReservoirModel(variant, tuple(layers), partition)


def _update(x_prev, pre, a, leak_on_activation):
    act = np.tanh(pre)
    if leak_on_activation:
        return (1.0 - a) * x_prev + a * act
    return (1.0 - a) * x_prev + act


def _check_finite(x, step=None):
    if not np.all(np.isfinite(x)):
        where = "" if step is None else f" at step {step}"
        raise NumericalError(f"non-finite reservoir state{where}")


def step_shallow(x, u, w: LayerWeights, a: float, leak_on_activation: bool = True, step=None):
    """One leaky-integrator update ``x -> x'`` for input ``u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (w.size,) or u.shape != (w.n_in,):
        raise ShapeError(f"state {x.shape} / input {u.shape} do not match weights ({w.size}, {w.n_in})")
    out = _update(x, w.W_in @ u + w.W @ x + w.theta, a, leak_on_activation)
    _check_finite(out, step)
    return out


def gather_delayed(buffer: DelayBuffer, partition: SubGroupPartition) -> np.ndarray:
    """Concatenate each sub-group's slice of the state from ``tau_g`` steps ago."""
    parts = [buffer.read(d)[s] for s, d in zip(partition.slices(), partition.group_delays)]
    return np.concatenate(parts)


def step_hetero_shallow(
    buffer: DelayBuffer,
    u,
    w: LayerWeights,
    a: float,
    partition: SubGroupPartition,
    leak_on_activation: bool = True,
    step=None,
):
    """Update from sub-group-delayed state; the new state is pushed into ``buffer``."""
    if partition.size != w.size:
        raise ShapeError(f"partition covers {partition.size} units, reservoir has {w.size}")
    if buffer.capacity < partition.max_delay + 1:
        raise ConfigError(f"buffer capacity {buffer.capacity} < max delay + 1 = {partition.max_delay + 1}")
    x_del = gather_delayed(buffer, partition)
    x = step_shallow(x_del, u, w, a, leak_on_activation, step)
    buffer.push(x)
    return x


def step_deep(states, u, layers: Sequence[Layer], step=None):
    """Advance every layer one step; layer i consumes layer i-1's new state."""
    if len(states) != len(layers):
        raise ShapeError(f"{len(states)} states for {len(layers)} layers")
    new = []
    drive = np.asarray(u, dtype=float)
    for x, layer in zip(states, layers):
        cfg = layer.config
        drive = step_shallow(x, drive, layer.weights, cfg.leak_rate, cfg.leak_on_activation, step)
        new.append(drive)
    return new


def step_hetero_deep(buffers, u, layers: Sequence[Layer], step=None):
    """Deep update where layer i reads its own state ``config.delay`` steps back."""
    if len(buffers) != len(layers):
        raise ShapeError(f"{len(buffers)} buffers for {len(layers)} layers")
    new = []
    drive = np.asarray(u, dtype=float)
    for buf, layer in zip(buffers, layers):
        cfg = layer.config
        if buf.capacity < cfg.delay + 1:
            raise ConfigError(f"buffer capacity {buf.capacity} < delay + 1 = {cfg.delay + 1}")
        x_del = buf.read(cfg.delay)
        drive = step_shallow(x_del, drive, layer.weights, cfg.leak_rate, cfg.leak_on_activation, step)
        buf.push(drive)
        new.append(drive)
    return new


def _layer_delays(model: ReservoirModel, i: int):
    """(slices, delays) describing how layer i reads its past, or None if undelayed."""
    if model.variant == "hetero_shallow":
        return model.partition.slices(), model.partition.group_delays
    if model.variant == "hetero_deep":
        return [slice(0, model.layers[i].weights.size)], (model.layers[i].config.delay,)
    return None


def _run_layer(layer: Layer, drive: np.ndarray, x0: np.ndarray, delays, offset: int):
    """Trajectory of one layer over a whole drive sequence.

    Returns ``(new_states, readout_rows)``: the freshly computed states
    (which drive the next layer) and, for delayed layers, the delayed
    states that enter the extended state.  ``offset`` only labels errors.
    """
    w, cfg = layer.weights, layer.config
    a, loa = cfg.leak_rate, cfg.leak_on_activation
    T, n = drive.shape[0], w.size
    W = w.W.toarray() if w.W.nnz > n * n // 4 else w.W
    pre_in = drive @ w.W_in.T + w.theta
    out = np.empty((T, n))
    if delays is None:
        x = x0
        for t in range(T):
            x = _update(x, pre_in[t] + W @ x, a, loa)
            out[t] = x
        return out, out

    slices, taus = delays
    pad = max(taus) + 1
    hist = np.zeros((pad + T, n))
    hist[pad - 1] = x0
    rows = np.empty((T, n))
    x_del = np.empty(n)
    for t in range(T):
        # hist[pad - 1 + t] holds the newest state before this step
        for s, d in zip(slices, taus):
            x_del[s] = hist[pad - 1 + t - d, s]
        x = _update(x_del, pre_in[t] + W @ x_del, a, loa)
        hist[pad + t] = x
        for s, d in zip(slices, taus):
            rows[t, s] = hist[pad + t - d, s]
    out[:] = hist[pad:]
    return out, rows


def run_sequence(model: ReservoirModel, inputs, washout: int = 0, initial_states=None) -> np.ndarray:
    """Drive ``model`` with a ``T x n_in`` input sequence from a fresh state.

    Returns the ``(T - washout) x state_dim`` matrix of concatenated
    layer states, layer 1 first.  For heterogeneous variants each layer
    (or sub-group) contributes the delayed state it read, so row ``t``
    holds ``x_g(t - tau_g)``.  ``initial_states`` (one vector per layer,
    default zeros) exists for echo-state checks.
    """
    U = np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[0] == 0:
        raise EmptyInputError("run_sequence needs at least one input step")
    if U.shape[1] != model.n_in:
        raise ShapeError(f"inputs have {U.shape[1]} features, model expects {model.n_in}")
    if not 0 <= washout < U.shape[0]:
        raise ConfigError(f"washout must lie in [0, {U.shape[0]}), got {washout}")
    if not np.all(np.isfinite(U)):
        bad = int(np.argmax(~np.all(np.isfinite(U), axis=1)))
        raise NumericalError(f"non-finite input at step {bad}")
    if initial_states is None:
        initial_states = [np.zeros(s) for s in model.layer_sizes]
    if len(initial_states) != len(model.layers):
        raise ShapeError(f"{len(initial_states)} initial states for {len(model.layers)} layers")

    blocks = []
    drive = U
    for i, (layer, x0) in enumerate(zip(model.layers, initial_states)):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (layer.weights.size,):
            raise ShapeError(f"initial state of layer {i + 1} has shape {x0.shape}")
        new, rows = _run_layer(layer, drive, x0, _layer_delays(model, i), i)
        finite = np.all(np.isfinite(new), axis=1)
        if not finite.all():
            raise NumericalError(f"non-finite state in layer {i + 1} at step {int(np.argmin(finite))}")
        blocks.append(rows[washout:])
        drive = new
    return np.hstack(blocks) if len(blocks) > 1 else blocks[0]


def trainable_parameters(model: ReservoirModel, n_classes: int) -> int:
    """Entries of the readout matrix: ``n_classes * (n_in + state_dim)``."""
    return n_classes * (model.n_in + model.state_dim)
