"""The SINO forward pass.

The network predicts the right-hand side of an unknown PDE: a shared MLP
(Freq2Vec) maps each frequency index to K complex multiplier values, the
spectral learning block applies those multipliers to the input's spectrum,
and the result feeds a linear 1x1 branch plus a multiplicative Pi-block
(with a 2/3 low-pass) whose outputs are recombined by a final 1x1 map.
Time stepping is RK4 over that learned right-hand side.

All forward functions come in two flavors: module-level wrappers that take
and return numpy arrays, and tape-building internals (prefixed with an
underscore) used by the training loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import engine as eg
from .engine import Tensor
from .errors import IncompatibleDomain, NonFinite
from .spectral import GridSpec, freq_grid, two_thirds_mask

ACTIVATIONS = ("quad", "tanh", "sin")
COMBINE_MODES = ("concat", "sum")
ABLATION_FLAGS = ("no_pi", "no_filter", "no_freq2vec", "no_linear", "euler_time")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and stepping hyperparameters.

    freq_norm holds the per-axis normalization divisor for Freq2Vec inputs,
    fixed to N_i/2 of the native (training) grid. Keeping it fixed is what
    lets the same parameters run on finer grids: a physical mode feeds the
    MLP the same value at every resolution.
    """

    c_in: int
    K: int
    C: int
    dt_model: float
    freq_norm: tuple[int, ...]
    P: int = 2
    mlp_hidden: tuple[int, ...] = (64, 64)
    activation: str = "quad"
    combine: str = "concat"
    no_pi: bool = False
    no_filter: bool = False
    no_freq2vec: bool = False
    no_linear: bool = False
    euler_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "freq_norm", tuple(int(f) for f in self.freq_norm))
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if self.c_in < 1 or self.K < 1 or self.C < 1:
            raise ValueError("c_in, K and C must be positive")
        if not self.no_pi and self.P < 2:
            raise ValueError("the Pi-block needs at least two factors")
        if not self.dt_model > 0:
            raise ValueError("dt_model must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.combine not in COMBINE_MODES:
            raise ValueError(f"unknown combine mode {self.combine!r}")
        if any(f < 2 for f in self.freq_norm):
            raise ValueError("freq_norm entries must be >= 2")

    @property
    def dim(self) -> int:
        return len(self.freq_norm)

    @property
    def native_points(self) -> tuple[int, ...]:
        return tuple(2 * f for f in self.freq_norm)

    @property
    def n_modes(self) -> int:
        return math.prod(self.native_points)

    @property
    def slb_channels(self) -> int:
        return self.c_in * self.K

    @property
    def mix_width(self) -> int:
        """Input width of the output 1x1 map."""
        if self.no_linear or self.combine == "sum":
            return self.C
        return 2 * self.C

    @property
    def n_pi_factors(self) -> int:
        return 1 if self.no_pi else self.P


def config_for_grid(grid: GridSpec, **kwargs) -> ModelConfig:
    """ModelConfig with freq_norm taken from a native grid."""
    return ModelConfig(freq_norm=tuple(n // 2 for n in grid.points), **kwargs)


# -- parameters --------------------------------------------------------------


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.no_freq2vec:
        shapes["freq2vec.table"] = (2 * cfg.K, cfg.n_modes)
    else:
        sizes = (cfg.dim,) + cfg.mlp_hidden + (2 * cfg.K,)
        for i in range(len(sizes) - 1):
            shapes[f"freq2vec.w{i}"] = (sizes[i], sizes[i + 1])
            shapes[f"freq2vec.b{i}"] = (sizes[i + 1],)
    for p in range(cfg.n_pi_factors):
        shapes[f"pi.{p}.w"] = (cfg.C, cfg.slb_channels)
        shapes[f"pi.{p}.b"] = (cfg.C,)
    if not cfg.no_linear:
        shapes["linear.w"] = (cfg.C, cfg.slb_channels)
        shapes["linear.b"] = (cfg.C,)
    shapes["out.w"] = (cfg.c_in, cfg.mix_width)
    shapes["out.b"] = (cfg.c_in,)
    return shapes


def param_names(cfg: ModelConfig) -> list[str]:
    return list(_param_shapes(cfg))


def count_params(cfg: ModelConfig) -> int:
    return sum(math.prod(s) for s in _param_shapes(cfg).values())


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(cfg).items():
        if name.split(".")[-1].startswith("b"):
            params[name] = np.zeros(shape)
        elif name == "freq2vec.table":
            lim = math.sqrt(6.0 / (1 + 2 * cfg.K))
            params[name] = rng.uniform(-lim, lim, size=shape)
        else:
            fan_in, fan_out = shape[0], shape[-1]
            if name.startswith(("pi.", "linear.", "out.")):
                # 1x1 maps are stored (out_channels, in_channels)
                fan_in, fan_out = shape[1], shape[0]
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def _wrap_params(params: dict[str, np.ndarray], requires_grad: bool) -> dict[str, Tensor]:
    return {
        name: Tensor(np.asarray(value, dtype=np.float64), requires_grad=requires_grad)
        for name, value in params.items()
    }


# -- forward graph -----------------------------------------------------------


def _activation(cfg: ModelConfig):
    if cfg.activation == "quad":
        return lambda t: eg.mul(t, t)
    if cfg.activation == "tanh":
        return eg.tanh
    return eg.sin


def _freq2vec(pt: dict[str, Tensor], cfg: ModelConfig, grid: GridSpec) -> Tensor:
    """Hermitian-symmetrized multiplier table, shape (K, *points), complex."""
    fg = freq_grid(grid)
    axes = tuple(range(1, grid.dim + 1))
    if cfg.no_freq2vec:
        if grid.points != cfg.native_points:
            raise IncompatibleDomain(
                "the free multiplier table is bound to the native resolution "
                f"{cfg.native_points}, got {grid.points}"
            )
        raw = pt["freq2vec.table"]
        psi = eg.to_complex(raw[: cfg.K, :], raw[cfg.K :, :])
        psi = eg.reshape(psi, (cfg.K,) + grid.points)
    else:
        q = np.stack(
            [fg.index[i].ravel() / cfg.freq_norm[i] for i in range(grid.dim)], axis=1
        )
        h: Tensor = Tensor(q)
        act = _activation(cfg)
        n_layers = len(cfg.mlp_hidden) + 1
        for i in range(n_layers):
            h = eg.add(eg.matmul(h, pt[f"freq2vec.w{i}"]), pt[f"freq2vec.b{i}"])
            if i < n_layers - 1:
                h = act(h)
        psi = eg.to_complex(h[:, : cfg.K], h[:, cfg.K :])
        psi = eg.reshape(eg.transpose(psi, (1, 0)), (cfg.K,) + grid.points)
    # enforce psi(-k) == conj(psi(k)) so real fields map to real fields
    mirrored = eg.conj(eg.flip_modes(psi, axes))
    return eg.mul(eg.add(psi, mirrored), 0.5)


def _mix(w: Tensor, b: Tensor, x: Tensor, grid: GridSpec) -> Tensor:
    """1x1 channel mixing: (C_out, C_in) applied pointwise over the grid."""
    flat = eg.reshape(x, (x.shape[0], grid.n_points))
    mixed = eg.add(eg.matmul(w, flat), eg.reshape(b, (b.shape[0], 1)))
    return eg.reshape(mixed, (w.shape[0],) + grid.points)


def _slb(u: Tensor, table: Tensor, cfg: ModelConfig, grid: GridSpec) -> Tensor:
    axes = tuple(range(1, grid.dim + 1))
    uh = eg.fftn(u, axes)
    prod = eg.mul(
        eg.reshape(uh, (cfg.c_in, 1) + grid.points),
        eg.reshape(table, (1, cfg.K) + grid.points),
    )
    d = eg.ifftn_real(prod, tuple(range(2, grid.dim + 2)))
    return eg.reshape(d, (cfg.slb_channels,) + grid.points)


def _pi_block(d: Tensor, pt: dict[str, Tensor], cfg: ModelConfig, grid: GridSpec,
              pre_filter_out: list | None = None) -> Tensor:
    v = _mix(pt["pi.0.w"], pt["pi.0.b"], d, grid)
    for p in range(1, cfg.n_pi_factors):
        v = eg.mul(v, _mix(pt[f"pi.{p}.w"], pt[f"pi.{p}.b"], d, grid))
    if pre_filter_out is not None:
        pre_filter_out.append(v)
    if cfg.no_filter:
        return v
    axes = tuple(range(1, grid.dim + 1))
    mask = Tensor(two_thirds_mask(grid))
    return eg.ifftn_real(eg.mul(eg.fftn(v, axes), mask), axes)


def _rhs(u: Tensor, table: Tensor, pt: dict[str, Tensor], cfg: ModelConfig,
         grid: GridSpec) -> Tensor:
    d = _slb(u, table, cfg, grid)
    nonlinear = _pi_block(d, pt, cfg, grid)
    if cfg.no_linear:
        combined = nonlinear
    else:
        linear = _mix(pt["linear.w"], pt["linear.b"], d, grid)
        if cfg.combine == "concat":
            combined = eg.concat([linear, nonlinear], axis=0)
        else:
            combined = eg.add(linear, nonlinear)
    return _mix(pt["out.w"], pt["out.b"], combined, grid)


def _step(u: Tensor, table: Tensor, pt: dict[str, Tensor], cfg: ModelConfig,
          grid: GridSpec) -> Tensor:
    dt = cfg.dt_model
    if cfg.euler_time:
        return eg.add(u, eg.mul(_rhs(u, table, pt, cfg, grid), dt))
    k1 = _rhs(u, table, pt, cfg, grid)
    k2 = _rhs(eg.add(u, eg.mul(k1, 0.5 * dt)), table, pt, cfg, grid)
    k3 = _rhs(eg.add(u, eg.mul(k2, 0.5 * dt)), table, pt, cfg, grid)
    k4 = _rhs(eg.add(u, eg.mul(k3, dt)), table, pt, cfg, grid)
    incr = eg.add(eg.add(k1, k4), eg.mul(eg.add(k2, k3), 2.0))
    return eg.add(u, eg.mul(incr, dt / 6.0))


# -- numpy-facing API ---------------------------------------------------------


def _check_state(u: np.ndarray, cfg: ModelConfig, grid: GridSpec) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (cfg.c_in,) + grid.points:
        raise ValueError(f"state must have shape ({cfg.c_in}, {grid.points}), got {u.shape}")
    return u


def freq2vec_eval(params: dict[str, np.ndarray], cfg: ModelConfig, grid: GridSpec) -> np.ndarray:
    """Evaluate the (symmetrized) multiplier table on a grid, (K, *points) complex."""
    with eg.no_grad():
        return _freq2vec(_wrap_params(params, False), cfg, grid).data


def slb_apply(u: np.ndarray, table: np.ndarray, cfg: ModelConfig, grid: GridSpec) -> np.ndarray:
    """Apply K multipliers to every input channel; output is (c_in*K, *points)."""
    u = _check_state(u, cfg, grid)
    with eg.no_grad():
        return _slb(Tensor(u), Tensor(table), cfg, grid).data


def pi_block(d: np.ndarray, params: dict[str, np.ndarray], cfg: ModelConfig,
             grid: GridSpec) -> np.ndarray:
    """Product of P affine projections of SLB features, then the low-pass."""
    with eg.no_grad():
        return _pi_block(Tensor(np.asarray(d, dtype=np.float64)),
                         _wrap_params(params, False), cfg, grid).data


def rhs_eval(u: np.ndarray, params: dict[str, np.ndarray], cfg: ModelConfig,
             grid: GridSpec) -> np.ndarray:
    """The learned right-hand side evaluated at a state."""
    u = _check_state(u, cfg, grid)
    with eg.no_grad():
        pt = _wrap_params(params, False)
        table = _freq2vec(pt, cfg, grid)
        return _rhs(Tensor(u), table, pt, cfg, grid).data


def model_step(u: np.ndarray, params: dict[str, np.ndarray], cfg: ModelConfig,
               grid: GridSpec) -> np.ndarray:
    """Advance one dt_model (RK4, or forward Euler under the euler_time flag)."""
    u = _check_state(u, cfg, grid)
    with eg.no_grad():
        pt = _wrap_params(params, False)
        table = _freq2vec(pt, cfg, grid)
        out = _step(Tensor(u), table, pt, cfg, grid).data
    if not np.isfinite(out).all():
        raise NonFinite("model step produced non-finite values")
    return out


def rollout(u0: np.ndarray, params: dict[str, np.ndarray], cfg: ModelConfig,
            grid: GridSpec, n_steps: int, record_every: int = 1) -> list[np.ndarray]:
    """Iterate model_step, recording every record_every-th state (and the start)."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    u = _check_state(u0, cfg, grid).copy()
    snaps = [u.copy()]
    with eg.no_grad():
        pt = _wrap_params(params, False)
        table = _freq2vec(pt, cfg, grid)
        state = Tensor(u)
        for step in range(n_steps):
            state = _step(state, table, pt, cfg, grid)
            if not np.isfinite(state.data).all():
                raise NonFinite(f"rollout diverged at step {step + 1}", step=step + 1)
            if (step + 1) % record_every == 0:
                snaps.append(state.data.copy())
    return snaps


def dump_features(u: np.ndarray, params: dict[str, np.ndarray], cfg: ModelConfig,
                  grid: GridSpec) -> dict[str, np.ndarray]:
    """Named intermediate channels: SLB outputs, pre-filter Pi channels, linear channels."""
    u = _check_state(u, cfg, grid)
    with eg.no_grad():
        pt = _wrap_params(params, False)
        table = _freq2vec(pt, cfg, grid)
        d = _slb(Tensor(u), table, cfg, grid)
        pre: list = []
        _pi_block(d, pt, cfg, grid, pre_filter_out=pre)
        features = {}
        for c in range(cfg.c_in):
            for j in range(cfg.K):
                features[f"slb.c{c}.k{j}"] = d.data[c * cfg.K + j].copy()
        for i in range(cfg.C):
            features[f"pi_pre.{i}"] = pre[0].data[i].copy()
        if not cfg.no_linear:
            lin = _mix(pt["linear.w"], pt["linear.b"], d, grid)
            for i in range(cfg.C):
                features[f"linear.{i}"] = lin.data[i].copy()
    return features


# -- constructive instance (exact 2D/3D Burgers) ------------------------------


def exact_burgers_params(grid: GridSpec, nu: float, dt_model: float,
                         no_filter: bool = False) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Hand-set parameters that reproduce the de-aliased Burgers right-hand side.

    Multiplier table: [1, i*k_1, ..., i*k_d, -|k|^2]; the Pi-block forms the
    d^2 convection products u_j * d_j u_c and the output map assembles
    nu*lap(u_c) - sum_j u_j d_j u_c per component.
    """
    d = grid.dim
    K = d + 2
    C = d * d
    cfg = ModelConfig(
        c_in=d, K=K, C=C, P=2, dt_model=dt_model,
        freq_norm=tuple(n // 2 for n in grid.points),
        no_freq2vec=True, no_filter=no_filter,
    )
    fg = freq_grid(grid)
    mults = [np.ones(grid.points, dtype=np.complex128)]
    for axis in range(d):
        orders = [0] * d
        orders[axis] = 1
        mults.append(fg.derivative_multiplier(tuple(orders)))
    mults.append((-fg.k_sq).astype(np.complex128))
    table = np.stack(mults).reshape(K, -1)
    params = {
        "freq2vec.table": np.concatenate([table.real, table.imag]),
        "pi.0.w": np.zeros((C, d * K)),
        "pi.0.b": np.zeros(C),
        "pi.1.w": np.zeros((C, d * K)),
        "pi.1.b": np.zeros(C),
        "linear.w": np.zeros((C, d * K)),
        "linear.b": np.zeros(C),
        "out.w": np.zeros((d, 2 * C)),
        "out.b": np.zeros(d),
    }
    for c in range(d):
        for j in range(d):
            row = c * d + j
            params["pi.0.w"][row, j * K + 0] = 1.0        # u_j
            params["pi.1.w"][row, c * K + 1 + j] = 1.0    # d_j u_c
            params["out.w"][c, C + row] = -1.0            # -(u . grad) u_c
        params["linear.w"][c, c * K + (K - 1)] = nu       # nu * lap(u_c)
        params["out.w"][c, c] = 1.0
    return cfg, params
