"""Pseudo-spectral reference solvers (KSE, NSE vorticity form, 2D/3D Burgers)
with RK4 time stepping, 2/3 de-aliasing, and trajectory dataset generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFinite
from .spectral import (
    GridSpec,
    forward_transform,
    freq_grid,
    grf_sample,
    inverse_transform,
    spectral_resample,
    two_thirds_mask,
)

PDE_KINDS = ("kse", "nse", "burgers")
FORCINGS = ("none", "f1", "f2")


@dataclass(frozen=True)
class PDESpec:
    """Which PDE to solve and its parameters."""

    kind: str
    nu: float = 0.0
    forcing: str = "none"
    dim: int = 2

    def __post_init__(self):
        if self.kind not in PDE_KINDS:
            raise ValueError(f"unknown PDE kind {self.kind!r}")
        if self.forcing not in FORCINGS:
            raise ValueError(f"unknown forcing {self.forcing!r}")
        if self.forcing != "none" and self.kind != "nse":
            raise ValueError("forcing is only defined for the vorticity equation")
        if self.dim == 3 and self.kind != "burgers":
            raise ValueError("only Burgers supports dim=3")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.kind in ("nse", "burgers") and not self.nu > 0:
            raise ValueError(f"{self.kind} requires nu > 0")

    @property
    def channels(self) -> int:
        return self.dim if self.kind == "burgers" else 1


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping and snapshot cadence for the reference integrator."""

    dt: float
    t_end: float
    save_dt: float
    dealias: bool = True
    method: str = "rk4"  # "rk4" | "ifrk4" (KSE only)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.save_dt < self.dt - 1e-12 * self.dt:
            raise ValueError("save_dt must be >= dt")
        if self.t_end > 0 and self.t_end < self.save_dt - 1e-12 * self.save_dt:
            raise ValueError("t_end must be >= save_dt (or 0 for a single snapshot)")
        if self.method not in ("rk4", "ifrk4"):
            raise ValueError(f"unknown method {self.method!r}")
        for name, ratio in (("save_dt/dt", self.save_dt / self.dt),
                            ("t_end/save_dt", self.t_end / self.save_dt)):
            if abs(ratio - round(ratio)) > 1e-6:
                raise ValueError(f"{name} must be an integer multiple, got {ratio}")

    @property
    def save_every(self) -> int:
        return round(self.save_dt / self.dt)

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)


@dataclass
class TrajectoryDataset:
    """Uniform-cadence snapshots of one or more trajectories on a shared grid.

    data has shape (n_traj, n_snapshots, channels, *points); snapshot s of
    trajectory t is the state at time s * cadence.
    """

    grid: GridSpec
    cadence: float
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != self.grid.dim + 3 or self.data.shape[3:] != self.grid.points:
            raise ValueError(
                f"data must be (n_traj, n_snap, C, {self.grid.points}), got {self.data.shape}"
            )

    @property
    def n_traj(self) -> int:
        return self.data.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def forcing_field(grid: GridSpec, forcing: str) -> np.ndarray:
    """Time-independent forcing evaluated on the grid, shape (1, *points)."""
    x = grid.coords()
    if forcing == "none":
        return np.zeros((1,) + grid.points)
    if forcing == "f1":
        return 0.1 * np.cos(8.0 * np.pi * x[0])[np.newaxis]
    if forcing == "f2":
        return (0.1 * np.sqrt(2.0) * np.sin(2.0 * np.pi * (x[0] + x[1]) + np.pi / 4.0))[np.newaxis]
    raise ValueError(f"unknown forcing {forcing!r}")


def biot_savart(omega_hat: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Velocity spectrum from a 2D vorticity spectrum: u_hat = i k_perp / |k|^2 * w_hat.

    k_perp = (k_y, -k_x), the orientation that makes curl(u) reproduce the
    vorticity (u = (d_y psi, -d_x psi) with -lap(psi) = omega). The k=0
    velocity mode is set to zero (zero mean flow).
    """
    if grid.dim != 2:
        raise ValueError("Biot-Savart inversion is defined for 2D grids")
    fg = freq_grid(grid)
    k_sq = fg.k_sq.copy()
    k_sq.flat[0] = 1.0  # avoid 0/0; the mode is zeroed below
    ux = 1j * fg.wavenumber[1] / k_sq * omega_hat
    uy = 1j * (-fg.wavenumber[0]) / k_sq * omega_hat
    zero = tuple([slice(None)] + [0] * grid.dim)
    ux[zero] = 0.0
    uy[zero] = 0.0
    return ux, uy


def _dealias_spectrum(s: np.ndarray, grid: GridSpec, enabled: bool) -> np.ndarray:
    return s * two_thirds_mask(grid) if enabled else s


def kse_rhs(u: np.ndarray, grid: GridSpec, dealias: bool = True) -> np.ndarray:
    """-lap(u) - lap^2(u) - 0.5*|grad u|^2 with the quadratic term de-aliased."""
    fg = freq_grid(grid)
    uh = forward_transform(u, grid)
    linear = inverse_transform((fg.k_sq - fg.k_sq**2) * uh, grid)
    grad_sq = np.zeros_like(u)
    for axis in range(grid.dim):
        g = inverse_transform(uh * fg.derivative_multiplier(_unit(axis, grid.dim)), grid)
        grad_sq += g * g
    nl_hat = _dealias_spectrum(forward_transform(-0.5 * grad_sq, grid), grid, dealias)
    return linear + inverse_transform(nl_hat, grid)


def nse_rhs(
    omega: np.ndarray,
    grid: GridSpec,
    spec: PDESpec,
    dealias: bool = True,
    forcing: np.ndarray | None = None,
) -> np.ndarray:
    """nu*lap(w) - (u . grad) w + f, with velocities from the Biot-Savart law."""
    fg = freq_grid(grid)
    wh = forward_transform(omega, grid)
    ux_hat, uy_hat = biot_savart(wh, grid)
    ux = inverse_transform(ux_hat, grid)
    uy = inverse_transform(uy_hat, grid)
    wx = inverse_transform(wh * fg.derivative_multiplier((1, 0)), grid)
    wy = inverse_transform(wh * fg.derivative_multiplier((0, 1)), grid)
    conv_hat = _dealias_spectrum(forward_transform(ux * wx + uy * wy, grid), grid, dealias)
    rhs = inverse_transform(-fg.k_sq * spec.nu * wh, grid) - inverse_transform(conv_hat, grid)
    if forcing is None:
        forcing = forcing_field(grid, spec.forcing)
    return rhs + forcing


def burgers_rhs(u: np.ndarray, grid: GridSpec, nu: float, dealias: bool = True) -> np.ndarray:
    """Per component: nu*lap(u_c) - sum_j u_j * d_j u_c, products de-aliased."""
    if u.shape[0] != grid.dim:
        raise ValueError(f"Burgers state needs {grid.dim} channels, got {u.shape[0]}")
    fg = freq_grid(grid)
    uh = forward_transform(u, grid)
    grads = [
        inverse_transform(uh * fg.derivative_multiplier(_unit(axis, grid.dim)), grid)
        for axis in range(grid.dim)
    ]
    conv = np.zeros_like(u)
    for j in range(grid.dim):
        conv += u[j : j + 1] * grads[j]
    conv_hat = _dealias_spectrum(forward_transform(conv, grid), grid, dealias)
    return inverse_transform(-fg.k_sq * nu * uh, grid) - inverse_transform(conv_hat, grid)


def _unit(axis: int, dim: int) -> tuple[int, ...]:
    orders = [0] * dim
    orders[axis] = 1
    return tuple(orders)


def make_rhs(spec: PDESpec, grid: GridSpec, dealias: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """Bind a PDE to a grid, returning a state -> time-derivative map."""
    if spec.kind == "kse":
        return lambda u: kse_rhs(u, grid, dealias)
    if spec.kind == "nse":
        f = forcing_field(grid, spec.forcing)
        return lambda w: nse_rhs(w, grid, spec, dealias, forcing=f)
    return lambda u: burgers_rhs(u, grid, spec.nu, dealias)


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], u: np.ndarray, dt: float) -> np.ndarray:
    """Classical RK4 step. Raises NonFinite if any stage blows up."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    for i, k in enumerate((k1, k2, k3, k4)):
        if not np.isfinite(k).all():
            raise NonFinite(f"RK4 stage {i + 1} produced non-finite values")
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate_ifrk4_kse(grid: GridSpec, cfg: SolverConfig, ic: np.ndarray) -> list[np.ndarray]:
    """Integrating-factor RK4 for the KSE: the stiff linear part (k^2 - k^4)
    is advanced exactly, only the quadratic term is stepped explicitly."""
    fg = freq_grid(grid)
    lin = fg.k_sq - fg.k_sq**2
    dt = cfg.dt
    e_half = np.exp(0.5 * dt * lin)
    e_full = e_half * e_half
    mask = two_thirds_mask(grid) if cfg.dealias else 1.0

    def nonlin(uh):
        grad_sq = np.zeros(ic.shape)
        for axis in range(grid.dim):
            g = inverse_transform(uh * fg.derivative_multiplier(_unit(axis, grid.dim)), grid)
            grad_sq += g * g
        return forward_transform(-0.5 * grad_sq, grid) * mask

    uh = forward_transform(ic, grid)
    snaps = [ic.copy()]
    for step in range(cfg.n_steps):
        k1 = nonlin(uh)
        m2 = nonlin(e_half * (uh + 0.5 * dt * k1))
        m3 = nonlin(e_half * uh + 0.5 * dt * m2)
        m4 = nonlin(e_full * uh + dt * e_half * m3)
        uh = e_full * uh + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (m2 + m3) + m4)
        if not np.isfinite(uh).all():
            raise NonFinite("IF-RK4 produced non-finite values",
                            time=(step + 1) * dt, step=step + 1)
        if (step + 1) % cfg.save_every == 0:
            snaps.append(inverse_transform(uh, grid))
    return snaps


def integrate(spec: PDESpec, cfg: SolverConfig, grid: GridSpec, ic: np.ndarray) -> list[np.ndarray]:
    """Integrate from an initial condition, recording a snapshot every save_dt.

    Returns the list [state(0), state(save_dt), ...]; snapshot count is
    n_steps // save_every + 1.
    """
    ic = np.asarray(ic, dtype=np.float64)
    if ic.shape != (spec.channels,) + grid.points:
        raise ValueError(
            f"initial condition must have shape ({spec.channels}, {grid.points}), got {ic.shape}"
        )
    if cfg.method == "ifrk4":
        if spec.kind != "kse":
            raise ValueError("the integrating-factor scheme is implemented for the KSE only")
        return _integrate_ifrk4_kse(grid, cfg, ic)
    rhs = make_rhs(spec, grid, cfg.dealias)
    u = ic.copy()
    snaps = [u.copy()]
    for step in range(cfg.n_steps):
        try:
            u = rk4_step(rhs, u, cfg.dt)
        except NonFinite as err:
            raise NonFinite(
                f"solver blew up at t={(step + 1) * cfg.dt:.6g} (step {step + 1}): {err}",
                time=(step + 1) * cfg.dt,
                step=step + 1,
            ) from err
        if (step + 1) % cfg.save_every == 0:
            snaps.append(u.copy())
    return snaps


GRF_DEFAULTS = {
    "nse": {"alpha": 2.5, "tau": 7.0, "scale": None},
    "kse": {"alpha": 2.0, "tau": 5.0, "scale": None},
    "burgers": {"alpha": 2.0, "tau": 5.0, "scale": None},
}

SPLIT_SEEDS = {"train": 0, "val": 1, "test": 2}


def ic_seed(split_seed: int, traj: int, channel: int) -> int:
    """Deterministic per-(split, trajectory, channel) GRF seed."""
    return split_seed * 1_000_003 + traj * 1_009 + channel


def sample_ic(spec: PDESpec, grid: GridSpec, split_seed: int, traj: int,
              grf: dict | None = None) -> np.ndarray:
    """Initial condition with one independent GRF draw per channel."""
    params = dict(GRF_DEFAULTS[spec.kind])
    if grf:
        params.update({k: v for k, v in grf.items() if v is not None or k == "scale"})
    return np.concatenate(
        [
            grf_sample(grid, ic_seed(split_seed, traj, c), **params)
            for c in range(spec.channels)
        ]
    )


def generate_dataset(
    spec: PDESpec,
    cfg: SolverConfig,
    gen_grid: GridSpec,
    train_grid: GridSpec,
    n_traj: int,
    split: str = "train",
    grf: dict | None = None,
    split_seed: int | None = None,
) -> TrajectoryDataset:
    """Simulate n_traj trajectories at generation resolution and resample the
    snapshots to the training grid.

    Split seeds follow the fixed convention train=0, val=1, test=2; per-
    trajectory IC seeds derive deterministically from (split seed, index).
    """
    if split_seed is None:
        split_seed = SPLIT_SEEDS[split]
    trajs = []
    for t in range(n_traj):
        ic = sample_ic(spec, gen_grid, split_seed, t, grf)
        snaps = integrate(spec, cfg, gen_grid, ic)
        trajs.append(
            np.stack([spectral_resample(s, gen_grid, train_grid) for s in snaps])
        )
    n_snap = cfg.n_steps // cfg.save_every + 1
    data = (
        np.stack(trajs)
        if trajs
        else np.zeros((0, n_snap, spec.channels) + train_grid.points)
    )
    meta = {
        "pde": spec,
        "solver": cfg,
        "gen_grid": gen_grid,
        "split": split,
        "split_seed": split_seed,
        "ic_seeds": [
            [ic_seed(split_seed, t, c) for c in range(spec.channels)] for t in range(n_traj)
        ],
    }
    return TrajectoryDataset(grid=train_grid, cadence=cfg.save_dt, data=data, meta=meta)
