"""Experiment configuration: case presets, YAML loading, canonical hashing.

Cases E1-E7 mirror the benchmark table (generation grid/step, operator-
learning grid/step, trajectory counts); each also has a reduced "-desk"
variant sized for a desktop CPU. Configs serialize to a canonical
key-sorted JSON form whose SHA-256 prefix is the config hash.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import yaml

from .model import ModelConfig
from .solvers import PDESpec, SolverConfig
from .spectral import GridSpec
from .training import TrainConfig

TWO_PI = 2.0 * math.pi


@dataclass
class ExperimentConfig:
    case: str
    pde: PDESpec
    domain_length: tuple[float, ...]
    gen_points: tuple[int, ...]
    train_points: tuple[int, ...]
    solver: SolverConfig
    model: ModelConfig
    train: TrainConfig
    n_train: int
    n_val: int
    n_test: int
    grf: dict = field(default_factory=dict)
    test_t_end: float | None = None
    out_dir: str = "runs/out"
    seed: int = 0

    @property
    def gen_grid(self) -> GridSpec:
        return GridSpec(points=self.gen_points, length=self.domain_length)

    @property
    def train_grid(self) -> GridSpec:
        return GridSpec(points=self.train_points, length=self.domain_length)

    def test_solver(self) -> SolverConfig:
        """Solver settings for the test split (longer horizon where configured)."""
        if self.test_t_end is None:
            return self.solver
        return replace(self.solver, t_end=self.test_t_end)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "pde": {
                "kind": self.pde.kind,
                "nu": self.pde.nu,
                "forcing": self.pde.forcing,
                "dim": self.pde.dim,
            },
            "domain": {"length": list(self.domain_length)},
            "gen_grid": {"points": list(self.gen_points)},
            "train_grid": {"points": list(self.train_points)},
            "solver": {
                "dt": self.solver.dt,
                "t_end": self.solver.t_end,
                "save_dt": self.solver.save_dt,
                "dealias": self.solver.dealias,
                "method": self.solver.method,
            },
            "model": {
                "c_in": self.model.c_in,
                "K": self.model.K,
                "C": self.model.C,
                "P": self.model.P,
                "mlp_hidden": list(self.model.mlp_hidden),
                "dt_model": self.model.dt_model,
                "freq_norm": list(self.model.freq_norm),
                "activation": self.model.activation,
                "combine": self.model.combine,
                "no_pi": self.model.no_pi,
                "no_filter": self.model.no_filter,
                "no_freq2vec": self.model.no_freq2vec,
                "no_linear": self.model.no_linear,
                "euler_time": self.model.euler_time,
            },
            "train": {
                "iterations": self.train.iterations,
                "max_lr": self.train.max_lr,
                "n1": self.train.n1,
                "n2": self.train.n2,
                "batch": self.train.batch,
                "loss": self.train.loss,
                "grad_clip": self.train.grad_clip,
                "seed": self.train.seed,
                "val_every": self.train.val_every,
                "warmup_frac": self.train.warmup_frac,
                "div_factor": self.train.div_factor,
                "final_div_factor": self.train.final_div_factor,
            },
            "data": {
                "n_train": self.n_train,
                "n_val": self.n_val,
                "n_test": self.n_test,
                "grf": dict(self.grf),
                "test_t_end": self.test_t_end,
            },
            "out_dir": self.out_dir,
            "seed": self.seed,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]


def from_dict(d: dict) -> ExperimentConfig:
    pde = PDESpec(**d["pde"])
    model = d["model"]
    train = d["train"]
    data = d.get("data", {})
    return ExperimentConfig(
        case=d.get("case", "custom"),
        pde=pde,
        domain_length=tuple(d["domain"]["length"]),
        gen_points=tuple(d["gen_grid"]["points"]),
        train_points=tuple(d["train_grid"]["points"]),
        solver=SolverConfig(**d["solver"]),
        model=ModelConfig(
            c_in=model["c_in"],
            K=model["K"],
            C=model["C"],
            P=model.get("P", 2),
            mlp_hidden=tuple(model.get("mlp_hidden", (64, 64))),
            dt_model=model["dt_model"],
            freq_norm=tuple(model["freq_norm"]),
            activation=model.get("activation", "quad"),
            combine=model.get("combine", "concat"),
            no_pi=model.get("no_pi", False),
            no_filter=model.get("no_filter", False),
            no_freq2vec=model.get("no_freq2vec", False),
            no_linear=model.get("no_linear", False),
            euler_time=model.get("euler_time", False),
        ),
        train=TrainConfig(
            iterations=train["iterations"],
            max_lr=train.get("max_lr", 0.01),
            n1=train.get("n1", 4),
            n2=train.get("n2", 8),
            batch=train.get("batch", 1),
            loss=train.get("loss", "mse"),
            grad_clip=train.get("grad_clip", 1.0),
            seed=train.get("seed", 0),
            val_every=train.get("val_every", 200),
            warmup_frac=train.get("warmup_frac", 0.3),
            div_factor=train.get("div_factor", 25.0),
            final_div_factor=train.get("final_div_factor", 1e4),
        ),
        n_train=data.get("n_train", 2),
        n_val=data.get("n_val", 2),
        n_test=data.get("n_test", 5),
        grf=data.get("grf", {}),
        test_t_end=data.get("test_t_end"),
        out_dir=d.get("out_dir", "runs/out"),
        seed=d.get("seed", 0),
    )


def load_yaml(path) -> ExperimentConfig:
    with open(path) as fh:
        return from_dict(yaml.safe_load(fh))


def save_yaml(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def _build(case, pde, length, gen_points, gen_dt, train_points, pol_dt, t_end,
           n_traj, iterations, K, C, test_t_end=None, n_train=None) -> ExperimentConfig:
    dim = len(length)
    model = ModelConfig(
        c_in=pde.channels, K=K, C=C, dt_model=pol_dt,
        freq_norm=tuple(n // 2 for n in train_points),
    )
    return ExperimentConfig(
        case=case,
        pde=pde,
        domain_length=length,
        gen_points=gen_points,
        train_points=train_points,
        solver=SolverConfig(dt=gen_dt, t_end=t_end, save_dt=pol_dt),
        model=model,
        train=TrainConfig(iterations=iterations),
        n_train=n_train if n_train is not None else n_traj,
        n_val=2,
        n_test=5,
        test_t_end=test_t_end,
        out_dir=f"runs/{case.lower()}",
    )


def _nse_cases(desk: bool) -> dict[str, ExperimentConfig]:
    cases = {}
    params = [("E2", 1e-4, "f1"), ("E3", 1e-5, "f1"), ("E4", 1e-4, "f2"), ("E5", 1e-5, "f2")]
    for name, nu, forcing in params:
        pde = PDESpec(kind="nse", nu=nu, forcing=forcing)
        if desk:
            cases[f"{name}-desk"] = _build(
                f"{name}-desk", pde, (1.0, 1.0), (64, 64), 1e-3, (32, 32), 5e-3,
                t_end=10.0, n_traj=5, iterations=2000, K=4, C=16, test_t_end=15.0,
            )
        else:
            cases[name] = _build(
                name, pde, (1.0, 1.0), (256, 256), 1e-4, (64, 64), 5e-3,
                t_end=10.0, n_traj=5, iterations=20000, K=8, C=64, test_t_end=15.0,
            )
    return cases


def presets() -> dict[str, ExperimentConfig]:
    kse = PDESpec(kind="kse")
    burgers2 = PDESpec(kind="burgers", nu=0.01, dim=2)
    burgers3 = PDESpec(kind="burgers", nu=0.01, dim=3)
    out = {
        "E1": _build("E1", kse, (12 * math.pi, 12 * math.pi), (108, 108), 1e-4,
                     (54, 54), 1e-3, t_end=5.0, n_traj=2, iterations=20000, K=8, C=64),
        "E6": _build("E6", burgers2, (TWO_PI, TWO_PI), (512, 512), 1e-3,
                     (128, 128), 5e-3, t_end=2.0, n_traj=5, iterations=20000, K=8, C=64),
        "E7": _build("E7", burgers3, (TWO_PI,) * 3, (128,) * 3, 5e-3,
                     (64,) * 3, 5e-2, t_end=5.0, n_traj=5, iterations=5000, K=8, C=64),
        "E1-desk": _build("E1-desk", kse, (12 * math.pi, 12 * math.pi), (64, 64), 1e-3,
                          (32, 32), 1e-3, t_end=2.0, n_traj=2, iterations=2000, K=4, C=16),
        "E6-desk": _build("E6-desk", burgers2, (TWO_PI, TWO_PI), (64, 64), 1e-3,
                          (32, 32), 5e-3, t_end=1.0, n_traj=2, iterations=2000, K=4, C=16),
        "E7-desk": _build("E7-desk", burgers3, (TWO_PI,) * 3, (32,) * 3, 5e-3,
                          (16,) * 3, 5e-2, t_end=1.0, n_traj=2, iterations=300, K=4, C=8),
    }
    out.update(_nse_cases(desk=False))
    out.update(_nse_cases(desk=True))
    return out
