"""JSON experiment configuration.

A config file is one JSON object; every key is optional::

    {
      "family": "sp",                 # "sp" or "fk"
      "deg": 6,
      "noise": {"eps_bar": 0.0, "alpha_bar": 0.0, "eta_bar": 0.0},
      "T_train": 1000, "T_test": 1000, "trials": 10, "seed": 0,
      "methods": ["mom", "ols"],
      "grids": {"mom": {"lam": [0.001, 0.01]}, "ridge": {"lam": [0.1]}},
      "validation_fraction": 0.2,
      "d": 5, "grid_k": 5,
      "knapsack": {"n_items": 10, "price_mode": "integer-1-1000", "normalized": false},
      "mom": {"max_iters": 20000, "tol_objective": 1e-4},
      "solver": {"tol": 1e-9, "max_pivots": null, "perturb": null},
      "online": {"min_gap_quantile": 0.5, "pilot": 300, "checkpoints": [200, 2000]},
      "timing": false
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from ..datagen import GridSpec, KnapsackSpec, NoiseSpec
from ..features import KernelSpec
from ..lp_core import SolverOptions
from ..mom import MomFitConfig

OFFLINE_METHODS = ("mom", "mom-kernel", "ols", "ridge", "spo-plus")
ONLINE_METHODS = ("mom-ogd", "mom-perceptron", "mom-ftrl", "naive-subopt-ogd")
METHODS = OFFLINE_METHODS + ONLINE_METHODS

DEFAULT_GRIDS = {
    "mom": {"lam": [1e-3, 1e-2, 1e-1, 1.0]},
    "mom-kernel": {
        "lam": [1e-4, 1e-3],
        "kernel": [{"kind": "polynomial", "gamma": 5.0, "degree": 2}, {"kind": "rbf", "gamma": 2.0}],
    },
    "ols": {},
    "ridge": {"lam": [1e-4, 1e-2, 1.0]},
    "spo-plus": {"step_size": [1e-2, 1e-1, 1.0]},
    # step sizes are multiples of the regret-optimal step; radius multiples of ||Theta*||
    "mom-ogd": {"eta_mult": [1.0, 10.0, 100.0], "radius_mult": [1.0]},
    "naive-subopt-ogd": {},
    "mom-perceptron": {},
    "mom-ftrl": {},
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    family: str = "sp"
    deg: int = 1
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    T_train: int = 1000
    T_test: int = 1000
    trials: int = 10
    seed: int = 0
    methods: List[str] = field(default_factory=lambda: ["mom", "ols"])
    grids: Dict[str, dict] = field(default_factory=dict)
    validation_fraction: float = 0.2
    d: int = 5
    grid_k: int = 5
    knapsack: KnapsackSpec = field(default_factory=KnapsackSpec)
    mom: MomFitConfig = field(default_factory=lambda: MomFitConfig(tol_objective=1e-4))
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(allow_degenerate=True))
    online: dict = field(default_factory=dict)
    timing: bool = False

    def __post_init__(self):
        if self.family not in ("sp", "fk"):
            raise ConfigError(f"family must be 'sp' or 'fk', got {self.family!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.T_train < 2 or self.T_test < 1:
            raise ConfigError("need T_train >= 2 and T_test >= 1")
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        for m, grid in self.grids.items():
            if m not in METHODS:
                raise ConfigError(f"grid given for unknown method {m!r}")
            for key, values in grid.items():
                if not isinstance(values, list) or not values:
                    raise ConfigError(f"grid {m}.{key} must be a nonempty list")
        if self.noise.deg != self.deg:
            self.noise = NoiseSpec(self.deg, self.noise.eps_bar, self.noise.alpha_bar, self.noise.eta_bar)
        if self.knapsack.d != self.d:
            ks = self.knapsack
            self.knapsack = KnapsackSpec(ks.n_items, self.d, ks.price_mode, ks.fixed_constraints, ks.normalized)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_k)

    def grid_for(self, method: str) -> dict:
        grid = dict(DEFAULT_GRIDS.get(method, {}))
        grid.update(self.grids.get(method, {}))
        return grid

    def kernel_specs(self) -> List[KernelSpec]:
        try:
            return [KernelSpec(**k) for k in self.grid_for("mom-kernel")["kernel"]]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad kernel spec: {exc}") from exc

    @property
    def n_val(self) -> int:
        return max(1, min(self.T_train - 1, int(round(self.validation_fraction * self.T_train))))


def _sub(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a JSON object")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    noise = data.pop("noise", None) or {}
    deg = data.get("deg", noise.get("deg", 1))
    noise = _sub(NoiseSpec, {**noise, "deg": deg}, "noise")
    mom = data.pop("mom", None)
    mom = _sub(MomFitConfig, {"tol_objective": 1e-4, **(mom or {})}, "mom")
    solver = _sub(SolverOptions, {"allow_degenerate": True, **(data.pop("solver", None) or {})}, "solver")
    ks = data.pop("knapsack", None) or {}
    knapsack = _sub(KnapsackSpec, {**ks, "d": data.get("d", 5)}, "knapsack")
    try:
        return ExperimentConfig(noise=noise, mom=mom, solver=solver, knapsack=knapsack, **data)
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
