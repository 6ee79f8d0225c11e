"""Run configuration: four sections (model, cost, solver, experiment)
loaded from YAML or JSON, validated on load, with unknown keys rejected.

``RunConfig.to_dict()`` gives the fully resolved configuration; feeding it
back through :func:`from_dict` reproduces the same run.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .costs import CostParams, GoalCost, QuadraticCost, QuadraticGameParams
from .dynamics import LTISystem, MecanumParams, MecanumPlatform
from .exceptions import ConfigError
from .trajectory import SolverOptions, default_step_sizes


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")


def _build(cls, section, data):
    data = {} if data is None else data
    _check_keys(section, data, [f.name for f in fields(cls)])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def _plain(obj):
    """Convert numpy values and tuples into YAML/JSON friendly types."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class ModelConfig:
    """``kind`` is ``"mecanum"`` or ``"lti"``.

    For the platform, ``params`` overrides :class:`MecanumParams` fields
    and ``control`` picks the input variant. For ``"lti"``, ``A``, ``B``
    and ``D`` are nested lists.
    """

    kind: str = "mecanum"
    control: str = "wheels"
    params: dict = field(default_factory=dict)
    A: Optional[list] = None
    B: Optional[list] = None
    D: Optional[list] = None

    def __post_init__(self):
        if self.kind not in ("mecanum", "lti"):
            raise ValueError(f"model kind must be 'mecanum' or 'lti', got {self.kind!r}")
        if self.control not in ("wheels", "generalized"):
            raise ValueError(f"unknown control variant {self.control!r}")
        if self.kind == "mecanum":
            _check_keys("model.params", self.params, [f.name for f in fields(MecanumParams)])
        elif self.A is None or self.B is None:
            raise ValueError("an lti model needs A and B")

    def build(self):
        if self.kind == "lti":
            return LTISystem(np.array(self.A, dtype=float), np.array(self.B, dtype=float), None if self.D is None else np.array(self.D, dtype=float))
        params = dict(self.params)
        if "friction" in params:
            params["friction"] = tuple(params["friction"])
        return MecanumPlatform(MecanumParams(**params), self.control)


@dataclass
class CostConfig:
    """``kind="goal"`` is the smooth-abs plus cosh platform cost with the
    disturbance penalty chosen by ``adversary`` (``none``, ``cosh`` or
    ``quadratic``). ``kind="quadratic"`` is the LQ game cost, using
    ``w_x``, ``w_u`` and ``w_terminal`` as its weights.
    """

    kind: str = "goal"
    adversary: str = "quadratic"
    alpha_state: float = 1e-4
    alpha_ctrl: float = 1e-4
    w_x: list = field(default_factory=lambda: [1.0, 1.0, 0.8])
    w_u: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    w_v: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    terminal_weight: float = 10.0
    w_terminal: Optional[object] = None

    def __post_init__(self):
        if self.kind not in ("goal", "quadratic"):
            raise ValueError(f"cost kind must be 'goal' or 'quadratic', got {self.kind!r}")
        if self.adversary not in ("none", "cosh", "quadratic"):
            raise ValueError(f"adversary must be 'none', 'cosh' or 'quadratic', got {self.adversary!r}")

    def build(self, goal, gamma=1.0):
        if self.kind == "quadratic":
            return QuadraticCost(QuadraticGameParams(self.w_x, self.w_u, float(gamma), None if goal is None else tuple(goal), self.w_terminal))
        params = CostParams(
            alpha_state=self.alpha_state,
            w_x=tuple(self.w_x),
            w_u=tuple(self.w_u),
            w_v=tuple(self.w_v),
            alpha_ctrl=self.alpha_ctrl,
            gamma=float(gamma),
            x_star=tuple(goal) if goal is not None else (0.0, 0.0, 0.0),
            terminal_weight=self.terminal_weight,
        )
        return GoalCost(params, None if self.adversary == "none" else self.adversary)


@dataclass
class SolverConfig:
    """Solver settings. The line search tries ``step_factor**k`` down to
    ``step_min``; ``second_order`` switches on the full DDP expansion."""

    horizon: int = 150
    c: float = 0.5
    chi: Optional[float] = None
    max_iters: int = 50
    step_factor: float = 0.7
    step_min: float = 1e-3
    rho0: float = 1.0
    rho_min: float = 0.0
    rho_max: float = 1e10
    regularization: str = "control"
    second_order: bool = False
    expected_reduction_in: str = "rho"
    noise_variance: float = 2.0
    filter_width: int = 5
    redraw: bool = False

    def __post_init__(self):
        if not self.horizon >= 1:
            raise ValueError("horizon must be at least 1")
        if not 0 < self.step_factor < 1 or not 0 < self.step_min <= 1:
            raise ValueError("need 0 < step_factor < 1 and 0 < step_min <= 1")
        # surface option errors at load time
        self.options(0)

    def options(self, seed):
        return SolverOptions(
            c=self.c,
            chi=self.chi,
            max_iters=self.max_iters,
            step_sizes=default_step_sizes(self.step_factor, self.step_min),
            rho0=self.rho0,
            rho_min=self.rho_min,
            rho_max=self.rho_max,
            regularization=self.regularization,
            second_order=self.second_order,
            expected_reduction_in=self.expected_reduction_in,
            seed=int(seed),
            redraw=self.redraw,
            filter_width=self.filter_width,
            noise_variance=self.noise_variance,
        )


@dataclass
class ExperimentConfig:
    """What to run. ``init`` is ``"force"`` (constant generalized force
    ``init_force``) or ``"zeros"``. ``gamma_grid`` is used by ``sweep``;
    ``threshold`` is the degradation beyond which a gamma counts as
    breaking the policy."""

    x0: list = field(default_factory=lambda: [0.0] * 6)
    goal: list = field(default_factory=lambda: [2.0, 1.5, 0.0])
    gamma: float = 10.0
    gamma_grid: list = field(default_factory=lambda: [10, 5, 3, 1.5, 0.65, 0.1, 2e-3, 1e-5, 2e-5])
    seed: int = 0
    output_dir: str = "runs"
    init: str = "force"
    init_force: list = field(default_factory=lambda: [1.3, 0.8, 0.1])
    threshold: float = 0.1
    restarts: int = 3
    workers: int = 1

    def __post_init__(self):
        if self.init not in ("force", "zeros"):
            raise ValueError(f"init must be 'force' or 'zeros', got {self.init!r}")
        if not self.gamma > 0 or any(not g > 0 for g in self.gamma_grid):
            raise ValueError("gamma values must be strictly positive")
        self.gamma = float(self.gamma)
        self.gamma_grid = [float(g) for g in self.gamma_grid]


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def build_model(self):
        model = self.model.build()
        if len(self.experiment.x0) != model.n:
            raise ConfigError(f"x0 has {len(self.experiment.x0)} entries, model state has {model.n}")
        return model

    def build_cost(self, gamma=None):
        gamma = self.experiment.gamma if gamma is None else gamma
        return self.cost.build(self.experiment.goal, gamma)

    def initial_controls(self, model):
        T = self.solver.horizon
        if self.experiment.init == "zeros" or not isinstance(model, MecanumPlatform):
            return np.zeros((T, model.m))
        return model.constant_force_controls(T, self.experiment.x0[2], self.experiment.init_force)

    def with_overrides(self, solver=None, **experiment):
        """Copy with experiment (and ``solver``) fields replaced; None
        values are ignored."""
        cfg = self
        for section, changes in (("experiment", experiment), ("solver", solver or {})):
            changes = {k: v for k, v in changes.items() if v is not None}
            if not changes:
                continue
            try:
                part = dataclasses.replace(getattr(cfg, section), **changes)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
            cfg = dataclasses.replace(cfg, **{section: part})
        return cfg


_SECTIONS = {"model": ModelConfig, "cost": CostConfig, "solver": SolverConfig, "experiment": ExperimentConfig}


def from_dict(data):
    data = {} if data is None else data
    _check_keys("top level", data, _SECTIONS)
    parts = {name: _build(cls, name, data.get(name)) for name, cls in _SECTIONS.items()}
    return RunConfig(**parts)


def load_config(path):
    """Read a YAML (or JSON) run configuration. Raises :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(data)


__all__ = [
    "CostConfig",
    "ExperimentConfig",
    "ModelConfig",
    "RunConfig",
    "SolverConfig",
    "from_dict",
    "load_config",
]
