"""Experiment configuration: JSON text in, validated dataclasses out."""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..exceptions import ConfigError

EXPERIMENTS = ("bias_rates", "learning_rates", "concentration", "diagnostics")


@dataclass
class ModelParams:
    p: float = 0.5
    beta: float = 1.0
    B: float = 1.0
    t_decay: float = 0.0
    gamma: float = 0.2
    alpha: float = 0.6
    r: float = 1.1
    c0: float = 1.0
    n_features: int = 256
    noise_level: float = 0.01


@dataclass
class SweepParams:
    n_list: list = field(default_factory=lambda: [250, 500, 1000, 2000, 4000])
    lambda_list: list = field(default_factory=lambda: np.geomspace(1e-6, 1e-2, 12).tolist())
    seeds: object = 20
    grid_size: int = 2048


@dataclass
class GaussianTaskParams:
    n_list: list = field(default_factory=lambda: [250, 500, 1000, 2000])
    seeds: object = 10
    noise_sd: float = 0.2
    output_bandwidth: float = 0.5
    input_bandwidth: float = 0.1
    x_grid_size: int = 64


@dataclass
class ConcentrationParams:
    dim: int = 20
    N: int = 500
    trials: int = 2000
    delta: float = 0.05
    coverage_n: int = 2000
    coverage_seeds: int = 200


@dataclass
class Tolerances:
    closed_form: float = 0.05
    sampled: float = 0.15


@dataclass
class ExperimentConfig:
    experiment: str = "bias_rates"
    master_seed: int = 0
    output_dir: str = "results"
    n_jobs: int = 1
    model: ModelParams = field(default_factory=ModelParams)
    sweep: SweepParams = field(default_factory=SweepParams)
    gaussian_task: GaussianTaskParams = field(default_factory=GaussianTaskParams)
    concentration: ConcentrationParams = field(default_factory=ConcentrationParams)
    tolerances: Tolerances = field(default_factory=Tolerances)

    @property
    def experiments(self):
        return EXPERIMENTS if self.experiment == "all" else (self.experiment,)

    def seed_list(self, which="sweep"):
        seeds = getattr(self, which).seeds
        return list(range(seeds)) if isinstance(seeds, int) else list(seeds)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        cfg = _build(cls, d, "")
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def validate(self):
        def need(ok, path, msg):
            if not ok:
                raise ConfigError(path, msg)

        need(self.experiment in EXPERIMENTS + ("all",), "experiment",
             f"must be one of {EXPERIMENTS + ('all',)}")
        need(_is_int(self.master_seed) and self.master_seed >= 0, "master_seed", "must be a nonnegative integer")
        need(_is_int(self.n_jobs) and self.n_jobs != 0, "n_jobs", "must be a nonzero integer")
        m = self.model
        need(0 < m.p < 1, "model.p", "must lie in (0, 1)")
        need(m.p < m.beta < 2, "model.beta", "must satisfy p < beta < 2")
        need(m.B > 0, "model.B", "must be > 0")
        need(m.t_decay >= 0, "model.t_decay", "must be >= 0")
        need(0 <= m.gamma < m.beta, "model.gamma", "must satisfy 0 <= gamma < beta")
        need(m.p < m.alpha <= 1, "model.alpha", "must satisfy p < alpha <= 1")
        need(m.r > 1, "model.r", "must be > 1")
        need(m.c0 > 0, "model.c0", "must be > 0")
        need(_is_int(m.n_features) and m.n_features >= 1, "model.n_features", "must be a positive integer")
        need(m.noise_level > 0, "model.noise_level", "must be > 0")
        _check_n_list(self.sweep.n_list, "sweep.n_list")
        lams = self.sweep.lambda_list
        need(isinstance(lams, list) and len(lams) >= 4 and all(0 < v < 1 for v in lams),
             "sweep.lambda_list", "needs at least 4 values in (0, 1)")
        _check_seeds(self.sweep.seeds, "sweep.seeds")
        need(_is_int(self.sweep.grid_size) and self.sweep.grid_size >= 8, "sweep.grid_size", "must be >= 8")
        g = self.gaussian_task
        _check_n_list(g.n_list, "gaussian_task.n_list", min_len=2)
        _check_seeds(g.seeds, "gaussian_task.seeds")
        need(g.noise_sd > 0, "gaussian_task.noise_sd", "must be > 0")
        need(g.output_bandwidth > 0, "gaussian_task.output_bandwidth", "must be > 0")
        need(g.input_bandwidth > 0, "gaussian_task.input_bandwidth", "must be > 0")
        need(_is_int(g.x_grid_size) and g.x_grid_size >= 1, "gaussian_task.x_grid_size", "must be >= 1")
        c = self.concentration
        need(_is_int(c.dim) and 1 <= c.dim <= 64, "concentration.dim", "must lie in 1..64")
        need(_is_int(c.N) and c.N >= 1, "concentration.N", "must be >= 1")
        need(_is_int(c.trials) and c.trials >= 500, "concentration.trials", "must be >= 500")
        need(0 < c.delta < 1, "concentration.delta", "must lie in (0, 1)")
        need(_is_int(c.coverage_n) and c.coverage_n >= 3, "concentration.coverage_n", "must be >= 3")
        need(_is_int(c.coverage_seeds) and c.coverage_seeds >= 1, "concentration.coverage_seeds", "must be >= 1")
        need(self.tolerances.closed_form > 0, "tolerances.closed_form", "must be > 0")
        need(self.tolerances.sampled > 0, "tolerances.sampled", "must be > 0")


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _check_n_list(ns, path, min_len=4):
    if not isinstance(ns, list) or len(ns) < min_len:
        raise ConfigError(path, f"needs at least {min_len} sample sizes")
    if not all(_is_int(n) and n >= 3 for n in ns):
        raise ConfigError(path, "sample sizes must be integers >= 3")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError(path, "must be strictly increasing")


def _check_seeds(seeds, path):
    if _is_int(seeds):
        if seeds < 1:
            raise ConfigError(path, "seed count must be >= 1")
        return
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError(path, "seed list is empty")
    if not all(_is_int(s) and s >= 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise ConfigError(path, "seeds must be distinct nonnegative integers")


def _build(cls, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "must be an object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, val in d.items():
        path = prefix + key
        if key not in known:
            raise ConfigError(path, "unknown field")
        default = known[key].default_factory() if callable(known[key].default_factory) else known[key].default
        if hasattr(default, "__dataclass_fields__"):
            kwargs[key] = _build(type(default), val, path + ".")
        else:
            if isinstance(default, float) and _is_int(val):
                val = float(val)
            if isinstance(default, (int, float)) and not isinstance(default, bool) and key != "seeds":
                if not isinstance(val, (int, float)) or isinstance(val, bool):
                    raise ConfigError(path, f"expected a number, got {type(val).__name__}")
            if isinstance(default, str) and not isinstance(val, str):
                raise ConfigError(path, "expected a string")
            kwargs[key] = val
    return cls(**kwargs)
