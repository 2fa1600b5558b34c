"""Strict JSON run configurations for the command-line tools."""

from __future__ import annotations

import json
import os
from dataclasses import MISSING, dataclass, field, fields, is_dataclass
from typing import Any

from .exceptions import ConfigError
from .fields import Constant, GaussianBump
from .geometry import Domain

FORCING_KINDS = ("constant", "gaussian", "two-gaussian")


def _build(cls, data, where):
    """Instantiate dataclass ``cls`` from a dict, rejecting unknown or missing keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    by_key = {f.metadata.get("key", f.name): f for f in fields(cls)}
    unknown = set(data) - set(by_key)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for key, f in by_key.items():
        if key not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ConfigError(f"{where}: missing key {key!r}")
            continue
        sub = f.metadata.get("type")
        val = data[key]
        kw[f.name] = _build(sub, val, f"{where}.{key}") if sub is not None and val is not None else val
    obj = cls(**kw)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def _dump(obj):
    out = {}
    for f in fields(obj):
        val = getattr(obj, f.name)
        out[f.metadata.get("key", f.name)] = _dump(val) if is_dataclass(val) else val
    return out


def _nested(cls, **kw):
    return field(default_factory=cls, metadata={"type": cls, **kw})


class _Config:
    def to_dict(self) -> dict:
        return _dump(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d, cls.__name__)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


@dataclass
class DomainConfig(_Config):
    kind: str = "rectangle"
    bounds: list = field(default_factory=lambda: [[0.0, 1.0], [0.0, 1.0]])
    origin: Any = "center"

    def validate(self):
        self.domain()

    def domain(self) -> Domain:
        try:
            return Domain.from_dict({"kind": self.kind, "bounds": self.bounds, "origin": self.origin})
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad domain: {exc}") from exc


@dataclass
class ForcingConfig(_Config):
    kind: str = "constant"
    params: dict = field(default_factory=dict)

    _KEYS = {
        "constant": {"value"},
        "gaussian": {"centre", "eps", "amplitude"},
        "two-gaussian": {"eps", "amplitude", "ratio", "centres"},
    }

    def validate(self):
        if self.kind not in FORCING_KINDS:
            raise ConfigError(f"forcing kind must be one of {FORCING_KINDS}, got {self.kind!r}")
        unknown = set(self.params) - self._KEYS[self.kind]
        if unknown:
            raise ConfigError(f"forcing {self.kind}: unknown params {sorted(unknown)}")

    def field(self, dim: int, k: float):
        p = self.params
        if self.kind == "constant":
            return Constant(complex(p.get("value", 1.0)), dim)
        if self.kind == "gaussian":
            # single Gaussian source, unit amplitude by default
            c = p.get("centre", [0.5] * dim)
            return GaussianBump(c, p.get("eps", 1e-4), p.get("amplitude", 1.0))
        # two sources with a k^2 amplitude by default
        eps = p.get("eps", 1e-4)
        amp = p.get("amplitude", k**2)
        c1, c2 = p.get("centres", [[0.5, 0.5], [0.75, 0.25]])
        return GaussianBump(c1, eps, amp) + GaussianBump(c2, eps, p.get("ratio", 0.8) * amp)


@dataclass
class FemSolveConfig(_Config):
    domain: DomainConfig = _nested(DomainConfig)
    h: float = 0.0625
    k: float = 10.0
    gamma1: float | None = None
    gamma2: float | None = None
    lam: float | None = field(default=None, metadata={"key": "lambda"})
    f: ForcingConfig = _nested(ForcingConfig)
    element: str | None = None
    grid: int = 65
    export: str | None = None
    report: str | None = None
    seed: int = 0
    deterministic: bool = True
    quad_order: int | None = None

    def validate(self):
        if not self.h > 0 or not self.k > 0:
            raise ConfigError("h and k must be positive")
        if self.gamma2 is not None and self.lam is not None:
            raise ConfigError("give either gamma2 or lambda, not both")
        if self.grid < 2:
            raise ConfigError("grid must be >= 2")


@dataclass
class FeaturesConfig(_Config):
    P: int = 32
    R: int = 4
    spread: float = 0.1


@dataclass
class NetConfig(_Config):
    h_g: int = 32
    h_m: int = 64
    alpha_g: float = 0.05


@dataclass
class WeightsConfig(_Config):
    gamma1: float = 2.0
    gamma_bnd: float = 50.0
    ridge: Any = "auto"
    boundary_weight: float = 50.0
    physical: float = 1.0


@dataclass
class ScheduleConfig(_Config):
    iterations: int = 2000
    n_interior: int = 4096
    n_boundary: int = 1024
    lr: float = 1e-3
    lr_min: float = 1e-5
    horizon: int | None = None
    freeze: list = field(default_factory=list)
    lbfgs_iters: int = 0
    lbfgs_interior: int = 8192
    lbfgs_boundary: int = 2048


@dataclass
class NNTrainConfig(_Config):
    domain: DomainConfig = _nested(DomainConfig)
    k: float = 100.0
    f: ForcingConfig = field(default_factory=lambda: ForcingConfig("two-gaussian", {}),
                             metadata={"type": ForcingConfig})
    features: FeaturesConfig = _nested(FeaturesConfig)
    net: NetConfig = _nested(NetConfig)
    weights: WeightsConfig = _nested(WeightsConfig)
    schedule: ScheduleConfig = _nested(ScheduleConfig)
    ls_init: bool = True
    ls_interior: int = 4096
    ls_boundary: int = 1024
    export_every: int = field(default=0, metadata={"key": "export-every"})
    export: str | None = None
    report: str | None = None
    grid: int = 65
    seed: int = 0
    deterministic: bool = True
    quad_order: int | None = None

    def validate(self):
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if self.export_every < 0:
            raise ConfigError("export-every must be >= 0")


@dataclass
class ConvergenceConfig(_Config):
    k: list = field(default_factory=lambda: [3.141592653589793])
    h: list | None = None
    kh: float | None = None
    f: float = 1.0
    element: str = "quintic-hermite-1d"
    domain: DomainConfig = field(default_factory=lambda: DomainConfig("interval", [[0.0, 1.0]]),
                                 metadata={"type": DomainConfig})
    export: str | None = None
    report: str | None = None
    seed: int = 0
    deterministic: bool = True
    quad_order: int | None = None

    def validate(self):
        if not self.k or any(not kk > 0 for kk in self.k):
            raise ConfigError("k must be a non-empty list of positive numbers")
        if self.h is None and self.kh is None:
            self.h = [1.0 / 2**j for j in range(3, 8)]
        if self.h is not None and self.kh is not None:
            raise ConfigError("give either h or kh")
        if self.h is not None and (not self.h or any(not hh > 0 for hh in self.h)):
            raise ConfigError("h must be a non-empty list of positive numbers")


def thread_limit(deterministic: bool):
    """Worker cap: 1 in deterministic mode, else HVP_THREADS if set."""
    if deterministic:
        return 1
    env = os.environ.get("HVP_THREADS")
    if env is None:
        return None
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"HVP_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("HVP_THREADS must be >= 1")
    return n
