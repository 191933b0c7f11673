"""Run configuration: a YAML file validated into :class:`RunConfig`.

Unknown keys are errors.  Every constraint violation is collected and
reported together in a :class:`~acflow.errors.ConfigError`.

Minimal file::

    metric: {kind: flat-torus}
    eps: 0.05
    T: 0.1

Defaults are documented on each field below.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .manifold import MetricSpec
from .phasefield import DoubleWell, InitialInterface


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MetricConfig(_Strict):
    kind: Literal["flat-torus", "conformal-torus", "sphere"] = "flat-torus"
    side: float = Field(2.0, gt=0)
    #: grid size; when omitted it follows from ``eps`` and ``h_ratio``
    n: Optional[int] = Field(None, ge=16)
    amplitude: float = 0.0
    mode: int = 1


class InterfaceConfig(_Strict):
    #: ``circle`` (torus) or ``cap`` (sphere, polar cap ``theta < theta0``)
    kind: Literal["circle", "cap"] = "circle"
    center: tuple[float, float] = (1.0, 1.0)
    radius: float = Field(0.5, gt=0)
    theta0: float = Field(math.pi / 3, gt=0, lt=math.pi)


class WellConfig(_Strict):
    alpha: float = Field(0.6, gt=0, lt=1)


class AnchorConfig(_Strict):
    #: anchor position in chart coordinates
    y: tuple[float, float]
    s: float = Field(gt=0)


class ScanConfig(_Strict):
    lattice: int = Field(10, ge=1)
    s_values: int = Field(5, ge=1)
    density_probes: int = Field(100, ge=1)


class RunConfig(_Strict):
    metric: MetricConfig = MetricConfig()
    interface: InterfaceConfig = InterfaceConfig()
    well: WellConfig = WellConfig()
    #: a single value or a strictly decreasing list (sweep)
    eps: Union[float, list[float]]
    #: grid spacing rule ``h = eps / h_ratio`` (used when ``metric.n`` is omitted)
    h_ratio: float = Field(4.0, gt=0)
    #: time step rule ``dt <= dt_ratio * eps^2``
    dt_ratio: float = Field(0.5, gt=0)
    T: float = Field(gt=0)
    #: diagnostic sampling interval in time units; ``dt`` is shrunk to divide it
    cadence: float = Field(0.005, gt=0)
    #: ``auto`` or a list of ``{y: [a, b], s: ...}``
    anchors: Union[Literal["auto"], list[AnchorConfig]] = "auto"
    #: overrides for named ledger constants
    ledger: dict[str, float] = Field(default_factory=dict)
    scan: ScanConfig = ScanConfig()
    #: seed for random probe placement
    seed: int = 0
    #: checkpoint every ``checkpoint_every`` samples when an output directory is given (0 disables)
    checkpoint_every: int = Field(5, ge=0)
    out: str = "acflow-out"

    # ---------------------------------------------------------------- helpers
    @property
    def eps_list(self) -> list[float]:
        return [self.eps] if isinstance(self.eps, (int, float)) else list(self.eps)

    def grid_n(self, eps: float) -> int:
        if self.metric.n is not None:
            return self.metric.n
        extent = math.pi if self.metric.kind == "sphere" else self.metric.side
        n = math.ceil(extent * self.h_ratio / eps - 1e-9)
        return n + (n % 2 if self.metric.kind == "sphere" else 0)

    def grid_h(self, eps: float) -> float:
        extent = math.pi if self.metric.kind == "sphere" else self.metric.side
        return extent / self.grid_n(eps)

    def metric_spec(self, eps: float) -> MetricSpec:
        m = self.metric
        n = self.grid_n(eps)
        if m.kind == "sphere":
            return MetricSpec(kind="sphere", n_theta=n)
        return MetricSpec(kind=m.kind, side=m.side, n=n, amplitude=m.amplitude, mode=m.mode)

    def dt(self, eps: float) -> float:
        """Largest ``dt <= dt_ratio eps^2`` dividing ``cadence``."""
        k = math.ceil(self.cadence / (self.dt_ratio * eps**2) - 1e-9)
        return self.cadence / k

    def steps_per_sample(self, eps: float) -> int:
        return round(self.cadence / self.dt(eps))

    def n_samples(self) -> int:
        return round(self.T / self.cadence)

    def initial_interface(self) -> InitialInterface:
        i = self.interface
        return InitialInterface(kind=i.kind, center=tuple(i.center), radius=i.radius, theta0=i.theta0)

    def double_well(self) -> DoubleWell:
        return DoubleWell.quartic(alpha=self.well.alpha)


def _problems(cfg: RunConfig) -> list[str]:
    out = []
    eps = cfg.eps_list
    if any(e <= 0 for e in eps):
        out.append("eps: values must be positive")
    if len(eps) > 1 and any(b >= a for a, b in zip(eps, eps[1:])):
        out.append(f"eps: list must be strictly decreasing; try {sorted(set(eps), reverse=True)}")
    for e in eps:
        if e <= 0:
            continue
        h = cfg.grid_h(e)
        if e < 4 * h * (1 - 1e-9):
            src = "metric.n" if cfg.metric.n is not None else "h_ratio"
            out.append(f"eps, {src}: eps={e:g} violates eps >= 4h (h={h:g})")
    if cfg.dt_ratio > 0.5:
        out.append(f"dt_ratio: {cfg.dt_ratio:g} violates dt <= eps^2/2")
    if abs(cfg.T / cfg.cadence - round(cfg.T / cfg.cadence)) > 1e-9:
        out.append("T, cadence: T must be a multiple of cadence")
    if cfg.anchors != "auto":
        for i, a in enumerate(cfg.anchors):
            if a.s > cfg.T:
                out.append(f"anchors[{i}].s: s={a.s:g} exceeds T={cfg.T:g}")
    kind = cfg.metric.kind
    if (cfg.interface.kind == "cap") != (kind == "sphere"):
        out.append(f"interface.kind: {cfg.interface.kind!r} does not fit metric.kind {kind!r}")
    return out


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths to 1-based line numbers."""
    out: dict[tuple, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = path + (i,)
                out[p] = v.start_mark.line + 1
                walk(v, p)

    try:
        walk(yaml.compose(text), ())
    except yaml.YAMLError:
        pass
    return out


def config_from_dict(data: Any, lines: dict[tuple, int] | None = None) -> RunConfig:
    lines = lines or {}
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        probs = []
        for err in exc.errors():
            loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p in ("float", "list[float]", "function-after[...]")))
            where = ".".join(str(p) for p in loc) or "<root>"
            line = next((lines[loc[:k]] for k in range(len(loc), 0, -1) if loc[:k] in lines), None)
            at = f" (line {line})" if line else ""
            probs.append(f"{where}{at}: {err['msg']}")
        raise ConfigError(probs) from None
    probs = _problems(cfg)
    if probs:
        raise ConfigError(probs)
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"{path}: no such file"])
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError([f"{path}: YAML parse error at {where}: {getattr(exc, 'problem', exc)}"]) from None
    return config_from_dict(data, _line_index(text))


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def load_config_text(text: str) -> RunConfig:
    return config_from_dict(yaml.safe_load(text), _line_index(text))
