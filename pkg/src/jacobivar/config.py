"""Line-oriented system files.

::

    # pendulum
    name = pendulum
    coordinates = [q1]
    lagrangian = qd1^2/2 + g*cos(q1)
    param.g = 9.81
    q0 = [1.0]
    qdot0 = [0.0]
    eps0 = [1.0]
    method = rk4
    dt = 1e-3
    t_end = 10

Circular-orbit stability files use ``potential`` (in ``r``), ``radius``
and ``param.*`` instead of the coordinate keys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dynamics import IntegrationSettings
from .errors import ConfigError, JacobivarError
from .expr import parse
from .state import FlowState
from .variational import LagrangianSystem

SYSTEM = "system"
ORBIT = "orbit"

_REQUIRED = {
    SYSTEM: ("coordinates", "lagrangian", "q0", "qdot0"),
    ORBIT: ("potential", "radius"),
}
_VECTORS = {"coordinates", "q0", "qdot0", "eps0", "epsdot0"}
_NUMBERS = {"dt", "t_end", "t0", "output_every", "atol", "rtol", "tau", "total_time",
            "radius", "h", "eps_z0", "epsdot_z0", "periods", "samples", "delta"}
_TEXT = {"name", "lagrangian", "method", "potential"}


@dataclass
class SystemConfig:
    name: str
    path: Optional[Path]
    coordinates: tuple = ()
    lagrangian: str = ""
    parameters: dict = field(default_factory=dict)
    q0: tuple = ()
    qdot0: tuple = ()
    eps0: Optional[tuple] = None
    epsdot0: Optional[tuple] = None
    t0: float = 0.0
    method: str = "rk4"
    dt: float = 1e-3
    t_end: float = 10.0
    output_every: Optional[float] = None
    atol: float = 1e-9
    rtol: float = 1e-9
    tau: float = 1.0
    total_time: float = 1000.0
    delta: float = 1e-6
    # circular-orbit stability
    potential: str = ""
    radius: float = 0.0
    h: float = 0.0
    eps_z0: float = 1e-3
    epsdot_z0: float = 0.0
    periods: float = 5.0
    samples: int = 64

    @property
    def n(self) -> int:
        return len(self.coordinates)

    def system(self) -> LagrangianSystem:
        try:
            return LagrangianSystem.from_text(list(self.coordinates), self.lagrangian,
                                              self.parameters)
        except JacobivarError as exc:
            raise ConfigError(f"{self._where()}: {exc}") from exc

    def initial_state(self) -> FlowState:
        n = self.n
        eps = self.eps0 if self.eps0 is not None else (0.0,) * n
        epsdot = self.epsdot0 if self.epsdot0 is not None else (0.0,) * n
        return FlowState(self.t0, self.q0, self.qdot0, eps, epsdot)

    def integration(self) -> IntegrationSettings:
        return IntegrationSettings(t_end=self.t_end, method=self.method, dt=self.dt,
                                   atol=self.atol, rtol=self.rtol,
                                   output_every=self.output_every)

    def _where(self) -> str:
        return str(self.path) if self.path else "<config>"


def _number(text: str, key: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{where}: {key} must be finite")
    return value


def _vector(text: str, key: str, where: str, numeric: bool):
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"{where}: {key} expects a bracketed list like [a, b]")
    body = text[1:-1].strip()
    items = [x.strip() for x in body.split(",")] if body else []
    if any(not x for x in items):
        raise ConfigError(f"{where}: {key} has an empty entry")
    if numeric:
        return tuple(_number(x, key, where) for x in items)
    return tuple(items)


def parse_config(text: str, path: Optional[Path] = None, kind: str = SYSTEM) -> SystemConfig:
    where = str(path) if path else "<config>"
    raw: dict[str, tuple[int, str]] = {}
    params: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value'")
        if key.startswith("param."):
            pname = key[len("param."):]
            if not pname.isidentifier():
                raise ConfigError(f"{where}:{lineno}: bad parameter name {pname!r}")
            params[pname] = _number(value, key, f"{where}:{lineno}")
            continue
        if key not in _VECTORS | _NUMBERS | _TEXT:
            raise ConfigError(f"{where}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r}")
        raw[key] = (lineno, value)

    missing = [k for k in _REQUIRED[kind] if k not in raw]
    if missing:
        raise ConfigError(f"{where}: missing required key {missing[0]!r}")

    cfg = SystemConfig(name=raw.get("name", (0, path.stem if path else "system"))[1],
                       path=path, parameters=params)
    for key, (lineno, value) in raw.items():
        loc = f"{where}:{lineno}"
        if key in _VECTORS:
            setattr(cfg, key, _vector(value, key, loc, numeric=key != "coordinates"))
        elif key in _NUMBERS:
            num = _number(value, key, loc)
            setattr(cfg, key, int(num) if key == "samples" else num)
        elif key != "name":
            setattr(cfg, key, value)

    if kind == SYSTEM:
        n = cfg.n
        if n == 0:
            raise ConfigError(f"{where}: coordinates must not be empty")
        for key in ("q0", "qdot0", "eps0", "epsdot0"):
            vec = getattr(cfg, key)
            if vec is not None and len(vec) != n:
                raise ConfigError(f"{where}: {key} has {len(vec)} entries but there are "
                                  f"{n} coordinates")
        try:
            parse(cfg.lagrangian)
        except JacobivarError as exc:
            raise ConfigError(f"{where}: lagrangian: {exc}") from exc
        cfg.system()        # symbol checks
    else:
        try:
            parse(cfg.potential)
        except JacobivarError as exc:
            raise ConfigError(f"{where}: potential: {exc}") from exc
    return cfg


def load_config(path, kind: str = SYSTEM) -> SystemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_config(text, path, kind)
