"""Symbol table: coordinates, derived velocity/deviation names, time, parameters."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from ..errors import SymbolTableError

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_INDEXED = re.compile(r"^q(\d+)$")


def velocity_name(coord: str) -> str:
    """``q3`` -> ``qd3``; any other name ``z`` -> ``dz``."""
    m = _INDEXED.match(coord)
    return f"qd{m.group(1)}" if m else f"d{coord}"


def deviation_names(coord: str) -> tuple[str, str]:
    """``q3`` -> (``e3``, ``ed3``); ``z`` -> (``e_z``, ``ed_z``)."""
    m = _INDEXED.match(coord)
    if m:
        return f"e{m.group(1)}", f"ed{m.group(1)}"
    return f"e_{coord}", f"ed_{coord}"


@dataclass(frozen=True)
class SymbolTable:
    """Immutable set of declared names.

    Velocity and deviation names are derived from the coordinates; users
    never declare them. ``in`` tests membership over every declared name.
    """

    coordinates: tuple[str, ...]
    parameters: Mapping[str, float] = field(default_factory=dict)
    time: str = "t"
    with_deviations: bool = False

    def __post_init__(self):
        coords = tuple(self.coordinates)
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "parameters",
                           MappingProxyType({k: float(v) for k, v in dict(self.parameters).items()}))
        if not coords:
            raise SymbolTableError("at least one coordinate is required")
        for name in (*coords, *self.parameters, self.time):
            if not _IDENT.match(name):
                raise SymbolTableError(f"invalid identifier {name!r}")
        groups = [("coordinate", coords), ("velocity", self.velocities),
                  ("time", (self.time,)), ("parameter", tuple(self.parameters))]
        if self.with_deviations:
            groups += [("deviation", self.deviations), ("deviation velocity", self.deviation_velocities)]
        seen: dict[str, str] = {}
        for kind, names in groups:
            for name in names:
                if name in seen:
                    raise SymbolTableError(
                        f"name {name!r} declared as both {seen[name]} and {kind}")
                seen[name] = kind

    @property
    def n(self) -> int:
        return len(self.coordinates)

    @property
    def velocities(self) -> tuple[str, ...]:
        return tuple(velocity_name(c) for c in self.coordinates)

    @property
    def deviations(self) -> tuple[str, ...]:
        return tuple(deviation_names(c)[0] for c in self.coordinates)

    @property
    def deviation_velocities(self) -> tuple[str, ...]:
        return tuple(deviation_names(c)[1] for c in self.coordinates)

    def names(self) -> tuple[str, ...]:
        out = (*self.coordinates, *self.velocities, self.time, *self.parameters)
        if self.with_deviations:
            out += (*self.deviations, *self.deviation_velocities)
        return out

    def __contains__(self, name: object) -> bool:
        return name in self.names()

    def __iter__(self):
        return iter(self.names())

    def extended(self) -> "SymbolTable":
        """Copy with the deviation symbols appended (validated for collisions)."""
        return SymbolTable(self.coordinates, dict(self.parameters), self.time, True)

    def bindings(self, t: float, q: Iterable[float], qdot: Iterable[float],
                 eps: Iterable[float] | None = None,
                 epsdot: Iterable[float] | None = None) -> dict[str, float]:
        b = dict(self.parameters)
        b[self.time] = float(t)
        b.update(zip(self.coordinates, map(float, q)))
        b.update(zip(self.velocities, map(float, qdot)))
        if eps is not None:
            b.update(zip(self.deviations, map(float, eps)))
        if epsdot is not None:
            b.update(zip(self.deviation_velocities, map(float, epsdot)))
        return b
