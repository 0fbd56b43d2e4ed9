"""Monotone bi-Lipschitz sampling functions on the circle.

Only piecewise-linear forms are supported (the sawtooth ``f(x) = {x}`` is
the one-piece case), so the slope constants are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LabError


@dataclass(frozen=True)
class Potential:
    breakpoints: tuple[float, ...] = (0.0,)
    slopes: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(s) for s in self.slopes)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        if len(bp) != len(sl) or not bp:
            raise LabError("breakpoints and slopes must have equal, nonzero length")
        if bp[0] != 0.0 or any(b >= c for b, c in zip(bp, bp[1:])) or bp[-1] >= 1.0:
            raise LabError("breakpoints must start at 0 and increase strictly inside [0, 1)")
        if any(s <= 0 for s in sl):
            raise LabError("slopes must be positive")
        widths = np.diff(np.append(bp, 1.0))
        total = float(np.dot(widths, sl))
        if abs(total - 1.0) > 1e-12:
            raise LabError(f"f(1-0) must equal 1, slopes integrate to {total}")

    @classmethod
    def sawtooth(cls) -> "Potential":
        return cls()

    @classmethod
    def piecewise_linear(cls, breakpoints, slopes) -> "Potential":
        return cls(tuple(breakpoints), tuple(slopes))

    @property
    def form(self) -> str:
        return "sawtooth" if self.slopes == (1.0,) else "piecewise-linear"

    @property
    def _cumulative(self) -> np.ndarray:
        bp = np.asarray(self.breakpoints)
        widths = np.diff(np.append(bp, 1.0))
        return np.concatenate([[0.0], np.cumsum(widths * np.asarray(self.slopes))[:-1]])

    def __call__(self, x):
        return evaluate(self, x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.asarray(self.slopes)[idx]

    def to_json(self) -> dict:
        if self.form == "sawtooth":
            return {"form": "sawtooth"}
        return {"form": "piecewise-linear", "breakpoints": list(self.breakpoints),
                "slopes": list(self.slopes)}

    @classmethod
    def from_json(cls, data: dict) -> "Potential":
        data = dict(data)
        form = data.pop("form", "sawtooth")
        if form == "sawtooth":
            if data:
                raise LabError(f"unknown keys in potential spec: {sorted(data)}")
            return cls.sawtooth()
        if form != "piecewise-linear":
            raise LabError(f"unknown potential form {form!r}")
        extra = set(data) - {"breakpoints", "slopes"}
        if extra:
            raise LabError(f"unknown keys in potential spec: {sorted(extra)}")
        return cls.piecewise_linear(data["breakpoints"], data["slopes"])


def evaluate(p: Potential, x):
    """f on the circle (x taken mod 1); right-continuous at the jump, f(0) = 0."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    x = np.where(x >= 1.0, 0.0, x)  # mod rounds tiny negatives up to 1
    if p.slopes == (1.0,):
        return x if x.ndim else float(x)
    idx = np.searchsorted(p.breakpoints, x, side="right") - 1
    bp = np.asarray(p.breakpoints)
    out = p._cumulative[idx] + np.asarray(p.slopes)[idx] * (x - bp[idx])
    return out if out.ndim else float(out)


def slope_constants(p: Potential) -> tuple[float, float]:
    return min(p.slopes), max(p.slopes)


# value of the left limit at the jump, f(1 - 0)
LEFT_LIMIT_AT_JUMP = 1.0
