"""Exception types shared across the lab.

Every error carries a short machine-readable ``code`` so the CLI can emit
a stable error JSON (exit status 2).
"""

from __future__ import annotations

import os


class LabError(Exception):
    code = "runtime-error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_json(self) -> dict:
        return {"error": self.code, "message": str(self), "details": self.details}


class InsufficientPrecision(LabError):
    code = "insufficient-precision"


class RationalInput(LabError):
    code = "rational-input"


class DepthTooSmall(LabError):
    code = "depth-too-small"


class CapExceeded(LabError):
    code = "cap-exceeded"


class RootFindFailure(LabError):
    code = "root-find-failure"


class BracketFailure(LabError):
    code = "bracket-failure"


class NearSingularWindow(LabError):
    code = "near-singular-window"


class IterationStall(LabError):
    code = "iteration-stall"


class TooFewPoints(LabError):
    code = "too-few-points"


class PreconditionError(LabError):
    code = "precondition"


class DeltaTooLarge(LabError):
    code = "delta-too-large"


class EnergyOnAtom(LabError):
    code = "E-on-atom"


class ConfigError(LabError):
    code = "invalid-config"


# default size caps; CSL_CAP_OVERRIDE (unsafe) lifts all of them to its value
_DEFAULT_CAPS = {
    "dense": 4096,
    "eigen_dirichlet": 8192,
    "eigen_periodic": 4096,
    "partition": 100_000,
    "exhaustive": 10_000,
    "eigenvector": 8192,
}


def cap(name: str) -> int:
    value = _DEFAULT_CAPS[name]
    override = os.environ.get("CSL_CAP_OVERRIDE")
    if override:
        try:
            value = max(value, int(override))
        except ValueError:
            raise ConfigError(f"CSL_CAP_OVERRIDE must be an integer, got {override!r}")
    return value


def check_cap(name: str, size: int) -> None:
    limit = cap(name)
    if size > limit:
        raise CapExceeded(f"{name} cap exceeded: {size} > {limit}", cap=name, size=size, limit=limit)
