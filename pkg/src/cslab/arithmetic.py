"""Continued fractions, convergents and distances to the integers.

The canonical representation of a rotation number is its digit sequence
``a_1, a_2, ...``.  Numeric inputs (expressions such as ``"(sqrt(5)-1)/2"``)
are expanded once with interval arithmetic so that every digit is
certified; all bounds downstream use exact integers and fractions.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath
from mpmath.ctx_iv import MPIntervalContext
from mpmath.libmp import to_rational

from .errors import (
    DepthTooSmall,
    InsufficientPrecision,
    LabError,
    PreconditionError,
    RationalInput,
)

DEFAULT_PRECISION = 1024
DEFAULT_PRECISION_CAP = 16384

_RULES = ("constant", "periodic", "tabulated", "liouville")


@dataclass(frozen=True)
class IrrationalSpec:
    """How to obtain the digits of an irrational number in (0, 1).

    ``mode="digits"`` generates ``a_k`` from a rule: ``constant`` and
    ``periodic`` repeat ``digits``, ``tabulated`` uses them verbatim and
    ``liouville`` produces ``a_k = ceil(exp(c q_{k-1}) / q_{k-1})``.
    ``mode="numeric"`` expands ``value`` (an arithmetic expression) with
    interval arithmetic at ``precision_bits``, doubling on failure up to
    ``max_precision_bits``.
    """

    mode: str = "digits"
    rule: str = "constant"
    digits: tuple[int, ...] = (1,)
    liouville_c: float = 1.0
    value: str | None = None
    precision_bits: int = DEFAULT_PRECISION
    max_precision_bits: int = DEFAULT_PRECISION_CAP

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(a) for a in self.digits))
        if self.mode == "digits":
            if self.rule not in _RULES:
                raise LabError(f"unknown digit rule {self.rule!r}")
            if self.rule != "liouville":
                if not self.digits or any(a < 1 for a in self.digits):
                    raise LabError("digits must be positive integers")
            elif self.liouville_c <= 0:
                raise LabError("liouville_c must be positive")
        elif self.mode == "numeric":
            if not self.value:
                raise LabError("numeric mode needs a value expression")
        else:
            raise LabError(f"unknown mode {self.mode!r}")

    @classmethod
    def golden(cls) -> "IrrationalSpec":
        return cls(rule="constant", digits=(1,))

    @classmethod
    def silver(cls) -> "IrrationalSpec":
        """sqrt(2) - 1 = [2, 2, 2, ...]."""
        return cls(rule="constant", digits=(2,))

    @classmethod
    def constant(cls, a: int) -> "IrrationalSpec":
        return cls(rule="constant", digits=(a,))

    @classmethod
    def periodic(cls, block: Sequence[int]) -> "IrrationalSpec":
        return cls(rule="periodic", digits=tuple(block))

    @classmethod
    def tabulated(cls, digits: Sequence[int]) -> "IrrationalSpec":
        return cls(rule="tabulated", digits=tuple(digits))

    @classmethod
    def liouville(cls, c: float) -> "IrrationalSpec":
        return cls(rule="liouville", digits=(), liouville_c=float(c))

    @classmethod
    def numeric(cls, value: str, precision_bits: int = DEFAULT_PRECISION,
                max_precision_bits: int = DEFAULT_PRECISION_CAP) -> "IrrationalSpec":
        return cls(mode="numeric", rule="constant", digits=(1,), value=str(value),
                   precision_bits=precision_bits, max_precision_bits=max_precision_bits)

    def to_json(self) -> dict:
        if self.mode == "numeric":
            return {"mode": "numeric", "value": self.value,
                    "precision_bits": self.precision_bits,
                    "max_precision_bits": self.max_precision_bits}
        out = {"mode": "digits", "rule": self.rule}
        if self.rule == "liouville":
            out["c"] = self.liouville_c
        else:
            out["digits"] = list(self.digits)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "IrrationalSpec":
        data = dict(data)
        mode = data.pop("mode", "digits")
        if mode not in ("digits", "numeric"):
            raise LabError(f"unknown alpha mode {mode!r}")
        if mode == "numeric":
            allowed = {"value", "precision_bits", "max_precision_bits"}
            _reject_unknown(data, allowed)
            return cls.numeric(data["value"], data.get("precision_bits", DEFAULT_PRECISION),
                               data.get("max_precision_bits", DEFAULT_PRECISION_CAP))
        _reject_unknown(data, {"rule", "digits", "c"})
        rule = data.get("rule", "constant")
        if rule == "liouville":
            return cls.liouville(data.get("c", 1.0))
        return cls(rule=rule, digits=tuple(data.get("digits", (1,))))


def _reject_unknown(data: dict, allowed: set) -> None:
    extra = set(data) - allowed
    if extra:
        raise LabError(f"unknown keys in alpha spec: {sorted(extra)}")


@dataclass(frozen=True)
class ContinuedFraction:
    digits: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if not self.convergents:
            object.__setattr__(self, "convergents", tuple(_recurrence(self.digits)))

    @property
    def depth(self) -> int:
        return len(self.digits)

    def q(self, k: int) -> int:
        """Denominator q_k; q_{-1} = 0 and q_0 = 1."""
        if k == -1:
            return 0
        if k == 0:
            return 1
        if k > self.depth:
            raise DepthTooSmall(f"q_{k} needs depth {k}, have {self.depth}")
        return self.convergents[k - 1][1]

    def p(self, k: int) -> int:
        if k == -1:
            return 1
        if k == 0:
            return 0
        if k > self.depth:
            raise DepthTooSmall(f"p_{k} needs depth {k}, have {self.depth}")
        return self.convergents[k - 1][0]

    def index_of(self, qk: int) -> int:
        """Smallest k >= 1 with q_k == qk."""
        for k, (_, q) in enumerate(self.convergents, start=1):
            if q == qk:
                return k
        raise LabError(f"{qk} is not a convergent denominator at depth {self.depth}")

    def to_json(self) -> dict:
        return {"digits": list(self.digits),
                "convergents": [[str(p), str(q)] for p, q in self.convergents]}


def _recurrence(digits: Sequence[int]) -> list[tuple[int, int]]:
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    out = []
    for a in digits:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append((p, q))
    return out


def convergents(cf: ContinuedFraction) -> list[tuple[int, int]]:
    return list(cf.convergents)


# -- expansion ---------------------------------------------------------------

def _digits_from_rule(spec: IrrationalSpec, depth: int) -> list[int]:
    if spec.rule == "constant":
        return [spec.digits[0]] * depth
    if spec.rule == "periodic":
        block = spec.digits
        return [block[i % len(block)] for i in range(depth)]
    if spec.rule == "tabulated":
        if depth > len(spec.digits):
            raise DepthTooSmall(f"only {len(spec.digits)} tabulated digits, asked for {depth}")
        return list(spec.digits[:depth])
    return _liouville_digits(spec.liouville_c, depth)


# exp(c q) beyond this many bits is not representable in practice
_LIOUVILLE_MAX_BITS = 1 << 22


def _liouville_digits(c: float, depth: int) -> list[int]:
    digits: list[int] = []
    q_prev, q = 0, 1
    for _ in range(depth):
        bits = int(c * q / math.log(2)) + 128
        if bits > _LIOUVILLE_MAX_BITS:
            raise DepthTooSmall(
                f"Liouville digit after q={q} needs ~{bits} bits; depth {len(digits)} is the limit")
        ctx = mpmath.MPContext()
        ctx.prec = bits
        a = int(ctx.ceil(ctx.exp(ctx.mpf(c) * q) / q))
        a = max(a, 1)
        digits.append(a)
        q_prev, q = q, a * q + q_prev
    return digits


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _evaluate(expr: str, ctx) -> object:
    """Evaluate a small arithmetic expression in ``ctx`` (None: exact Fractions)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise LabError(f"cannot parse alpha expression {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            text = ast.get_source_segment(expr, node) or repr(node.value)
            return Fraction(text) if ctx is None else ctx.mpf(text)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            left, right = ev(node.left), ev(node.right)
            if ctx is None and isinstance(node.op, ast.Pow):
                if right.denominator != 1:
                    raise _NotRational
                return left ** int(right)
            return _BINOPS[type(node.op)](left, right)
        if isinstance(node, ast.Name) and node.id in ("pi", "e"):
            if ctx is None:
                raise _NotRational
            return getattr(ctx, node.id)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in ("sqrt", "exp", "log", "sin", "cos") and len(node.args) == 1):
            if ctx is None:
                raise _NotRational
            return getattr(ctx, node.func.id)(ev(node.args[0]))
        raise LabError(f"unsupported element in alpha expression {expr!r}")

    return ev(tree)


class _NotRational(Exception):
    pass


@lru_cache(maxsize=256)
def _numeric_enclosure(expr: str, bits: int) -> tuple[Fraction, Fraction]:
    try:
        exact = _evaluate(expr, None)
        return exact, exact
    except _NotRational:
        pass
    ctx = MPIntervalContext()
    ctx.prec = bits
    val = _evaluate(expr, ctx)
    lo, hi = val._mpi_
    return Fraction(*map(int, to_rational(lo))), Fraction(*map(int, to_rational(hi)))


def _expand_interval(lo: Fraction, hi: Fraction, depth: int) -> list[int]:
    if not (0 < lo and hi < 1):
        if hi <= 0 or lo >= 1:
            raise PreconditionError("alpha must lie strictly in (0, 1)")
        raise InsufficientPrecision("enclosure of alpha straddles 0 or 1")
    digits: list[int] = []
    for _ in range(depth):
        inv_lo, inv_hi = 1 / hi, 1 / lo
        a_lo, a_hi = math.floor(inv_lo), math.floor(inv_hi)
        if a_lo != a_hi:
            raise InsufficientPrecision(f"digit {len(digits) + 1} not certified", digits=digits)
        digits.append(a_lo)
        lo, hi = inv_lo - a_lo, inv_hi - a_lo
        if lo == 0:
            if hi == 0:
                raise RationalInput(f"expansion terminates after {digits}", digits=digits)
            raise InsufficientPrecision("remainder enclosure touches 0", digits=digits)
    return digits


def cf_expand(spec: IrrationalSpec, depth: int) -> ContinuedFraction:
    if depth < 1:
        raise PreconditionError("depth must be >= 1")
    if spec.mode == "digits":
        return ContinuedFraction(tuple(_digits_from_rule(spec, depth)))
    bits = spec.precision_bits
    while True:
        lo, hi = _numeric_enclosure(spec.value, bits)
        try:
            return ContinuedFraction(tuple(_expand_interval(lo, hi, depth)))
        except InsufficientPrecision:
            if bits * 2 > spec.max_precision_bits:
                raise InsufficientPrecision(
                    f"{depth} digits of {spec.value} not certified at {bits} bits",
                    precision_bits=bits)
            bits *= 2


@dataclass(frozen=True)
class BetaProxy:
    k_min: int
    values: tuple[float, ...]
    proxy: float


def beta_estimate(cf: ContinuedFraction, k_min: int) -> BetaProxy:
    """Finite-depth proxy: max over k >= k_min of ln(q_{k+1}) / q_k."""
    if k_min < 0:
        raise PreconditionError("k_min must be >= 0")
    if cf.depth < k_min + 1:
        raise DepthTooSmall(f"beta proxy from k_min={k_min} needs depth {k_min + 1}")
    values = tuple(math.log(cf.q(k + 1)) / cf.q(k) for k in range(k_min, cf.depth))
    return BetaProxy(k_min, values, max(values))


# -- enclosures of alpha and of n*alpha --------------------------------------

@lru_cache(maxsize=256)
def alpha_bounds(spec: IrrationalSpec, bits: int = 256) -> tuple[Fraction, Fraction]:
    """Exact rational bounds lo <= alpha <= hi with hi - lo < 2**-bits."""
    if spec.mode == "numeric":
        b = max(bits + 32, spec.precision_bits)
        while True:
            lo, hi = _numeric_enclosure(spec.value, b)
            if hi - lo < Fraction(1, 1 << bits):
                return lo, hi
            if b * 2 > max(spec.max_precision_bits, 4 * bits):
                raise InsufficientPrecision(f"cannot enclose alpha to {bits} bits")
            b *= 2
    if spec.rule == "liouville":
        return _liouville_bounds(spec, bits)
    depth = 2
    while True:
        try:
            cf = cf_expand(spec, depth)
        except DepthTooSmall as exc:
            raise InsufficientPrecision(f"cannot enclose alpha to {bits} bits: {exc}")
        pk, qk = cf.convergents[-2]
        pk1, qk1 = cf.convergents[-1]
        if qk * qk1 > (1 << bits):
            a, b = Fraction(pk, qk), Fraction(pk1, qk1)
            return min(a, b), max(a, b)
        depth *= 2


def _liouville_bounds(spec: IrrationalSpec, bits: int) -> tuple[Fraction, Fraction]:
    # |alpha - p_K/q_K| < 1/(q_K q_{K+1}) <= 1/(q_K exp(c q_K)), and the sign
    # of alpha - p_K/q_K is (-1)^K; the huge next digit is never materialised
    c = spec.liouville_c
    depth = 1
    while True:
        cf = cf_expand(spec, depth)
        qk = cf.q(depth)
        if c * qk / math.log(2) + math.log2(qk) > bits + 1:
            r = Fraction(cf.p(depth), qk)
            width = Fraction(1, 1 << (bits + 1))
            return (r, r + width) if depth % 2 == 0 else (r - width, r)
        depth += 1


def alpha_float(spec: IrrationalSpec) -> float:
    lo, hi = alpha_bounds(spec, 80)
    return float((lo + hi) / 2)


@lru_cache(maxsize=64)
def alpha_fixed_point(spec: IrrationalSpec, bits: int = 192) -> int:
    """floor(alpha * 2**bits), certified up to one unit."""
    lo, _ = alpha_bounds(spec, bits + 8)
    return math.floor(lo * (1 << bits))


@dataclass(frozen=True)
class CertifiedReal:
    """A real number known to lie in [lo, hi]."""

    lo: Fraction
    hi: Fraction

    @property
    def value(self) -> Fraction:
        return (self.lo + self.hi) / 2

    @property
    def error(self) -> Fraction:
        return (self.hi - self.lo) / 2

    def __float__(self) -> float:
        return float(self.value)

    def mpf(self, prec: int = 256):
        ctx = mpmath.MPContext()
        ctx.prec = prec
        v = self.value
        return ctx.mpf(v.numerator) / v.denominator


def dist_to_integers(n: int, spec: IrrationalSpec, guard: int = 64) -> CertifiedReal:
    """||n alpha|| with relative certified error at most 2**-guard."""
    if n < 1:
        raise PreconditionError("n must be a positive integer")
    bits = guard + 2 * n.bit_length() + 64
    for _ in range(12):
        try:
            lo, hi = alpha_bounds(spec, bits)
        except InsufficientPrecision as exc:
            raise InsufficientPrecision(f"||{n} alpha|| not certified: {exc}")
        x_lo, x_hi = n * lo, n * hi
        m = round((x_lo + x_hi) / 2)
        d1, d2 = x_lo - m, x_hi - m
        if d1 * d2 > 0 or (d1 == 0 and d2 == 0):
            a, b = sorted((abs(d1), abs(d2)))
            if a > 0 and (b - a) <= a / (1 << guard):
                return CertifiedReal(a, b)
        bits *= 2
    raise InsufficientPrecision(f"||{n} alpha|| not certified at {bits} bits")


def signed_deviation(k: int, cf: ContinuedFraction, spec: IrrationalSpec, bits: int = 256) -> CertifiedReal:
    """Enclosure of q_k alpha - p_k (its sign alternates with k)."""
    lo, hi = alpha_bounds(spec, bits + 2 * cf.q(k).bit_length())
    q, p = cf.q(k), cf.p(k)
    return CertifiedReal(q * lo - p, q * hi - p)


def nalpha_distance_table(spec: IrrationalSpec, n_max: int, bits: int = 160) -> tuple[list[int], list[int]]:
    """Integer enclosures of 2**bits * ||n alpha|| for n = 0..n_max.

    Returns (lower, upper) lists; entry n satisfies
    lower[n] <= 2**bits ||n alpha|| <= upper[n].
    """
    scale = 1 << bits
    half = scale >> 1
    a_lo = alpha_fixed_point(spec, bits)
    lower, upper = [], []
    for n in range(n_max + 1):
        lo = (n * a_lo) % scale
        hi = lo + n + 1  # alpha * 2**bits < a_lo + 1
        if hi <= half:
            lower.append(lo)
            upper.append(hi)
        elif lo >= half:
            lower.append(scale - hi)
            upper.append(scale - lo)
        else:
            lower.append(min(lo, scale - hi))
            upper.append(half)
    return lower, upper


def best_approximation_check(spec: IrrationalSpec, cf: ContinuedFraction,
                             n_cap: int = 10_000) -> dict[int, bool]:
    """For each k with q_{k+1} <= n_cap: ||q_k alpha|| <= ||n alpha|| for 1 <= n < q_{k+1}.

    Exhaustive over n, decided with certified integer enclosures.
    """
    ks = [k for k in range(0, cf.depth) if cf.q(k + 1) <= n_cap]
    if not ks:
        return {}
    n_max = max(cf.q(k + 1) for k in ks)
    lower, upper = nalpha_distance_table(spec, n_max)
    result = {}
    for k in ks:
        qk, qk1 = cf.q(k), cf.q(k + 1)
        ok = True
        for n in range(1, qk1):
            if n == qk:
                continue
            if upper[qk] > lower[n]:
                ok = False
                break
        result[k] = ok
    return result


def sandwich_check(spec: IrrationalSpec, cf: ContinuedFraction) -> dict[int, bool]:
    """1/(2 q_{k+1}) <= ||q_k alpha|| <= 1/q_{k+1}, exactly, for every k < depth."""
    out = {}
    for k in range(1, cf.depth):
        qk, qk1 = cf.q(k), cf.q(k + 1)
        d = dist_to_integers(qk, spec)
        out[k] = Fraction(1, 2 * qk1) <= d.lo and d.hi <= Fraction(1, qk1)
    return out


def alternation_check(spec: IrrationalSpec, cf: ContinuedFraction) -> bool:
    """p_k/q_k - alpha has sign (-1)^(k+1)."""
    lo, hi = alpha_bounds(spec, 2 * cf.q(cf.depth).bit_length() + 64)
    for k in range(1, cf.depth + 1):
        r = Fraction(cf.p(k), cf.q(k))
        expected = 1 if k % 2 == 1 else -1
        if expected > 0 and not r > hi:
            return False
        if expected < 0 and not r < lo:
            return False
    return True
