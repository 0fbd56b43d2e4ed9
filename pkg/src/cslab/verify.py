"""The verification suite behind ``cslab verify``.

Every check yields records ``{id, params, measured, bound, margin, passed}``
with ``margin = bound - measured`` (checks of the form measured <= bound).
Records depend only on the config and seed, never on the thread count.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np
import scipy

from . import __version__
from .arithmetic import (
    IrrationalSpec,
    beta_estimate,
    best_approximation_check,
    cf_expand,
    convergents,
    sandwich_check,
)
from .circle_maps import CircleMap, gap_statistics
from .config import ExperimentConfig
from .errors import PreconditionError
from .localization import (
    admissible_windows,
    classify,
    decay_fit,
    deviation_check,
    eigenpairs_by_index,
    poisson_residual,
    poisson_residual_extended,
    refine_pair,
    separation_scan,
    uniform_envelope,
    window_condition,
)
from .operators import (
    BoxOperator,
    build_matrix,
    det_dirichlet,
    det_periodic,
    eigenvalue_curves,
    eigenvalues,
    global_horizontal_check,
    green_from_diagonal,
    horizontal_check,
    jump_interlacing_check,
    lipschitz_check,
    transfer_from_diagonal,
    transfer_identities,
    vertical_check,
)
from .spectral import (
    Model,
    dos_histogram,
    ids,
    ids_lipschitz_check,
    ldt_sweep,
    lyapunov,
    lyapunov_lower_bound,
    thouless_check,
)

REPORT_SCHEMA = "cslab-report/1"


@dataclass(frozen=True)
class Record:
    id: str
    params: dict
    measured: float
    bound: float
    passed: bool
    extra: dict | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "params": self.params, "measured": _num(self.measured),
               "bound": _num(self.bound), "margin": _num(self.bound - self.measured),
               "pass": bool(self.passed)}
        if self.extra:
            out["extra"] = {k: _num(v) if isinstance(v, float) else v for k, v in self.extra.items()}
        return out


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _le(cid: str, params: dict, measured: float, bound: float, **extra) -> Record:
    return Record(cid, params, float(measured), float(bound), bool(measured <= bound), extra or None)


def _flag(cid: str, params: dict, ok: bool, **extra) -> Record:
    """A yes/no check: measured 0 when it holds, 1 otherwise, against bound 0."""
    return Record(cid, params, 0.0 if ok else 1.0, 0.0, bool(ok), extra or None)


# -- continued fractions --------------------------------------------------------

def _closed_form_convergents(a: int, depth: int) -> list[tuple[int, int]]:
    """p_k/q_k of [a, a, a, ...] from the Binet-type sequence s_{j+1} = a s_j + s_{j-1}."""
    s = [0, 1]
    while len(s) < depth + 3:
        s.append(a * s[-1] + s[-2])
    # for a constant expansion p_k = s_k and q_k = s_{k+1}
    return [(s[k], s[k + 1]) for k in range(1, depth + 1)]


def check_continued_fractions(cfg: ExperimentConfig, threads: int) -> list[Record]:
    out = []
    for name, a in (("golden", 1), ("silver", 2)):
        spec = IrrationalSpec.constant(a)
        cf = cf_expand(spec, 20)
        got = convergents(cf)[:20]
        want = _closed_form_convergents(a, 20)
        mism = sum(1 for g, w in zip(got, want) if tuple(g) != tuple(w))
        dets = all(cf.p(k) * cf.q(k - 1) - cf.p(k - 1) * cf.q(k) == (-1) ** (k - 1)
                   for k in range(1, 21))
        out.append(_le("cf-convergents", {"alpha": name, "depth": 20}, mism + (0 if dets else 1), 0))
        best = best_approximation_check(spec, cf, 10_000)
        out.append(_flag("cf-best-approximation", {"alpha": name, "q_cap": 10_000},
                         all(best.values()), scales=len(best)))
        sw = sandwich_check(spec, cf)
        out.append(_flag("cf-sandwich", {"alpha": name, "depth": 20}, all(sw.values()), scales=len(sw)))
    return out


# -- gap statistics -------------------------------------------------------------------

def check_gaps(cfg: ExperimentConfig, threads: int) -> list[Record]:
    rng = np.random.default_rng([cfg.seed, 2])
    out = []
    for cmap, mcfg in zip(cfg.circle_maps(), cfg.maps):
        for x in (0.0, float(rng.random())):
            for k in range(2, 11):
                g = gap_statistics(cmap, x, k, cfg.tolerances.gap_slack)
                cf = cmap.continued_fraction(k)
                counts = g["large_count"] == cf.q(k - 1) and g["small_count"] == cf.q(k) - cf.q(k - 1)
                out.append(_flag("gap-statistics", {"map": mcfg.kind, "x": x, "k": k},
                                 g["bounds_ok"] and counts,
                                 large=g["large_count"], small=g["small_count"]))
    return out


# -- operator oracles ---------------------------------------------------------------

def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _dense_periodic(d: np.ndarray) -> np.ndarray:
    n = len(d)
    H = np.diag(d) + np.eye(n, k=1) + np.eye(n, k=-1)
    H[0, -1] += 1.0
    H[-1, 0] += 1.0
    return H


def check_operator_oracles(cfg: ExperimentConfig, threads: int) -> list[Record]:
    rng = np.random.default_rng([cfg.seed, 3])
    pot = cfg.potential_fn()
    maps = cfg.circle_maps()
    rtol = cfg.tolerances.oracle_rtol
    worst = {"det-dirichlet": 0.0, "det-periodic": 0.0, "transfer": 0.0, "green": 0.0, "eigenvalues": 0.0}
    for _ in range(200):
        cmap = maps[int(rng.integers(len(maps)))]
        n = int(rng.integers(3, 65))
        lam = float(rng.uniform(0.0, 20.0))
        x = float(rng.random())
        E = float(rng.uniform(-3.0, lam + 3.0))
        box = BoxOperator(lam, pot, cmap, x, n)
        d = box.diagonal()
        H = build_matrix(box)
        s, ld = np.linalg.slogdet(H - E * np.eye(n))
        got = det_dirichlet(box, E)
        worst["det-dirichlet"] = max(worst["det-dirichlet"], _rel(float(got), s * math.exp(ld)))
        Hp = _dense_periodic(d)
        s, ld = np.linalg.slogdet(Hp - E * np.eye(n))
        got = det_periodic(BoxOperator(lam, pot, cmap, x, n, "periodic"), E)
        worst["det-periodic"] = max(worst["det-periodic"], _rel(float(got), s * math.exp(ld)))
        # M_n from a dense product of the one-step matrices
        M = np.eye(2)
        for v in d:
            M = np.array([[E - v, -1.0], [1.0, 0.0]]) @ M
        tp = transfer_from_diagonal(d, E)
        for i in range(2):
            for j in range(2):
                worst["transfer"] = max(worst["transfer"], _rel(float(tp.entry(i, j)), M[i, j]))
        for key, (entry, det) in transfer_identities(d, E).items():
            if n >= 2:
                worst["transfer"] = max(worst["transfer"], _rel(float(entry), float(det)))
        a = int(rng.integers(0, n))
        b = int(rng.integers(a, n))
        G = np.linalg.inv(H[a:b + 1, a:b + 1] - E * np.eye(b - a + 1))
        for row in range(a, b + 1):
            ga = float(green_from_diagonal(d, E, a, b, row, a))
            gb = float(green_from_diagonal(d, E, a, b, row, b))
            worst["green"] = max(worst["green"], _rel(ga, G[0, row - a]), _rel(gb, G[row - a, -1]))
        for boundary, dense in (("dirichlet", H), ("periodic", Hp)):
            ev = eigenvalues(BoxOperator(lam, pot, cmap, x, n, boundary))
            ref = np.linalg.eigvalsh(dense)
            worst["eigenvalues"] = max(worst["eigenvalues"],
                                       float(np.max(np.abs(ev - ref) / np.maximum(np.abs(ref), 1.0))))
    out = [_le(f"oracle-{k}", {"boxes": 200, "n_max": 64}, v, rtol) for k, v in worst.items()]
    out.append(_transfer_det_record(cfg))
    return out


def _transfer_det_record(cfg: ExperimentConfig) -> Record:
    """det M_n = 1 with the product formed in extended precision."""
    rng = np.random.default_rng([cfg.seed, 4])
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    worst = 0.0
    ctx = mpmath.MPContext()
    for n in (1, 2, 10, 100, 1000):
        for lam in (0.0, cfg.lam):
            x = float(rng.random())
            E = float(rng.uniform(-2.5, lam + 2.5))
            d = BoxOperator(lam, pot, cmap, x, n).diagonal()
            growth = math.log(2.0 + lam + abs(E) + 1.0)
            ctx.dps = 40 + int(n * growth / math.log(10))
            M = ctx.eye(2)
            for v in d:
                M = ctx.matrix([[ctx.mpf(E) - ctx.mpf(float(v)), -1], [1, 0]]) * M
            worst = max(worst, float(abs(ctx.det(M) - 1)))
    return _le("transfer-determinant", {"n": [1, 2, 10, 100, 1000]}, worst, 1e-10)


# -- eigenvalue curves -------------------------------------------------------------

def check_curves(cfg: ExperimentConfig, threads: int) -> list[Record]:
    out = []
    pot = cfg.potential_fn()
    slack = cfg.tolerances.slack
    for cmap, mcfg in zip(cfg.circle_maps(), cfg.maps):
        for k in cfg.scales:
            rng = np.random.default_rng([cfg.seed, 5, k])
            curves = eigenvalue_curves(cfg.lam, cmap, pot, k, cfg.phase_grid, threads=threads)
            p = {"map": mcfg.kind, "k": k, "qk": curves.qk, "lambda": cfg.lam}
            for cid, res in (
                ("curves-lipschitz", lipschitz_check(curves, rng, 2000, slack)),
                ("curves-horizontal", horizontal_check(cfg.lam, pot, cmap, k, rng, 1000, slack, threads)),
                ("curves-global", global_horizontal_check(curves, rng, 2000, slack)),
                ("curves-vertical", vertical_check(curves, 0.5, slack)),
                ("curves-jump-interlacing", jump_interlacing_check(curves, slack)),
            ):
                extra = {k2: v for k2, v in res.extra.items()}
                extra["pairs"] = res.pairs
                out.append(_le(cid, p, res.measured, res.bound, **extra))
    return out


# -- Lyapunov exponent ---------------------------------------------------------------

def _spectrum_energies(model: Model, count: int, shift: float = 0.5) -> list[float]:
    lo, hi = model.spectrum_bounds()
    return [lo + (hi - lo) * (i + shift) / count for i in range(count)]


def check_lyapunov(cfg: ExperimentConfig, threads: int) -> list[Record]:
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    free = lyapunov(Model(0.0, pot, cmap), 3.0, 100_000, 4, threads=threads)
    exact = math.acosh(1.5)
    out = [_le("lyapunov-free", {"lambda": 0.0, "E": 3.0, "n": 100_000},
               abs(free.value - exact), 1e-4, value=free.value, exact=exact)]
    model = Model(cfg.lam, pot, cmap)
    lb = lyapunov_lower_bound(model)
    for E in _spectrum_energies(model, 20):
        est = lyapunov(model, E, 10_000, cfg.samples, threads=threads)
        # measured <= bound form: lower bound - estimate <= 3 stderr
        out.append(_le("lyapunov-lower-bound", {"lambda": cfg.lam, "E": E, "n": 10_000},
                       lb - est.value, 3 * est.stderr, value=est.value, lower_bound=lb))
    return out


# -- integrated density of states --------------------------------------------------

def check_ids(cfg: ExperimentConfig, threads: int) -> list[Record]:
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    n = 4096
    energies = list(np.linspace(-1.99, 1.99, 201))
    est = ids(Model(0.0, pot, cmap), energies, n, 1, threads=threads)
    worst = max(abs(e.value - (1 - math.acos(e.E / 2) / math.pi)) for e in est)
    out = [_le("ids-free", {"lambda": 0.0, "n": n, "energies": len(energies)}, worst, 2 / n + 1e-3)]
    model = Model(cfg.lam, pot, cmap)
    rng = np.random.default_rng([cfg.seed, 6])
    lo, hi = model.spectrum_bounds()
    worst_excess = -math.inf
    ok = True
    for _ in range(50):
        E, E2 = (float(v) for v in rng.uniform(lo, hi, 2))
        r = ids_lipschitz_check(model, E, E2, n, cfg.samples, threads=threads)
        worst_excess = max(worst_excess, r.lhs - r.bound)
        ok = ok and r.ok
    out.append(_le("ids-lipschitz", {"lambda": cfg.lam, "n": n, "pairs": 50}, worst_excess, 0.0))
    return out


# -- Thouless formula -----------------------------------------------------------

def check_thouless(cfg: ExperimentConfig, threads: int) -> list[Record]:
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    out = []
    for lam in (0.0, cfg.lam):
        model = Model(lam, pot, cmap)
        hist = dos_histogram(model, 4096, cfg.samples, 4096, threads)
        for E in _spectrum_energies(model, 10, shift=0.37):
            r = thouless_check(model, E, 4096, cfg.samples, hist=hist, threads=threads)
            out.append(_le("thouless", {"lambda": lam, "E": E, "n": 4096, "samples": cfg.samples},
                           r.gap, cfg.tolerances.thouless, lhs=r.lhs, rhs=r.rhs))
    return out


# -- large deviations ---------------------------------------------------------------

LDT_SCALES = (7, 8, 9, 10)


def check_ldt(cfg: ExperimentConfig, threads: int) -> list[Record]:
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    model = Model(cfg.lam, pot, cmap)
    lo, hi = model.spectrum_bounds()
    E = 0.5 * (lo + hi)
    L = lyapunov(model, E, 100_000, 8, threads=threads).value
    delta = L / 2
    sw = ldt_sweep(model, E, LDT_SCALES, delta, L)
    out = []
    for r in sw.reports:
        out.append(_le("ldt-components", {"E": E, "k": r.k, "qk": r.qk, "delta": delta},
                       r.component_count, r.qk, log_mass=r.log_mass))
    steps = [b - a for a, b in zip(sw.ratios, sw.ratios[1:])]
    p = {"E": E, "qk": [r.qk for r in sw.reports], "delta": delta}
    # literal reading: ln(mass)/q_k strictly decreasing, and C_0 delta > 0
    out.append(_le("ldt-ratio-decreasing", p, max(steps), 0.0,
                   ratios=list(sw.ratios), rate=sw.rate))
    masses = [r.log_mass for r in sw.reports]
    # decay reading: the mass falls at every scale with a positive fitted rate
    out.append(_le("ldt-mass-decay", p, max(max(b - a for a, b in zip(masses, masses[1:])), -sw.rate),
                   0.0, rate=sw.rate, C0=sw.C0))
    return out


# -- localization -------------------------------------------------------------------

def select_interior_pairs(box: BoxOperator, count: int, clearance: int):
    """``count`` eigenpairs nearest the middle of the spectrum with centre at
    least ``clearance`` sites from both box edges."""
    n = box.n
    chosen = []
    lo = hi = n // 2
    step = max(count, 16)
    while len(chosen) < count and (lo > 0 or hi < n):
        new_lo, new_hi = max(0, lo - step), min(n, hi + step)
        fresh = []
        if new_lo < lo:
            fresh += eigenpairs_by_index(box, new_lo, lo)
        if new_hi > hi:
            fresh += eigenpairs_by_index(box, hi, new_hi)
        lo, hi = new_lo, new_hi
        chosen += [p for p in fresh if clearance <= p.n0 < n - clearance]
        chosen.sort(key=lambda p: (abs(p.index + 0.5 - n / 2), p.index))
    if len(chosen) < count:
        raise PreconditionError("not enough interior eigenpairs")
    return sorted(chosen[:count], key=lambda p: p.index)


def check_localization(cfg: ExperimentConfig, threads: int) -> list[Record]:
    pot = cfg.potential_fn()
    cmap = cfg.circle_maps()[0]
    n = 2048
    k = cfg.eigfunc.k
    cf = cmap.continued_fraction(k + 3)
    q, q1 = cf.q(k), cf.q(k + 1)
    beta_hat = beta_estimate(cf, k).proxy
    box = BoxOperator(cfg.lam, pot, cmap, cmap.forward(0.0, -n // 2), n)
    model = Model(cfg.lam, pot, cmap)
    margin = math.ceil(q / 5)
    pairs = select_interior_pairs(box, cfg.eigfunc.pairs, q + q1)
    pairs = [decay_fit(p, cfg.eigfunc.floor, margin) for p in pairs]
    tol = cfg.tolerances
    base = {"lambda": cfg.lam, "n": n, "qk": q}
    worst = {"poisson": 0.0, "poisson-double": -math.inf, "deviation": -math.inf}
    singular_n0 = 0
    sep_bad = 0
    for p in pairs:
        refined = refine_pair(box, p)
        for a, b in ((p.n0 - 10, p.n0 + 20), (p.n0 - q // 2, p.n0 + q - 1 - q // 2), (p.n0 + 5, p.n0 + 5 + q)):
            worst["poisson"] = max(worst["poisson"], poisson_residual_extended(box, p, a, b, refined=refined))
            ratio = poisson_residual(box, p, a, b) / (tol.poisson * window_condition(box, p.E, a, b))
            worst["poisson-double"] = max(worst["poisson-double"], ratio)
        L = lyapunov(model, p.E, 100_000, 8, threads=threads).value
        delta = L / 2
        if not classify(box, p.E, p.n0, L - delta, k).regular:
            singular_n0 += 1
        sites = range(p.n0 - q1, p.n0 + q1)
        sep = separation_scan(box, p.E, k, delta, L, sites, beta_hat)
        if not sep.ok:
            sep_bad += 1
        for s in sep.singular:
            ex, _ = deviation_check(box, p.E, s, q, L, delta, tol.deviation_slack)
            worst["deviation"] = max(worst["deviation"], ex)
    out = [
        _le("poisson-identity", base, worst["poisson"], tol.poisson, precision="extended"),
        _le("poisson-identity-double", base, worst["poisson-double"], 1.0),
        _le("decay-rate", base, -min(p.rate for p in pairs), 0.0),
        _le("decay-fit-quality", base, -min(p.fit_quality for p in pairs), -tol.fit_quality),
        _le("center-singular", base, len(pairs) - singular_n0, 0),
        _le("singular-deviation", base, worst["deviation"], tol.deviation_slack),
        _le("separation", base, sep_bad, 0),
    ]
    env = uniform_envelope(pairs)
    out.append(_le("uniform-envelope", base, len(env.violations), 0, C=env.C, c=env.c,
                   localized=env.localized, tail_excess=env.tail_excess))
    out.append(_flag("uniform-envelope-rate", base, env.c > 0 and env.localized, c=env.c))
    return out


# -- determinism -------------------------------------------------------------------

def check_determinism(cfg: ExperimentConfig, threads: int) -> list[Record]:
    """A threaded group recomputed with a different worker count must serialise identically."""
    a = json.dumps([r.to_json() for r in check_lyapunov(cfg, 1)], sort_keys=True)
    b = json.dumps([r.to_json() for r in check_lyapunov(cfg, max(2, threads))], sort_keys=True)
    return [_flag("determinism", {"group": "lyapunov", "threads": [1, max(2, threads)]}, a == b)]


GROUPS: dict[str, tuple[Callable[[ExperimentConfig, int], list[Record]], tuple[str, ...]]] = {
    "continued-fractions": (check_continued_fractions,
                            ("cf-convergents", "cf-best-approximation", "cf-sandwich")),
    "gaps": (check_gaps, ("gap-statistics",)),
    "oracles": (check_operator_oracles,
                ("oracle-det-dirichlet", "oracle-det-periodic", "oracle-transfer", "oracle-green",
                 "oracle-eigenvalues", "transfer-determinant")),
    "curves": (check_curves, ("curves-lipschitz", "curves-horizontal", "curves-global",
                              "curves-vertical", "curves-jump-interlacing")),
    "lyapunov": (check_lyapunov, ("lyapunov-free", "lyapunov-lower-bound")),
    "ids": (check_ids, ("ids-free", "ids-lipschitz")),
    "thouless": (check_thouless, ("thouless",)),
    "ldt": (check_ldt, ("ldt-components", "ldt-ratio-decreasing", "ldt-mass-decay")),
    "localization": (check_localization,
                     ("poisson-identity", "poisson-identity-double", "decay-rate", "decay-fit-quality",
                      "center-singular", "singular-deviation", "separation", "uniform-envelope",
                      "uniform-envelope-rate")),
    "determinism": (check_determinism, ("determinism",)),
}

CHECK_IDS = tuple(cid for _, ids_ in GROUPS.values() for cid in ids_)


def group_of(check_id: str) -> str:
    if check_id in GROUPS:
        return check_id
    for g, (_, ids_) in GROUPS.items():
        if check_id in ids_:
            return g
    raise KeyError(check_id)


def environment_stamp() -> dict:
    import numba

    return {"cslab": __version__, "python": platform.python_version(),
            "implementation": platform.python_implementation(), "machine": platform.machine(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "mpmath": mpmath.__version__}


def run_suite(cfg: ExperimentConfig, threads: int = 1, only: str | None = None,
              progress: Callable[[str], None] | None = None) -> dict:
    """Run every group (or the one holding ``only``) and assemble the report."""
    if only is not None:
        try:
            groups = [group_of(only)]
        except KeyError:
            raise PreconditionError(f"unknown check id {only!r}") from None
    else:
        groups = list(GROUPS)
    records: list[Record] = []
    for g in groups:
        if progress:
            progress(g)
        fn, _ = GROUPS[g]
        recs = fn(cfg, threads)
        if only is not None and only != g:
            recs = [r for r in recs if r.id == only]
        records.extend(recs)
    expected = [only] if only is not None and only not in GROUPS else \
        [cid for g in groups for cid in GROUPS[g][1]]
    seen = {r.id for r in records}
    for cid in expected:
        if cid not in seen:
            records.append(Record(cid, {}, math.inf, 0.0, False, {"missing": True}))
    checks = [r.to_json() for r in records]
    by_id: dict[str, bool] = {}
    for r in records:
        by_id[r.id] = by_id.get(r.id, True) and r.passed
    return {
        "schema": REPORT_SCHEMA,
        "config": cfg.to_json(),
        "environment": environment_stamp(),
        "checks": checks,
        "summary": {"records": len(checks), "failed_records": sum(not c["pass"] for c in checks),
                    "ids": {cid: ok for cid, ok in by_id.items()},
                    "passed": all(by_id.values())},
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
