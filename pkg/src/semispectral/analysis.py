"""Checks of the continuity hierarchy on concrete observables.

Targets are either finite objects (:class:`DiscretePOVM`, :class:`DiscretePVM`,
:class:`VonNeumannTriplet`) or a :class:`KernelModel`: a convolution-type
kernel over a spectrum interval, standing for ``F(delta) = int mu_delta(x) dQ_x``.
For kernel models operator norms are computed as ``||F(delta)|| = sup_x mu_delta(x)``
over the spectrum, sampled on an explicit window that each report records.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .kernels import ConvolutionKernel, IntervalSet, modulus_scan
from .operators import operator_norm
from .povm import DiscretePOVM, DiscretePVM, OutcomeGrid, RingSet, evaluate
from .reconstruction import KernelMatrix, VonNeumannTriplet

VERDICTS = ("holds", "fails", "inconclusive", "impossible")


@dataclass
class PropertyReport:
    property: str
    verdict: str
    residuals: list[tuple[int, float]] = field(default_factory=list)
    witness: str | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "fails" and not self.witness:
            raise ValueError("a failing report needs a witness")

    @property
    def ok(self) -> bool:
        return self.verdict != "fails"

    def to_json(self) -> dict:
        out = {
            "property": self.property,
            "verdict": self.verdict,
            "residuals": [[int(n), float(r)] for n, r in self.residuals],
            "witness": self.witness,
        }
        if self.details:
            out["details"] = _jsonable(self.details)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "residual"])
        for n, r in self.residuals:
            w.writerow([int(n), repr(float(r))])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- kernel models ------------------------------------------------------------


@dataclass(frozen=True)
class FunctionKernel:
    """A kernel given by an arbitrary callable ``func(delta, xs) -> values``.

    ``tail_scale`` sizes the windows used on unbounded spectra;
    ``lipschitz`` is an optional slope bound used by :func:`strong_feller_check`.
    """

    func: Callable
    tail_scale: float = 1.0
    lipschitz: float | None = None

    def __call__(self, delta, x):
        return np.asarray(self.func(delta, np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class KernelModel:
    """The observable ``int mu_delta(x) dQ_x`` with ``x`` ranging over ``spectrum``."""

    kernel: ConvolutionKernel | FunctionKernel
    spectrum: tuple[float, float] = (0.0, 1.0)
    samples: int = 4001
    pad: float = 5.0

    @property
    def tail_scale(self) -> float:
        if isinstance(self.kernel, ConvolutionKernel):
            return self.kernel.profile.tail_scale
        return self.kernel.tail_scale

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(e) for e in self.spectrum)

    def window(self, *sets: IntervalSet) -> tuple[float, float]:
        """Finite stand-in for the spectrum: infinite ends are replaced by
        ``pad * tail_scale`` beyond the outermost finite endpoint of ``sets``."""
        lo, hi = self.spectrum
        ends = [e for s in sets for e in s.finite_endpoints] or [0.0]
        if not math.isfinite(lo):
            lo = min(ends) - self.pad * self.tail_scale
        if not math.isfinite(hi):
            hi = max(ends) + self.pad * self.tail_scale
        return float(lo), float(hi)

    def mu(self, delta: IntervalSet, xs):
        return np.asarray(self.kernel(delta, xs), dtype=float)

    def sup(self, func: Callable, window: tuple[float, float]) -> tuple[float, float]:
        """``(max, argmax)`` of a scalar function of ``x`` on ``window``: dense sampling, then
        a bounded local search around the best sample."""
        lo, hi = window
        xs = np.linspace(lo, hi, self.samples)
        vals = np.asarray(func(xs), dtype=float)
        i = int(np.argmax(vals))
        best, arg = float(vals[i]), float(xs[i])
        if 0 < i < len(xs) - 1:
            res = minimize_scalar(lambda t: -float(func(np.array([t]))[0]),
                                  bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun > best:
                best, arg = float(-res.fun), float(res.x)
        return best, arg

    def norm(self, delta: IntervalSet) -> tuple[float, float]:
        """``||F(delta)|| = sup_x mu_delta(x)`` and the maximizing ``x``."""
        if not delta:
            return 0.0, float("nan")
        return self.sup(lambda xs: self.mu(delta, xs), self.window(delta))


def _finite_target(target):
    if isinstance(target, VonNeumannTriplet):
        return target.povm
    if isinstance(target, DiscretePVM):
        return target.as_povm()
    if isinstance(target, DiscretePOVM):
        return target
    return None


# -- uniform continuity ---------------------------------------------------------


def _check_descending(family, limit):
    sets = list(family) + [limit]
    for n, (a, b) in enumerate(zip(sets, sets[1:]), start=1):
        if not b <= a:
            raise ValueError(f"family is not descending at position {n}")


def uniform_continuity_check(target, family: Sequence, limit, eps: float = 1e-6) -> PropertyReport:
    """Residuals ``||F(delta_n) - F(delta*)||`` along a descending family ``delta_n -> delta*``.

    The verdict holds when the last residual is below ``eps``. Kernel models
    fail when the residuals stall above half the first one and are
    inconclusive when they shrink without reaching ``eps``. For kernel
    models with a compactly supported profile and spectrum inside ``[0, 1]``,
    ``details["bound"]`` holds ``M |(delta_n - delta*) & [-1, 1]|`` and
    ``details["bound_ok"]`` whether every residual respects it.
    """
    family = list(family)
    if not family:
        raise ValueError("empty family")
    _check_descending(family, limit)
    finite = _finite_target(target)
    residuals: list[tuple[int, float]] = []
    details: dict = {}
    if finite is not None:
        ref = evaluate(finite, limit)
        for n, delta in enumerate(family, start=1):
            residuals.append((n, operator_norm(evaluate(finite, delta) - ref)))
        witness = None
        if residuals[-1][1] >= eps:
            witness = f"set {family[-1].cells} vs limit {limit.cells}"
        verdict = "holds" if residuals[-1][1] < eps else "fails"
        details["regime"] = "finite POVM"
        return PropertyReport("uniform-continuity", verdict, residuals, witness, details)

    model: KernelModel = target
    windows, args = [], []
    for n, delta in enumerate(family, start=1):
        win = model.window(delta, limit)
        r, x = model.sup(lambda xs, d=delta: model.mu(d, xs) - model.mu(limit, xs), win)
        residuals.append((n, r))
        windows.append(win)
        args.append(x)
    details["windows"] = windows
    details["argmax"] = args
    kernel = model.kernel
    if (isinstance(kernel, ConvolutionKernel) and math.isfinite(kernel.profile.support[0])
            and model.spectrum[0] >= 0 and model.spectrum[1] <= 1):
        m_bound = kernel.profile.density_bound
        unit = IntervalSet.interval(-1.0, 1.0)
        bound = [m_bound * ((d - limit) & unit).measure() for d in family]
        details["bound"] = bound
        details["bound_ok"] = bool(all(r <= b * (1 + 1e-9) + 1e-12
                                       for (_, r), b in zip(residuals, bound)))
    last = residuals[-1][1]
    if last < eps:
        return PropertyReport("uniform-continuity", "holds", residuals, None, details)
    if last < 0.5 * residuals[0][1]:
        # still shrinking, just not below eps within this family
        return PropertyReport("uniform-continuity", "inconclusive", residuals, None, details)
    witness = (f"x={args[-1]!r}: mu(delta_{len(family)}) - mu(limit) = {last!r} "
               f"on window {windows[-1]}")
    return PropertyReport("uniform-continuity", "fails", residuals, witness, details)


def halflines_family(n_max: int = 10, start: float = 0.0) -> tuple[list[IntervalSet], IntervalSet]:
    """``(-inf, start - n)`` for ``n = 1..n_max``, decreasing to the empty set."""
    return [IntervalSet.below(start - n) for n in range(1, n_max + 1)], IntervalSet.empty()


def shrinking_family(n_max: int = 100, at: float = 0.0) -> tuple[list[IntervalSet], IntervalSet]:
    """``[at, at + 1/n]`` for ``n = 1..n_max``, decreasing to ``{at}``."""
    return [IntervalSet.interval(at, at + 1.0 / n) for n in range(1, n_max + 1)], IntervalSet.point(at)


def dyadic_family(n_max: int = 30, at: float = 0.0) -> tuple[list[IntervalSet], IntervalSet]:
    """``[at, at + 2**-n]`` for ``n = 1..n_max``, decreasing to ``{at}``."""
    return [IntervalSet.interval(at, at + 2.0**-n) for n in range(1, n_max + 1)], IntervalSet.point(at)


# -- strong Feller ------------------------------------------------------------


def _escape_mass(model: KernelModel, side: str, anchor: float, n_max: int = 10):
    """Mass that ``mu_(.)(x)`` keeps on ever-farther half-lines as ``x`` runs to an infinite end."""
    s = model.tail_scale
    series = []
    for n in range(1, n_max + 1):
        if side == "left":
            cut = anchor - n * s
            delta, x = IntervalSet.below(cut), cut - model.pad * s
        else:
            cut = anchor + n * s
            delta, x = IntervalSet.above(cut), cut + model.pad * s
        series.append((float(model.mu(delta, np.array([x]))[0]), x))
    return series


def strong_feller_check(target, intervals: Sequence = (), step: float = 1e-2,
                        slope_cap: float | None = None) -> PropertyReport:
    """Continuity of ``lambda -> mu_delta(lambda)`` for each listed set.

    For every set the sampled modulus of continuity at ``step`` must stay
    under ``cap * step`` (``cap`` from ``slope_cap`` or the kernel's Lipschitz
    bound); without any cap it must at least halve when the step shrinks
    eightfold. When the spectrum is unbounded the kernel must also extend
    continuously to the compactified spectrum, which fails when mass escapes
    to infinity along half-lines. Finite targets hold trivially.
    """
    finite = _finite_target(target)
    if finite is not None:
        return PropertyReport("strong-feller", "holds", [], None,
                              {"regime": "finite spectrum; every function on it is continuous"})
    model: KernelModel = target
    kernel = model.kernel
    residuals, moduli, pairs = [], [], []
    witness = None
    for i, delta in enumerate(intervals, start=1):
        win = model.window(delta)
        mod, pair = modulus_scan(model.mu, delta, win, step)
        cap = slope_cap
        if cap is None and isinstance(kernel, ConvolutionKernel):
            cap = kernel.lipschitz_bound(delta)
        if cap is None and isinstance(kernel, FunctionKernel):
            cap = kernel.lipschitz
        if cap is not None:
            ok = mod <= cap * step * (1 + 1e-9) + 1e-12
        else:
            fine, _ = modulus_scan(model.mu, delta, win, step / 8)
            ok = mod <= 1e-12 or fine <= 0.5 * mod
        residuals.append((i, mod))
        moduli.append({"set": delta.to_json(), "modulus": mod, "cap": cap, "pair": pair})
        pairs.append(pair)
        if not ok and witness is None:
            witness = (f"mu_delta jumps by {mod!r} between x={pair[0]!r} and x'={pair[1]!r} "
                       f"for delta={delta.to_json()}")
    details: dict = {"step": step, "moduli": moduli}
    if witness is None and not model.bounded:
        anchor_sets = [d for d in intervals if d.finite_endpoints]
        ends = [e for d in anchor_sets for e in d.finite_endpoints] or [0.0]
        for side, anchor, inf in (("left", min(ends), model.spectrum[0]),
                                  ("right", max(ends), model.spectrum[1])):
            if math.isfinite(inf):
                continue
            series = _escape_mass(model, side, anchor)
            details[f"escape_{side}"] = [m for m, _ in series]
            mass, x = series[-1]
            if mass > 0.5:
                witness = (f"mass {mass!r} of mu(x) at x={x!r} sits on a half-line receding to "
                           f"{'-' if side == 'left' else '+'}inf; mu has no continuous "
                           "extension to the compactified spectrum")
                break
    verdict = "fails" if witness else "holds"
    return PropertyReport("strong-feller", verdict, residuals, witness, details)


# -- sigma additivity -----------------------------------------------------------


def sigma_additivity_check(mu, partitions: Sequence[Sequence[RingSet]],
                           tol: float = 1e-12) -> PropertyReport:
    """``|sum_i mu_{delta_i} - mu_{U delta_i}|`` per row and partition.

    ``mu`` is a :class:`KernelMatrix` or any callable mapping a ring set to
    the vector of its kernel values. A partition covering the whole grid is
    also compared against 1, since each row is a probability measure.
    """
    residuals, witness = [], None
    for n, parts in enumerate(partitions, start=1):
        parts = list(parts)
        if not parts:
            raise ValueError("empty partition")
        grid = parts[0].grid
        union = RingSet(grid, ())
        for p in parts:
            if len(union & p):
                raise ValueError(f"partition {n} has overlapping members")
            union = union | p
        total = sum(np.asarray(mu(p), dtype=float) for p in parts)
        res = np.abs(total - np.asarray(mu(union), dtype=float))
        if union.cells == grid.everything().cells:
            res = np.maximum(res, np.abs(total - 1.0))
        r = float(np.max(res))
        residuals.append((n, r))
        if r > tol and witness is None:
            witness = f"partition {n} ({[p.cells for p in parts]}), row {int(np.argmax(res))}"
    verdict = "fails" if witness else "holds"
    return PropertyReport("sigma-additivity", verdict, residuals, witness)


def cell_partitions(grid: OutcomeGrid) -> list[list[RingSet]]:
    """Every run of adjacent cells split into single cells, plus every two-block cut of the grid."""
    out = []
    for i in range(grid.m):
        for j in range(i, grid.m):
            out.append([RingSet(grid, (k,)) for k in range(i, j + 1)])
    for cut in range(1, grid.m):
        out.append([RingSet(grid, range(cut)), RingSet(grid, range(cut, grid.m))])
    return out


# -- norm-1 ---------------------------------------------------------------------


def norm1_check(target, widths: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                points: Sequence[float] | None = None, tol: float = 1e-9) -> PropertyReport:
    """Norm-1 property, or its necessary condition on vanishing point masses.

    Finite targets are decided directly: every nonzero cell must have norm 1
    (larger ring sets then follow, being bounded below by a cell). For kernel
    models the series ``max_lambda ||F([lambda, lambda + h])||`` is reported;
    if it vanishes linearly in ``h`` the point masses are zero and norm 1 is
    impossible, otherwise the outcome is inconclusive.
    """
    finite = _finite_target(target)
    if finite is not None:
        residuals, witness = [], None
        for j, eff in enumerate(finite.effects):
            nrm = operator_norm(eff)
            residuals.append((j, nrm))
            if nrm > tol and abs(nrm - 1) > tol and witness is None:
                witness = f"cell {j} has norm {nrm!r}"
        return PropertyReport("norm-1", "fails" if witness else "holds", residuals, witness)

    model: KernelModel = target
    widths = [float(h) for h in widths]
    if any(b >= a for a, b in zip(widths, widths[1:])) or widths[-1] <= 0:
        raise ValueError("width schedule must decrease to 0")
    if points is None:
        lo, hi = model.window(IntervalSet.interval(0.0, 0.0))
        points = np.linspace(lo, hi, 5)[1:-1].tolist()
    residuals = []
    for n, h in enumerate(widths, start=1):
        residuals.append((n, max(model.norm(IntervalSet.interval(p, p + h))[0] for p in points)))
    details: dict = {"widths": widths, "points": list(points)}
    if isinstance(model.kernel, ConvolutionKernel):
        details["bound"] = [model.kernel.profile.density_bound * h for h in widths]
    vals = [r for _, r in residuals]
    vanishing = (all(b <= a for a, b in zip(vals, vals[1:]))
                 and vals[-1] <= 2.0 * vals[0] / widths[0] * widths[-1])
    verdict = "impossible" if vanishing else "inconclusive"
    return PropertyReport("norm-1", verdict, residuals, None, details)


# -- absolute continuity --------------------------------------------------------


@dataclass(frozen=True)
class DominatingMeasure:
    """A finite or infinite measure on interval sets or ring sets."""

    func: Callable
    total: float
    name: str = "nu"

    def __call__(self, delta) -> float:
        return float(self.func(delta))

    @classmethod
    def lebesgue(cls, lo: float = -math.inf, hi: float = math.inf, scale: float = 1.0):
        """``scale * |delta & [lo, hi]|``."""
        window = IntervalSet.interval(lo, hi)
        return cls(lambda d: scale * (_as_intervals(d) & window).measure(),
                   scale * (hi - lo), f"{scale}*Lebesgue[{lo},{hi}]")

    @classmethod
    def counting_cells(cls, grid: OutcomeGrid):
        return cls(lambda d: float(len(d)), float(grid.m), "cell count")


def _as_intervals(delta) -> IntervalSet:
    if isinstance(delta, RingSet):
        return IntervalSet(tuple(delta.intervals()))
    return delta


def _random_interval_sets(rng: np.random.Generator, n: int, lo: float, hi: float):
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        ends = np.sort(rng.uniform(lo, hi, size=2 * k))
        out.append(IntervalSet(tuple(zip(ends[::2], ends[1::2]))))
    return out


def absolute_continuity_constant(target, nu: DominatingMeasure, samples: Sequence | None = None,
                                 seed: int = 42, tol: float = 1e-12) -> PropertyReport:
    """Estimate ``c = max ||F(delta)|| / nu(delta)`` over sample sets.

    Sets with ``nu(delta) = 0`` must have ``||F(delta)|| <= tol``; otherwise
    the report fails with that set as witness. When the estimate holds and
    ``nu`` is finite, a uniform-continuity check on half-lines is attached
    under ``details["uniform_continuity"]``.
    """
    rng = np.random.default_rng(seed)
    finite = _finite_target(target) if not isinstance(target, DiscretePVM) else None
    if isinstance(target, DiscretePVM):
        pvm = target

        def norm(d):
            return 1.0 if any(p in d for p in pvm.points) else 0.0

        if samples is None:
            samples = ([IntervalSet.point(p) for p in pvm.points]
                       + _random_interval_sets(rng, 50, min(pvm.points) - 1, max(pvm.points) + 1))
    elif finite is not None:
        def norm(d):
            return operator_norm(evaluate(finite, d))

        if samples is None:
            m = finite.m
            samples = [RingSet(finite.grid, (j,)) for j in range(m)]
            for _ in range(50):
                size = int(rng.integers(1, m + 1))
                samples.append(RingSet(finite.grid, rng.choice(m, size=size, replace=False)))
    else:
        model: KernelModel = target

        def norm(d):
            return model.norm(d)[0]

        if samples is None:
            grid = OutcomeGrid.uniform(-1.0, 2.0, 30)
            samples = [IntervalSet.interval(*grid.cell(j)) for j in range(grid.m)]
            samples += _random_interval_sets(rng, 50, -1.5, 2.5)
            samples += [IntervalSet.point(0.0), IntervalSet.point(0.5)]

    residuals, c, witness = [], 0.0, None
    for n, d in enumerate(samples, start=1):
        f_norm, weight = norm(d), nu(d)
        if weight <= 0:
            if f_norm > tol and witness is None:
                witness = f"nu({_describe(d)}) = 0 but ||F|| = {f_norm!r}"
            continue
        ratio = f_norm / weight
        residuals.append((n, ratio))
        c = max(c, ratio)
    details: dict = {"c": c, "nu": nu.name, "n_samples": len(samples)}
    if witness:
        return PropertyReport("absolute-continuity", "fails", residuals, witness, details)
    if math.isfinite(nu.total) and finite is None and not isinstance(target, DiscretePVM):
        fam, lim = halflines_family(10, start=min(target.window(IntervalSet.empty())[0], 0.0))
        details["uniform_continuity"] = uniform_continuity_check(target, fam, lim, 1e-9).verdict
    elif math.isfinite(nu.total) and finite is not None:
        details["uniform_continuity"] = "holds"
    return PropertyReport("absolute-continuity", "holds", residuals, None, details)


def _describe(d) -> str:
    if isinstance(d, RingSet):
        return f"cells {list(d.cells)}"
    return str(d.to_json())


# -- Dini -------------------------------------------------------------------------


class DiniHypothesisError(ValueError):
    """The sampled sequence violates the monotone, pointwise-to-zero hypotheses."""

    def __init__(self, message: str, witness: tuple[int, int]):
        self.witness = witness
        super().__init__(message)


def dini_check(table, points: Sequence[float] | None = None, tol: float = 1e-12) -> PropertyReport:
    """Sup-norm series of a monotone sequence ``f_n`` sampled on a compact set.

    ``table[n, i] = f_{n+1}(lambda_i)``. The input is rejected with
    :class:`DiniHypothesisError` if some ``f_n`` leaves ``[0, 1]``, if the
    sequence increases somewhere, or if a point shows no decrease over the
    second half of the sequence while staying above ``tol`` (so its pointwise
    limit is not zero). Holds when the last sup norm is below ``tol``.
    """
    tab = np.asarray(table, dtype=float)
    if tab.ndim != 2 or tab.size == 0:
        raise ValueError("table must be a nonempty (n_steps, n_points) array")
    pts = np.arange(tab.shape[1]) if points is None else np.asarray(points)

    bad = np.argwhere((tab < -tol) | (tab > 1 + tol))
    if len(bad):
        n, i = bad[0]
        raise DiniHypothesisError(f"f_{n + 1}({pts[i]}) = {tab[n, i]} is outside [0, 1]", (n + 1, i))
    up = np.argwhere(np.diff(tab, axis=0) > tol)
    if len(up):
        n, i = up[0]
        raise DiniHypothesisError(f"f_{n + 2}({pts[i]}) exceeds f_{n + 1}({pts[i]})", (n + 2, i))
    mid = tab.shape[0] // 2
    stuck = np.nonzero((tab[-1] > tol) & (tab[-1] >= tab[mid] - tol))[0]
    if tab.shape[0] > 1 and len(stuck):
        i = stuck[0]
        raise DiniHypothesisError(
            f"f_n({pts[i]}) stays at {tab[-1, i]}: pointwise limit is not 0", (tab.shape[0], i))

    sups = tab.max(axis=1)
    residuals = [(n, float(s)) for n, s in enumerate(sups, start=1)]
    verdict = "holds" if sups[-1] <= tol else "inconclusive"
    return PropertyReport("dini", verdict, residuals, None, {"points": int(tab.shape[1])})
