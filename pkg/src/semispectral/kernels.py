"""Convolution Markov kernels ``mu_delta(x) = int_delta f(x - y) dy``.

Every kernel value reduces to the mass a profile density ``f`` puts on the
reflected, shifted set ``x - delta``; the profiles below integrate their
densities in closed form (``erf``/``erfc`` for the Gaussian, polynomials for
the compact shapes), so no quadrature is involved in :func:`kernel_eval`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import erf, erfc

from .povm import MalformedPOVM, OutcomeGrid
from .reconstruction import TOL_ROW, Generator, KernelMatrix, VonNeumannTriplet, smear

INF = math.inf


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of closed intervals ``[lo, hi]`` (endpoints may be infinite).

    Components are kept sorted and merged when they overlap or touch.
    Zero-length components are allowed so that single points can be
    represented; they only matter for atomic measures.
    """

    components: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        parts = sorted((float(lo), float(hi)) for lo, hi in self.components)
        merged: list[list[float]] = []
        for lo, hi in parts:
            if math.isnan(lo) or math.isnan(hi) or hi < lo:
                raise ValueError(f"bad interval ({lo}, {hi})")
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        object.__setattr__(self, "components", tuple((lo, hi) for lo, hi in merged))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "IntervalSet":
        return cls(((lo, hi),))

    @classmethod
    def point(cls, p: float) -> "IntervalSet":
        return cls(((p, p),))

    @classmethod
    def below(cls, b: float) -> "IntervalSet":
        return cls(((-INF, b),))

    @classmethod
    def above(cls, a: float) -> "IntervalSet":
        return cls(((a, INF),))

    @classmethod
    def real_line(cls) -> "IntervalSet":
        return cls(((-INF, INF),))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    def __bool__(self) -> bool:
        return bool(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __or__(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.components + other.components)

    def __and__(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a_lo, a_hi in self.components:
            for b_lo, b_hi in other.components:
                lo, hi = max(a_lo, b_lo), min(a_hi, b_hi)
                if lo <= hi:
                    out.append((lo, hi))
        return IntervalSet(tuple(out))

    def __sub__(self, other: "IntervalSet") -> "IntervalSet":
        # Boundary points of ``other`` are not tracked (measure zero for densities).
        pieces = list(self.components)
        for b_lo, b_hi in other.components:
            nxt = []
            for lo, hi in pieces:
                if hi < b_lo or lo > b_hi or (b_lo == b_hi and lo < hi):
                    nxt.append((lo, hi))
                    continue
                if lo < b_lo:
                    nxt.append((lo, b_lo))
                if hi > b_hi:
                    nxt.append((b_hi, hi))
            pieces = nxt
        return IntervalSet(tuple(pieces))

    def __le__(self, other: "IntervalSet") -> bool:
        return all(any(b_lo <= lo and hi <= b_hi for b_lo, b_hi in other.components)
                   for lo, hi in self.components)

    def __contains__(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.components)

    def measure(self) -> float:
        """Lebesgue measure."""
        return float(sum(hi - lo for lo, hi in self.components))

    def shift(self, t: float) -> "IntervalSet":
        return IntervalSet(tuple((lo + t, hi + t) for lo, hi in self.components))

    @property
    def finite_endpoints(self) -> list[float]:
        return [e for c in self.components for e in c if math.isfinite(e)]

    def to_json(self) -> list:
        return [[lo, hi] for lo, hi in self.components]


# -- profiles -----------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class KernelProfile:
    """A probability density ``f`` with a closed-form integral.

    Use the constructors :meth:`gaussian`, :meth:`box`, :meth:`triangle` and
    :meth:`tabulated` rather than building instances directly.
    """

    family: str
    width: float = 1.0
    xs: np.ndarray | None = field(default=None, repr=False)
    fs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in ("gaussian", "box", "triangle", "tabulated"):
            raise ValueError(f"unknown profile family {self.family!r}")
        if self.family == "gaussian" and not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError("gaussian width must be positive; for the sharp (point-mass) "
                             "limit use the PVM itself instead of a kernel")

    @classmethod
    def gaussian(cls, l: float = 1.0) -> "KernelProfile":
        """Centred normal density with standard deviation ``l``."""
        return cls("gaussian", float(l))

    @classmethod
    def box(cls) -> "KernelProfile":
        """Uniform density on ``[0, 1]``."""
        return cls("box")

    @classmethod
    def triangle(cls) -> "KernelProfile":
        """Tent density on ``[0, 1]`` peaking at 2 in the middle."""
        return cls("triangle")

    @classmethod
    def tabulated(cls, xs: Sequence[float], fs: Sequence[float]) -> "KernelProfile":
        """Piecewise-linear density through ``(xs, fs)``, zero outside, rescaled to unit mass."""
        xs = np.asarray(xs, dtype=float)
        fs = np.asarray(fs, dtype=float)
        if xs.ndim != 1 or xs.shape != fs.shape or len(xs) < 2:
            raise ValueError("need matching 1-d sample arrays of length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("sample abscissae must be strictly increasing")
        if np.any(fs < 0):
            raise ValueError("density samples must be nonnegative")
        total = float(np.sum(0.5 * (fs[1:] + fs[:-1]) * np.diff(xs)))
        if total <= 0:
            raise ValueError("density has zero mass")
        xs.setflags(write=False)
        fs = fs / total
        fs.setflags(write=False)
        return cls("tabulated", 1.0, xs, fs)

    @classmethod
    def from_amplitude(cls, xs: Sequence[float], amplitude: Sequence[complex]) -> "KernelProfile":
        """Position-marginal profile ``|f|^2`` of a window function sampled at ``xs``."""
        return cls.tabulated(xs, np.abs(np.asarray(amplitude)) ** 2)

    @classmethod
    def from_json(cls, obj: dict) -> "KernelProfile":
        fam = obj.get("family")
        if fam == "gaussian":
            return cls.gaussian(float(obj.get("l", 1.0)))
        if fam == "box":
            return cls.box()
        if fam == "triangle":
            return cls.triangle()
        if fam == "tabulated":
            return cls.tabulated(obj["xs"], obj["fs"])
        raise ValueError(f"unknown profile family {fam!r}")

    def to_json(self) -> dict:
        if self.family == "gaussian":
            return {"family": "gaussian", "l": self.width}
        if self.family == "tabulated":
            return {"family": "tabulated", "xs": self.xs.tolist(), "fs": self.fs.tolist()}
        return {"family": self.family}

    @property
    def support(self) -> tuple[float, float]:
        if self.family == "gaussian":
            return (-INF, INF)
        if self.family == "tabulated":
            return (float(self.xs[0]), float(self.xs[-1]))
        return (0.0, 1.0)

    @property
    def density_bound(self) -> float:
        """``M = sup f``."""
        if self.family == "gaussian":
            return 1.0 / (self.width * _SQRT2PI)
        if self.family == "box":
            return 1.0
        if self.family == "triangle":
            return 2.0
        return float(self.fs.max())

    @property
    def tail_scale(self) -> float:
        """Length scale used to size finite windows around a set."""
        if self.family == "gaussian":
            return self.width
        lo, hi = self.support
        return hi - lo

    @property
    def is_continuous(self) -> bool:
        if self.family == "box":
            return False
        if self.family == "tabulated":
            return self.fs[0] == 0 and self.fs[-1] == 0
        return True

    def continuity_modulus(self, delta: float) -> float | None:
        """``sup |f(s) - f(t)|`` over ``|s - t| <= delta``; ``None`` for discontinuous ``f``."""
        if not self.is_continuous:
            return None
        if self.family == "gaussian":
            slope = 1.0 / (self.width**2 * _SQRT2PI * math.sqrt(math.e))
            return min(slope * delta, self.density_bound)
        if self.family == "triangle":
            return min(4.0 * delta, 2.0)
        slope = float(np.max(np.abs(np.diff(self.fs) / np.diff(self.xs))))
        return min(slope * delta, self.density_bound)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "gaussian":
            return np.exp(-0.5 * (t / self.width) ** 2) / (self.width * _SQRT2PI)
        if self.family == "box":
            return np.where((t >= 0) & (t <= 1), 1.0, 0.0)
        if self.family == "triangle":
            return np.where((t >= 0) & (t <= 1), 2.0 - 4.0 * np.abs(t - 0.5), 0.0)
        return np.interp(t, self.xs, self.fs, left=0.0, right=0.0)

    def cdf(self, t):
        """``int_{-inf}^t f``."""
        t = np.asarray(t, dtype=float)
        if self.family == "gaussian":
            return 0.5 * erfc(-t / (self.width * _SQRT2))
        if self.family == "box":
            return np.clip(t, 0.0, 1.0)
        if self.family == "triangle":
            s = np.clip(t, 0.0, 1.0)
            return np.where(s <= 0.5, 2.0 * s**2, 1.0 - 2.0 * (1.0 - s) ** 2)
        return self._tabulated_cdf(t)

    def _tabulated_cdf(self, t):
        xs, fs = self.xs, self.fs
        seg = np.concatenate([[0.0], np.cumsum(0.5 * (fs[1:] + fs[:-1]) * np.diff(xs))])
        s = np.clip(t, xs[0], xs[-1])
        i = np.clip(np.searchsorted(xs, s, side="right") - 1, 0, len(xs) - 2)
        h = s - xs[i]
        slope = (fs[i + 1] - fs[i]) / (xs[i + 1] - xs[i])
        return seg[i] + fs[i] * h + 0.5 * slope * h**2

    def mass(self, lo, hi):
        """``int_lo^hi f`` (vectorized, ``lo <= hi``), accurate in the Gaussian tails."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.family != "gaussian":
            return np.clip(self.cdf(hi) - self.cdf(lo), 0.0, 1.0)
        s = self.width * _SQRT2
        a, b = lo / s, hi / s
        with np.errstate(invalid="ignore"):
            right = 0.5 * (erfc(a) - erfc(b))
            left = 0.5 * (erfc(-b) - erfc(-a))
            mid = 0.5 * (erf(b) - erf(a))
        out = np.where(a >= 0, right, np.where(b <= 0, left, mid))
        return np.clip(np.nan_to_num(out, nan=0.0), 0.0, 1.0)

    def integration_range(self) -> tuple[float, float]:
        if self.family == "gaussian":
            return (-40.0 * self.width, 40.0 * self.width)
        return self.support

    def breakpoints(self) -> list[float]:
        if self.family == "triangle":
            return [0.5]
        if self.family == "tabulated":
            return self.xs[1:-1].tolist()
        return []


@dataclass(frozen=True)
class ConvolutionKernel:
    """``mu_delta(x) = int_delta f(x - y) dy`` for a :class:`KernelProfile` ``f``."""

    profile: KernelProfile

    def __call__(self, delta: IntervalSet, x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        # x - [c, d] = [x - d, x - c]
        for c, d in delta.components:
            total = total + self.profile.mass(x - d, x - c)
        return np.clip(total, 0.0, 1.0)

    def lipschitz_bound(self, delta: IntervalSet | None = None) -> float:
        """Slope bound ``M`` per finite endpoint of ``delta`` (a bounded interval when omitted).

        For one Gaussian interval this is ``sqrt(2) / (l sqrt(pi))``.
        """
        n = 2 if delta is None else len(delta.finite_endpoints)
        return self.profile.density_bound * n


def kernel_eval(kernel: ConvolutionKernel, delta: IntervalSet, x):
    """Closed-form ``mu_delta(x)``; scalar in, float out."""
    val = kernel(delta, x)
    return float(val) if np.ndim(val) == 0 else val


def kernel_eval_quad(kernel: ConvolutionKernel, delta: IntervalSet, x: float,
                     epsabs: float = 1e-13) -> float:
    """Adaptive-quadrature value of ``mu_delta(x)``; an independent check on :func:`kernel_eval`."""
    prof = kernel.profile
    lo_f, hi_f = prof.integration_range()
    total = 0.0
    for c, d in delta.components:
        lo, hi = max(x - d, lo_f), min(x - c, hi_f)
        if lo >= hi:
            continue
        pts = [p for p in prof.breakpoints() + [0.0, 1.0] if lo < p < hi]
        val, _ = integrate.quad(prof.density, lo, hi, epsabs=epsabs, epsrel=0.0,
                                limit=500, points=pts or None)
        total += val
    return total


@dataclass(frozen=True)
class KernelRow:
    values: np.ndarray
    deficit: float
    policy: str


TAIL_POLICIES = ("absorb", "renormalize", "report-deficit")


def kernel_row(kernel: ConvolutionKernel, x: float, grid: OutcomeGrid,
               tail_policy: str = "report-deficit") -> KernelRow:
    """Probabilities of the grid cells under ``mu_(.)(x)``.

    ``tail_policy`` decides what happens to mass outside ``[a, b)``:
    ``"absorb"`` adds it to the first/last cell, ``"renormalize"`` rescales
    the row, ``"report-deficit"`` leaves the row alone and reports the
    missing mass in :attr:`KernelRow.deficit`.
    """
    if tail_policy not in TAIL_POLICIES:
        raise ValueError(f"tail_policy must be one of {TAIL_POLICIES}")
    e = np.asarray(grid.edges)
    prof = kernel.profile
    values = prof.mass(x - e[1:], x - e[:-1])
    left = float(prof.mass(x - grid.a, INF))  # mass on (-inf, a)
    right = float(prof.mass(-INF, x - grid.b))  # mass on [b, inf)
    deficit = left + right
    if tail_policy == "absorb":
        values = values.copy()
        values[0] += left
        values[-1] += right
        deficit = 0.0
    elif tail_policy == "renormalize":
        values = values / values.sum()
        deficit = 0.0
    return KernelRow(values, deficit, tail_policy)


def unsharp_position(kernel: ConvolutionKernel, spectrum_points: Sequence[float],
                     grid: OutcomeGrid, tail_policy: str = "report-deficit",
                     tol_row: float = TOL_ROW) -> VonNeumannTriplet:
    """Discrete unsharp position observable ``Q^f`` on the diagonal position model.

    Position eigenstates are the coordinate axes labelled by
    ``spectrum_points``; each row of the kernel matrix is :func:`kernel_row`
    at that point. Under ``"report-deficit"`` a deficit above ``tol_row`` is
    an error, since the rows would not be probability vectors.
    For the phase-space marginal pass ``KernelProfile.from_amplitude``.
    """
    points = [float(p) for p in spectrum_points]
    if len(set(points)) != len(points):
        raise ValueError("spectrum points must be distinct")
    rows = []
    for x in points:
        row = kernel_row(kernel, x, grid, tail_policy)
        if row.deficit > tol_row:
            raise MalformedPOVM(
                f"grid [{grid.a}, {grid.b}) misses mass {row.deficit:.3e} at x={x}; "
                "widen the grid or choose another tail policy")
        rows.append(row.values)
    d = len(points)
    projectors = np.array([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)])
    gen = Generator(tuple(Fraction(p) for p in points), projectors)
    mu = KernelMatrix(np.array(rows), grid, tol_row)
    return VonNeumannTriplet(smear(gen.pvm, mu), gen, mu)


def _window(kernel: ConvolutionKernel, delta: IntervalSet, domain, pad: float = 5.0):
    lo, hi = domain
    ends = delta.finite_endpoints or [0.0]
    scale = kernel.profile.tail_scale
    if not math.isfinite(lo):
        lo = min(ends) - pad * scale
    if not math.isfinite(hi):
        hi = max(ends) + pad * scale
    return float(lo), float(hi)


def lipschitz_scan(kernel: ConvolutionKernel, delta: IntervalSet,
                   domain: tuple[float, float], step: float) -> float:
    """Largest difference quotient of ``mu_delta`` between adjacent samples ``step`` apart."""
    if step <= 0:
        raise ValueError("step must be positive")
    lo, hi = _window(kernel, delta, domain)
    n = max(int(math.ceil((hi - lo) / step)), 1)
    xs = lo + step * np.arange(n + 1)
    vals = kernel(delta, xs)
    return float(np.max(np.abs(np.diff(vals)) / np.diff(xs)))


def modulus_scan(mu: Callable, delta, domain: tuple[float, float], delta_x: float,
                 refine: int = 4):
    """``max |mu_delta(x) - mu_delta(x')|`` over sampled pairs with ``|x - x'| <= delta_x``.

    Samples are ``delta_x / refine`` apart and all offsets up to ``refine`` are
    compared. Returns ``(modulus, (x, x'))``.
    """
    lo, hi = domain
    h = delta_x / refine
    n = max(int(math.ceil((hi - lo) / h)), 1)
    xs = lo + h * np.arange(n + 1)
    vals = np.asarray(mu(delta, xs), dtype=float)
    best, pair = 0.0, (float(xs[0]), float(xs[0]))
    for r in range(1, refine + 1):
        if r >= len(xs):
            break
        diffs = np.abs(vals[r:] - vals[:-r])
        i = int(np.argmax(diffs))
        if diffs[i] > best:
            best, pair = float(diffs[i]), (float(xs[i]), float(xs[i + r]))
    return best, pair


class QuadratureError(RuntimeError):
    pass


def expectation(kernel: ConvolutionKernel, g: Callable[[float], float], x: float,
                quad_tol: float = 1e-10) -> float:
    """``int g(t) mu_dt(x) = int g(x - y) f(y) dy`` by adaptive quadrature."""
    prof = kernel.profile
    lo, hi = prof.integration_range()
    pts = prof.breakpoints() or None
    val, abserr, info = integrate.quad(lambda y: g(x - y) * float(prof.density(y)), lo, hi,
                                       epsabs=quad_tol * 1e-2, epsrel=0.0, limit=500,
                                       points=pts, full_output=1)[:3]
    if abserr > quad_tol:
        raise QuadratureError(f"quadrature did not converge (error estimate {abserr:.2e})")
    return float(val)


def _clip(fn, lo, hi):
    return lambda t: fn(min(max(t, lo), hi))


DEFAULT_TEST_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "one": lambda t: 1.0,
    "sin": math.sin,
    "arctan": math.atan,
    "clipped_square": _clip(lambda t: t * t, -3.0, 3.0),
    "clipped_cubic": _clip(lambda t: t**3 - t, -2.0, 2.0),
}


@dataclass
class WeakConvergenceReport:
    names: list[str]
    x_seq: np.ndarray
    differences: np.ndarray  # (n_functions, n_points)
    holds: bool
    failing: list[str]


def weak_convergence_check(kernel: ConvolutionKernel, x_seq: Iterable[float], x_star: float,
                           test_functions: dict[str, Callable] | None = None,
                           quad_tol: float = 1e-10) -> WeakConvergenceReport:
    """``|int g dmu(x_n) - int g dmu(x*)|`` for each test function ``g``.

    Holds when, for every ``g``, the differences are non-increasing along the
    sequence (up to ``quad_tol`` of quadrature noise) and the last one is
    below ``10 * quad_tol``.
    """
    funcs = DEFAULT_TEST_FUNCTIONS if test_functions is None else test_functions
    xs = np.asarray(list(x_seq), dtype=float)
    diffs = np.zeros((len(funcs), len(xs)))
    for i, g in enumerate(funcs.values()):
        ref = expectation(kernel, g, x_star, quad_tol)
        diffs[i] = [abs(expectation(kernel, g, x, quad_tol) - ref) for x in xs]
    failing = []
    for name, row in zip(funcs, diffs):
        monotone = np.all(np.diff(row) <= quad_tol)
        if not (monotone and row[-1] <= 10 * quad_tol):
            failing.append(name)
    return WeakConvergenceReport(list(funcs), xs, diffs, not failing, failing)
