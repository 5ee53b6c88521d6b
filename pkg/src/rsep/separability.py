"""Stäckel operators and the separability conditions for the CI-Laplace equation.

The Stäckel operator on a diagonal metric is

    S_ij(f) = d_i d_j f - d_i ln|g^jj| d_j f - d_j ln|g^ii| d_i f      (i != j)

and is symmetric in (i, j).  Checks are sampled: every verdict is one of
``"pass"`` (residual below ``tol_pass``), ``"fail"`` (above ``tol_fail``) or
``"inconclusive"`` (in between).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import (ConsistencyError, DomainError, IntegrabilityError, NonFiniteError, RsepError)
from .geometry import DiagonalMetric, Domain, Field, LocalGeometry, ci_coefficient, evaluate_field
from .jets import Jet
from .verdict import classify

TOL_PASS = 1e-8
TOL_FAIL = 1e-3
POTENTIAL_SELF_CHECK = 1e-7
RECONSTRUCTION_TOL = 1e-6
NUMERICAL_ZERO = 1e-9  # relative to the curvature scale T in _stackel_residual

# (point, order) -> Jet
PointField = Callable[[np.ndarray, int], Jet]


@dataclass(frozen=True)
class SamplingPlan:
    """Quasi-random sample points: ``count`` scrambled Halton points drawn with ``seed``.

    ``points`` overrides the draw.  ``min_separation`` (when set) replaces the
    domain's own minimum distance between coordinate values.
    """

    count: int = 200
    seed: int = 0
    min_separation: float | None = 1e-2
    points: tuple | None = None

    def draw(self, domain: Domain | None) -> np.ndarray:
        if self.points is not None:
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim != 2 or len(pts) == 0:
                raise ValueError("the sampling plan has no points")
            return pts
        if self.count <= 0:
            raise ValueError("the sampling plan has no points")
        if domain is None:
            raise ValueError("the metric has no domain; give explicit sample points")
        if self.min_separation is not None:
            domain = Domain(domain.lower, domain.upper, self.min_separation)
        return domain.sample(self.count, self.seed)


def _points(m: DiagonalMetric, samples) -> tuple[np.ndarray, int | None]:
    if samples is None:
        samples = SamplingPlan()
    if isinstance(samples, SamplingPlan):
        return samples.draw(m.domain), (samples.seed if samples.points is None else None)
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if len(pts) == 0:
        raise ValueError("the sampling plan has no points")
    return pts, None


def _degenerate(p, min_sep: float) -> bool:
    return any(abs(a - b) < min_sep for a, b in itertools.combinations(p, 2))


# ---------------------------------------------------------------------------
# Stäckel operator


def stackel_jet(F: Jet, gi: Jet, gj: Jet, i: int, j: int) -> Jet:
    """S_ij(F) as a jet two orders below ``F`` (``gi``, ``gj`` are g^ii, g^jj)."""
    k = F.order - 2
    if k < 0:
        raise ValueError("the Stäckel operator needs a jet of order >= 2")
    dlg_j = (gj.diff(i) / gj).truncate(k) if gj.order - 1 >= k else None
    dlg_i = (gi.diff(j) / gi).truncate(k) if gi.order - 1 >= k else None
    if dlg_i is None or dlg_j is None:
        raise ValueError("metric jets are of too low order for the Stäckel operator")
    Fi, Fj = F.diff(i), F.diff(j)
    return Fi.diff(j) - dlg_j * Fj.truncate(k) - dlg_i * Fi.truncate(k)


def _stackel_terms(F: Jet, gi: Jet, gj: Jet, i: int, j: int) -> tuple[float, float]:
    """Value of S_ij(F) and the magnitude of its largest term."""
    a = F.deriv(i, j)
    b = gj.deriv(i) / gj.value * F.deriv(j)
    c = gi.deriv(j) / gi.value * F.deriv(i)
    return a - b - c, max(abs(a), abs(b), abs(c))


def stackel_apply(m: DiagonalMetric, f: Field, i: int, j: int, p) -> float:
    """S_ij(f)(p) with 0-based coordinate indices."""
    if i == j:
        raise ValueError("the Stäckel operator needs distinct indices")
    g = m.components(p, 1)
    F = evaluate_field(f, p, 2)
    return _stackel_terms(F, g[i], g[j], i, j)[0]


# ---------------------------------------------------------------------------
# conformal separability


@dataclass
class SeparabilityReport:
    metric: str
    pair_residuals: dict
    simple_pair_residuals: dict
    residual: float
    simple_residual: float
    verdict: str
    simple_verdict: str
    tol_pass: float
    tol_fail: float
    samples: int
    seed: int | None
    skipped: int
    ignorable: list = field(default_factory=list)

    @property
    def conformally_separable(self) -> bool:
        return self.verdict == "pass"

    @property
    def simply_separable(self) -> bool:
        return self.simple_verdict == "pass"


def check_conformal_separability(m: DiagonalMetric, samples=None, tol_pass: float = TOL_PASS,
                                 tol_fail: float = TOL_FAIL) -> SeparabilityReport:
    """Sampled test of S_ij(g^hh)/g^hh = S_ij(g^kk)/g^kk for all h, k and i != j.

    Also measures simple separability (S_ij(g^hh) = 0) and reports
    conformally ignorable coordinates, i.e. coordinates q^i with
    d_i(g^hh/g^kk) = 0 everywhere.  Points with nearly coincident
    coordinates or where the metric is undefined are skipped and counted.
    """
    pts, seed = _points(m, samples)
    n = m.n
    min_sep = samples.min_separation if isinstance(samples, SamplingPlan) and \
        samples.min_separation is not None else 0.0
    pairs = list(itertools.combinations(range(n), 2))
    conf = {pair: 0.0 for pair in pairs}
    simple = {pair: 0.0 for pair in pairs}
    ratio_slope = np.zeros(n)
    used = skipped = 0
    for p in pts:
        if n == 3 and min_sep and _degenerate(p, min_sep):
            skipped += 1
            continue
        try:
            g = m.components(p, 2)
        except (DomainError, NonFiniteError):
            skipped += 1
            continue
        used += 1
        dlog = np.array([g[h].grad / g[h].value for h in range(n)])
        for i in range(n):
            spread = float(np.ptp(dlog[:, i]))
            ratio_slope[i] = max(ratio_slope[i], spread / max(1.0, float(np.max(np.abs(dlog[:, i])))))
        for (i, j) in pairs:
            s = []
            for h in range(n):
                val, scale = _stackel_terms(g[h], g[i], g[j], i, j)
                s.append(val / g[h].value)
                simple[(i, j)] = max(simple[(i, j)],
                                     abs(val) / max(1.0, scale))
            for h, k in itertools.combinations(range(n), 2):
                r = abs(s[h] - s[k]) / max(1.0, abs(s[h]), abs(s[k]))
                conf[(i, j)] = max(conf[(i, j)], r)
    if used == 0:
        raise DomainError(f"all {len(pts)} sample points were degenerate or outside the domain")
    res, sres = max(conf.values(), default=0.0), max(simple.values(), default=0.0)
    ignorable = [m.coord_names[i] for i in range(n) if ratio_slope[i] < tol_pass]
    return SeparabilityReport(m.name, conf, simple, res, sres, classify(res, tol_pass, tol_fail),
                              classify(sres, tol_pass, tol_fail), tol_pass, tol_fail, used, seed,
                              skipped, ignorable)


# ---------------------------------------------------------------------------
# R-factor


def _gauss_legendre(nodes: int = 24):
    return np.polynomial.legendre.leggauss(nodes)


@dataclass
class RFactor:
    """ln R with d_i ln R = Gamma_i / 2, either in closed form or by path integration.

    Path integration runs along coordinate-axis segments from ``base_point``
    (q^1 first, then q^2, then q^3) with Gauss-Legendre quadrature.
    """

    metric: DiagonalMetric
    base_point: np.ndarray
    closed_form: Callable | None = None
    integrability_residual: float = 0.0
    gradient_residual: float = 0.0
    nodes: int = 24

    def _half_gamma(self, point) -> np.ndarray:
        return 0.5 * LocalGeometry(self.metric, point, 1, check_domain=False).contracted_gamma()

    def log_value(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if self.closed_form is not None:
            return float(jets.as_jet(self.closed_form(list(point)), len(point), 0).value)
        x, w = _gauss_legendre(self.nodes)
        total = 0.0
        cur = self.base_point.copy()
        dom = self.metric.domain
        for i in range(len(point)):
            a, b = cur[i], point[i]
            if a != b:
                half, mid = 0.5 * (b - a), 0.5 * (a + b)
                for xk, wk in zip(x, w):
                    q = cur.copy()
                    q[i] = mid + half * xk
                    if dom is not None and not dom.contains(q):
                        raise DomainError(f"integration path leaves the domain at {q.tolist()}")
                    total += wk * half * self._half_gamma(q)[i]
            cur[i] = b
        return float(total)

    def log_jet(self, point, order: int) -> Jet:
        """Jet of ln R at ``point`` through ``order``."""
        point = np.asarray(point, dtype=float)
        n = len(point)
        if self.closed_form is not None:
            q = jets.seed_point(point, order)
            return jets.as_jet(self.closed_form(q), n, order)
        if order == 0:
            return Jet.constant(self.log_value(point), n, 0)
        geo = LocalGeometry(self.metric, point, order, check_domain=False)
        grads = [0.5 * G for G in geo.contracted_gamma_jets]
        return Jet.from_derivatives(self.log_value(point), grads)

    def value(self, point) -> float:
        return math.exp(self.log_value(point))

    def gradient_error(self, point) -> float:
        """max_i |d_i ln R - Gamma_i / 2| at ``point``, by jets."""
        lj = self.log_jet(point, 1)
        return float(np.max(np.abs(lj.grad - self._half_gamma(point))))


def integrability_residual(m: DiagonalMetric, pts) -> tuple[float, tuple]:
    """max over samples of |d_j Gamma_i - d_i Gamma_j| (normalized) and the worst pair."""
    worst, pair = 0.0, (0, 1)
    for p in pts:
        G = LocalGeometry(m, p, 2).contracted_gamma_jets
        for i, j in itertools.combinations(range(m.n), 2):
            a, b = G[i].deriv(j), G[j].deriv(i)
            r = abs(a - b) / max(1.0, abs(a), abs(b))
            if r > worst:
                worst, pair = r, (i, j)
    return worst, pair


def build_r_factor(m: DiagonalMetric, base_point=None, samples=None, tol: float = TOL_PASS,
                   held_out: int = 20) -> RFactor:
    """Construct ln R solving d_i ln R = Gamma_i / 2.

    Raises :class:`IntegrabilityError` when d_j Gamma_i != d_i Gamma_j at
    some sample.  Family metrics use their closed form.  The gradient
    condition is re-verified at ``held_out`` fresh points.
    """
    pts, seed = _points(m, samples)
    if base_point is None:
        if m.domain is None:
            base_point = pts[0]
        else:
            base_point = m.domain.center()
    base_point = np.asarray(base_point, dtype=float)
    if m.domain is not None:
        m.domain.check(base_point)
    res, pair = integrability_residual(m, pts)
    if res > tol:
        raise IntegrabilityError(tuple(m.coord_names[k] for k in pair), res)
    fam = m.family
    closed = fam.log_r if fam is not None and hasattr(fam, "log_r") else None
    rf = RFactor(m, base_point, closed, res)
    if m.domain is not None:
        check_pts = m.domain.sample(held_out, (seed or 0) + 7919)
    else:
        check_pts = pts[:held_out]
    gerr = max(rf.gradient_error(p) for p in check_pts)
    rf.gradient_residual = gerr
    if gerr > tol:
        raise ConsistencyError(f"d_i ln R differs from Gamma_i/2 by {gerr:.3g} at held-out points")
    return rf


# ---------------------------------------------------------------------------
# modified potential


def modified_potential_parts(m: DiagonalMetric, rf: RFactor, p) -> tuple[float, float]:
    """(U from Gamma and R_s, U from Delta R / R + kappa R_s) at ``p``."""
    geo = LocalGeometry(m, p, 2)
    u_gamma = geo.potential_jet.value
    R = jets.exp(rf.log_jet(p, 2))
    u_laplace = geo.laplacian(R) / R.value + ci_coefficient(m.n) * geo.scalar()
    return u_gamma, u_laplace


def modified_potential(m: DiagonalMetric, rf: RFactor, p, tol: float = POTENTIAL_SELF_CHECK) -> float:
    """Modified potential U at ``p``, computed two ways and cross-checked."""
    a, b = modified_potential_parts(m, rf, p)
    if abs(a - b) > tol * max(1.0, abs(a), abs(b)):
        raise ConsistencyError(
            f"modified potential self-check failed at {list(p)}: {a!r} vs {b!r}")
    return a


def point_field(f) -> PointField:
    """Mark ``f(p, order)`` as a point field; constant results are promoted to jets."""
    def field(p, order):
        return jets.as_jet(f(p, order), len(p), order)
    field.is_point_field = True
    return field


def potential_field(m: DiagonalMetric) -> PointField:
    """U of ``m`` as a point field; order k needs metric jets of order k + 2."""
    def U(p, order):
        return LocalGeometry(m, p, order + 2).potential_jet
    return point_field(U)


def as_point_field(f) -> PointField:
    """Wrap a coordinate field (callable on jets) or a constant as a point field."""
    if isinstance(f, (int, float)):
        c = float(f)
        return point_field(lambda p, order: c)
    if getattr(f, "is_point_field", False):
        return f
    return point_field(lambda p, order: evaluate_field(f, p, order))


# ---------------------------------------------------------------------------
# pseudo-Stäckel condition


@dataclass
class PseudoStackelDecomposition:
    """Univariate f_h with U = sum_h g^hh f_h(q^h), interpolated on each coordinate range."""

    functions: tuple
    intervals: tuple
    base_point: np.ndarray
    fit_residual: float

    def __call__(self, h: int, x):
        return self.functions[h](x)

    def evaluate(self, m: DiagonalMetric, p) -> float:
        g = m.components(p, 0, check_domain=False)
        return float(sum(g[h].value * self.functions[h](p[h]) for h in range(m.n)))


@dataclass
class PseudoStackelResult:
    verdict: str
    residual: float
    tol_pass: float
    tol_fail: float
    samples: int
    skipped: int
    decomposition: PseudoStackelDecomposition | None = None

    def __iter__(self):
        yield self.verdict
        yield self.decomposition


def _stackel_residual(m: DiagonalMetric, F: Callable[[np.ndarray, int], Jet], pts):
    """max over samples, i<j and h of |S_ij(g^hh) F - S_ij(F) g^hh|.

    Each point is normalized by max(1, size of the largest term on either side,
    N_ij |F g^hh|), where N_ij = max_h |d_i ln g^hh| max_h |d_j ln g^hh| is the
    size S_ij(F) / F takes when F varies on the metric's length scale.  A field
    that cancels to rounding level against T = sum_i |g^ii| max_h |d_i ln g^hh|^2,
    the magnitude of the curvature terms it is assembled from, counts as zero.
    """
    n = m.n
    worst, used, skipped = 0.0, 0, 0
    for p in pts:
        try:
            g = m.components(p, 2)
            u = F(p, 2)
        except (DomainError, NonFiniteError):
            skipped += 1
            continue
        used += 1
        uv = u.value
        rates = np.array([np.abs(c.grad / c.value) for c in g])  # [h, i] = |d_i ln g^hh|
        size = sum(abs(g[i].value) * np.max(rates[:, i]) ** 2 for i in range(n))
        pairs = []
        for i, j in itertools.combinations(range(n), 2):
            su, su_scale = _stackel_terms(u, g[i], g[j], i, j)
            natural = float(np.max(rates[:, i]) * np.max(rates[:, j]))
            pairs.append((i, j, su, su_scale, natural))
        if abs(uv) <= NUMERICAL_ZERO * size and all(
                s_scale <= NUMERICAL_ZERO * size * nat for *_, s_scale, nat in pairs):
            continue
        for i, j, su, su_scale, natural in pairs:
            for h in range(n):
                sg, sg_scale = _stackel_terms(g[h], g[i], g[j], i, j)
                gh = g[h].value
                lhs, rhs = sg * uv, su * gh
                scale = max(1.0, sg_scale * abs(uv), su_scale * abs(gh),
                            natural * abs(uv * gh))
                worst = max(worst, abs(lhs - rhs) / scale)
    if used == 0:
        raise DomainError("no usable sample points")
    return worst, used, skipped


def _adaptive_chebyshev(func, interval, start: int = 32, max_deg: int = 256, tol: float = 1e-11):
    Cheb = np.polynomial.Chebyshev
    vec = lambda xs: np.array([func(float(x)) for x in np.atleast_1d(xs)])
    deg = start
    approx = Cheb.interpolate(vec, deg, domain=list(interval))
    while deg < max_deg:
        finer = Cheb.interpolate(vec, 2 * deg, domain=list(interval))
        xs = np.linspace(interval[0], interval[1], 97)
        diff = np.max(np.abs(finer(xs) - approx(xs)))
        approx, deg = finer, 2 * deg
        if diff <= tol * max(1.0, float(np.max(np.abs(finer(xs))))):
            break
    return approx


def decompose_pseudo_stackel(m: DiagonalMetric, U: PointField, box: Domain | None = None,
                             held_out=None, tol: float = RECONSTRUCTION_TOL
                             ) -> PseudoStackelDecomposition:
    """Extract f_h with U = sum g^hh f_h(q^h) by sampling U along coordinate lines.

    The base values f_h(b_h) at the box center b are the minimum-norm
    solution of U(b) = sum g^hh(b) f_h(b_h); the remaining freedom of the
    decomposition is a gauge.  Each f_h is interpolated by adaptive
    Chebyshev series and the reconstruction is validated at ``held_out``.
    """
    n = m.n
    box = box or m.domain.inset(0.05)
    b = box.center()
    gb = np.array([g.value for g in m.components(b, 0, check_domain=False)])
    base = gb * U(b, 0).value / float(gb @ gb)

    def line_value(h, t):
        q = b.copy()
        q[h] = t
        g = [c.value for c in m.components(q, 0, check_domain=False)]
        rest = sum(g[k] * base[k] for k in range(n) if k != h)
        return (U(q, 0).value - rest) / g[h]

    intervals = tuple((box.lower[h], box.upper[h]) for h in range(n))
    funcs = []
    for h in range(n):
        cheb = _adaptive_chebyshev(lambda t, h=h: line_value(h, t), intervals[h])
        funcs.append(lambda x, c=cheb: float(c(x)))
    dec = PseudoStackelDecomposition(tuple(funcs), intervals, b, 0.0)
    if held_out is None:
        held_out = box.sample(20, 104729)
    worst = 0.0
    for p in held_out:
        u = U(p, 0).value
        rec = dec.evaluate(m, p)
        worst = max(worst, abs(u - rec) / max(1.0, abs(u)))
    dec.fit_residual = worst
    return dec


def check_pseudo_stackel(m: DiagonalMetric, U=None, samples=None, tol_pass: float = TOL_PASS,
                         tol_fail: float = TOL_FAIL, decompose: bool = True,
                         reconstruction_tol: float = RECONSTRUCTION_TOL) -> PseudoStackelResult:
    """Test S_ij(g^hh) U = S_ij(U) g^hh on samples; on a pass, extract f_h.

    ``U`` defaults to the metric's own modified potential.  It may be a
    constant, a coordinate field, or a point field ``(p, order) -> Jet``.
    """
    pts, _ = _points(m, samples)
    F = potential_field(m) if U is None else as_point_field(U)
    res, used, skipped = _stackel_residual(m, F, pts)
    verdict = classify(res, tol_pass, tol_fail)
    dec = None
    if verdict == "pass" and decompose and m.domain is not None:
        dec = decompose_pseudo_stackel(m, F, tol=reconstruction_tol)
        if dec.fit_residual > reconstruction_tol:
            raise ConsistencyError(
                f"pseudo-Stäckel residual {res:.3g} passes but the reconstruction error is "
                f"{dec.fit_residual:.3g} (tolerance {reconstruction_tol:g})")
    return PseudoStackelResult(verdict, res, tol_pass, tol_fail, used, skipped, dec)


# ---------------------------------------------------------------------------
# Laplace compatibility


@dataclass
class CompatibilityResult:
    verdict: str
    residual: float
    tol_pass: float
    tol_fail: float
    samples: int
    skipped: int


def scalar_curvature_field(m: DiagonalMetric) -> PointField:
    def Rs(p, order):
        return LocalGeometry(m, p, order + 2).scalar_jet
    return point_field(Rs)


def check_laplace_compatibility(m: DiagonalMetric, samples=None, tol_pass: float = TOL_PASS,
                                tol_fail: float = TOL_FAIL) -> CompatibilityResult:
    """Test S_ij(g^hh) R_s = S_ij(R_s) g^hh; a pass means Laplace's equation R-separates."""
    pts, _ = _points(m, samples)
    res, used, skipped = _stackel_residual(m, scalar_curvature_field(m), pts)
    return CompatibilityResult(classify(res, tol_pass, tol_fail), res, tol_pass, tol_fail, used,
                               skipped)
