"""Built-in metric families and charts in three dimensions.

* ``make_conformally_separable``: g^ii = Q h_i(q^i) (q^{i+2} - q^{i+1}), indices mod 3.
* ``make_rsep``: the same with a single polynomial h_i = P of degree <= 5.
* ``KalninsChart``: the map from five ordered real roots e_1 < ... < e_5 and
  e_1 < q^1 < e_2 < q^2 < e_3 < q^3 < e_4 to Cartesian coordinates, whose flat
  metric is the R-separable metric with conformal factor
  Q_E = 4 lambda^2 / ((q1-q2)(q2-q3)(q3-q1)).
* ``sphere_chart`` / ``sphere_factors``: the stereographic 3-sphere and the
  factor Q_S = Q_SE * Q_E making the R-separable metric the round sphere.
* ``eisenhart_metric``: g_ii = (q^i - q^{i+1})(q^i - q^{i+2}) / P(q^i).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as _expr
from . import jets
from .errors import DomainError, RsepError
from .geometry import DiagonalMetric, Domain, Field
from .jets import Jet

COORDS = ("q1", "q2", "q3")

# default fraction of each root gap kept clear of the roots
DOMAIN_MARGIN = 1e-3
DEFAULT_BOX = Domain((0.1, 1.1, 2.1), (0.9, 1.9, 2.9), min_separation=1e-2)


def vandermonde(q):
    """(q1 - q2)(q2 - q3)(q3 - q1); positive when q1 < q2 < q3."""
    return (q[0] - q[1]) * (q[1] - q[2]) * (q[2] - q[0])


def cyclic_difference(q, i):
    """q^{i+2} - q^{i+1} with indices mod 3 (0-based i)."""
    return q[(i + 2) % 3] - q[(i + 1) % 3]


def poly_from_roots(roots: Sequence[float]) -> np.ndarray:
    """Ascending coefficients of prod_k (q - e_k)."""
    return np.polynomial.polynomial.polyfromroots(list(roots))


@dataclass(frozen=True)
class SeparableFamily:
    """Parameters of a metric g^ii = Q h_i(q^i)(q^{i+2} - q^{i+1}).

    ``h`` holds three univariate functions usable on floats and jets.  When
    the family comes from a polynomial, ``coeffs`` (ascending) and optionally
    ``roots`` are recorded.  ``sign`` is the overall sign folded into Q so
    that every component is positive on the domain.
    """

    h: tuple
    Q: Callable
    conformal: str = "unit"
    coeffs: tuple | None = None
    roots: tuple | None = None
    radius: float | None = None
    sign: float = 1.0
    box: Domain | None = None
    labels: tuple = ()
    kalnins: "KalninsChart | None" = field(default=None, compare=False)

    def gup(self, i: int) -> Field:
        h, Q, s = self.h[i], self.Q, self.sign

        def component(q):
            return s * Q(q) * h(q[i]) * cyclic_difference(q, i)
        return component

    def log_r(self, q):
        """Closed-form ln R with d_i ln R = Gamma_i / 2:
        1/4 ln|Q| + 1/4 ln|q1-q2||q2-q3||q3-q1| - 1/4 sum ln|h_i(q^i)|.
        """
        out = 0.25 * jets.log(jets.fabs(self.Q(q))) + 0.25 * jets.log(jets.fabs(vandermonde(q)))
        for i in range(3):
            out = out - 0.25 * jets.log(jets.fabs(self.h[i](q[i])))
        return out

    def metric(self, name: str) -> DiagonalMetric:
        return DiagonalMetric(tuple(self.gup(i) for i in range(3)), COORDS, self.box, name,
                              family=self)


def _univariate(text_or_expr, i: int, params) -> tuple[Callable, str]:
    e = text_or_expr
    if isinstance(e, str):
        e = _expr.parse(e, COORDS, list(params))
    foreign = _expr.names(e) - {COORDS[i]}
    if foreign:
        raise DomainError(
            f"h{i + 1} may only depend on {COORDS[i]}, but references {sorted(foreign)}")
    name = COORDS[i]

    def h(x):
        return _expr.evaluate(e, {name: x}, params)
    return h, _expr.to_string(e)


def make_conformally_separable(h1, h2, h3, Q="1", params=None, box: Domain | None = None,
                               name: str = "csep") -> DiagonalMetric:
    """General conformally separable metric from three univariate h_i and a factor Q.

    ``h_i`` and ``Q`` are expression strings (or parsed trees) in q1, q2, q3.
    The default domain is q1 in (0.1, 0.9), q2 in (1.1, 1.9), q3 in (2.1, 2.9).
    """
    params = dict(params or {})
    hs, labels = zip(*(_univariate(h, i, params) for i, h in enumerate((h1, h2, h3))))
    q_expr = _expr.parse(Q, COORDS, list(params)) if isinstance(Q, str) else Q
    q_field = _expr.compile_field(q_expr, COORDS, params)
    if box is None:
        box = DEFAULT_BOX
    fam = SeparableFamily(tuple(hs), q_field, "custom", box=box,
                          labels=tuple(labels) + (_expr.to_string(q_expr),))
    return fam.metric(name)


# ---------------------------------------------------------------------------
# R-separable family


def _check_roots(roots) -> tuple:
    roots = tuple(float(e) for e in roots)
    if any(b <= a for a, b in zip(roots, roots[1:])):
        raise DomainError(f"roots must be strictly increasing, got {roots}")
    return roots


def chain_domain(roots: Sequence[float], margin: float = DOMAIN_MARGIN) -> Domain:
    """Box e1 < q1 < e2 < q2 < e3 < q3 < e4, inset by ``margin`` of each gap."""
    e = _check_roots(roots)
    lo = [e[k] + margin * (e[k + 1] - e[k]) for k in range(3)]
    hi = [e[k + 1] - margin * (e[k + 1] - e[k]) for k in range(3)]
    return Domain(lo, hi)


def alternating_domain(coeffs, margin: float = DOMAIN_MARGIN, width: float = 1.0) -> Domain:
    """Three consecutive gaps between real roots of P on which P alternates sign.

    Unbounded end gaps are truncated to ``width``.  Raises when P has fewer
    than two distinct real roots (no Riemannian ordering exists).
    """
    roots = np.roots(np.asarray(coeffs, dtype=float)[::-1])
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    real = real[np.concatenate([[True], np.diff(real) > 1e-9])] if len(real) else real
    if len(real) < 2:
        raise DomainError("P needs at least two distinct real roots for a Riemannian domain")
    edges = [real[0] - width] + list(real) + [real[-1] + width]
    # prefer the bounded gaps
    start = 1 if len(real) >= 4 else 0
    lo, hi = [], []
    for k in range(start, start + 3):
        a, b = edges[k], edges[k + 1]
        lo.append(a + margin * (b - a))
        hi.append(b - margin * (b - a))
    return Domain(lo, hi)


def polynomial_h(coeffs) -> Callable:
    coeffs = tuple(float(c) for c in coeffs)

    def P(x):
        return jets.polyval(coeffs, x)
    P.coeffs = coeffs
    return P


def _sign_on(box: Domain, family_gup, strict: bool = True) -> float:
    """Common sign of the components at the box center (1.0 for indefinite, non-strict)."""
    center = box.center()
    vals = [jets.as_jet(g(list(center)), 3, 0).value for g in family_gup]
    signs = {math.copysign(1.0, v) for v in vals}
    if len(signs) != 1:
        if not strict:
            return 1.0
        raise DomainError(
            f"components have mixed signs {vals} on the domain; no Riemannian normalization")
    return signs.pop()


def make_rsep(P=None, Q="unit", *, roots=None, coeffs=None, radius: float = 1.0,
              box: Domain | None = None, params=None, name: str | None = None) -> DiagonalMetric:
    """R-separable metric g^ii = Q P(q^i)(q^{i+2} - q^{i+1}) with deg P <= 5.

    ``P`` may be given as ascending ``coeffs`` or as strictly increasing real
    ``roots`` (then P is monic).  ``Q`` is ``"unit"``, ``"euclidean"`` (Q_E,
    needs five roots), ``"sphere"`` (Q_S with ``radius``, needs five roots) or
    an expression string.  An overall sign is folded into the metric so that
    all components are positive on the domain; it is recorded on the family.
    Without a box, a P lacking two distinct real roots gets the default box and
    an indefinite metric.
    """
    if P is not None:
        if roots is None and coeffs is None:
            coeffs = P
    if roots is not None:
        roots = _check_roots(roots)
        coeffs = tuple(poly_from_roots(roots))
    if coeffs is None:
        raise ValueError("make_rsep needs roots or coefficients")
    coeffs = tuple(float(c) for c in coeffs)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    if len(coeffs) - 1 > 5:
        raise RsepError(f"P has degree {len(coeffs) - 1}; the R-separable family needs degree <= 5")
    chart = None
    if Q in ("euclidean", "sphere"):
        if roots is None or len(roots) != 5:
            raise ValueError(f"Q={Q!r} needs five ordered real roots")
        chart = KalninsChart(roots)
        q_field = chart.q_euclidean if Q == "euclidean" else chart.sphere_factor(radius)
    elif Q in ("unit", None):
        q_field = lambda q: 1.0
        Q = "unit"
    else:
        q_expr = _expr.parse(Q, COORDS, list(params or {}))
        q_field = _expr.compile_field(q_expr, COORDS, dict(params or {}))
    strict = True
    if box is None:
        if roots is not None and len(roots) == 5:
            box = chain_domain(roots)
        else:
            try:
                box = alternating_domain(coeffs)
            except DomainError:
                # no sign-alternating gaps (e.g. P = 1): the metric is indefinite
                box, strict = DEFAULT_BOX, False
    h = polynomial_h(coeffs)
    fam = SeparableFamily((h, h, h), q_field, Q if Q in ("unit", "euclidean", "sphere") else "custom",
                          coeffs=coeffs, roots=roots, radius=radius if Q == "sphere" else None,
                          box=box, kalnins=chart)
    sign = _sign_on(box, [fam.gup(i) for i in range(3)], strict)
    fam = SeparableFamily(fam.h, fam.Q, fam.conformal, fam.coeffs, fam.roots, fam.radius, sign,
                          box, kalnins=chart)
    return fam.metric(name or f"rsep[{fam.conformal}]")


# ---------------------------------------------------------------------------
# Kalnins chart


def _radicand(q, e, k):
    """prod_h (q^h - e_k) / prod_{m != k} (e_k - e_m), negated for k = 5."""
    num = (q[0] - e[k]) * (q[1] - e[k]) * (q[2] - e[k])
    den = math.prod(e[k] - e[m] for m in range(5) if m != k)
    val = num / den
    return -val if k == 4 else val


def _root(x, what):
    v = x.value if isinstance(x, Jet) else x
    if v < 0:
        raise DomainError(f"negative radicand {v!r} in {what}: point outside the root chain")
    return jets.sqrt(x)


@dataclass(frozen=True)
class KalninsChart:
    """Coordinates q attached to five ordered real roots, mapped to Cartesian x."""

    roots: tuple

    def __post_init__(self):
        e = _check_roots(self.roots)
        if len(e) != 5:
            raise ValueError("a Kalnins chart needs exactly five roots")
        object.__setattr__(self, "roots", e)

    @property
    def domain(self) -> Domain:
        return chain_domain(self.roots)

    def check(self, q) -> None:
        e = self.roots
        v = [x.value if isinstance(x, Jet) else float(x) for x in q]
        if not (e[0] < v[0] < e[1] < v[1] < e[2] < v[2] < e[3]):
            raise DomainError(
                f"q = {v} violates the ordering e1 < q1 < e2 < q2 < e3 < q3 < e4 for roots {e}")

    def lam(self, q):
        e = self.roots
        return _root(_radicand(q, e, 0), "lambda (e1 term)") + _root(_radicand(q, e, 4),
                                                                    "lambda (e5 term)")

    def cartesian(self, q):
        """(lambda, x1, x2, x3) on floats or jets."""
        self.check(q)
        e = self.roots
        lam = self.lam(q)
        xs = [_root(_radicand(q, e, k), f"x{k}") / lam for k in (1, 2, 3)]
        return lam, xs

    def q_euclidean(self, q):
        lam = self.lam(q)
        return 4.0 * lam * lam / vandermonde(q)

    def sphere_factor(self, radius: float) -> Callable:
        if radius <= 0:
            raise DomainError(f"sphere radius must be positive, got {radius}")

        def q_sphere(q):
            lam, x = self.cartesian(q)
            s = radius ** 2 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
            return lam * lam * s * s / (radius ** 4 * vandermonde(q))
        return q_sphere


def kalnins_map(e, q) -> tuple[float, float, float, float]:
    """(lambda, x1, x2, x3) for roots ``e`` and a point ``q`` in the root chain."""
    lam, x = KalninsChart(tuple(e)).cartesian([float(v) for v in q])
    return float(lam), float(x[0]), float(x[1]), float(x[2])


def q_euclidean(e, q) -> float:
    return float(KalninsChart(tuple(e)).q_euclidean([float(v) for v in q]))


@dataclass
class PullbackResult:
    max_rel_diagonal: float
    max_abs_offdiagonal: float
    points: int
    skipped: int


def pullback_check(chart: KalninsChart, m: DiagonalMetric, points, target: Callable | None = None,
                   scale: float = 1.0) -> PullbackResult:
    """Compare the pullback of a flat metric through ``chart`` with the covariant metric of ``m``.

    ``target(q_jets)`` returns the jets of the embedding coordinates; by
    default it is the Kalnins map to Cartesian x (so the pulled-back metric
    is Euclidean).  ``scale`` multiplies the reference metric (used by
    detector sanity checks).
    """
    if target is None:
        target = lambda q: chart.cartesian(q)[1]
    worst_d, worst_o, skipped, used = 0.0, 0.0, 0, 0
    for p in points:
        q = jets.seed_point(p, 1)
        try:
            x = target(q)
        except DomainError:
            skipped += 1
            continue
        J = np.array([[xa.grad[i] if isinstance(xa, Jet) else 0.0 for i in range(3)] for xa in x])
        if abs(np.linalg.det(J[:3, :3]) if J.shape[0] == 3 else 1.0) < 1e-14:
            skipped += 1
            continue
        G = J.T @ J
        gdn = np.array([1.0 / g.value for g in m.components(p, 0)]) * scale
        worst_d = max(worst_d, float(np.max(np.abs(np.diag(G) - gdn) / np.abs(gdn))))
        off = G - np.diag(np.diag(G))
        worst_o = max(worst_o, float(np.max(np.abs(off))))
        used += 1
    return PullbackResult(worst_d, worst_o, used, skipped)


# ---------------------------------------------------------------------------
# sphere


def stereographic_factor(r: float, X) -> float:
    """Q_SE = (r^2 + |X|^2)^2 / (4 r^4), relating the stereographic sphere to flat space."""
    s = r * r + sum(x * x for x in X)
    return s * s / (4.0 * r ** 4)


def stereographic_embedding(r: float, X):
    """Point of E^4 on the sphere of radius r with stereographic coordinates X."""
    s = r * r + X[0] * X[0] + X[1] * X[1] + X[2] * X[2]
    return [2.0 * r * r * X[0] / s, 2.0 * r * r * X[1] / s, 2.0 * r * r * X[2] / s,
            r - 2.0 * r ** 3 / s]


def sphere_chart(r: float = 1.0, extent: float = 2.0) -> DiagonalMetric:
    """Round S^3 of radius r in stereographic coordinates X (box |X^i| <= extent * r)."""
    if r <= 0:
        raise DomainError(f"sphere radius must be positive, got {r}")

    def comp(q):
        s = r * r + q[0] * q[0] + q[1] * q[1] + q[2] * q[2]
        return s * s / (4.0 * r ** 4)
    box = Domain((-extent * r,) * 3, (extent * r,) * 3)
    return DiagonalMetric((comp, comp, comp), ("X1", "X2", "X3"), box, f"sphere[r={r}]")


@dataclass
class SphereFactors:
    X: tuple
    Q_SE: float
    Q_E: float
    Q_S: float


def sphere_factors(r: float, q, roots=(0.0, 1.0, 2.0, 3.0, 4.0)) -> SphereFactors:
    """Stereographic coordinates X(q) and the factors Q_SE, Q_E and Q_S at q."""
    if r <= 0:
        raise DomainError(f"sphere radius must be positive, got {r}")
    chart = KalninsChart(tuple(roots))
    q = [float(v) for v in q]
    _, X = chart.cartesian(q)
    return SphereFactors(tuple(float(x) for x in X), stereographic_factor(r, X),
                         float(chart.q_euclidean(q)), float(chart.sphere_factor(r)(q)))


def sphere_rsep(r: float = 1.0, roots=(0.0, 1.0, 2.0, 3.0, 4.0)) -> DiagonalMetric:
    return make_rsep(roots=roots, Q="sphere", radius=r, name=f"rsep[sphere r={r}]")


# ---------------------------------------------------------------------------
# Eisenhart metric


def eisenhart_metric(coeffs, box: Domain | None = None, name: str = "eisenhart") -> DiagonalMetric:
    """Contravariant form of g_ii = (q^i - q^{i+1})(q^i - q^{i+2}) / P(q^i).

    This is the R-separable metric with Q = 1 / ((q1-q2)(q2-q3)(q3-q1)).  A
    definite metric is normalized to positive components; an indefinite one
    (for instance P = 1) is returned as is.  When
    a box is given and P has a root inside one of its coordinate ranges, the
    range is shrunk to the largest root-free sub-interval and a warning is issued.
    """
    coeffs = tuple(float(c) for c in coeffs)
    if len(coeffs) - 1 > 5:
        raise RsepError(f"P has degree {len(coeffs) - 1}; expected <= 5")
    if box is None:
        box = alternating_domain(coeffs) if len(coeffs) > 2 else DEFAULT_BOX
    else:
        box = _shrink_to_root_free(box, coeffs)
    h = polynomial_h(coeffs)
    inv_vandermonde = lambda q: 1.0 / vandermonde(q)
    fam = SeparableFamily((h, h, h), inv_vandermonde, "eisenhart", coeffs=coeffs, box=box)
    sign = _sign_on(box, [fam.gup(i) for i in range(3)], strict=False)
    fam = SeparableFamily((h, h, h), inv_vandermonde, "eisenhart", coeffs=coeffs, sign=sign,
                          box=box)
    return fam.metric(name)


def _shrink_to_root_free(box: Domain, coeffs) -> Domain:
    roots = np.roots(np.asarray(coeffs)[::-1]) if len(coeffs) > 1 else np.array([])
    real = sorted(r.real for r in roots if abs(r.imag) < 1e-12)
    lo, hi = list(box.lower), list(box.upper)
    changed = []
    for i in range(box.n):
        inside = [r for r in real if lo[i] < r < hi[i]]
        if not inside:
            continue
        cuts = [lo[i]] + inside + [hi[i]]
        a, b = max(zip(cuts, cuts[1:]), key=lambda ab: ab[1] - ab[0])
        margin = DOMAIN_MARGIN * (b - a)
        lo[i], hi[i] = a + (margin if a in inside else 0.0), b - (margin if b in inside else 0.0)
        changed.append((i, inside))
    if changed:
        warnings.warn(f"P has roots inside the domain {changed}; domain shrunk to "
                      f"{list(zip(lo, hi))}", stacklevel=3)
    return Domain(lo, hi, box.min_separation)
