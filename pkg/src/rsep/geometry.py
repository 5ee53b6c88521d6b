"""Curvature and second-order operators for diagonal (orthogonal) metrics.

Everything is computed from jets of the contravariant components g^ii, so
derivatives are exact to rounding.  Differentiating a jet lowers its order by
one; a metric evaluated at order ``k`` yields Christoffel symbols to order
``k-1``, the Ricci tensor to order ``k-2``, and so on.  The Cotton tensor needs
the gradient of the Ricci tensor and hence ``k >= 3``.

Sign conventions: the Ricci tensor is ``R_ij = d_k G^k_ij - d_j G^k_ik +
G^k_kl G^l_ij - G^k_jl G^l_ik`` (round spheres have positive scalar
curvature) and the conformally invariant operator is
``H f = Lap f - (n-2)/(4(n-1)) R_s f``, which is the sign that makes ``H``
covariant under ``g -> exp(2 sigma) g`` with this curvature convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import jets
from .errors import DomainError, NonFiniteError, SignatureError
from .expr import field_from_text
from .jets import Jet
from .verdict import classify

Field = Callable[[Sequence[Jet]], "Jet | float"]


def ci_coefficient(n: int) -> float:
    """Coefficient of R_s in the conformally invariant operator (-1/8 for n = 3)."""
    return -(n - 2) / (4.0 * (n - 1))


def evaluate_field(f: Field, point, order: int) -> Jet:
    q = jets.seed_point(point, order)
    return jets.as_jet(f(q), len(point), order)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box with an optional minimum pairwise coordinate separation."""

    lower: tuple
    upper: tuple
    min_separation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper bounds differ in length")
        if any(a >= b for a, b in zip(self.lower, self.upper)):
            raise ValueError(f"empty box {self.lower} .. {self.upper}")

    @property
    def n(self) -> int:
        return len(self.lower)

    def separation(self, p) -> float:
        p = list(p)
        return min((abs(a - b) for i, a in enumerate(p) for b in p[i + 1:]), default=math.inf)

    def contains(self, p) -> bool:
        if len(p) != self.n:
            return False
        if any(not (a <= x <= b) for x, a, b in zip(p, self.lower, self.upper)):
            return False
        return self.separation(p) >= self.min_separation

    def check(self, p) -> None:
        if len(p) != self.n:
            raise DomainError(f"point {list(p)} has wrong dimension (expected {self.n})")
        for i, (x, a, b) in enumerate(zip(p, self.lower, self.upper)):
            if not a <= x <= b:
                raise DomainError(f"coordinate {i} = {x!r} outside [{a}, {b}]")
        if self.separation(p) < self.min_separation:
            raise DomainError(
                f"point {list(p)} violates minimum coordinate separation {self.min_separation}")

    def inset(self, fraction: float) -> "Domain":
        lo = [a + fraction * (b - a) for a, b in zip(self.lower, self.upper)]
        hi = [b - fraction * (b - a) for a, b in zip(self.lower, self.upper)]
        return replace(self, lower=tuple(lo), upper=tuple(hi))

    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        """Scrambled Halton points in the box, rejecting those closer than min_separation."""
        if count <= 0:
            raise ValueError("sample count must be positive")
        engine = qmc.Halton(d=self.n, scramble=True, seed=seed)
        lo, hi = np.array(self.lower), np.array(self.upper)
        out = []
        for _ in range(1000):
            batch = qmc.scale(engine.random(count), lo, hi)
            out.extend(p for p in batch if self.separation(p) >= self.min_separation)
            if len(out) >= count:
                return np.array(out[:count])
        raise DomainError("could not draw enough points honouring the minimum separation")


@dataclass(frozen=True)
class DiagonalMetric:
    """Orthogonal metric given by its contravariant diagonal components g^ii.

    Each component is a field: a callable taking the list of coordinate jets
    and returning a jet (or a constant).  Off-diagonal components are zero by
    construction.
    """

    gup: tuple
    coord_names: tuple
    domain: Domain | None = None
    name: str = "metric"
    family: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gup", tuple(self.gup))
        object.__setattr__(self, "coord_names", tuple(self.coord_names))
        if len(self.gup) != len(self.coord_names):
            raise ValueError("one component per coordinate is required")
        if self.domain is not None and self.domain.n != len(self.gup):
            raise ValueError("domain dimension does not match the metric")

    @classmethod
    def from_expressions(cls, texts: Sequence[str], coord_names: Sequence[str] = ("q1", "q2", "q3"),
                         params=None, domain: Domain | None = None, name: str = "metric"):
        params = dict(params or {})
        gup = [field_from_text(t, coord_names, params) for t in texts]
        return cls(tuple(gup), tuple(coord_names), domain, name)

    @property
    def n(self) -> int:
        return len(self.gup)

    def components(self, point, order: int, check_domain: bool = True) -> list[Jet]:
        """Jets of g^ii at ``point``; raises on domain violation or degenerate values."""
        point = [float(x) for x in point]
        if len(point) != self.n:
            raise DomainError(f"point {point} has wrong dimension (expected {self.n})")
        if check_domain and self.domain is not None:
            self.domain.check(point)
        q = jets.seed_point(point, order)
        out = []
        for i, f in enumerate(self.gup):
            g = jets.as_jet(f(q), self.n, order)
            if not g.is_finite():
                raise NonFiniteError(f"g^{i + 1}{i + 1} is not finite at {point}")
            if g.value == 0:
                raise DomainError(f"g^{i + 1}{i + 1} vanishes at {point}")
            out.append(g)
        return out

    def conformal_rescale(self, sigma: Field, name: str | None = None) -> "DiagonalMetric":
        """The metric exp(2 sigma) g, i.e. contravariant components exp(-2 sigma) g^ii."""
        def scaled(f):
            return lambda q: jets.exp(-2.0 * sigma(q)) * f(q)
        return DiagonalMetric(tuple(scaled(f) for f in self.gup), self.coord_names, self.domain,
                              name or f"exp(2 sigma) {self.name}")


def _total(terms):
    terms = [t for t in terms if t is not None]
    if not terms:
        return None
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return acc


class LocalGeometry:
    """All curvature quantities of a diagonal metric at one point, from order-``order`` jets.

    Quantities are computed lazily and cached.  ``riemannian=True`` rejects
    points where some g^ii is not positive.
    """

    def __init__(self, metric: DiagonalMetric, point, order: int = 2, riemannian: bool = False,
                 check_domain: bool = True):
        self.metric = metric
        self.point = np.array(point, dtype=float)
        self.n = metric.n
        self.order = order
        self.gup = metric.components(self.point, order, check_domain)
        if riemannian and any(g.value <= 0 for g in self.gup):
            raise SignatureError(
                f"metric {metric.name} is not Riemannian at {self.point.tolist()}: "
                f"g^ii = {[g.value for g in self.gup]}")

    def _need(self, k: int, what: str) -> None:
        if self.order < k:
            raise ValueError(f"{what} needs metric jets of order >= {k}, have {self.order}")

    # Christoffel symbols --------------------------------------------------

    @cached_property
    def gdn(self) -> list[Jet]:
        return [jets.reciprocal(g) for g in self.gup]

    @cached_property
    def _dg(self):
        """_dg[i][l] = d_l g_ii (order - 1)."""
        self._need(1, "Christoffel symbols")
        return [[g.diff(l) for l in range(self.n)] for g in self.gdn]

    @cached_property
    def gamma_first_jets(self):
        """Gamma_hki = (d_h g_ki + d_k g_hi - d_i g_hk) / 2 as jets; None where identically zero."""
        n, dg = self.n, self._dg
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for h in range(n):
            for k in range(n):
                for i in range(n):
                    if h == k == i:
                        out[h][k][i] = 0.5 * dg[i][i]
                    elif h == k:
                        out[h][k][i] = -0.5 * dg[h][i]
                    elif h == i:
                        out[h][k][i] = 0.5 * dg[i][k]
                    elif k == i:
                        out[h][k][i] = 0.5 * dg[i][h]
        return out

    @cached_property
    def gamma_second_jets(self):
        """Gamma^l_hk = g^ll Gamma_hkl as jets (order - 1)."""
        n, g1 = self.n, self.gamma_first_jets
        gup = [g.truncate(self.order - 1) for g in self.gup]
        return [[[None if g1[h][k][l] is None else gup[l] * g1[h][k][l]
                  for k in range(n)] for h in range(n)] for l in range(n)]

    @cached_property
    def contracted_gamma_jets(self) -> list[Jet]:
        """Gamma_i = g^hh Gamma_hhi (order - 1)."""
        n, g1 = self.n, self.gamma_first_jets
        gup = [g.truncate(self.order - 1) for g in self.gup]
        return [_total([gup[h] * g1[h][h][i] for h in range(n)]) for i in range(n)]

    # curvature ------------------------------------------------------------

    @cached_property
    def ricci_jets(self):
        """Covariant Ricci tensor (order - 2) as a symmetric nested list of jets."""
        self._need(2, "the Ricci tensor")
        n, k2 = self.n, self.order - 2
        G = self.gamma_second_jets
        Gt = [[[None if G[l][h][k] is None else G[l][h][k].truncate(k2)
                for k in range(n)] for h in range(n)] for l in range(n)]
        trace = [_total([Gt[k][k][l] for k in range(n)]) for l in range(n)]
        zero = Jet.constant(0.0, n, k2)
        R = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                terms = []
                for k in range(n):
                    if G[k][i][j] is not None:
                        terms.append(G[k][i][j].diff(k))
                    if G[k][i][k] is not None:
                        terms.append(-G[k][i][k].diff(j))
                for l in range(n):
                    if trace[l] is not None and Gt[l][i][j] is not None:
                        terms.append(trace[l] * Gt[l][i][j])
                    for k in range(n):
                        if Gt[k][j][l] is not None and Gt[l][i][k] is not None:
                            terms.append(-(Gt[k][j][l] * Gt[l][i][k]))
                R[i][j] = R[j][i] = _total(terms) or zero
        return R

    @cached_property
    def scalar_jet(self) -> Jet:
        k2 = self.order - 2
        R = self.ricci_jets
        return _total([self.gup[i].truncate(k2) * R[i][i] for i in range(self.n)])

    @cached_property
    def potential_jet(self) -> Jet:
        """Modified potential in closed form: U = 1/4 g^ii (2 d_i G_i - G_i^2) + kappa R_s."""
        self._need(2, "the modified potential")
        k2 = self.order - 2
        G = self.contracted_gamma_jets
        terms = []
        for i in range(self.n):
            gi = G[i].truncate(k2)
            terms.append(0.25 * self.gup[i].truncate(k2) * (2.0 * G[i].diff(i) - gi * gi))
        return _total(terms) + ci_coefficient(self.n) * self.scalar_jet

    # float views ----------------------------------------------------------

    def christoffel_first(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n, n))
        for h in range(n):
            for k in range(n):
                for i in range(n):
                    if self.gamma_first_jets[h][k][i] is not None:
                        out[h, k, i] = self.gamma_first_jets[h][k][i].value
        return out

    def christoffel_second(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n, n))
        G = self.gamma_second_jets
        for l in range(n):
            for h in range(n):
                for k in range(n):
                    if G[l][h][k] is not None:
                        out[l, h, k] = G[l][h][k].value
        return out

    def contracted_gamma(self) -> np.ndarray:
        return np.array([g.value for g in self.contracted_gamma_jets])

    def ricci(self) -> np.ndarray:
        return np.array([[r.value for r in row] for row in self.ricci_jets])

    def scalar(self) -> float:
        return self.scalar_jet.value

    def metric_up(self) -> np.ndarray:
        return np.array([g.value for g in self.gup])

    def covariant_ricci_gradient(self) -> np.ndarray:
        """nabla_k R_ij as an (n, n, n) array indexed [i, j, k]."""
        self._need(3, "the covariant derivative of Ricci")
        n = self.n
        R = self.ricci()
        dR = np.array([[self.ricci_jets[i][j].grad for j in range(n)] for i in range(n)])
        G2 = self.christoffel_second()  # [l, k, i]
        # nabla_k R_ij = d_k R_ij - G^l_ki R_lj - G^l_kj R_il
        return dR - np.einsum("lki,lj->ijk", G2, R) - np.einsum("lkj,il->ijk", G2, R)

    def cotton_with_scale(self) -> tuple[np.ndarray, float]:
        """Cotton tensor C_ijk (antisymmetric in j, k) and the magnitude of its largest term."""
        n = self.n
        nabla = self.covariant_ricci_gradient()
        dRs = self.scalar_jet.grad
        gdn = np.diag([1.0 / g.value for g in self.gup])
        c = 1.0 / (2.0 * (n - 1))
        C = (nabla - nabla.transpose(0, 2, 1)
             + c * (np.einsum("ik,j->ijk", gdn, dRs) - np.einsum("ij,k->ijk", gdn, dRs)))
        return C, float(np.max(np.abs(nabla))) if nabla.size else 0.0

    def cotton(self) -> np.ndarray:
        return self.cotton_with_scale()[0]

    # operators ------------------------------------------------------------

    def laplacian(self, f: Jet) -> float:
        """Laplace-Beltrami operator (1/sqrt g) d_i (sqrt g g^ii d_i f) for an order >= 2 jet f."""
        self._need(1, "the Laplacian")
        n = self.n
        gup = [g.truncate(1) for g in self.gup]
        sqrt_g = Jet.constant(1.0, n, 1)
        for g in gup:
            sqrt_g = sqrt_g * jets.power(jets.fabs(g), -0.5)
        total = 0.0
        for i in range(n):
            flux = (sqrt_g * gup[i]).diff(i).value / sqrt_g.value
            total += gup[i].value * f.deriv(i, i) + flux * f.deriv(i)
        return total

    def ci_laplacian(self, f: Jet) -> float:
        return self.laplacian(f) + ci_coefficient(self.n) * self.scalar() * f.value


@dataclass
class CurvatureData:
    point: np.ndarray
    gamma_first: np.ndarray
    gamma_contracted: np.ndarray
    ricci: np.ndarray
    scalar: float
    cotton: np.ndarray | None


# ---------------------------------------------------------------------------
# functional API


def christoffel_first(m: DiagonalMetric, p) -> np.ndarray:
    """Gamma_hki indexed [h, k, i]."""
    return LocalGeometry(m, p, 1, riemannian=True).christoffel_first()


def contracted_gamma(m: DiagonalMetric, p) -> np.ndarray:
    return LocalGeometry(m, p, 1, riemannian=True).contracted_gamma()


def ricci(m: DiagonalMetric, p) -> tuple[np.ndarray, float]:
    geo = LocalGeometry(m, p, 2, riemannian=True)
    return geo.ricci(), geo.scalar()


def scalar_curvature(m: DiagonalMetric, p) -> float:
    return LocalGeometry(m, p, 2, riemannian=True).scalar()


def cotton(m: DiagonalMetric, p) -> np.ndarray:
    return LocalGeometry(m, p, 3, riemannian=True).cotton()


def curvature_data(m: DiagonalMetric, p, with_cotton: bool = True) -> CurvatureData:
    geo = LocalGeometry(m, p, 3 if with_cotton else 2, riemannian=True)
    return CurvatureData(geo.point, geo.christoffel_first(), geo.contracted_gamma(), geo.ricci(),
                         geo.scalar(), geo.cotton() if with_cotton else None)


def laplace_beltrami(m: DiagonalMetric, f: Field, p) -> float:
    geo = LocalGeometry(m, p, 1, riemannian=True)
    return geo.laplacian(evaluate_field(f, p, 2))


def ci_laplace(m: DiagonalMetric, f: Field, p) -> float:
    geo = LocalGeometry(m, p, 2, riemannian=True)
    return geo.ci_laplacian(evaluate_field(f, p, 2))


@dataclass
class CottonScan:
    verdict: str
    residual: float
    raw_max: float
    tol_pass: float
    tol_fail: float
    samples: int
    skipped: int


def check_cotton(m: DiagonalMetric, points, tol_pass: float = 1e-7,
                 tol_fail: float = 1e-3) -> CottonScan:
    """Sampled conformal-flatness test: sup over points of |C_ijk| / max(1, |nabla Ric|)."""
    worst = raw = 0.0
    used = skipped = 0
    for p in points:
        try:
            C, scale = LocalGeometry(m, p, 3).cotton_with_scale()
        except (DomainError, NonFiniteError):
            skipped += 1
            continue
        used += 1
        c = float(np.max(np.abs(C)))
        raw = max(raw, c)
        worst = max(worst, c / max(1.0, scale))
    if used == 0:
        raise DomainError("no usable sample points for the Cotton scan")
    return CottonScan(classify(worst, tol_pass, tol_fail), worst, raw, tol_pass, tol_fail, used, skipped)
