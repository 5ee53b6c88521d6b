"""Separated ODEs, their integration, and residual checks of the assembled solution.

For a family metric g^ii = Q h_i(q^i) V_i with U = sum g^ii f_i(q^i), the
ansatz psi = R prod_i phi_i(q^i) solves the CI-Laplace equation when each
factor solves

    h_i(q) phi'' - (c1 q + c2 - h_i(q) f_i(q)) phi = 0

with the same constants (c1, c2) in every equation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import jets
from .errors import CertificationError, DomainError, IntegrationError, RsepError
from .geometry import DiagonalMetric, Domain, LocalGeometry, ci_coefficient
from .jets import Jet
from .separability import (PseudoStackelDecomposition, RFactor, build_r_factor,
                           check_conformal_separability, check_pseudo_stackel,
                           decompose_pseudo_stackel, potential_field)

RTOL = 1e-10
ATOL = 1e-10
RESIDUAL_GUARD = 1e-300
INTERVAL_INSET = 0.05


@dataclass(frozen=True)
class SeparatedODE:
    """A(q) phi'' + d phi' - B(q; c1, c2) phi = 0 on ``interval``.

    A = h, B = c1 q + c2 - h f.  ``first_order`` (d) is zero for the derived
    equations; a nonzero value is only used to probe sensitivity.
    """

    index: int
    interval: tuple
    h: Callable[[float], float]
    f: Callable[[float], float]
    first_order: float = 0.0
    roots: tuple = ()

    def A(self, q: float) -> float:
        return float(self.h(q))

    def B(self, q: float, c1: float, c2: float) -> float:
        return c1 * q + c2 - self.A(q) * self.f(q)

    def second(self, q: float, phi: float, dphi: float, c1: float, c2: float) -> float:
        return (self.B(q, c1, c2) * phi - self.first_order * dphi) / self.A(q)

    def with_first_order(self, d: float) -> "SeparatedODE":
        return SeparatedODE(self.index, self.interval, self.h, self.f, d, self.roots)

    def check_nonvanishing(self, grid: int = 513) -> None:
        a, b = self.interval
        for r in self.roots:
            if a <= r <= b:
                raise IntegrationError(
                    f"A_{self.index + 1} vanishes at q = {r:g} inside {self.interval}")
        xs = np.linspace(a, b, grid)
        vals = np.array([self.A(x) for x in xs])
        if np.any(vals == 0) or np.any(np.sign(vals[1:]) != np.sign(vals[:-1])):
            k = int(np.argmax((vals == 0)[:-1] | (np.sign(vals[1:]) != np.sign(vals[:-1]))))
            raise IntegrationError(
                f"A_{self.index + 1} changes sign near q = {xs[k]:g} inside {self.interval}")


@dataclass
class IntegratedFactor:
    """Dense phi, phi' on the ODE interval, integrated outward from ``anchor``."""

    ode: SeparatedODE
    c1: float
    c2: float
    anchor: float
    init: tuple
    pieces: list

    def __call__(self, q: float) -> tuple[float, float]:
        a, b = self.ode.interval
        if not (a - 1e-12 <= q <= b + 1e-12):
            raise DomainError(f"q = {q} outside the integration interval {self.ode.interval}")
        if q == self.anchor:
            return self.init
        for lo, hi, sol in self.pieces:
            if lo - 1e-12 <= q <= hi + 1e-12:
                y = sol(q)
                return float(y[0]), float(y[1])
        raise DomainError(f"q = {q} not covered by the dense solution")

    def derivatives(self, q: float) -> tuple[float, float, float]:
        phi, dphi = self(q)
        return phi, dphi, self.ode.second(q, phi, dphi, self.c1, self.c2)


def integrate(ode: SeparatedODE, c1: float, c2: float, init=(1.0, 0.0), anchor: float | None = None,
              rtol: float = RTOL, atol: float = ATOL) -> IntegratedFactor:
    """Integrate the ODE from ``anchor`` (default: left end) to both interval ends.

    Uses an explicit adaptive Runge-Kutta method of order 8 with dense output.
    """
    ode.check_nonvanishing()
    a, b = ode.interval
    anchor = a if anchor is None else float(anchor)
    if not a <= anchor <= b:
        raise DomainError(f"anchor {anchor} outside {ode.interval}")

    def rhs(q, y):
        return [y[1], ode.second(q, y[0], y[1], c1, c2)]

    pieces = []
    for end in (a, b):
        if end == anchor:
            continue
        sol = solve_ivp(rhs, (anchor, end), list(init), method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
        if not sol.success:
            raise IntegrationError(f"integration of phi_{ode.index + 1} failed: {sol.message}")
        pieces.append((min(anchor, end), max(anchor, end), sol.sol))
    return IntegratedFactor(ode, c1, c2, anchor, tuple(float(v) for v in init), pieces)


# ---------------------------------------------------------------------------
# deriving the ODEs


def derive_separated_odes(m: DiagonalMetric, decomposition: PseudoStackelDecomposition | None,
                          box: Domain | None = None, require_certified: bool = True
                          ) -> list[SeparatedODE]:
    """Separated equations for a family metric and its pseudo-Stäckel decomposition.

    ``box`` defaults to the decomposition's intervals (the family domain
    inset by 5%).
    """
    fam = m.family
    if decomposition is None and require_certified:
        raise CertificationError("no pseudo-Stäckel decomposition: the metric is not certified")
    if fam is None or not hasattr(fam, "h"):
        raise CertificationError(f"metric {m.name} has no separable-family structure")
    intervals = decomposition.intervals if box is None else \
        tuple((box.lower[i], box.upper[i]) for i in range(3))
    for i, (lo, hi) in enumerate(intervals):
        dlo, dhi = decomposition.intervals[i]
        if lo < dlo - 1e-12 or hi > dhi + 1e-12:
            raise DomainError(
                f"interval {(lo, hi)} for q{i + 1} exceeds the interpolated range {(dlo, dhi)}")
    roots = ()
    if getattr(fam, "coeffs", None) is not None and len(fam.coeffs) > 1:
        r = np.roots(np.asarray(fam.coeffs)[::-1])
        roots = tuple(float(x.real) for x in r if abs(x.imag) < 1e-12)
    odes = []
    for i in range(3):
        odes.append(SeparatedODE(i, tuple(intervals[i]), fam.h[i], decomposition.functions[i],
                                 roots=roots))
    return odes


# ---------------------------------------------------------------------------
# assembled solution


@dataclass
class SeparatedSolution:
    """psi = R prod_i phi_i(q^i) with phi_i(a_i) = 1, phi_i'(a_i) = s_i."""

    c1: float
    c2: float
    slopes: tuple
    factors: list
    rfactor: RFactor | None
    anchors: tuple = ()

    @property
    def constants(self) -> tuple:
        return (self.c1, self.c2) + tuple(self.slopes)

    def psi(self, q) -> float:
        val = math.exp(self.rfactor.log_value(q)) if self.rfactor is not None else 1.0
        for i, fac in enumerate(self.factors):
            val *= fac(q[i])[0]
        return val

    def psi_jet(self, q, order: int = 2, with_r: bool = True) -> Jet:
        q = [float(x) for x in q]
        n = len(q)
        seeds = jets.seed_point(q, order)
        out = jets.exp(self.rfactor.log_jet(q, order)) if with_r and self.rfactor is not None \
            else Jet.constant(1.0, n, order)
        for i, fac in enumerate(self.factors):
            out = out * jets.lift_derivatives(seeds[i], list(fac.derivatives(q[i]))[:order + 1])
        return out


def solve(odes: Sequence[SeparatedODE], rfactor: RFactor | None, c1: float, c2: float,
          slopes: Sequence[float], anchors: Sequence[float] | None = None) -> SeparatedSolution:
    if anchors is None:
        anchors = [0.5 * (o.interval[0] + o.interval[1]) for o in odes]
    factors = [integrate(o, c1, c2, (1.0, s), a) for o, s, a in zip(odes, slopes, anchors)]
    return SeparatedSolution(c1, c2, tuple(slopes), factors, rfactor, tuple(anchors))


def ci_residual(m: DiagonalMetric, psi: Callable[[Sequence[float]], Jet], points,
                energy: float | None = None) -> float:
    """max |H psi| / (|psi| S + eps), S = max(1, sum |g^ii|).

    H is the CI-Laplace operator, or the Helmholtz operator Delta + energy when
    ``energy`` is given.
    """
    worst = 0.0
    for p in points:
        geo = LocalGeometry(m, p, 2, check_domain=False)
        f = psi(p)
        if energy is None:
            val = geo.ci_laplacian(f)
        else:
            val = geo.laplacian(f) + energy * f.value
        scale = max(1.0, sum(abs(g.value) for g in geo.gup))
        worst = max(worst, abs(val) / (abs(f.value) * scale + RESIDUAL_GUARD))
    return worst


def residual(m: DiagonalMetric, sol: SeparatedSolution, points, with_r: bool = True,
             energy: float | None = None) -> float:
    """Normalized CI-Laplace residual of the assembled solution at ``points``."""
    for p in points:
        for i, fac in enumerate(sol.factors):
            lo, hi = fac.ode.interval
            if not lo <= p[i] <= hi:
                raise DomainError(f"point {list(p)} outside the solution box")
    return ci_residual(m, lambda p: sol.psi_jet(p, 2, with_r), points, energy)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Pipeline:
    metric: DiagonalMetric
    rfactor: RFactor
    decomposition: PseudoStackelDecomposition
    odes: list
    certified: bool
    box: Domain

    def solve(self, c1, c2, slopes) -> SeparatedSolution:
        return solve(self.odes, self.rfactor, c1, c2, slopes)

    def points(self, count: int = 50, seed: int = 0) -> np.ndarray:
        return self.box.sample(count, seed)


def build_pipeline(m: DiagonalMetric, samples=None, require_certified: bool = True) -> Pipeline:
    """Run the certification chain and derive the separated ODEs.

    With ``require_certified=False`` a failing metric still gets ODEs built
    from its line-sampled potential, which is how negative controls are run.
    """
    rep = check_conformal_separability(m, samples)
    rf = build_r_factor(m, samples=samples) if rep.verdict == "pass" or not require_certified \
        else None
    if rf is None:
        raise CertificationError(f"{m.name} is not conformally separable ({rep.residual:.3g})")
    ps = check_pseudo_stackel(m, samples=samples, decompose=require_certified)
    certified = ps.verdict == "pass"
    if certified:
        dec = ps.decomposition
    elif require_certified:
        raise CertificationError(
            f"{m.name}: modified potential is not a pseudo-Stäckel factor ({ps.residual:.3g})")
    else:
        dec = decompose_pseudo_stackel(m, potential_field(m))
    box = Domain([a for a, _ in dec.intervals], [b for _, b in dec.intervals])
    return Pipeline(m, rf, dec, derive_separated_odes(m, dec, require_certified=False), certified,
                    box)


# ---------------------------------------------------------------------------
# completeness


@dataclass
class RankResult:
    rank: int
    singular_values: np.ndarray
    jacobian: np.ndarray


def log_derivative_map(odes: Sequence[SeparatedODE], base_point: Sequence[float],
                       anchors: Sequence[float] | None = None) -> Callable:
    """(c1, c2, s1, s2, s3) -> (phi_i'/phi_i at q0, i = 1..3; phi_i''/phi_i at q0, i = 1..2)."""
    if anchors is None:
        anchors = [0.5 * (o.interval[0] + o.interval[1]) for o in odes]

    def F(constants):
        c1, c2, *s = constants
        ratios1, ratios2 = [], []
        for o, si, a, q0 in zip(odes, s, anchors, base_point):
            phi, dphi, ddphi = integrate(o, c1, c2, (1.0, si), a).derivatives(q0)
            if abs(phi) < 1e-12:
                raise RsepError(f"phi_{o.index + 1} vanishes at the base point; perturb the constants")
            ratios1.append(dphi / phi)
            ratios2.append(ddphi / phi)
        return np.array(ratios1 + ratios2[:len(odes) - 1])
    return F


def jacobian_rank(F: Callable, constants: Sequence[float], rel_step: float = 1e-5,
                  threshold: float = 1e-8) -> RankResult:
    """Rank of dF/dc by central differences; singular values below threshold * max count as zero."""
    c = np.asarray(constants, dtype=float)
    cols = []
    for a in range(len(c)):
        step = rel_step * max(1.0, abs(c[a]))
        up, dn = c.copy(), c.copy()
        up[a] += step
        dn[a] -= step
        cols.append((np.asarray(F(up)) - np.asarray(F(dn))) / (2 * step))
    J = np.array(cols).T
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > threshold * sv[0])) if sv.size and sv[0] > 0 else 0
    return RankResult(rank, sv, J)


def completeness_rank(odes: Sequence[SeparatedODE], base_point: Sequence[float],
                      constants: Sequence[float], **kw) -> RankResult:
    """Rank of the Jacobian of the log-derivative map; 2n - 1 means a complete solution."""
    return jacobian_rank(log_derivative_map(odes, base_point), constants, **kw)


# ---------------------------------------------------------------------------
# fixed-energy check on the sphere


@dataclass
class FixedEnergyReport:
    radius: float
    scalar_curvature: float
    scalar_curvature_spread: float
    energy: float
    ci_residual: float
    helmholtz_residual: float
    operator_identity_error: float
    points: int
    constants: tuple = field(default_factory=tuple)

    def passed(self, tol: float = 1e-6) -> bool:
        expected = 6.0 / self.radius ** 2
        return (abs(self.scalar_curvature - expected) <= 1e-9 * expected
                and self.helmholtz_residual < tol and self.ci_residual < tol
                and self.operator_identity_error < 1e-10)


def fixed_energy_check(r: float, roots=(0.0, 1.0, 2.0, 3.0, 4.0), constants=(0.7, -0.4, 0.3, -0.2, 0.5),
                       points: int = 50, seed: int = 0) -> FixedEnergyReport:
    """R-separated solution of (Delta + E) psi = 0 on the 3-sphere of radius ``r``.

    The conformally invariant operator is Delta - R_s/8 and R_s = 6/r^2 is
    constant, so the two equations coincide at E = -R_s/8 = -3/(4 r^2).
    """
    from .families import sphere_rsep

    if r <= 0:
        raise DomainError(f"sphere radius must be positive, got {r}")
    m = sphere_rsep(r, roots)
    pipe = build_pipeline(m)
    sol = pipe.solve(constants[0], constants[1], constants[2:])
    pts = pipe.points(points, seed)
    rs = np.array([LocalGeometry(m, p, 2).scalar() for p in pts])
    rs_mean = float(rs.mean())
    energy = ci_coefficient(3) * rs_mean
    ci = residual(m, sol, pts)
    helm = residual(m, sol, pts, energy=energy)
    ident = 0.0
    for p in pts:
        geo = LocalGeometry(m, p, 2)
        f = sol.psi_jet(p, 2)
        lhs = geo.ci_laplacian(f)
        rhs = geo.laplacian(f) + energy * f.value
        ident = max(ident, abs(lhs - rhs) / max(1.0, abs(lhs), abs(geo.laplacian(f))))
    return FixedEnergyReport(r, rs_mean, float(np.ptp(rs)), energy, ci, helm, ident, len(pts),
                             tuple(constants))
