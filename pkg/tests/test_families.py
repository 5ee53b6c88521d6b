import math
import warnings

import numpy as np
import pytest

from rsep.errors import DomainError, RsepError
from rsep.families import (KalninsChart, eisenhart_metric, kalnins_map, make_conformally_separable,
                           make_rsep, pullback_check, q_euclidean, sphere_chart, sphere_factors,
                           sphere_rsep, stereographic_embedding, stereographic_factor)
from rsep.geometry import Domain, LocalGeometry, scalar_curvature
from rsep.separability import SamplingPlan, check_conformal_separability

E = (0.0, 1.0, 2.0, 3.0, 4.0)
FEW = SamplingPlan(30, seed=1)

# independent 30-digit evaluation of the chart formulas (mpmath), frozen
KALNINS_LAMBDA = 1.01901847007492571737
KALNINS_X = (0.245334120373321756, 0.300471705704592581, 0.548583770354863530)
KALNINS_QE = 2.07679728470768455953


def gup_values(m, p):
    return [c.value for c in m.components(p, 0)]


def test_unit_h_family_components():
    m = make_conformally_separable("1", "1", "1")
    q = (0.3, 1.4, 2.6)
    assert gup_values(m, q) == pytest.approx([q[2] - q[1], q[0] - q[2], q[1] - q[0]])


def test_foreign_coordinate_rejected():
    with pytest.raises(DomainError, match="q1"):
        make_conformally_separable("q2", "1", "1")


def test_rsep_polynomial_from_roots():
    m = make_rsep(roots=E)
    assert m.family.coeffs == pytest.approx((0, 24, -50, 35, -10, 1))
    for x in (0.3, 1.7, 3.2):
        assert m.family.h[0](x) == pytest.approx(x * (x - 1) * (x - 2) * (x - 3) * (x - 4))


def test_rsep_components_positive_on_domain():
    for Q in ("unit", "euclidean", "sphere"):
        m = make_rsep(roots=E, Q=Q)
        for p in m.domain.sample(20, seed=4):
            assert min(gup_values(m, p)) > 0


def test_rsep_degree_limit():
    with pytest.raises(RsepError, match="degree 6"):
        make_rsep(coeffs=(1, 0, 0, 0, 0, 0, 1))


def test_constant_p_is_indefinite():
    m = make_rsep(coeffs=(1.0,))
    signs = np.sign(gup_values(m, m.domain.center()))
    assert set(signs) == {-1.0, 1.0}


def test_kalnins_values():
    lam, *x = kalnins_map(E, (0.5, 1.5, 2.5))
    assert lam == pytest.approx(KALNINS_LAMBDA, rel=1e-14)
    assert x == pytest.approx(KALNINS_X, rel=1e-14)
    assert q_euclidean(E, (0.5, 1.5, 2.5)) == pytest.approx(KALNINS_QE, rel=1e-14)


def test_kalnins_ordering():
    with pytest.raises(DomainError, match="ordering"):
        kalnins_map(E, (1.5, 0.5, 2.5))
    with pytest.raises(DomainError):
        KalninsChart((0, 2, 1, 3, 4))


def test_pullback_is_euclidean():
    chart = KalninsChart(E)
    m = make_rsep(roots=E, Q="euclidean")
    res = pullback_check(chart, m, m.domain.sample(100, seed=0))
    assert res.max_rel_diagonal < 1e-9 and res.max_abs_offdiagonal < 1e-9


def test_pullback_detects_wrong_factor():
    chart = KalninsChart(E)
    m = make_rsep(roots=E, Q="euclidean")
    res = pullback_check(chart, m, m.domain.sample(20, seed=0), scale=1.01)
    assert res.max_rel_diagonal == pytest.approx(1e-2, rel=0.05)


def test_sphere_chart_at_origin():
    m = sphere_chart(1.0)
    assert gup_values(m, (0, 0, 0)) == pytest.approx([0.25] * 3)
    assert stereographic_factor(1.0, (0, 0, 0)) == 0.25


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_sphere_factor_identity(r):
    rng = np.random.default_rng(2)
    dom = KalninsChart(E).domain
    for _ in range(5):
        q = dom.sample(1, seed=int(rng.integers(1 << 20)))[0]
        f = sphere_factors(r, q, E)
        assert f.Q_S == pytest.approx(f.Q_SE * f.Q_E, rel=1e-13)
        y = stereographic_embedding(r, f.X)
        assert math.hypot(*y) == pytest.approx(r, rel=1e-14)


@pytest.mark.parametrize("r", [1.0, 2.0])
def test_sphere_family_has_round_curvature(r):
    m = sphere_rsep(r, E)
    for p in m.domain.sample(10, seed=3):
        assert scalar_curvature(m, p) == pytest.approx(6 / r ** 2, rel=1e-9)


def test_eisenhart_constant_p():
    m = eisenhart_metric((1.0,))
    q = (0.3, 1.4, 2.6)
    g11 = gup_values(m, q)[0]
    assert abs(g11) == pytest.approx(abs(1 / ((q[0] - q[1]) * (q[0] - q[2]))))
    assert check_conformal_separability(m, FEW).simply_separable


def test_eisenhart_cubic_is_flat():
    m = eisenhart_metric(tuple(np.poly1d([0.5, 1.5, 2.5], r=True).coeffs[::-1]))
    for p in m.domain.sample(10, seed=6):
        assert abs(scalar_curvature(m, p)) < 1e-9


def test_eisenhart_root_inside_domain_warns():
    box = Domain((0.1, 1.1, 2.1), (0.9, 2.9, 3.9))
    with pytest.warns(UserWarning, match="shrunk"):
        m = eisenhart_metric((-2.0, 1.0), box)
    lo, hi = m.domain.lower[1], m.domain.upper[1]
    assert not lo < 2.0 < hi
    assert not m.domain.lower[2] < 2.0 < m.domain.upper[2]
