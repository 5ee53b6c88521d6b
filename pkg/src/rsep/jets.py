"""Truncated multivariate Taylor arithmetic ("jets") in n variables.

A :class:`Jet` of order ``k`` stores the Taylor coefficients ``c_a = d^a f / a!``
for every multi-index ``a`` with ``|a| <= k``.  Multi-indices are enumerated by
degree first and lexicographically inside each degree, so the coefficient
vector of an order-``k`` jet is a prefix of the order-``k+1`` one and
truncation is a slice.

The two hot kernels (series product and univariate composition) live in the
compiled ``_jetcore`` extension when it is built, with a numpy fallback in
``_jetpy``.  Set ``RSEP_PURE_PYTHON=1`` to force the fallback, or call
:func:`use_backend` at runtime.
"""
from __future__ import annotations

import math
import os
from functools import lru_cache
from itertools import combinations_with_replacement, permutations

import numpy as np

from . import _jetpy
from .errors import DimensionMismatch, DivisionByZero, DomainError, NonFiniteError

try:
    from . import _jetcore
except ImportError:  # pragma: no cover - depends on the build
    _jetcore = None

MAX_ORDER = 4

_kernels = _jetpy if (_jetcore is None or os.environ.get("RSEP_PURE_PYTHON")) else _jetcore


def backend() -> str:
    return "cython" if _kernels is _jetcore else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _jetcore is not None else [])


def use_backend(name: str) -> None:
    """Switch the kernel implementation (``"python"`` or ``"cython"``)."""
    global _kernels
    if name == "python":
        _kernels = _jetpy
    elif name == "cython":
        if _jetcore is None:
            raise RuntimeError("compiled extension rsep._jetcore is not built")
        _kernels = _jetcore
    else:
        raise ValueError(f"unknown backend {name!r}")


# ---------------------------------------------------------------------------
# multi-index tables


@lru_cache(maxsize=None)
def monomials(n: int, order: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for d in range(order + 1):
        for combo in combinations_with_replacement(range(n), d):
            alpha = [0] * n
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def _index(n: int, order: int) -> dict:
    return {a: k for k, a in enumerate(monomials(n, order))}


def ncoef(n: int, order: int) -> int:
    return math.comb(n + order, order)


@lru_cache(maxsize=None)
def _mul_table(n: int, order: int):
    mons = monomials(n, order)
    idx = _index(n, order)
    ia, ib, ic = [], [], []
    for p, a in enumerate(mons):
        da = sum(a)
        for q, b in enumerate(mons):
            if da + sum(b) > order:
                continue
            ia.append(p)
            ib.append(q)
            ic.append(idx[tuple(x + y for x, y in zip(a, b))])
    return (np.array(ia, dtype=np.intp), np.array(ib, dtype=np.intp),
            np.array(ic, dtype=np.intp))


@lru_cache(maxsize=None)
def _diff_table(n: int, order: int, i: int):
    mons = monomials(n, order)
    low = _index(n, order - 1)
    src, dst, fac = [], [], []
    for p, a in enumerate(mons):
        if a[i] == 0:
            continue
        b = list(a)
        b[i] -= 1
        src.append(p)
        dst.append(low[tuple(b)])
        fac.append(float(a[i]))
    return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp), np.array(fac)


@lru_cache(maxsize=None)
def _factorials(n: int, order: int) -> np.ndarray:
    return np.array([math.prod(math.factorial(k) for k in a) for a in monomials(n, order)],
                    dtype=float)


def _alpha(n: int, indices) -> tuple[int, ...]:
    alpha = [0] * n
    for i in indices:
        if not 0 <= i < n:
            raise IndexError(f"coordinate index {i} out of range for n={n}")
        alpha[i] += 1
    return tuple(alpha)


# ---------------------------------------------------------------------------


class Jet:
    """Order-``order`` Taylor jet of a scalar in ``n`` variables.

    Jets are treated as immutable values; every operation returns a new jet.
    """

    __slots__ = ("n", "order", "coeffs")
    __array_priority__ = 100  # make ndarray * Jet defer to Jet.__rmul__

    def __init__(self, n: int, order: int, coeffs):
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (ncoef(n, order),):
            raise DimensionMismatch(
                f"expected {ncoef(n, order)} coefficients for n={n}, order={order}, got {c.shape}")
        self.n = n
        self.order = order
        self.coeffs = c

    # construction ---------------------------------------------------------

    @classmethod
    def constant(cls, value: float, n: int, order: int) -> "Jet":
        c = np.zeros(ncoef(n, order))
        c[0] = value
        return cls(n, order, c)

    @classmethod
    def variable(cls, i: int, x: float, n: int, order: int) -> "Jet":
        if not 0 <= i < n:
            raise IndexError(f"coordinate index {i} out of range for n={n}")
        c = np.zeros(ncoef(n, order))
        c[0] = x
        if order >= 1:
            c[1 + i] = 1.0
        return cls(n, order, c)

    @classmethod
    def from_derivatives(cls, value: float, grads: list["Jet"]) -> "Jet":
        """Rebuild a jet from its value and the jets of its first partials.

        ``grads[i]`` is the jet of d_i f with order one less than the result.
        The partials must be mutually consistent (d_j grads[i] == d_i grads[j]);
        each coefficient is read from the first partial that can supply it.
        """
        n = len(grads)
        order = grads[0].order + 1
        mons = monomials(n, order)
        low = _index(n, order - 1)
        c = np.empty(len(mons))
        c[0] = value
        for p, a in enumerate(mons[1:], start=1):
            i = next(k for k in range(n) if a[k])
            b = list(a)
            b[i] -= 1
            c[p] = grads[i].coeffs[low[tuple(b)]] / a[i]
        return cls(n, order, c)

    # accessors ------------------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    @property
    def grad(self) -> np.ndarray:
        if self.order < 1:
            raise ValueError("order-0 jet has no gradient")
        return self.coeffs[1:1 + self.n].copy()

    def deriv(self, *indices: int) -> float:
        """Partial derivative d_{i1} d_{i2} ... of the underlying function."""
        if len(indices) > self.order:
            raise ValueError(f"derivative of order {len(indices)} exceeds jet order {self.order}")
        alpha = _alpha(self.n, indices)
        k = _index(self.n, self.order)[alpha]
        return float(self.coeffs[k] * math.prod(math.factorial(a) for a in alpha))

    @property
    def hess(self) -> np.ndarray:
        n = self.n
        h = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                h[i, j] = h[j, i] = self.deriv(i, j)
        return h

    @property
    def third(self) -> np.ndarray:
        n = self.n
        t = np.empty((n, n, n))
        for combo in combinations_with_replacement(range(n), 3):
            v = self.deriv(*combo)
            for perm in permutations(combo):
                t[perm] = v
        return t

    def derivatives(self) -> np.ndarray:
        """All partials d^a f in monomial order (coefficients times a!)."""
        return self.coeffs * _factorials(self.n, self.order)

    # structural ops -------------------------------------------------------

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.n, order, self.coeffs[:ncoef(self.n, order)])

    def diff(self, i: int) -> "Jet":
        """Jet of the partial d_i f; its order is one less than this jet's."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        if not 0 <= i < self.n:
            raise IndexError(f"coordinate index {i} out of range for n={self.n}")
        src, dst, fac = _diff_table(self.n, self.order, i)
        c = np.zeros(ncoef(self.n, self.order - 1))
        c[dst] = self.coeffs[src] * fac
        return Jet(self.n, self.order - 1, c)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "Jet") -> None:
        if other.n != self.n or other.order != self.order:
            raise DimensionMismatch(
                f"jet mismatch: (n={self.n}, order={self.order}) vs (n={other.n}, order={other.order})")

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.n, self.order, self.coeffs + other.coeffs)
        c = self.coeffs.copy()
        c[0] += other
        return Jet(self.n, self.order, c)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.n, self.order, self.coeffs - other.coeffs)
        c = self.coeffs.copy()
        c[0] -= other
        return Jet(self.n, self.order, c)

    def __rsub__(self, other):
        c = -self.coeffs
        c[0] += other
        return Jet(self.n, self.order, c)

    def __neg__(self):
        return Jet(self.n, self.order, -self.coeffs)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            ia, ib, ic = _mul_table(self.n, self.order)
            return Jet(self.n, self.order,
                       _kernels.mul(self.coeffs, other.coeffs, ia, ib, ic, len(self.coeffs)))
        return Jet(self.n, self.order, self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self * reciprocal(other)
        if other == 0:
            raise DivisionByZero("division of a jet by zero")
        return Jet(self.n, self.order, self.coeffs / other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise TypeError("jet exponents are not supported; exponents must be constants")
        return power(self, p)

    def __repr__(self):
        return f"Jet(n={self.n}, order={self.order}, value={self.value!r})"


def seed(i: int, x: float, n: int, order: int) -> Jet:
    """Jet of the i-th coordinate function at x (value x, gradient e_i)."""
    return Jet.variable(i, x, n, order)


def seed_point(point, order: int) -> list[Jet]:
    n = len(point)
    return [Jet.variable(i, float(x), n, order) for i, x in enumerate(point)]


def combine(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown operation {op!r}")


def as_jet(x, n: int, order: int) -> Jet:
    if isinstance(x, Jet):
        if x.n != n:
            raise DimensionMismatch(f"jet has n={x.n}, expected {n}")
        return x.truncate(order) if x.order > order else x
    return Jet.constant(float(x), n, order)


def common_order(*jets: Jet) -> list[Jet]:
    """Truncate jets to the lowest order among them."""
    k = min(j.order for j in jets)
    return [j.truncate(k) for j in jets]


# ---------------------------------------------------------------------------
# univariate composition (Faa di Bruno through the jet order)


def lift_derivatives(a: Jet, derivs) -> Jet:
    """Compose a univariate f with the jet ``a`` given f^(k)(a.value) for k = 0..order."""
    derivs = [float(d) for d in derivs]
    if len(derivs) < a.order + 1:
        raise ValueError(f"need {a.order + 1} derivatives, got {len(derivs)}")
    taylor = np.array([derivs[k] / math.factorial(k) for k in range(a.order + 1)])
    if not np.all(np.isfinite(taylor)):
        raise NonFiniteError("non-finite derivative in composition")
    if a.order == 0:
        return Jet(a.n, 0, taylor[:1])
    ia, ib, ic = _mul_table(a.n, a.order)
    return Jet(a.n, a.order, _kernels.compose(a.coeffs, taylor, ia, ib, ic, len(a.coeffs)))


def _exp_derivs(x, k):
    try:
        e = math.exp(x)
    except OverflowError:
        raise NonFiniteError(f"exp overflow at {x!r}") from None
    return [e] * (k + 1)


def _log_derivs(x, k):
    if x <= 0:
        raise DomainError(f"ln of non-positive value {x!r}")
    out = [math.log(x)]
    for m in range(1, k + 1):
        out.append((-1) ** (m - 1) * math.factorial(m - 1) / x ** m)
    return out


def _power_derivs(x, p, k):
    out = []
    coef = 1.0
    for m in range(k + 1):
        out.append(coef * x ** (p - m))
        coef *= p - m
    return out


def _sqrt_derivs(x, k):
    if x < 0 or (x == 0 and k > 0):
        raise DomainError(f"sqrt of {'negative' if x < 0 else 'zero (non-differentiable)'} value {x!r}")
    if k == 0:
        return [math.sqrt(x)]
    return _power_derivs(x, 0.5, k)


def _recip_derivs(x, k):
    if x == 0:
        raise DivisionByZero("division by a jet with zero value")
    return [(-1) ** m * math.factorial(m) / x ** (m + 1) for m in range(k + 1)]


def _sin_derivs(x, k):
    s, c = math.sin(x), math.cos(x)
    return [(s, c, -s, -c)[m % 4] for m in range(k + 1)]


def _cos_derivs(x, k):
    s, c = math.sin(x), math.cos(x)
    return [(c, -s, -c, s)[m % 4] for m in range(k + 1)]


def _tan_derivs(x, k):
    if math.cos(x) == 0:
        raise DomainError(f"tan undefined at {x!r}")
    t = math.tan(x)
    u = 1 + t * t
    return [t, u, 2 * t * u, 2 * u * (1 + 3 * t * t), 8 * t * u * (2 + 3 * t * t)][:k + 1]


def _abs_derivs(x, k):
    if x == 0 and k > 0:
        raise DomainError("abs is not differentiable at 0")
    s = 1.0 if x >= 0 else -1.0
    return [abs(x), s] + [0.0] * (k - 1) if k > 0 else [abs(x)]


_LIFTS = {
    "exp": _exp_derivs,
    "ln": _log_derivs,
    "log": _log_derivs,
    "sqrt": _sqrt_derivs,
    "sin": _sin_derivs,
    "cos": _cos_derivs,
    "tan": _tan_derivs,
    "abs": _abs_derivs,
    "recip": _recip_derivs,
}


def lift(f, a: Jet) -> Jet:
    """Apply a named elementary function (or a derivative generator) to a jet.

    ``f`` is either one of ``exp, ln, sqrt, sin, cos, tan, abs, recip`` or a
    callable ``(x, k) -> [f(x), f'(x), ..., f^(k)(x)]``.
    """
    gen = _LIFTS[f] if isinstance(f, str) else f
    return lift_derivatives(a, gen(a.value, a.order))


def exp(a):
    return lift("exp", a) if isinstance(a, Jet) else math.exp(a)


def log(a):
    if isinstance(a, Jet):
        return lift("ln", a)
    if a <= 0:
        raise DomainError(f"ln of non-positive value {a!r}")
    return math.log(a)


def sqrt(a):
    if isinstance(a, Jet):
        return lift("sqrt", a)
    if a < 0:
        raise DomainError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


def sin(a):
    return lift("sin", a) if isinstance(a, Jet) else math.sin(a)


def cos(a):
    return lift("cos", a) if isinstance(a, Jet) else math.cos(a)


def tan(a):
    return lift("tan", a) if isinstance(a, Jet) else math.tan(a)


def fabs(a):
    return lift("abs", a) if isinstance(a, Jet) else abs(a)


def reciprocal(a: Jet) -> Jet:
    return lift("recip", a)


def power(a, p: float):
    """a**p; integer p uses repeated multiplication, otherwise a.value must be positive."""
    if not isinstance(a, Jet):
        if float(p).is_integer():
            if a == 0 and p < 0:
                raise DivisionByZero("zero raised to a negative power")
            return float(a) ** int(p)
        if a <= 0:
            raise DomainError(f"non-integer power of non-positive value {a!r}")
        return float(a) ** p
    if float(p).is_integer():
        k = int(p)
        if k < 0:
            return reciprocal(power(a, -k))
        result = Jet.constant(1.0, a.n, a.order)
        base = a
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result
    if a.value <= 0:
        raise DomainError(f"non-integer power {p!r} of non-positive value {a.value!r}")
    return lift_derivatives(a, _power_derivs(a.value, float(p), a.order))


def polyval(coeffs, a):
    """Evaluate sum_k coeffs[k] * a**k (ascending coefficients) by Horner's rule."""
    result = 0.0
    for c in reversed(list(coeffs)):
        result = result * a + c
    return result
