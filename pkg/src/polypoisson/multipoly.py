"""Sparse multivariate polynomials over Q and forward-mode duals.

Variables are integer ids; a monomial is a sorted tuple of (var, exponent)
pairs.  This is deliberately minimal plumbing: exact arithmetic, partial
derivatives and point evaluation are all the rest of the package needs.
"""

from __future__ import annotations

from fractions import Fraction

from .linalg import ONE, ZERO, rat


class Poly:
    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for mono, c in terms.items():
                c = rat(c)
                if c:
                    self.terms[mono] = self.terms.get(mono, ZERO) + c
            self.terms = {m: c for m, c in self.terms.items() if c}

    @classmethod
    def const(cls, c) -> "Poly":
        c = rat(c)
        return cls({(): c} if c else {})

    @classmethod
    def var(cls, v: int, c=1) -> "Poly":
        return cls({((v, 1),): rat(c)})

    def copy(self) -> "Poly":
        p = Poly()
        p.terms = dict(self.terms)
        return p

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        out = Poly()
        out.terms = dict(self.terms)
        for m, c in other.terms.items():
            s = out.terms.get(m, ZERO) + c
            if s:
                out.terms[m] = s
            else:
                out.terms.pop(m, None)
        return out

    def __neg__(self):
        out = Poly()
        out.terms = {m: -c for m, c in self.terms.items()}
        return out

    def __sub__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            c = rat(other)
            out = Poly()
            if c:
                out.terms = {m: c * v for m, v in self.terms.items()}
            return out
        out = Poly()
        acc = out.terms
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = acc.get(m, ZERO) + c1 * c2
                if s:
                    acc[m] = s
                else:
                    acc.pop(m, None)
        return out

    __rmul__ = __mul__

    def diff(self, v: int) -> "Poly":
        out = Poly()
        for mono, c in self.terms.items():
            for i, (var, e) in enumerate(mono):
                if var == v:
                    if e == 1:
                        newmono = mono[:i] + mono[i + 1 :]
                    else:
                        newmono = mono[:i] + ((var, e - 1),) + mono[i + 1 :]
                    s = out.terms.get(newmono, ZERO) + c * e
                    if s:
                        out.terms[newmono] = s
                    else:
                        out.terms.pop(newmono, None)
                    break
        return out

    def eval(self, point) -> Fraction:
        """Evaluate at point (a dict or indexable of var -> value)."""
        acc = ZERO
        for mono, c in self.terms.items():
            t = c
            for var, e in mono:
                t *= point[var] ** e
            acc += t
        return acc

    def variables(self) -> set:
        out = set()
        for mono in self.terms:
            for var, _ in mono:
                out.add(var)
        return out

    def degree_in(self, vars_of_interest) -> int:
        best = 0
        vs = set(vars_of_interest)
        for mono in self.terms:
            d = sum(e for var, e in mono if var in vs)
            best = max(best, d)
        return best

    def has_quadratic_in(self, vars_of_interest) -> bool:
        return self.degree_in(vars_of_interest) >= 2

    def __repr__(self):
        if not self.terms:
            return "0"
        bits = []
        for mono, c in sorted(self.terms.items()):
            mono_s = "*".join(
                f"x{var}" if e == 1 else f"x{var}^{e}" for var, e in mono
            )
            bits.append(f"{c}" + (f"*{mono_s}" if mono_s else ""))
        return " + ".join(bits)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for var, e in m2:
        acc[var] = acc.get(var, 0) + e
    return tuple(sorted(acc.items()))


class Dual:
    """Value plus sparse exact gradient, for forward-mode differentiation."""

    __slots__ = ("val", "grad")

    def __init__(self, val, grad=None):
        self.val = rat(val) if not isinstance(val, Fraction) else val
        self.grad = grad or {}

    @classmethod
    def var(cls, val, v: int) -> "Dual":
        return cls(val, {v: ONE})

    @classmethod
    def const(cls, val) -> "Dual":
        return cls(val, {})

    def __add__(self, other):
        if not isinstance(other, Dual):
            return Dual(self.val + rat(other), dict(self.grad))
        g = dict(self.grad)
        for v, d in other.grad.items():
            s = g.get(v, ZERO) + d
            if s:
                g[v] = s
            else:
                g.pop(v, None)
        return Dual(self.val + other.val, g)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, {v: -d for v, d in self.grad.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else Dual.const(-rat(other)))

    def __rsub__(self, other):
        return (-self) + rat(other)

    def __mul__(self, other):
        if not isinstance(other, Dual):
            c = rat(other)
            if not c:
                return Dual.const(0)
            return Dual(self.val * c, {v: d * c for v, d in self.grad.items()})
        g = {}
        if other.val:
            for v, d in self.grad.items():
                g[v] = d * other.val
        if self.val:
            for v, d in other.grad.items():
                s = g.get(v, ZERO) + self.val * d
                if s:
                    g[v] = s
                else:
                    g.pop(v, None)
        return Dual(self.val * other.val, g)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Dual):
            return self * (ONE / rat(other))
        return self * other.reciprocal()

    def reciprocal(self) -> "Dual":
        inv = ONE / self.val
        f = -inv * inv
        return Dual(inv, {v: f * d for v, d in self.grad.items()})


def dual_det(rows) -> Dual:
    """Determinant of a small matrix of Duals by Laplace expansion."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    acc = Dual.const(0)
    sign = 1
    for j in range(n):
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        term = rows[0][j] * dual_det(minor)
        acc = acc + (term if sign > 0 else -term)
        sign = -sign
    return acc
