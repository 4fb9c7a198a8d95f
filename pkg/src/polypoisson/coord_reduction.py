"""Coordinates on the quotient of polygon space and the named reduced tensors.

A nondegenerate polygon satisfies one linear recursion of order nu whose
coefficients a^(0), ..., a^(nu-1) are ratios of consecutive-vertex
determinants; they are invariant under the projective group action and serve
as coordinates on the quotient.  This module computes them, builds the named
closed-form Poisson tensors on those coordinates (the quadratic Toda bracket,
the lattice Virasoro bracket and its fixed-sequence generalisation, and the
three distinguished nu = 3 tensors), and carries the machinery that verifies
them: the chain-rule oracle, Dirac reduction at a constraint surface, the
u -> S pushforward identity, exact Jacobiator evaluation and pencil
compatibility certificates.

Tensors come in two interchangeable forms: PolyTensor stores entries as
polynomials in the field variables and supports exact differentiation;
OpTensor stores field-dressed operator words and is the shape the closed
formulas are written in.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from random import Random

from . import linalg
from .exchange_algebra import (
    BracketSpec,
    Polygon,
    _DualCtx,
    bracket_matrix,
    wronskian,
)
from .lattice_ops import (
    DPoly,
    Kernel,
    OddKernel,
    PerSeq,
    compose,
    invert,
    kernel_from_dpoly,
    phi_special,
)
from .linalg import ONE, ZERO, rat, rat_str
from .multipoly import Dual, Poly


class NonUniqueGauge(ValueError):
    """Raised when the gauge normalisation is not unique (gcd(nu, N) > 1)."""


class GaugeInconsistent(ValueError):
    """Raised when no exact periodic gauge achieves the requested Wronskian ratio."""


class ConstraintNotSecondClass(ValueError):
    """Raised when the constrained block cannot be inverted against the couplings."""


_ALIASES = {2: ("rho", "mu"), 3: ("rho", "b", "a")}


@dataclass(frozen=True)
class Fields:
    """The quotient coordinates a^(0)..a^(nu-1) of a polygon, as periodic sequences.

    a^(0) is the Wronskian ratio w'/w (alias rho); for nu = 2 the remaining
    field is mu and for nu = 3 the fields are (rho, b, a).
    """

    nu: int
    N: int
    a: tuple

    def __post_init__(self):
        if len(self.a) != self.nu:
            raise ValueError("need nu field sequences")
        for seq in self.a:
            if seq.N != self.N:
                raise ValueError("field period mismatch")
        if not self.a[0].nonvanishing():
            raise ValueError("a^(0) = w'/w must be nonvanishing")

    def alias_index(self, name: str) -> int:
        if name.startswith("a") and name[1:].isdigit():
            return int(name[1:])
        names = _ALIASES.get(self.nu, ())
        if name in names:
            return names.index(name)
        raise KeyError(f"unknown field alias {name!r} for nu={self.nu}")

    def by_name(self, name: str) -> PerSeq:
        return self.a[self.alias_index(name)]

    def point(self) -> dict:
        out = {f"a{k}": self.a[k] for k in range(self.nu)}
        for i, name in enumerate(_ALIASES.get(self.nu, ())):
            out[name] = self.a[i]
        return out


def coords(W: Polygon) -> Fields:
    """The recursion coefficients of a nondegenerate polygon.

    a^(k)_m is the ratio of the (nu x nu) determinant on vertices
    m..m+nu omitting m+k to the Wronskian w_m, and a^(0)_m = w_{m+1}/w_m.
    The result is periodic and invariant under the projective action.
    """
    W.require_nondegenerate()
    nu, N = W.nu, W.N
    w = [W.wronskian_at(m) for m in range(N + 1)]
    seqs = []
    seqs.append(PerSeq(N, tuple(w[m + 1] / w[m] for m in range(N))))
    for k in range(1, nu):
        vals = []
        for m in range(N):
            rows = [W.vertex(m + r) for r in range(nu + 1) if r != k]
            vals.append(linalg.det(rows) / w[m])
        seqs.append(PerSeq(N, tuple(vals)))
    return Fields(nu, N, tuple(seqs))


def random_fields(field_names, N: int, rng: Random, height: int = 5) -> dict:
    """Random nonvanishing small-height rational values for each named field."""
    out = {}
    for name in field_names:
        vals = []
        for _ in range(N):
            num = 0
            while num == 0:
                num = rng.randint(-height, height)
            vals.append(Fraction(num, rng.randint(1, 3)))
        out[name] = PerSeq(N, tuple(vals))
    return out


# ---------------------------------------------------------------------------
# tensors on field coordinates
# ---------------------------------------------------------------------------


def _var(field_idx: int, site: int, N: int) -> int:
    return field_idx * N + site


class PolyTensor:
    """Poisson tensor with entries polynomial in the field variables.

    Entry ((i, m), (j, n)) is the bracket {x^i_m, x^j_n} scaled by
    ``bracket_scale`` relative to the raw reduced bracket of the polygon
    space (the named tensors carry the factor 1/2 their closed forms use).
    """

    def __init__(self, field_names, N: int, bracket_scale=ONE):
        self.field_names = tuple(field_names)
        self.N = N
        self.bracket_scale = rat(bracket_scale)
        self.entries: dict = {}

    @property
    def d(self) -> int:
        return len(self.field_names)

    def n_vars(self) -> int:
        return self.d * self.N

    def add_term(self, i, m, j, n, poly: Poly):
        if poly.is_zero():
            return
        key = (i, m % self.N, j, n % self.N)
        cur = self.entries.get(key)
        new = poly if cur is None else cur + poly
        if new.is_zero():
            self.entries.pop(key, None)
        else:
            self.entries[key] = new

    def entry(self, i, m, j, n) -> Poly:
        return self.entries.get((i, m % self.N, j, n % self.N), Poly())

    def _point_values(self, point) -> list:
        if isinstance(point, Fields):
            point = point.point()
        vals = [ZERO] * self.n_vars()
        for i, name in enumerate(self.field_names):
            seq = point[name]
            for m in range(self.N):
                vals[_var(i, m, self.N)] = seq[m]
        return vals

    def eval_matrix(self, point):
        """Dense (d N) x (d N) antisymmetric matrix at the point."""
        vals = self._point_values(point)
        D = self.n_vars()
        out = linalg.zeros(D, D)
        for (i, m, j, n), poly in self.entries.items():
            out[_var(i, m, self.N)][_var(j, n, self.N)] = poly.eval(vals)
        return out

    def eval_dual(self, point):
        """Entries as Duals (value + gradient over the field variables)."""
        vals = self._point_values(point)
        duals = [Dual.var(v, idx) for idx, v in enumerate(vals)]
        D = self.n_vars()
        out = [[Dual.const(0) for _ in range(D)] for _ in range(D)]
        for (i, m, j, n), poly in self.entries.items():
            acc = Dual.const(0)
            for mono, c in poly.terms.items():
                t = Dual.const(c)
                for var, e in mono:
                    for _ in range(e):
                        t = t * duals[var]
                acc = acc + t
            out[_var(i, m, self.N)][_var(j, n, self.N)] = acc
        return out

    def scale(self, c) -> "PolyTensor":
        c = rat(c)
        out = PolyTensor(self.field_names, self.N, self.bracket_scale)
        for key, poly in self.entries.items():
            out.entries[key] = poly * c
        return out

    def __add__(self, other: "PolyTensor") -> "PolyTensor":
        if self.field_names != other.field_names or self.N != other.N:
            raise ValueError("tensors live on different field spaces")
        out = PolyTensor(self.field_names, self.N, self.bracket_scale)
        out.entries = dict(self.entries)
        for (i, m, j, n), poly in other.entries.items():
            out.add_term(i, m, j, n, poly)
        return out

    def antisymmetry_residual(self, point) -> Fraction:
        mat = self.eval_matrix(point)
        D = self.n_vars()
        return max(
            (abs(mat[i][j] + mat[j][i]) for i in range(D) for j in range(i, D)),
            default=ZERO,
        )

    def to_json(self) -> dict:
        ent = []
        for (i, m, j, n), poly in sorted(self.entries.items()):
            terms = [
                [[[var, e] for var, e in mono], rat_str(c)]
                for mono, c in sorted(poly.terms.items())
            ]
            ent.append({"i": i, "m": m, "j": j, "n": n, "terms": terms})
        return {
            "form": "poly",
            "fields": list(self.field_names),
            "N": self.N,
            "bracket_scale": rat_str(self.bracket_scale),
            "entries": ent,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PolyTensor":
        out = cls(tuple(doc["fields"]), int(doc["N"]), rat(doc["bracket_scale"]))
        for ent in doc["entries"]:
            terms = {
                tuple((int(v), int(e)) for v, e in mono): rat(c)
                for mono, c in ent["terms"]
            }
            out.add_term(int(ent["i"]), int(ent["m"]), int(ent["j"]), int(ent["n"]), Poly(terms))
        return out


# operator words: factors are ("f", field_index), ("finv", field_index),
# ("c", PerSeq constant diagonal) or ("k", Kernel)


class OpTensor:
    """Poisson tensor whose entries are field-dressed circulant operator words."""

    def __init__(self, field_names, N: int, bracket_scale=ONE):
        self.field_names = tuple(field_names)
        self.N = N
        self.bracket_scale = rat(bracket_scale)
        self.words: dict = {}

    def add_word(self, i: int, j: int, *factors):
        self.words.setdefault((i, j), []).append(tuple(factors))

    def _diag(self, factor, point_vals):
        name = self.field_names[factor[1]]
        seq = point_vals[name]
        if factor[0] == "f":
            return [seq[m] for m in range(self.N)]
        vals = []
        for m in range(self.N):
            if not seq[m]:
                raise ZeroDivisionError(f"field {name} vanishes at site {m}")
            vals.append(ONE / seq[m])
        return vals

    def eval_entry(self, i: int, j: int, point) -> list:
        """The N x N matrix of the (i, j) operator word sum at the point."""
        if isinstance(point, Fields):
            point = point.point()
        N = self.N
        total = linalg.zeros(N, N)
        for word in self.words.get((i, j), []):
            mat = None
            for factor in word:
                if factor[0] in ("f", "finv"):
                    dv = self._diag(factor, point)
                    fm = [[dv[r] if r == c else ZERO for c in range(N)] for r in range(N)]
                elif factor[0] == "c":
                    fm = [
                        [factor[1][r] if r == c else ZERO for c in range(N)]
                        for r in range(N)
                    ]
                else:
                    fm = factor[1].matrix()
                mat = fm if mat is None else linalg.mat_mul(mat, fm)
            total = linalg.mat_add(total, mat)
        return total

    def eval_matrix(self, point):
        d = len(self.field_names)
        N = self.N
        D = d * N
        out = linalg.zeros(D, D)
        for i in range(d):
            for j in range(d):
                if (i, j) not in self.words:
                    continue
                blk = self.eval_entry(i, j, point)
                for m in range(N):
                    for n in range(N):
                        out[_var(i, m, N)][_var(j, n, N)] = blk[m][n]
        return out

    def to_json(self) -> dict:
        """Op-form wire format: words as alternating field-symbol / dpoly factors.

        Kernels are written as shift polynomials over residue exponents (every
        period-N kernel is one), constant diagonals as sequence documents.
        """
        N = self.N

        def factor_doc(factor):
            if factor[0] == "f":
                return {"field": self.field_names[factor[1]]}
            if factor[0] == "finv":
                return {"fieldinv": self.field_names[factor[1]]}
            if factor[0] == "c":
                return {"const": factor[1].to_json()}
            K = factor[1]
            return {"terms": {str((N - j) % N): rat_str(K[j]) for j in range(N) if K[j]}}

        words = []
        for (i, j), wlist in sorted(self.words.items()):
            for word in wlist:
                words.append({"i": i, "j": j, "factors": [factor_doc(f) for f in word]})
        return {
            "form": "op",
            "fields": list(self.field_names),
            "N": N,
            "bracket_scale": rat_str(self.bracket_scale),
            "words": words,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "OpTensor":
        out = cls(tuple(doc["fields"]), int(doc["N"]), rat(doc["bracket_scale"]))
        names = list(out.field_names)
        for wd in doc["words"]:
            factors = []
            for f in wd["factors"]:
                if "field" in f:
                    factors.append(("f", names.index(f["field"])))
                elif "fieldinv" in f:
                    factors.append(("finv", names.index(f["fieldinv"])))
                elif "const" in f:
                    factors.append(("c", PerSeq.from_json(f["const"])))
                else:
                    factors.append(("k", kernel_from_dpoly(DPoly.from_json(f), out.N)))
            out.add_word(int(wd["i"]), int(wd["j"]), *factors)
        return out

    def to_poly(self) -> PolyTensor:
        """Expand the operator words into polynomial entries (no field inverses)."""
        N = self.N
        out = PolyTensor(self.field_names, N, self.bracket_scale)
        for (i, j), words in self.words.items():
            for word in words:
                # collapse to alternating [diag, kernel, diag, kernel, ...]
                segs = [[]]
                kernels = []
                for factor in word:
                    if factor[0] == "finv":
                        raise ValueError("cannot expand a word with field inverses")
                    if factor[0] == "k":
                        kernels.append(factor[1])
                        segs.append([])
                    else:
                        segs[-1].append(factor)

                def diag_poly(seg, site):
                    p = Poly.const(1)
                    for factor in seg:
                        if factor[0] == "f":
                            p = p * Poly.var(_var(factor[1], site, N))
                        else:
                            p = p * factor[1][site]
                    return p

                L = len(kernels)
                for m in range(N):
                    for n in range(N):
                        # sum over intermediate path indices between kernels
                        def walk(seg_idx, site, acc):
                            if seg_idx == L:
                                if site == n:
                                    out.add_term(i, m, j, n, acc)
                                return
                            K = kernels[seg_idx]
                            for nxt in range(N):
                                kv = K.seq[site - nxt]
                                if kv:
                                    walk(
                                        seg_idx + 1,
                                        nxt,
                                        acc * diag_poly(segs[seg_idx + 1], nxt) * kv,
                                    )

                        if L == 0:
                            if m == n:
                                out.add_term(i, m, j, n, diag_poly(segs[0], m))
                        else:
                            walk(0, m, diag_poly(segs[0], m))
        return out


def as_poly_tensor(P) -> PolyTensor:
    return P if isinstance(P, PolyTensor) else P.to_poly()


# ---------------------------------------------------------------------------
# named tensors
# ---------------------------------------------------------------------------


def _coeff_kernel(N: int, phi: Kernel, phi_part: DPoly, delta_part: DPoly) -> Kernel:
    """The exchange coefficient phi_part(D) phi + delta_part(D) delta as a kernel."""
    out = compose(kernel_from_dpoly(phi_part, N), phi)
    return out + kernel_from_dpoly(delta_part, N)


def _add_exchange_block(T: PolyTensor, i: int, j: int, ck: Kernel):
    """Quadratic block c_{m-n} x^i_m x^j_n from a coefficient kernel."""
    N = T.N
    for m in range(N):
        for n in range(N):
            c = ck[m - n]
            if c:
                vi, vj = _var(i, m, N), _var(j, n, N)
                mono = ((vi, 2),) if vi == vj else tuple(sorted(((vi, 1), (vj, 1))))
                T.add_term(i, m, j, n, Poly({mono: c}))


def _add_linear_block(T: PolyTensor, i: int, j: int, shift: int, coeff, field: int, at_first_site: bool):
    """Term coeff * [n = m+shift] x^field_{m or n} added to block (i, j)."""
    N = T.N
    for m in range(N):
        n = (m + shift) % N
        site = m if at_first_site else n
        T.add_term(i, m, j, n, Poly({((_var(field, site, N), 1),): rat(coeff)}))


def _dp(pairs) -> DPoly:
    return DPoly.from_coeffs(pairs)


def build_murho(phi: OddKernel) -> PolyTensor:
    """The order-2 quotient bracket in the fields (mu, rho) for a given phi."""
    N = phi.N
    T = PolyTensor(("mu", "rho"), N, bracket_scale=ONE)
    MU, RHO = 0, 1
    _add_exchange_block(T, MU, MU, _coeff_kernel(N, phi, _dp([(0, 2), (1, -1), (-1, -1)]), _dp([(1, -1), (-1, 1)])))
    _add_linear_block(T, MU, MU, +1, 2, RHO, at_first_site=False)
    _add_linear_block(T, MU, MU, -1, -2, RHO, at_first_site=True)
    murho_k = _coeff_kernel(N, phi, _dp([(0, 1), (1, 1), (-1, -1), (2, -1)]), _dp([(0, -1), (-1, 1), (1, 1), (2, -1)]))
    _add_exchange_block(T, MU, RHO, murho_k)
    _add_exchange_block(T, RHO, MU, -murho_k.transpose())
    _add_exchange_block(T, RHO, RHO, _coeff_kernel(N, phi, _dp([(0, 2), (2, -1), (-2, -1)]), _dp([(2, -1), (-2, 1)])))
    return T


def build_abrho(phi: OddKernel) -> PolyTensor:
    """The order-3 quotient bracket in the fields (a, b, rho) for a given phi."""
    N = phi.N
    T = PolyTensor(("a", "b", "rho"), N, bracket_scale=ONE)
    A, B, RHO = 0, 1, 2
    _add_exchange_block(T, A, A, _coeff_kernel(N, phi, _dp([(0, 2), (1, -1), (-1, -1)]), _dp([(1, -1), (-1, 1)])))
    _add_linear_block(T, A, A, +1, 2, B, at_first_site=False)
    _add_linear_block(T, A, A, -1, -2, B, at_first_site=True)

    ab_k = _coeff_kernel(N, phi, _dp([(0, 1), (1, 1), (2, -1), (-1, -1)]), _dp([(0, -1), (1, 1), (2, -1), (-1, 1)]))
    _add_exchange_block(T, A, B, ab_k)
    _add_exchange_block(T, B, A, -ab_k.transpose())
    _add_linear_block(T, A, B, +2, 2, RHO, at_first_site=False)
    _add_linear_block(T, A, B, -1, -2, RHO, at_first_site=True)
    _add_linear_block(T, B, A, -2, -2, RHO, at_first_site=True)
    _add_linear_block(T, B, A, +1, 2, RHO, at_first_site=False)

    arho_k = _coeff_kernel(N, phi, _dp([(0, 1), (2, 1), (3, -1), (-1, -1)]), _dp([(0, -1), (2, 1), (3, -1), (-1, 1)]))
    _add_exchange_block(T, A, RHO, arho_k)
    _add_exchange_block(T, RHO, A, -arho_k.transpose())

    _add_exchange_block(T, B, B, _coeff_kernel(N, phi, _dp([(0, 2), (2, -1), (-2, -1)]), _dp([(2, -1), (-2, 1)])))
    # {b_m, b_n} += 2 [n=m+1] a_m rho_n - 2 [n=m-1] rho_m a_n
    for m in range(N):
        n = (m + 1) % N
        T.add_term(B, m, B, n, Poly({((_var(A, m, N), 1), (_var(RHO, n, N), 1)): Fraction(2)}))
        n = (m - 1) % N
        T.add_term(B, m, B, n, Poly({((_var(RHO, m, N), 1), (_var(A, n, N), 1)): Fraction(-2)}))

    brho_k = _coeff_kernel(N, phi, _dp([(0, 1), (1, 1), (3, -1), (-2, -1)]), _dp([(0, -1), (1, 1), (3, -1), (-2, 1)]))
    _add_exchange_block(T, B, RHO, brho_k)
    _add_exchange_block(T, RHO, B, -brho_k.transpose())

    _add_exchange_block(T, RHO, RHO, _coeff_kernel(N, phi, _dp([(0, 2), (3, -1), (-3, -1)]), _dp([(3, -1), (-3, 1)])))
    return T


def _K(N: int, pairs) -> Kernel:
    return kernel_from_dpoly(_dp(pairs), N)


def _Kinv(N: int, pairs) -> Kernel:
    return invert(_K(N, pairs))


def closed_tensor(name: str, N: int, phi: OddKernel = None, beta: PerSeq = None):
    """Construct one of the named reduced Poisson tensors on period N.

    murho(phi) and abrho(phi) are the full quotient brackets; toda, ftv_u(beta),
    ftv_S, P0, P1, P2 are the distinguished closed forms (stored with the
    factor-1/2 normalisation their operator displays use).
    """
    if name == "murho":
        if phi is None:
            raise ValueError("murho needs phi")
        return build_murho(phi)
    if name == "abrho":
        if phi is None:
            raise ValueError("abrho needs phi")
        return build_abrho(phi)
    half = Fraction(1, 2)
    if name == "toda":
        T = OpTensor(("mu", "rho"), N, bracket_scale=half)
        MU, RHO = 0, 1
        T.add_word(MU, MU, ("k", _K(N, [(1, 1)])), ("f", RHO))
        T.add_word(MU, MU, ("f", RHO), ("k", _K(N, [(-1, -1)])))
        T.add_word(MU, RHO, ("f", MU), ("k", _K(N, [(1, 1), (0, -1)])), ("f", RHO))
        T.add_word(RHO, MU, ("f", RHO), ("k", _K(N, [(0, 1), (-1, -1)])), ("f", MU))
        T.add_word(RHO, RHO, ("f", RHO), ("k", _K(N, [(1, 1), (-1, -1)])), ("f", RHO))
        return T
    if name == "ftv_u":
        if beta is None:
            beta = PerSeq.constant(N, 1)
        T = OpTensor(("u",), N, bracket_scale=half)
        U = 0
        quad = compose(_K(N, [(1, 1), (0, -1)]).scale(-1), _Kinv(N, [(0, 1), (1, 1)]))
        T.add_word(U, U, ("f", U), ("k", quad), ("f", U))
        T.add_word(U, U, ("k", _K(N, [(1, 1)])), ("c", beta))
        T.add_word(U, U, ("c", beta), ("k", _K(N, [(-1, -1)])))
        return T
    if name == "ftv_S":
        T = OpTensor(("S",), N, bracket_scale=half)
        S = 0
        D1 = _K(N, [(1, 1)])
        Dm1 = _K(N, [(-1, 1)])
        T.add_word(S, S, ("k", D1), ("f", S))
        T.add_word(S, S, ("f", S), ("k", D1))
        T.add_word(S, S, ("k", Dm1.scale(-1)), ("f", S))
        T.add_word(S, S, ("f", S), ("k", Dm1.scale(-1)))
        T.add_word(S, S, ("f", S), ("k", Dm1), ("f", S))
        T.add_word(S, S, ("f", S), ("k", D1.scale(-1)), ("f", S))
        T.add_word(S, S, ("f", S), ("k", D1), ("finv", S), ("k", D1), ("f", S))
        T.add_word(S, S, ("f", S), ("k", Dm1.scale(-1)), ("finv", S), ("k", Dm1), ("f", S))
        return T
    if name == "P0":
        T = OpTensor(("a", "b"), N, bracket_scale=half)
        A, B = 0, 1
        geo = _Kinv(N, [(0, 1), (1, 1), (2, 1)])
        T.add_word(A, A, ("f", A), ("k", compose(geo, _K(N, [(0, 1), (2, -1)]))), ("f", A))
        T.add_word(A, A, ("k", _K(N, [(1, 1)])), ("f", B))
        T.add_word(A, A, ("f", B), ("k", _K(N, [(-1, -1)])))
        T.add_word(A, B, ("f", A), ("k", compose(geo, _K(N, [(1, 1), (2, -1)]))), ("f", B))
        T.add_word(A, B, ("k", _K(N, [(2, 1), (-1, -1)])))
        T.add_word(B, A, ("f", B), ("k", compose(geo, _K(N, [(0, 1), (1, -1)]))), ("f", A))
        T.add_word(B, A, ("k", _K(N, [(1, 1), (-2, -1)])))
        T.add_word(B, B, ("f", B), ("k", compose(geo, _K(N, [(0, 1), (2, -1)]))), ("f", B))
        T.add_word(B, B, ("f", A), ("k", _K(N, [(1, 1)])))
        T.add_word(B, B, ("k", _K(N, [(-1, -1)])), ("f", A))
        return T
    if name == "P1":
        # The (a, rho) pair is a(D^2-1)rho / rho(1-D^-2)a: the sign the full
        # quotient bracket produces (the chain-rule oracle pins it).
        T = OpTensor(("a", "b", "rho"), N, bracket_scale=half)
        A, B, RHO = 0, 1, 2
        T.add_word(A, A, ("k", _K(N, [(1, 1)])), ("f", B))
        T.add_word(A, A, ("f", B), ("k", _K(N, [(-1, -1)])))
        T.add_word(A, B, ("f", A), ("k", _K(N, [(1, 1), (0, -1)])), ("f", B))
        T.add_word(A, B, ("k", _K(N, [(2, 1)])), ("f", RHO))
        T.add_word(A, B, ("f", RHO), ("k", _K(N, [(-1, -1)])))
        T.add_word(A, RHO, ("f", A), ("k", _K(N, [(2, 1), (0, -1)])), ("f", RHO))
        T.add_word(B, A, ("f", B), ("k", _K(N, [(0, 1), (-1, -1)])), ("f", A))
        T.add_word(B, A, ("k", _K(N, [(1, 1)])), ("f", RHO))
        T.add_word(B, A, ("f", RHO), ("k", _K(N, [(-2, -1)])))
        T.add_word(B, B, ("f", B), ("k", _K(N, [(1, 1), (-1, -1)])), ("f", B))
        T.add_word(B, B, ("f", A), ("k", _K(N, [(1, 1)])), ("f", RHO))
        T.add_word(B, B, ("f", RHO), ("k", _K(N, [(-1, -1)])), ("f", A))
        T.add_word(B, RHO, ("f", B), ("k", _K(N, [(2, 1), (1, 1), (0, -1), (-1, -1)])), ("f", RHO))
        T.add_word(RHO, A, ("f", RHO), ("k", _K(N, [(0, 1), (-2, -1)])), ("f", A))
        T.add_word(RHO, B, ("f", RHO), ("k", _K(N, [(1, 1), (0, 1), (-1, -1), (-2, -1)])), ("f", B))
        T.add_word(RHO, RHO, ("f", RHO), ("k", _K(N, [(2, 1), (1, 1), (-1, -1), (-2, -1)])), ("f", RHO))
        return T
    if name == "P2":
        T = OpTensor(("a", "b", "rho"), N, bracket_scale=half)
        A, B, RHO = 0, 1, 2
        cay = compose(_K(N, [(0, 1), (1, -1)]), _Kinv(N, [(0, 1), (1, 1)]))
        T.add_word(A, A, ("f", A), ("k", cay), ("f", A))
        T.add_word(A, A, ("k", _K(N, [(1, 1)])), ("f", B))
        T.add_word(A, A, ("f", B), ("k", _K(N, [(-1, -1)])))
        T.add_word(A, B, ("k", _K(N, [(2, 1)])), ("f", RHO))
        T.add_word(A, B, ("f", RHO), ("k", _K(N, [(-1, -1)])))
        T.add_word(A, RHO, ("f", A), ("k", compose(_K(N, [(2, 1), (1, -1)]), _Kinv(N, [(0, 1), (1, 1)]))), ("f", RHO))
        T.add_word(B, A, ("k", _K(N, [(1, 1)])), ("f", RHO))
        T.add_word(B, A, ("f", RHO), ("k", _K(N, [(-2, -1)])))
        T.add_word(B, B, ("f", A), ("k", _K(N, [(1, 1)])), ("f", RHO))
        T.add_word(B, B, ("f", RHO), ("k", _K(N, [(-1, -1)])), ("f", A))
        T.add_word(B, RHO, ("f", B), ("k", _K(N, [(1, 1), (0, -1)])), ("f", RHO))
        T.add_word(RHO, A, ("f", RHO), ("k", compose(_K(N, [(0, 1), (-1, -1)]), _Kinv(N, [(0, 1), (1, 1)]))), ("f", A))
        T.add_word(RHO, B, ("f", RHO), ("k", _K(N, [(0, 1), (-1, -1)])), ("f", B))
        T.add_word(RHO, RHO, ("f", RHO), ("k", compose(_K(N, [(2, 1), (-1, -1)]), _Kinv(N, [(0, 1), (1, 1)]))), ("f", RHO))
        return T
    raise ValueError(f"unknown tensor {name!r}")


_TENSOR_PHI = {
    "toda": lambda nu, N: phi_special(2, 1, N),
    "P0": lambda nu, N: phi_special(3, 0, N),
    "P1": lambda nu, N: phi_special(3, 2, N),
    "P2": lambda nu, N: phi_special(3, 1, N),
}


def oracle_match(spec: BracketSpec, W: Polygon, name: str) -> Fraction:
    """Max-abs difference between chain-rule brackets and the named closed form.

    The comparison is literal: chain bracket x bracket_scale against the
    tensor entry, over every pair of field sites.  The named tensors require
    the bracket data to carry their distinguished phi; P0 lives on the
    constant Wronskian surface, so the polygon is gauge normalized first.
    """
    N = spec.N
    if name == "P0":
        W = gauge_normalize(W, PerSeq.constant(N, 1))
    fields = coords(W)
    if name in ("murho", "abrho"):
        T = closed_tensor(name, N, phi=spec.phi)
    elif name in _TENSOR_PHI:
        want = _TENSOR_PHI[name](spec.nu, N)
        if spec.phi.seq.values != want.seq.values:
            raise ValueError(f"spec.phi is not the distinguished kernel of {name!r}")
        T = closed_tensor(name, N)
    else:
        raise ValueError(f"no chain-rule oracle for tensor {name!r}")
    TP = as_poly_tensor(T)
    mat = TP.eval_matrix(fields)
    ctx = _DualCtx(W)
    Pi = bracket_matrix(spec, W)
    idx_of = {"rho": 0, "mu": 1} if spec.nu == 2 else {"rho": 0, "b": 1, "a": 2}
    obs = {}
    for fi, fname in enumerate(TP.field_names):
        for m in range(N):
            obs[(fi, m)] = ctx.field(idx_of[fname], m)
    res = ZERO
    scale = TP.bracket_scale
    for (fi, m), f in obs.items():
        for (fj, n), g in obs.items():
            acc = ZERO
            for i, ci in f.grad.items():
                row = Pi[i]
                for j, cj in g.grad.items():
                    if row[j]:
                        acc += ci * row[j] * cj
            closed = mat[_var(fi, m, N)][_var(fj, n, N)]
            res = max(res, abs(acc * scale - closed))
    return res


# ---------------------------------------------------------------------------
# gauge normalisation, Dirac reduction, pushforward
# ---------------------------------------------------------------------------


def gauge_normalize(W: Polygon, beta: PerSeq = None, force: bool = False) -> Polygon:
    """Rescale vertices by a periodic gauge so the Wronskian ratio becomes beta.

    The gauge solves Gamma_{m+nu} = q_m Gamma_m with q = beta w / w'; it is
    unique up to one overall scalar per step-orbit, removed by normalizing the
    orbit representatives to 1.  gcd(nu, N) > 1 makes the gauge non-unique
    (NonUniqueGauge unless force=True); an orbit whose q-product differs from
    1 admits no exact periodic gauge at all (GaugeInconsistent).
    """
    from math import gcd

    W.require_nondegenerate()
    nu, N = W.nu, W.N
    if beta is None:
        beta = PerSeq.constant(N, 1)
    if not beta.nonvanishing():
        raise ValueError("beta must be nonvanishing")
    g = gcd(nu, N)
    if g > 1 and not force:
        raise NonUniqueGauge(f"gcd(nu, N) = {g} > 1: gauge not unique")
    w = wronskian(W)
    q = [beta[m] * w[m] / w[m + 1] for m in range(N)]
    gamma = [None] * N
    for rep in range(g):
        prod = ONE
        m = rep
        for _ in range(N // g):
            prod *= q[m]
            m = (m + nu) % N
        if prod != 1:
            raise GaugeInconsistent(
                f"orbit through {rep}: gauge recursion product {prod} != 1"
            )
        gamma[rep] = ONE
        m = rep
        for _ in range(N // g - 1):
            gamma[(m + nu) % N] = gamma[m] * q[m]
            m = (m + nu) % N
    V = tuple(tuple(gamma[m] * x for x in W.V[m]) for m in range(N))
    return Polygon(nu, N, V, W.M)


def normalized_fields(W: Polygon, beta: PerSeq = None):
    """The gauge-fixed field u and its site-pair product S = beta'^-1 u u'.

    The polygon is gauge normalized so its Wronskian ratio equals beta (the
    constant-Wronskian case for beta = 1); the surviving recursion
    coefficient is u and S is the scaling-invariant combination the
    lattice Virasoro bracket is usually written in.
    """
    N = W.N
    if beta is None:
        beta = PerSeq.constant(N, 1)
    Wn = gauge_normalize(W, beta)
    u = coords(Wn).by_name("a1" if W.nu != 2 else "mu")
    S = PerSeq(N, tuple(u[m] * u[m + 1] / beta[m + 1] for m in range(N)))
    return u, S


def dirac_reduce(P_eval, constrained) -> list:
    """Dirac reduction A + B C^-1 B^T of an evaluated bracket matrix.

    P_eval is the full antisymmetric matrix at a point on the constraint
    surface and ``constrained`` lists the constrained indices.  The C block is
    inverted against the columns of B^T by an exact linear solve, so a
    singular C is accepted as long as the couplings lie in its range and the
    reduction is well defined; otherwise ConstraintNotSecondClass is raised.
    """
    D = len(P_eval)
    con = sorted(constrained)
    free = [i for i in range(D) if i not in set(con)]
    A = [[P_eval[i][j] for j in free] for i in free]
    B = [[P_eval[i][j] for j in con] for i in free]
    C = [[P_eval[i][j] for j in con] for i in con]
    Bt = linalg.transpose(B)
    Z = linalg.solve(C, Bt)
    if Z is None:
        raise ConstraintNotSecondClass("couplings do not lie in the range of the constraint block")
    null = linalg.nullspace(C)
    for v in null:
        img = linalg.mat_vec(B, v)
        if any(img):
            raise ConstraintNotSecondClass("constraint block nullspace couples to the free block")
    return linalg.mat_add(A, linalg.mat_mul(B, Z))


def toda_dirac_vs_ftv(N: int, u: PerSeq, beta: PerSeq) -> Fraction:
    """Residual between Dirac-reduced Toda at rho = beta and the closed form."""
    toda = closed_tensor("toda", N)
    point = {"mu": u, "rho": beta}
    full = toda.eval_matrix(point)
    con = [_var(1, m, N) for m in range(N)]
    red = dirac_reduce(full, con)
    ftv = closed_tensor("ftv_u", N, beta=beta).eval_entry(0, 0, {"u": u})
    return linalg.max_abs(linalg.mat_sub(red, ftv))


def pushforward_check(u: PerSeq) -> Fraction:
    """Exact residual of the u -> S = u u' change of variable on the reduced bracket.

    Conjugating the u-space tensor by the Jacobian of S = u u' must reproduce
    the S-space closed form; returns the max-abs difference of the two N x N
    matrices.
    """
    N = u.N
    if N % 2 == 0:
        raise ValueError("N must be odd")
    S = PerSeq(N, tuple(u[m] * u[m + 1] for m in range(N)))
    if not S.nonvanishing():
        raise ZeroDivisionError("S = u u' must be nonvanishing")
    P_u = closed_tensor("ftv_u", N).eval_entry(0, 0, {"u": u})
    # Jacobian of S = u u': dS = (u' + u D) du
    J = [[(u[m + 1] if n == m else ZERO) + (u[m] if n == (m + 1) % N else ZERO) for n in range(N)] for m in range(N)]
    lhs = linalg.mat_mul(linalg.mat_mul(J, P_u), linalg.transpose(J))
    rhs = closed_tensor("ftv_S", N).eval_entry(0, 0, {"S": S})
    return linalg.max_abs(linalg.mat_sub(lhs, rhs))


# ---------------------------------------------------------------------------
# Jacobiator and compatibility
# ---------------------------------------------------------------------------


def jacobiator(P, point) -> Fraction:
    """Max-abs Jacobiator of a tensor at a point, exact.

    Sum over triples (I, J, K) of field sites of
      sum_s P_{I s} d_s P_{J K} + cyclic.
    """
    TP = as_poly_tensor(P)
    duals = TP.eval_dual(point)
    D = TP.n_vars()
    vals = [[duals[i][j].val for j in range(D)] for i in range(D)]
    grads = [[duals[i][j].grad for j in range(D)] for i in range(D)]

    def term(I, J, K) -> Fraction:
        acc = ZERO
        for s, d in grads[J][K].items():
            if vals[I][s]:
                acc += vals[I][s] * d
        return acc

    res = ZERO
    for I in range(D):
        for J in range(I + 1, D):
            for K in range(J + 1, D):
                jac = term(I, J, K) + term(J, K, I) + term(K, I, J)
                res = max(res, abs(jac))
    return res


def shift_field(P, field_idx: int, lam):
    """Substitute x -> x + lam at every site of one field family.

    Returns (shifted PolyTensor, had_quadratic): when the entries are linear
    in the family the result is the tensor plus lam times its constant-shift
    Lie derivative, i.e. a pencil member.
    """
    TP = as_poly_tensor(P)
    lam = rat(lam)
    N = TP.N
    fam = {_var(field_idx, m, N) for m in range(N)}
    had_quadratic = any(p.degree_in(fam) >= 2 for p in TP.entries.values())
    out = PolyTensor(TP.field_names, N, TP.bracket_scale)
    for (i, m, j, n), poly in TP.entries.items():
        acc_total = Poly()
        for mono, c in poly.terms.items():
            acc = Poly.const(c)
            for v, e in mono:
                base = Poly.var(v) + (lam if v in fam else 0)
                for _ in range(e):
                    acc = acc * base
            acc_total = acc_total + acc
        out.add_term(i, m, j, n, acc_total)
    return out, had_quadratic


def compatibility(P, Q, points, t_samples=None) -> Fraction:
    """Max Jacobiator of P + tQ over sampled points and rational t values.

    Tensor entries are polynomial, so the Jacobiator of the pencil is a
    polynomial of degree two in t; vanishing at more than two sampled t values
    (plus the endpoints P and Q themselves) certifies compatibility.
    """
    TP, TQ = as_poly_tensor(P), as_poly_tensor(Q)
    if t_samples is None:
        t_samples = [Fraction(1), Fraction(2), Fraction(3), Fraction(-1, 2)]
    if len(t_samples) < 3:
        raise ValueError("need more t samples than the t-degree of the Jacobiator")
    res = ZERO
    for point in points:
        for t in t_samples:
            res = max(res, jacobiator(TP + TQ.scale(t), point))
    return res
