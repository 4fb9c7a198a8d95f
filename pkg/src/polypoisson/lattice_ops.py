"""Periodic sequences, shift-operator polynomials and circulant kernels.

A periodic sequence ``K`` of period ``N`` acts on another periodic sequence
``f`` by cyclic convolution, ``(K.f)_m = sum_n K_{m-n} f_n`` with the sum over
one period.  Under this convention the kernel of the shift ``D`` (which maps
``f_m`` to ``f_{m+1}``) is the delta sequence supported at ``-1 mod N``, and
composition of operators is convolution of kernels.

The module also carries the constrained solver that produces the odd periodic
kernels used as the deformation parameter of the vertex bracket: given shift
polynomials A and b it solves ``A(D) phi = b(D) delta`` exactly over the
rationals with the oddness constraints adjoined.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .linalg import ONE, ZERO, Rational, dot, rat, rat_str


class SingularOperator(ValueError):
    """Raised when a circulant operator has no exact inverse."""

    def __init__(self, msg: str, nullity: int):
        super().__init__(f"{msg} (nullspace dimension {nullity})")
        self.nullity = nullity


class NoSolution(ValueError):
    """Raised when a constrained kernel equation is inconsistent."""


def sign(k: int) -> int:
    return (k > 0) - (k < 0)


@dataclass(frozen=True)
class SignWindow:
    """Discrete sign values sigma_k on the window |k| <= N-1.

    The bracket only ever evaluates sigma at fundamental-domain differences,
    so lookups outside the window are an error rather than an extension.
    """

    N: int

    def __getitem__(self, k: int) -> int:
        if abs(k) > self.N - 1:
            raise IndexError(f"sigma_{k} lies outside the window |k| <= {self.N - 1}")
        return sign(k)


@dataclass(frozen=True)
class PerSeq:
    """A period-N sequence of rationals, indexed by residues mod N."""

    N: int
    values: tuple[Fraction, ...]

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("period must be >= 1")
        if len(self.values) != self.N:
            raise ValueError("need exactly N values")
        object.__setattr__(self, "values", tuple(rat(v) for v in self.values))

    @classmethod
    def constant(cls, N: int, c) -> "PerSeq":
        return cls(N, (rat(c),) * N)

    @classmethod
    def delta(cls, N: int, at: int = 0) -> "PerSeq":
        return cls(N, tuple(ONE if m == at % N else ZERO for m in range(N)))

    def __getitem__(self, m: int) -> Fraction:
        return self.values[m % self.N]

    def __add__(self, other: "PerSeq") -> "PerSeq":
        self._check(other)
        return PerSeq(self.N, tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other: "PerSeq") -> "PerSeq":
        self._check(other)
        return PerSeq(self.N, tuple(a - b for a, b in zip(self.values, other.values)))

    def __neg__(self) -> "PerSeq":
        return PerSeq(self.N, tuple(-a for a in self.values))

    def scale(self, c) -> "PerSeq":
        c = rat(c)
        return PerSeq(self.N, tuple(c * a for a in self.values))

    def pointwise(self, other: "PerSeq") -> "PerSeq":
        self._check(other)
        return PerSeq(self.N, tuple(a * b for a, b in zip(self.values, other.values)))

    def shift(self, r: int) -> "PerSeq":
        """The sequence m -> self[m + r]."""
        return PerSeq(self.N, tuple(self[(m + r)] for m in range(self.N)))

    def is_zero(self) -> bool:
        return not any(self.values)

    def nonvanishing(self) -> bool:
        return all(self.values)

    def max_abs(self) -> Fraction:
        return max((abs(v) for v in self.values), default=ZERO)

    def _check(self, other: "PerSeq"):
        if self.N != other.N:
            raise ValueError(f"period mismatch: {self.N} != {other.N}")

    def to_json(self) -> dict:
        return {"N": self.N, "values": [rat_str(v) for v in self.values]}

    @classmethod
    def from_json(cls, doc: dict) -> "PerSeq":
        return cls(int(doc["N"]), tuple(rat(v) for v in doc["values"]))


@dataclass(frozen=True)
class DPoly:
    """A Laurent polynomial sum_r c_r D^r in the shift operator D."""

    terms: dict

    def __post_init__(self):
        clean = {int(r): rat(c) for r, c in self.terms.items() if rat(c)}
        object.__setattr__(self, "terms", clean)

    @classmethod
    def D(cls, r: int = 1, c=1) -> "DPoly":
        return cls({r: rat(c)})

    @classmethod
    def one(cls) -> "DPoly":
        return cls({0: ONE})

    @classmethod
    def from_coeffs(cls, pairs) -> "DPoly":
        acc: dict[int, Fraction] = {}
        for r, c in pairs:
            acc[r] = acc.get(r, ZERO) + rat(c)
        return cls(acc)

    def __add__(self, other: "DPoly") -> "DPoly":
        acc = dict(self.terms)
        for r, c in other.terms.items():
            acc[r] = acc.get(r, ZERO) + c
        return DPoly(acc)

    def __sub__(self, other: "DPoly") -> "DPoly":
        return self + (-other)

    def __neg__(self) -> "DPoly":
        return DPoly({r: -c for r, c in self.terms.items()})

    def __mul__(self, other: "DPoly") -> "DPoly":
        acc: dict[int, Fraction] = {}
        for r1, c1 in self.terms.items():
            for r2, c2 in other.terms.items():
                r = r1 + r2
                acc[r] = acc.get(r, ZERO) + c1 * c2
        return DPoly(acc)

    def scale(self, c) -> "DPoly":
        c = rat(c)
        return DPoly({r: c * v for r, v in self.terms.items()})

    def to_json(self) -> dict:
        return {"terms": {str(r): rat_str(c) for r, c in sorted(self.terms.items())}}

    @classmethod
    def from_json(cls, doc: dict) -> "DPoly":
        return cls({int(r): rat(c) for r, c in doc["terms"].items()})


@dataclass(frozen=True)
class Kernel:
    """A periodic sequence viewed as a cyclic-convolution operator."""

    seq: PerSeq

    @property
    def N(self) -> int:
        return self.seq.N

    def __getitem__(self, m: int) -> Fraction:
        return self.seq[m]

    @classmethod
    def delta(cls, N: int) -> "Kernel":
        return cls(PerSeq.delta(N))

    @classmethod
    def zero(cls, N: int) -> "Kernel":
        return cls(PerSeq.constant(N, 0))

    def __add__(self, other: "Kernel") -> "Kernel":
        return Kernel(self.seq + other.seq)

    def __sub__(self, other: "Kernel") -> "Kernel":
        return Kernel(self.seq - other.seq)

    def __neg__(self) -> "Kernel":
        return Kernel(-self.seq)

    def scale(self, c) -> "Kernel":
        return Kernel(self.seq.scale(c))

    def is_zero(self) -> bool:
        return self.seq.is_zero()

    def matrix(self) -> list[list[Fraction]]:
        """Dense N x N matrix with entry (m, n) = K_{m-n}."""
        N = self.N
        return [[self.seq[m - n] for n in range(N)] for m in range(N)]

    def transpose(self) -> "Kernel":
        return Kernel(PerSeq(self.N, tuple(self.seq[-m] for m in range(self.N))))

    def to_json(self) -> dict:
        return self.seq.to_json()

    @classmethod
    def from_json(cls, doc: dict) -> "Kernel":
        return cls(PerSeq.from_json(doc))


class OddKernel(Kernel):
    """Kernel with K_{-m} = -K_m (hence K_0 = 0, and K_{N/2} = 0 for even N)."""

    def __init__(self, seq: PerSeq):
        for m in range(seq.N):
            if seq[-m] != -seq[m]:
                raise ValueError(f"kernel is not odd at residue {m}")
        super().__init__(seq)


def kernel_from_dpoly(p: DPoly, N: int) -> Kernel:
    """Kernel of p(D) on period N: K_m = sum of c_r over r = -m mod N."""
    if N < 1:
        raise ValueError("period must be >= 1")
    vals = [ZERO] * N
    for r, c in p.terms.items():
        vals[(-r) % N] += c
    return Kernel(PerSeq(N, tuple(vals)))


def convolve_apply(K: Kernel, f: PerSeq) -> PerSeq:
    """Exact cyclic convolution (K.f)_m = sum_n K_{m-n} f_n."""
    if K.N != f.N:
        raise ValueError(f"period mismatch: {K.N} != {f.N}")
    N = K.N
    out = []
    for m in range(N):
        acc = ZERO
        for n in range(N):
            kv = K.seq[m - n]
            if kv and f.values[n]:
                acc += kv * f.values[n]
        out.append(acc)
    return PerSeq(N, tuple(out))


def compose(K: Kernel, L: Kernel) -> Kernel:
    """Operator composition K after L (= cyclic convolution of kernels)."""
    return Kernel(convolve_apply(K, L.seq))


def invert(K: Kernel) -> Kernel:
    """Exact inverse kernel L with K * L = delta; SingularOperator if none."""
    N = K.N
    delta = [ONE] + [ZERO] * (N - 1)
    mat = K.matrix()
    col = linalg.solve(mat, delta)
    if col is None:
        nullity = len(linalg.nullspace(mat))
        raise SingularOperator("circulant operator is singular", nullity)
    # solve() returns the column f with sum_n K_{m-n} f_n = delta_m; this is
    # exactly the inverse kernel because circulants commute.
    return Kernel(PerSeq(N, tuple(col)))


def apply_dpoly(p: DPoly, f: PerSeq) -> PerSeq:
    """p(D) applied to f, i.e. sum_r c_r f_{m+r}."""
    N = f.N
    out = [ZERO] * N
    for r, c in p.terms.items():
        for m in range(N):
            out[m] += c * f[m + r]
    return PerSeq(N, tuple(out))


def _odd_constraint_rows(N: int) -> list[list[Fraction]]:
    rows = []
    for j in range((N // 2) + 1):
        row = [ZERO] * N
        row[j % N] += ONE
        row[(-j) % N] += ONE
        rows.append(row)
    return rows


def odd_solution_dim(A: DPoly, N: int) -> int:
    """Dimension of the odd nullspace of A(D) on period N."""
    mat = kernel_from_dpoly(A, N).matrix() + _odd_constraint_rows(N)
    return len(linalg.nullspace(mat))


def solve_phi(A: DPoly, b: DPoly, N: int) -> OddKernel:
    """Solve A(D) phi = b(D) delta for an odd periodic kernel phi.

    The oddness constraints are adjoined to the exact linear system.  When the
    solution set is a positive-dimensional affine space the representative
    orthogonal to the homogeneous solution space is returned, which is the
    minimal-norm solution.  Raises NoSolution when the constrained system is
    inconsistent.
    """
    if N < 3:
        raise ValueError("period must be >= 3")
    a_mat = kernel_from_dpoly(A, N).matrix()
    rhs = list(kernel_from_dpoly(b, N).seq.values)
    odd_rows = _odd_constraint_rows(N)
    mat = a_mat + odd_rows
    vec = rhs + [ZERO] * len(odd_rows)
    particular = linalg.solve(mat, vec)
    if particular is None:
        raise NoSolution("no odd periodic kernel satisfies the equation")
    hom = linalg.nullspace(mat)
    if hom:
        gram = [[dot(u, v) for v in hom] for u in hom]
        proj = linalg.solve(gram, [dot(u, particular) for u in hom])
        for coef, u in zip(proj, hom):
            particular = [x - coef * y for x, y in zip(particular, u)]
    return OddKernel(PerSeq(N, tuple(particular)))


def phi_special(nu: int, k: int, N: int) -> OddKernel:
    """The odd periodic kernel solving (2 - D^j - D^-j) phi = D^j - D^-j, j = nu - k.

    These are the distinguished deformation kernels: k = 0 makes the leading
    reduced field a Casimir, while 1 <= k <= nu-1 makes the reduced bracket
    linear in the k-th field.
    """
    if nu < 2:
        raise ValueError("nu must be >= 2")
    if not 0 <= k <= nu - 1:
        raise ValueError("k must lie in 0..nu-1")
    if N < 3:
        raise ValueError("period must be >= 3")
    j = nu - k
    A = DPoly({0: 2, j: -1, -j: -1})
    b = DPoly({j: 1, -j: -1})
    return solve_phi(A, b, N)


def random_odd_kernel(N: int, rng, lo: int = -6, hi: int = 6, den: int = 4) -> OddKernel:
    """A random odd kernel with small-height rational entries."""
    vals = [ZERO] * N
    for j in range(1, (N + 1) // 2):
        x = Fraction(rng.randint(lo, hi), rng.randint(1, den))
        vals[j] = x
        vals[N - j] = -x
    return OddKernel(PerSeq(N, tuple(vals)))


def kernel_to_json_str(K: Kernel) -> str:
    return json.dumps(K.to_json(), sort_keys=True)
