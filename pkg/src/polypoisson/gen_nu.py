"""General-order kernel identities behind the distinguished deformation choices.

For a polygon of order nu the quotient-field brackets {w, w}, {w, alpha^(k)},
{alpha^(k), w} and the quadratic part of {alpha^(k), alpha^(k)} are exchange
type: a fixed coefficient kernel times the product of the two fields.  The
raw kernels are finite sums of shifted sign, delta and phi sequences; this
module computes those sums honestly over the index window where they are
valid, telescopes them into closed-form periodic kernels, and asserts the two
agree.  The closed forms certify the two structural facts about the special
deformation kernels: phi^(0) makes a^(0) a Casimir, and phi^(k) (0 < k < nu)
removes the a^(k) a^(k) quadratic term, making the bracket linear in a^(k).

All raw sums use the true integer sign and plain deltas; phi is periodic.
The raw window formulas are only trustworthy for |j| <= N - 1 - nu (beyond
that the underlying vertex brackets leave the sign window), so consistency is
asserted exactly there; with N >= 2 nu + 1 this still covers every residue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from random import Random

from .coord_reduction import jacobiator, random_fields, shift_field, closed_tensor
from .exchange_algebra import BracketSpec, _DualCtx, bracket_matrix, random_polygon
from .lattice_ops import (
    DPoly,
    Kernel,
    NoSolution,
    OddKernel,
    compose,
    kernel_from_dpoly,
    phi_special,
    sign,
)
from .linalg import ZERO, rat_str


def _delta(j: int) -> int:
    return 1 if j == 0 else 0


@dataclass(frozen=True)
class HatKernels:
    """Raw window sums of the four exchange coefficient kernels.

    Each map sends an integer offset j (valid for |j| <= width) to the exact
    coefficient; the sums are not periodic as written, so they are kept on
    the window rather than forced into period-N kernels.
    """

    nu: int
    k: int
    N: int
    width: int
    ww: dict
    w_alk: dict
    alk_w: dict
    alk_alk: dict

    def combination_alk_alk(self, j: int) -> Fraction:
        """alk_alk - w_alk - alk_w + ww: the a^(k) a^(k) coefficient."""
        return self.alk_alk[j] - self.w_alk[j] - self.alk_w[j] + self.ww[j]


def oppbs_hats(nu: int, k: int, phi: Kernel, N: int) -> HatKernels:
    """The four raw coefficient sums for given (nu, k, phi), over the window."""
    if not 0 <= k <= nu - 1:
        raise ValueError("k must lie in 0..nu-1")
    width = N - 1
    js = range(-width, width + 1)

    def ww_at(j):
        acc = Fraction(0)
        for l in range(nu):
            acc += sign(j - l) - _delta(j - l)
            for r in range(nu):
                acc += phi[j + r - l] + _delta(j + r - l)
        return acc

    def w_alk_at(j):
        acc = Fraction(0)
        for l in range(nu + 1):
            if l == k:
                continue
            acc += sign(j - l) - _delta(j - l)
            for r in range(nu):
                acc += phi[j + r - l] + _delta(j + r - l)
        return acc

    def alk_w_at(j):
        acc = Fraction(0)
        for l in range(nu + 1):
            if l == k:
                continue
            acc += sign(j + l) + _delta(j + l)
            for r in range(nu):
                acc += phi[j + l - r] - _delta(j + l - r)
        return acc

    def alk_alk_at(j):
        acc = Fraction(0)
        for l in range(nu + 1):
            if l == k:
                continue
            acc += sign(j - l) - _delta(j - l)
            for r in range(nu + 1):
                if r == k:
                    continue
                acc += phi[j + r - l] + _delta(j + r - l)
        for l in range(1, nu - k + 1):
            acc += 2 * _delta(j - l)
        return acc

    return HatKernels(
        nu,
        k,
        N,
        width,
        {j: ww_at(j) for j in js},
        {j: w_alk_at(j) for j in js},
        {j: alk_w_at(j) for j in js},
        {j: alk_alk_at(j) for j in js},
    )


def _geom(lo: int, hi: int) -> DPoly:
    """D^lo + D^(lo+1) + ... + D^hi."""
    return DPoly({r: 1 for r in range(lo, hi + 1)})


def w_alk_minus_ww_closed(nu: int, k: int, phi: Kernel, N: int) -> Kernel:
    """(D^-nu - D^-k)(D-1)^-1 [ (D^nu - 1) phi + (D^nu + 1) ] as a periodic kernel.

    The (D-1)^-1 cancels into the prefactor: (D^-nu - D^-k)(D-1)^-1 is the
    polynomial -D^-nu (1 + D + ... + D^(nu-k-1)).
    """
    inner = compose(kernel_from_dpoly(DPoly({nu: 1, 0: -1}), N), phi)
    inner = inner + kernel_from_dpoly(DPoly({nu: 1, 0: 1}), N)
    pref = kernel_from_dpoly(_geom(0, nu - k - 1).scale(-1) * DPoly({-nu: 1}), N)
    return compose(pref, inner)


def quad_coeff(nu: int, k: int, phi: Kernel, N: int) -> Kernel:
    """The a^(k) a^(k) coefficient kernel (D^-nu - D^-k)[(D^nu - D^k) phi + D^nu + D^k].

    It vanishes identically exactly when phi solves the order nu-k linearising
    equation, which is how the distinguished phi^(k) are characterised.
    """
    if not 1 <= k <= nu - 1:
        raise ValueError("k must lie in 1..nu-1")
    inner = compose(kernel_from_dpoly(DPoly({nu: 1, k: -1}), N), phi)
    inner = inner + kernel_from_dpoly(DPoly({nu: 1, k: 1}), N)
    return compose(kernel_from_dpoly(DPoly({-nu: 1, -k: -1}), N), inner)


def casimir_coeffs(nu: int, phi: Kernel, N: int):
    """Coefficient kernels of {a^(0), a^(0)} and {a^(0), a^(k)} for k = 1..nu-1.

    Returns (K00, {k: K0k}).  All of them vanish for phi = phi^(0) when
    gcd(nu, N) = 1, which is the Casimir property of a^(0).
    """
    inner = compose(kernel_from_dpoly(DPoly({nu: 1, 0: -1}), N), phi)
    inner = inner + kernel_from_dpoly(DPoly({nu: 1, 0: 1}), N)
    k00 = compose(kernel_from_dpoly(DPoly({-nu: 1, 0: -1}), N), inner)
    k0k = {
        k: compose(kernel_from_dpoly(DPoly({-nu: 1, -k: -1}), N), inner)
        for k in range(1, nu)
    }
    return k00, k0k


def hat_consistency(nu: int, k: int, phi: Kernel, N: int) -> Fraction:
    """Max residual between the raw window sums and the telescoped closed forms.

    Compared on |j| <= N - 1 - nu (shrunk by one more where a shift of the
    window is taken); this tests the geometric-series algebra instead of
    assuming it.
    """
    hats = oppbs_hats(nu, k, phi, N)
    lim = N - 1 - nu
    res = ZERO
    closed_diff = w_alk_minus_ww_closed(nu, k, phi, N)
    for j in range(-lim, lim + 1):
        res = max(res, abs(hats.w_alk[j] - hats.ww[j] - closed_diff[j]))
    if k >= 1:
        closed_quad = quad_coeff(nu, k, phi, N)
        for j in range(-lim, lim + 1):
            res = max(res, abs(hats.combination_alk_alk(j) - closed_quad[j]))
    k00, k0k = casimir_coeffs(nu, phi, N)
    for j in range(-(lim - 1), lim):
        got = 2 * hats.ww[j] - hats.ww[j + 1] - hats.ww[j - 1]
        res = max(res, abs(got - k00[j]))
        if k >= 1:
            got = (hats.w_alk[j + 1] - hats.ww[j + 1]) - (hats.w_alk[j] - hats.ww[j])
            res = max(res, abs(got - k0k[k][j]))
    return res


# ---------------------------------------------------------------------------
# the theorem report
# ---------------------------------------------------------------------------


@dataclass
class TheoremReport:
    """Per-choice verdicts for the distinguished deformation kernels."""

    nu: int
    N: int
    cases: list = field(default_factory=list)
    casimir: dict = field(default_factory=dict)
    spectral: dict = field(default_factory=dict)

    def all_pass(self) -> bool:
        ok = all(c["verdict"] in ("pass", "skipped") for c in self.cases)
        ok = ok and self.casimir.get("verdict") in ("pass", "skipped")
        ok = ok and self.spectral.get("verdict") in ("pass", "skipped")
        return ok

    def to_json(self) -> dict:
        return {
            "nu": self.nu,
            "N": self.N,
            "cases": self.cases,
            "casimir": self.casimir,
            "spectral": self.spectral,
        }


def _numeric_casimir_residual(nu: int, N: int, phi: OddKernel, polygons: int, seed: int) -> Fraction:
    """Exact chain-rule check that a^(0) brackets to zero with every field."""
    rng = Random(seed)
    res = ZERO
    for _ in range(polygons):
        W = random_polygon(nu, N, rng)
        spec = BracketSpec.standard(nu, N, phi)
        ctx = _DualCtx(W)
        Pi = bracket_matrix(spec, W)
        rho = [ctx.field(0, m) for m in range(N)]
        others = [[ctx.field(j, n) for n in range(N)] for j in range(nu)]
        for m in range(N):
            row = {}
            for i, ci in rho[m].grad.items():
                prow = Pi[i]
                for jj in range(len(prow)):
                    if prow[jj]:
                        row[jj] = row.get(jj, ZERO) + ci * prow[jj]
            for j in range(nu):
                for n in range(N):
                    acc = ZERO
                    for vid, cj in others[j][n].grad.items():
                        if vid in row:
                            acc += row[vid] * cj
                    res = max(res, abs(acc))
    return res


def check_theorem(nu: int, N: int, seed: int = 0, polygons: int = 2, lambdas=None) -> TheoremReport:
    """Verify the Casimir and linearity properties of the phi^(k) family.

    For each 1 <= k <= nu-1: quad_coeff(nu, k, phi^(k), N) must be the zero
    kernel.  For k = 0: the casimir_coeffs kernels must vanish and random
    polygons must satisfy {a^(0)_m, a^(j)_n} = 0 exactly.  The spectral-shift
    verdict substitutes a^(k) -> a^(k) + lambda in the closed tensors (orders
    2 and 3); for higher orders it records the kernel-level certificate
    (vanishing quadratic coefficient) that the shift extends to a pencil.
    """
    if nu < 2 or N < 3:
        raise ValueError("need nu >= 2 and N >= 3")
    report = TheoremReport(nu, N)
    solved = {}
    for k in range(1, nu):
        try:
            phik = phi_special(nu, k, N)
        except NoSolution as exc:
            report.cases.append(
                {"k": k, "verdict": "skipped", "residual": None, "note": str(exc)}
            )
            continue
        solved[k] = phik
        resid = quad_coeff(nu, k, phik, N).seq.max_abs()
        resid = max(resid, hat_consistency(nu, k, phik, N) if N >= nu + 2 else ZERO)
        report.cases.append(
            {
                "k": k,
                "verdict": "pass" if resid == 0 else "fail",
                "residual": rat_str(resid),
                "note": "",
            }
        )
    try:
        phi0 = phi_special(nu, 0, N)
        k00, k0k = casimir_coeffs(nu, phi0, N)
        resid = k00.seq.max_abs()
        for K in k0k.values():
            resid = max(resid, K.seq.max_abs())
        report.casimir = {
            "verdict": "pass" if resid == 0 else "fail",
            "residual": rat_str(resid),
        }
        from math import gcd

        if resid != 0 and gcd(nu, N) > 1:
            report.casimir["note"] = (
                f"known obstruction: gcd(nu, N) = {gcd(nu, N)} > 1 leaves a "
                "shift-invariant defect of size 2 gcd / N in the coefficient kernels"
            )
        if N > nu:
            numeric = _numeric_casimir_residual(nu, N, phi0, polygons, seed)
            report.casimir["numeric_residual"] = rat_str(numeric)
            if numeric != 0:
                report.casimir["verdict"] = "fail"
        else:
            report.casimir["numeric_residual"] = "skipped (needs N > nu to sample polygons)"
    except NoSolution as exc:
        report.casimir = {"verdict": "skipped", "note": str(exc)}

    rng = Random(seed + 1)
    if lambdas is None:
        lambdas = [Fraction(rng.randint(1, 9), rng.randint(1, 4)) for _ in range(3)]
    if nu in (2, 3) and solved:
        resid = ZERO
        for k, phik in solved.items():
            base = closed_tensor("murho" if nu == 2 else "abrho", N, phi=phik)
            # field index of a^(k) inside the tensor's own ordering
            alias = {2: {1: "mu"}, 3: {1: "b", 2: "a"}}[nu][k]
            fidx = base.field_names.index(alias)
            pt = random_fields(base.field_names, N, rng)
            for lam in lambdas:
                shifted, quad_left = shift_field(base, fidx, lam)
                if quad_left:
                    resid = max(resid, Fraction(1))
                resid = max(resid, jacobiator(shifted, pt))
        report.spectral = {
            "verdict": "pass" if resid == 0 else "fail",
            "residual": rat_str(resid),
            "note": "tensor-level shift",
        }
    else:
        kernel_ok = all(c["verdict"] in ("pass", "skipped") for c in report.cases)
        report.spectral = {
            "verdict": "pass" if kernel_ok else "fail",
            "residual": "0" if kernel_ok else "1",
            "note": "kernel-level certificate (no closed tensor at this order)",
        }
    return report
