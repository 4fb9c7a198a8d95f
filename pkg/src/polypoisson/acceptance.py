"""The acceptance checks: every structural identity at its contract size.

Each check returns one ReportDoc per parameter configuration with an exact
residual; a check passes iff every residual is exactly zero (the float
integrator check is the single exception and carries explicit tolerances).
The CLI 'suite' verb and the acceptance test module both run these.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from random import Random

from . import linalg
from .coord_reduction import (
    closed_tensor,
    compatibility,
    jacobiator,
    oracle_match,
    pushforward_check,
    random_fields,
    shift_field,
    toda_dirac_vs_ftv,
)
from .dynamics import (
    commute_check,
    det_transfer,
    gf_check,
    integrate,
    lifted_flow_residual,
    sum_field,
    toda_float_vf,
    toda_invariants,
    trace_transfer,
)
from .exchange_algebra import (
    BracketSpec,
    default_rc,
    projective_bracket,
    projective_chain_table,
    ProjPolygon,
    random_polygon,
    verify_structure,
    verify_ybe,
)
from .gen_nu import casimir_coeffs, quad_coeff, _numeric_casimir_residual
from .lattice_ops import (
    DPoly,
    NoSolution,
    OddKernel,
    PerSeq,
    kernel_from_dpoly,
    phi_special,
    random_odd_kernel,
)
from .linalg import ZERO, rat_str


@dataclass
class ReportDoc:
    """One check outcome: exact residual, pass flag, parameters, provenance."""

    check: str
    params: dict
    residual: str
    passed: bool
    seed: int
    elapsed: float = 0.0

    def to_json(self, with_timing: bool = False) -> dict:
        doc = {
            "check": self.check,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "residual": self.residual,
            "passed": self.passed,
            "seed": self.seed,
        }
        if with_timing:
            doc["elapsed_s"] = round(self.elapsed, 3)
        return doc


def _doc(check, params, residual, seed, t0, ok=None) -> ReportDoc:
    if isinstance(residual, Fraction) or isinstance(residual, int):
        passed = residual == 0 if ok is None else ok
        residual = rat_str(Fraction(residual))
    else:
        passed = bool(ok)
        residual = str(residual)
    return ReportDoc(check, params, residual, passed, seed, time.time() - t0)


def _zero_phi(N: int) -> OddKernel:
    return OddKernel(PerSeq.constant(N, 0))


def check_ybe(seed: int = 0) -> list:
    docs = []
    for nu in (2, 3, 4):
        t0 = time.time()
        R, C = default_rc(nu)
        docs.append(_doc("ybe", {"nu": nu}, verify_ybe(R, C), seed, t0))
    return docs


def check_jacobi(seed: int = 0, trials: int = 20) -> list:
    docs = []
    rng = Random(seed)
    for nu in (2, 3):
        for N in (5, 7):
            phis = {
                "zero": _zero_phi(N),
                "phi0": phi_special(nu, 0, N),
                "phi_top": phi_special(nu, nu - 1, N),
                "random_odd": random_odd_kernel(N, rng),
            }
            for label, phi in phis.items():
                t0 = time.time()
                W = random_polygon(nu, N, rng)
                spec = BracketSpec.standard(nu, N, phi)
                res = verify_structure(spec, W, "jacobi", trials=trials, seed=rng.randrange(10**6))
                docs.append(
                    _doc("jacobi", {"nu": nu, "N": N, "phi": label, "trials": trials}, res, seed, t0)
                )
    return docs


def _structure_sweep(check: str, seed: int, polygons: int) -> list:
    docs = []
    rng = Random(seed)
    for nu in (2, 3):
        for N in (5, 7):
            t0 = time.time()
            res = ZERO
            for _ in range(polygons):
                W = random_polygon(nu, N, rng)
                phi = random_odd_kernel(N, rng)
                spec = BracketSpec.standard(nu, N, phi)
                res = max(res, verify_structure(spec, W, check))
            docs.append(
                _doc(check, {"nu": nu, "N": N, "polygons": polygons}, res, seed, t0)
            )
    return docs


def check_momentum(seed: int = 0, polygons: int = 5) -> list:
    return _structure_sweep("momentum", seed, polygons)


def check_quasiperiodicity(seed: int = 0, polygons: int = 5) -> list:
    return _structure_sweep("quasiperiodicity", seed, polygons)


def check_closed_forms(seed: int = 0, polygons: int = 10) -> list:
    docs = []
    rng = Random(seed)
    for nu, name in ((2, "murho"), (3, "abrho")):
        t0 = time.time()
        res = ZERO
        for _ in range(polygons):
            N = 5
            W = random_polygon(nu, N, rng)
            phi = random_odd_kernel(N, rng)
            spec = BracketSpec.standard(nu, N, phi)
            res = max(res, oracle_match(spec, W, name))
        docs.append(
            _doc("closed_form_oracle", {"nu": nu, "tensor": name, "polygons": polygons}, res, seed, t0)
        )
    return docs


def check_projective(seed: int = 0, samples: int = 10) -> list:
    docs = []
    rng = Random(seed)
    for nu in (2, 3):
        t0 = time.time()
        N = 5
        res = ZERO
        for _ in range(samples // 2):
            W = random_polygon(nu, N, rng)
            while any(W.V[m][nu - 1] == 0 for m in range(N)):
                W = random_polygon(nu, N, rng)
            P = ProjPolygon.from_polygon(W)
            phi_a = random_odd_kernel(N, rng)
            phi_b = random_odd_kernel(N, rng)
            spec_a = BracketSpec.standard(nu, N, phi_a)
            spec_b = BracketSpec.standard(nu, N, phi_b)
            R, _ = default_rc(nu)
            for m in range(N):
                for n in range(N):
                    ta = projective_chain_table(spec_a, W, m, n)
                    tb = projective_chain_table(spec_b, W, m, n)
                    closed = projective_bracket(R, P, m, n)
                    for al in range(nu - 1):
                        for be in range(nu - 1):
                            res = max(res, abs(ta[al][be] - tb[al][be]))
                            res = max(res, abs(ta[al][be] - closed[al][be]))
        docs.append(_doc("projective_phi_independence", {"nu": nu, "N": N, "samples": samples}, res, seed, t0))
    return docs


def check_casimir_choice(seed: int = 0, polygons: int = 5) -> list:
    docs = []
    for nu in (2, 3, 4):
        t0 = time.time()
        N = 7
        phi0 = phi_special(nu, 0, N)
        k00, k0k = casimir_coeffs(nu, phi0, N)
        res = k00.seq.max_abs()
        for K in k0k.values():
            res = max(res, K.seq.max_abs())
        res = max(res, _numeric_casimir_residual(nu, N, phi0, polygons, seed))
        docs.append(_doc("casimir_choice", {"nu": nu, "N": N, "polygons": polygons}, res, seed, t0))
    return docs


def check_linearity_choice(seed: int = 0) -> list:
    docs = []
    for nu in (2, 3, 4, 5):
        for N in (7, 9, 11):
            t0 = time.time()
            skipped = []
            res = ZERO
            for k in range(1, nu):
                try:
                    phik = phi_special(nu, k, N)
                except NoSolution as exc:
                    skipped.append({"k": k, "reason": str(exc)})
                    continue
                res = max(res, quad_coeff(nu, k, phik, N).seq.max_abs())
            params = {"nu": nu, "N": N}
            if skipped:
                params["skipped"] = skipped
            docs.append(_doc("linearity_choice", params, res, seed, t0))
    return docs


def check_toda_to_ftv(seed: int = 0, points: int = 10) -> list:
    docs = []
    rng = Random(seed)
    for N in (5, 7):
        for blabel in ("one", "random"):
            t0 = time.time()
            if blabel == "one":
                beta = PerSeq.constant(N, 1)
            else:
                beta = random_fields(("b",), N, rng)["b"]
            res = ZERO
            for _ in range(points):
                u = random_fields(("u",), N, rng)["u"]
                res = max(res, toda_dirac_vs_ftv(N, u, beta))
            docs.append(_doc("toda_to_ftv", {"N": N, "beta": blabel, "points": points}, res, seed, t0))
    return docs


def check_pushforward(seed: int = 0, points: int = 10) -> list:
    docs = []
    rng = Random(seed)
    for N in (5, 7):
        t0 = time.time()
        res = ZERO
        for _ in range(points):
            u = random_fields(("u",), N, rng)["u"]
            res = max(res, pushforward_check(u))
        docs.append(_doc("pushforward", {"N": N, "points": points}, res, seed, t0))
    t0 = time.time()
    lhs = closed_tensor("ftv_S", 5).eval_entry(0, 0, {"S": PerSeq.constant(5, 1)})
    rhs = kernel_from_dpoly(DPoly({1: 1, 2: 1, -1: -1, -2: -1}), 5).matrix()
    res = max(linalg.max_abs(linalg.mat_sub(lhs, rhs)), pushforward_check(PerSeq.constant(5, 1)))
    docs.append(_doc("pushforward", {"N": 5, "case": "u=1 closed form"}, res, seed, t0))
    return docs


def check_extended_toda_compat(seed: int = 0, points: int = 3) -> list:
    t0 = time.time()
    N = 5
    rng = Random(seed)
    P1 = closed_tensor("P1", N)
    P2 = closed_tensor("P2", N)
    pts = [random_fields(("a", "b", "rho"), N, rng) for _ in range(points)]
    res = compatibility(P1, P2, pts)
    return [_doc("extended_toda_compat", {"N": N, "points": points, "t_samples": 4}, res, seed, t0)]


def check_pencil_deformations(seed: int = 0) -> list:
    docs = []
    rng = Random(seed)
    N = 5
    for name, direction in (("toda", "mu"), ("P1", "a"), ("P2", "b")):
        t0 = time.time()
        P = closed_tensor(name, N)
        r1, r2, r3 = gf_check(P, direction, seed=seed)
        res = max(r1, r2, r3)
        fields = P.field_names
        fidx = fields.index(direction)
        pt = random_fields(fields, N, rng)
        for _ in range(3):
            lam = Fraction(rng.randint(1, 9), rng.randint(1, 4))
            shifted, had_quad = shift_field(P, fidx, lam)
            if had_quad:
                res = max(res, Fraction(1))
            res = max(res, jacobiator(shifted, pt))
        docs.append(_doc("pencil_deformation", {"tensor": name, "direction": direction, "N": N}, res, seed, t0))
    return docs


def check_flow_consistency(seed: int = 0, points: int = 10) -> list:
    docs = []
    rng = Random(seed)
    for N in (5, 7):
        t0 = time.time()
        res = ZERO
        for _ in range(points // 2):
            W = random_polygon(2, N, rng)
            res = max(res, lifted_flow_residual(W))
        docs.append(_doc("lifted_flow", {"N": N, "polygons": points // 2}, res, seed, t0))
    t0 = time.time()
    N = 5
    toda = closed_tensor("toda", N)
    Smu = sum_field(("mu", "rho"), N, "mu")
    trT = trace_transfer(("mu", "rho"), N, 2)
    detT = det_transfer(("mu", "rho"), N)
    res = ZERO
    for _ in range(points):
        pt = random_fields(("mu", "rho"), N, rng)
        res = max(res, abs(commute_check(toda, Smu, trT, pt)))
        res = max(res, abs(commute_check(toda, Smu, detT, pt)))
    docs.append(_doc("commuting_integrals", {"N": N, "points": points}, res, seed, t0))
    return docs


def check_integrator_drift(seed: int = 0) -> list:
    t0 = time.time()
    N = 3
    start = {"mu": [1.2, -0.9, 0.4], "rho": [1.0, 2.5, 0.6]}
    vf = toda_float_vf(N)
    inv = toda_invariants(N)
    _, rep_fine = integrate(vf, start, 1e-3, 1000, invariants=inv)
    _, rep_coarse = integrate(vf, start, 1e-2, 100, invariants=inv)
    drift_fine = max(rep_fine["max_relative_drift"])
    drift_coarse = max(rep_coarse["max_relative_drift"])
    ratio = drift_coarse / drift_fine if drift_fine else float("inf")
    ok = drift_fine < 1e-8 and 1e4 / 4 <= ratio <= 1e4 * 4
    return [
        _doc(
            "integrator_drift",
            {
                "N": N,
                "dt_fine": 1e-3,
                "dt_coarse": 1e-2,
                "drift_fine": f"{drift_fine:.3e}",
                "drift_coarse": f"{drift_coarse:.3e}",
                "ratio": f"{ratio:.1f}",
            },
            f"{drift_fine:.3e}",
            seed,
            t0,
            ok=ok,
        )
    ]


CHECKS = [
    ("01_ybe", check_ybe),
    ("02_jacobi", check_jacobi),
    ("03_momentum", check_momentum),
    ("04_quasiperiodicity", check_quasiperiodicity),
    ("05_closed_forms", check_closed_forms),
    ("06_projective", check_projective),
    ("07_casimir_choice", check_casimir_choice),
    ("08_linearity_choice", check_linearity_choice),
    ("09_toda_to_ftv", check_toda_to_ftv),
    ("10_pushforward", check_pushforward),
    ("11_extended_toda_compat", check_extended_toda_compat),
    ("12_pencil_deformations", check_pencil_deformations),
    ("13_flow_consistency", check_flow_consistency),
    ("14_integrator_drift", check_integrator_drift),
]


def run_suite(seed: int = 0, threads: int = 1) -> list:
    """Run every acceptance check; returns ReportDocs ordered by check id."""
    results = {}
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {cid: pool.submit(fn, seed) for cid, fn in CHECKS}
            for cid, fut in futures.items():
                results[cid] = fut.result()
    else:
        for cid, fn in CHECKS:
            results[cid] = fn(seed)
    docs = []
    for cid, _ in CHECKS:
        for doc in results[cid]:
            doc.check = f"{cid}:{doc.check}" if not doc.check.startswith(cid) else doc.check
            docs.append(doc)
    return docs
