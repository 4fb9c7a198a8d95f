from fractions import Fraction
from random import Random

import pytest

from polypoisson.coord_reduction import (
    Fields,
    as_poly_tensor,
    closed_tensor,
    coords,
    jacobiator,
    random_fields,
)
from polypoisson.dynamics import (
    LinearityViolated,
    Observable,
    TransferMatrix,
    char_poly,
    commute_check,
    det_transfer,
    gf_check,
    ham_vf,
    integrate,
    lie_deform,
    lifted_flow_residual,
    lifted_vf,
    sum_field,
    toda_float_vf,
    toda_invariants,
    trace_transfer,
    transfer_invariants,
)
from polypoisson.exchange_algebra import Polygon, random_polygon
from polypoisson.lattice_ops import PerSeq, phi_special

F = Fraction


def test_ham_vf_toda_flow():
    N = 5
    toda = closed_tensor("toda", N)
    pt = random_fields(("mu", "rho"), N, Random(0))
    vel = ham_vf(toda, sum_field(("mu", "rho"), N, "mu"), pt)
    mu, rho = pt["mu"], pt["rho"]
    for m in range(N):
        assert vel["mu"][m] == rho[m + 1] - rho[m]
        assert vel["rho"][m] == rho[m] * (mu[m] - mu[m - 1])


def test_ham_vf_constant_hamiltonian():
    N = 5
    toda = closed_tensor("toda", N)
    const = Observable("const", ("mu", "rho"), N, lambda duals: duals[0][0] * 0 + 7)
    vel = ham_vf(toda, const, random_fields(("mu", "rho"), N, Random(1)))
    assert all(v == 0 for v in vel["mu"].values) and all(v == 0 for v in vel["rho"].values)


def test_ham_vf_casimir_tensor_freezes_rho():
    N = 5
    murho0 = closed_tensor("murho", N, phi=phi_special(2, 0, N))
    H = sum_field(("mu", "rho"), N, "mu")
    vel = ham_vf(murho0, H, random_fields(("mu", "rho"), N, Random(2)))
    assert all(v == 0 for v in vel["rho"].values)


def test_lifted_vf_constant_wronskian():
    V = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1))
    M = ((1, -1), (1, 0))
    W = Polygon(2, 5, V, M)
    vdot, mdot = lifted_vf(W)
    for m in range(5):
        assert vdot[m] == tuple(W.vertex(m - 1))
    assert all(x == 0 for row in mdot for x in row)


def test_lifted_vf_scaling_homogeneity():
    rng = Random(3)
    W = random_polygon(2, 5, rng)
    c = F(3, 2)
    W2 = Polygon(2, 5, tuple(tuple(c * x for x in row) for row in W.V), W.M)
    v1, _ = lifted_vf(W)
    v2, _ = lifted_vf(W2)
    for m in range(5):
        assert v2[m] == tuple(c * x for x in v1[m])


def test_lifted_flow_pushforward():
    rng = Random(4)
    for N in (5, 7):
        for _ in range(3):
            assert lifted_flow_residual(random_polygon(2, N, rng)) == 0


def test_transfer_invariants_examples():
    f = Fields(2, 3, (PerSeq.constant(3, 1), PerSeq.constant(3, 1)))
    coeffs = transfer_invariants(f)
    # char poly x^2 + 2x + 1: trace -2, determinant 1
    assert coeffs == [F(1), F(2), F(1)]
    f1 = Fields(2, 1, (PerSeq.constant(1, 3), PerSeq.constant(1, 5)))
    T = TransferMatrix.from_fields(f1)
    assert T.monodromy == [[F(0), F(-3)], [F(1), F(5)]]


def test_transfer_det_is_product_of_rho():
    rng = Random(5)
    N = 5
    pt = random_fields(("mu", "rho"), N, rng)
    f = Fields(2, N, (pt["rho"], pt["mu"]))
    coeffs = transfer_invariants(f)
    prod = F(1)
    for m in range(N):
        prod *= pt["rho"][m]
    # constant coefficient of char(T) is (-1)^nu det T
    assert coeffs[-1] == prod


def test_transfer_matches_polygon_monodromy():
    # the recursion monodromy is conjugate to the polygon monodromy, so the
    # characteristic polynomials agree
    rng = Random(6)
    W = random_polygon(2, 5, rng)
    f = coords(W)
    assert char_poly([list(r) for r in W.M]) == transfer_invariants(f)


def test_commuting_integrals():
    N = 5
    rng = Random(7)
    toda = closed_tensor("toda", N)
    Smu = sum_field(("mu", "rho"), N, "mu")
    trT = trace_transfer(("mu", "rho"), N, 2)
    detT = det_transfer(("mu", "rho"), N)
    for _ in range(3):
        pt = random_fields(("mu", "rho"), N, rng)
        assert commute_check(toda, Smu, Smu, pt) == 0
        assert commute_check(toda, Smu, trT, pt) == 0
        assert commute_check(toda, Smu, detT, pt) == 0


def test_observable_gradient_validation():
    N = 5
    rng = Random(8)
    pt = random_fields(("mu", "rho"), N, rng)
    trT = trace_transfer(("mu", "rho"), N, 2)
    assert trT.validate_gradient(pt, rng) == 0
    detT = det_transfer(("mu", "rho"), N)
    assert detT.validate_gradient(pt, rng, degree=2) == 0


def test_lie_deform_toda_mu_direction():
    N = 5
    toda = as_poly_tensor(closed_tensor("toda", N))
    LP = lie_deform(toda, "mu")
    pt = random_fields(("mu", "rho"), N, Random(9))
    mat = LP.eval_matrix(pt)
    rho = pt["rho"]
    for m in range(N):
        for n in range(N):
            assert mat[m][n] == 0  # mu-mu block has no mu dependence
            expect = (rho[n] if (m + 1) % N == n else 0) - (rho[n] if m == n else 0)
            assert mat[m][N + n] == expect
            assert mat[N + m][N + n] == 0


def test_lie_deform_rejects_quadratic_direction():
    with pytest.raises(LinearityViolated):
        lie_deform(closed_tensor("ftv_u", 5), "u")


def test_gf_check_named_tensors():
    N = 5
    for name, direction in (("toda", "mu"), ("P1", "a"), ("P2", "b")):
        r1, r2, r3 = gf_check(closed_tensor(name, N), direction, seed=3, points=2)
        assert (r1, r2, r3) == (0, 0, 0)


def test_deformed_tensor_is_poisson():
    N = 5
    toda = closed_tensor("toda", N)
    LP = lie_deform(toda, "mu")
    pt = random_fields(("mu", "rho"), N, Random(10))
    assert jacobiator(LP, pt) == 0


def test_integrate_trivial_cases():
    start = {"x": [1.0, 2.0]}
    traj, rep = integrate(lambda s: {"x": [0.0, 0.0]}, start, 0.1, 5)
    assert all(state["x"] == [1.0, 2.0] for _, state in traj)
    traj, rep = integrate(lambda s: {"x": [1.0, 1.0]}, start, 0.1, 0)
    assert len(traj) == 1 and rep["steps"] == 0


def test_integrate_detects_blowup():
    # x' = x^2 with a huge step overflows quickly and must be reported
    vf = lambda s: {"x": [v * v for v in s["x"]]}
    with pytest.raises(ValueError, match="degenerate state"):
        integrate(vf, {"x": [10.0]}, 10.0, 500)


def test_integrator_drift_and_order():
    N = 3
    start = {"mu": [1.2, -0.9, 0.4], "rho": [1.0, 2.5, 0.6]}
    vf = toda_float_vf(N)
    inv = toda_invariants(N)
    _, fine = integrate(vf, start, 1e-3, 1000, invariants=inv)
    _, coarse = integrate(vf, start, 1e-2, 100, invariants=inv)
    drift_fine = max(fine["max_relative_drift"])
    drift_coarse = max(coarse["max_relative_drift"])
    assert drift_fine < 1e-8
    ratio = drift_coarse / drift_fine
    assert 1e4 / 4 <= ratio <= 1e4 * 4
