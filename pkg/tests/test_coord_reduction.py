from fractions import Fraction
from random import Random

import pytest

from polypoisson import linalg
from polypoisson.coord_reduction import (
    ConstraintNotSecondClass,
    Fields,
    GaugeInconsistent,
    NonUniqueGauge,
    OpTensor,
    PolyTensor,
    as_poly_tensor,
    closed_tensor,
    compatibility,
    coords,
    dirac_reduce,
    gauge_normalize,
    jacobiator,
    oracle_match,
    pushforward_check,
    random_fields,
    shift_field,
    toda_dirac_vs_ftv,
)
from polypoisson.exchange_algebra import BracketSpec, Polygon, group_act, random_polygon, wronskian
from polypoisson.lattice_ops import DPoly, PerSeq, kernel_from_dpoly, phi_special, random_odd_kernel

F = Fraction


def mu_rho_one_polygon():
    # the recursion V'' = V' - V with a period-5 fundamental domain
    V = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1))
    M = ((1, -1), (1, 0))
    return Polygon(2, 5, V, M)


def test_coords_mu_rho_one():
    f = coords(mu_rho_one_polygon())
    assert f.by_name("mu").values == (F(1),) * 5
    assert f.by_name("rho").values == (F(1),) * 5


def test_coords_order3_cycle():
    V = ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 0, 0))
    M = ((0, 1, 0), (0, 0, 1), (1, 0, 0))
    f = coords(Polygon(3, 4, V, M))
    assert f.by_name("a").values == (F(0),) * 4
    assert f.by_name("b").values == (F(0),) * 4
    assert f.by_name("rho").values == (F(1),) * 4


def test_coords_projective_invariance():
    rng = Random(0)
    for nu in (2, 3):
        W = random_polygon(nu, 5, rng)
        g = None
        while g is None or linalg.det(g) != 1:
            g = [[F(rng.randint(-3, 3)) for _ in range(nu)] for _ in range(nu)]
            d = linalg.det(g)
            if d == 0:
                g = None
                continue
            g[-1] = [x / d for x in g[-1]]
        W2 = group_act(PerSeq.constant(5, 1), g, W)
        f1, f2 = coords(W), coords(W2)
        for k in range(nu):
            assert f1.a[k].values == f2.a[k].values


def test_toda_tensor_tables():
    N = 5
    toda = closed_tensor("toda", N)
    pt = random_fields(("mu", "rho"), N, Random(1))
    mu, rho = pt["mu"], pt["rho"]
    mat = toda.eval_matrix(pt)
    for m in range(N):
        for n in range(N):
            mumu = (rho[n] if (m - n + 1) % N == 0 else 0) - (rho[m] if (m - n - 1) % N == 0 else 0)
            assert mat[m][n] == mumu
            murho = ((1 if (m - n + 1) % N == 0 else 0) - (1 if (m - n) % N == 0 else 0)) * mu[m] * rho[n]
            assert mat[m][N + n] == murho
            rhorho = ((1 if (m - n + 1) % N == 0 else 0) - (1 if (m - n - 1) % N == 0 else 0)) * rho[m] * rho[n]
            assert mat[N + m][N + n] == rhorho


def test_murho_with_special_phi_is_twice_toda():
    N = 5
    murho = closed_tensor("murho", N, phi=phi_special(2, 1, N))
    toda = as_poly_tensor(closed_tensor("toda", N))
    pt = random_fields(("mu", "rho"), N, Random(2))
    lhs = murho.eval_matrix(pt)
    rhs = linalg.mat_scale(toda.eval_matrix(pt), 2)
    assert linalg.max_abs(linalg.mat_sub(lhs, rhs)) == 0


def test_optensor_to_poly_matches_eval():
    N = 5
    rng = Random(3)
    for name, fields in (("toda", ("mu", "rho")), ("P1", ("a", "b", "rho")), ("P0", ("a", "b")), ("ftv_u", ("u",))):
        T = closed_tensor(name, N)
        pt = random_fields(fields, N, rng)
        direct = T.eval_matrix(pt)
        via_poly = T.to_poly().eval_matrix(pt)
        assert linalg.max_abs(linalg.mat_sub(direct, via_poly)) == 0


def test_ftv_S_rejects_to_poly():
    with pytest.raises(ValueError):
        closed_tensor("ftv_S", 5).to_poly()


def test_closed_tensor_singular_operator_period():
    from polypoisson.lattice_ops import SingularOperator

    with pytest.raises(SingularOperator):
        closed_tensor("ftv_u", 4)  # (1+D) is singular on even periods
    with pytest.raises(SingularOperator):
        closed_tensor("P0", 6)  # (1+D+D^2) is singular when 3 | N


def test_ftv_u_at_zero_field_is_shift_difference():
    N = 5
    T = closed_tensor("ftv_u", N)
    mat = T.eval_entry(0, 0, {"u": PerSeq.constant(N, 0)})
    expect = kernel_from_dpoly(DPoly({1: 1, -1: -1}), N).matrix()
    assert linalg.max_abs(linalg.mat_sub(mat, expect)) == 0


def test_oracle_matches():
    rng = Random(4)
    N = 5
    W2 = random_polygon(2, N, rng)
    assert oracle_match(BracketSpec.standard(2, N, random_odd_kernel(N, rng)), W2, "murho") == 0
    assert oracle_match(BracketSpec.standard(2, N, phi_special(2, 1, N)), W2, "toda") == 0
    W3 = random_polygon(3, N, rng)
    assert oracle_match(BracketSpec.standard(3, N, random_odd_kernel(N, rng)), W3, "abrho") == 0
    assert oracle_match(BracketSpec.standard(3, N, phi_special(3, 2, N)), W3, "P1") == 0
    assert oracle_match(BracketSpec.standard(3, N, phi_special(3, 1, N)), W3, "P2") == 0
    assert oracle_match(BracketSpec.standard(3, N, phi_special(3, 0, N)), W3, "P0") == 0


def test_rho_is_casimir_for_phi0():
    # every Hamiltonian vector field of the phi^(0) bracket annihilates rho
    N = 5
    murho0 = closed_tensor("murho", N, phi=phi_special(2, 0, N))
    pt = random_fields(("mu", "rho"), N, Random(5))
    mat = murho0.eval_matrix(pt)
    for m in range(N):
        assert all(mat[N + m][j] == 0 for j in range(2 * N))


def test_gauge_normalize_constant_wronskian():
    rng = Random(6)
    W = random_polygon(2, 5, rng)
    Wn = gauge_normalize(W)
    w = wronskian(Wn)
    assert all(w[m] == w[0] for m in range(5))
    # already-normalized polygons come back unchanged
    Wnn = gauge_normalize(Wn)
    assert Wnn.V == Wn.V


def test_gauge_normalize_beta_ratio():
    rng = Random(7)
    W = random_polygon(2, 5, rng)
    # beta must have unit product around the step orbit for an exact gauge
    vals = [F(rng.randint(1, 4), rng.randint(1, 3)) for _ in range(4)]
    prod = F(1)
    for v in vals:
        prod *= v
    beta = PerSeq(5, tuple(vals + [1 / prod]))
    Wn = gauge_normalize(W, beta)
    w = wronskian(Wn)
    for m in range(5):
        assert w[m + 1] == beta[m] * w[m]


def test_gauge_normalize_even_period_not_unique():
    W = random_polygon(2, 4, Random(8))
    with pytest.raises(NonUniqueGauge):
        gauge_normalize(W)


def test_gauge_normalize_inconsistent_beta():
    W = random_polygon(2, 5, Random(9))
    beta = PerSeq.constant(5, 2)  # product 32 != 1
    with pytest.raises(GaugeInconsistent):
        gauge_normalize(W, beta)


def test_dirac_skew_scalar_example():
    # x scalar against a nonsingular 2x2 constraint block reduces to zero
    c = F(3)
    b1, b2 = F(2), F(-5)
    P = [
        [F(0), b1, b2],
        [-b1, F(0), c],
        [-b2, -c, F(0)],
    ]
    red = dirac_reduce(P, [1, 2])
    assert red == [[0]]


def test_dirac_toda_period3_is_zero_matrix():
    N = 3
    toda = closed_tensor("toda", N)
    pt = {"mu": PerSeq.constant(N, 1), "rho": PerSeq.constant(N, 1)}
    full = toda.eval_matrix(pt)
    red = dirac_reduce(full, [N + m for m in range(N)])
    assert linalg.max_abs(red) == 0
    ftv = closed_tensor("ftv_u", N).eval_entry(0, 0, {"u": PerSeq.constant(N, 1)})
    assert linalg.max_abs(ftv) == 0


def test_dirac_toda_matches_ftv_random():
    rng = Random(10)
    for N in (5, 7):
        u = random_fields(("u",), N, rng)["u"]
        assert toda_dirac_vs_ftv(N, u, PerSeq.constant(N, 1)) == 0
        beta = random_fields(("beta",), N, rng)["beta"]
        assert toda_dirac_vs_ftv(N, u, beta) == 0


def test_dirac_rejects_unreducible_block():
    # a singular constraint block whose nullspace couples to the free part
    P = [
        [F(0), F(1), F(0)],
        [F(-1), F(0), F(0)],
        [F(0), F(0), F(0)],
    ]
    with pytest.raises(ConstraintNotSecondClass):
        dirac_reduce(P, [1, 2])


def test_normalized_fields_round_trip():
    from polypoisson.coord_reduction import normalized_fields

    rng = Random(17)
    W = random_polygon(2, 5, rng)
    u, S = normalized_fields(W)
    # after normalization the recursion is V'' = u V' - V, so u is the mu of
    # the gauge-fixed polygon and S is the consecutive product
    Wn = gauge_normalize(W)
    assert u.values == coords(Wn).by_name("mu").values
    for m in range(5):
        assert S[m] == u[m] * u[m + 1]


def test_pushforward_examples():
    assert pushforward_check(PerSeq.constant(5, 1)) == 0
    rng = Random(11)
    for N in (5, 7):
        u = random_fields(("u",), N, rng)["u"]
        assert pushforward_check(u) == 0
    with pytest.raises(ValueError):
        pushforward_check(PerSeq.constant(4, 1))


def test_jacobiator_zero_and_negative_control():
    N = 5
    rng = Random(12)
    toda = as_poly_tensor(closed_tensor("toda", N))
    pt = random_fields(("mu", "rho"), N, rng)
    assert jacobiator(toda, pt) == 0
    # deleting one term must break the Jacobi identity
    broken = PolyTensor(toda.field_names, N, toda.bracket_scale)
    broken.entries = dict(toda.entries)
    key = (0, 0, 1, 1)
    assert key in broken.entries
    del broken.entries[key]
    assert jacobiator(broken, pt) != 0


def test_compatibility_self_and_pair():
    N = 5
    rng = Random(13)
    P1 = closed_tensor("P1", N)
    P2 = closed_tensor("P2", N)
    pts = [random_fields(("a", "b", "rho"), N, rng) for _ in range(2)]
    assert compatibility(P1, P1, pts) == 0
    assert compatibility(P1, P2, pts) == 0


def test_shift_field_linear_direction():
    N = 5
    toda = as_poly_tensor(closed_tensor("toda", N))
    pt = random_fields(("mu", "rho"), N, Random(14))
    shifted, had_quad = shift_field(toda, 0, F(3, 2))
    assert not had_quad
    # shifting mu by lambda only changes entries through their mu-dependence
    moved = {"mu": PerSeq(N, tuple(v + F(3, 2) for v in pt["mu"].values)), "rho": pt["rho"]}
    assert shifted.eval_matrix(pt) == toda.eval_matrix(moved)
    _, had_quad = shift_field(as_poly_tensor(closed_tensor("ftv_u", N)), 0, F(1))
    assert had_quad


def test_op_tensor_json_round_trip():
    N = 5
    rng = Random(16)
    for name, fields in (("toda", ("mu", "rho")), ("ftv_S", ("S",)), ("ftv_u", ("u",))):
        T = closed_tensor(name, N)
        doc = T.to_json()
        assert doc["form"] == "op"
        back = OpTensor.from_json(doc)
        pt = random_fields(fields, N, rng)
        assert back.eval_matrix(pt) == T.eval_matrix(pt)


def test_poly_tensor_json_round_trip():
    N = 5
    toda = as_poly_tensor(closed_tensor("toda", N))
    back = PolyTensor.from_json(toda.to_json())
    pt = random_fields(("mu", "rho"), N, Random(15))
    assert back.eval_matrix(pt) == toda.eval_matrix(pt)
    assert back.bracket_scale == toda.bracket_scale


def test_fields_aliases():
    f = Fields(3, 4, (PerSeq.constant(4, 1), PerSeq.constant(4, 2), PerSeq.constant(4, 3)))
    assert f.by_name("rho").values == f.by_name("a0").values
    assert f.by_name("b")[0] == 2 and f.by_name("a")[0] == 3
    with pytest.raises(KeyError):
        f.by_name("mu")
