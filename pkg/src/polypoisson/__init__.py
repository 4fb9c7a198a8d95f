"""Exact Poisson structures on twisted polygons and their reductions.

The package constructs the odd-kernel family of quadratic brackets on twisted
polygons over the rationals, reduces them to the quotient field coordinates,
derives the named closed-form tensors (quadratic Toda, lattice Virasoro and
its fixed-sequence generalisation, extended-Toda pair), and verifies every
structural identity exactly: no floating point outside the trajectory
integrator.
"""

from .linalg import Rational, rat, rat_str
from .lattice_ops import (
    DPoly,
    Kernel,
    NoSolution,
    OddKernel,
    PerSeq,
    SignWindow,
    SingularOperator,
    convolve_apply,
    invert,
    kernel_from_dpoly,
    phi_special,
    solve_phi,
)
from .exchange_algebra import (
    BracketSpec,
    DegeneratePolygon,
    Polygon,
    ProjPolygon,
    bracket_blocks,
    chain_bracket,
    default_rc,
    group_act,
    projective_action,
    projective_bracket,
    random_polygon,
    verify_structure,
    verify_ybe,
    wronskian,
)
from .coord_reduction import (
    ConstraintNotSecondClass,
    Fields,
    GaugeInconsistent,
    NonUniqueGauge,
    OpTensor,
    PolyTensor,
    closed_tensor,
    compatibility,
    coords,
    dirac_reduce,
    gauge_normalize,
    jacobiator,
    normalized_fields,
    oracle_match,
    pushforward_check,
    shift_field,
    toda_dirac_vs_ftv,
)
from .gen_nu import HatKernels, TheoremReport, casimir_coeffs, check_theorem, oppbs_hats, quad_coeff
from .dynamics import (
    LinearityViolated,
    Observable,
    TransferMatrix,
    commute_check,
    det_transfer,
    gf_check,
    ham_vf,
    integrate,
    lie_deform,
    lifted_flow_residual,
    lifted_vf,
    sum_field,
    trace_transfer,
    trajectory_csv,
    transfer_invariants,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
