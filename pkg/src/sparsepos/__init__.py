"""Positivity certificates for block-sparse polynomials.

Exact rational polynomials (:mod:`~sparsepos.poly`), block structure and the
running intersection property (:mod:`~sparsepos.sparsity`), certified
Bernstein bounds on boxes (:mod:`~sparsepos.positivity`), splitting a
positive block sum into positive block pieces (:mod:`~sparsepos.split`),
box certificates with constraint multipliers (:mod:`~sparsepos.certificate`)
and sum-of-squares module membership (:mod:`~sparsepos.sos`).
"""

from .certificate import (
    Certificate,
    FindKError,
    MultiplierTerm,
    ProblemSpec,
    Remainder,
    VerificationReport,
    build_fk,
    certify,
    choose_lambda,
    find_k,
    multiplier,
    verify_certificate,
)
from .poly import Box, DimensionError, Monomial, Polynomial, fraction_str, rationalize, to_fraction
from .positivity import (
    GridMin,
    PositivityReport,
    bernstein_coefficients,
    bernstein_lower_bound,
    bernstein_upper_bound,
    certify_positive,
    grid_min,
    lipschitz_bounds,
)
from .sdp import SDPError, SDPInfeasible, SDPResult, solve_sdp
from .sos import (
    BallCertificate,
    BlockMembership,
    ModuleMembership,
    SOSDecomposition,
    SOSError,
    SOSInfeasible,
    cassier_certificate,
    sos_decompose,
    sparse_putinar,
)
from .sparsity import AssignmentError, RipCheck, SparsityPattern, assign_summands, check_rip, extract_blocks, find_rip_order
from .split import (
    ApproximationError,
    SplitConfig,
    SplitError,
    SplitResult,
    Transfer,
    approx_poly,
    lower_envelope,
    split_many,
    split_two,
)

__version__ = "0.1.0"
