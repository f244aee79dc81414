"""Spectral certificates for eventually monotone dynamical systems.

Pipeline: parse a vector field (dsl), refine its equilibrium and Jacobian
spectrum (ode, spectral), compute the dominant Koopman eigenfunction and its
gradient by Laplace averages (koopman), then evaluate eventual-monotonicity
certificates and synthesize candidate order cones (cones, certify).  A
linear sub-engine (linear) covers eventual positivity of matrices.
"""

from ._accel import USING_NUMBA
from .certify import (
    CertReport,
    certify_sem,
    empirical_order_probe,
    flow_direction_probe,
    isostable_comparability_scan,
    kamke_muller_check,
    synthesize_candidate_cone,
)
from .cones import (
    OrthantSignature,
    PolyhedralGenerated,
    TransformedLorentz,
    all_orthant_signatures,
    cone_from_json,
)
from .dsl import Dual, ParseError, VectorField, load_model_file
from .koopman import (
    EigenfunctionField,
    KoopmanSpec,
    eval_field_on_grid,
    eval_grad_s1,
    eval_s1,
    extract_isostables,
    make_koopman_spec,
)
from .linear import (
    EvPosReport,
    LorentzConeSpec,
    check_eventual_positivity,
    cone_alpha_membership,
    find_alpha_certificates,
    schur_reduce,
    similarity_positivize,
)
from .models import get_model, list_models
from .ode import (
    Trajectory,
    basin_probe,
    find_equilibrium,
    integrate,
    integrate_prolonged,
)
from .spectral import (
    DominanceReport,
    PFClass,
    SpectralDecomposition,
    check_dominance,
    classify_pf,
    decompose,
    matrix_exp,
)

__version__ = "0.1.0"
