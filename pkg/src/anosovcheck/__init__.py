"""Numerical certification of Anosov-type properties in SL(n,R).

The toolkit realizes the chamber/flag geometry of the symmetric space of
SL(n,R) and uses it to classify matrix-generated free subgroups at desk
scale: regularity, contraction, conicality, expansion, Morse behavior
and uniform/non-uniform Anosov verdicts, all as margin-carrying reports.
"""

from .chamber import (
    FaceType,
    ThetaSpec,
    face_boundary_distance,
    iota_face,
    iota_vector,
    project_to_face_sector,
    sort_to_chamber,
    theta_membership,
)
from .dynamics import classify_sequence, conical_check, detect_contraction, flag_limit
from .errors import (
    BudgetExceeded,
    IllConditioned,
    PingPongFailed,
    TransversalityTooSmall,
    VanishingGap,
)
from .flags import (
    Flag,
    act_on_flag,
    antipodality_margin,
    attractive_flag,
    expansion_cone_correlate,
    expansion_factor,
    flag_distance,
    transversality_margin,
)
from .reports import PropertyReport, SequenceReport
from .subgroup import (
    FreeGroupPresentation,
    ReducedWord,
    anosov_check,
    enumerate_geodesics,
    limit_report,
    morse_check,
    schottky_build,
    symmetric_square,
    uru_check,
)
from .symmspace import (
    DiamondRef,
    GroupElement,
    ParallelSetRef,
    Point,
    WeylConeRef,
    cartan_vector,
    cone_query,
    delta_projection,
    diamond_query,
    finsler_verify,
    make_diamond,
    make_parallel_set,
    parallel_set_distance,
    relative_flag,
    riemannian_distance,
    taumod_distance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
