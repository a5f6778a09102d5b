"""Monte Carlo laboratory for ballistic lattice walks in i.i.d. random
environments: regeneration slabs, backward-path gluing, environment
coupling, and the overlap/decay estimates behind non-intersection
certificates."""

from .env_model import (
    Environment,
    SiteKernel,
    SiteLaw,
    env_at,
    make_kernel,
    make_law,
    mirror_law,
    sample_site,
)
from .errors import (
    AcceptanceTooLow,
    BallisticityDoubtful,
    ConfigError,
    EllipticityViolated,
    HorizonTooLarge,
    InsufficientMass,
    NegativeEntry,
    NotNormalized,
    OutsideCoveredRegion,
    RwreError,
    TailNotEstimable,
    TilingViolation,
)
from .regeneration import (
    RegenRecord,
    Slab,
    extract_slabs,
    find_regenerations,
    load_slab_records,
    sample_slab_stream,
    save_slab_records,
)
from .backward_path import (
    GluedWorld,
    couple,
    glue_slabs,
    glued_env_at,
    walk_on_glued,
)
from .stats import (
    DecayFit,
    OverlapReport,
    certify_nonintersection,
    coupling_tests,
    displacement_profile,
    hitting_profile,
    intersection_expectation,
    slab_iid_test,
    transience_profile,
    velocity_estimate,
)
from .walker import (
    ConditionEvent,
    Trajectory,
    enumerate_exact,
    sample_conditioned,
    simulate_annealed,
    simulate_quenched,
)

__version__ = "0.1.0"
