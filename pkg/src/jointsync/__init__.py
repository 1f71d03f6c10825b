"""Joint clock synchronization and second-order ranging from two-way timestamps."""
from .ccrb import CrbResult, ccrb, ccrb_eta, ccrb_theta, jacobian_theta_to_eta, nullspace_basis
from .errors import (
    ConnectivityError,
    DomainError,
    IdentifiabilityError,
    NumericalError,
    SingularSystemError,
    UnderdeterminedError,
)
from .estimators import (
    ConstraintSet,
    Estimate,
    GlobalSystem,
    PairSystem,
    build_constraints,
    build_global_system,
    build_pair_system,
    eegls_solve,
    eepls_network,
    eepls_solve,
)
from .exchange import (
    ExchangeLog,
    NoiseSpec,
    PairLog,
    Scenario,
    Schedule,
    default_schedule,
    generate_pair_log,
    sample_scenario,
    simulate_network,
)
from .model import (
    SPEED_OF_LIGHT,
    CalibParams,
    ClockParams,
    DerivedRange,
    RangePoly,
    all_pairs,
    calib_from_clock,
    clock_from_calib,
    delay_global,
    delay_local,
    eta_from_theta,
    pair_index,
    theta_from_eta,
)

__version__ = "0.1.0"
