"""Interval observers with guaranteed privacy and certified H-infinity accuracy."""

__version__ = "0.1.0"

from .errors import (DimensionError, GpobsError, InstabilityError, IntervalError, NoiseBoundError, ScenarioError,
                     SingularMatrixError, SymmetryError, SynthesisError)
from .plant import AgentBlock, IntervalVector, PlantModel, PrivacyBudget, assemble_global, market_agents, market_gain
from .scenario import Scenario, bundled_path, dump_scenario, load_gain, load_scenario, scenario_from_text
from .observer import Framer, FramerTrajectory, ObserverDesign, framer_step, mechanism, simulate
from .hinf import (build_error_system, certify, check_privacy_lmi, check_stability_lmi, eta_hinf, find_certificate,
                   gamma_direct, privacy_constraint_lhs)
from .synthesis import (SynthesisOptions, SynthesisProblem, SynthesisResult, load_fixture_design, synth_nonprivate,
                        synth_private)
from .privacy import AdjacentPair, AuditReport, audit_guaranteed, dp_baseline, gen_adjacent
