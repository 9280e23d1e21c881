"""Hash-prefix client puzzles for stateless, puzzle-gated connection setup."""

from .game import (EquilibriumRates, GridSearchResult, Recommendation, brute_force_optimal,
                   factor_difficulty, finite_n_optimal, max_difficulty_bound,
                   nash_difficulty_asymptotic, provider_reduced_objective, recommend,
                   user_equilibrium, utility_eval)
from .handshake import HandshakeEngine, Mode, ServerConfig
from .puzzle import (Challenge, FlowTuple, HashCounter, PuzzleError, PuzzleParams, VerifyResult,
                     derive_challenge, generate_secret, solve, verify)
from .scenario import ScenarioConfig, load_scenario, save_scenario
from .simulator import MetricsLog, export_metrics, run_scenario
from .wire import (ChallengeOption, OptionError, SolutionOption, decode_challenge,
                   decode_solution, encode_challenge, encode_solution)

__version__ = "0.1.0"
