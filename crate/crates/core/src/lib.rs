//! Integer programs on a simulated multi-level quantum system, with
//! classical baselines.
//!
//! A [`Problem`] is parsed from text, encoded as level manifolds and per
//! constraint coupling templates, and solved by optimizing piecewise-constant
//! coupling protocols whose populations decode to integer assignments. Brute
//! force, an exact simplex relaxation and branch & bound serve as references.

pub mod bnb;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod encoding;
pub mod instances;
pub mod model;
pub mod objective;
pub mod optim;
pub mod parser;
pub mod relaxation;

pub use bnb::{solve_bnb, BnbConfig, BnbNode, BnbResult, BnbStatus, SearchOrder};
pub use config::RunConfig;
pub use control::{optimize_protocol, ControlConfig, OptimizationReport};
pub use dynamics::{InitialState, ParameterBounds, ProtocolParams, StateVector, Trajectory};
pub use encoding::{build_level_scheme, build_templates, CouplingPolicy, CouplingSlot, HamiltonianTemplate, LevelScheme};
pub use model::{brute_force_optimum, BruteForce, Constraint, Domain, Metrics, Polynomial, Problem, Rational, Sense};
pub use objective::{decode, objective_value, DecodedSeries, ObjectiveReport};
pub use parser::{format_problem, parse_problem, ParseError};
pub use relaxation::{relaxed_value, solve_lp_relaxation, RelaxedValue};
