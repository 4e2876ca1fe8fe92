//! The four reference instances used throughout the tests and benchmarks.

use crate::model::Problem;
use crate::parser::parse_problem;

pub const P1_TEXT: &str = include_str!("../../../problems/p1.ip");
pub const P2_TEXT: &str = include_str!("../../../problems/p2.ip");
pub const P3_TEXT: &str = include_str!("../../../problems/p3.ip");
pub const P4_TEXT: &str = include_str!("../../../problems/p4.ip");

/// Linear, 3 variables, 2 constraints.
pub fn p1() -> Problem {
    parse_problem(P1_TEXT).expect("p1.ip parses")
}

/// Nonlinear cost and constraints, 3 variables.
pub fn p2() -> Problem {
    parse_problem(P2_TEXT).expect("p2.ip parses")
}

/// Linear, 8 variables, 4 constraints.
pub fn p3() -> Problem {
    parse_problem(P3_TEXT).expect("p3.ip parses")
}

/// Linear with a 93.75% relaxation gap.
pub fn p4() -> Problem {
    parse_problem(P4_TEXT).expect("p4.ip parses")
}
