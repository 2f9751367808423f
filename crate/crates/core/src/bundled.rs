//! Scenario files shipped with the crate.

use crate::scenario::{parse_scenario, Scenario, ScenarioError};

pub const SIMULTANEOUS: &str = include_str!("../scenarios/simultaneous.scn");
pub const ALTERNATING: &str = include_str!("../scenarios/alternating.scn");
pub const TWO_THEN_ONE: &str = include_str!("../scenarios/two_then_one.scn");
pub const ONE_THEN_BOTH: &str = include_str!("../scenarios/one_then_both.scn");
pub const BOTH_BOTH_ONE: &str = include_str!("../scenarios/both_both_one.scn");
pub const CONSTANT_YIELD: &str = include_str!("../scenarios/constant_yield.scn");
pub const IDLE: &str = include_str!("../scenarios/idle.scn");

/// The worked two-party schedules, in order of increasing complexity.
pub const WORKED: [(&str, &str); 5] = [
    ("simultaneous.scn", SIMULTANEOUS),
    ("alternating.scn", ALTERNATING),
    ("two_then_one.scn", TWO_THEN_ONE),
    ("one_then_both.scn", ONE_THEN_BOTH),
    ("both_both_one.scn", BOTH_BOTH_ONE),
];

pub const ALL: [(&str, &str); 7] = [
    ("simultaneous.scn", SIMULTANEOUS),
    ("alternating.scn", ALTERNATING),
    ("two_then_one.scn", TWO_THEN_ONE),
    ("one_then_both.scn", ONE_THEN_BOTH),
    ("both_both_one.scn", BOTH_BOTH_ONE),
    ("constant_yield.scn", CONSTANT_YIELD),
    ("idle.scn", IDLE),
];

pub fn load(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    ALL.iter()
        .find(|(n, _)| *n == name || n.trim_end_matches(".scn") == name)
        .map(|(n, text)| parse_scenario(text, n))
}
