//! Small reference instances shipped with the crate.

use crate::format::parse_instance;
use crate::model::Instance;
use crate::num::Rational;

/// Five unit packets on a 2-source, 3-destination hybrid network with one
/// delay-4 fixed link.
pub const FIG1: &str = include_str!("../fixtures/fig1.inst");
/// Three weighted packets contending on a two-transmitter network.
pub const FIG2_PI: &str = include_str!("../fixtures/fig2_pi.inst");
/// [`FIG2_PI`] plus a fourth, heaviest packet that changes the matching.
pub const FIG2_PI_PRIME: &str = include_str!("../fixtures/fig2_pi_prime.inst");

pub fn fig1() -> Instance<Rational> {
    parse_instance(FIG1).expect("fig1 fixture parses")
}

pub fn fig2_pi() -> Instance<Rational> {
    parse_instance(FIG2_PI).expect("fig2 fixture parses")
}

pub fn fig2_pi_prime() -> Instance<Rational> {
    parse_instance(FIG2_PI_PRIME).expect("fig2' fixture parses")
}
