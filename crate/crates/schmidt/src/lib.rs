//! Schmidt games and their variants on the circle and the 2-torus.
//!
//! The crate implements rule-checking engines for Schmidt, absolute, potential
//! and modified Schmidt games, Alice's winning strategies for the target sets
//! `E(f, y)` of expanding circle maps and Anosov torus maps, and verifiers that
//! replay transcripts and check orbit avoidance.
//!
//! All coordinates are arbitrary precision [`rug::Float`]s. The games shrink
//! balls geometrically for hundreds of rounds, so `f64` would run out of bits
//! long before the strategies stop being interesting.

pub mod dynamics;
pub mod error;
pub mod games;
pub mod geometry;
pub mod strategies;
pub mod tilings;
pub mod verification;

pub use error::{Error, Result, RuleViolation};
pub use geometry::{ball_contains_ball, ball_intersects_ball, torus_distance, MetricBall, TorusPoint};
