//! Points and closed balls on the flat torus `T^d = R^d / Z^d`, `d ∈ {1, 2}`.

use rug::float::Round;
use rug::ops::{AddAssignRound, Pow};
use rug::Float;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance for boundary comparisons. Ties count as contained or
/// intersecting.
pub const TOL: f64 = 1e-12;

/// Precision used when nothing larger is requested.
pub const DEFAULT_PREC: u32 = 128;

/// `Float` from an `f64` at the given precision.
pub fn real(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

/// Reduces `x` into `[0, 1)`.
pub fn frac(x: &Float) -> Float {
    let mut y = Float::with_val(x.prec(), x.floor_ref());
    y = Float::with_val(x.prec(), x - &y);
    if y >= 1 {
        y -= 1;
    }
    if y < 0 {
        y += 1;
        if y >= 1 {
            y = Float::with_val(x.prec(), 0);
        }
    }
    y
}

/// `a - b` reduced into `[-1/2, 1/2)`.
pub fn wrap_diff(a: &Float, b: &Float) -> Float {
    let prec = a.prec().max(b.prec());
    let d = Float::with_val(prec, a - b);
    let mut shifted = d.clone();
    shifted += 0.5;
    let n = shifted.floor();
    Float::with_val(prec, &d - &n)
}

/// Exact decimal rendering that parses back to the same value at `prec`.
pub fn float_to_string(x: &Float) -> String {
    x.to_string_radix(10, None)
}

pub fn float_from_str(s: &str, prec: u32) -> Result<Float> {
    Float::parse(s)
        .map(|p| Float::with_val(prec, p))
        .map_err(|e| Error::InvalidArgument(format!("bad decimal {s:?}: {e}")))
}

/// A point of `T^d` with every coordinate normalized into `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: Vec<Float>,
}

impl TorusPoint {
    pub fn new(coords: Vec<Float>) -> Self {
        TorusPoint { coords: coords.iter().map(frac).collect() }
    }

    pub fn from_f64(coords: &[f64], prec: u32) -> Self {
        Self::new(coords.iter().map(|&c| real(prec, c)).collect())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn prec(&self) -> u32 {
        self.coords.iter().map(|c| c.prec()).max().unwrap_or(DEFAULT_PREC)
    }

    pub fn coords(&self) -> &[Float] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &Float {
        &self.coords[i]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.to_f64()).collect()
    }

    /// Same point carried at a different precision.
    pub fn with_prec(&self, prec: u32) -> Self {
        TorusPoint { coords: self.coords.iter().map(|c| Float::with_val(prec, c)).collect() }
    }

    /// `self + v` (mod 1), where `v` is a displacement.
    pub fn translate(&self, v: &[Float]) -> Self {
        let coords = self
            .coords
            .iter()
            .zip(v)
            .map(|(c, d)| Float::with_val(c.prec().max(d.prec()), c + d))
            .collect();
        Self::new(coords)
    }

    pub fn translate_f64(&self, v: &[f64]) -> Self {
        let coords = self
            .coords
            .iter()
            .zip(v)
            .map(|(c, &d)| Float::with_val(c.prec(), c + d))
            .collect();
        Self::new(coords)
    }

    /// Shortest displacement `self - other` with components in `[-1/2, 1/2)`.
    pub fn diff(&self, other: &TorusPoint) -> Vec<Float> {
        self.coords.iter().zip(&other.coords).map(|(a, b)| wrap_diff(a, b)).collect()
    }

    /// Idempotent; points are always stored normalized.
    pub fn normalize(&self) -> Self {
        Self::new(self.coords.clone())
    }
}

/// Quotient distance on `T^d`.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint) -> Result<Float> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(distance_unchecked(x, y))
}

pub(crate) fn distance_unchecked(x: &TorusPoint, y: &TorusPoint) -> Float {
    let prec = x.prec().max(y.prec());
    let mut acc = Float::with_val(prec, 0);
    for d in x.diff(y) {
        acc.add_assign_round(d.pow(2u32), Round::Nearest);
    }
    acc.sqrt()
}

/// A closed ball `B(center, radius)` on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBall {
    pub center: TorusPoint,
    pub radius: Float,
}

impl MetricBall {
    pub fn new(center: TorusPoint, radius: Float) -> Result<Self> {
        if !(radius > 0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(MetricBall { center, radius })
    }

    pub fn from_f64(center: &[f64], radius: f64, prec: u32) -> Result<Self> {
        Self::new(TorusPoint::from_f64(center, prec), real(prec, radius))
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn prec(&self) -> u32 {
        self.center.prec().max(self.radius.prec())
    }

    pub fn contains_point(&self, p: &TorusPoint) -> bool {
        if p.dim() != self.dim() {
            return false;
        }
        let d = distance_unchecked(&self.center, p);
        let slack = Float::with_val(self.prec(), &self.radius * (1.0 + TOL));
        d <= slack
    }
}

/// Closed-ball containment `inner ⊆ outer`. Exact below the injectivity radius.
pub fn ball_contains_ball(outer: &MetricBall, inner: &MetricBall) -> bool {
    if outer.dim() != inner.dim() {
        return false;
    }
    let prec = outer.prec().max(inner.prec());
    let d = distance_unchecked(&outer.center, &inner.center);
    let room = Float::with_val(prec, &outer.radius - &inner.radius);
    let slack = Float::with_val(prec, &outer.radius * TOL);
    d <= room + slack
}

/// Closed balls meet (touching counts).
pub fn ball_intersects_ball(a: &MetricBall, b: &MetricBall) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let prec = a.prec().max(b.prec());
    let d = distance_unchecked(&a.center, &b.center);
    let sum = Float::with_val(prec, &a.radius + &b.radius);
    let slack = Float::with_val(prec, &sum * TOL);
    d <= sum + slack
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    prec: u32,
    coords: Vec<String>,
}

impl Serialize for TorusPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PointRepr { prec: self.prec(), coords: self.coords.iter().map(float_to_string).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PointRepr::deserialize(d)?;
        let coords = r
            .coords
            .iter()
            .map(|c| float_from_str(c, r.prec))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(TorusPoint::new(coords))
    }
}

#[derive(Serialize, Deserialize)]
struct BallRepr {
    center: TorusPoint,
    radius: String,
}

impl Serialize for MetricBall {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BallRepr { center: self.center.clone(), radius: float_to_string(&self.radius) }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricBall {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = BallRepr::deserialize(d)?;
        let radius = float_from_str(&r.radius, r.center.prec()).map_err(D::Error::custom)?;
        MetricBall::new(r.center, radius).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> TorusPoint {
        TorusPoint::from_f64(c, DEFAULT_PREC)
    }

    fn b(c: &[f64], r: f64) -> MetricBall {
        MetricBall::from_f64(c, r, DEFAULT_PREC).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = torus_distance(&p(&[0.1]), &p(&[0.9])).unwrap();
        assert!((d.to_f64() - 0.2).abs() < 1e-15);
        assert_eq!(torus_distance(&p(&[0.4, 0.2]), &p(&[0.4, 0.2])).unwrap(), 0);
        let d = torus_distance(&p(&[0.0, 0.0]), &p(&[0.5, 0.5])).unwrap();
        assert!((d.to_f64() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(torus_distance(&p(&[0.1]), &p(&[0.1, 0.2])).is_err());
    }

    #[test]
    fn containment_examples() {
        assert!(ball_contains_ball(&b(&[0.5], 0.3), &b(&[0.6], 0.1)));
        assert!(ball_contains_ball(&b(&[0.5], 0.1), &b(&[0.5], 0.1)));
        assert!(!ball_contains_ball(&b(&[0.5], 0.2), &b(&[0.6], 0.15)));
        assert!(!ball_contains_ball(&b(&[0.5], 0.1), &b(&[0.5], 0.2)));
    }

    #[test]
    fn intersection_examples() {
        assert!(!ball_intersects_ball(&b(&[0.0], 0.2), &b(&[0.5], 0.2)));
        assert!(ball_intersects_ball(&b(&[0.3], 0.01), &b(&[0.3], 0.2)));
        assert!(ball_intersects_ball(&b(&[0.1], 0.1), &b(&[0.4], 0.2)));
    }

    #[test]
    fn normalization() {
        let x = p(&[-0.25, 1.75]);
        assert_eq!(x.to_f64(), vec![0.75, 0.75]);
        assert_eq!(x.normalize(), x);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let x = TorusPoint::from_f64(&[0.3, 0.7], 300).translate(&[Float::with_val(300, 1e-80), Float::with_val(300, 0)]);
        let ball = MetricBall::new(x, Float::with_val(300, 3e-70)).unwrap();
        let s = serde_json::to_string(&ball).unwrap();
        let back: MetricBall = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ball);
    }
}
