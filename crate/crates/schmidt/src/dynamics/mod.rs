//! Concrete smooth maps of the circle and the 2-torus.
//!
//! Circle maps are handled through their lift `F: R → R` with `F(0) = 0` and
//! `F(x + 1) = F(x) + m`, so inverse branches become plain inverses of an
//! increasing function.

mod components;
mod distortion;
mod lattice;
mod splitting;

pub(crate) use components::lift_inverse_iter;
pub use components::{circle_components_range, preimage_components, preimage_components_capped, Hole, PreimageComponent, RectangleSpec, Window, DEPTH_CAP};
pub use distortion::{bowen_ball_contains, distortion_ratio, log_derivative_lipschitz, unstable_norm_product};
pub use lattice::{cat_eigenbasis, lattice_points_in_eigenbox};
pub use splitting::{holonomy_project, stable_direction, unstable_direction, Splitting};

use std::f64::consts::PI;

use rug::float::Constant;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{frac, TorusPoint};

/// A concrete map `f: T^d → T^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemConfig", into = "SystemConfig")]
pub enum SystemSpec {
    /// `x ↦ m x + δ sin(2πx) mod 1`.
    CircleExpanding { m: u32, delta: f64 },
    /// `z ↦ (a + bi) z mod Z²`.
    TorusConformal { a: i64, b: i64 },
    /// `x ↦ [[2,1],[1,1]] x mod 1`.
    CatMap,
    /// Cat map plus `δ (sin 2πx₁, 0)`.
    PerturbedCatMap { delta: f64 },
}

/// Flat config form: `{kind, m, delta, multiplier: [a, b]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<[i64; 2]>,
}

impl TryFrom<SystemConfig> for SystemSpec {
    type Error = Error;

    fn try_from(c: SystemConfig) -> Result<Self> {
        let delta = c.delta.unwrap_or(0.0);
        let sys = match c.kind.as_str() {
            "circle_expanding" => SystemSpec::CircleExpanding {
                m: c.m.ok_or_else(|| Error::InvalidSystem("circle_expanding needs m".into()))?,
                delta,
            },
            "doubling" => SystemSpec::CircleExpanding { m: 2, delta: 0.0 },
            "tripling" => SystemSpec::CircleExpanding { m: 3, delta: 0.0 },
            "torus_conformal" => {
                let [a, b] = c
                    .multiplier
                    .ok_or_else(|| Error::InvalidSystem("torus_conformal needs multiplier".into()))?;
                SystemSpec::TorusConformal { a, b }
            }
            "cat_map" => SystemSpec::CatMap,
            "perturbed_cat_map" => SystemSpec::PerturbedCatMap { delta },
            other => return Err(Error::InvalidSystem(format!("unknown kind {other:?}"))),
        };
        sys.validate()?;
        Ok(sys)
    }
}

impl From<SystemSpec> for SystemConfig {
    fn from(s: SystemSpec) -> Self {
        let mut c = SystemConfig { kind: String::new(), m: None, delta: None, multiplier: None };
        match s {
            SystemSpec::CircleExpanding { m, delta } => {
                c.kind = "circle_expanding".into();
                c.m = Some(m);
                c.delta = Some(delta);
            }
            SystemSpec::TorusConformal { a, b } => {
                c.kind = "torus_conformal".into();
                c.multiplier = Some([a, b]);
            }
            SystemSpec::CatMap => c.kind = "cat_map".into(),
            SystemSpec::PerturbedCatMap { delta } => {
                c.kind = "perturbed_cat_map".into();
                c.delta = Some(delta);
            }
        }
        c
    }
}

/// Uniform expansion data of a system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionBounds {
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda: Option<f64>,
}

pub(crate) fn two_pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi) * 2u32
}

impl SystemSpec {
    pub fn doubling() -> Self {
        SystemSpec::CircleExpanding { m: 2, delta: 0.0 }
    }

    pub fn tripling() -> Self {
        SystemSpec::CircleExpanding { m: 3, delta: 0.0 }
    }

    /// Parses a short name (`doubling`, `cat`, ...) or a `kind:param` form
    /// such as `circle:2:0.05`, `perturbed_cat:1e-3`, `conformal:1:1`.
    pub fn parse_short(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::InvalidSystem(format!("missing parameter in {s:?}")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidSystem(format!("{s:?}: {e}")))
        };
        let sys = match parts[0] {
            "doubling" => Self::doubling(),
            "tripling" => Self::tripling(),
            "cat" | "cat_map" => SystemSpec::CatMap,
            "perturbed_cat" | "perturbed_cat_map" => SystemSpec::PerturbedCatMap { delta: num(1)? },
            "circle" | "circle_expanding" => {
                SystemSpec::CircleExpanding { m: num(1)? as u32, delta: if parts.len() > 2 { num(2)? } else { 0.0 } }
            }
            "conformal" | "torus_conformal" => SystemSpec::TorusConformal { a: num(1)? as i64, b: num(2)? as i64 },
            other => return Err(Error::InvalidSystem(format!("unknown system {other:?}"))),
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SystemSpec::CircleExpanding { m, delta } => {
                if m < 2 || !(delta >= 0.0) || 2.0 * PI * delta >= (m - 1) as f64 {
                    return Err(Error::InvalidSystem(format!("need m ≥ 2 and 2πδ < m − 1 (m={m}, δ={delta})")));
                }
            }
            SystemSpec::TorusConformal { a, b } => {
                if a * a + b * b < 2 {
                    return Err(Error::InvalidSystem("need a² + b² ≥ 2".into()));
                }
            }
            SystemSpec::CatMap => {}
            SystemSpec::PerturbedCatMap { delta } => {
                if !(0.0..=1e-3).contains(&delta) {
                    return Err(Error::InvalidSystem(format!("need 0 ≤ δ ≤ 1e-3, got {delta}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::CircleExpanding { .. } => 1,
            _ => 2,
        }
    }

    pub fn is_expanding(&self) -> bool {
        matches!(self, SystemSpec::CircleExpanding { .. } | SystemSpec::TorusConformal { .. })
    }

    pub fn is_anosov(&self) -> bool {
        matches!(self, SystemSpec::CatMap | SystemSpec::PerturbedCatMap { .. })
    }

    /// Number of inverse branches (degree).
    pub fn degree(&self) -> u64 {
        match *self {
            SystemSpec::CircleExpanding { m, .. } => m as u64,
            SystemSpec::TorusConformal { a, b } => (a * a + b * b) as u64,
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            SystemSpec::CircleExpanding { m: 2, delta } if delta == 0.0 => "doubling".into(),
            SystemSpec::CircleExpanding { m: 3, delta } if delta == 0.0 => "tripling".into(),
            SystemSpec::CircleExpanding { m, delta } => format!("circle:{m}:{delta}"),
            SystemSpec::TorusConformal { a, b } => format!("conformal:{a}:{b}"),
            SystemSpec::CatMap => "cat".into(),
            SystemSpec::PerturbedCatMap { delta } => format!("perturbed_cat:{delta}"),
        }
    }

    /// Image of `x`, normalized into `[0,1)^d`, at the precision of `x`.
    pub fn apply(&self, x: &TorusPoint) -> TorusPoint {
        match *self {
            SystemSpec::CircleExpanding { .. } => TorusPoint::new(vec![self.lift(x.coord(0))]),
            _ => {
                let [u, v] = self.apply2(x.coord(0), x.coord(1));
                TorusPoint::new(vec![u, v])
            }
        }
    }

    /// `f^k(x)`.
    pub fn iterate(&self, x: &TorusPoint, k: u32) -> TorusPoint {
        let mut y = x.clone();
        for _ in 0..k {
            y = self.apply(&y);
        }
        y
    }

    /// Lift of a circle map: `F(x) = m x + δ sin(2πx)` on all of `R`.
    pub fn lift(&self, x: &Float) -> Float {
        let SystemSpec::CircleExpanding { m, delta } = *self else {
            panic!("lift is only defined for circle maps");
        };
        let prec = x.prec();
        let mut y = Float::with_val(prec, x * m);
        if delta != 0.0 {
            let s = Float::with_val(prec, x * two_pi(prec)).sin();
            y += s * delta;
        }
        y
    }

    /// `F^k` on the lift.
    pub fn lift_iter(&self, x: &Float, k: u32) -> Float {
        let mut y = x.clone();
        for _ in 0..k {
            y = self.lift(&y);
        }
        y
    }

    /// `F'(x)` for circle maps, from an `f64` approximation of `x`.
    pub fn circle_derivative(&self, x: f64) -> f64 {
        match *self {
            SystemSpec::CircleExpanding { m, delta } => m as f64 + 2.0 * PI * delta * (2.0 * PI * x).cos(),
            _ => panic!("circle_derivative on a torus map"),
        }
    }

    /// Inverse of the lift, `F^{-1}(s)`, solved by Newton's method.
    pub fn lift_inverse(&self, s: &Float) -> Float {
        let SystemSpec::CircleExpanding { m, delta } = *self else {
            panic!("lift_inverse is only defined for circle maps");
        };
        let prec = s.prec();
        let q = Float::with_val(prec, s / m).floor();
        let t = Float::with_val(prec, s - Float::with_val(prec, &q * m));
        if delta == 0.0 {
            return Float::with_val(prec, s / m);
        }
        // F(q + x) = m q + F(x); solve F(x) = t with x in [0, 1].
        let tf = t.to_f64();
        let mut xf = tf / m as f64;
        for _ in 0..60 {
            let fx = m as f64 * xf + delta * (2.0 * PI * xf).sin() - tf;
            let step = fx / self.circle_derivative(xf);
            xf -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        // Newton with doubling working precision
        let mut x = Float::with_val(prec, xf);
        let mut p = 53u32;
        while p < prec + 8 {
            p = (2 * p).min(prec + 8);
            let xp = Float::with_val(p, &x);
            let tp = Float::with_val(p, &t);
            let arg = Float::with_val(p, &xp * two_pi(p));
            let (sn, cs) = arg.sin_cos(Float::new(p));
            let fx = Float::with_val(p, &xp * m) + Float::with_val(p, &sn * delta) - &tp;
            let dfx = Float::with_val(p, &cs * (2.0 * PI * delta)) + m;
            x = Float::with_val(prec, xp - fx / dfx);
        }
        // one more step at full precision
        let fx = Float::with_val(prec, self.lift(&x) - &t);
        let step = Float::with_val(prec, &fx / self.circle_derivative(x.to_f64()));
        x -= &step;
        q + x
    }

    /// Torus maps on coordinates, reduced mod 1.
    fn apply2(&self, x: &Float, y: &Float) -> [Float; 2] {
        let prec = x.prec().max(y.prec());
        let (u, v) = match *self {
            SystemSpec::TorusConformal { a, b } => (
                Float::with_val(prec, x * a) - Float::with_val(prec, y * b),
                Float::with_val(prec, x * b) + Float::with_val(prec, y * a),
            ),
            SystemSpec::CatMap => (Float::with_val(prec, x * 2u32) + y, Float::with_val(prec, x + y)),
            SystemSpec::PerturbedCatMap { delta } => {
                let mut u = Float::with_val(prec, x * 2u32) + y;
                if delta != 0.0 {
                    u += Float::with_val(prec, x * two_pi(prec)).sin() * delta;
                }
                (u, Float::with_val(prec, x + y))
            }
            SystemSpec::CircleExpanding { .. } => unreachable!(),
        };
        [frac(&u), frac(&v)]
    }

    /// Inverse map for the invertible torus systems.
    pub fn inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let (u, v) = (p.coord(0), p.coord(1));
        let prec = p.prec();
        match *self {
            SystemSpec::CatMap => {
                let x = Float::with_val(prec, u - v);
                let y = Float::with_val(prec, v * 2u32) - u;
                Ok(TorusPoint::new(vec![x, y]))
            }
            SystemSpec::PerturbedCatMap { delta } => {
                // x + δ sin(2πx) = u − v (mod 1), then y = v − x.
                let t = frac(&Float::with_val(prec, u - v));
                let mut x = t.clone();
                if delta != 0.0 {
                    let tf = t.to_f64();
                    let mut xf = tf;
                    for _ in 0..60 {
                        let g = xf + delta * (2.0 * PI * xf).sin() - tf;
                        let step = g / (1.0 + 2.0 * PI * delta * (2.0 * PI * xf).cos());
                        xf -= step;
                        if step.abs() < 1e-17 {
                            break;
                        }
                    }
                    x = Float::with_val(prec, xf);
                    let target = Float::with_val(prec, 1) >> (prec as i32 - 6);
                    for _ in 0..50 {
                        let s = Float::with_val(prec, &x * two_pi(prec)).sin() * delta;
                        let g = Float::with_val(prec, &x + &s) - &t;
                        let xf = x.to_f64();
                        let step = Float::with_val(prec, &g / (1.0 + 2.0 * PI * delta * (2.0 * PI * xf).cos()));
                        x -= &step;
                        if g.abs() <= target {
                            break;
                        }
                    }
                }
                let y = Float::with_val(prec, v - &x);
                Ok(TorusPoint::new(vec![x, y]))
            }
            _ => Err(Error::Unsupported("inverse of a non-invertible map".into())),
        }
    }

    /// Jacobian at `x` (torus maps), row-major.
    pub fn jacobian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        match *self {
            SystemSpec::TorusConformal { a, b } => [[a as f64, -b as f64], [b as f64, a as f64]],
            SystemSpec::CatMap => [[2.0, 1.0], [1.0, 1.0]],
            SystemSpec::PerturbedCatMap { delta } => {
                [[2.0 + 2.0 * PI * delta * (2.0 * PI * x[0]).cos(), 1.0], [1.0, 1.0]]
            }
            SystemSpec::CircleExpanding { .. } => panic!("jacobian of a circle map"),
        }
    }

    pub fn expansion_bounds(&self) -> Result<ExpansionBounds> {
        self.validate()?;
        Ok(match *self {
            SystemSpec::CircleExpanding { m, delta } => ExpansionBounds {
                sigma1: m as f64 - 2.0 * PI * delta,
                sigma2: m as f64 + 2.0 * PI * delta,
                lambda: None,
            },
            SystemSpec::TorusConformal { a, b } => {
                let s = ((a * a + b * b) as f64).sqrt();
                ExpansionBounds { sigma1: s, sigma2: s, lambda: None }
            }
            SystemSpec::CatMap => {
                let r5 = 5f64.sqrt();
                ExpansionBounds { sigma1: (3.0 + r5) / 2.0, sigma2: (3.0 + r5) / 2.0, lambda: Some((3.0 - r5) / 2.0) }
            }
            SystemSpec::PerturbedCatMap { delta } if delta == 0.0 => SystemSpec::CatMap.expansion_bounds()?,
            SystemSpec::PerturbedCatMap { delta } => perturbed_cat_bounds(delta),
        })
    }
}

/// Cone-field bounds for the perturbed cat map. With `ε = 2πδ cos(2πx₁)` the
/// Jacobian is `[[2+ε, 1], [1, 1]]`; slopes `s` of `E^u` lie between the roots
/// of `s² + (1+ε)s − 1 = 0` for `ε = ±2πδ`, and the stable slopes between the
/// other roots. The one-step norms are extremized over these rectangles.
fn perturbed_cat_bounds(delta: f64) -> ExpansionBounds {
    let e = 2.0 * PI * delta;
    let root = |eps: f64, sign: f64| (-(1.0 + eps) + sign * ((1.0 + eps) * (1.0 + eps) + 4.0).sqrt()) / 2.0;
    let growth = |eps: f64, s: f64| {
        let (a, b) = (2.0 + eps + s, 1.0 + s);
        (a * a + b * b).sqrt() / (1.0 + s * s).sqrt()
    };
    let grid = 64;
    let mut s1 = f64::INFINITY;
    let mut s2 = 0f64;
    let mut lam = 0f64;
    let (u_lo, u_hi) = (root(e, 1.0), root(-e, 1.0));
    let (s_lo, s_hi) = (root(-e, -1.0), root(e, -1.0));
    for i in 0..=grid {
        let eps = -e + 2.0 * e * i as f64 / grid as f64;
        for j in 0..=grid {
            let t = j as f64 / grid as f64;
            let g = growth(eps, u_lo + t * (u_hi - u_lo));
            s1 = s1.min(g);
            s2 = s2.max(g);
            lam = lam.max(growth(eps, s_lo + t * (s_hi - s_lo)));
        }
    }
    // Absorb the grid resolution.
    let pad = 1e-9 + 4.0 * e / grid as f64;
    ExpansionBounds { sigma1: s1 - pad, sigma2: s2 + pad, lambda: Some(lam + pad) }
}
