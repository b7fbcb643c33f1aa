//! Stable/unstable direction fields of the torus Anosov maps by power
//! iteration of the derivative cocycle.

use rug::Float;
use serde::{Deserialize, Serialize};

use super::SystemSpec;
use crate::error::{Error, Result};
use crate::geometry::{torus_distance, TorusPoint};

/// Residual accepted from [`unstable_direction`].
pub const SPLITTING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub point: TorusPoint,
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
    pub residual: f64,
}

impl Splitting {
    /// Coordinates `(u, s)` of `d = u e_u + s e_s`.
    pub fn coords(&self, d: [f64; 2]) -> (f64, f64) {
        let det = self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0];
        let u = (d[0] * self.e_s[1] - d[1] * self.e_s[0]) / det;
        let s = (self.e_u[0] * d[1] - self.e_u[1] * d[0]) / det;
        (u, s)
    }

    /// High precision version of [`Splitting::coords`].
    pub fn coords_hp(&self, d: &[Float]) -> (Float, Float) {
        let prec = d[0].prec();
        let det = self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0];
        let u = (Float::with_val(prec, &d[0] * self.e_s[1]) - Float::with_val(prec, &d[1] * self.e_s[0])) / det;
        let s = (Float::with_val(prec, &d[1] * self.e_u[0]) - Float::with_val(prec, &d[0] * self.e_u[1])) / det;
        (u, s)
    }

    /// `|sin|` of the angle between the two directions.
    pub fn sin_angle(&self) -> f64 {
        (self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0]).abs()
    }
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

fn mat_vec(m: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn inv_mat_vec(m: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [(m[1][1] * v[0] - m[0][1] * v[1]) / det, (-m[1][0] * v[0] + m[0][0] * v[1]) / det]
}

fn orient(v: [f64; 2], axis: usize) -> [f64; 2] {
    if v[axis] < 0.0 {
        [-v[0], -v[1]]
    } else {
        v
    }
}

fn cat_directions() -> ([f64; 2], [f64; 2]) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    (normalize([1.0, g]), normalize([-g, 1.0]))
}

fn work_prec(x: &TorusPoint, iterations: u32) -> u32 {
    x.prec().max(64 + 2 * iterations)
}

/// `e_u(x)` by pushing a seed vector along the backward orbit.
fn eu_at(sys: &SystemSpec, x: &TorusPoint, iterations: u32) -> Result<[f64; 2]> {
    match sys {
        SystemSpec::CatMap => Ok(cat_directions().0),
        SystemSpec::PerturbedCatMap { delta } if *delta == 0.0 => Ok(cat_directions().0),
        SystemSpec::PerturbedCatMap { .. } => {
            let x = x.with_prec(work_prec(x, iterations));
            let mut orbit = Vec::with_capacity(iterations as usize);
            let mut p = x;
            for _ in 0..iterations {
                p = sys.inverse(&p)?;
                orbit.push(p.to_f64());
            }
            let mut v = cat_directions().0;
            for q in orbit.iter().rev() {
                v = normalize(mat_vec(sys.jacobian(q), v));
            }
            Ok(orient(v, 0))
        }
        _ => Err(Error::Unsupported("splittings exist only for the Anosov maps".into())),
    }
}

/// `e_s(x)` by pulling a seed vector back along the forward orbit.
fn es_at(sys: &SystemSpec, x: &TorusPoint, iterations: u32) -> Result<[f64; 2]> {
    match sys {
        SystemSpec::CatMap => Ok(cat_directions().1),
        SystemSpec::PerturbedCatMap { delta } if *delta == 0.0 => Ok(cat_directions().1),
        SystemSpec::PerturbedCatMap { .. } => {
            let mut p = x.with_prec(work_prec(x, iterations));
            let mut orbit = Vec::with_capacity(iterations as usize);
            for _ in 0..iterations {
                orbit.push(p.to_f64());
                p = sys.apply(&p);
            }
            let mut v = cat_directions().1;
            for q in orbit.iter().rev() {
                v = normalize(inv_mat_vec(sys.jacobian(q), v));
            }
            Ok(orient(v, 1))
        }
        _ => Err(Error::Unsupported("splittings exist only for the Anosov maps".into())),
    }
}

/// The splitting `E^u ⊕ E^s` at `x` with its invariance residual.
pub fn unstable_direction(sys: &SystemSpec, x: &TorusPoint, iterations: u32) -> Result<Splitting> {
    let e_u = eu_at(sys, x, iterations)?;
    let e_s = es_at(sys, x, iterations)?;
    let fx = sys.apply(x);
    let e_u_next = eu_at(sys, &fx, iterations)?;
    let w = mat_vec(sys.jacobian(&x.to_f64()), e_u);
    let n = w[0].hypot(w[1]);
    let residual = (w[0] - n * e_u_next[0]).hypot(w[1] - n * e_u_next[1]);
    if residual > SPLITTING_TOL * n {
        return Err(Error::NoConvergence(format!("splitting residual {residual:e} after {iterations} iterations")));
    }
    Ok(Splitting { point: x.clone(), e_u, e_s, residual })
}

/// Only the stable direction (cheaper when `e_u` is not needed).
pub fn stable_direction(sys: &SystemSpec, x: &TorusPoint, iterations: u32) -> Result<[f64; 2]> {
    es_at(sys, x, iterations)
}

/// Slides `w` along its local stable leaf onto the local unstable leaf of `z`.
/// Exact for the cat map and first order in the leaf curvature otherwise.
pub fn holonomy_project(sys: &SystemSpec, w: &TorusPoint, z: &TorusPoint, locality: f64) -> Result<TorusPoint> {
    if !sys.is_anosov() {
        return Err(Error::Unsupported("holonomy needs an Anosov map".into()));
    }
    if locality > 0.05 {
        return Err(Error::LocalityExceeded(format!("locality {locality} > 0.05")));
    }
    let dist = torus_distance(w, z)?;
    if dist > locality {
        return Err(Error::LocalityExceeded(format!("distance {} > {locality}", dist.to_f64())));
    }
    let e_u = eu_at(sys, z, 60)?;
    let e_s = es_at(sys, w, 60)?;
    let d = w.diff(z);
    let prec = d[0].prec();
    // d = s e_u − t e_s; solve for s.
    let det = e_u[0] * (-e_s[1]) - e_u[1] * (-e_s[0]);
    if det.abs() < 1e-6 {
        return Err(Error::LocalityExceeded("leaves not transverse".into()));
    }
    let s = (Float::with_val(prec, &d[0] * (-e_s[1])) - Float::with_val(prec, &d[1] * (-e_s[0]))) / det;
    let step = [Float::with_val(prec, &s * e_u[0]), Float::with_val(prec, &s * e_u[1])];
    Ok(z.translate(&step))
}
