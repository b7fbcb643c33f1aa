//! Alice's winning strategies for the potential, Schmidt (Anosov) and
//! modified games, the constants they are built from, and Bob adversaries.

use std::f64::consts::LN_2;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    circle_components_range, lift_inverse_iter, preimage_components_capped, unstable_direction, Hole, PreimageComponent, RectangleSpec, SystemSpec, Window,
};
use crate::error::{Error, Result};
use crate::games::{GameEngine, GameKind, GameParams, GameSetup, Move, Strategy, TilingRef};
use crate::geometry::{ball_intersects_ball, distance_unchecked, wrap_diff, MetricBall, TorusPoint};
use crate::tilings::{Atom, AtomId, TilingFamily};
use crate::verification::empirical_distortion;

/// Certified fraction of targets [`avoidance_choose`] avoids in dimension `n`.
pub fn eps_impl(n: usize) -> f64 {
    if n <= 1 {
        0.5
    } else {
        0.25
    }
}

/// `⌊(log 2 + r log(1/q)) / log σ₁⌋ + 1`.
pub fn count_n(sigma1: f64, r: u32, q: f64) -> u64 {
    ((LN_2 + r as f64 * (1.0 / q).ln()) / sigma1.ln() + 1e-9).floor() as u64 + 1
}

/// Minimal `r` with `N β^{(r−1)γ} ≤ 1`, and that `N`.
pub fn potential_r_n(sigma1: f64, beta: f64, gamma: f64) -> Result<(u32, u64)> {
    for r in 1..100_000u32 {
        let n = count_n(sigma1, r, beta);
        if n as f64 * beta.powf((r - 1) as f64 * gamma) <= 1.0 + 1e-12 {
            return Ok((r, n));
        }
    }
    Err(Error::Infeasible("no r satisfies the budget inequality".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConstants {
    pub system: SystemSpec,
    pub target: TorusPoint,
    pub beta: f64,
    pub gamma: f64,
    pub r: u32,
    pub n_count: u64,
    pub c_prime: f64,
    /// Measured distortion at scale `c_prime`.
    pub k_hat: f64,
    pub k_dist: f64,
    pub c: f64,
    pub rho1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl PotentialConstants {
    /// Diameter window `[ρ β^{2r}, ρ β^r)` for a step starting at radius `ρ`.
    pub fn window(&self, rho: f64) -> (f64, f64) {
        (rho * self.beta.powi(2 * self.r as i32), rho * self.beta.powi(self.r as i32))
    }

    pub fn prec_for_depth(&self, depth: u32) -> u32 {
        let bits = -(self.rho1.log2() + (depth + 2 * self.r) as f64 * self.beta.log2()) + (1.0 / self.c).log2();
        128 + 2 * bits.ceil().max(0.0) as u32
    }

    pub fn hole(&self, prec: u32) -> Hole {
        Hole::Ball(MetricBall { center: self.target.with_prec(prec), radius: Float::with_val(prec, self.c) })
    }

    /// Failed inequalities, empty when all hold.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.n_count as f64 * self.beta.powf((self.r - 1) as f64 * self.gamma) > 1.0 + 1e-12 {
            bad.push("N β^{(r−1)γ} ≤ 1".into());
        }
        if self.n_count != count_n(self.sigma1, self.r, self.beta) {
            bad.push("N formula".into());
        }
        let b2r = self.beta.powi(2 * self.r as i32);
        if self.c > self.c_prime * b2r / (100.0 * self.k_dist) * (1.0 + 1e-12) {
            bad.push("c ≤ c′β^{2r}/(100K)".into());
        }
        if self.c >= self.rho1 * b2r {
            bad.push("c < ρ₁β^{2r}".into());
        }
        if !(self.k_dist > 1.0 && self.k_dist <= 2.0) {
            bad.push("1 < K ≤ 2".into());
        }
        bad
    }

    pub fn table(&self) -> Vec<(String, String)> {
        vec![
            ("system".into(), self.system.name()),
            ("beta".into(), self.beta.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("r".into(), self.r.to_string()),
            ("N".into(), self.n_count.to_string()),
            ("c_prime".into(), format!("{:e}", self.c_prime)),
            ("K_hat".into(), self.k_hat.to_string()),
            ("K".into(), self.k_dist.to_string()),
            ("c".into(), format!("{:e}", self.c)),
            ("rho1".into(), format!("{:e}", self.rho1)),
        ]
    }
}

/// Largest hole scale on the grid `2^{-j}/8` with `2c′σ₂ < 1` and `K̂(c′) ≤ 1 + η`.
fn choose_c_prime(sys: &SystemSpec, sigma2: f64, eta: f64) -> Result<(f64, f64)> {
    let mut cp: f64 = 0.125;
    while cp > 1e-9 {
        if 2.0 * cp * sigma2 < 1.0 {
            let k = empirical_distortion(sys, cp, 20, 2000, 0);
            if k <= 1.0 + eta {
                return Ok((cp, k));
            }
        }
        cp /= 2.0;
    }
    Err(Error::Infeasible("no hole scale with small distortion".into()))
}

pub fn derive_potential_constants(sys: &SystemSpec, beta: f64, gamma: f64, rho1: f64, y: &TorusPoint) -> Result<PotentialConstants> {
    if !sys.is_expanding() {
        return Err(Error::Unsupported("potential games are played for expanding maps".into()));
    }
    if !(beta > 0.0 && beta < 1.0 && gamma > 0.0 && rho1 > 0.0) {
        return Err(Error::InvalidArgument("need β ∈ (0,1), γ > 0, ρ₁ > 0".into()));
    }
    if y.dim() != sys.dim() {
        return Err(Error::DimensionMismatch(y.dim(), sys.dim()));
    }
    let b = sys.expansion_bounds()?;
    let (r, n_count) = potential_r_n(b.sigma1, beta, gamma)?;
    let (c_prime, k_hat) = choose_c_prime(sys, b.sigma2, 0.1)?;
    if rho1 > c_prime / 100.0 {
        return Err(Error::Infeasible(format!("ρ₁ = {rho1} exceeds c′/100 = {}", c_prime / 100.0)));
    }
    let k_dist = (k_hat * 1.01).max(1.01);
    let b2r = beta.powi(2 * r as i32);
    let c = 0.5 * (c_prime * b2r / (100.0 * k_dist)).min(rho1 * b2r);
    Ok(PotentialConstants {
        system: sys.clone(),
        target: y.clone(),
        beta,
        gamma,
        r,
        n_count,
        c_prime,
        k_hat,
        k_dist,
        c,
        rho1,
        sigma1: b.sigma1,
        sigma2: b.sigma2,
    })
}

/// Components of `f^{-k}(hole)` meeting `ball` for `k ∈ ks` whose diameter
/// lies in `[lo, hi)`.
pub fn window_components(
    sys: &SystemSpec,
    hole: &Hole,
    ball: &MetricBall,
    ks: std::ops::RangeInclusive<u32>,
    lo: f64,
    hi: f64,
) -> Result<Vec<PreimageComponent>> {
    if let (SystemSpec::CircleExpanding { .. }, Hole::Ball(h)) = (sys, hole) {
        let mut out = circle_components_range(sys, h, ks, ball, Some((lo / 4.0, hi * 4.0)))?;
        out.retain(|comp| {
            let d = comp.diameter.to_f64();
            d >= lo && d < hi
        });
        return Ok(out);
    }
    let cap = *ks.end();
    let mut out = Vec::new();
    let window = Window::Ball(ball.clone());
    for k in ks {
        for comp in preimage_components_capped(sys, hole, k, &window, cap.max(64))? {
            let d = comp.diameter.to_f64();
            if d >= lo && d < hi {
                out.push(comp);
            }
        }
    }
    Ok(out)
}

/// The `k` range that can produce diameters in `[lo, hi)` for hole radius `c`,
/// from the global expansion bounds.
pub fn potential_k_range(c: f64, lo: f64, hi: f64, sigma1: f64, sigma2: f64, k_dist: f64) -> std::ops::RangeInclusive<u32> {
    let a = ((2.0 * c / (k_dist * hi)).ln() / sigma2.ln()).floor().max(0.0) as u32;
    let b = ((2.0 * c * k_dist / lo).ln() / sigma1.ln()).ceil().max(0.0) as u32 + 1;
    a..=b.max(a)
}

/// The same range from the derivative along the orbit of `x`, widened by
/// `pad` on both sides.
pub fn potential_k_range_at(sys: &SystemSpec, x: &TorusPoint, c: f64, lo: f64, hi: f64, k_dist: f64, pad: u32) -> std::ops::RangeInclusive<u32> {
    let mut z = x.clone();
    let mut ln_lam = 0.0f64;
    let (ln_hi, ln_lo) = ((2.0 * c / (k_dist * hi)).ln(), (2.0 * c * k_dist / lo).ln());
    let mut first = None;
    let mut k = 0u32;
    // diameters fall from 2cK/Λ_k to 2c/(KΛ_k); keep k while the band meets [lo, hi)
    while ln_lam <= ln_lo && k < 100_000 {
        if first.is_none() && ln_lam >= ln_hi {
            first = Some(k);
        }
        let d = match sys {
            SystemSpec::CircleExpanding { .. } => sys.circle_derivative(z.coord(0).to_f64()),
            _ => sys.expansion_bounds().map(|b| b.sigma1).unwrap_or(2.0),
        };
        ln_lam += d.ln();
        z = sys.apply(&z);
        k += 1;
    }
    let a = first.unwrap_or(k).saturating_sub(pad);
    a..=k + pad
}

/// Alice's potential-game strategy: at the first turn of each step `j ≥ 1`
/// remove every hole preimage of the step's diameter window meeting Bob's ball.
pub struct PotentialAlice {
    pub constants: PotentialConstants,
    hole: Hole,
    /// Removals made at each step start.
    pub removal_counts: Vec<usize>,
}

impl PotentialAlice {
    pub fn new(constants: PotentialConstants, prec: u32) -> Self {
        let hole = constants.hole(prec);
        PotentialAlice { constants, hole, removal_counts: Vec::new() }
    }

    /// Removal family for Bob's `i`-th ball (1-based).
    pub fn removals_for(&self, i: usize, ball: &MetricBall) -> Result<Vec<MetricBall>> {
        let k = &self.constants;
        let r = k.r as usize;
        let j = (i - 1) / r;
        if j == 0 || !(i - 1).is_multiple_of(r) {
            return Ok(Vec::new());
        }
        let (lo, hi) = k.window(ball.radius.to_f64());
        let ks = potential_k_range_at(&k.system, &ball.center, k.c, lo, hi, k.k_dist, 1);
        let comps = window_components(&k.system, &self.hole, ball, ks, lo, hi)?;
        comps
            .into_iter()
            .map(|c| MetricBall::new(c.enclosure.center, c.diameter))
            .collect()
    }
}

impl Strategy for PotentialAlice {
    fn next_move(&mut self, engine: &GameEngine, _rng: &mut ChaCha8Rng) -> Result<Move> {
        let i = engine.bob_turns();
        let ball = engine.bob_balls()[i - 1].clone();
        let balls = self.removals_for(i, &ball)?;
        if (i - 1).is_multiple_of(self.constants.r as usize) && i > 1 {
            self.removal_counts.push(balls.len());
        }
        Ok(Move::Removal { balls })
    }
}

/// Best centre offset in `[-allowed, allowed]` for a ball of `radius` avoiding
/// the intervals. Returns the offset and the indices avoided.
pub fn avoid_intervals(intervals: &[(f64, f64)], allowed: f64, radius: f64) -> (f64, Vec<usize>) {
    let avoided = |t: f64| -> Vec<usize> {
        intervals
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| t <= a - radius || t >= b + radius)
            .map(|(i, _)| i)
            .collect()
    };
    let mut cands = vec![0.0, allowed, -allowed];
    for &(a, b) in intervals {
        cands.push(a - radius);
        cands.push(b + radius);
    }
    let mut best: (f64, Vec<usize>) = (0.0, avoided(0.0));
    for t in cands {
        if t.abs() > allowed || !t.is_finite() {
            continue;
        }
        let av = avoided(t);
        if av.len() > best.1.len() || (av.len() == best.1.len() && t.abs() < best.0.abs()) {
            best = (t, av);
        }
    }
    best
}

/// Chooses `x₂` with `B(x₂, αρ) ⊆ B(x₁, ρ)` avoiding as many `B(y_i, αρ)` as
/// possible, by exhaustive search over a grid of candidate centres.
pub fn avoidance_choose(x1: &TorusPoint, rho: f64, targets: &[TorusPoint], alpha: f64) -> Result<(TorusPoint, Vec<usize>)> {
    let n = x1.dim();
    if !(rho > 0.0 && rho < 0.125) || !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument("need 0 < ρ < 1/8 and 0 < α < 1/2".into()));
    }
    if targets.is_empty() {
        return Ok((x1.clone(), Vec::new()));
    }
    let offs: Vec<Vec<f64>> = targets.iter().map(|t| t.diff(x1).iter().map(|d| d.to_f64()).collect()).collect();
    let reach = rho * (1.0 - alpha);
    let sep = 2.0 * alpha * rho;
    let grid = if n == 1 { 400 } else { 60 };
    let mut best: Option<(Vec<f64>, Vec<usize>, f64)> = None;
    let mut consider = |p: Vec<f64>| {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > reach {
            return;
        }
        let av: Vec<usize> = offs
            .iter()
            .enumerate()
            .filter(|(_, o)| o.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() > sep * (1.0 + 1e-9))
            .map(|(i, _)| i)
            .collect();
        let better = match &best {
            None => true,
            Some((_, b, bn)) => av.len() > b.len() || (av.len() == b.len() && norm < *bn),
        };
        if better {
            best = Some((p, av, norm));
        }
    };
    if n == 1 {
        for i in 0..=grid {
            consider(vec![-reach + 2.0 * reach * i as f64 / grid as f64]);
        }
    } else {
        for i in 0..=grid {
            for j in 0..=grid {
                consider(vec![-reach + 2.0 * reach * i as f64 / grid as f64, -reach + 2.0 * reach * j as f64 / grid as f64]);
            }
        }
    }
    let (p, av, _) = best.ok_or_else(|| Error::SearchFailure("no candidate centre".into()))?;
    if (av.len() as f64) < (eps_impl(n) * targets.len() as f64).ceil() {
        return Err(Error::SearchFailure(format!("avoided {} of {}", av.len(), targets.len())));
    }
    Ok((x1.translate_f64(&p), av))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnosovConstants {
    pub system: SystemSpec,
    pub target: TorusPoint,
    pub tau: f64,
    pub l0: u32,
    pub l1: u32,
    pub l2: u32,
    pub alpha0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps_avoid: f64,
    pub r: u32,
    pub n_count: u64,
    pub big_l: f64,
    pub c_prime: f64,
    pub c: f64,
    pub m: u32,
    /// Half-size `τ^{m+l₁+l₂}` of the rectangle hole.
    pub h: f64,
    pub k_dist: f64,
    pub c_hol: f64,
    pub rho: f64,
    pub sigma1: f64,
    /// `|sin|` of the splitting angle at the target.
    pub sin_theta: f64,
}

impl AnosovConstants {
    /// `αρ/C_hol`, the scale of the step windows.
    pub fn window_scale(&self) -> f64 {
        self.alpha * self.rho / self.c_hol
    }

    /// `ln` of the lower end of the step-`j` width window.
    pub fn ln_window_floor(&self, j: u32) -> f64 {
        self.window_scale().ln() + ((j + 2) * self.r - 1) as f64 * (self.alpha * self.beta).ln()
    }

    /// Largest preimage depth that can produce widths above the step-`j` floor.
    pub fn k_max(&self, j: u32) -> u32 {
        (((4.0 * self.h * self.k_dist).ln() - self.ln_window_floor(j)) / self.sigma1.ln()).ceil().max(0.0) as u32 + 1
    }

    pub fn prec_for_depth(&self, depth: u32) -> u32 {
        let steps = depth / self.r + 2;
        let bits = -(self.ln_window_floor(steps) / LN_2) + (1.0 / self.rho).log2() + 2.0 * (1.0 / self.h).log2();
        192 + bits.ceil() as u32
    }

    pub fn rectangle(&self, prec: u32) -> Result<RectangleSpec> {
        RectangleSpec::with_half_size(&self.system, self.target.with_prec(prec), Float::with_val(prec, self.h))
    }

    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let ab = self.alpha * self.beta;
        if self.alpha0 >= 0.25 {
            bad.push("α₀ < (1/2)(1/(CD))".into());
        }
        if !(self.tau.powi(self.l0 as i32) <= self.alpha0 && self.alpha0 < self.tau.powi(self.l0 as i32 - 1)) {
            bad.push("τ^{l₀} ≤ α₀ < τ^{l₀−1}".into());
        }
        if (self.alpha - self.tau.powi((self.l0 + 2 * self.l2 + 1) as i32)).abs() > 1e-15 {
            bad.push("α = τ^{l₀+2l₂+1}".into());
        }
        if self.n_count != count_n(self.sigma1, self.r, ab) {
            bad.push("N formula".into());
        }
        if (1.0 - self.eps_avoid).powi(self.r as i32) * self.n_count as f64 >= 1.0 {
            bad.push("(1−ε)^r N < 1".into());
        }
        let p = ab.powi(2 * self.r as i32 - 1);
        if self.c > self.alpha * self.c_prime * p / 100.0 * (1.0 + 1e-12) {
            bad.push("c ≤ αc′(αβ)^{2r−1}/100".into());
        }
        if self.c >= self.alpha * self.rho * p / self.c_hol {
            bad.push("c < αρ(αβ)^{2r−1}/C".into());
        }
        if !(self.tau.powi(self.m as i32) <= self.c / 2.0 && self.c / 2.0 < self.tau.powi(self.m as i32 - 1)) {
            bad.push("τ^m ≤ c/2 < τ^{m−1}".into());
        }
        bad
    }

    pub fn table(&self) -> Vec<(String, String)> {
        vec![
            ("system".into(), self.system.name()),
            ("tau".into(), self.tau.to_string()),
            ("l0, l1, l2".into(), format!("{}, {}, {}", self.l0, self.l1, self.l2)),
            ("alpha0".into(), self.alpha0.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("eps_avoid".into(), self.eps_avoid.to_string()),
            ("r".into(), self.r.to_string()),
            ("N".into(), self.n_count.to_string()),
            ("L".into(), self.big_l.to_string()),
            ("c_prime".into(), self.c_prime.to_string()),
            ("c".into(), format!("{:e}", self.c)),
            ("m".into(), self.m.to_string()),
            ("h".into(), format!("{:e}", self.h)),
            ("K".into(), self.k_dist.to_string()),
            ("C_hol".into(), self.c_hol.to_string()),
            ("rho".into(), format!("{:e}", self.rho)),
        ]
    }
}

/// Ratio of holonomy-transported unstable lengths, sampled.
fn measure_holonomy_constant(sys: &SystemSpec) -> Result<f64> {
    if matches!(sys, SystemSpec::CatMap) || matches!(sys, SystemSpec::PerturbedCatMap { delta } if *delta == 0.0) {
        return Ok(1.0);
    }
    let mut worst: f64 = 1.0;
    for i in 0..20 {
        let z = TorusPoint::from_f64(&[(i as f64 * 0.618_033_988_7).fract(), (i as f64 * 0.414_213_562_3).fract()], 128);
        let sp = unstable_direction(sys, &z, 60)?;
        let len = 1e-3;
        let a = z.clone();
        let b = z.translate_f64(&[len * sp.e_u[0], len * sp.e_u[1]]);
        let w = z.translate_f64(&[5e-3 * sp.e_s[0], 5e-3 * sp.e_s[1]]);
        let pa = crate::dynamics::holonomy_project(sys, &a, &w, 0.05)?;
        let pb = crate::dynamics::holonomy_project(sys, &b, &w, 0.05)?;
        let ratio = distance_unchecked(&pa, &pb).to_f64() / len;
        worst = worst.max(ratio).max(1.0 / ratio);
    }
    Ok(worst)
}

pub fn derive_anosov_constants(sys: &SystemSpec, beta: f64, rho: f64, y: &TorusPoint) -> Result<AnosovConstants> {
    if !sys.is_anosov() {
        return Err(Error::Unsupported("Schmidt-game strategy needs an Anosov map".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument("β must lie in (0,1)".into()));
    }
    let big_l = 0.1;
    if !(rho > 0.0 && rho <= big_l / 100.0) {
        return Err(Error::Infeasible(format!("ρ = {rho} must lie in (0, L/100 = {}]", big_l / 100.0)));
    }
    let n = 1usize;
    // flat leaf measure: C = 1, D = 2 on one-dimensional unstable leaves
    let (cc, dd): (f64, f64) = (1.0, 2.0);
    let bound = 0.5 * (1.0 / (cc * dd)).powf(1.0 / n as f64);
    let alpha0 = bound * (1.0 - 1e-6);
    let tau: f64 = 0.5;
    let l0 = (alpha0.ln() / tau.ln()).ceil() as u32;
    let sp = unstable_direction(sys, y, 60)?;
    let sin_theta = sp.sin_angle();
    let cos_theta = (1.0 - sin_theta * sin_theta).max(0.0).sqrt();
    let need = (2.0 + 2.0 * cos_theta).sqrt().max(1.0 / sin_theta);
    let l1 = need.log2().ceil().max(1.0) as u32;
    let l2 = l1;
    let alpha = tau.powi((l0 + 2 * l2 + 1) as i32);
    let eps_avoid = eps_impl(n);
    let bounds = sys.expansion_bounds()?;
    let sigma1 = bounds.sigma1;
    let mut r = 1;
    let n_count = loop {
        let nn = count_n(sigma1, r, alpha * beta);
        if (1.0 - eps_avoid).powi(r as i32) * (nn as f64) < 1.0 {
            break nn;
        }
        r += 1;
        if r > 10_000 {
            return Err(Error::Infeasible("no r satisfies (1−ε)^r N < 1".into()));
        }
    };
    let mut c_prime: f64 = 0.05;
    let mut k_hat = empirical_distortion(sys, c_prime, 12, 400, 0);
    while k_hat > 1.1 && c_prime > 1e-6 {
        c_prime /= 2.0;
        k_hat = empirical_distortion(sys, c_prime, 12, 400, 0);
    }
    let c_hol = measure_holonomy_constant(sys)?;
    if c_hol > 1.1 {
        return Err(Error::Infeasible(format!("holonomy constant {c_hol} exceeds 1.1")));
    }
    let p = (alpha * beta).powi(2 * r as i32 - 1);
    let c = 0.5 * (alpha * c_prime * p / 100.0).min(alpha * rho * p / c_hol);
    let m = ((c / 2.0).ln() / tau.ln()).ceil() as u32;
    let h = tau.powi((m + l1 + l2) as i32);
    Ok(AnosovConstants {
        system: sys.clone(),
        target: y.clone(),
        tau,
        l0,
        l1,
        l2,
        alpha0,
        alpha,
        beta,
        eps_avoid,
        r,
        n_count,
        big_l,
        c_prime,
        c,
        m,
        h,
        k_dist: k_hat.max(1.0) * 1.01,
        c_hol,
        rho,
        sigma1,
        sin_theta,
    })
}

/// A hole-preimage strip crossing the unstable line through a point, as an
/// interval of the line parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub k: u32,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// `u`-coordinate of `f^k(x + t e)` in the rectangle chart.
fn strip_g(sys: &SystemSpec, rect: &RectangleSpec, x: &TorusPoint, e: [f64; 2], t: &Float, k: u32) -> Float {
    let prec = x.prec();
    let p = x.translate(&[Float::with_val(prec, t * e[0]), Float::with_val(prec, t * e[1])]);
    rect.local_coords(&sys.iterate(&p, k)).0
}

/// Solves `strip_g(t) = target` starting from the linear guess.
fn strip_solve(sys: &SystemSpec, rect: &RectangleSpec, x: &TorusPoint, e: [f64; 2], k: u32, u0: &Float, slope: f64, target: f64) -> Result<f64> {
    let prec = x.prec();
    let mut t = Float::with_val(prec, Float::with_val(prec, target - u0) / slope);
    let mut g = strip_g(sys, rect, x, e, &t, k);
    let (mut t_prev, mut g_prev) = (Float::with_val(prec, 0), u0.clone());
    for _ in 0..40 {
        let err = Float::with_val(prec, &g - target);
        if err.to_f64().abs() <= 1e-9 * rect.half_size.to_f64() {
            return Ok(t.to_f64());
        }
        let dg = Float::with_val(prec, &g - &g_prev);
        let dt = Float::with_val(prec, &t - &t_prev);
        let s = if dt.is_zero() || dg.is_zero() { Float::with_val(prec, slope) } else { dg / dt };
        t_prev = t.clone();
        g_prev = g;
        t -= err / s;
        g = strip_g(sys, rect, x, e, &t, k);
    }
    Err(Error::NoConvergence(format!("strip at k = {k}")))
}

/// Strips of `f^{-k}(rect)`, `k ≤ k_max`, that can meet `B(x, ρ)`, located on
/// the line `x + t e_u(x)`.
pub fn anosov_strips(sys: &SystemSpec, rect: &RectangleSpec, x: &TorusPoint, rho: &Float, k_max: u32) -> Result<(Vec<Strip>, [f64; 2], f64)> {
    let sp = unstable_direction(sys, x, 60)?;
    let e = sp.e_u;
    // enough bits for u to be accurate well below h after k_max steps, and
    // for t to be accurate well below ρ
    let bits = (k_max as f64 * sys.expansion_bounds()?.sigma2.log2() + (1.0 / rect.half_size.to_f64()).log2()).max((1.0 / rho.to_f64()).log2());
    let work = (bits.ceil() as u32 + 64).min(x.prec());
    let x = &x.with_prec(work);
    let linear = matches!(sys, SystemSpec::CatMap) || matches!(sys, SystemSpec::PerturbedCatMap { delta } if *delta == 0.0);
    let h = rect.half_size.to_f64();
    let ln_rho = rho.to_f64().ln();
    let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
    let mut z = x.clone();
    let mut v = e;
    let mut ln_lam = 0.0f64;
    let mut out = Vec::new();
    for k in 0..=k_max {
        let (u, s) = rect.local_coords(&z);
        let reach = 1.1 * (ln_lam + ln_rho).exp();
        let uf = u.to_f64();
        if uf.abs() <= h + reach && s.to_f64().abs() <= h + reach {
            let (t_lo, t_hi) = if linear {
                let lam = Float::with_val(x.prec(), phi2).pow(k);
                let lo = Float::with_val(x.prec(), -h - &u) / &lam;
                let hi = Float::with_val(x.prec(), h - &u) / &lam;
                (lo.to_f64(), hi.to_f64())
            } else {
                // g'(0) is the unstable growth projected on the chart's u axis
                let slope = ln_lam.exp() * {
                    let (pu, _) = rect_coords_f64(rect, v);
                    pu
                };
                let a = strip_solve(sys, rect, x, e, k, &u, slope, -h)?;
                let b = strip_solve(sys, rect, x, e, k, &u, slope, h)?;
                (a.min(b), a.max(b))
            };
            out.push(Strip { k, t_lo, t_hi });
        }
        if k < k_max {
            let j = sys.jacobian(&z.to_f64());
            let w = [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]];
            let nrm = w[0].hypot(w[1]);
            ln_lam += nrm.ln();
            v = [w[0] / nrm, w[1] / nrm];
            z = sys.apply(&z);
        }
    }
    Ok((out, e, sp.sin_angle()))
}

fn rect_coords_f64(rect: &RectangleSpec, d: [f64; 2]) -> (f64, f64) {
    let det = rect.e_u[0] * rect.e_s[1] - rect.e_u[1] * rect.e_s[0];
    ((d[0] * rect.e_s[1] - d[1] * rect.e_s[0]) / det, (rect.e_u[0] * d[1] - rect.e_u[1] * d[0]) / det)
}

/// Alice's Schmidt-game strategy on the torus. Step `j ≥ 1` covers the strips
/// whose width exceeds the step's window floor; every turn she shifts along
/// `E^u` to clear as many of them as possible.
pub struct AnosovAlice {
    pub constants: AnosovConstants,
    rect: RectangleSpec,
    /// Strips met on each turn, for the per-step count checks.
    pub strip_counts: Vec<usize>,
    /// Strips left uncleared after a turn.
    pub unavoided: usize,
}

impl AnosovAlice {
    pub fn new(constants: AnosovConstants, prec: u32) -> Result<Self> {
        let rect = constants.rectangle(prec)?;
        Ok(AnosovAlice { constants, rect, strip_counts: Vec::new(), unavoided: 0 })
    }
}

impl Strategy for AnosovAlice {
    fn next_move(&mut self, engine: &GameEngine, _rng: &mut ChaCha8Rng) -> Result<Move> {
        let k = &self.constants;
        let i = engine.bob_turns();
        let bob = &engine.bob_balls()[i - 1];
        let radius = Float::with_val(bob.radius.prec(), &bob.radius * k.alpha);
        let j = ((i - 1) / k.r as usize) as u32;
        if j == 0 {
            return Ok(Move::Ball { ball: MetricBall::new(bob.center.clone(), radius)? });
        }
        let (strips, e, sin) = anosov_strips(&k.system, &self.rect, &bob.center, &bob.radius, k.k_max(j))?;
        let rho = bob.radius.to_f64();
        let ar = radius.to_f64();
        let meets: Vec<(f64, f64)> = strips
            .iter()
            .filter(|s| s.t_hi >= -rho / sin && s.t_lo <= rho / sin)
            .map(|s| (s.t_lo, s.t_hi))
            .collect();
        self.strip_counts.push(meets.len());
        let margin = ar / sin * (1.0 + 1e-3);
        let (t, av) = avoid_intervals(&meets, rho - ar, margin);
        self.unavoided += meets.len() - av.len();
        let prec = bob.center.prec();
        let tf = Float::with_val(prec, t);
        let center = bob.center.translate(&[Float::with_val(prec, &tf * e[0]), Float::with_val(prec, &tf * e[1])]);
        Ok(Move::Ball { ball: MetricBall::new(center, radius)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedConstants {
    pub system: SystemSpec,
    pub target: TorusPoint,
    pub epsilon: f64,
    pub tiling_seed: u64,
    pub a_star: u32,
    pub a: u32,
    pub b: u32,
    pub eta: f64,
    pub r: u32,
    pub big_l: f64,
    pub n1: u32,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Smallest integer `a` with `a > log 13 / log σ₁`.
pub fn min_a_for_sigma(sigma1: f64) -> u32 {
    let v = 13f64.ln() / sigma1.ln();
    v.floor() as u32 + 1
}

/// Minimal `r` with `(1−η)^r (a+b) r < 1`.
pub fn modified_r(eta: f64, a: u32, b: u32) -> u32 {
    (1..).find(|&r: &u32| (1.0 - eta).powi(r as i32) * (((a + b) * r) as f64) < 1.0).unwrap()
}

impl ModifiedConstants {
    /// Exponent `e` in `c = ε / (2 σ₂^e)`.
    pub fn c_exponent(&self) -> u32 {
        self.n1 + (self.a + self.b) * self.r + self.a
    }

    pub fn c(&self, prec: u32) -> Float {
        Float::with_val(prec, self.epsilon) / 2u32 / Float::with_val(prec, self.sigma2).pow(self.c_exponent())
    }

    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if (self.a as f64) <= 13f64.ln() / self.sigma1.ln() {
            bad.push("a > log 13 / log σ₁".into());
        }
        if self.a <= self.a_star || self.b <= self.a_star {
            bad.push("a, b > a_*".into());
        }
        if (1.0 - self.eta).powi(self.r as i32) * ((self.a + self.b) * self.r) as f64 >= 1.0 {
            bad.push("(1−η)^r (a+b) r < 1".into());
        }
        let lhs = 2.0 * self.epsilon / self.sigma1.powi(self.n1 as i32 - ((self.a + self.b) * self.r) as i32);
        if lhs > self.big_l / 100.0 * (1.0 + 1e-12) {
            bad.push("2ε/σ₁^{n₁−(a+b)r} ≤ L/100".into());
        }
        bad
    }

    pub fn table(&self) -> Vec<(String, String)> {
        vec![
            ("system".into(), self.system.name()),
            ("epsilon".into(), self.epsilon.to_string()),
            ("a_star".into(), self.a_star.to_string()),
            ("a".into(), self.a.to_string()),
            ("b".into(), self.b.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("r".into(), self.r.to_string()),
            ("L".into(), self.big_l.to_string()),
            ("n1".into(), self.n1.to_string()),
            ("c".into(), format!("{} / (2 * {}^{})", self.epsilon, self.sigma2, self.c_exponent())),
        ]
    }
}

pub const MODIFIED_ETA: f64 = 0.1;

pub fn derive_modified_constants(sys: &SystemSpec, b: Option<u32>, tiling: &TilingFamily, tiling_seed: u64, y: &TorusPoint) -> Result<ModifiedConstants> {
    let a_star = tiling.a_star.ok_or_else(|| Error::InvalidArgument("tiling is not certified".into()))?;
    let bounds = sys.expansion_bounds()?;
    let b = b.unwrap_or(a_star + 1);
    if b <= a_star {
        return Err(Error::InvalidArgument(format!("b = {b} must exceed a_* = {a_star}")));
    }
    let a = (a_star + 1).max(min_a_for_sigma(bounds.sigma1));
    let eta = MODIFIED_ETA;
    let r = modified_r(eta, a, b);
    let big_l = 0.125;
    let eps = tiling.epsilon;
    let extra = ((200.0 * eps / big_l).ln() / bounds.sigma1.ln() - 1e-12).ceil().max(1.0) as u32;
    let n1 = (a + b) * r + extra;
    Ok(ModifiedConstants {
        system: sys.clone(),
        target: y.clone(),
        epsilon: eps,
        tiling_seed,
        a_star,
        a,
        b,
        eta,
        r,
        big_l,
        n1,
        sigma1: bounds.sigma1,
        sigma2: bounds.sigma2,
    })
}

/// Lift intervals of the components of `f^{-k}(B(y, c))`, `k < k_end`, meeting
/// the atom, found by iterating its endpoints forward.
pub fn atom_hole_components(sys: &SystemSpec, atom: &Atom, y: &Float, c: &Float, k_end: u32) -> Vec<(u32, Float, Float)> {
    let prec = atom.lo.prec().max(c.prec());
    let mut a = Float::with_val(prec, &atom.lo);
    let mut b = Float::with_val(prec, &atom.hi);
    let mut out = Vec::new();
    for k in 0..k_end {
        let lo_n = Float::with_val(prec, Float::with_val(prec, &a - y) - c).ceil().to_integer().unwrap();
        let hi_n = Float::with_val(prec, Float::with_val(prec, &b - y) + c).floor().to_integer().unwrap();
        let mut n = lo_n;
        while n <= hi_n {
            let s_lo = Float::with_val(prec, Float::with_val(prec, y - c) + &n);
            let s_hi = Float::with_val(prec, Float::with_val(prec, y + c) + &n);
            out.push((k, lift_inverse_iter(sys, &s_lo, k), lift_inverse_iter(sys, &s_hi, k)));
            n += 1;
        }
        a = sys.lift(&a);
        b = sys.lift(&b);
    }
    out
}

/// Alice's modified-game strategy: each turn pick the level-`(n+a)` child
/// atom meeting the fewest tracked hole components.
pub struct ModifiedAlice {
    pub constants: ModifiedConstants,
    tiling: Arc<TilingFamily>,
    y: Float,
    c: Float,
    pub max_tracked: usize,
}

impl ModifiedAlice {
    pub fn new(constants: ModifiedConstants, tiling: Arc<TilingFamily>, prec: u32) -> Self {
        let y = Float::with_val(prec, constants.target.coord(0));
        let c = constants.c(prec);
        ModifiedAlice { constants, tiling, y, c, max_tracked: 0 }
    }
}

fn atom_mid(a: &Atom) -> Float {
    Float::with_val(a.lo.prec(), &a.lo + &a.hi) / 2u32
}

impl Strategy for ModifiedAlice {
    fn next_move(&mut self, engine: &GameEngine, _rng: &mut ChaCha8Rng) -> Result<Move> {
        let k = &self.constants;
        let i = engine.bob_turns();
        let omega = engine.bob_atoms()[i - 1].clone();
        let j = ((i - 1) / k.r as usize) as u32;
        let k_end = (j + 1) * k.r * (k.a + k.b);
        let comps = atom_hole_components(&k.system, &omega, &self.y, &self.c, k_end);
        self.max_tracked = self.max_tracked.max(comps.len());
        let kids = self.tiling.children(&omega, omega.level() + k.a)?;
        let mid = atom_mid(&omega);
        let mut best: Option<(usize, f64, Atom)> = None;
        for kid in kids {
            let hit = comps.iter().filter(|(_, lo, hi)| kid.intersects_interval(lo, hi)).count();
            let off = wrap_diff(&atom_mid(&kid), &mid).to_f64().abs();
            let better = match &best {
                None => true,
                Some((h, o, _)) => hit < *h || (hit == *h && off < *o),
            };
            if better {
                best = Some((hit, off, kid));
            }
        }
        let (_, _, kid) = best.ok_or_else(|| Error::SearchFailure("atom has no children at the required level".into()))?;
        Ok(Move::Atom { atom: kid.id })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobPolicy {
    Random,
    Concentric,
    HoleSeeking,
}

impl std::str::FromStr for BobPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BobPolicy::Random),
            "concentric" => Ok(BobPolicy::Concentric),
            "hole_seeking" | "hole-seeking" => Ok(BobPolicy::HoleSeeking),
            _ => Err(Error::InvalidArgument(format!("unknown Bob policy {s:?}"))),
        }
    }
}

/// Bob's first move.
#[derive(Debug, Clone)]
pub enum Opening {
    Ball { dim: usize, radius: f64, prec: u32, center: Option<Vec<f64>> },
    Atom { level: u32 },
}

/// What a hole-seeking Bob aims at.
#[derive(Debug, Clone)]
pub struct BobTarget {
    pub system: SystemSpec,
    pub hole: Hole,
}

pub struct BobStrategy {
    pub policy: BobPolicy,
    pub opening: Opening,
    pub target: Option<BobTarget>,
}

fn random_offset(rng: &mut ChaCha8Rng, dim: usize, reach: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![rng.random_range(-1.0..=1.0) * reach];
    }
    loop {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return p.into_iter().map(|v| v * reach).collect();
        }
    }
}

fn random_integer_below(rng: &mut ChaCha8Rng, bound: &Integer) -> Integer {
    let words = bound.significant_bits() / 32 + 2;
    let mut v = Integer::new();
    for _ in 0..words {
        v <<= 32;
        v += rng.random::<u32>();
    }
    v % bound
}

fn clamp_offset(d: &[f64], reach: f64) -> Vec<f64> {
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= reach || n == 0.0 {
        d.to_vec()
    } else {
        d.iter().map(|v| v * reach / n).collect()
    }
}

impl BobStrategy {
    pub fn new(policy: BobPolicy, opening: Opening, target: Option<BobTarget>) -> Self {
        BobStrategy { policy, opening, target }
    }

    fn open(&self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move> {
        match &self.opening {
            Opening::Ball { dim, radius, prec, center } => {
                let c = match center {
                    Some(c) => c.clone(),
                    None => (0..*dim).map(|_| rng.random::<f64>()).collect(),
                };
                Ok(Move::Ball { ball: MetricBall::new(TorusPoint::from_f64(&c, *prec), Float::with_val(*prec, *radius))? })
            }
            Opening::Atom { level } => {
                let tiling = engine.tiling().ok_or_else(|| Error::InvalidArgument("no tiling".into()))?;
                let cell = rng.random_range(0..tiling.cell_count()) as u32;
                let m = tiling.sys.degree();
                let period = Integer::from(m).pow(level - 1);
                let shift = random_integer_below(rng, &period);
                Ok(Move::Atom { atom: AtomId { level: *level, cell, shift } })
            }
        }
    }

    /// Offsets from `ball`'s centre to hole preimages inside it not already
    /// removed, nearest first. Uses the linearised orbit of the centre while
    /// the ball's image stays short.
    fn seek_circle(&self, ball: &MetricBall, avoid: &[MetricBall]) -> Result<Vec<Vec<f64>>> {
        let Some(BobTarget { system, hole: Hole::Ball(h) }) = &self.target else { return Ok(Vec::new()) };
        let rho = ball.radius.to_f64();
        let prec = ball.prec();
        let y = Float::with_val(prec, h.center.coord(0));
        let mut z = ball.center.clone();
        let mut ln_lam = 0.0f64;
        let mut offs: Vec<Vec<f64>> = Vec::new();
        for _ in 0..4000 {
            let lam = ln_lam.exp();
            if lam * rho > 0.05 {
                break;
            }
            let d = wrap_diff(&y, z.coord(0)).to_f64();
            let t = d / lam;
            if t.abs() <= rho {
                let p = ball.center.translate_f64(&[t]);
                if !avoid.iter().any(|r| r.contains_point(&p)) {
                    offs.push(vec![t]);
                }
            }
            ln_lam += system.circle_derivative(z.coord(0).to_f64()).ln();
            z = system.apply(&z);
        }
        offs.sort_by(|a, b| a[0].abs().partial_cmp(&b[0].abs()).unwrap());
        Ok(offs)
    }

    /// Crossing points of shallow hole strips on the unstable line.
    fn seek_torus(&self, ball: &MetricBall) -> Result<Vec<Vec<f64>>> {
        let Some(BobTarget { system, hole: Hole::Rectangle(rect) }) = &self.target else { return Ok(Vec::new()) };
        let k_max = ((0.05 / ball.radius.to_f64()).ln() / system.expansion_bounds()?.sigma1.ln()).floor().clamp(0.0, 400.0) as u32;
        let (strips, e, _) = anosov_strips(system, rect, &ball.center, &ball.radius, k_max)?;
        let mut offs: Vec<Vec<f64>> = strips
            .iter()
            .map(|s| {
                let t = 0.5 * (s.t_lo + s.t_hi);
                vec![t * e[0], t * e[1]]
            })
            .collect();
        offs.sort_by(|a, b| (a[0].hypot(a[1])).partial_cmp(&b[0].hypot(b[1])).unwrap());
        Ok(offs)
    }

    fn ball_move(&self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move> {
        let kind = engine.kind();
        let beta = engine.params.beta.unwrap();
        let prev = engine.current_ball().unwrap().clone();
        let prec = prev.prec();
        let dim = prev.dim();
        let rho = prev.radius.to_f64();
        let removals: Vec<MetricBall> = match kind {
            GameKind::Absolute | GameKind::Potential => engine.removals().last().cloned().unwrap_or_default(),
            _ => Vec::new(),
        };
        let all_removals: Vec<MetricBall> = engine.removals().iter().flatten().cloned().collect();
        let mk = |factor: f64, off: &[f64]| -> Result<MetricBall> {
            let radius = Float::with_val(prec, &prev.radius * factor);
            MetricBall::new(prev.center.translate_f64(off), radius)
        };
        let zero = vec![0.0; dim];
        let mut candidates: Vec<MetricBall> = Vec::new();
        match self.policy {
            BobPolicy::Concentric => candidates.push(mk(beta, &zero)?),
            BobPolicy::Random => {
                for _ in 0..if kind == GameKind::Absolute { 50 } else { 1 } {
                    let factor = if kind == GameKind::Schmidt { beta } else { rng.random_range(beta..=(1.0 + beta) / 2.0) };
                    let reach = rho * (1.0 - factor) * (1.0 - 1e-9);
                    candidates.push(mk(factor, &random_offset(rng, dim, reach))?);
                }
            }
            BobPolicy::HoleSeeking => {
                let reach = rho * (1.0 - beta) * (1.0 - 1e-9);
                let offs = if dim == 2 { self.seek_torus(&prev)? } else { self.seek_circle(&prev, &all_removals)? };
                for o in offs.iter().take(16) {
                    candidates.push(mk(beta, &clamp_offset(o, reach))?);
                }
                candidates.push(mk(beta, &zero)?);
            }
        }
        let clear = |b: &MetricBall| !removals.iter().any(|r| ball_intersects_ball(r, b));
        let hole_free = |b: &MetricBall| !all_removals.iter().any(|r| ball_intersects_ball(r, b));
        if kind == GameKind::Potential && self.policy == BobPolicy::HoleSeeking {
            if let Some(b) = candidates.iter().find(|b| hole_free(b)) {
                return Ok(Move::Ball { ball: b.clone() });
            }
        }
        if kind != GameKind::Absolute {
            return Ok(Move::Ball { ball: candidates.swap_remove(0) });
        }
        if let Some(b) = candidates.into_iter().find(|b| clear(b)) {
            return Ok(Move::Ball { ball: b });
        }
        // push away from the removal; room exists because β < 1/3
        let r0 = &removals[0];
        let d: Vec<f64> = prev.center.diff(&r0.center).iter().map(|v| v.to_f64()).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = if n > 0.0 { d.iter().map(|v| v / n).collect() } else { (0..dim).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect() };
        let reach = rho * (1.0 - beta) * (1.0 - 1e-9);
        let off: Vec<f64> = dir.iter().map(|v| v * reach).collect();
        Ok(Move::Ball { ball: mk(beta, &off)? })
    }

    fn atom_move(&self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move> {
        let tiling = engine.tiling().unwrap();
        let prev = engine.current_atom().unwrap();
        let kids = tiling.children(prev, prev.level() + engine.params.b.unwrap())?;
        if kids.is_empty() {
            return Err(Error::SearchFailure("no child atom at Bob's level".into()));
        }
        let mid = atom_mid(prev);
        let pick = match self.policy {
            BobPolicy::Random => rng.random_range(0..kids.len()),
            BobPolicy::Concentric => closest(&kids, &mid),
            BobPolicy::HoleSeeking => {
                let target = self.target.as_ref().and_then(|t| match &t.hole {
                    Hole::Ball(b) => {
                        let y = Float::with_val(prev.lo.prec(), b.center.coord(0));
                        shallowest_preimage(&t.system, prev, &y)
                    }
                    _ => None,
                });
                closest(&kids, target.as_ref().unwrap_or(&mid))
            }
        };
        Ok(Move::Atom { atom: kids[pick].id.clone() })
    }
}

/// The preimage of `y` in the atom with the smallest depth, if the atom's
/// forward images meet `y` before they wrap the circle.
fn shallowest_preimage(sys: &SystemSpec, atom: &Atom, y: &Float) -> Option<Float> {
    let prec = atom.lo.prec();
    let mut a = atom.lo.clone();
    let mut b = atom.hi.clone();
    for k in 0..=atom.level() + 64 {
        if Float::with_val(prec, &b - &a) >= 1 {
            return None;
        }
        let n = Float::with_val(prec, &a - y).ceil();
        if Float::with_val(prec, y + &n) <= b {
            return Some(lift_inverse_iter(sys, &Float::with_val(prec, y + &n), k));
        }
        a = sys.lift(&a);
        b = sys.lift(&b);
    }
    None
}

fn closest(kids: &[Atom], p: &Float) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, k) in kids.iter().enumerate() {
        let d = wrap_diff(&atom_mid(k), p).to_f64().abs();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

impl Strategy for BobStrategy {
    fn next_move(&mut self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move> {
        if engine.moves().is_empty() {
            return self.open(engine, rng);
        }
        match engine.kind() {
            GameKind::Modified => self.atom_move(engine, rng),
            _ => self.ball_move(engine, rng),
        }
    }
}

/// Random legal moves for either player, for rule-engine experiments.
pub struct RandomPlayer {
    pub opening: Opening,
}

impl Strategy for RandomPlayer {
    fn next_move(&mut self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move> {
        if engine.moves().is_empty() {
            return BobStrategy::new(BobPolicy::Random, self.opening.clone(), None).open(engine, rng);
        }
        if engine.whose_turn() == crate::games::Player::Bob {
            return BobStrategy::new(BobPolicy::Random, self.opening.clone(), None).next_move(engine, rng);
        }
        match engine.kind() {
            GameKind::Schmidt => {
                let prev = engine.current_ball().unwrap();
                let alpha = engine.params.alpha.unwrap();
                let reach = prev.radius.to_f64() * (1.0 - alpha) * (1.0 - 1e-9);
                let off = random_offset(rng, prev.dim(), reach);
                let radius = Float::with_val(prev.prec(), &prev.radius * alpha);
                Ok(Move::Ball { ball: MetricBall::new(prev.center.translate_f64(&off), radius)? })
            }
            GameKind::Absolute | GameKind::Potential => {
                let prev = engine.current_ball().unwrap();
                let beta = engine.params.beta.unwrap();
                let rho = prev.radius.to_f64();
                let count = if engine.kind() == GameKind::Absolute { rng.random_range(0..=1) } else { rng.random_range(0..=3) };
                let gamma = engine.params.gamma.unwrap_or(1.0);
                let mut balls = Vec::new();
                for _ in 0..count {
                    let share = (1.0 / count as f64).powf(1.0 / gamma);
                    let r = beta * rho * share * rng.random_range(0.1..=1.0);
                    let off = random_offset(rng, prev.dim(), rho);
                    balls.push(MetricBall::new(prev.center.translate_f64(&off), Float::with_val(prev.prec(), r))?);
                }
                Ok(Move::Removal { balls })
            }
            GameKind::Modified => {
                let tiling = engine.tiling().unwrap();
                let prev = engine.current_atom().unwrap();
                let kids = tiling.children(prev, prev.level() + engine.params.a.unwrap())?;
                if kids.is_empty() {
                    return Err(Error::SearchFailure("no child atom at Alice's level".into()));
                }
                Ok(Move::Atom { atom: kids[rng.random_range(0..kids.len())].id.clone() })
            }
        }
    }
}

/// Constants of one of the three strategies, as stored with transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum StrategyConstants {
    Potential(PotentialConstants),
    Anosov(AnosovConstants),
    Modified(ModifiedConstants),
}

impl StrategyConstants {
    pub fn table(&self) -> Vec<(String, String)> {
        match self {
            StrategyConstants::Potential(k) => k.table(),
            StrategyConstants::Anosov(k) => k.table(),
            StrategyConstants::Modified(k) => k.table(),
        }
    }

    pub fn check(&self) -> Vec<String> {
        match self {
            StrategyConstants::Potential(k) => k.check(),
            StrategyConstants::Anosov(k) => k.check(),
            StrategyConstants::Modified(k) => k.check(),
        }
    }

    pub fn system(&self) -> &SystemSpec {
        match self {
            StrategyConstants::Potential(k) => &k.system,
            StrategyConstants::Anosov(k) => &k.system,
            StrategyConstants::Modified(k) => &k.system,
        }
    }

    pub fn target(&self) -> &TorusPoint {
        match self {
            StrategyConstants::Potential(k) => &k.target,
            StrategyConstants::Anosov(k) => &k.target,
            StrategyConstants::Modified(k) => &k.target,
        }
    }

    pub fn prec_for_depth(&self, depth: u32) -> u32 {
        match self {
            StrategyConstants::Potential(k) => k.prec_for_depth(depth),
            StrategyConstants::Anosov(k) => k.prec_for_depth(depth),
            StrategyConstants::Modified(k) => 128 + 2 * (k.n1 + depth * (k.a + k.b) + k.c_exponent()) * (k.sigma2.log2().ceil() as u32),
        }
    }
}

/// A ready-to-play game: setup, Alice's strategy and Bob.
pub struct PreparedGame {
    pub setup: GameSetup,
    pub alice: Box<dyn Strategy>,
    pub bob: Box<dyn Strategy>,
}

/// Wires a constants record to its game, Alice strategy and a Bob policy.
pub fn prepare_game(constants: &StrategyConstants, policy: BobPolicy, depth: u32, tiling: Option<Arc<TilingFamily>>) -> Result<PreparedGame> {
    let prec = constants.prec_for_depth(depth);
    let value = serde_json::to_value(constants).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match constants {
        StrategyConstants::Potential(k) => {
            let alice = PotentialAlice::new(k.clone(), prec);
            let target = BobTarget { system: k.system.clone(), hole: k.hole(prec) };
            let bob = BobStrategy::new(policy, Opening::Ball { dim: k.system.dim(), radius: k.rho1, prec, center: None }, Some(target));
            Ok(PreparedGame {
                setup: GameSetup {
                    params: GameParams::potential(k.beta, k.gamma),
                    system: Some(k.system.clone()),
                    target: Some(k.target.clone()),
                    tiling: None,
                    constants: Some(value),
                },
                alice: Box::new(alice),
                bob: Box::new(bob),
            })
        }
        StrategyConstants::Anosov(k) => {
            let alice = AnosovAlice::new(k.clone(), prec)?;
            let target = BobTarget { system: k.system.clone(), hole: Hole::Rectangle(k.rectangle(prec)?) };
            let bob = BobStrategy::new(policy, Opening::Ball { dim: 2, radius: k.rho, prec, center: None }, Some(target));
            Ok(PreparedGame {
                setup: GameSetup {
                    params: GameParams::schmidt(k.alpha, k.beta),
                    system: Some(k.system.clone()),
                    target: Some(k.target.clone()),
                    tiling: None,
                    constants: Some(value),
                },
                alice: Box::new(alice),
                bob: Box::new(bob),
            })
        }
        StrategyConstants::Modified(k) => {
            let tiling = match tiling {
                Some(t) => t,
                None => {
                    let mut t = TilingFamily::new(k.system.clone(), k.epsilon, k.tiling_seed)?;
                    t.a_star = Some(k.a_star);
                    Arc::new(t)
                }
            };
            let alice = ModifiedAlice::new(k.clone(), tiling.clone(), prec);
            let hole = Hole::Ball(MetricBall { center: k.target.with_prec(prec), radius: k.c(prec) });
            let bob = BobStrategy::new(policy, Opening::Atom { level: k.n1 }, Some(BobTarget { system: k.system.clone(), hole }));
            Ok(PreparedGame {
                setup: GameSetup {
                    params: GameParams::modified(k.a, k.b),
                    system: Some(k.system.clone()),
                    target: Some(k.target.clone()),
                    tiling: Some((tiling, TilingRef { epsilon: k.epsilon, seed: k.tiling_seed })),
                    constants: Some(value),
                },
                alice: Box::new(alice),
                bob: Box::new(bob),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_r_examples() {
        assert_eq!(potential_r_n(2.0, 0.5, 1.0).unwrap(), (4, 6));
        assert_eq!(potential_r_n(3.0, 1.0 / 3.0, 1.0).unwrap(), (2, 3));
        assert!(potential_r_n(2.0, 0.9, 1.0).unwrap().0 > potential_r_n(2.0, 0.5, 1.0).unwrap().0);
    }

    #[test]
    fn modified_examples() {
        assert_eq!(min_a_for_sigma(2.0), 4);
        assert_eq!(min_a_for_sigma(3.0), 3);
        let r = modified_r(0.1, 4, 2);
        assert!(0.9f64.powi(r as i32) * (6 * r) as f64 <= 1.0);
        assert!(0.9f64.powi(r as i32 - 1) * (6 * (r - 1)) as f64 >= 1.0);
    }

    #[test]
    fn avoidance_one_dimensional_example() {
        let x = TorusPoint::from_f64(&[0.5], 64);
        let (x2, av) = avoidance_choose(&x, 0.1, std::slice::from_ref(&x), 0.2).unwrap();
        let d = (x2.coord(0).to_f64() - 0.5).abs();
        assert!(d <= 0.08 + 1e-12 && d > 0.04, "{d}");
        assert_eq!(av, vec![0]);
        assert_eq!(avoidance_choose(&x, 0.1, &[], 0.2).unwrap(), (x, vec![]));
    }

    #[test]
    fn interval_avoidance() {
        let (t, av) = avoid_intervals(&[(-0.1, 0.1)], 1.0, 0.2);
        assert!((t.abs() - 0.3).abs() < 1e-12);
        assert_eq!(av, vec![0]);
    }
}
