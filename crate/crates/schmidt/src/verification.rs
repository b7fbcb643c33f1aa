//! Replay audits, orbit-avoidance reports, empirical distortion and the
//! survivor-set dimension estimate with its transfer-matrix oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use crate::dynamics::{bowen_ball_contains, circle_components_range, distortion_ratio, unstable_direction, unstable_norm_product, Hole, SystemSpec, Window};
use crate::error::{Error, Result};
use crate::games::{replay, Enclosure, GameEngine, GameKind, GameTranscript};
use crate::geometry::{ball_contains_ball, distance_unchecked, MetricBall, TorusPoint};
use crate::strategies::{atom_hole_components, potential_k_range_at, window_components, AnosovConstants, ModifiedConstants, PotentialConstants, StrategyConstants};
use crate::tilings::TilingFamily;

/// `min_{0 ≤ k ≤ horizon} d(f^k(x), y)` by direct iteration.
pub fn orbit_min_distance(sys: &SystemSpec, x: &TorusPoint, y: &TorusPoint, horizon: u64) -> f64 {
    orbit_min_distance_hp(sys, x, y, horizon).0.to_f64()
}

/// Exact minimum and the first `k` attaining it.
pub fn orbit_min_distance_hp(sys: &SystemSpec, x: &TorusPoint, y: &TorusPoint, horizon: u64) -> (Float, u64) {
    let mut z = x.clone();
    let mut best = distance_unchecked(&z, y);
    let mut at = 0;
    for k in 1..=horizon {
        z = sys.apply(&z);
        let d = distance_unchecked(&z, y);
        if d < best {
            best = d;
            at = k;
        }
    }
    (best, at)
}

/// Largest sampled distortion ratio over Bowen-ball pairs `z₂ ∈ B(z₁, k, c)`.
pub fn empirical_distortion(sys: &SystemSpec, c: f64, k_max: u32, samples: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = sys.dim();
    let mut worst: f64 = 1.0;
    for _ in 0..samples {
        let z1 = TorusPoint::from_f64(&(0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>(), 128);
        let k = rng.random_range(1..=k_max.max(1));
        let t: f64 = rng.random_range(-1.0..=1.0);
        let dir = if dim == 1 {
            vec![1.0]
        } else {
            match unstable_direction(sys, &z1, 60) {
                Ok(s) => s.e_u.to_vec(),
                Err(_) => continue,
            }
        };
        let scale = (-unstable_norm_product(sys, &z1, k - 1)).exp();
        let mut step = t * c * scale * 0.999;
        let z2 = loop {
            let z2 = z1.translate_f64(&dir.iter().map(|d| d * step).collect::<Vec<_>>());
            if bowen_ball_contains(sys, &z1, k, c, &z2) || step.abs() < 1e-300 {
                break z2;
            }
            step /= 2.0;
        };
        let r = distortion_ratio(sys, &z1, &z2, k);
        worst = worst.max(r).max(1.0 / r);
    }
    worst
}

/// Outcome of replaying and auditing one transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceReport {
    pub transcript_id: String,
    pub kind: GameKind,
    /// Final enclosure centre, standing in for the limit point.
    pub x_inf: Option<TorusPoint>,
    /// Horizon up to which avoidance is guaranteed and checked.
    pub horizon: u64,
    pub min_distance: f64,
    /// Distance the orbit must keep from `y`.
    pub threshold: f64,
    pub replay_ok: bool,
    /// Strategy-turn audits found every window component handled.
    pub audit_ok: bool,
    /// Preimage depths whose components were left uncovered.
    pub uncovered: Vec<u32>,
    /// Independent component enumeration at `k ≤ horizon` agrees.
    pub brute_force_ok: bool,
    /// The limit point lies in one of Alice's removals.
    pub removal_win: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl AvoidanceReport {
    fn failed(t: &GameTranscript, note: String) -> Self {
        AvoidanceReport {
            transcript_id: transcript_id(t),
            kind: t.kind,
            x_inf: None,
            horizon: 0,
            min_distance: 0.0,
            threshold: 0.0,
            replay_ok: false,
            audit_ok: false,
            uncovered: Vec::new(),
            brute_force_ok: false,
            removal_win: false,
            pass: false,
            notes: vec![note],
        }
    }
}

pub fn transcript_id(t: &GameTranscript) -> String {
    format!("{}-seed{}-depth{}", t.kind, t.seed, t.depth)
}

/// Replays `t`, audits Alice's strategy turns against `ctx` and checks the
/// final enclosure's orbit up to the guaranteed horizon. Corrupt transcripts
/// are errors; games Alice lost give a failing report.
pub fn verify_transcript(t: &GameTranscript, ctx: &StrategyConstants) -> Result<AvoidanceReport> {
    verify_transcript_with(t, ctx, None)
}

/// As [`verify_transcript`], reusing an already-built tiling.
pub fn verify_transcript_with(t: &GameTranscript, ctx: &StrategyConstants, tiling: Option<std::sync::Arc<TilingFamily>>) -> Result<AvoidanceReport> {
    let engine = replay(t, tiling)?;
    if let Some(f) = &t.failure {
        return Ok(AvoidanceReport::failed(t, f.clone()));
    }
    match ctx {
        StrategyConstants::Potential(k) => verify_potential(t, &engine, k),
        StrategyConstants::Anosov(k) => verify_anosov(t, &engine, k),
        StrategyConstants::Modified(k) => verify_modified(t, &engine, k),
    }
}

fn final_ball(engine: &GameEngine) -> Option<MetricBall> {
    match engine.enclosure()? {
        Enclosure::Ball { ball } => Some(ball),
        Enclosure::Atom { .. } => None,
    }
}

fn verify_potential(t: &GameTranscript, engine: &GameEngine, k: &PotentialConstants) -> Result<AvoidanceReport> {
    if t.kind != GameKind::Potential {
        return Err(Error::CorruptTranscript("constants do not match the game kind".into()));
    }
    let prec = k.prec_for_depth(t.depth);
    let hole = k.hole(prec);
    let r = k.r as usize;
    let bobs = engine.bob_balls();
    let removals = engine.removals();
    let mut uncovered = Vec::new();
    let mut notes = Vec::new();
    let mut step_counts = Vec::new();
    let mut i = r + 1;
    while i <= removals.len() {
        let ball = &bobs[i - 1];
        let (lo, hi) = k.window(ball.radius.to_f64());
        let wide = potential_k_range_at(&k.system, &ball.center, k.c, lo, hi, k.k_dist, 3);
        let comps = window_components(&k.system, &hole, ball, wide, lo, hi)?;
        let mut ks_seen: Vec<u32> = comps.iter().map(|c| c.k).collect();
        ks_seen.dedup();
        step_counts.push(ks_seen.len());
        if ks_seen.len() as u64 > k.n_count {
            notes.push(format!("turn {i}: {} qualifying depths exceed N = {}", ks_seen.len(), k.n_count));
        }
        for c in &comps {
            if !removals[i - 1].iter().any(|b| ball_contains_ball(b, &c.enclosure)) {
                uncovered.push(c.k);
            }
        }
        i += r;
    }
    uncovered.sort_unstable();
    uncovered.dedup();
    let audit_ok = uncovered.is_empty();
    let Some(fin) = final_ball(engine) else {
        return Ok(AvoidanceReport::failed(t, "no final enclosure".into()));
    };
    let x = fin.center.clone();
    let threshold = k.c / 2.0;
    let all_removals: Vec<&MetricBall> = removals.iter().flatten().collect();
    let removal_win = all_removals.iter().any(|b| ball_contains_ball(b, &fin) || b.contains_point(&x));
    // the last step-start turn whose window Alice handled
    let j_star = if t.depth == 0 { 0 } else { (t.depth as usize - 1) / r };
    let horizon = if j_star < 1 {
        0
    } else {
        let floor = k.window(bobs[j_star * r].radius.to_f64()).0;
        let mut h = 0u64;
        let mut lam = 0.0;
        let mut z = x.clone();
        loop {
            if 2.0 * k.c / (k.k_dist * lam_exp(lam)) < floor {
                break;
            }
            h += 1;
            lam += step_log_norm(&k.system, &z);
            z = k.system.apply(&z);
            if h > 100_000 {
                break;
            }
        }
        h.saturating_sub(1)
    };
    let (min_d, _) = orbit_min_distance_hp(&k.system, &x, &k.target.with_prec(x.prec()), horizon);
    let min_distance = min_d.to_f64();
    // brute force: no hole component at k ≤ horizon contains x unless removed
    let mut brute_force_ok = true;
    let Hole::Ball(hb) = &hole else { unreachable!() };
    if removal_win {
        notes.push("brute-force enumeration skipped".into());
    } else {
        for comp in circle_components_range(&k.system, hb, 0..=horizon as u32, &fin, None)? {
            if comp.enclosure.contains_point(&x) {
                brute_force_ok = false;
            }
        }
    }
    let orbit_ok = min_d >= threshold;
    let pass = audit_ok && (removal_win || (orbit_ok && brute_force_ok));
    if removal_win {
        notes.push("limit point lies in a removed ball".into());
    }
    Ok(AvoidanceReport {
        transcript_id: transcript_id(t),
        kind: t.kind,
        x_inf: Some(x),
        horizon,
        min_distance,
        threshold,
        replay_ok: true,
        audit_ok,
        uncovered,
        brute_force_ok,
        removal_win,
        pass,
        notes,
    })
}

fn lam_exp(l: f64) -> f64 {
    l.exp()
}

fn step_log_norm(sys: &SystemSpec, z: &TorusPoint) -> f64 {
    unstable_norm_product(sys, z, 1)
}

fn verify_anosov(t: &GameTranscript, engine: &GameEngine, k: &AnosovConstants) -> Result<AvoidanceReport> {
    if t.kind != GameKind::Schmidt {
        return Err(Error::CorruptTranscript("constants do not match the game kind".into()));
    }
    let prec = k.prec_for_depth(t.depth);
    let rect = k.rectangle(prec)?;
    let Some(fin) = final_ball(engine) else {
        return Ok(AvoidanceReport::failed(t, "no final enclosure".into()));
    };
    let x = fin.center.clone();
    let rho_f = fin.radius.to_f64();
    let h = k.h;
    let steps = t.depth / k.r;
    let mut uncovered = Vec::new();
    let mut notes = Vec::new();
    let horizon = if steps < 2 {
        0
    } else {
        let j_star = steps - 1;
        let ln_floor = k.ln_window_floor(j_star);
        let k_max = k.k_max(j_star);
        let mut z = x.clone();
        let mut v = unstable_direction(&k.system, &x, 60)?.e_u;
        let mut ln_lam = 0.0f64;
        let mut last = 0u64;
        for kk in 0..=k_max {
            if (2.0 * h / k.k_dist).ln() - ln_lam <= ln_floor {
                break;
            }
            last = kk as u64;
            let (u, s) = rect.local_coords(&z);
            let lam_rho = (ln_lam + rho_f.ln()).exp();
            let clear_u = u.to_f64().abs() > h + lam_rho * (1.0 + 1e-4);
            let clear_s = s.to_f64().abs() > h + 1.1 * lam_rho;
            if !(clear_u || clear_s) {
                uncovered.push(kk);
            }
            let j = k.system.jacobian(&z.to_f64());
            let w = [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]];
            let n = w[0].hypot(w[1]);
            ln_lam += n.ln();
            v = [w[0] / n, w[1] / n];
            z = k.system.apply(&z);
        }
        last
    };
    let audit_ok = uncovered.is_empty();
    let mut brute_force_ok = audit_ok;
    let linear = matches!(k.system, SystemSpec::CatMap) || matches!(k.system, SystemSpec::PerturbedCatMap { delta } if delta == 0.0);
    if linear {
        let hole = Hole::Rectangle(rect.clone());
        for kk in 0..=horizon as u32 {
            let comps = crate::dynamics::preimage_components_capped(&k.system, &hole, kk, &Window::Ball(fin.clone()), u32::MAX)?;
            if !comps.is_empty() {
                brute_force_ok = false;
                notes.push(format!("component of depth {kk} meets the final ball"));
            }
        }
    }
    let threshold = rect.inner_radius().to_f64();
    let (min_d, _) = orbit_min_distance_hp(&k.system, &x, &k.target.with_prec(x.prec()), horizon);
    let min_distance = min_d.to_f64();
    let pass = audit_ok && brute_force_ok && min_distance >= threshold;
    Ok(AvoidanceReport {
        transcript_id: transcript_id(t),
        kind: t.kind,
        x_inf: Some(x),
        horizon,
        min_distance,
        threshold,
        replay_ok: true,
        audit_ok,
        uncovered,
        brute_force_ok,
        removal_win: false,
        pass,
        notes,
    })
}

fn verify_modified(t: &GameTranscript, engine: &GameEngine, k: &ModifiedConstants) -> Result<AvoidanceReport> {
    if t.kind != GameKind::Modified {
        return Err(Error::CorruptTranscript("constants do not match the game kind".into()));
    }
    let alice = engine.alice_atoms();
    let r = k.r as usize;
    let steps = alice.len() / r;
    let prec = alice.last().map(|a| a.lo.prec()).unwrap_or(128) + 64;
    let c = k.c(prec);
    let y = Float::with_val(prec, k.target.coord(0));
    let mut uncovered = Vec::new();
    for j in 0..steps {
        let atom = &alice[(j + 1) * r - 1];
        let k_end = (j as u32 + 1) * k.r * (k.a + k.b);
        for (kk, _, _) in atom_hole_components(&k.system, atom, &y, &c, k_end) {
            uncovered.push(kk);
        }
    }
    uncovered.sort_unstable();
    uncovered.dedup();
    let audit_ok = uncovered.is_empty();
    let fin = engine.current_atom();
    let Some(fin) = fin else {
        return Ok(AvoidanceReport::failed(t, "no final enclosure".into()));
    };
    let mid = Float::with_val(prec, Float::with_val(prec, &fin.lo + &fin.hi) / 2u32);
    let x = TorusPoint::new(vec![crate::geometry::frac(&mid)]);
    let horizon = if steps == 0 { 0 } else { (steps as u64) * (k.r * (k.a + k.b)) as u64 - 1 };
    let (min_d, _) = orbit_min_distance_hp(&k.system, &x, &k.target.with_prec(prec), horizon);
    let half_c = Float::with_val(prec, &c / 2u32);
    let orbit_ok = steps == 0 || min_d >= half_c;
    // every tracked component of the whole game misses the final atom
    let k_end = steps as u32 * k.r * (k.a + k.b);
    let brute_force_ok = atom_hole_components(&k.system, fin, &y, &c, k_end).is_empty();
    let pass = audit_ok && orbit_ok && brute_force_ok;
    Ok(AvoidanceReport {
        transcript_id: transcript_id(t),
        kind: t.kind,
        x_inf: Some(x),
        horizon,
        min_distance: min_d.to_f64(),
        threshold: half_c.to_f64(),
        replay_ok: true,
        audit_ok,
        uncovered,
        brute_force_ok,
        removal_win: false,
        pass,
        notes: Vec::new(),
    })
}

/// Box-counting estimate of a survivor set's dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub box_sizes: Vec<f64>,
    pub counts: Vec<u64>,
    /// Least-squares slope of `log N` against `log(1/size)`.
    pub slope: f64,
    pub oracle: Option<f64>,
    pub discrepancy: Option<f64>,
}

const SURVIVOR_CAP: usize = 20_000_000;

/// Counts level-`n` branch cylinders none of whose forward images lies inside
/// the hole, for `n ≤ depth`, and fits the growth rate.
pub fn survivor_box_dimension(sys: &SystemSpec, hole: &MetricBall, depth: u32) -> Result<DimensionEstimate> {
    let SystemSpec::CircleExpanding { m, .. } = *sys else {
        return Err(Error::Unsupported("survivor dimension is implemented for circle maps".into()));
    };
    if !(5..=20).contains(&depth) {
        return Err(Error::InvalidArgument("depth must lie in 5..=20".into()));
    }
    let prec = 64 + 2 * depth * (m as f64).log2().ceil() as u32;
    let inside = |lo: &Float, hi: &Float| -> bool {
        let mid = Float::with_val(prec, lo + hi) / 2u32;
        let rad = Float::with_val(prec, hi - lo) / 2u32;
        let b = MetricBall { center: TorusPoint::new(vec![mid]), radius: rad };
        ball_contains_ball(hole, &b)
    };
    // cylinders of the current level as lifts [lo, hi] inside [0, 1]
    let mut level: Vec<(Float, Float)> = vec![(Float::with_val(prec, 0), Float::with_val(prec, 1))];
    let mut counts = Vec::new();
    let mut sizes = Vec::new();
    for n in 1..=depth {
        let mut next = Vec::new();
        for d in 0..m {
            for (lo, hi) in &level {
                let a = sys.lift_inverse(&Float::with_val(prec, lo + d));
                let b = if *hi == 1 && d + 1 == m {
                    Float::with_val(prec, 1)
                } else {
                    sys.lift_inverse(&Float::with_val(prec, hi + d))
                };
                if !inside(&a, &b) {
                    next.push((a, b));
                }
            }
            if next.len() > SURVIVOR_CAP {
                return Err(Error::InvalidArgument("too many surviving cylinders".into()));
            }
        }
        counts.push(next.len() as u64);
        sizes.push((m as f64).powi(-(n as i32)));
        level = next;
    }
    let first = (depth / 2).max(1) as usize - 1;
    let xs: Vec<f64> = sizes[first..].iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts[first..].iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    let slope = crate::tilings::least_squares_slope(&pts);
    let oracle = transfer_matrix_oracle(sys, hole);
    Ok(DimensionEstimate { box_sizes: sizes, counts, slope, oracle, discrepancy: oracle.map(|o| (slope - o).abs()) })
}

/// `log λ_max / log m` for the subshift of finite type forbidding the words
/// whose cylinders lie in the hole. Available for linear circle maps when the
/// hole is a union of cylinders of length at most 8.
pub fn transfer_matrix_oracle(sys: &SystemSpec, hole: &MetricBall) -> Option<f64> {
    let SystemSpec::CircleExpanding { m, delta } = *sys else { return None };
    if delta != 0.0 || hole.dim() != 1 {
        return None;
    }
    let prec = 256;
    let lo = Float::with_val(prec, hole.center.coord(0) - &hole.radius);
    let hi = Float::with_val(prec, hole.center.coord(0) + &hole.radius);
    let len = (m as f64).ln();
    // smallest L with both endpoints on the m^{-L} grid
    let l = (0..=8u32).find(|&l| {
        let ml = Integer::from(m).pow(l);
        [&lo, &hi].iter().all(|e| {
            let s = Float::with_val(prec, *e * &ml);
            let r = s.clone().round();
            Float::with_val(prec, &s - &r).abs() < 1e-9
        })
    })?;
    let l = l.max(1);
    let ml = Integer::from(m).pow(l).to_usize()?;
    let states = ml / m as usize;
    let forbidden = |w: usize| -> bool {
        let a = Float::with_val(prec, w) / ml as u32;
        let b = Float::with_val(prec, w + 1) / ml as u32;
        let mid = Float::with_val(prec, &a + &b) / 2u32;
        let rad = Float::with_val(prec, &b - &a) / 2u32;
        ball_contains_ball(hole, &MetricBall { center: TorusPoint::new(vec![mid]), radius: rad })
    };
    // state = last L−1 digits; appending digit d gives word w = state·m + d
    let allowed: Vec<bool> = (0..ml).map(|w| !forbidden(w)).collect();
    let mut v = vec![1.0f64; states];
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let mut nv = vec![0.0; states];
        for s in 0..states {
            for d in 0..m as usize {
                let w = s * m as usize + d;
                if allowed[w] {
                    nv[w % states] += v[s];
                }
            }
        }
        let norm: f64 = nv.iter().sum();
        if norm == 0.0 {
            return Some(0.0);
        }
        let new_lambda = norm / v.iter().sum::<f64>();
        for x in nv.iter_mut() {
            *x /= norm;
        }
        v = nv;
        if (new_lambda - lambda).abs() < 1e-14 {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    Some(lambda.ln() / len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_examples() {
        let sys = SystemSpec::doubling();
        let y = TorusPoint::from_f64(&[0.0], 64);
        let x = TorusPoint::new(vec![Float::with_val(64, 1) / 3u32]);
        assert!((orbit_min_distance(&sys, &x, &y, 10) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(orbit_min_distance(&sys, &y, &y, 5), 0.0);
        let x = TorusPoint::from_f64(&[0.1], 128);
        assert!((orbit_min_distance(&sys, &x, &y, 10) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn linear_distortion_is_one() {
        assert_eq!(empirical_distortion(&SystemSpec::doubling(), 0.01, 10, 200, 3), 1.0);
    }

    #[test]
    fn oracle_values() {
        let hole = MetricBall::from_f64(&[0.125], 0.125, 128).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let o = transfer_matrix_oracle(&SystemSpec::doubling(), &hole).unwrap();
        assert!((o - phi.ln() / 2f64.ln()).abs() < 1e-10, "{o}");
        let hole = MetricBall::from_f64(&[0.5], 1.0 / 6.0, 128).unwrap();
        let o = transfer_matrix_oracle(&SystemSpec::tripling(), &hole).unwrap();
        assert!((o - 2f64.ln() / 3f64.ln()).abs() < 1e-10, "{o}");
    }
}
