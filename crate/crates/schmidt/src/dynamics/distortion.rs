use std::f64::consts::PI;

use super::splitting::unstable_direction;
use super::SystemSpec;
use crate::geometry::{distance_unchecked, TorusPoint};

/// `log ‖Df^k(z)|E^u‖`, the sum of one-step unstable log-norms along the orbit.
/// For circle maps this is `log (F^k)'(z)`.
pub fn unstable_norm_product(sys: &SystemSpec, z: &TorusPoint, k: u32) -> f64 {
    match sys {
        SystemSpec::CircleExpanding { .. } => {
            let mut x = z.clone();
            let mut acc = 0.0;
            for _ in 0..k {
                acc += sys.circle_derivative(x.coord(0).to_f64()).ln();
                x = sys.apply(&x);
            }
            acc
        }
        SystemSpec::TorusConformal { a, b } => k as f64 * 0.5 * ((a * a + b * b) as f64).ln(),
        SystemSpec::CatMap | SystemSpec::PerturbedCatMap { .. } => {
            let mut v = unstable_direction(sys, z, 60).map(|s| s.e_u).unwrap_or([1.0, 0.618_033_988_749_895]);
            let mut x = z.clone();
            let mut acc = 0.0;
            for _ in 0..k {
                let j = sys.jacobian(&x.to_f64());
                let w = [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]];
                let n = w[0].hypot(w[1]);
                acc += n.ln();
                v = [w[0] / n, w[1] / n];
                x = sys.apply(&x);
            }
            acc
        }
    }
}

/// Ratio of unstable derivative norms of `f^k` at `z1` and `z2`.
pub fn distortion_ratio(sys: &SystemSpec, z1: &TorusPoint, z2: &TorusPoint, k: u32) -> f64 {
    if z1 == z2 {
        return 1.0;
    }
    (unstable_norm_product(sys, z1, k) - unstable_norm_product(sys, z2, k)).exp()
}

/// `w ∈ B(z, k, c)`: the first `k` iterates stay within `c`.
pub fn bowen_ball_contains(sys: &SystemSpec, z: &TorusPoint, k: u32, c: f64, w: &TorusPoint) -> bool {
    let (mut a, mut b) = (z.clone(), w.clone());
    for i in 0..k {
        if distance_unchecked(&a, &b) > c {
            return false;
        }
        if i + 1 < k {
            a = sys.apply(&a);
            b = sys.apply(&b);
        }
    }
    true
}

/// Measured Lipschitz constant of `log ‖Df|E^u‖` along unstable directions.
pub fn log_derivative_lipschitz(sys: &SystemSpec) -> f64 {
    match *sys {
        SystemSpec::CircleExpanding { m, delta } => {
            let n = 100_000;
            let mut best: f64 = 0.0;
            for i in 0..n {
                let t = 2.0 * PI * i as f64 / n as f64;
                let v = (4.0 * PI * PI * delta * t.sin() / (m as f64 + 2.0 * PI * delta * t.cos())).abs();
                best = best.max(v);
            }
            best * (1.0 + 1e-3)
        }
        SystemSpec::TorusConformal { .. } | SystemSpec::CatMap => 0.0,
        SystemSpec::PerturbedCatMap { delta } => {
            if delta == 0.0 {
                return 0.0;
            }
            let one_step = |x: &TorusPoint| -> f64 { unstable_norm_product(sys, x, 1) };
            let h = 1e-5;
            let mut best: f64 = 0.0;
            let n = 200;
            for i in 0..n {
                let x = TorusPoint::from_f64(&[(i as f64 + 0.5) / n as f64, (0.37 * i as f64).fract()], 128);
                let e = unstable_direction(sys, &x, 60).map(|s| s.e_u).unwrap_or([1.0, 0.618]);
                let y = x.translate_f64(&[h * e[0], h * e[1]]);
                best = best.max(((one_step(&y) - one_step(&x)) / h).abs());
            }
            best * 1.1
        }
    }
}
