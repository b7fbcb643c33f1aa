//! Integer points in thin boxes aligned with the cat map eigenbasis.
//!
//! Preimages of a small parallelogram under `A^k` are strips of length
//! `~φ^{2k}` and width `~φ^{-2k}`, so the lattice translates meeting a window
//! are the integer points of a box that is extremely thin in one eigen
//! direction. Substituting `m = A^j n` rebalances the box to a roughly square
//! one with the same number of points, which is then scanned directly.

use rug::ops::Pow;
use rug::{Float, Integer};

use crate::error::{Error, Result};

/// `(e_u, e_s, φ²)` at the given precision, with `e_s = (−e_u[1], e_u[0])`.
pub fn cat_eigenbasis(prec: u32) -> ([Float; 2], [Float; 2], Float) {
    let r5 = Float::with_val(prec, 5).sqrt();
    let g = Float::with_val(prec, &r5 - 1u32) / 2u32;
    let norm = Float::with_val(prec, Float::with_val(prec, &g * &g) + 1u32).sqrt();
    let a1 = Float::with_val(prec, 1u32) / &norm;
    let a2 = Float::with_val(prec, &g / &norm);
    let phi2 = Float::with_val(prec, &r5 + 3u32) / 2u32;
    let e_s = [Float::with_val(prec, -&a2), a1.clone()];
    ([a1, a2], e_s, phi2)
}

fn fib(n: i64) -> Integer {
    if n < 0 {
        // F(-n) = (-1)^{n+1} F(n)
        let f = Integer::from(Integer::fibonacci((-n) as u32));
        if (-n) % 2 == 0 {
            -f
        } else {
            f
        }
    } else {
        Integer::from(Integer::fibonacci(n as u32))
    }
}

/// `A^j` for `A = [[2,1],[1,1]]` and any integer `j`.
pub fn cat_power(j: i64) -> [[Integer; 2]; 2] {
    if j >= 0 {
        [[fib(2 * j + 1), fib(2 * j)], [fib(2 * j), fib(2 * j - 1)]]
    } else {
        let t = -j;
        [[fib(2 * t - 1), -fib(2 * t)], [-fib(2 * t), fib(2 * t + 1)]]
    }
}

/// All `m ∈ Z²` with `|u(m) − u0| ≤ uw` and `|s(m) − s0| ≤ sw`, where
/// `u`, `s` are the orthonormal eigencoordinates of the cat map. Fails if the
/// box holds more than `limit` points.
pub fn lattice_points_in_eigenbox(u0: &Float, s0: &Float, uw: &Float, sw: &Float, limit: usize) -> Result<Vec<[Integer; 2]>> {
    let prec = u0.prec().max(s0.prec()).max(64);
    let ([a1, a2], _, phi2) = cat_eigenbasis(prec);
    let ratio = Float::with_val(prec, uw / sw).ln().to_f64();
    let j = (ratio / (2.0 * phi2.to_f64().ln())).round() as i64;
    let scale_u = Float::with_val(prec, phi2.clone().pow(-j as i32));
    let scale_s = Float::with_val(prec, phi2.pow(j as i32));
    let uc = Float::with_val(prec, u0 * &scale_u);
    let uw = Float::with_val(prec, uw * &scale_u);
    let sc = Float::with_val(prec, s0 * &scale_s);
    let sw = Float::with_val(prec, sw * &scale_s);

    let c1 = Float::with_val(prec, &a1 * &uc) - Float::with_val(prec, &a2 * &sc);
    let w1 = Float::with_val(prec, &a1 * &uw) + Float::with_val(prec, &a2 * &sw);
    let lo1 = Float::with_val(prec, &c1 - &w1).ceil().to_integer().unwrap();
    let hi1 = Float::with_val(prec, &c1 + &w1).floor().to_integer().unwrap();
    let mut out = Vec::new();
    if lo1 > hi1 {
        return Ok(out);
    }
    if Integer::from(&hi1 - &lo1) > limit as u64 {
        return Err(Error::SearchFailure("lattice box too large".into()));
    }
    let a = cat_power(j);
    let mut n1 = lo1;
    while n1 <= hi1 {
        let n1f = Float::with_val(prec, &n1);
        let t = Float::with_val(prec, &a1 * &n1f);
        let lo_u = Float::with_val(prec, &uc - &uw) - &t;
        let hi_u = Float::with_val(prec, &uc + &uw) - &t;
        let t = Float::with_val(prec, &a2 * &n1f);
        let lo_s = Float::with_val(prec, &sc - &sw) + &t;
        let hi_s = Float::with_val(prec, &sc + &sw) + &t;
        let lo = (lo_u / &a2).max(&(lo_s / &a1));
        let hi = (hi_u / &a2).min(&(hi_s / &a1));
        if lo <= hi {
            let lo2 = lo.ceil().to_integer().unwrap();
            let hi2 = hi.floor().to_integer().unwrap();
            let mut n2 = lo2;
            while n2 <= hi2 {
                let m1 = Integer::from(&a[0][0] * &n1) + Integer::from(&a[0][1] * &n2);
                let m2 = Integer::from(&a[1][0] * &n1) + Integer::from(&a[1][1] * &n2);
                out.push([m1, m2]);
                if out.len() > limit {
                    return Err(Error::SearchFailure("lattice box too large".into()));
                }
                n2 += 1;
            }
        }
        n1 += 1;
    }
    Ok(out)
}
