//! Connected components of `f^{-k}(hole)` meeting a window.

use rug::ops::Pow;
use rug::{Float, Integer};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::lattice::{cat_eigenbasis, lattice_points_in_eigenbox};
use super::splitting::unstable_direction;
use super::SystemSpec;
use crate::error::{Error, Result};
use crate::geometry::{ball_intersects_ball, float_to_string, frac, real, MetricBall, TorusPoint};

/// Default bound on the preimage depth `k`.
pub const DEPTH_CAP: u32 = 64;

/// `Π(y, ·)`: the parallelogram `{y + a e_u + b e_s : |a|, |b| ≤ half_size}`.
///
/// For the cat map the directions are the exact eigenvectors; for the
/// perturbed map they are the computed splitting at `center`, which makes the
/// parallelogram a first order model of the curved rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangleSpec {
    pub center: TorusPoint,
    pub half_size: Float,
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
}

impl RectangleSpec {
    /// The `c`-rectangle `Π(y, c)`, half-size `c/2`.
    pub fn new(sys: &SystemSpec, center: TorusPoint, c: &Float) -> Result<Self> {
        Self::with_half_size(sys, center, Float::with_val(c.prec(), c / 2u32))
    }

    pub fn with_half_size(sys: &SystemSpec, center: TorusPoint, half_size: Float) -> Result<Self> {
        let sp = unstable_direction(sys, &center, 60)?;
        Ok(RectangleSpec { center, half_size, e_u: sp.e_u, e_s: sp.e_s })
    }

    /// Radius of the largest ball centred at `center` inside the rectangle.
    pub fn inner_radius(&self) -> Float {
        let sin = (self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0]).abs();
        Float::with_val(self.half_size.prec(), &self.half_size * sin)
    }

    /// Coordinates of `p` relative to the centre, `(u, s)`.
    pub fn local_coords(&self, p: &TorusPoint) -> (Float, Float) {
        let d = p.diff(&self.center);
        let prec = d[0].prec();
        let det = self.e_u[0] * self.e_s[1] - self.e_u[1] * self.e_s[0];
        let u = (Float::with_val(prec, &d[0] * self.e_s[1]) - Float::with_val(prec, &d[1] * self.e_s[0])) / det;
        let s = (Float::with_val(prec, &d[1] * self.e_u[0]) - Float::with_val(prec, &d[0] * self.e_u[1])) / det;
        (u, s)
    }

    pub fn contains(&self, p: &TorusPoint) -> bool {
        let (u, s) = self.local_coords(p);
        u.abs() <= self.half_size && s.abs() <= self.half_size
    }
}

#[derive(Debug, Clone)]
pub enum Hole {
    Ball(MetricBall),
    Rectangle(RectangleSpec),
}

impl Hole {
    pub fn prec(&self) -> u32 {
        match self {
            Hole::Ball(b) => b.prec(),
            Hole::Rectangle(r) => r.center.prec().max(r.half_size.prec()),
        }
    }

    pub fn contains(&self, p: &TorusPoint) -> bool {
        match self {
            Hole::Ball(b) => b.contains_point(p),
            Hole::Rectangle(r) => r.contains(p),
        }
    }
}

/// Where components are looked for.
#[derive(Debug, Clone)]
pub enum Window {
    Whole,
    Ball(MetricBall),
    /// A circle arc given on the lift, `lo < hi` (tiling atoms).
    Arc { lo: Float, hi: Float },
}

/// A connected component `I_k` of `f^{-k}(hole)` (restricted to the window for
/// the Anosov strips).
#[derive(Debug, Clone, PartialEq)]
pub struct PreimageComponent {
    pub k: u32,
    /// Inverse branch digits, most significant first. Empty for invertible maps.
    pub branch_word: Vec<u64>,
    /// Lattice translate labelling the strip (cat map only).
    pub translate: Option<[Integer; 2]>,
    pub enclosure: MetricBall,
    /// Length on the circle; unstable width for rectangle holes.
    pub diameter: Float,
    pub base_point: TorusPoint,
    /// The component as a lift interval (circle maps only).
    pub lift: Option<(Float, Float)>,
}

impl Serialize for PreimageComponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("PreimageComponent", 6)?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("branch_word", &self.branch_word)?;
        st.serialize_field("translate", &self.translate.as_ref().map(|t| [t[0].to_string(), t[1].to_string()]))?;
        st.serialize_field("enclosure", &self.enclosure)?;
        st.serialize_field("diameter", &float_to_string(&self.diameter))?;
        st.serialize_field("base_point", &self.base_point)?;
        st.end()
    }
}

/// Components of `f^{-k}(hole)` meeting `window`, canonically ordered.
pub fn preimage_components(sys: &SystemSpec, hole: &Hole, k: u32, window: &Window) -> Result<Vec<PreimageComponent>> {
    preimage_components_capped(sys, hole, k, window, DEPTH_CAP)
}

pub fn preimage_components_capped(
    sys: &SystemSpec,
    hole: &Hole,
    k: u32,
    window: &Window,
    cap: u32,
) -> Result<Vec<PreimageComponent>> {
    if k > cap {
        return Err(Error::DepthCap { k, cap });
    }
    match (sys, hole) {
        (SystemSpec::CircleExpanding { .. }, Hole::Ball(b)) => circle_components(sys, b, k, window),
        (SystemSpec::TorusConformal { .. }, Hole::Ball(b)) => conformal_components(sys, b, k, window),
        (SystemSpec::CatMap, Hole::Rectangle(r)) => cat_components(r, k, window),
        (SystemSpec::PerturbedCatMap { delta }, Hole::Rectangle(r)) if *delta == 0.0 => cat_components(r, k, window),
        (SystemSpec::PerturbedCatMap { .. }, Hole::Rectangle(r)) => perturbed_components(sys, r, k, window),
        _ => Err(Error::Unsupported("hole shape does not match the system".into())),
    }
}

fn extra_bits(sys: &SystemSpec, k: u32) -> u32 {
    let s2 = sys.expansion_bounds().map(|b| b.sigma2).unwrap_or(4.0);
    (k as f64 * s2.log2()).ceil() as u32 + 64
}

/// `F^{-k}` on the lift.
pub(crate) fn lift_inverse_iter(sys: &SystemSpec, s: &Float, k: u32) -> Float {
    if let SystemSpec::CircleExpanding { m, delta } = *sys {
        if delta == 0.0 {
            let mk = Integer::from(m).pow(k);
            return Float::with_val(s.prec(), s / &mk);
        }
    }
    let mut x = s.clone();
    for _ in 0..k {
        x = sys.lift_inverse(&x);
    }
    x
}

fn base_m_digits(n: &Integer, m: u64, k: u32) -> Vec<u64> {
    let mut digits = vec![0u64; k as usize];
    let mut q = n.clone();
    for d in digits.iter_mut().rev() {
        let r = Integer::from(q.mod_u(m as u32));
        *d = r.to_u64().unwrap();
        q -= r;
        q /= m as u32;
    }
    digits
}

fn circle_components(sys: &SystemSpec, hole: &MetricBall, k: u32, window: &Window) -> Result<Vec<PreimageComponent>> {
    let SystemSpec::CircleExpanding { m, .. } = *sys else { unreachable!() };
    if hole.radius >= 0.25 {
        return Err(Error::HoleTooLarge);
    }
    let base_prec = match window {
        Window::Whole => hole.prec(),
        Window::Ball(w) => hole.prec().max(w.prec()),
        Window::Arc { lo, .. } => hole.prec().max(lo.prec()),
    };
    let prec = base_prec + extra_bits(sys, k);
    let y = Float::with_val(prec, hole.center.coord(0));
    let c = Float::with_val(prec, &hole.radius);
    let mk = Integer::from(m).pow(k);
    let (n_lo, n_hi) = match window {
        Window::Whole => (Integer::new(), Integer::from(&mk - 1u32)),
        Window::Ball(w) if w.radius >= 0.5 => (Integer::new(), Integer::from(&mk - 1u32)),
        Window::Ball(w) => {
            let a = Float::with_val(prec, w.center.coord(0) - &w.radius);
            let b = Float::with_val(prec, w.center.coord(0) + &w.radius);
            n_range(sys, &a, &b, &y, &c, k, &mk)
        }
        Window::Arc { lo, hi } => {
            let a = Float::with_val(prec, lo);
            let b = Float::with_val(prec, hi);
            n_range(sys, &a, &b, &y, &c, k, &mk)
        }
    };
    let mut out = Vec::new();
    let mut n = n_lo;
    while n <= n_hi {
        if out.len() > 2_000_000 {
            return Err(Error::SearchFailure("too many components".into()));
        }
        out.push(circle_component(sys, &y, &c, &n, k, &mk)?);
        n += 1;
    }
    Ok(out)
}

fn circle_component(sys: &SystemSpec, y: &Float, c: &Float, n: &Integer, k: u32, mk: &Integer) -> Result<PreimageComponent> {
    let m = sys.degree();
    let prec = y.prec();
    let lo = lift_inverse_iter(sys, &(Float::with_val(prec, y - c) + n), k);
    let hi = lift_inverse_iter(sys, &(Float::with_val(prec, y + c) + n), k);
    let base = lift_inverse_iter(sys, &(Float::with_val(prec, y + n)), k);
    let mid = Float::with_val(prec, &lo + &hi) / 2u32;
    let diameter = Float::with_val(prec, &hi - &lo);
    let radius = Float::with_val(prec, &diameter / 2u32);
    let mut nn = Integer::from(n % mk);
    if nn < 0 {
        nn += mk;
    }
    let word = base_m_digits(&nn, m, k);
    Ok(PreimageComponent {
        k,
        branch_word: word,
        translate: None,
        enclosure: MetricBall::new(TorusPoint::new(vec![mid]), radius)?,
        diameter,
        base_point: TorusPoint::new(vec![base]),
        lift: Some((lo, hi)),
    })
}

/// Components of `f^{-k}(hole)` meeting `window` for every `k` in `ks`, for
/// circle maps. The window endpoints are iterated once for the whole range.
pub fn circle_components_range(
    sys: &SystemSpec,
    hole: &MetricBall,
    ks: std::ops::RangeInclusive<u32>,
    window: &MetricBall,
    band: Option<(f64, f64)>,
) -> Result<Vec<PreimageComponent>> {
    let SystemSpec::CircleExpanding { m, .. } = *sys else {
        return Err(Error::Unsupported("circle_components_range needs a circle map".into()));
    };
    if hole.radius >= 0.25 {
        return Err(Error::HoleTooLarge);
    }
    let k_end = *ks.end();
    // pulling back contracts, so only the deepest diameter needs extra bits
    let c_bits = (1.0 / hole.radius.to_f64()).log2().max(0.0) as u32;
    let prec = hole.prec().max(window.prec()).max(extra_bits(sys, k_end) + c_bits);
    let y = Float::with_val(prec, hole.center.coord(0));
    let c = Float::with_val(prec, &hole.radius);
    let mut a = Float::with_val(prec, window.center.coord(0) - &window.radius);
    let mut b = Float::with_val(prec, window.center.coord(0) + &window.radius);
    let whole = window.radius >= 0.5;
    let mut out = Vec::new();
    for k in 0..=k_end {
        if k >= *ks.start() {
            let mk = Integer::from(m).pow(k);
            let (n_lo, n_hi) = if whole {
                (Integer::new(), Integer::from(&mk - 1u32))
            } else {
                let lo = Float::with_val(prec, Float::with_val(prec, &a - &y) - &c).ceil().to_integer().unwrap();
                let mut hi = Float::with_val(prec, Float::with_val(prec, &b - &y) + &c).floor().to_integer().unwrap();
                if Integer::from(&hi - &lo) >= mk {
                    hi = Integer::from(&lo + &mk) - 1u32;
                }
                (lo, hi)
            };
            // secant estimate of the component diameters at this depth
            let in_band = match band {
                None => true,
                Some((lo, hi)) => {
                    let slope = Float::with_val(prec, &b - &a).to_f64() / (2.0 * window.radius.to_f64());
                    let est = 2.0 * hole.radius.to_f64() / slope;
                    est >= lo && est < hi
                }
            };
            let mut n = n_lo;
            while in_band && n <= n_hi {
                if out.len() > 2_000_000 {
                    return Err(Error::SearchFailure("too many components".into()));
                }
                out.push(circle_component(sys, &y, &c, &n, k, &mk)?);
                n += 1;
            }
        }
        if k < k_end {
            a = sys.lift(&a);
            b = sys.lift(&b);
        }
    }
    Ok(out)
}

fn n_range(sys: &SystemSpec, a: &Float, b: &Float, y: &Float, c: &Float, k: u32, mk: &Integer) -> (Integer, Integer) {
    let fa = sys.lift_iter(a, k);
    let fb = sys.lift_iter(b, k);
    let lo = Float::with_val(a.prec(), &fa - y) - c;
    let hi = Float::with_val(a.prec(), &fb - y) + c;
    let lo = lo.ceil().to_integer().unwrap();
    let mut hi = hi.floor().to_integer().unwrap();
    if Integer::from(&hi - &lo) >= *mk {
        hi = Integer::from(&lo + mk) - 1u32;
    }
    (lo, hi)
}

fn gauss_pow(a: i64, b: i64, k: u32) -> (Integer, Integer) {
    let (mut re, mut im) = (Integer::from(1), Integer::from(0));
    for _ in 0..k {
        let nre = Integer::from(&re * a) - Integer::from(&im * b);
        let nim = Integer::from(&re * b) + Integer::from(&im * a);
        re = nre;
        im = nim;
    }
    (re, im)
}

/// Canonical representatives of `Z² / A Z²` for `A = a + bi`.
fn coset_reps(a: i64, b: i64) -> Vec<[i64; 2]> {
    let det = (a * a + b * b) as f64;
    let r = a.abs() + b.abs() + 1;
    let mut reps = Vec::new();
    for x in -r..=r {
        for y in -r..=r {
            // A^{-1}(x, y) in [0,1)²
            let u = (a as f64 * x as f64 + b as f64 * y as f64) / det;
            let v = (-(b as f64) * x as f64 + a as f64 * y as f64) / det;
            if (0.0..1.0 - 1e-12).contains(&u) && (0.0..1.0 - 1e-12).contains(&v) {
                reps.push([x, y]);
            }
        }
    }
    reps.sort();
    reps
}

fn coset_index(reps: &[[i64; 2]], a: i64, b: i64, d: [i64; 2]) -> u64 {
    let det = (a * a + b * b) as f64;
    for (i, r) in reps.iter().enumerate() {
        let (x, y) = ((d[0] - r[0]) as f64, (d[1] - r[1]) as f64);
        let u = (a as f64 * x + b as f64 * y) / det;
        let v = (-(b as f64) * x + a as f64 * y) / det;
        if (u - u.round()).abs() < 1e-9 && (v - v.round()).abs() < 1e-9 {
            return i as u64;
        }
    }
    unreachable!("every integer vector has a coset representative")
}

fn conformal_components(sys: &SystemSpec, hole: &MetricBall, k: u32, window: &Window) -> Result<Vec<PreimageComponent>> {
    let SystemSpec::TorusConformal { a, b } = *sys else { unreachable!() };
    if hole.radius >= 0.25 {
        return Err(Error::HoleTooLarge);
    }
    let (wc, wr) = match window {
        Window::Whole => (TorusPoint::from_f64(&[0.5, 0.5], hole.prec()), real(hole.prec(), 0.75)),
        Window::Ball(w) => (w.center.clone(), w.radius.clone()),
        Window::Arc { .. } => return Err(Error::Unsupported("arc windows are one dimensional".into())),
    };
    let prec = hole.prec().max(wc.prec()) + extra_bits(sys, k);
    let (pr, pi) = gauss_pow(a, b, k);
    let mu_k = Float::with_val(prec, (a * a + b * b) as f64).sqrt().pow(k);
    // A^k applied to the window centre, minus y.
    let (wx, wy) = (Float::with_val(prec, wc.coord(0)), Float::with_val(prec, wc.coord(1)));
    let cx = Float::with_val(prec, &wx * &pr) - Float::with_val(prec, &wy * &pi) - hole.center.coord(0);
    let cy = Float::with_val(prec, &wx * &pi) + Float::with_val(prec, &wy * &pr) - hole.center.coord(1);
    let reach = Float::with_val(prec, &mu_k * &wr) + &hole.radius;
    let x_lo = Float::with_val(prec, &cx - &reach).ceil().to_integer().unwrap();
    let x_hi = Float::with_val(prec, &cx + &reach).floor().to_integer().unwrap();
    let det_k = Float::with_val(prec, &mu_k * &mu_k);
    let comp_r = Float::with_val(prec, &hole.radius / &mu_k);
    let reps = coset_reps(a, b);
    let mut out: Vec<PreimageComponent> = Vec::new();
    let mut nx = x_lo;
    while nx <= x_hi {
        let dx = Float::with_val(prec, &cx - &nx);
        let rem = Float::with_val(prec, &reach * &reach) - Float::with_val(prec, &dx * &dx);
        if rem >= 0 {
            let h = rem.sqrt();
            let y_lo = Float::with_val(prec, &cy - &h).ceil().to_integer().unwrap();
            let y_hi = Float::with_val(prec, &cy + &h).floor().to_integer().unwrap();
            let mut ny = y_lo;
            while ny <= y_hi {
                // x = A^{-k}(y + n) = conj(A^k)(y + n) / |A|^{2k}
                let qx = Float::with_val(prec, hole.center.coord(0) + &nx);
                let qy = Float::with_val(prec, hole.center.coord(1) + &ny);
                let px = (Float::with_val(prec, &qx * &pr) + Float::with_val(prec, &qy * &pi)) / &det_k;
                let py = (Float::with_val(prec, &qy * &pr) - Float::with_val(prec, &qx * &pi)) / &det_k;
                let base = TorusPoint::new(vec![px, py]);
                let enclosure = MetricBall::new(base.clone(), comp_r.clone())?;
                let meets = match window {
                    Window::Whole => true,
                    Window::Ball(w) => ball_intersects_ball(w, &enclosure),
                    Window::Arc { .. } => false,
                };
                let dup = out.iter().any(|c| crate::geometry::distance_unchecked(&c.base_point, &base) < comp_r);
                if meets && !dup {
                    let word = conformal_word(sys, &reps, &base, k);
                    out.push(PreimageComponent {
                        k,
                        branch_word: word,
                        translate: None,
                        enclosure,
                        diameter: Float::with_val(prec, &comp_r * 2u32),
                        base_point: base,
                        lift: None,
                    });
                }
                ny += 1;
            }
        }
        nx += 1;
    }
    out.sort_by(|x, y| x.branch_word.cmp(&y.branch_word));
    Ok(out)
}

fn conformal_word(sys: &SystemSpec, reps: &[[i64; 2]], x: &TorusPoint, k: u32) -> Vec<u64> {
    let SystemSpec::TorusConformal { a, b } = *sys else { unreachable!() };
    let mut word = Vec::with_capacity(k as usize);
    let mut p = x.clone();
    for _ in 0..k {
        let prec = p.prec();
        let (x0, y0) = (p.coord(0), p.coord(1));
        let ux = Float::with_val(prec, x0 * a) - Float::with_val(prec, y0 * b);
        let uy = Float::with_val(prec, x0 * b) + Float::with_val(prec, y0 * a);
        let d = [
            ux.clone().floor().to_f64() as i64,
            uy.clone().floor().to_f64() as i64,
        ];
        word.push(coset_index(reps, a, b, d));
        p = TorusPoint::new(vec![frac(&ux), frac(&uy)]);
    }
    word
}

fn cat_components(r: &RectangleSpec, k: u32, window: &Window) -> Result<Vec<PreimageComponent>> {
    let (wc, wr) = match window {
        Window::Whole => {
            let phi2k = 2.618_033_988_749_895f64.powi(k as i32);
            if r.half_size.to_f64() * phi2k > 0.125 {
                return Err(Error::HoleTooLarge);
            }
            (r.center.clone(), real(r.center.prec(), 0.75))
        }
        Window::Ball(w) => (w.center.clone(), w.radius.clone()),
        Window::Arc { .. } => return Err(Error::Unsupported("arc windows are one dimensional".into())),
    };
    let prec = r.center.prec().max(wc.prec()).max(r.half_size.prec()) + (1.4 * k as f64) as u32 + 64;
    let (eu, es, phi2) = cat_eigenbasis(prec);
    let amp = Float::with_val(prec, phi2.pow(k));
    let hu = Float::with_val(prec, &r.half_size / &amp);
    let hs = Float::with_val(prec, &r.half_size * &amp);
    // p0 = A^{-k} y mod 1.
    let inv = super::lattice::cat_power(-(k as i64));
    let (y0, y1) = (Float::with_val(prec, r.center.coord(0)), Float::with_val(prec, r.center.coord(1)));
    let p0 = [
        frac(&(Float::with_val(prec, &y0 * &inv[0][0]) + Float::with_val(prec, &y1 * &inv[0][1]))),
        frac(&(Float::with_val(prec, &y0 * &inv[1][0]) + Float::with_val(prec, &y1 * &inv[1][1]))),
    ];
    let q = [
        Float::with_val(prec, wc.coord(0) - &p0[0]),
        Float::with_val(prec, wc.coord(1) - &p0[1]),
    ];
    let dot = |v: &[Float; 2], e: &[Float; 2]| Float::with_val(prec, &v[0] * &e[0]) + Float::with_val(prec, &v[1] * &e[1]);
    let uq = dot(&q, &eu);
    let sq = dot(&q, &es);
    let uw = Float::with_val(prec, &hu + &wr);
    let sw = Float::with_val(prec, &hs + &wr);
    let ms = lattice_points_in_eigenbox(&uq, &sq, &uw, &sw, 1_000_000)?;
    let mut out = Vec::new();
    for m in ms {
        let um = Float::with_val(prec, &m[0] * &eu[0]) + Float::with_val(prec, &m[1] * &eu[1]);
        let sm = Float::with_val(prec, &m[0] * &es[0]) + Float::with_val(prec, &m[1] * &es[1]);
        // window centre relative to the strip centre p0 + m
        let du = Float::with_val(prec, &uq - &um);
        let ds = Float::with_val(prec, &sq - &sm);
        let gu = (Float::with_val(prec, du.clone().abs() - &hu)).max(&Float::new(prec));
        let gs = (Float::with_val(prec, ds.clone().abs() - &hs)).max(&Float::new(prec));
        let dist2 = Float::with_val(prec, &gu * &gu) + Float::with_val(prec, &gs * &gs);
        if dist2 > Float::with_val(prec, &wr * &wr) {
            continue;
        }
        let clip = |c: &Float, h: &Float| {
            let lo = Float::with_val(prec, c - &wr).max(&Float::with_val(prec, -h));
            let hi = Float::with_val(prec, c + &wr).min(h);
            (lo, hi)
        };
        let (ulo, uhi) = clip(&du, &hu);
        let (slo, shi) = clip(&ds, &hs);
        let umid = Float::with_val(prec, &ulo + &uhi) / 2u32;
        let smid = Float::with_val(prec, &slo + &shi) / 2u32;
        let width = Float::with_val(prec, &uhi - &ulo);
        let height = Float::with_val(prec, &shi - &slo);
        let radius = Float::with_val(prec, Float::with_val(prec, &width * &width) + Float::with_val(prec, &height * &height)).sqrt() / 2u32;
        let mx = Float::with_val(prec, &m[0]);
        let my = Float::with_val(prec, &m[1]);
        let cx = Float::with_val(prec, &p0[0] + &mx) + Float::with_val(prec, &umid * &eu[0]) + Float::with_val(prec, &smid * &es[0]);
        let cy = Float::with_val(prec, &p0[1] + &my) + Float::with_val(prec, &umid * &eu[1]) + Float::with_val(prec, &smid * &es[1]);
        let centre = TorusPoint::new(vec![cx, cy]);
        if !(width > 0) {
            continue;
        }
        out.push(PreimageComponent {
            k,
            branch_word: Vec::new(),
            translate: Some(m),
            enclosure: MetricBall::new(centre.clone(), radius.max(&Float::with_val(prec, 1e-300)))?,
            diameter: width,
            base_point: centre,
            lift: None,
        });
    }
    out.sort_by(|a, b| a.translate.cmp(&b.translate));
    Ok(out)
}

fn perturbed_components(sys: &SystemSpec, r: &RectangleSpec, k: u32, window: &Window) -> Result<Vec<PreimageComponent>> {
    let prec = r.center.prec().max(r.half_size.prec()) + extra_bits(sys, k);
    let centre = r.center.with_prec(prec);
    let h = Float::with_val(prec, &r.half_size);
    let pull = |p: TorusPoint| -> Result<TorusPoint> {
        let mut q = p;
        for _ in 0..k {
            q = sys.inverse(&q)?;
        }
        Ok(q)
    };
    let anchor = pull(centre.clone())?;
    let ea = unstable_direction(sys, &anchor, 60)?;
    let mut points_per_side = 8usize;
    let mut last_radius: Option<f64> = None;
    loop {
        let mut pts = Vec::new();
        let n = points_per_side;
        for side in 0..4 {
            for i in 0..n {
                let t = -1.0 + 2.0 * i as f64 / n as f64;
                let (a, b) = match side {
                    0 => (t, -1.0),
                    1 => (1.0, t),
                    2 => (-t, 1.0),
                    _ => (-1.0, -t),
                };
                let dx = Float::with_val(prec, &h * (a * r.e_u[0] + b * r.e_s[0]));
                let dy = Float::with_val(prec, &h * (a * r.e_u[1] + b * r.e_s[1]));
                pts.push(pull(centre.translate(&[dx, dy]))?);
            }
        }
        pts.push(pts[0].clone());
        // bounding box in local coordinates around the anchor
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut ulo = f64::INFINITY;
        let mut uhi = f64::NEG_INFINITY;
        let mut rel = Vec::with_capacity(pts.len());
        for p in &pts {
            let d = p.diff(&anchor);
            let v = [d[0].to_f64(), d[1].to_f64()];
            for i in 0..2 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
            let (u, _) = ea.coords(v);
            ulo = ulo.min(u);
            uhi = uhi.max(u);
            rel.push(v);
        }
        let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let radius = rel.iter().map(|v| (v[0] - mid[0]).hypot(v[1] - mid[1])).fold(0.0, f64::max);
        if radius > 0.125 {
            return Err(Error::HoleTooLarge);
        }
        let stable = last_radius.map(|l| (radius - l).abs() <= 0.01 * radius).unwrap_or(false);
        if stable || points_per_side >= 1024 {
            let enclosure = MetricBall::new(anchor.translate_f64(&mid), real(prec, radius * 1.01 + 1e-300))?;
            let meets = match window {
                Window::Whole => true,
                Window::Ball(w) => ball_intersects_ball(w, &enclosure),
                Window::Arc { .. } => return Err(Error::Unsupported("arc windows are one dimensional".into())),
            };
            if !meets {
                return Ok(Vec::new());
            }
            return Ok(vec![PreimageComponent {
                k,
                branch_word: Vec::new(),
                translate: None,
                enclosure,
                diameter: real(prec, uhi - ulo),
                base_point: anchor,
                lift: None,
            }]);
        }
        last_radius = Some(radius);
        points_per_side *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DEFAULT_PREC;

    fn ball(c: &[f64], r: f64) -> MetricBall {
        MetricBall::from_f64(c, r, DEFAULT_PREC).unwrap()
    }

    #[test]
    fn doubling_examples() {
        let sys = SystemSpec::doubling();
        let hole = Hole::Ball(ball(&[0.0], 1.0 / 32.0));
        let c1 = preimage_components(&sys, &hole, 1, &Window::Whole).unwrap();
        let centres: Vec<f64> = c1.iter().map(|c| c.enclosure.center.to_f64()[0]).collect();
        assert_eq!(centres, vec![0.0, 0.5]);
        assert!(c1.iter().all(|c| c.diameter == 1.0 / 32.0));
        let c2 = preimage_components(&sys, &hole, 2, &Window::Whole).unwrap();
        let centres: Vec<f64> = c2.iter().map(|c| c.enclosure.center.to_f64()[0]).collect();
        assert_eq!(centres, vec![0.0, 0.25, 0.5, 0.75]);
        assert!(c2.iter().all(|c| c.diameter == 1.0 / 64.0));
        assert_eq!(c2[3].branch_word, vec![1, 1]);
    }

    #[test]
    fn nonlinear_diameters_bracketed() {
        let sys = SystemSpec::CircleExpanding { m: 2, delta: 0.05 };
        let hole = Hole::Ball(ball(&[0.3], 1e-3));
        let comps = preimage_components(&sys, &hole, 3, &Window::Whole).unwrap();
        assert_eq!(comps.len(), 8);
        for c in comps {
            let d = c.diameter.to_f64();
            assert!((1.61e-4..=4.17e-4).contains(&d), "diameter {d}");
            let img = sys.iterate(&c.base_point, 3);
            assert!(hole.contains(&img));
        }
    }

    #[test]
    fn depth_cap_enforced() {
        let sys = SystemSpec::doubling();
        let hole = Hole::Ball(ball(&[0.0], 1e-3));
        assert!(matches!(preimage_components(&sys, &hole, 65, &Window::Whole), Err(Error::DepthCap { .. })));
        assert!(matches!(
            preimage_components(&sys, &Hole::Ball(ball(&[0.0], 0.3)), 1, &Window::Whole),
            Err(Error::HoleTooLarge)
        ));
    }

    #[test]
    fn conformal_counts() {
        let sys = SystemSpec::TorusConformal { a: 1, b: 1 };
        let hole = Hole::Ball(ball(&[0.2, 0.3], 0.01));
        for k in 1..=4 {
            let comps = preimage_components(&sys, &hole, k, &Window::Whole).unwrap();
            assert_eq!(comps.len(), 1 << k, "k = {k}");
            for c in &comps {
                assert!(hole.contains(&sys.iterate(&c.base_point, k)));
            }
        }
    }

    #[test]
    fn cat_strips_map_into_rectangle() {
        let sys = SystemSpec::CatMap;
        let y = TorusPoint::from_f64(&[0.5, 0.5], 256);
        let rect = RectangleSpec::with_half_size(&sys, y, real(256, 1e-2)).unwrap();
        let window = Window::Ball(MetricBall::from_f64(&[0.2, 0.7], 0.05, 256).unwrap());
        let mut total = 0;
        for k in 0..10 {
            let comps = preimage_components(&sys, &Hole::Rectangle(rect.clone()), k, &window).unwrap();
            for c in &comps {
                assert!(rect.contains(&sys.iterate(&c.base_point, k)), "k = {k}");
            }
            total += comps.len();
        }
        assert!(total > 0);
    }

    #[test]
    fn cat_strip_through_known_point_is_found() {
        let sys = SystemSpec::CatMap;
        let x = TorusPoint::from_f64(&[0.123, 0.456], 512);
        for k in [3u32, 9, 20] {
            let y = sys.iterate(&x, k);
            let rect = RectangleSpec::with_half_size(&sys, y, real(512, 1e-9)).unwrap();
            let window = Window::Ball(MetricBall::new(x.clone(), real(512, 1e-4)).unwrap());
            let comps = preimage_components(&sys, &Hole::Rectangle(rect), k, &window).unwrap();
            assert_eq!(comps.len(), 1, "k = {k}");
            assert!(comps[0].enclosure.contains_point(&x));
        }
    }
}
