//! f-induced ε-tilings of the circle built from Voronoi cells of a maximal
//! ε-separated set.
//!
//! Level-1 atoms are the Voronoi arcs `[L_i, R_i]` (on the lift). The level-`n`
//! atom with label `(i, t)` is `F^{-(n-1)}([L_i + t, R_i + t])` for
//! `0 ≤ t < m^{n-1}`, so atoms are computed on demand from their label and no
//! level ever has to be stored in full.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::geometry::{distance_unchecked, frac, MetricBall, TorusPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSet {
    pub epsilon: f64,
    pub points: Vec<TorusPoint>,
}

/// Greedy maximal ε-separated set over a shuffled grid of mesh ε/10.
pub fn build_separated_set(d: usize, epsilon: f64, seed: u64) -> Result<SeparatedSet> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} out of range")));
    }
    if d != 1 && d != 2 {
        return Err(Error::InvalidArgument(format!("dimension {d}")));
    }
    let per_axis = (10.0 / epsilon.min(0.5)).ceil() as usize;
    let mut grid: Vec<Vec<f64>> = match d {
        1 => (0..per_axis).map(|i| vec![i as f64 / per_axis as f64]).collect(),
        _ => (0..per_axis * per_axis)
            .map(|i| vec![(i / per_axis) as f64 / per_axis as f64, (i % per_axis) as f64 / per_axis as f64])
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grid.shuffle(&mut rng);
    let mut points: Vec<TorusPoint> = Vec::new();
    for g in grid {
        let p = TorusPoint::from_f64(&g, 64);
        if points.iter().all(|q| distance_unchecked(q, &p) >= epsilon) {
            points.push(p);
        }
    }
    Ok(SeparatedSet { epsilon, points })
}

impl SeparatedSet {
    pub fn is_separated(&self) -> bool {
        self.points
            .iter()
            .enumerate()
            .all(|(i, p)| self.points[i + 1..].iter().all(|q| distance_unchecked(p, q) >= self.epsilon))
    }

    /// Every point of a mesh-ε/10 grid lies within ε of the set.
    pub fn is_maximal_on_grid(&self) -> bool {
        let d = self.points.first().map(|p| p.dim()).unwrap_or(1);
        let per_axis = (10.0 / self.epsilon.min(0.5)).ceil() as usize;
        let n = if d == 1 { per_axis } else { per_axis * per_axis };
        (0..n).all(|i| {
            let g = if d == 1 {
                vec![i as f64 / per_axis as f64]
            } else {
                vec![(i / per_axis) as f64 / per_axis as f64, (i % per_axis) as f64 / per_axis as f64]
            };
            let p = TorusPoint::from_f64(&g, 64);
            self.points.iter().any(|q| distance_unchecked(q, &p) < self.epsilon)
        })
    }
}

/// Label of an atom: level, Voronoi cell, and lift shift `t mod m^{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomId {
    pub level: u32,
    pub cell: u32,
    #[serde(with = "integer_string")]
    pub shift: Integer,
}

mod integer_string {
    use rug::Integer;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Integer, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Integer, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<Integer>().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: AtomId,
    /// Lift interval, `lo < hi`, with `lo` in `[L_min, L_min + 1)`.
    pub lo: Float,
    pub hi: Float,
    pub base_point: TorusPoint,
    /// Lift of the base point, inside `[lo, hi]`.
    pub base_lift: Float,
    pub branch_word: Vec<u64>,
    pub enclosure: MetricBall,
    pub diameter: Float,
}

impl Atom {
    pub fn level(&self) -> u32 {
        self.id.level
    }

    /// Lebesgue measure (length).
    pub fn measure(&self) -> Float {
        self.diameter.clone()
    }

    /// `other ⊆ self` on the circle, up to relative tolerance.
    pub fn contains_atom(&self, other: &Atom) -> bool {
        let prec = self.lo.prec().max(other.lo.prec());
        let tol = Float::with_val(prec, &self.diameter * 1e-12);
        let mut off = frac(&Float::with_val(prec, &other.lo - &self.lo));
        if Float::with_val(prec, 1u32 - off.clone()) <= tol {
            off -= 1u32;
        }
        if off < Float::with_val(prec, -&tol) {
            return false;
        }
        Float::with_val(prec, &off + &other.diameter) <= Float::with_val(prec, &self.diameter + &tol)
    }

    /// Closed arcs meet.
    pub fn intersects_interval(&self, lo: &Float, hi: &Float) -> bool {
        let prec = self.lo.prec().max(lo.prec());
        // shift the query next to the atom
        let shift = Float::with_val(prec, lo - &self.lo).floor();
        for k in [-1i32, 0, 1] {
            let a = Float::with_val(prec, lo - &shift) - k;
            let b = Float::with_val(prec, hi - &shift) - k;
            if a <= self.hi && b >= self.lo {
                return true;
            }
        }
        false
    }

    pub fn contains_point(&self, z: &Float) -> bool {
        let off = frac(&Float::with_val(z.prec().max(self.lo.prec()), z - &self.lo));
        off <= self.diameter
    }
}

/// Voronoi tiling data for a circle map together with certification results.
#[derive(Debug, Clone)]
pub struct TilingFamily {
    pub sys: SystemSpec,
    pub epsilon: f64,
    pub separated: SeparatedSet,
    /// Sorted Voronoi centres.
    centres: Vec<f64>,
    /// Cell `i` is `[left[i], right[i]]` on the lift.
    left: Vec<f64>,
    right: Vec<f64>,
    pub a_star: Option<u32>,
    pub msg2: Option<(f64, f64)>,
    pub max_level: u32,
}

/// Largest level `atoms_level` will enumerate in full.
pub const LEVEL_CAP: u32 = 64;

impl TilingFamily {
    pub fn new(sys: SystemSpec, epsilon: f64, seed: u64) -> Result<Self> {
        let separated = build_separated_set(1, epsilon, seed)?;
        Self::from_separated(sys, separated)
    }

    pub fn from_separated(sys: SystemSpec, separated: SeparatedSet) -> Result<Self> {
        if !matches!(sys, SystemSpec::CircleExpanding { .. }) {
            return Err(Error::Unsupported("tilings are built for circle maps".into()));
        }
        sys.validate()?;
        let mut centres: Vec<f64> = separated.points.iter().map(|p| p.coord(0).to_f64()).collect();
        centres.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let s = centres.len();
        let mut left = vec![0.0; s];
        let mut right = vec![0.0; s];
        for i in 0..s {
            let next = if i + 1 < s { centres[i + 1] } else { centres[0] + 1.0 };
            right[i] = (centres[i] + next) / 2.0;
        }
        for i in 0..s {
            left[i] = if i == 0 { right[s - 1] - 1.0 } else { right[i - 1] };
        }
        Ok(TilingFamily {
            sys,
            epsilon: separated.epsilon,
            separated,
            centres,
            left,
            right,
            a_star: None,
            msg2: None,
            max_level: 1,
        })
    }

    fn m(&self) -> u32 {
        match self.sys {
            SystemSpec::CircleExpanding { m, .. } => m,
            _ => unreachable!(),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.centres.len()
    }

    /// Working precision adequate for atoms of level `n`.
    pub fn prec_for_level(&self, n: u32) -> u32 {
        let s2 = self.sys.expansion_bounds().map(|b| b.sigma2).unwrap_or(4.0);
        96 + (2.0 * (n.saturating_sub(1)) as f64 * s2.log2()).ceil() as u32
    }

    fn period(&self, n: u32) -> Integer {
        Integer::from(self.m()).pow(n - 1)
    }

    /// The atom with the given label.
    pub fn atom(&self, id: &AtomId) -> Result<Atom> {
        if id.level == 0 || id.cell as usize >= self.centres.len() {
            return Err(Error::InvalidArgument(format!("no atom {id:?}")));
        }
        let period = self.period(id.level);
        let mut shift = Integer::from(&id.shift % &period);
        if shift < 0 {
            shift += &period;
        }
        let prec = self.prec_for_level(id.level);
        let k = id.level - 1;
        let inv = |x: f64| -> Float {
            let s = Float::with_val(prec, x) + &shift;
            crate::dynamics::lift_inverse_iter(&self.sys, &s, k)
        };
        let lo = inv(self.left[id.cell as usize]);
        let hi = inv(self.right[id.cell as usize]);
        let base = inv(self.centres[id.cell as usize]);
        let word = digits(&shift, self.m() as u64, k);
        Ok(make_atom(AtomId { level: id.level, cell: id.cell, shift }, lo, hi, base, word))
    }

    /// All atoms of level `n`, sorted by position.
    pub fn atoms_level(&self, n: u32) -> Result<Vec<Atom>> {
        if n == 0 || n > LEVEL_CAP {
            return Err(Error::DepthCap { k: n, cap: LEVEL_CAP });
        }
        let count = self.period(n) * self.centres.len() as u32;
        if count > 5_000_000u32 {
            return Err(Error::DepthCap { k: n, cap: LEVEL_CAP });
        }
        let prec = self.prec_for_level(n);
        let mut atoms: Vec<Atom> = (0..self.centres.len())
            .map(|i| {
                let f = |x: f64| Float::with_val(prec, x);
                make_atom(
                    AtomId { level: 1, cell: i as u32, shift: Integer::new() },
                    f(self.left[i]),
                    f(self.right[i]),
                    f(self.centres[i]),
                    Vec::new(),
                )
            })
            .collect();
        // one inverse step per level: F^{-1}(atom + j), shift += j m^{level-1}
        for level in 2..=n {
            let step = self.period(level - 1);
            let mut next = Vec::with_capacity(atoms.len() * self.m() as usize);
            for j in 0..self.m() {
                for a in &atoms {
                    let lo = self.sys.lift_inverse(&(Float::with_val(prec, &a.lo) + j));
                    let hi = self.sys.lift_inverse(&(Float::with_val(prec, &a.hi) + j));
                    let base = self.sys.lift_inverse(&(Float::with_val(prec, &a.base_lift) + j));
                    let mut word = Vec::with_capacity(a.branch_word.len() + 1);
                    word.push(j as u64);
                    word.extend_from_slice(&a.branch_word);
                    let shift = &a.id.shift + Integer::from(&step * j);
                    next.push(make_atom(AtomId { level, cell: a.id.cell, shift }, lo, hi, base, word));
                }
            }
            atoms = next;
        }
        atoms.sort_by(|a, b| frac(&a.lo).partial_cmp(&frac(&b.lo)).unwrap_or(Ordering::Equal));
        Ok(atoms)
    }

    /// The level-`n` atom containing `z`.
    pub fn atom_containing(&self, z: &TorusPoint, n: u32) -> Result<Atom> {
        let prec = self.prec_for_level(n).max(z.prec());
        let zl = Float::with_val(prec, z.coord(0));
        let image = self.sys.lift_iter(&zl, n - 1);
        let base = self.left[0];
        let t = Float::with_val(prec, &image - base).floor();
        let w = Float::with_val(prec, &image - &t).to_f64();
        let cell = (0..self.centres.len())
            .find(|&i| w >= self.left[i] && w < self.right[i])
            .unwrap_or(self.centres.len() - 1);
        let shift = t.to_integer().unwrap();
        let atom = self.atom(&AtomId { level: n, cell: cell as u32, shift })?;
        let off = frac(&Float::with_val(prec, &zl - &atom.lo));
        let tol = Float::with_val(prec, &atom.diameter * 1e-9);
        let end = Float::with_val(prec, &atom.diameter - &off);
        if off < tol || end < tol {
            return Err(Error::BoundaryAmbiguity(format!("{} at level {n}", z.coord(0).to_f64())));
        }
        Ok(atom)
    }

    /// Level-`level` atoms contained in `parent`, sorted by position.
    pub fn children(&self, parent: &Atom, level: u32) -> Result<Vec<Atom>> {
        if level <= parent.level() {
            return Err(Error::InvalidArgument("children must be deeper".into()));
        }
        let prec = self.prec_for_level(level).max(parent.lo.prec());
        let a = self.sys.lift_iter(&Float::with_val(prec, &parent.lo), level - 1);
        let b = self.sys.lift_iter(&Float::with_val(prec, &parent.hi), level - 1);
        let tol = 1e-9;
        let base = self.left[0];
        let t_lo = Float::with_val(prec, &a - base).floor().to_integer().unwrap() - 1u32;
        let t_hi = Float::with_val(prec, &b - base).floor().to_integer().unwrap() + 1u32;
        let mut out = Vec::new();
        let mut t = t_lo;
        while t <= t_hi {
            for i in 0..self.centres.len() {
                let l = Float::with_val(prec, self.left[i]) + &t;
                let r = Float::with_val(prec, self.right[i]) + &t;
                let len = self.right[i] - self.left[i];
                if Float::with_val(prec, &l - &a) >= -tol * len && Float::with_val(prec, &b - &r) >= -tol * len {
                    let atom = self.atom(&AtomId { level, cell: i as u32, shift: t.clone() })?;
                    if parent.contains_atom(&atom) {
                        out.push(atom);
                    }
                }
            }
            t += 1;
        }
        Ok(out)
    }

    pub fn cell_bounds(&self, i: usize) -> (f64, f64, f64) {
        (self.left[i], self.centres[i], self.right[i])
    }
}

fn digits(n: &Integer, m: u64, k: u32) -> Vec<u64> {
    let mut out = vec![0u64; k as usize];
    let mut q = n.clone();
    for d in out.iter_mut().rev() {
        let r = q.mod_u(m as u32);
        *d = r as u64;
        q -= r;
        q /= m as u32;
    }
    out
}

fn make_atom(id: AtomId, lo: Float, hi: Float, base: Float, word: Vec<u64>) -> Atom {
    let prec = lo.prec();
    let diameter = Float::with_val(prec, &hi - &lo);
    let mid = Float::with_val(prec, &lo + &hi) / 2u32;
    let radius = Float::with_val(prec, &diameter / 2u32);
    Atom {
        id,
        enclosure: MetricBall { center: TorusPoint::new(vec![mid]), radius },
        base_point: TorusPoint::new(vec![frac(&base)]),
        base_lift: base,
        branch_word: word,
        lo,
        hi,
        diameter,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub count: usize,
    pub min_diameter: f64,
    pub max_diameter: f64,
    pub total_measure: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub levels: Vec<LevelStats>,
    pub sigma: f64,
    pub c_const: f64,
    pub log_sigma1: f64,
    pub a_star: u32,
    pub nu1_min_measure: f64,
    pub nu2_fraction: f64,
    pub condition1_ok: bool,
    pub disjoint_ok: bool,
    pub cover_ok: bool,
}

impl CertificationReport {
    /// Per-level diameter table as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,count,min_diameter,max_diameter,total_measure\n");
        for l in &self.levels {
            s.push_str(&format!("{},{},{:e},{:e},{}\n", l.level, l.count, l.min_diameter, l.max_diameter, l.total_measure));
        }
        s
    }
}

/// First atom in `sorted` (by normalized `lo`) that starts at or after `lo`.
fn fits_inside(parent: &Atom, sorted: &[Atom], keys: &[f64]) -> bool {
    let start = frac(&parent.lo).to_f64();
    let tol = parent.diameter.to_f64() * 1e-9;
    let idx = keys.partition_point(|&k| k < start - tol);
    for j in [idx, 0] {
        if let Some(c) = sorted.get(j) {
            if parent.contains_atom(c) {
                return true;
            }
        }
    }
    false
}

/// Builds levels `1..=max_n` and checks the tiling axioms, MSG0, MSG2, ν1, ν2.
pub fn certify_tiling(tiling: &mut TilingFamily, max_n: u32, seed: u64) -> Result<CertificationReport> {
    let bounds = tiling.sys.expansion_bounds()?;
    let mut levels = Vec::new();
    for n in 1..=max_n {
        levels.push(tiling.atoms_level(n)?);
    }
    let keys: Vec<Vec<f64>> = levels.iter().map(|l| l.iter().map(|a| frac(&a.lo).to_f64()).collect()).collect();

    // condition (1) on level 1 and its transport to deeper levels
    let eps = tiling.epsilon;
    let mut condition1_ok = true;
    for i in 0..tiling.cell_count() {
        let (l, c, r) = tiling.cell_bounds(i);
        let inner = (c - l).min(r - c);
        let outer = (c - l).max(r - c);
        if inner < eps / 2.0 - 1e-12 || outer > eps + 1e-12 {
            condition1_ok = false;
        }
    }
    for level in levels.iter().skip(1) {
        for a in level.iter().step_by((level.len() / 20).max(1)) {
            let k = a.level() - 1;
            let fl = tiling.sys.lift_iter(&a.lo, k);
            let fh = tiling.sys.lift_iter(&a.hi, k);
            let (l, _, r) = tiling.cell_bounds(a.id.cell as usize);
            let len = Float::with_val(fl.prec(), &fh - &fl).to_f64();
            if (len - (r - l)).abs() > 1e-9 {
                condition1_ok = false;
            }
        }
    }
    if !condition1_ok {
        return Err(Error::TilingViolation("condition (1) fails for a Voronoi cell".into()));
    }

    // disjointness and covering
    let mut stats = Vec::new();
    for (idx, level) in levels.iter().enumerate() {
        let mut total = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, 0f64);
        for (j, a) in level.iter().enumerate() {
            let d = a.diameter.to_f64();
            total += d;
            lo = lo.min(d);
            hi = hi.max(d);
            let next = &level[(j + 1) % level.len()];
            let gap = frac(&Float::with_val(a.hi.prec(), &next.lo - &a.hi)).to_f64();
            let gap = if gap > 0.5 { gap - 1.0 } else { gap };
            if gap < -1e-9 * d {
                return Err(Error::TilingViolation(format!("atoms {:?} and {:?} overlap", a.id, next.id)));
            }
            if gap > 1e-9 * d {
                return Err(Error::TilingViolation(format!("gap after atom {:?}", a.id)));
            }
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::TilingViolation(format!("level {} has total measure {total}", idx + 1)));
        }
        stats.push(LevelStats { level: idx as u32 + 1, count: level.len(), min_diameter: lo, max_diameter: hi, total_measure: total });
    }

    // MSG2: least squares on log max diameter, then the smallest valid C
    let (sigma, c_const) = if stats.len() == 1 {
        let s = bounds.sigma1.ln();
        (s, stats[0].max_diameter * s.exp())
    } else {
        let pts: Vec<(f64, f64)> = stats.iter().map(|s| (s.level as f64, s.max_diameter.ln())).collect();
        let slope = -least_squares_slope(&pts);
        let c = stats.iter().map(|s| s.max_diameter * (slope * s.level as f64).exp()).fold(0.0, f64::max);
        (slope, c)
    };
    if sigma < bounds.sigma1.ln() - 0.05 {
        return Err(Error::TilingViolation(format!("MSG2 rate {sigma} below log σ₁ − 0.05")));
    }

    // MSG0
    let mut a_star = 1u32;
    for n in 1..=max_n {
        for parent in &levels[n as usize - 1] {
            for m in (1..=max_n - n).rev() {
                let deeper = (n + m) as usize - 1;
                if !fits_inside(parent, &levels[deeper], &keys[deeper]) {
                    a_star = a_star.max(m);
                    break;
                }
            }
        }
    }
    if max_n > 1 && a_star >= max_n - 1 {
        return Err(Error::TilingViolation("MSG0: no a_* below the certified depth".into()));
    }

    // ν1
    let nu1 = stats.iter().map(|s| s.min_diameter).fold(f64::INFINITY, f64::min);
    if !(nu1 > 0.0) {
        return Err(Error::TilingViolation("an atom has zero measure".into()));
    }

    // ν2: descendants two generations down keep a fixed fraction
    let step = a_star + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nu2 = f64::INFINITY;
    if max_n > 2 * step {
        for _ in 0..20 {
            let n = rng.random_range(1..=max_n - 2 * step);
            let level = &levels[n as usize - 1];
            let omega = &level[rng.random_range(0..level.len())];
            let mut covered = 0.0;
            for theta in tiling.children(omega, n + step)? {
                let kids = tiling.children(&theta, n + 2 * step)?;
                let worst = kids.iter().map(|k| k.diameter.to_f64()).fold(f64::INFINITY, f64::min);
                if worst.is_finite() {
                    covered += worst;
                }
            }
            nu2 = nu2.min(covered / omega.diameter.to_f64());
        }
        if !(nu2 > 0.0) {
            return Err(Error::TilingViolation("ν2 fraction vanished".into()));
        }
    }

    tiling.a_star = Some(a_star);
    tiling.msg2 = Some((c_const, sigma));
    tiling.max_level = max_n;
    Ok(CertificationReport {
        levels: stats,
        sigma,
        c_const,
        log_sigma1: bounds.sigma1.ln(),
        a_star,
        nu1_min_measure: nu1,
        nu2_fraction: if nu2.is_finite() { nu2 } else { 0.0 },
        condition1_ok,
        disjoint_ok: true,
        cover_ok: true,
    })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
