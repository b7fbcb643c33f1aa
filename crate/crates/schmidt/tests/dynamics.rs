use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use schmidt_games::dynamics::*;
use schmidt_games::{ball_intersects_ball, torus_distance, MetricBall, TorusPoint};
use std::f64::consts::PI;

const P: u32 = 128;

fn pt(c: &[f64]) -> TorusPoint {
    TorusPoint::from_f64(c, P)
}

fn close(a: &TorusPoint, b: &[f64], tol: f64) -> bool {
    torus_distance(a, &pt(b)).unwrap().to_f64() < tol
}

fn wobbly() -> SystemSpec {
    SystemSpec::CircleExpanding { m: 2, delta: 0.05 }
}

#[test]
fn apply_examples() {
    assert!(close(&SystemSpec::doubling().apply(&pt(&[0.3])), &[0.6], 1e-15));
    assert!(close(&wobbly().apply(&pt(&[0.25])), &[0.55], 1e-15));
    assert!(close(&SystemSpec::CatMap.apply(&pt(&[0.2, 0.1])), &[0.5, 0.3], 1e-15));
}

#[test]
fn expansion_bound_examples() {
    let b = SystemSpec::doubling().expansion_bounds().unwrap();
    assert_eq!((b.sigma1, b.sigma2), (2.0, 2.0));
    let b = wobbly().expansion_bounds().unwrap();
    assert!((b.sigma1 - (2.0 - 0.1 * PI)).abs() < 1e-12);
    assert!((b.sigma2 - (2.0 + 0.1 * PI)).abs() < 1e-12);
    let b = SystemSpec::CatMap.expansion_bounds().unwrap();
    let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
    assert!((b.sigma1 - phi2).abs() < 1e-12 && (b.sigma2 - phi2).abs() < 1e-12);
    assert!((b.lambda.unwrap() - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
}

#[test]
fn invalid_systems_are_rejected() {
    assert!(SystemSpec::CircleExpanding { m: 2, delta: 0.2 }.validate().is_err());
    assert!(SystemSpec::CircleExpanding { m: 1, delta: 0.0 }.validate().is_err());
    assert!(SystemSpec::PerturbedCatMap { delta: 0.01 }.validate().is_err());
    assert!(SystemSpec::TorusConformal { a: 1, b: 0 }.validate().is_err());
    assert!(SystemSpec::TorusConformal { a: 1, b: 1 }.validate().is_ok());
}

#[test]
fn unstable_direction_examples() {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = pt(&[rng.random(), rng.random()]);
        let sp = unstable_direction(&SystemSpec::CatMap, &x, 20).unwrap();
        assert!((sp.e_u[1] / sp.e_u[0] - g).abs() < 1e-12);
        assert!(sp.residual < 1e-12);
        let sp0 = unstable_direction(&SystemSpec::PerturbedCatMap { delta: 0.0 }, &x, 20).unwrap();
        assert!((sp0.e_u[1] / sp0.e_u[0] - g).abs() < 1e-12);
    }
    let sp = unstable_direction(&SystemSpec::PerturbedCatMap { delta: 1e-3 }, &pt(&[0.3, 0.7]), 60).unwrap();
    assert!(sp.residual < 1e-9);
    assert!((sp.e_u[0].hypot(sp.e_u[1]) - 1.0).abs() < 1e-12);
    assert!((sp.e_s[0].hypot(sp.e_s[1]) - 1.0).abs() < 1e-12);
}

fn circle_hole(y: f64, r: f64) -> Hole {
    Hole::Ball(MetricBall::from_f64(&[y], r, P).unwrap())
}

#[test]
fn doubling_preimage_examples() {
    let sys = SystemSpec::doubling();
    let hole = circle_hole(0.0, 1.0 / 64.0);
    let one = preimage_components(&sys, &hole, 1, &Window::Whole).unwrap();
    let centres: Vec<f64> = one.iter().map(|c| c.enclosure.center.to_f64()[0]).collect();
    assert_eq!(one.len(), 2);
    for (c, want) in centres.iter().zip([0.0, 0.5]) {
        assert!((c - want).abs() < 1e-15);
    }
    assert!(one.iter().all(|c| (c.diameter.to_f64() - 1.0 / 64.0).abs() < 1e-15));
    let two = preimage_components(&sys, &hole, 2, &Window::Whole).unwrap();
    let mut centres: Vec<f64> = two.iter().map(|c| c.enclosure.center.to_f64()[0]).collect();
    centres.sort_by(f64::total_cmp);
    assert_eq!(centres.len(), 4);
    for (c, want) in centres.iter().zip([0.0, 0.25, 0.5, 0.75]) {
        assert!((c - want).abs() < 1e-15);
    }
    assert!(two.iter().all(|c| (c.diameter.to_f64() - 1.0 / 128.0).abs() < 1e-15));
}

#[test]
fn nonlinear_preimage_diameters_are_bracketed() {
    let sys = wobbly();
    let b = sys.expansion_bounds().unwrap();
    let comps = preimage_components(&sys, &circle_hole(0.3, 1e-3), 3, &Window::Whole).unwrap();
    assert_eq!(comps.len(), 8);
    for c in &comps {
        let d = c.diameter.to_f64();
        assert!(d >= 2e-3 / b.sigma2.powi(3) && d <= 2e-3 / b.sigma1.powi(3), "{d}");
        assert_eq!(c.branch_word.len(), 3);
    }
}

#[test]
fn depth_cap_is_enforced() {
    let r = preimage_components(&SystemSpec::doubling(), &circle_hole(0.0, 1e-3), DEPTH_CAP + 1, &Window::Whole);
    assert!(r.is_err());
}

#[test]
fn preimages_map_into_the_hole_and_are_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for sys in [SystemSpec::doubling(), wobbly(), SystemSpec::tripling(), SystemSpec::CircleExpanding { m: 3, delta: 0.1 }] {
        let hole = circle_hole(0.3, 2e-3);
        let Hole::Ball(hb) = &hole else { unreachable!() };
        let mut total = 0;
        for k in 1..=6 {
            let window = Window::Ball(MetricBall::from_f64(&[0.4], 0.1, P).unwrap());
            let comps = preimage_components(&sys, &hole, k, &window).unwrap();
            total += comps.len();
            for c in &comps {
                for _ in 0..10 {
                    let (lo, hi) = c.lift.clone().unwrap();
                    let t: f64 = rng.random_range(0.001..0.999);
                    let z = Float::with_val(P, &lo + Float::with_val(P, &hi - &lo) * t);
                    let img = sys.iterate(&TorusPoint::new(vec![z]), k);
                    assert!(hb.contains_point(&img));
                }
            }
            for (i, a) in comps.iter().enumerate() {
                for b in &comps[i + 1..] {
                    let (alo, ahi) = a.lift.clone().unwrap();
                    let (blo, bhi) = b.lift.clone().unwrap();
                    let dist = |x: &Float, y: &Float| {
                        let d = Float::with_val(P, x - y).to_f64();
                        (d - d.round()).abs()
                    };
                    // disjoint arcs: the centres sit at least half the summed lengths apart
                    let (ca, cb) = (Float::with_val(P, &alo + &ahi) / 2u32, Float::with_val(P, &blo + &bhi) / 2u32);
                    let half = (Float::with_val(P, &ahi - &alo).to_f64() + Float::with_val(P, &bhi - &blo).to_f64()) / 2.0;
                    assert!(dist(&ca, &cb) > half);
                }
            }
        }
        assert!(total > 0);
    }
}

#[test]
fn diameter_bracket_with_distortion() {
    let sys = wobbly();
    let b = sys.expansion_bounds().unwrap();
    let l = log_derivative_lipschitz(&sys);
    let c = 1e-3;
    let k_hat = (2.0 * l * 2.0 * c / (1.0 - 1.0 / b.sigma1)).exp();
    for k in 1..=12 {
        for comp in preimage_components(&sys, &circle_hole(0.7, c), k, &Window::Whole).unwrap() {
            let d = comp.diameter.to_f64();
            assert!(d >= 2.0 * c / (k_hat * b.sigma2.powi(k as i32)));
            assert!(d <= k_hat * 2.0 * c / b.sigma1.powi(k as i32));
        }
    }
}

#[test]
fn cat_map_rectangle_preimages_land_in_the_rectangle() {
    let sys = SystemSpec::CatMap;
    let rect = RectangleSpec::new(&sys, pt(&[0.5, 0.5]), &Float::with_val(P, 0.02)).unwrap();
    let window = Window::Ball(MetricBall::from_f64(&[0.2, 0.3], 0.1, P).unwrap());
    let hole = Hole::Rectangle(rect.clone());
    let mut seen = 0;
    for k in 0..=6 {
        for c in preimage_components(&sys, &hole, k, &window).unwrap() {
            assert!(rect.contains(&sys.iterate(&c.base_point, k)));
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn distortion_examples() {
    let z = pt(&[0.123]);
    assert_eq!(distortion_ratio(&wobbly(), &z, &z, 10), 1.0);
    assert_eq!(distortion_ratio(&SystemSpec::doubling(), &z, &pt(&[0.77]), 15), 1.0);
    let sys = wobbly();
    let b = sys.expansion_bounds().unwrap();
    let c = 1e-3;
    let k_hat = (2.0 * log_derivative_lipschitz(&sys) * 2.0 * c / (1.0 - 1.0 / b.sigma1)).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut tested = 0;
    while tested < 200 {
        let z1 = pt(&[rng.random()]);
        let k = rng.random_range(1..=20);
        let z2 = pt(&[z1.to_f64()[0] + rng.random_range(-1.0..1.0) * c / 2f64.powi(k as i32)]);
        if !bowen_ball_contains(&sys, &z1, k, c, &z2) {
            continue;
        }
        let r = distortion_ratio(&sys, &z1, &z2, k);
        assert!(r <= k_hat && r >= 1.0 / k_hat);
        tested += 1;
    }
}

#[test]
fn bowen_ball_examples() {
    let sys = SystemSpec::doubling();
    let z = pt(&[0.0]);
    let w = pt(&[0.01]);
    assert!(bowen_ball_contains(&sys, &z, 7, 0.05, &z));
    assert!(bowen_ball_contains(&sys, &z, 0, 0.05, &pt(&[0.5])));
    for k in 1..=8 {
        assert_eq!(bowen_ball_contains(&sys, &z, k, 0.05, &w), k <= 3, "k = {k}");
    }
}

#[test]
fn holonomy_examples() {
    let sys = SystemSpec::CatMap;
    let z = pt(&[0.0, 0.0]);
    let sp = unstable_direction(&sys, &z, 20).unwrap();
    let on_leaf = z.translate_f64(&[0.01 * sp.e_u[0], 0.01 * sp.e_u[1]]);
    assert!(close(&holonomy_project(&sys, &on_leaf, &z, 0.05).unwrap(), &on_leaf.to_f64(), 1e-14));
    let stable = z.translate_f64(&[0.01 * sp.e_s[0], 0.01 * sp.e_s[1]]);
    assert!(close(&holonomy_project(&sys, &stable, &z, 0.05).unwrap(), &[0.0, 0.0], 1e-14));
    assert!(holonomy_project(&sys, &pt(&[0.2, 0.2]), &z, 0.05).is_err());
    assert!(holonomy_project(&SystemSpec::doubling(), &pt(&[0.1]), &pt(&[0.1]), 0.05).is_err());
}

#[test]
fn perturbed_holonomy_is_nearly_isometric() {
    let sys = SystemSpec::PerturbedCatMap { delta: 1e-3 };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 1.0;
    for _ in 0..100 {
        let z = pt(&[rng.random(), rng.random()]);
        let zf = z.to_f64();
        let mut near = || {
            let (t, r): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..0.01));
            pt(&[zf[0] + r * t.cos(), zf[1] + r * t.sin()])
        };
        let (w1, w2) = (near(), near());
        let (h1, h2) = (holonomy_project(&sys, &w1, &z, 0.02).unwrap(), holonomy_project(&sys, &w2, &z, 0.02).unwrap());
        let sp = unstable_direction(&sys, &z, 60).unwrap();
        let du = |a: &TorusPoint, b: &TorusPoint| {
            let d: Vec<f64> = a.diff(b).iter().map(|v| v.to_f64()).collect();
            sp.coords([d[0], d[1]]).0.abs()
        };
        let (before, after) = (du(&w1, &w2), du(&h1, &h2));
        if before < 1e-6 {
            continue;
        }
        let ratio = after / before;
        worst = worst.max(ratio).max(1.0 / ratio);
    }
    assert!(worst <= 1.1, "holonomy ratio {worst}");
}

// ‖Df^k e_u‖ from the matrix product equals the sum of one-step log norms.
#[test]
fn cocycle_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for sys in [SystemSpec::CatMap, SystemSpec::PerturbedCatMap { delta: 1e-3 }] {
        for _ in 0..5 {
            let z = pt(&[rng.random(), rng.random()]);
            let e = unstable_direction(&sys, &z, 60).unwrap().e_u;
            for k in [1u32, 5, 12, 30] {
                let mut m = [[1.0, 0.0], [0.0, 1.0]];
                let mut x = z.clone();
                for _ in 0..k {
                    let j = sys.jacobian(&x.to_f64());
                    m = [
                        [j[0][0] * m[0][0] + j[0][1] * m[1][0], j[0][0] * m[0][1] + j[0][1] * m[1][1]],
                        [j[1][0] * m[0][0] + j[1][1] * m[1][0], j[1][0] * m[0][1] + j[1][1] * m[1][1]],
                    ];
                    x = sys.apply(&x);
                }
                let v = [m[0][0] * e[0] + m[0][1] * e[1], m[1][0] * e[0] + m[1][1] * e[1]];
                let direct = v[0].hypot(v[1]).ln();
                let chained = unstable_norm_product(&sys, &z, k);
                assert!((direct - chained).abs() <= 1e-10 * direct.abs().max(1.0), "k={k}: {direct} vs {chained}");
            }
        }
    }
}

#[test]
fn small_perturbations_approach_the_cat_map() {
    let x = pt(&[0.31, 0.64]);
    let cat = unstable_direction(&SystemSpec::CatMap, &x, 60).unwrap();
    let cat_b = SystemSpec::CatMap.expansion_bounds().unwrap();
    let mut last_dir = f64::INFINITY;
    let mut last_sigma = f64::INFINITY;
    for delta in [1e-3, 1e-4, 1e-5] {
        let sys = SystemSpec::PerturbedCatMap { delta };
        let sp = unstable_direction(&sys, &x, 60).unwrap();
        let dir = (sp.e_u[0] - cat.e_u[0]).hypot(sp.e_u[1] - cat.e_u[1]);
        let b = sys.expansion_bounds().unwrap();
        let sigma = (b.sigma1 - cat_b.sigma1).abs().max((b.sigma2 - cat_b.sigma2).abs());
        assert!(dir < last_dir && sigma < last_sigma);
        last_dir = dir;
        last_sigma = sigma;
    }
}

#[test]
fn inverse_branches_invert() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for sys in [SystemSpec::CatMap, SystemSpec::PerturbedCatMap { delta: 1e-3 }] {
        for _ in 0..20 {
            let x = pt(&[rng.random(), rng.random()]);
            let back = sys.inverse(&sys.apply(&x)).unwrap();
            assert!(torus_distance(&back, &x).unwrap().to_f64() < 1e-30);
        }
    }
    let sys = wobbly();
    for _ in 0..20 {
        let s = Float::with_val(P, rng.random::<f64>() * 2.0);
        let x = sys.lift_inverse(&s);
        assert!(Float::with_val(P, sys.lift(&x) - &s).abs().to_f64() < 1e-30);
    }
}

#[test]
fn components_meet_their_window() {
    let sys = SystemSpec::tripling();
    let window = MetricBall::from_f64(&[0.61], 0.02, P).unwrap();
    for k in 1..=5 {
        for c in preimage_components(&sys, &circle_hole(0.2, 1e-3), k, &Window::Ball(window.clone())).unwrap() {
            assert!(ball_intersects_ball(&c.enclosure, &window));
        }
    }
}

proptest! {
    #[test]
    fn system_config_round_trips(kind in 0usize..4, m in 2u32..5, delta in 0.0f64..1e-3, a in -3i64..4, b in 2i64..4) {
        let sys = match kind {
            0 => SystemSpec::CircleExpanding { m, delta },
            1 => SystemSpec::TorusConformal { a, b },
            2 => SystemSpec::CatMap,
            _ => SystemSpec::PerturbedCatMap { delta },
        };
        let s = serde_json::to_string(&sys).unwrap();
        let back: SystemSpec = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, sys);
    }

    #[test]
    fn circle_maps_stay_expanding(m in 2u32..6, frac in 0.0f64..0.99) {
        let delta = frac * (m as f64 - 1.0) / (2.0 * PI);
        let sys = SystemSpec::CircleExpanding { m, delta };
        let b = sys.expansion_bounds().unwrap();
        prop_assert!(b.sigma1 > 1.0 && b.sigma1 <= b.sigma2);
        for i in 0..100 {
            let d = sys.circle_derivative(i as f64 / 100.0);
            prop_assert!(d >= b.sigma1 - 1e-12 && d <= b.sigma2 + 1e-12);
        }
    }
}
