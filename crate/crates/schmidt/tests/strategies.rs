use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use schmidt_games::dynamics::{preimage_components, Hole, SystemSpec, Window};
use schmidt_games::games::{Strategy as _, *};
use schmidt_games::strategies::*;
use schmidt_games::tilings::{certify_tiling, TilingFamily};
use schmidt_games::verification::verify_transcript_with;
use schmidt_games::{ball_contains_ball, ball_intersects_ball, torus_distance, MetricBall, TorusPoint};
use std::sync::{Arc, OnceLock};

fn pt(c: &[f64]) -> TorusPoint {
    TorusPoint::from_f64(c, 128)
}

fn doubling_constants(y: f64) -> PotentialConstants {
    derive_potential_constants(&SystemSpec::doubling(), 0.5, 1.0, 1e-4, &pt(&[y])).unwrap()
}

fn cat_constants() -> &'static AnosovConstants {
    static K: OnceLock<AnosovConstants> = OnceLock::new();
    K.get_or_init(|| derive_anosov_constants(&SystemSpec::CatMap, 0.5, 1e-3, &pt(&[0.5, 0.5])).unwrap())
}

#[test]
fn potential_r_examples() {
    assert_eq!(potential_r_n(2.0, 0.5, 1.0).unwrap(), (4, 6));
    assert_eq!(potential_r_n(3.0, 1.0 / 3.0, 1.0).unwrap(), (2, 3));
    // r = 3 would need 5 · (1/2)² ≤ 1
    assert_eq!(count_n(2.0, 3, 0.5), 5);
    assert!(potential_r_n(2.0, 0.9, 1.0).unwrap().0 > potential_r_n(2.0, 0.5, 1.0).unwrap().0);
}

#[test]
fn potential_constants_satisfy_their_inequalities() {
    for (sys, beta) in [(SystemSpec::doubling(), 0.5), (SystemSpec::doubling(), 0.3), (SystemSpec::CircleExpanding { m: 2, delta: 0.05 }, 0.3)] {
        let k = derive_potential_constants(&sys, beta, 1.0, 1e-4, &pt(&[0.3])).unwrap();
        assert!(k.check().is_empty(), "{:?}", k.check());
        let n = ((2f64.ln() + k.r as f64 * (1.0 / beta).ln()) / k.sigma1.ln()).floor() as u64 + 1;
        assert_eq!(k.n_count, n);
        assert!(n as f64 * beta.powi(k.r as i32 - 1) <= 1.0);
        assert!(count_n(k.sigma1, k.r - 1, beta) as f64 * beta.powi(k.r as i32 - 2) > 1.0, "r is minimal");
        let b2r = beta.powi(2 * k.r as i32);
        assert!(k.c <= k.c_prime * b2r / (100.0 * k.k_dist));
        assert!(k.c < k.rho1 * b2r);
        assert!(k.k_dist > 1.0 && k.k_dist <= 2.0);
        assert!(k.rho1 <= k.c_prime / 100.0);
    }
}

#[test]
fn potential_constants_reject_large_rho() {
    let r = derive_potential_constants(&SystemSpec::doubling(), 0.5, 1.0, 0.05, &pt(&[0.0]));
    assert!(matches!(r, Err(schmidt_games::Error::Infeasible(_))));
}

#[test]
fn potential_alice_waits_outside_strategy_turns() {
    let k = doubling_constants(0.0);
    let alice = PotentialAlice::new(k.clone(), 256);
    let b = MetricBall::from_f64(&[0.2], 1e-4, 256).unwrap();
    assert!(alice.removals_for(1, &b).unwrap().is_empty());
    for i in 2..=3 * k.r as usize {
        if i % k.r as usize != 1 {
            assert!(alice.removals_for(i, &b).unwrap().is_empty(), "turn {i}");
        }
    }
}

fn play(ctx: &StrategyConstants, policy: BobPolicy, depth: u32, seed: u64, tiling: Option<Arc<TilingFamily>>) -> GameTranscript {
    let mut g = prepare_game(ctx, policy, depth, tiling).unwrap();
    play_game(&g.setup, g.alice.as_mut(), g.bob.as_mut(), depth, seed).unwrap()
}

// Independent enumeration of the components the proof asks Alice to remove at
// each strategy turn: every one must sit inside a removal ball, there is at most
// one per depth k, and at most N depths qualify.
#[test]
fn potential_removals_cover_every_window_component() {
    for y in [0.0, 0.3] {
        let k = doubling_constants(y);
        let ctx = StrategyConstants::Potential(k.clone());
        let depth = 8 * k.r + 1;
        let mut seen = 0;
        for seed in 0..20 {
            let policy = if seed % 2 == 0 { BobPolicy::Random } else { BobPolicy::HoleSeeking };
            let t = play(&ctx, policy, depth, seed, None);
            assert!(t.failure.is_none(), "{:?}", t.failure);
            let e = replay(&t, None).unwrap();
            let prec = e.bob_balls()[0].prec();
            let hole = Hole::Ball(MetricBall::from_f64(&[y], k.c, prec).unwrap());
            for j in 1..=7usize {
                let i = j * k.r as usize;
                let ball = &e.bob_balls()[i];
                let removals = &e.removals()[i];
                assert!(removals.len() as u64 <= k.n_count);
                let (lo, hi) = k.window(ball.radius.to_f64());
                let mut depths = 0;
                // doubling halves lengths, so deeper components are below the window
                let k_top = (2.0 * k.c / lo).log2().ceil() as u32 + 1;
                for kk in 0..=k_top {
                    let comps: Vec<_> = preimage_components(&k.system, &hole, kk, &Window::Ball(ball.clone()))
                        .unwrap()
                        .into_iter()
                        .filter(|c| {
                            let d = c.diameter.to_f64();
                            d >= lo && d < hi
                        })
                        .collect();
                    assert!(comps.len() <= 1, "k = {kk}: {} components", comps.len());
                    if !comps.is_empty() {
                        depths += 1;
                    }
                    for c in comps {
                        assert!(removals.iter().any(|r| ball_contains_ball(r, &c.enclosure)), "seed {seed} k {kk} uncovered");
                        seen += 1;
                    }
                }
                assert!(depths as u64 <= k.n_count);
            }
        }
        assert!(seen > 0, "the oracle never found a component to check");
    }
}

// ρ_{jr+1} β^{2r} ≤ ρ_{(j+1)r+1} β^r: consecutive step windows overlap.
#[test]
fn step_windows_overlap() {
    let k = doubling_constants(0.0);
    let ctx = StrategyConstants::Potential(k.clone());
    for seed in 0..10 {
        let t = play(&ctx, BobPolicy::Random, 6 * k.r, seed, None);
        let e = replay(&t, None).unwrap();
        let radii: Vec<f64> = e.bob_balls().iter().map(|b| b.radius.to_f64()).collect();
        let r = k.r as usize;
        for j in 0..5 {
            let (floor, _) = k.window(radii[j * r]);
            let (_, ceil) = k.window(radii[(j + 1) * r]);
            assert!(floor <= ceil * (1.0 + 1e-12));
        }
    }
}

#[test]
fn strategy_moves_are_legal() {
    let ctx = StrategyConstants::Potential(derive_potential_constants(&SystemSpec::CircleExpanding { m: 2, delta: 0.05 }, 0.3, 1.0, 1e-4, &pt(&[0.3])).unwrap());
    for seed in 0..5 {
        for policy in [BobPolicy::Random, BobPolicy::Concentric, BobPolicy::HoleSeeking] {
            let t = play(&ctx, policy, 12, seed, None);
            assert!(t.failure.is_none(), "{policy:?}: {:?}", t.failure);
            replay(&t, None).unwrap();
        }
    }
}

#[test]
fn avoidance_examples() {
    let (x, av) = avoidance_choose(&pt(&[0.3]), 0.1, &[], 0.2).unwrap();
    assert_eq!(x, pt(&[0.3]));
    assert!(av.is_empty());
    let (x, av) = avoidance_choose(&pt(&[0.5]), 0.1, &[pt(&[0.5])], 0.2).unwrap();
    let d = (x.to_f64()[0] - 0.5).abs();
    assert!(d <= 0.08 && d > 0.04, "{d}");
    assert_eq!(av, vec![0]);
}

#[test]
fn avoidance_in_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let x1 = pt(&[rng.random(), rng.random()]);
        let rho = 0.05;
        let alpha = 0.2;
        let n = rng.random_range(1..=50);
        let targets: Vec<TorusPoint> = (0..n)
            .map(|_| x1.translate_f64(&[rng.random_range(-rho..rho), rng.random_range(-rho..rho)]))
            .collect();
        let (x2, av) = avoidance_choose(&x1, rho, &targets, alpha).unwrap();
        let inner = MetricBall::from_f64(&x2.to_f64(), alpha * rho, 128).unwrap();
        assert!(ball_contains_ball(&MetricBall::from_f64(&x1.to_f64(), rho, 128).unwrap(), &inner));
        for &i in &av {
            assert!(!ball_intersects_ball(&inner, &MetricBall::from_f64(&targets[i].to_f64(), alpha * rho, 128).unwrap()));
        }
        assert!(av.len() as f64 >= (eps_impl(2) * n as f64).ceil());
    }
}

#[test]
fn interval_avoidance_reaches_every_gap() {
    let (t, av) = avoid_intervals(&[(-0.01, 0.01)], 0.05, 0.01);
    assert_eq!(av, vec![0]);
    assert!(t.abs() >= 0.02 && t.abs() <= 0.05);
    let (_, av) = avoid_intervals(&[(-0.06, 0.06)], 0.05, 0.01);
    assert!(av.is_empty());
}

#[test]
fn anosov_constants_satisfy_their_inequalities() {
    let k = cat_constants();
    assert!(k.check().is_empty(), "{:?}", k.check());
    assert!(k.alpha0 < 0.25);
    let ab = k.alpha * k.beta;
    let n = ((2f64.ln() + k.r as f64 * (1.0 / ab).ln()) / k.sigma1.ln()).floor() as u64 + 1;
    assert_eq!(k.n_count, n);
    assert!((1.0 - k.eps_avoid).powi(k.r as i32) * (n as f64) < 1.0);
    let p = ab.powi(2 * k.r as i32 - 1);
    assert!(k.c <= k.alpha * k.c_prime * p / 100.0 * (1.0 + 1e-12));
    assert!(k.c < k.alpha * k.rho * p / k.c_hol);
    assert!(k.tau.powi(k.m as i32) <= k.c / 2.0 && k.c / 2.0 < k.tau.powi(k.m as i32 - 1));
    assert!((k.alpha - k.tau.powi((k.l0 + 2 * k.l2 + 1) as i32)).abs() < 1e-15);
    assert_eq!(k.c_hol, 1.0);
}

#[test]
fn unperturbed_cat_map_gives_cat_constants() {
    let mut k0 = derive_anosov_constants(&SystemSpec::PerturbedCatMap { delta: 0.0 }, 0.5, 1e-3, &pt(&[0.5, 0.5])).unwrap();
    k0.system = SystemSpec::CatMap;
    assert_eq!(&k0, cat_constants());
}

#[test]
fn anosov_constants_need_small_rho() {
    assert!(derive_anosov_constants(&SystemSpec::CatMap, 0.5, 0.01, &pt(&[0.5, 0.5])).is_err());
    assert!(derive_anosov_constants(&SystemSpec::doubling(), 0.5, 1e-3, &pt(&[0.5])).is_err());
}

#[test]
fn anosov_first_step_is_concentric() {
    let k = cat_constants();
    let ctx = StrategyConstants::Anosov(k.clone());
    let t = play(&ctx, BobPolicy::Random, k.r, 4, None);
    let e = replay(&t, None).unwrap();
    for (b, a) in e.bob_balls().iter().zip(e.alice_balls()) {
        assert_eq!(b.center, a.center);
    }
}

#[test]
fn anosov_games_pass_their_audit() {
    let k = cat_constants();
    let ctx = StrategyConstants::Anosov(k.clone());
    for (seed, policy) in [(0, BobPolicy::Random), (1, BobPolicy::HoleSeeking)] {
        let t = play(&ctx, policy, 3 * k.r, seed, None);
        assert!(t.failure.is_none(), "{:?}", t.failure);
        let rep = schmidt_games::verification::verify_transcript(&t, &ctx).unwrap();
        assert!(rep.audit_ok && rep.uncovered.is_empty() && rep.pass, "{:?}", rep.notes);
    }
}

#[test]
fn modified_constant_examples() {
    assert_eq!(min_a_for_sigma(2.0), 4);
    assert_eq!(min_a_for_sigma(3.0), 3);
    // direct scan of 0.9^r · 6r < 1
    let r = modified_r(0.1, 4, 2);
    assert!(0.9f64.powi(r as i32) * ((6 * r) as f64) < 1.0);
    assert!(0.9f64.powi(r as i32 - 1) * (6 * (r - 1)) as f64 >= 1.0);
    assert_eq!(r, 56);
}

fn certified_tiling() -> Arc<TilingFamily> {
    static T: OnceLock<Arc<TilingFamily>> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = TilingFamily::new(SystemSpec::doubling(), 0.1, 1).unwrap();
        certify_tiling(&mut t, 12, 1).unwrap();
        Arc::new(t)
    })
    .clone()
}

#[test]
fn modified_constants_satisfy_their_inequalities() {
    let tiling = certified_tiling();
    let k = derive_modified_constants(&SystemSpec::doubling(), None, &tiling, 1, &pt(&[0.0])).unwrap();
    assert!(k.check().is_empty(), "{:?}", k.check());
    assert_eq!((k.a_star, k.a, k.b), (1, 4, 2));
    assert!(k.a as f64 > 13f64.ln() / 2f64.ln());
    let s = k.n1 as i32 - ((k.a + k.b) * k.r) as i32;
    assert!(2.0 * k.epsilon / 2f64.powi(s) <= k.big_l / 100.0);
    assert!(2.0 * k.epsilon / 2f64.powi(s - 1) > k.big_l / 100.0, "n₁ is minimal");
    assert!(derive_modified_constants(&SystemSpec::doubling(), Some(1), &tiling, 1, &pt(&[0.0])).is_err());
}

#[test]
fn modified_alice_avoids_tracked_components() {
    let tiling = certified_tiling();
    let k = derive_modified_constants(&SystemSpec::doubling(), None, &tiling, 1, &pt(&[0.0])).unwrap();
    let ctx = StrategyConstants::Modified(k.clone());
    let t = play(&ctx, BobPolicy::HoleSeeking, k.r + 2, 3, Some(tiling.clone()));
    assert!(t.failure.is_none(), "{:?}", t.failure);
    let rep = verify_transcript_with(&t, &ctx, Some(tiling)).unwrap();
    assert!(rep.audit_ok && rep.pass, "{:?} {:?}", rep.uncovered, rep.notes);
}

#[test]
fn concentric_bob_in_schmidt_game() {
    let mut engine = GameEngine::new(GameParams::schmidt(0.5, 0.4), None).unwrap();
    engine.step(Player::Bob, Move::Ball { ball: MetricBall::from_f64(&[0.1, 0.2], 0.1, 128).unwrap() }).unwrap();
    engine.step(Player::Alice, Move::Ball { ball: MetricBall::from_f64(&[0.12, 0.2], 0.05, 128).unwrap() }).unwrap();
    let mut bob = BobStrategy::new(BobPolicy::Concentric, Opening::Ball { dim: 2, radius: 0.1, prec: 128, center: None }, None);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let Move::Ball { ball } = bob.next_move(&engine, &mut rng).unwrap() else { panic!() };
    assert!(torus_distance(&ball.center, &pt(&[0.12, 0.2])).unwrap().to_f64() < 1e-15);
    assert!((ball.radius.to_f64() - 0.02).abs() < 1e-15);
}

#[test]
fn random_bob_is_reproducible() {
    let ctx = StrategyConstants::Potential(doubling_constants(0.3));
    for policy in [BobPolicy::Random, BobPolicy::HoleSeeking] {
        assert_eq!(play(&ctx, policy, 10, 77, None), play(&ctx, policy, 10, 77, None));
    }
}

#[test]
fn constants_round_trip_through_json() {
    for ctx in [StrategyConstants::Potential(doubling_constants(0.3)), StrategyConstants::Anosov(cat_constants().clone())] {
        let s = serde_json::to_string(&ctx).unwrap();
        assert_eq!(serde_json::from_str::<StrategyConstants>(&s).unwrap(), ctx);
        assert!(!ctx.table().is_empty());
    }
}

#[test]
fn policies_parse() {
    assert_eq!("hole_seeking".parse::<BobPolicy>().unwrap(), BobPolicy::HoleSeeking);
    assert_eq!("random".parse::<BobPolicy>().unwrap(), BobPolicy::Random);
    assert!("lazy".parse::<BobPolicy>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimal_r_is_minimal(sigma in 1.2f64..4.0, beta in 0.05f64..0.95, gamma in 0.3f64..2.0) {
        let (r, n) = potential_r_n(sigma, beta, gamma).unwrap();
        prop_assert!(n as f64 * beta.powf((r - 1) as f64 * gamma) <= 1.0 + 1e-12);
        if r > 1 {
            let m = count_n(sigma, r - 1, beta);
            prop_assert!(m as f64 * beta.powf((r - 2) as f64 * gamma) > 1.0 + 1e-12);
        }
    }

    #[test]
    fn modified_r_is_minimal(eta in 0.05f64..0.24, a in 2u32..8, b in 2u32..8) {
        let r = modified_r(eta, a, b);
        prop_assert!((1.0 - eta).powi(r as i32) * (((a + b) * r) as f64) < 1.0);
        prop_assert!(r == 1 || (1.0 - eta).powi(r as i32 - 1) * ((a + b) * (r - 1)) as f64 >= 1.0);
    }

    #[test]
    fn one_dimensional_avoidance(x in 0.0f64..1.0, offs in prop::collection::vec(-1.0f64..1.0, 1..40), alpha in 0.01f64..0.19) {
        let rho = 0.1;
        let x1 = pt(&[x]);
        let targets: Vec<_> = offs.iter().map(|o| pt(&[x + o * rho])).collect();
        let (x2, av) = avoidance_choose(&x1, rho, &targets, alpha).unwrap();
        let d = (Float::with_val(128, x2.coord(0) - x1.coord(0)).to_f64() + 0.5).rem_euclid(1.0) - 0.5;
        prop_assert!(d.abs() <= rho * (1.0 - alpha) + 1e-12);
        prop_assert!(av.len() as f64 >= (eps_impl(1) * targets.len() as f64).ceil());
    }
}
