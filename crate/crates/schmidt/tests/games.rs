use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::Float;
use schmidt_games::dynamics::SystemSpec;
use schmidt_games::games::*;
use schmidt_games::strategies::{BobPolicy, BobStrategy, Opening, RandomPlayer};
use schmidt_games::tilings::TilingFamily;
use schmidt_games::{ball_intersects_ball, MetricBall, RuleViolation};
use std::sync::Arc;

const P: u32 = 128;

fn ball(c: &[f64], r: f64) -> Move {
    Move::Ball { ball: MetricBall::from_f64(c, r, P).unwrap() }
}

fn removal(rs: &[(f64, f64)]) -> Move {
    Move::Removal { balls: rs.iter().map(|&(c, r)| MetricBall::from_f64(&[c], r, P).unwrap()).collect() }
}

#[test]
fn schmidt_step_examples() {
    let mut g = GameEngine::new(GameParams::schmidt(0.5, 0.5), None).unwrap();
    g.step(Player::Bob, ball(&[0.5], 0.1)).unwrap();
    let mut h = g.clone();
    g.step(Player::Alice, ball(&[0.5], 0.05)).unwrap();
    assert!(matches!(h.step(Player::Alice, ball(&[0.5], 0.06)), Err(RuleViolation::IllegalRadius { .. })));
    assert_eq!(h.step(Player::Alice, ball(&[0.56], 0.05)), Err(RuleViolation::NotContained));
    assert!(matches!(h.step(Player::Bob, ball(&[0.5], 0.05)), Err(RuleViolation::WrongTurn(_))));
    assert_eq!(h.step(Player::Alice, removal(&[])), Err(RuleViolation::WrongMoveKind));
    assert_eq!(h.moves().len(), 1, "rejected moves leave the state alone");
}

#[test]
fn potential_step_examples() {
    let open = |gamma: f64| {
        let mut g = GameEngine::new(GameParams::potential(0.5, gamma).without_cap(), None).unwrap();
        g.step(Player::Bob, ball(&[0.5], 1.0)).unwrap();
        g
    };
    open(1.0).step(Player::Alice, removal(&[(0.1, 0.3), (0.7, 0.2)])).unwrap();
    assert!(matches!(open(1.0).step(Player::Alice, removal(&[(0.1, 0.3), (0.7, 0.3)])), Err(RuleViolation::BudgetExceeded { .. })));
    open(2.0).step(Player::Alice, removal(&[(0.1, 0.3), (0.7, 0.4)])).unwrap();
    let mut g = open(1.0);
    g.step(Player::Alice, removal(&[])).unwrap();
    assert!(matches!(g.clone().step(Player::Bob, ball(&[0.5], 0.4)), Err(RuleViolation::BobShrankTooFast { .. })));
    // Bob has no duty to dodge removals in the potential game
    g.step(Player::Bob, ball(&[0.5], 0.5)).unwrap();
}

#[test]
fn absolute_step_examples() {
    // the unit-radius example scaled by 1/10, so balls fit on the circle
    let open = || {
        let mut g = GameEngine::new(GameParams::absolute(0.3), None).unwrap();
        g.step(Player::Bob, ball(&[0.5], 0.1)).unwrap();
        g
    };
    let mut g = open();
    g.step(Player::Alice, removal(&[(0.5, 0.03)])).unwrap();
    assert!(matches!(open().step(Player::Alice, removal(&[(0.5, 0.031)])), Err(RuleViolation::RemovalTooLarge { .. })));
    assert_eq!(g.clone().step(Player::Bob, ball(&[0.52], 0.03)), Err(RuleViolation::BobInsideRemoval));
    assert!(matches!(g.clone().step(Player::Bob, ball(&[0.58], 0.02)), Err(RuleViolation::BobShrankTooFast { .. })));
    g.step(Player::Bob, ball(&[0.57], 0.03)).unwrap();
    assert!(GameParams::absolute(0.34).validate().is_err());
}

#[test]
fn modified_step_examples() {
    let tiling = Arc::new(TilingFamily::new(SystemSpec::doubling(), 0.1, 1).unwrap());
    let mut g = GameEngine::new(GameParams::modified(2, 2), Some(tiling.clone())).unwrap();
    let bob = tiling.atoms_level(3).unwrap()[4].clone();
    g.step(Player::Bob, Move::Atom { atom: bob.id.clone() }).unwrap();
    let kid = tiling.children(&bob, 5).unwrap()[0].clone();
    let mut h = g.clone();
    g.step(Player::Alice, Move::Atom { atom: kid.id }).unwrap();
    let four = tiling.children(&bob, 4).unwrap()[0].clone();
    assert_eq!(h.step(Player::Alice, Move::Atom { atom: four.id }), Err(RuleViolation::WrongLevel { expected: 5, got: 4 }));
    let stranger = tiling.atoms_level(5).unwrap().into_iter().find(|a| !bob.contains_atom(a)).unwrap();
    assert_eq!(h.step(Player::Alice, Move::Atom { atom: stranger.id }), Err(RuleViolation::NotNested));
}

/// Alice always answers with the concentric ball.
struct Concentric;

impl schmidt_games::games::Strategy for Concentric {
    fn next_move(&mut self, engine: &GameEngine, _: &mut ChaCha8Rng) -> schmidt_games::Result<Move> {
        let prev = engine.current_ball().unwrap();
        let r = Float::with_val(prev.prec(), &prev.radius * engine.params.alpha.unwrap());
        Ok(Move::Ball { ball: MetricBall::new(prev.center.clone(), r)? })
    }
}

fn schmidt_setup(alpha: f64, beta: f64) -> GameSetup {
    GameSetup { params: GameParams::schmidt(alpha, beta), system: None, target: None, tiling: None, constants: None }
}

fn opening(dim: usize, radius: f64) -> Opening {
    Opening::Ball { dim, radius, prec: P, center: None }
}

#[test]
fn depth_zero_has_only_the_opening() {
    let mut bob = BobStrategy::new(BobPolicy::Random, opening(1, 0.1), None);
    let t = play_game(&schmidt_setup(0.5, 0.5), &mut Concentric, &mut bob, 0, 3).unwrap();
    assert_eq!(t.moves.len(), 1);
    assert_eq!(t.moves[0].player, Player::Bob);
}

#[test]
fn concentric_play_decays_geometrically() {
    let depth = 30;
    let mut bob = BobStrategy::new(BobPolicy::Concentric, opening(2, 0.1), None);
    let t = play_game(&schmidt_setup(0.5, 0.5), &mut Concentric, &mut bob, depth, 1).unwrap();
    let Some(Enclosure::Ball { ball }) = &t.final_enclosure else { panic!() };
    let want = Float::with_val(P, 0.1) * Float::with_val(P, 0.25).pow(depth);
    assert!(Float::with_val(P, &ball.radius - &want).abs() <= want * 1e-12);
}

#[test]
fn potential_radii_stay_in_rule_bounds() {
    let setup = GameSetup { params: GameParams::potential(0.5, 1.0), system: None, target: None, tiling: None, constants: None };
    let mut alice = RandomPlayer { opening: opening(1, 0.1) };
    let mut bob = BobStrategy::new(BobPolicy::Random, opening(1, 0.1), None);
    let t = play_game(&setup, &mut alice, &mut bob, 40, 5).unwrap();
    assert!(t.failure.is_none());
    let Some(Enclosure::Ball { ball }) = &t.final_enclosure else { panic!() };
    let r = ball.radius.to_f64();
    assert!(r <= 0.1 && r >= 0.1 * 0.5f64.powi(80));
}

fn random_game(kind: GameKind, seed: u64, depth: u32, tiling: &Arc<TilingFamily>) -> GameTranscript {
    let (params, open, t) = match kind {
        GameKind::Schmidt => (GameParams::schmidt(0.4, 0.6), opening(2, 0.1), None),
        GameKind::Absolute => (GameParams::absolute(0.25), opening(1, 0.1), None),
        GameKind::Potential => (GameParams::potential(0.5, 1.5), opening(2, 0.1), None),
        GameKind::Modified => (GameParams::modified(2, 2), Opening::Atom { level: 2 }, Some((tiling.clone(), TilingRef { epsilon: 0.1, seed: 1 }))),
    };
    let setup = GameSetup { params, system: Some(SystemSpec::doubling()), target: None, tiling: t, constants: None };
    let mut alice = RandomPlayer { opening: open.clone() };
    let mut bob = BobStrategy::new(BobPolicy::Random, open, None);
    play_game(&setup, &mut alice, &mut bob, depth, seed).unwrap()
}

fn tiling() -> Arc<TilingFamily> {
    Arc::new(TilingFamily::new(SystemSpec::doubling(), 0.1, 1).unwrap())
}

#[test]
fn transcripts_replay_bit_for_bit() {
    let tiling = tiling();
    for kind in [GameKind::Schmidt, GameKind::Absolute, GameKind::Potential, GameKind::Modified] {
        for seed in 0..5 {
            let t = random_game(kind, seed, 12, &tiling);
            assert!(t.failure.is_none(), "{kind}: {:?}", t.failure);
            let text = t.to_jsonl();
            let back = GameTranscript::from_jsonl(&text).unwrap();
            assert_eq!(back, t);
            assert_eq!(back.to_jsonl(), text);
            let engine = replay(&back, None).unwrap();
            assert_eq!(engine.enclosure(), t.final_enclosure);
            assert_eq!(random_game(kind, seed, 12, &tiling), t);
        }
    }
}

#[test]
fn enclosures_are_nested_and_shrink() {
    let tiling = tiling();
    for kind in [GameKind::Schmidt, GameKind::Absolute, GameKind::Potential] {
        let t = random_game(kind, 9, 20, &tiling);
        let e = replay(&t, None).unwrap();
        for w in e.bob_balls().windows(2) {
            assert!(schmidt_games::ball_contains_ball(&w[0], &w[1]));
            assert!(w[1].radius <= w[0].radius);
        }
    }
    let t = random_game(GameKind::Modified, 9, 8, &tiling);
    let e = replay(&t, Some(tiling.clone())).unwrap();
    for w in e.bob_atoms().windows(2) {
        assert!(w[0].contains_atom(&w[1]) && w[1].diameter <= w[0].diameter);
    }
}

#[test]
fn schmidt_radius_law() {
    let tiling = tiling();
    let t = random_game(GameKind::Schmidt, 4, 15, &tiling);
    let e = replay(&t, None).unwrap();
    let rho = Float::with_val(P, 0.1);
    for (k, b) in e.bob_balls().iter().enumerate() {
        let want = Float::with_val(P, &rho * Float::with_val(P, 0.24).pow(k as u32));
        assert!(Float::with_val(P, &b.radius - &want).abs() <= Float::with_val(P, &want * 1e-12));
    }
    for (k, a) in e.alice_balls().iter().enumerate() {
        let want = Float::with_val(P, &rho * Float::with_val(P, 0.24).pow(k as u32)) * 0.4;
        assert!(Float::with_val(P, &a.radius - &want).abs() <= Float::with_val(P, &want * 1e-12));
    }
}

#[test]
fn absolute_final_ball_avoids_every_removal() {
    let tiling = tiling();
    for seed in 0..10 {
        let t = random_game(GameKind::Absolute, seed, 25, &tiling);
        let e = replay(&t, None).unwrap();
        let last = e.bob_balls().last().unwrap();
        for r in e.removals().iter().flatten() {
            assert!(!ball_intersects_ball(r, last));
        }
    }
}

#[test]
fn corrupt_transcripts_are_errors() {
    let tiling = tiling();
    let t = random_game(GameKind::Schmidt, 2, 5, &tiling);
    assert!(GameTranscript::from_jsonl("").is_err());
    let text = t.to_jsonl();
    let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(GameTranscript::from_jsonl(&truncated).is_err());
    let mut bad = t.clone();
    bad.moves.swap(1, 2);
    assert!(replay(&bad, None).is_err());
    let mut bad = t.clone();
    if let Move::Ball { ball } = &mut bad.moves[3].mv {
        ball.radius *= 1.01;
    }
    assert!(matches!(replay(&bad, None), Err(schmidt_games::Error::IllegalMove { turn: 3, .. })));
}

#[test]
fn illegal_strategy_moves_end_the_game() {
    struct Greedy;
    impl schmidt_games::games::Strategy for Greedy {
        fn next_move(&mut self, engine: &GameEngine, _: &mut ChaCha8Rng) -> schmidt_games::Result<Move> {
            let prev = engine.current_ball().unwrap();
            Ok(Move::Ball { ball: prev.clone() })
        }
    }
    let mut bob = BobStrategy::new(BobPolicy::Random, opening(1, 0.1), None);
    let t = play_game(&schmidt_setup(0.5, 0.5), &mut Greedy, &mut bob, 5, 0).unwrap();
    assert_eq!(t.moves.len(), 1);
    assert!(t.failure.as_deref().unwrap().contains("alice"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn params_round_trip(alpha in 0.01f64..0.99, beta in 0.01f64..0.33, gamma in 0.1f64..3.0, a in 1u32..9, b in 1u32..9) {
        for p in [GameParams::schmidt(alpha, beta), GameParams::absolute(beta), GameParams::potential(beta, gamma), GameParams::modified(a, b)] {
            let back: GameParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn random_games_are_legal(seed in 0u64..1_000_000, kind in 0usize..3) {
        let kind = [GameKind::Schmidt, GameKind::Absolute, GameKind::Potential][kind];
        let t = random_game(kind, seed, 10, &tiling());
        prop_assert!(t.failure.is_none());
        prop_assert!(replay(&t, None).is_ok());
    }
}
