//! Rule-enforcing engines for the Schmidt, absolute (k = 0), potential and
//! modified games, and JSONL transcripts.
//!
//! A game of depth `d` is Bob's opening move followed by `d` rounds, each an
//! Alice move and then a Bob move.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result, RuleViolation};
use crate::geometry::{ball_contains_ball, ball_intersects_ball, float_to_string, MetricBall, TorusPoint, TOL};
use crate::tilings::{Atom, AtomId, TilingFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Schmidt,
    Absolute,
    Potential,
    Modified,
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GameKind::Schmidt => "schmidt",
            GameKind::Absolute => "absolute",
            GameKind::Potential => "potential",
            GameKind::Modified => "modified",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for GameKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schmidt" | "anosov" => Ok(GameKind::Schmidt),
            "absolute" => Ok(GameKind::Absolute),
            "potential" => Ok(GameKind::Potential),
            "modified" => Ok(GameKind::Modified),
            _ => Err(Error::InvalidArgument(format!("unknown game kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Alice,
    Bob,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::Alice => "alice",
            Player::Bob => "bob",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Move {
    Ball { ball: MetricBall },
    /// A removal family; empty is a waiting move.
    Removal { balls: Vec<MetricBall> },
    Atom { atom: AtomId },
}

/// Game parameters. Unused fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub kind: GameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    /// Largest admissible ball radius; `None` disables the cap.
    #[serde(default = "default_cap")]
    pub radius_cap: Option<f64>,
}

fn default_cap() -> Option<f64> {
    Some(0.125)
}

impl GameParams {
    pub fn schmidt(alpha: f64, beta: f64) -> Self {
        GameParams { kind: GameKind::Schmidt, alpha: Some(alpha), beta: Some(beta), gamma: None, a: None, b: None, radius_cap: default_cap() }
    }

    pub fn absolute(beta: f64) -> Self {
        GameParams { kind: GameKind::Absolute, alpha: None, beta: Some(beta), gamma: None, a: None, b: None, radius_cap: default_cap() }
    }

    pub fn potential(beta: f64, gamma: f64) -> Self {
        GameParams { kind: GameKind::Potential, alpha: None, beta: Some(beta), gamma: Some(gamma), a: None, b: None, radius_cap: default_cap() }
    }

    pub fn modified(a: u32, b: u32) -> Self {
        GameParams { kind: GameKind::Modified, alpha: None, beta: None, gamma: None, a: Some(a), b: Some(b), radius_cap: None }
    }

    pub fn without_cap(mut self) -> Self {
        self.radius_cap = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: Option<f64>| -> Result<f64> {
            match v {
                Some(x) if x > 0.0 && x < 1.0 => Ok(x),
                _ => Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)"))),
            }
        };
        match self.kind {
            GameKind::Schmidt => {
                unit("alpha", self.alpha)?;
                unit("beta", self.beta)?;
            }
            GameKind::Absolute => {
                if unit("beta", self.beta)? >= 1.0 / 3.0 {
                    return Err(Error::InvalidArgument("absolute games need beta < 1/3".into()));
                }
            }
            GameKind::Potential => {
                unit("beta", self.beta)?;
                if !matches!(self.gamma, Some(g) if g > 0.0) {
                    return Err(Error::InvalidArgument("gamma must be positive".into()));
                }
            }
            GameKind::Modified => {
                if !matches!((self.a, self.b), (Some(a), Some(b)) if a > 0 && b > 0) {
                    return Err(Error::InvalidArgument("a and b must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// What the current position confines the limit point to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Enclosure {
    Ball { ball: MetricBall },
    Atom { atom: AtomId },
}

fn s(x: &Float) -> String {
    float_to_string(x)
}

fn rel_eq(a: &Float, b: &Float) -> bool {
    let d = Float::with_val(a.prec().max(b.prec()), a - b).abs();
    d <= Float::with_val(b.prec(), b * TOL).abs()
}

/// The validating state machine shared by all four game types.
#[derive(Debug, Clone)]
pub struct GameEngine {
    pub params: GameParams,
    tiling: Option<Arc<TilingFamily>>,
    moves: Vec<(Player, Move)>,
    /// Bob's balls, or the enclosure chain in the Schmidt game.
    bob_balls: Vec<MetricBall>,
    alice_balls: Vec<MetricBall>,
    removals: Vec<Vec<MetricBall>>,
    bob_atoms: Vec<Atom>,
    alice_atoms: Vec<Atom>,
}

impl GameEngine {
    pub fn new(params: GameParams, tiling: Option<Arc<TilingFamily>>) -> Result<Self> {
        params.validate()?;
        if params.kind == GameKind::Modified && tiling.is_none() {
            return Err(Error::InvalidArgument("modified games need a tiling".into()));
        }
        Ok(GameEngine {
            params,
            tiling,
            moves: Vec::new(),
            bob_balls: Vec::new(),
            alice_balls: Vec::new(),
            removals: Vec::new(),
            bob_atoms: Vec::new(),
            alice_atoms: Vec::new(),
        })
    }

    pub fn kind(&self) -> GameKind {
        self.params.kind
    }

    pub fn tiling(&self) -> Option<&Arc<TilingFamily>> {
        self.tiling.as_ref()
    }

    pub fn whose_turn(&self) -> Player {
        if self.moves.len().is_multiple_of(2) {
            Player::Bob
        } else {
            Player::Alice
        }
    }

    pub fn moves(&self) -> &[(Player, Move)] {
        &self.moves
    }

    /// Number of Bob moves so far; Bob's `i`-th ball is `bob_balls()[i-1]`.
    pub fn bob_turns(&self) -> usize {
        self.moves.len().div_ceil(2)
    }

    pub fn bob_balls(&self) -> &[MetricBall] {
        &self.bob_balls
    }

    pub fn alice_balls(&self) -> &[MetricBall] {
        &self.alice_balls
    }

    pub fn removals(&self) -> &[Vec<MetricBall>] {
        &self.removals
    }

    pub fn bob_atoms(&self) -> &[Atom] {
        &self.bob_atoms
    }

    pub fn alice_atoms(&self) -> &[Atom] {
        &self.alice_atoms
    }

    /// The last ball or atom, the current confinement of the limit point.
    pub fn enclosure(&self) -> Option<Enclosure> {
        match self.params.kind {
            GameKind::Modified => {
                let last = if self.whose_turn() == Player::Alice { self.bob_atoms.last() } else { self.alice_atoms.last() };
                last.map(|a| Enclosure::Atom { atom: a.id.clone() })
            }
            GameKind::Schmidt => {
                let last = if self.whose_turn() == Player::Alice { self.bob_balls.last() } else { self.alice_balls.last() };
                last.map(|b| Enclosure::Ball { ball: b.clone() })
            }
            _ => self.bob_balls.last().map(|b| Enclosure::Ball { ball: b.clone() }),
        }
    }

    pub fn current_ball(&self) -> Option<&MetricBall> {
        match self.params.kind {
            GameKind::Schmidt if self.whose_turn() == Player::Bob => self.alice_balls.last(),
            GameKind::Modified => None,
            _ => self.bob_balls.last(),
        }
    }

    pub fn current_atom(&self) -> Option<&Atom> {
        if self.whose_turn() == Player::Alice {
            self.bob_atoms.last()
        } else {
            self.alice_atoms.last()
        }
    }

    fn check_cap(&self, b: &MetricBall) -> std::result::Result<(), RuleViolation> {
        if let Some(cap) = self.params.radius_cap {
            if b.radius > cap * (1.0 + TOL) {
                return Err(RuleViolation::RadiusCap(s(&b.radius)));
            }
        }
        Ok(())
    }

    fn check_dim(&self, b: &MetricBall) -> std::result::Result<(), RuleViolation> {
        match self.bob_balls.first() {
            Some(first) if first.dim() != b.dim() => Err(RuleViolation::DimensionMismatch),
            _ => Ok(()),
        }
    }

    /// Validates `mv` for `player` and appends it. The state is unchanged on error.
    pub fn step(&mut self, player: Player, mv: Move) -> std::result::Result<(), RuleViolation> {
        let turn = self.whose_turn();
        if player != turn {
            return Err(RuleViolation::WrongTurn(player.to_string()));
        }
        match (self.params.kind, player, &mv) {
            (GameKind::Schmidt, _, Move::Ball { ball }) => self.schmidt_step(player, ball)?,
            (GameKind::Absolute, Player::Alice, Move::Removal { balls }) => self.absolute_alice(balls)?,
            (GameKind::Absolute, Player::Bob, Move::Ball { ball }) => self.absolute_bob(ball)?,
            (GameKind::Potential, Player::Alice, Move::Removal { balls }) => self.potential_alice(balls)?,
            (GameKind::Potential, Player::Bob, Move::Ball { ball }) => self.potential_bob(ball)?,
            (GameKind::Modified, _, Move::Atom { atom }) => self.modified_step(player, atom)?,
            _ => return Err(RuleViolation::WrongMoveKind),
        }
        self.moves.push((player, mv));
        Ok(())
    }

    fn schmidt_step(&mut self, player: Player, ball: &MetricBall) -> std::result::Result<(), RuleViolation> {
        self.check_dim(ball)?;
        self.check_cap(ball)?;
        let prev = match player {
            Player::Bob => self.alice_balls.last(),
            Player::Alice => self.bob_balls.last(),
        };
        if let Some(prev) = prev {
            let ratio = if player == Player::Alice { self.params.alpha } else { self.params.beta }.unwrap();
            let expected = Float::with_val(prev.radius.prec(), &prev.radius * ratio);
            if !rel_eq(&ball.radius, &expected) {
                return Err(RuleViolation::IllegalRadius { expected: s(&expected), got: s(&ball.radius) });
            }
            if !ball_contains_ball(prev, ball) {
                return Err(RuleViolation::NotContained);
            }
        }
        match player {
            Player::Bob => self.bob_balls.push(ball.clone()),
            Player::Alice => self.alice_balls.push(ball.clone()),
        }
        Ok(())
    }

    fn bob_radius_floor(&self) -> Option<Float> {
        let prev = self.bob_balls.last()?;
        Some(Float::with_val(prev.radius.prec(), &prev.radius * self.params.beta.unwrap()))
    }

    fn check_bob_ball(&self, ball: &MetricBall) -> std::result::Result<(), RuleViolation> {
        self.check_dim(ball)?;
        self.check_cap(ball)?;
        if let (Some(prev), Some(floor)) = (self.bob_balls.last(), self.bob_radius_floor()) {
            if !ball_contains_ball(prev, ball) {
                return Err(RuleViolation::NotContained);
            }
            let slack = Float::with_val(floor.prec(), &floor * (1.0 - TOL));
            if ball.radius < slack {
                return Err(RuleViolation::BobShrankTooFast { min: s(&floor), got: s(&ball.radius) });
            }
        }
        Ok(())
    }

    fn absolute_alice(&mut self, balls: &[MetricBall]) -> std::result::Result<(), RuleViolation> {
        let floor = self.bob_radius_floor().unwrap();
        if balls.len() > 1 {
            return Err(RuleViolation::WrongMoveKind);
        }
        for b in balls {
            self.check_dim(b)?;
            if b.radius > Float::with_val(floor.prec(), &floor * (1.0 + TOL)) {
                return Err(RuleViolation::RemovalTooLarge { max: s(&floor), got: s(&b.radius) });
            }
        }
        self.removals.push(balls.to_vec());
        Ok(())
    }

    fn absolute_bob(&mut self, ball: &MetricBall) -> std::result::Result<(), RuleViolation> {
        self.check_bob_ball(ball)?;
        if let Some(last) = self.removals.last() {
            if last.iter().any(|r| ball_intersects_ball(r, ball)) {
                return Err(RuleViolation::BobInsideRemoval);
            }
        }
        self.bob_balls.push(ball.clone());
        Ok(())
    }

    fn potential_alice(&mut self, balls: &[MetricBall]) -> std::result::Result<(), RuleViolation> {
        let rho = &self.bob_balls.last().unwrap().radius;
        let prec = rho.prec().max(balls.iter().map(|b| b.prec()).max().unwrap_or(0));
        let (beta, gamma) = (self.params.beta.unwrap(), self.params.gamma.unwrap());
        let mut used = Float::with_val(prec, 0);
        for b in balls {
            self.check_dim(b)?;
            used += Float::with_val(prec, b.radius.clone().pow(gamma));
        }
        let allowed = Float::with_val(prec, Float::with_val(prec, rho * beta).pow(gamma));
        if used > Float::with_val(prec, &allowed * (1.0 + TOL)) {
            return Err(RuleViolation::BudgetExceeded { used: s(&used), allowed: s(&allowed) });
        }
        self.removals.push(balls.to_vec());
        Ok(())
    }

    fn potential_bob(&mut self, ball: &MetricBall) -> std::result::Result<(), RuleViolation> {
        self.check_bob_ball(ball)?;
        self.bob_balls.push(ball.clone());
        Ok(())
    }

    fn modified_step(&mut self, player: Player, id: &AtomId) -> std::result::Result<(), RuleViolation> {
        let tiling = self.tiling.as_ref().unwrap();
        let (prev, step) = match player {
            Player::Bob => (self.alice_atoms.last(), self.params.b.unwrap()),
            Player::Alice => (self.bob_atoms.last(), self.params.a.unwrap()),
        };
        if let Some(prev) = prev {
            let expected = prev.level() + step;
            if id.level != expected {
                return Err(RuleViolation::WrongLevel { expected: expected as u64, got: id.level as u64 });
            }
        }
        let atom = tiling.atom(id).map_err(|_| RuleViolation::WrongMoveKind)?;
        if let Some(prev) = prev {
            if !prev.contains_atom(&atom) {
                return Err(RuleViolation::NotNested);
            }
        }
        match player {
            Player::Bob => self.bob_atoms.push(atom),
            Player::Alice => self.alice_atoms.push(atom),
        }
        Ok(())
    }
}

/// A move source for one side of a game.
pub trait Strategy {
    fn next_move(&mut self, engine: &GameEngine, rng: &mut ChaCha8Rng) -> Result<Move>;
}

/// Rebuild information for the tiling of a modified game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingRef {
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub turn: usize,
    pub player: Player,
    #[serde(rename = "move")]
    pub mv: Move,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub kind: GameKind,
    pub params: GameParams,
    pub system: Option<SystemSpec>,
    pub target: Option<TorusPoint>,
    pub tiling: Option<TilingRef>,
    pub depth: u32,
    pub seed: u64,
    /// Strategy constants recorded for audits.
    pub constants: Option<serde_json::Value>,
    pub moves: Vec<MoveRecord>,
    pub final_enclosure: Option<Enclosure>,
    /// Set when a player produced an illegal move or failed to move.
    pub failure: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header {
        kind: GameKind,
        params: GameParams,
        system: Option<SystemSpec>,
        target: Option<TorusPoint>,
        tiling: Option<TilingRef>,
        depth: u32,
        seed: u64,
        constants: Option<serde_json::Value>,
    },
    Move(MoveRecord),
    Final {
        enclosure: Option<Enclosure>,
        failure: Option<String>,
    },
}

impl GameTranscript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Line::Header {
            kind: self.kind,
            params: self.params.clone(),
            system: self.system.clone(),
            target: self.target.clone(),
            tiling: self.tiling.clone(),
            depth: self.depth,
            seed: self.seed,
            constants: self.constants.clone(),
        };
        let push = |out: &mut String, l: &Line| {
            out.push_str(&serde_json::to_string(l).expect("transcript lines serialize"));
            out.push('\n');
        };
        push(&mut out, &header);
        for m in &self.moves {
            push(&mut out, &Line::Move(m.clone()));
        }
        push(&mut out, &Line::Final { enclosure: self.final_enclosure.clone(), failure: self.failure.clone() });
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |e: serde_json::Error| Error::CorruptTranscript(e.to_string());
        let first = lines.next().ok_or_else(|| Error::CorruptTranscript("empty transcript".into()))?;
        let Line::Header { kind, params, system, target, tiling, depth, seed, constants } = serde_json::from_str(first).map_err(bad)? else {
            return Err(Error::CorruptTranscript("first line is not a header".into()));
        };
        let mut t = GameTranscript {
            kind,
            params,
            system,
            target,
            tiling,
            depth,
            seed,
            constants,
            moves: Vec::new(),
            final_enclosure: None,
            failure: None,
        };
        let mut closed = false;
        for l in lines {
            if closed {
                return Err(Error::CorruptTranscript("lines after the final record".into()));
            }
            match serde_json::from_str(l).map_err(bad)? {
                Line::Move(m) => t.moves.push(m),
                Line::Final { enclosure, failure } => {
                    t.final_enclosure = enclosure;
                    t.failure = failure;
                    closed = true;
                }
                Line::Header { .. } => return Err(Error::CorruptTranscript("second header".into())),
            }
        }
        if !closed {
            return Err(Error::CorruptTranscript("missing final record".into()));
        }
        Ok(t)
    }

    /// Rebuilds the tiling a modified-game transcript was played on.
    pub fn rebuild_tiling(&self) -> Result<Option<Arc<TilingFamily>>> {
        match (&self.tiling, &self.system) {
            (Some(r), Some(sys)) => Ok(Some(Arc::new(TilingFamily::new(sys.clone(), r.epsilon, r.seed)?))),
            (Some(_), None) => Err(Error::CorruptTranscript("tiling without a system".into())),
            _ => Ok(None),
        }
    }
}

/// Replays every move through a fresh engine.
pub fn replay(t: &GameTranscript, tiling: Option<Arc<TilingFamily>>) -> Result<GameEngine> {
    let tiling = match tiling {
        Some(t) => Some(t),
        None => t.rebuild_tiling()?,
    };
    if t.params.kind != t.kind {
        return Err(Error::CorruptTranscript("kind does not match parameters".into()));
    }
    let mut engine = GameEngine::new(t.params.clone(), tiling)?;
    for (i, m) in t.moves.iter().enumerate() {
        if m.turn != i {
            return Err(Error::CorruptTranscript(format!("turn {} recorded at position {i}", m.turn)));
        }
        engine
            .step(m.player, m.mv.clone())
            .map_err(|violation| Error::IllegalMove { player: m.player.to_string(), turn: i, violation })?;
    }
    if t.failure.is_none() && engine.enclosure() != t.final_enclosure {
        return Err(Error::CorruptTranscript("final enclosure does not match the moves".into()));
    }
    Ok(engine)
}

/// Everything `play_game` needs besides the two strategies.
#[derive(Debug, Clone)]
pub struct GameSetup {
    pub params: GameParams,
    pub system: Option<SystemSpec>,
    pub target: Option<TorusPoint>,
    pub tiling: Option<(Arc<TilingFamily>, TilingRef)>,
    pub constants: Option<serde_json::Value>,
}

/// Seeds the per-player random streams.
pub fn player_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut alice = ChaCha8Rng::seed_from_u64(seed);
    alice.set_stream(1);
    let mut bob = ChaCha8Rng::seed_from_u64(seed);
    bob.set_stream(2);
    (alice, bob)
}

/// Bob's opening move and `depth` rounds through the validating engine.
/// Illegal or failed moves end the game and are recorded in `failure`.
pub fn play_game(setup: &GameSetup, alice: &mut dyn Strategy, bob: &mut dyn Strategy, depth: u32, seed: u64) -> Result<GameTranscript> {
    let mut engine = GameEngine::new(setup.params.clone(), setup.tiling.as_ref().map(|t| t.0.clone()))?;
    let (mut alice_rng, mut bob_rng) = player_rngs(seed);
    let mut transcript = GameTranscript {
        kind: setup.params.kind,
        params: setup.params.clone(),
        system: setup.system.clone(),
        target: setup.target.clone(),
        tiling: setup.tiling.as_ref().map(|t| t.1.clone()),
        depth,
        seed,
        constants: setup.constants.clone(),
        moves: Vec::new(),
        final_enclosure: None,
        failure: None,
    };
    let total = 1 + 2 * depth as usize;
    for turn in 0..total {
        let player = engine.whose_turn();
        let (strategy, rng): (&mut dyn Strategy, &mut ChaCha8Rng) = match player {
            Player::Alice => (&mut *alice, &mut alice_rng),
            Player::Bob => (&mut *bob, &mut bob_rng),
        };
        let mv = match strategy.next_move(&engine, rng) {
            Ok(mv) => mv,
            Err(e) => {
                transcript.failure = Some(format!("{player} failed to move at turn {turn}: {e}"));
                break;
            }
        };
        if let Err(v) = engine.step(player, mv.clone()) {
            transcript.failure = Some(Error::IllegalMove { player: player.to_string(), turn, violation: v }.to_string());
            break;
        }
        transcript.moves.push(MoveRecord { turn, player, mv });
    }
    transcript.final_enclosure = engine.enclosure();
    Ok(transcript)
}
