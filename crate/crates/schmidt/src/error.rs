use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A move rejected by a game engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleViolation {
    #[error("radius {got} does not match required {expected}")]
    IllegalRadius { expected: String, got: String },
    #[error("move is not contained in the previous ball or atom")]
    NotContained,
    #[error("removal budget exceeded: {used} > {allowed}")]
    BudgetExceeded { used: String, allowed: String },
    #[error("Bob shrank too fast: radius {got} < {min}")]
    BobShrankTooFast { min: String, got: String },
    #[error("removal radius {got} exceeds {max}")]
    RemovalTooLarge { max: String, got: String },
    #[error("Bob's ball meets Alice's removal")]
    BobInsideRemoval,
    #[error("atom level {got} but level {expected} required")]
    WrongLevel { expected: u64, got: u64 },
    #[error("atom is not nested in the previous atom")]
    NotNested,
    #[error("it is not {0}'s turn")]
    WrongTurn(String),
    #[error("radius {0} exceeds the engine cap")]
    RadiusCap(String),
    #[error("move of the wrong shape for this game")]
    WrongMoveKind,
    #[error("dimension mismatch")]
    DimensionMismatch,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("unsupported for this system: {0}")]
    Unsupported(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("depth cap exceeded: k = {k} > {cap}")]
    DepthCap { k: u32, cap: u32 },
    #[error("hole too large to resolve components")]
    HoleTooLarge,
    #[error("locality exceeded: {0}")]
    LocalityExceeded(String),
    #[error("point {0} lies on an atom boundary")]
    BoundaryAmbiguity(String),
    #[error("tiling property violated: {0}")]
    TilingViolation(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("search failure: {0}")]
    SearchFailure(String),
    #[error("illegal move by {player} at turn {turn}: {violation}")]
    IllegalMove { player: String, turn: usize, violation: RuleViolation },
    #[error("corrupt transcript: {0}")]
    CorruptTranscript(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
