use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("map is not invertible for b = 0")]
    NotInvertible,
    #[error("orbit diverged at step {step}")]
    NumericOverflow { step: usize },
    #[error("modified family unavailable: region R0 not built for these parameters")]
    ModifiedFamilyUnavailable,
    #[error("singular values not separated (relative gap {gap:e})")]
    DegenerateSingularValues { gap: f64 },
    #[error("expansion hypothesis violated at index {index}")]
    ExpansionHypothesisViolated { index: usize },
    #[error("no hyperbolic times found")]
    NoHyperbolicTimes,
    #[error("Newton iteration diverged")]
    NewtonDiverged,
    #[error("manifold refinement exceeded vertex cap {cap}")]
    ResolutionExhausted { cap: usize },
    #[error("region boundary not closed: {0}")]
    BoundaryNotClosed(String),
    #[error("contracting field degenerate at ({x}, {y})")]
    FieldDegenerate { x: f64, y: f64 },
    #[error("ambiguous tangency")]
    AmbiguousTangency,
    #[error("leaf misses target curve")]
    LeafMissesTarget,
    #[error("no sign change of the tangency function on the curve")]
    NoSignChange,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("no tangency on segment")]
    NoTangency,
    #[error("component resolution lost at level {level}")]
    ComponentResolutionLost { level: usize },
    #[error("critical position: return lands inside V_{level}")]
    CriticalPosition { level: usize },
    #[error("binding ladder exhausted")]
    LadderExhausted,
    #[error("control lost at time {time}")]
    ControlLost { time: usize },
    #[error("no bracket for bisection on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("deformation track lost at parameter {a}")]
    TrackLost { a: f64 },
    #[error("tracks do not cross")]
    NoCrossing,
    #[error("tracks cross {count} times")]
    MultipleCrossings { count: usize },
    #[error("stopping-time recursion exhausted with remaining mass {remaining}")]
    DepthExhausted { remaining: f64 },
    #[error("region unavailable beyond level {k_max}")]
    RegionUnavailable { k_max: usize },
    #[error("sample starved: {count} survivors")]
    SampleStarved { count: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
