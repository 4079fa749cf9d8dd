use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("simple cycle enumeration exceeded the budget of {0} cycles")]
    CycleBudget(usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevelError {
    #[error("unknown rectangle {0:?}")]
    UnknownRectangle(String),
    #[error("invalid circuit: {0}")]
    BadCircuit(String),
    #[error("m + n = 0 is not a refinement")]
    NoRefinement,
    #[error("restriction is empty after trimming")]
    EmptyRestriction,
    #[error("level is not the refinement of this circuit")]
    NotRefined,
    #[error("inadmissible pattern: {0}")]
    Inadmissible(String),
    #[error("window width {width} is shorter than the pattern period {period}")]
    WindowTooShallow { width: usize, period: usize },
    #[error("bridge search supports at most 16 required visits, got {0}")]
    TooManyVisits(usize),
    #[error("must-visit and must-avoid sets intersect")]
    VisitAvoidOverlap,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeasureError {
    #[error("weights are not a probability vector")]
    NotProbability,
    #[error("independence radius needs at least two measures")]
    TooFewMeasures,
    #[error("measures live on different levels")]
    MixedLevels,
    #[error("measures are linearly dependent")]
    Dependent,
    #[error("lambda must lie in (0, 1)")]
    LambdaRange,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TowerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("level {level}: {needed} rectangles needed, alphabet budget is {limit} (binding constraint: {constraint})")]
    Budget { level: usize, needed: usize, limit: usize, constraint: String },
    #[error("level {level}: drift bound {bound} unreachable for marked cycle {cycle}; least drift within budget is {best}")]
    DriftUnachievable { level: usize, cycle: usize, best: String, bound: String },
    #[error("level {level}: signature is not expansive (rectangles {witness:?} are never separated)")]
    NotExpansive { level: usize, witness: (usize, usize) },
    #[error("level {level}: {reason}")]
    Construction { level: usize, reason: String },
    #[error("{0} towers do not branch")]
    NoBranching(String),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}
