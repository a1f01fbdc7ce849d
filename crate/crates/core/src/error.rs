use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation failure: photon distribution would need n_max = {needed} > cap {cap}")]
    Truncation { needed: u64, cap: u64 },

    #[error("non-finite intermediate value in {0}")]
    NonFinite(&'static str),

    #[error("moment order r = {r} exceeds supported cap {cap}")]
    MomentOrder { r: u32, cap: u32 },

    #[error("zero mean photon number; Fano factor undefined")]
    ZeroMean,

    #[error("value {value} outside branch range [{lo}, {hi}]")]
    OutOfBranchRange { value: f64, lo: f64, hi: f64 },

    #[error("no interior maximum predicted: gain {gain} <= absorption {kappa}")]
    NoInteriorPeak { gain: f64, kappa: f64 },

    #[error("asymptotic formula singular near threshold: |C - A| = {dist} < {tol}")]
    ThresholdSingular { dist: f64, tol: f64 },

    #[error("fewer than {need} usable nodes in fit window (found {found})")]
    TooFewFitPoints { need: usize, found: usize },

    #[error("density is not divergent at mu_max (below-threshold input)")]
    NotDivergent,

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),
}
