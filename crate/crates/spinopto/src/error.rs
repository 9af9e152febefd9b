use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("no stable fixed point at detuning {detuning} rad/s")]
    NoStableFixedPoint { detuning: f64 },

    #[error("integration failure at t = {t} s: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("fit quality: {reason} (n_cycles = {n_cycles:.1}, residual_std = {residual_std:.3})")]
    FitQuality {
        reason: String,
        n_cycles: f64,
        residual_std: f64,
    },

    #[error("frequency {omega} rad/s too close to the adiabatic pole at sqrt(kappa^2 + delta_p^2)")]
    PoleProximity { omega: f64 },

    #[error("marginal stability: i*omega*I - J is singular at omega = {omega} rad/s")]
    SingularResolvent { omega: f64 },

    #[error("spring instability: omega_Lp^2 + k_S = {value} < 0 (no oscillatory response)")]
    SpringInstability { value: f64 },

    #[error("config error at `{path}`: {constraint}")]
    Config { path: String, constraint: String },

    #[error("spectral estimation: {0}")]
    Spectral(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
