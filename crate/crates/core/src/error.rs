use thiserror::Error;

use crate::thermal::Stage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{file}: line {line}: {message}")]
    Malformed {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: missing directive `@{key}`")]
    MissingDirective { file: String, key: String },
    #[error("{file}: directive `@{key}`: {message}")]
    BadDirective {
        file: String,
        key: String,
        message: String,
    },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("no data file named `{0}`")]
    NotFound(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error(
        "material `{material}`: temperature {temperature} K outside table range [{min}, {max}] K"
    )]
    TemperatureOutOfRange {
        material: String,
        temperature: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid temperatures: t_hot = {t_hot} K, t_cold = {t_cold} K")]
    InvalidTemperatures { t_hot: f64, t_cold: f64 },
    #[error("line `{0}` has no rf plan")]
    MissingRfPlan(String),
    #[error("line `{line}`: duty cycle {duty_cycle} cannot drive a nonzero power request")]
    InvalidDutyCycle { line: String, duty_cycle: f64 },
    #[error("stage temperatures must be positive and ordered RT > 50K > 4K > Still > CP > MXC")]
    UnorderedTemperatures,
    #[error("capacity insufficient at {stage}: load {load:.6e} W exceeds the largest capacity {max_capacity:.6e} W available over the model range")]
    CapacityInsufficient {
        stage: Stage,
        load: f64,
        max_capacity: f64,
    },
    #[error("solver did not converge after {iterations} iterations (max residual {max_residual:.3e} W at {worst_stage})")]
    NonConvergence {
        iterations: usize,
        max_residual: f64,
        worst_stage: Stage,
        residuals: Vec<(Stage, f64)>,
    },
    #[error("missing boundary setting for stage {0}")]
    MissingStage(Stage),
    #[error("{stage}: temperature {temperature} K outside capacity model range [{min}, {max}] K")]
    OutsideCapacityRange {
        stage: Stage,
        temperature: f64,
        min: f64,
        max: f64,
    },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("stage {0} cannot be capacity limited in this model")]
    UnsupportedBoundary(Stage),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("occupation must be finite and non-negative, got {0}")]
    InvalidOccupation(f64),
    #[error("attenuation must be finite and non-negative, got {0} dB")]
    InvalidAttenuation(f64),
    #[error("frequency mismatch: {left} Hz vs {right} Hz")]
    FrequencyMismatch { left: f64, right: f64 },
    #[error("noise chain is empty")]
    EmptyChain,
    #[error("unreachable: chain thermal floor {floor_temperature_k:.6} K (n = {floor_occupation:.6e}) exceeds target")]
    Unreachable {
        floor_occupation: f64,
        floor_temperature_k: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("trace kind {found} cannot be fitted with the {expected} model")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate amplitude: trace is flat")]
    DegenerateAmplitude,
    #[error("no detectable fringe (periodogram SNR {snr:.2} < {threshold})")]
    NoFringe { snr: f64, threshold: f64 },
    #[error("trace spans {periods:.2} fringe periods, need at least 2")]
    TooFewPeriods { periods: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("fit rejected: {0}")]
    Rejected(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("non-finite value in series")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

impl ScenarioError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path for validation errors, `None` for parse errors.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ScenarioError::Validation { path, .. } => Some(path),
            _ => None,
        }
    }
}

/// Crate-level error used by the report and batch layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario `{scenario}`: {source}")]
    Solve {
        scenario: String,
        #[source]
        source: ThermalError,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 no steady state for a valid
    /// scenario, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Thermal(ThermalError::NonConvergence { .. }) => 3,
            Error::Solve { .. } => 3,
            Error::Io { .. } => 4,
            Error::Data(DataError::NotFound(_)) => 4,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
