//! Error-to-exit-code mapping with machine-readable JSON diagnostics.
//!
//! Exit status 0 means success, 2 a validation problem (configuration,
//! inputs, file formats), 3 a numerical failure (quadrature
//! non-convergence, non-PSD matrices, truncation caps, singular systems).

use bma::cfs::CfsError;
use bma::covariance::CovarianceError;
use bma::deconv::DeconvError;
use bma::gaussian::GaussianError;
use bma::io::IoError;
use serde::Serialize;

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    Numerical,
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { error: ErrorKind::Validation, field: Some(field.into()), message: message.into() }
    }

    pub fn validation_plain(message: impl Into<String>) -> Self {
        Self { error: ErrorKind::Validation, field: None, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { error: ErrorKind::Numerical, field: None, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.error {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"message\":\"{}\"}}", self.message))
    }
}

impl From<CovarianceError> for CliError {
    fn from(e: CovarianceError) -> Self {
        match &e {
            CovarianceError::NonConvergence { .. }
            | CovarianceError::TailAboveCap { .. }
            | CovarianceError::NotPsd { .. }
            | CovarianceError::NotSymmetric { .. }
            | CovarianceError::DegenerateNormalization(_) => CliError::numerical(e.to_string()),
            _ => CliError::validation_plain(e.to_string()),
        }
    }
}

impl From<GaussianError> for CliError {
    fn from(e: GaussianError) -> Self {
        match &e {
            GaussianError::NotPsd { .. } | GaussianError::InconsistentObservation { .. } => {
                CliError::numerical(e.to_string())
            }
            GaussianError::Covariance(c) => CovarianceError::from_variant(c).into_cli(e.to_string()),
            _ => CliError::validation_plain(e.to_string()),
        }
    }
}

// helper so nested covariance errors keep their numerical/validation split
trait Variant {
    fn from_variant(c: &CovarianceError) -> VariantKind;
}

enum VariantKind {
    Numerical,
    Validation,
}

impl VariantKind {
    fn into_cli(self, message: String) -> CliError {
        match self {
            VariantKind::Numerical => CliError::numerical(message),
            VariantKind::Validation => CliError::validation_plain(message),
        }
    }
}

impl Variant for CovarianceError {
    fn from_variant(c: &CovarianceError) -> VariantKind {
        match c {
            CovarianceError::NonConvergence { .. }
            | CovarianceError::TailAboveCap { .. }
            | CovarianceError::NotPsd { .. }
            | CovarianceError::NotSymmetric { .. }
            | CovarianceError::DegenerateNormalization(_) => VariantKind::Numerical,
            _ => VariantKind::Validation,
        }
    }
}

impl From<CfsError> for CliError {
    fn from(e: CfsError) -> Self {
        match &e {
            CfsError::Covariance(c) => CovarianceError::from_variant(c).into_cli(e.to_string()),
            CfsError::Gaussian(GaussianError::NotPsd { .. }) => CliError::numerical(e.to_string()),
            _ => CliError::validation_plain(e.to_string()),
        }
    }
}

impl From<DeconvError> for CliError {
    fn from(e: DeconvError) -> Self {
        match &e {
            DeconvError::SingularAtZeroLambda | DeconvError::NormalEquations(_) => {
                CliError::numerical(e.to_string())
            }
            _ => CliError::validation_plain(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match &e {
            IoError::Covariance(c) => CovarianceError::from_variant(c).into_cli(e.to_string()),
            _ => CliError::validation_plain(e.to_string()),
        }
    }
}
