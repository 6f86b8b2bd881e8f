//! Error metrics shared by the experiments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};

/// Reported in place of `−∞ dB` for an exact recovery.
pub const DB_FLOOR: f64 = -300.0;

/// A relative error, or the absolute error when the reference vanishes on
/// the evaluated entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ErrorRatio {
    Relative(f64),
    Degenerate { absolute: f64 },
}

impl ErrorRatio {
    pub fn relative(&self) -> Option<f64> {
        match *self {
            ErrorRatio::Relative(v) => Some(v),
            ErrorRatio::Degenerate { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, ErrorRatio::Degenerate { .. })
    }

    /// The relative value, or the absolute error when degenerate.
    pub fn value(&self) -> f64 {
        match *self {
            ErrorRatio::Relative(v) => v,
            ErrorRatio::Degenerate { absolute } => absolute,
        }
    }
}

/// Squared error and squared reference over the entries where `select` is 1.
fn masked_energies(zhat: &DMatrix<f64>, z: &DMatrix<f64>, select: &DMatrix<f64>) -> Result<(f64, f64)> {
    if zhat.shape() != z.shape() || select.shape() != z.shape() {
        return Err(KblError::Dimension("metric operands disagree in shape".into()));
    }
    let mut err = 0.0;
    let mut sig = 0.0;
    let mut count = 0usize;
    for ((a, b), s) in zhat.iter().zip(z.iter()).zip(select.iter()) {
        if *s != 0.0 {
            err += (a - b).powi(2);
            sig += b * b;
            count += 1;
        }
    }
    if count == 0 {
        return Err(KblError::InvalidArgument("no entries selected for evaluation".into()));
    }
    Ok((err, sig))
}

/// `10·log₁₀(‖(Ẑ − Z) ⊙ W̄‖²_F / ‖Z ⊙ W̄‖²_F)` over the entries flagged in
/// `missing`. Exact recovery reports [`DB_FLOOR`].
pub fn metric_recovery_db(zhat: &DMatrix<f64>, z: &DMatrix<f64>, missing: &DMatrix<f64>) -> Result<ErrorRatio> {
    let (err, sig) = masked_energies(zhat, z, missing)?;
    if sig == 0.0 {
        return Ok(ErrorRatio::Degenerate { absolute: err.sqrt() });
    }
    if err == 0.0 {
        return Ok(ErrorRatio::Relative(DB_FLOOR));
    }
    Ok(ErrorRatio::Relative((10.0 * (err / sig).log10()).max(DB_FLOOR)))
}

/// `‖ẑ − z‖₂ / ‖z‖₂` over the selected entries.
pub fn relative_error(zhat: &DMatrix<f64>, z: &DMatrix<f64>, select: &DMatrix<f64>) -> Result<ErrorRatio> {
    let (err, sig) = masked_energies(zhat, z, select)?;
    if sig == 0.0 {
        return Ok(ErrorRatio::Degenerate { absolute: err.sqrt() });
    }
    Ok(ErrorRatio::Relative((err / sig).sqrt()))
}

/// Pearson correlation; zero when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
