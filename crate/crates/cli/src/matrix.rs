//! JSON encoding of complex matrices: `{"dim": d, "re": [...], "im": [...]}`, row-major,
//! `im` optional.

use collapse_core::hilbert::{CMatrix, QuantitySet, C64};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub dim: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

impl MatrixSpec {
    pub fn from_real(dim: usize, re: Vec<f64>) -> Self {
        MatrixSpec { dim, re, im: None }
    }

    pub fn to_matrix(&self, key: &str) -> Result<CMatrix, ConfigError> {
        let d = self.dim;
        if d == 0 {
            return Err(ConfigError::new(format!("{key}.dim"), "must be >= 1"));
        }
        let n = d.checked_mul(d).ok_or_else(|| ConfigError::new(format!("{key}.dim"), "is too large"))?;
        if self.re.len() != n {
            return Err(ConfigError::new(format!("{key}.re"), format!("must hold dim*dim = {n} entries, found {}", self.re.len())));
        }
        if let Some(im) = &self.im {
            if im.len() != n {
                return Err(ConfigError::new(format!("{key}.im"), format!("must hold dim*dim = {n} entries, found {}", im.len())));
            }
        }
        let entries: Vec<C64> =
            (0..n).map(|i| C64::new(self.re[i], self.im.as_ref().map_or(0.0, |im| im[i]))).collect();
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ConfigError::new(key, "entries must be finite"));
        }
        Ok(CMatrix::from_row_slice(d, d, &entries))
    }
}

/// Parses one matrix.
pub fn parse_matrix(text: &str) -> Result<CMatrix, ConfigError> {
    let spec: MatrixSpec = serde_json::from_str(text).map_err(|e| ConfigError::new("matrix", e.to_string()))?;
    spec.to_matrix("matrix")
}

/// Parses a JSON array of matrices and validates them as a commuting quantity set.
pub fn parse_quantity_set(text: &str) -> Result<QuantitySet, ConfigError> {
    let specs: Vec<MatrixSpec> = serde_json::from_str(text).map_err(|e| ConfigError::new("quantities", e.to_string()))?;
    quantity_set(&specs)
}

pub(crate) fn quantity_set(specs: &[MatrixSpec]) -> Result<QuantitySet, ConfigError> {
    if specs.is_empty() {
        return Err(ConfigError::new("quantities", "must list at least one matrix"));
    }
    let ops = specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.to_matrix(&format!("quantities[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let d = ops[0].nrows();
    if let Some(i) = ops.iter().position(|m| m.nrows() != d) {
        return Err(ConfigError::new(format!("quantities[{i}].dim"), format!("must equal {d}")));
    }
    if d < 2 {
        return Err(ConfigError::new("quantities[0].dim", "must be >= 2"));
    }
    QuantitySet::validate(ops).map_err(|e| ConfigError::new("quantities", e.to_string()))
}
