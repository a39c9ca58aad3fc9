use serde::{Deserialize, Serialize};

use crate::bdf::EmpiricalBDF;
use crate::error::{Error, Result};
use crate::points::check_points;

const FORMAT_VERSION: u32 = 1;

/// Serialized fitted model. Floats are written with round-trip precision, so a loaded
/// model evaluates bit-identically to the one that was saved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub grid_fingerprint: String,
    pub model: EmpiricalBDF,
}

impl ModelFile {
    pub fn new(model: EmpiricalBDF) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            grid_fingerprint: model.grid.fingerprint(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        super::to_json(self)
    }

    /// Parses and checks internal consistency: sizes, bijective assignment, grid
    /// invariants and fingerprint.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Malformed(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let m = &file.model;
        m.grid.validate()?;
        if m.grid.fingerprint() != file.grid_fingerprint {
            return Err(Error::Malformed("grid fingerprint mismatch".into()));
        }
        let n = m.grid.len();
        let dim = check_points(&m.source, "model sources")?;
        let a = &m.assignment;
        if dim != m.grid.dim
            || m.source.len() != n
            || m.labels.len() != n
            || m.potentials.len() != n
            || a.n != n
            || a.perm.len() != n
        {
            return Err(Error::Malformed("model sizes are inconsistent".into()));
        }
        let mut hit = vec![false; n];
        for &j in &a.perm {
            if j >= n || std::mem::replace(&mut hit[j], true) {
                return Err(Error::Malformed("assignment is not a permutation".into()));
            }
        }
        if m.potentials.iter().any(|p| !p.is_finite()) {
            return Err(Error::Malformed("non-finite potential".into()));
        }
        Ok(file)
    }
}
