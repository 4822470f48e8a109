//! The on-disk problem format. Matrices are row-major lists of
//! [re, im] pairs — language-neutral and lossless at double precision.

use kklab::matrix::{CMat, C64};
use kklab::{
    build_algebra_with, build_space, OperatorAlgebra, PipelineMode, TensorElement, Tolerances,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const PROBLEM_VERSION: &str = "kklab-problem/1";

pub type MatrixData = Vec<[f64; 2]>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalData {
    pub algebra: String,
    pub pairs: Vec<[MatrixData; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub block_sizes: Vec<usize>,
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    pub t: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    pub ambient_dim: usize,
    #[serde(default)]
    pub algebras: BTreeMap<String, Vec<MatrixData>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<DiagonalData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

pub fn decode_matrix(data: &MatrixData, k: usize) -> Result<CMat, String> {
    if data.len() != k * k {
        return Err(format!(
            "matrix has {} entries, expected {} for ambient dimension {}",
            data.len(),
            k * k,
            k
        ));
    }
    let entries: Vec<C64> = data.iter().map(|[re, im]| C64::new(*re, *im)).collect();
    Ok(CMat::from_row_slice(k, k, &entries))
}

impl ProblemFile {
    /// Parse with the offending JSON path reported on any schema
    /// violation (unknown field, wrong shape, bad number).
    pub fn load(path: &Path) -> Result<ProblemFile, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let file: ProblemFile = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| format!("{}: at {}: {}", path.display(), e.path(), e.inner()))?;
        if file.version != PROBLEM_VERSION {
            return Err(format!(
                "{}: unsupported version {:?} (expected {:?})",
                path.display(),
                file.version,
                PROBLEM_VERSION
            ));
        }
        if file.ambient_dim == 0 {
            return Err(format!("{}: ambient_dim must be positive", path.display()));
        }
        Ok(file)
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_default()
    }

    pub fn pipeline_mode(&self) -> Result<PipelineMode, String> {
        match self.mode.as_deref() {
            None | Some("certified") => Ok(PipelineMode::Certified),
            Some("heuristic") => Ok(PipelineMode::Heuristic),
            Some(other) => Err(format!("unknown mode {other:?}")),
        }
    }

    pub fn algebra(&self, name: &str) -> Result<OperatorAlgebra, String> {
        let mats = self
            .algebras
            .get(name)
            .ok_or_else(|| format!("no algebra named {name:?} in the problem file"))?;
        let basis: Result<Vec<CMat>, String> = mats
            .iter()
            .map(|m| decode_matrix(m, self.ambient_dim))
            .collect();
        let space = build_space(self.ambient_dim, basis?)
            .map_err(|e| format!("algebra {name:?}: {e}"))?;
        build_algebra_with(space, false, &self.tolerances())
            .map_err(|e| format!("algebra {name:?}: {e}"))
    }

    pub fn diagonal_element(&self) -> Result<(OperatorAlgebra, TensorElement), String> {
        let diag = self
            .diagonal
            .as_ref()
            .ok_or("problem file has no diagonal")?;
        let algebra = self.algebra(&diag.algebra)?;
        let pairs: Result<Vec<(CMat, CMat)>, String> = diag
            .pairs
            .iter()
            .map(|[a, b]| {
                Ok((
                    decode_matrix(a, self.ambient_dim)?,
                    decode_matrix(b, self.ambient_dim)?,
                ))
            })
            .collect();
        let u = TensorElement::new(algebra.clone(), pairs?).map_err(|e| e.to_string())?;
        Ok((algebra, u))
    }
}
