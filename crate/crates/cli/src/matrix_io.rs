//! Dense matrix and vector files: `{"space": "OS", "dim": 6, "entries": [[re, im], ...]}`,
//! entries row-major for operators.

use everett_core::{ComplexOperator, ComplexVector, Space, C64};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseFile {
    pub space: Space,
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl DenseFile {
    fn values(&self) -> Vec<C64> {
        self.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect()
    }

    pub fn into_operator(self) -> Result<ComplexOperator, String> {
        if self.entries.len() != self.dim * self.dim {
            return Err(format!(
                "operator of dim {} needs {} entries, found {}",
                self.dim,
                self.dim * self.dim,
                self.entries.len()
            ));
        }
        ComplexOperator::new(self.space, self.dim, self.values()).map_err(|e| e.to_string())
    }

    pub fn into_vector(self) -> Result<ComplexVector, String> {
        if self.entries.len() != self.dim {
            return Err(format!(
                "vector of dim {} needs {} entries, found {}",
                self.dim,
                self.dim,
                self.entries.len()
            ));
        }
        ComplexVector::new(self.space, self.values()).map_err(|e| e.to_string())
    }

    pub fn from_operator(op: &ComplexOperator) -> Self {
        Self {
            space: op.space(),
            dim: op.dim(),
            entries: op.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_vector(v: &ComplexVector) -> Self {
        Self {
            space: v.space(),
            dim: v.dim(),
            entries: v.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

pub fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn complex_list_json(zs: &[C64]) -> Value {
    Value::Array(zs.iter().copied().map(complex_json).collect())
}

pub fn operator_json(op: &ComplexOperator) -> Value {
    serde_json::to_value(DenseFile::from_operator(op)).expect("plain data")
}

pub fn vector_json(v: &ComplexVector) -> Value {
    serde_json::to_value(DenseFile::from_vector(v)).expect("plain data")
}
