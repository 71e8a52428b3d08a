//! JSON-facing raw types for system matrices: row-major data arrays with
//! explicit dimensions, convertible to and from the validated model types.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::KcfGains;
use crate::process::{ProcessModel, SensorModel};
use crate::topology::{build_topology, Topology, TopologyKind};

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Config(format!(
                "matrix declared {}x{} but carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.iter().copied().collect(),
        }
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        if self.cols != 1 || self.data.len() != self.rows {
            return Err(Error::Config("expected a column vector".into()));
        }
        Ok(DVector::from_column_slice(&self.data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessModelJson {
    pub a: MatrixJson,
    pub q_cov: MatrixJson,
}

impl ProcessModelJson {
    pub fn from_model(m: &ProcessModel) -> Self {
        Self {
            a: MatrixJson::from_matrix(m.a()),
            q_cov: MatrixJson::from_matrix(m.q_cov()),
        }
    }

    pub fn to_model(&self) -> Result<ProcessModel> {
        ProcessModel::new(self.a.to_matrix()?, self.q_cov.to_matrix()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorModelJson {
    pub h: MatrixJson,
    pub r: MatrixJson,
}

impl SensorModelJson {
    pub fn from_model(m: &SensorModel) -> Self {
        Self {
            h: MatrixJson::from_matrix(m.h()),
            r: MatrixJson::from_matrix(m.r()),
        }
    }

    pub fn to_model(&self) -> Result<SensorModel> {
        SensorModel::new(self.h.to_matrix()?, self.r.to_matrix()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyJson {
    pub n: usize,
    pub adjacency: Vec<Vec<bool>>,
}

impl TopologyJson {
    pub fn from_topology(t: &Topology) -> Self {
        Self {
            n: t.node_count(),
            adjacency: t.adjacency().to_vec(),
        }
    }

    pub fn to_topology(&self) -> Result<Topology> {
        build_topology(&TopologyKind::Custom(self.adjacency.clone()), self.n)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KcfGainsJson {
    pub g: Vec<MatrixJson>,
    pub c: Vec<MatrixJson>,
}

impl KcfGainsJson {
    pub fn from_gains(g: &KcfGains) -> Self {
        Self {
            g: g.g.iter().map(MatrixJson::from_matrix).collect(),
            c: g.c.iter().map(MatrixJson::from_matrix).collect(),
        }
    }

    pub fn to_gains(&self) -> Result<KcfGains> {
        Ok(KcfGains {
            g: self.g.iter().map(|m| m.to_matrix()).collect::<Result<_>>()?,
            c: self.c.iter().map(|m| m.to_matrix()).collect::<Result<_>>()?,
        })
    }
}
