//! Regression systems `U_T = Theta * zeta` built from a genome and meta-data.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::SystemError;
use crate::genome::{Genome, TermModule};
use crate::surrogate::MetaDataset;

/// Target column and one design column per right-hand-side module.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub target: DVector<f64>,
    pub design: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(target: DVector<f64>, design: DMatrix<f64>) -> Self {
        Self { target, design }
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn cols(&self) -> usize {
        self.design.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.target.iter().chain(self.design.iter()).all(|v| v.is_finite())
    }
}

/// Product of the module's factors. `jet[k]` holds the k-th spatial derivative.
pub fn evaluate_module(module: &TermModule, jet: &[f64]) -> Result<f64, SystemError> {
    module.genes().iter().try_fold(1.0, |acc, &g| {
        jet.get(g as usize).map(|v| acc * v).ok_or(SystemError::MissingOrder {
            axis: "spatial",
            order: g as usize,
            available: jet.len().saturating_sub(1),
        })
    })
}

/// Design column of `module` over every meta point.
pub fn module_column(module: &TermModule, data: &MetaDataset) -> Result<Vec<f64>, SystemError> {
    let mut column = vec![1.0; data.len()];
    for &g in module.genes() {
        let factor = data.spatial(g as usize).ok_or(SystemError::MissingOrder {
            axis: "spatial",
            order: g as usize,
            available: data.max_spatial_order(),
        })?;
        for (c, f) in column.iter_mut().zip(factor) {
            *c *= f;
        }
    }
    Ok(column)
}

fn target_column<'a>(genome: &Genome, data: &'a MetaDataset) -> Result<&'a [f64], SystemError> {
    data.temporal(genome.lhs() as usize).ok_or(SystemError::MissingOrder {
        axis: "temporal",
        order: genome.lhs() as usize,
        available: data.max_temporal_order(),
    })
}

fn assemble(target: &[f64], columns: &[impl AsRef<[f64]>]) -> LinearSystem {
    let n = target.len();
    let design = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].as_ref()[i]);
    LinearSystem::new(DVector::from_column_slice(target), design)
}

/// Columns follow the genome's module order.
pub fn build_system(genome: &Genome, data: &MetaDataset) -> Result<LinearSystem, SystemError> {
    let target = target_column(genome, data)?;
    let columns = genome
        .rhs()
        .iter()
        .map(|m| module_column(m, data))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(target, &columns))
}

/// Module columns keyed by canonical module, shared across threads. Only valid
/// for the dataset it was filled from.
#[derive(Debug, Default)]
pub struct ColumnCache {
    columns: RwLock<HashMap<TermModule, Arc<Vec<f64>>>>,
}

impl ColumnCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.columns.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.columns.write().expect("cache lock poisoned").clear();
    }

    pub fn column(&self, module: &TermModule, data: &MetaDataset) -> Result<Arc<Vec<f64>>, SystemError> {
        let key = module.canonical();
        if let Some(col) = self.columns.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(col));
        }
        let computed = Arc::new(module_column(&key, data)?);
        let mut map = self.columns.write().expect("cache lock poisoned");
        // A concurrent writer may have won the race; keep its column.
        Ok(Arc::clone(map.entry(key).or_insert(computed)))
    }

    pub fn build_system(&self, genome: &Genome, data: &MetaDataset) -> Result<LinearSystem, SystemError> {
        let target = target_column(genome, data)?;
        let columns = genome
            .rhs()
            .iter()
            .map(|m| self.column(m, data))
            .collect::<Result<Vec<_>, _>>()?;
        let columns: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
        Ok(assemble(target, &columns))
    }
}
