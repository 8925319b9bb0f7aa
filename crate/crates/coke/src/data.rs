//! Source and target dataset containers.

use nalgebra::{DMatrix, DVector};

use crate::error::{CokeError, Result};

/// Labeled source observations: covariates, a binary treatment indicator,
/// and a real-valued outcome per row.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    covariates: DMatrix<f64>,
    treatments: Vec<u8>,
    outcomes: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(
        covariates: DMatrix<f64>,
        treatments: Vec<u8>,
        outcomes: DVector<f64>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        if n == 0 {
            return Err(CokeError::invalid("labeled dataset has no rows"));
        }
        if treatments.len() != n || outcomes.len() != n {
            return Err(CokeError::invalid(format!(
                "length mismatch: {} covariate rows, {} treatments, {} outcomes",
                n,
                treatments.len(),
                outcomes.len()
            )));
        }
        if let Some(bad) = treatments.iter().find(|&&a| a > 1) {
            return Err(CokeError::invalid(format!(
                "treatment indicators must be 0 or 1, got {bad}"
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) || outcomes.iter().any(|v| !v.is_finite()) {
            return Err(CokeError::invalid("non-finite value in labeled dataset"));
        }
        Ok(Self {
            covariates,
            treatments,
            outcomes,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn treatments(&self) -> &[u8] {
        &self.treatments
    }

    pub fn outcomes(&self) -> &DVector<f64> {
        &self.outcomes
    }

    /// Row indices belonging to the given arm.
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        self.treatments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == arm)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.treatments.iter().filter(|&&a| a == arm).count()
    }

    /// New dataset made of the selected rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(CokeError::invalid("empty row selection"));
        }
        let rows = DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.covariates[(indices[i], j)]
        });
        let a = indices.iter().map(|&i| self.treatments[i]).collect();
        let y = DVector::from_fn(indices.len(), |i, _| self.outcomes[indices[i]]);
        Self::new(rows, a, y)
    }

    /// Covariates and outcomes of one arm.
    pub fn arm_rows(&self, arm: u8) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let idx = self.arm_indices(arm);
        if idx.is_empty() {
            return None;
        }
        let z = DMatrix::from_fn(idx.len(), self.dim(), |i, j| self.covariates[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.outcomes[idx[i]]);
        Some((z, y))
    }
}

/// Target covariates without treatments or outcomes.
#[derive(Debug, Clone)]
pub struct UnlabeledDataset {
    covariates: DMatrix<f64>,
}

impl UnlabeledDataset {
    pub fn new(covariates: DMatrix<f64>) -> Result<Self> {
        if covariates.nrows() == 0 {
            return Err(CokeError::invalid("unlabeled dataset has no rows"));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(CokeError::invalid("non-finite value in unlabeled dataset"));
        }
        Ok(Self { covariates })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(CokeError::invalid("empty row selection"));
        }
        let rows = DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.covariates[(indices[i], j)]
        });
        Self::new(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        let z = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = LabeledDataset::new(z, vec![0], DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(err, Err(CokeError::InvalidInput(_))));
    }

    #[test]
    fn rejects_bad_treatment_code() {
        let z = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = LabeledDataset::new(z, vec![0, 2], DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(err, Err(CokeError::InvalidInput(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let z = DMatrix::from_row_slice(2, 1, &[0.0, f64::NAN]);
        let err = LabeledDataset::new(z, vec![0, 1], DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(err, Err(CokeError::InvalidInput(_))));
        let err = UnlabeledDataset::new(DMatrix::from_row_slice(1, 1, &[f64::INFINITY]));
        assert!(matches!(err, Err(CokeError::InvalidInput(_))));
    }

    #[test]
    fn subset_preserves_rows() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = LabeledDataset::new(z, vec![0, 1, 0], DVector::from_vec(vec![7.0, 8.0, 9.0]))
            .unwrap();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.covariates().row(0).iter().copied().collect::<Vec<_>>(), vec![5.0, 6.0]);
        assert_eq!(s.treatments(), &[0, 0]);
        assert_eq!(s.outcomes()[1], 7.0);
    }

    #[test]
    fn arm_indices_partition_rows() {
        let z = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let d = LabeledDataset::new(z, vec![1, 0, 1, 0], DVector::from_vec(vec![0.0; 4])).unwrap();
        assert_eq!(d.arm_indices(1), vec![0, 2]);
        assert_eq!(d.arm_indices(0), vec![1, 3]);
        assert_eq!(d.arm_count(1), 2);
    }
}
