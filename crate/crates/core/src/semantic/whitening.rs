use nalgebra::{DMatrix, SymmetricEigen};

use super::{EmbeddingMatrix, SemanticError, WhitenedVector};

/// Eigenvalues at or below this are treated as zero variance.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Centering vector plus a `D x d` whitening projection.
///
/// Applying the model to the rows it was fitted on gives zero mean and identity
/// covariance in the first `d` principal directions.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningModel {
    mean: Vec<f64>,
    /// Row-major `D x d`.
    projection: Vec<f64>,
    output_dim: usize,
    source_count: usize,
}

impl WhiteningModel {
    pub fn from_parts(
        mean: Vec<f64>,
        projection: Vec<f64>,
        output_dim: usize,
        source_count: usize,
    ) -> Result<Self, SemanticError> {
        let input_dim = mean.len();
        if output_dim == 0 || output_dim > input_dim {
            return Err(SemanticError::InvalidDimension {
                requested: output_dim,
                available: input_dim,
            });
        }
        if projection.len() != input_dim * output_dim {
            return Err(SemanticError::LengthMismatch {
                expected: input_dim * output_dim,
                found: projection.len(),
            });
        }
        if mean.iter().chain(&projection).any(|v| !v.is_finite()) {
            return Err(SemanticError::NonFinite);
        }
        Ok(Self {
            mean,
            projection,
            output_dim,
            source_count,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Number of rows the model was fitted on (0 when loaded from disk).
    pub fn source_count(&self) -> usize {
        self.source_count
    }

    /// `(x - mean) . W`
    pub fn apply(&self, x: &[f32]) -> Result<WhitenedVector, SemanticError> {
        if x.len() != self.input_dim() {
            return Err(SemanticError::LengthMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0f64; self.output_dim];
        for (i, (&xi, &mi)) in x.iter().zip(&self.mean).enumerate() {
            let centered = xi as f64 - mi;
            let row = &self.projection[i * self.output_dim..(i + 1) * self.output_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += centered * w;
            }
        }
        Ok(WhitenedVector(out))
    }

    /// Whitens every row of `matrix`, keeping ids and narrowing to `f32`.
    pub fn apply_matrix(&self, matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix, SemanticError> {
        let mut data = Vec::with_capacity(matrix.len() * self.output_dim);
        for row in matrix.rows() {
            data.extend(self.apply(row)?.0.into_iter().map(|v| v as f32));
        }
        EmbeddingMatrix::new(matrix.ids().to_vec(), self.output_dim, data)
    }
}

/// Fits the whitening transform on `train`, reducing to `output_dim` dimensions.
///
/// `mean` is the column mean, `cov = (X - mean)^T (X - mean) / N`, and with
/// `cov = U diag(L) U^T` (eigenvalues descending) the projection is the first
/// `output_dim` columns of `U diag(L)^-1/2`. Each eigenvector is flipped so its
/// largest-magnitude entry is positive.
pub fn fit_whitening(train: &EmbeddingMatrix, output_dim: usize) -> Result<WhiteningModel, SemanticError> {
    let n = train.len();
    let dim = train.dim();
    if n < 2 {
        return Err(SemanticError::TooFewRows(n));
    }
    if output_dim == 0 || output_dim > dim {
        return Err(SemanticError::InvalidDimension {
            requested: output_dim,
            available: dim,
        });
    }

    let mut mean = vec![0f64; dim];
    for row in train.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, dim, |r, c| train.row(r)[c] as f64 - mean[c]);
    let cov = centered.tr_mul(&centered) / n as f64;
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let usable = order
        .iter()
        .filter(|&&i| eigen.eigenvalues[i] > EIGENVALUE_FLOOR)
        .count();
    if usable < output_dim {
        return Err(SemanticError::DegenerateCovariance {
            usable_rank: usable,
            requested: output_dim,
        });
    }

    let mut projection = vec![0f64; dim * output_dim];
    for (col, &k) in order.iter().take(output_dim).enumerate() {
        let vector = eigen.eigenvectors.column(k);
        let pivot = vector
            .iter()
            .enumerate()
            .fold((0usize, 0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0;
        let sign = if vector[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / eigen.eigenvalues[k].sqrt();
        for row in 0..dim {
            projection[row * output_dim + col] = vector[row] * scale;
        }
    }

    WhiteningModel::from_parts(mean, projection, output_dim, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            rows[0].len(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    /// Brute-force mean and covariance of whitened rows.
    fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let cov = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n)
                    .collect()
            })
            .collect();
        (mean, cov)
    }

    #[test]
    fn square_corners() {
        // Covariance of the four corners is diag(1, 1) by hand: each coordinate
        // takes 0 and 2 equally often around a mean of 1.
        let m = matrix(&[&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0], &[2.0, 2.0]]);
        let model = fit_whitening(&m, 2).unwrap();
        assert_eq!(model.mean(), &[1.0, 1.0]);
        let rows: Vec<_> = m.rows().map(|r| model.apply(r).unwrap().0).collect();
        let (mean, cov) = moments(&rows);
        for j in 0..2 {
            assert!(mean[j].abs() < 1e-9);
            for (k, c) in cov[j].iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 1e-9, "cov[{j}][{k}] = {c}");
            }
        }
    }

    #[test]
    fn centering_maps_mean_to_zero() {
        let m = matrix(&[&[1.0, 2.0, 0.5], &[3.0, -1.0, 0.0], &[0.0, 0.0, 4.0], &[2.0, 1.0, 1.0]]);
        let model = fit_whitening(&m, 3).unwrap();
        let mu: Vec<f32> = model.mean().iter().map(|&v| v as f32).collect();
        let z = model.apply(&mu).unwrap();
        assert!(z.0.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = matrix(&[&[1.0, 2.0]]);
        assert!(matches!(fit_whitening(&one, 1), Err(SemanticError::TooFewRows(1))));

        let same = matrix(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        match fit_whitening(&same, 1) {
            Err(SemanticError::DegenerateCovariance { usable_rank, .. }) => assert_eq!(usable_rank, 0),
            other => panic!("expected degenerate covariance, got {other:?}"),
        }

        let m = matrix(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert!(fit_whitening(&m, 3).is_err());
        let model = fit_whitening(&m, 2).unwrap();
        assert!(matches!(
            model.apply(&[0.0, 0.0, 0.0]),
            Err(SemanticError::LengthMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn rank_deficient_data_reports_usable_rank() {
        // Points on a line in 3-D have rank 1.
        let m = matrix(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[3.0, 6.0, 9.0]]);
        match fit_whitening(&m, 2) {
            Err(SemanticError::DegenerateCovariance { usable_rank, requested }) => {
                assert_eq!((usable_rank, requested), (1, 2))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_whitening(&m, 1).is_ok());
    }

    #[test]
    fn sign_is_canonical() {
        let m = matrix(&[&[0.0, 0.0], &[3.0, 1.0], &[-1.0, 2.0], &[5.0, -2.0], &[1.0, 1.0]]);
        let model = fit_whitening(&m, 2).unwrap();
        let w = model.projection();
        for col in 0..2 {
            let column = [w[col], w[2 + col]];
            let max = column.iter().copied().fold(0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(max > 0.0);
        }
    }
}
