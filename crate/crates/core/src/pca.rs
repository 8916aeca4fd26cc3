//! Principal component analysis for embedding reduction.
//!
//! Components come from the SVD of the column-centered data. Each component
//! is sign-normalized so that its largest-magnitude entry is positive, and
//! variances use the `n − 1` denominator.

use nalgebra::{DMatrix, DVector};

use crate::embedstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::io::{dim_u32, open_container, put_f32s};

const MAGIC: &[u8; 4] = b"SPCA";
const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k × d`, orthonormal rows.
    pub components: DMatrix<f64>,
    /// Non-increasing, length `k`.
    pub component_variances: Vec<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn explained_variance_ratio(&self) -> Result<f64> {
        if self.total_variance <= 0.0 {
            return Err(Error::domain("explained variance of constant data"));
        }
        Ok(self.component_variances.iter().sum::<f64>() / self.total_variance)
    }

    /// Projects rows of `x` (`n × d`) onto the components.
    pub fn transform_f64(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "PCA fitted on dimension {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }

    pub fn inverse_transform_f64(&self, reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if reduced.ncols() != self.n_components() {
            return Err(Error::domain(format!(
                "PCA has {} components, got dimension {}",
                self.n_components(),
                reduced.ncols()
            )));
        }
        let mut out = reduced * &self.components;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }

    pub fn transform(&self, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let reduced = self.transform_f64(&m.to_f64())?;
        EmbeddingMatrix::from_f64(m.ids().to_vec(), &reduced)
    }

    pub fn inverse_transform(&self, reduced: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        let restored = self.inverse_transform_f64(&reduced.to_f64())?;
        EmbeddingMatrix::from_f64(reduced.ids().to_vec(), &restored)
    }
}

pub fn fit(m: &EmbeddingMatrix, k: usize) -> Result<PcaModel> {
    fit_matrix(&m.to_f64(), k)
}

/// Fits `k` components to the rows of `x`. Requires `n ≥ 2` and
/// `1 ≤ k ≤ min(n − 1, d)`; data of rank below `k` gets trailing variances
/// of (numerically) zero.
pub fn fit_matrix(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::domain(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > (n - 1).min(d) {
        return Err(Error::domain(format!(
            "k = {k} outside [1, {}] for {n} rows of dimension {d}",
            (n - 1).min(d)
        )));
    }

    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;
    let total_variance = centered.norm_squared() / denom;

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    // variance along each right singular vector, measured by projection;
    // the singular values themselves can be loose for rank-deficient input
    let axes: Vec<(f64, DVector<f64>)> = v_t
        .row_iter()
        .map(|r| {
            let axis = r.transpose();
            ((&centered * &axis).norm_squared() / denom, axis)
        })
        .collect();
    let mut order: Vec<usize> = (0..axes.len()).collect();
    order.sort_by(|&a, &b| axes[b].0.total_cmp(&axes[a].0));

    let mut components = DMatrix::zeros(k, d);
    let mut component_variances = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        let (variance, axis) = &axes[src];
        let mut axis = axis.transpose();
        let pivot = axis
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        if pivot.1 < 0.0 {
            axis.neg_mut();
        }
        components.set_row(row, &axis);
        component_variances.push(*variance);
    }

    Ok(PcaModel {
        mean,
        components,
        component_variances,
        total_variance,
    })
}

pub fn write_model(model: &PcaModel) -> Result<Vec<u8>> {
    let (k, d) = model.components.shape();
    let mut out = Vec::with_capacity(13 + 4 * (d + k * d + k + 1));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&dim_u32(k, "component count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(d, "dimension")?.to_le_bytes());
    put_f32s(&mut out, model.mean.iter().map(|&v| v as f32));
    put_f32s(&mut out, model.components.transpose().iter().map(|&v| v as f32));
    put_f32s(&mut out, model.component_variances.iter().map(|&v| v as f32));
    put_f32s(&mut out, [model.total_variance as f32]);
    Ok(out)
}

pub fn read_model(raw: &[u8]) -> Result<PcaModel> {
    let mut r = open_container(raw, MAGIC, VERSION)?;
    let k = r.u32("component count")? as usize;
    let d = r.u32("dimension")? as usize;
    if k == 0 || d == 0 || k > d {
        return Err(Error::Format(format!("invalid PCA shape k = {k}, d = {d}")));
    }
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let mean = widen(r.f32s(d, "mean")?);
    let components = widen(r.f32s(k * d, "components")?);
    let variances = widen(r.f32s(k, "variances")?);
    let total = r.f32s(1, "total variance")?[0] as f64;
    r.finish()?;
    if mean.iter().chain(&components).chain(&variances).any(|v| !v.is_finite()) || !total.is_finite() {
        return Err(Error::invalid("non-finite value in PCA model"));
    }
    Ok(PcaModel {
        mean: DVector::from_vec(mean),
        components: DMatrix::from_row_slice(k, d, &components),
        component_variances: variances,
        total_variance: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_oracles::{jacobi_eigen, sample_covariance, Lcg};

    fn random_matrix(rng: &mut Lcg, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.normal())
    }

    fn orthonormality_error(c: &DMatrix<f64>) -> f64 {
        let gram = c * c.transpose();
        (gram - DMatrix::identity(c.nrows(), c.nrows())).amax()
    }

    #[test]
    fn axis_aligned_data() {
        let x = DMatrix::from_row_slice(4, 2, &[-3.0, 0.0, -1.0, 0.0, 1.0, 0.0, 3.0, 0.0]);
        let model = fit_matrix(&x, 1).unwrap();
        assert!((model.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(model.components[(0, 1)].abs() < 1e-12);
        assert!((model.component_variances[0] - 20.0 / 3.0).abs() < 1e-12);
        assert!((model.explained_variance_ratio().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_in_3d() {
        let x = DMatrix::from_fn(6, 3, |i, j| (i as f64 - 2.0) * [1.0, -2.0, 0.5][j] + [4.0, 1.0, -1.0][j]);
        let model = fit_matrix(&x, 1).unwrap();
        assert!((model.explained_variance_ratio().unwrap() - 1.0).abs() < 1e-12);
        // largest-magnitude entry (-2 direction) is flipped positive
        assert!(model.components[(0, 1)] > 0.0);
    }

    #[test]
    fn k_out_of_range() {
        let x = DMatrix::from_fn(3, 5, |i, j| (i * j) as f64);
        assert!(matches!(fit_matrix(&x, 0), Err(Error::Domain(_))));
        assert!(matches!(fit_matrix(&x, 3), Err(Error::Domain(_))));
        assert!(matches!(fit_matrix(&DMatrix::zeros(1, 3), 1), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_data_has_no_ratio() {
        let x = DMatrix::from_element(4, 2, 3.0);
        let model = fit_matrix(&x, 1).unwrap();
        assert!(matches!(model.explained_variance_ratio(), Err(Error::Domain(_))));
    }

    #[test]
    fn variances_match_covariance_eigenvalues() {
        let mut rng = Lcg::new(7);
        let x = random_matrix(&mut rng, 5, 3);
        let model = fit_matrix(&x, 3).unwrap();
        let (eigvals, _) = jacobi_eigen(&sample_covariance(&to_rows(&x)));
        for (got, want) in model.component_variances.iter().zip(&eigvals) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!((model.explained_variance_ratio().unwrap() - 1.0).abs() < 1e-9);
        assert!(orthonormality_error(&model.components) < 1e-8);
    }

    #[test]
    fn mean_row_maps_to_zero_and_zero_maps_to_mean() {
        let mut rng = Lcg::new(3);
        let x = random_matrix(&mut rng, 8, 4);
        let model = fit_matrix(&x, 2).unwrap();
        let mean_row = model.mean.transpose();
        let z = model.transform_f64(&DMatrix::from_row_slice(1, 4, mean_row.as_slice())).unwrap();
        assert!(z.amax() < 1e-12);
        let back = model.inverse_transform_f64(&DMatrix::zeros(1, 2)).unwrap();
        assert!((back.row(0) - mean_row).amax() < 1e-12);
    }

    #[test]
    fn projected_covariance_is_diagonal() {
        let mut rng = Lcg::new(11);
        let x = random_matrix(&mut rng, 30, 6);
        let model = fit_matrix(&x, 4).unwrap();
        let cov = sample_covariance(&to_rows(&model.transform_f64(&x).unwrap()));
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(cov[i][j].abs() < 1e-8 * model.total_variance);
                }
            }
            assert!((cov[i][i] - model.component_variances[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_error_shrinks_with_k() {
        let mut rng = Lcg::new(5);
        let x = random_matrix(&mut rng, 12, 5);
        let mut last = f64::INFINITY;
        for k in 1..=5 {
            let model = fit_matrix(&x, k).unwrap();
            let back = model.inverse_transform_f64(&model.transform_f64(&x).unwrap()).unwrap();
            let err = (&back - &x).norm();
            assert!(err <= last + 1e-12, "k={k}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn rank_deficient_full_k_round_trips() {
        // rank 2 data in 4 dimensions
        let mut rng = Lcg::new(9);
        let basis = random_matrix(&mut rng, 2, 4);
        let coeffs = random_matrix(&mut rng, 10, 2);
        let x = &coeffs * &basis;
        let model = fit_matrix(&x, 3).unwrap();
        assert!(model.component_variances[2].abs() < 1e-10);
        assert!(orthonormality_error(&model.components) < 1e-8);
        let two = fit_matrix(&x, 2).unwrap();
        let back = two.inverse_transform_f64(&two.transform_f64(&x).unwrap()).unwrap();
        assert!((back - &x).amax() < 1e-6);
    }

    #[test]
    fn embedding_matrix_round_trip() {
        let mut rng = Lcg::new(1);
        let x = random_matrix(&mut rng, 6, 3);
        let m = EmbeddingMatrix::from_f64((0..6).map(|i| format!("r{i}")).collect(), &x).unwrap();
        let model = fit(&m, 3).unwrap();
        let reduced = model.transform(&m).unwrap();
        assert_eq!(reduced.ids(), m.ids());
        let back = model.inverse_transform(&reduced).unwrap();
        assert!((back.to_f64() - m.to_f64()).amax() < 1e-6);
        let wrong = EmbeddingMatrix::new(vec!["a".into()], 2, vec![0.0, 1.0]).unwrap();
        assert!(matches!(model.transform(&wrong), Err(Error::Domain(_))));
        assert!(matches!(model.inverse_transform(&wrong), Err(Error::Domain(_))));
    }

    #[test]
    fn affine_transform() {
        let mut rng = Lcg::new(21);
        let x = random_matrix(&mut rng, 10, 4);
        let model = fit_matrix(&x, 3).unwrap();
        let a = random_matrix(&mut rng, 1, 4);
        let b = random_matrix(&mut rng, 1, 4);
        let alpha = 0.3;
        let mix = &a * alpha + &b * (1.0 - alpha);
        let lhs = model.transform_f64(&mix).unwrap();
        let rhs = model.transform_f64(&a).unwrap() * alpha + model.transform_f64(&b).unwrap() * (1.0 - alpha);
        assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn model_container_round_trip() {
        let mut rng = Lcg::new(2);
        let x = random_matrix(&mut rng, 9, 4);
        let model = fit_matrix(&x, 2).unwrap();
        let bytes = write_model(&model).unwrap();
        assert_eq!(&bytes[..5], b"SPCA\x01");
        assert_eq!(bytes.len(), 13 + 4 * (4 + 8 + 2 + 1));
        let back = read_model(&bytes).unwrap();
        assert!((back.components - &model.components).amax() < 1e-6);
        assert_eq!(write_model(&read_model(&bytes).unwrap()).unwrap(), bytes);
        assert!(matches!(read_model(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
    }

    fn to_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
        x.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}
