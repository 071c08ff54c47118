//! Extreme learning machine regression: a single hidden layer with random,
//! untrained input weights and output weights fitted by (ridge) least
//! squares.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::segment::Sample;
use super::PredictError;
use crate::model::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElmParams {
    pub hidden: usize,
    pub seed: u64,
    /// Ridge penalty on the output weights; 0 gives the minimum-norm
    /// least-squares solution.
    pub ridge: f64,
}

impl Default for ElmParams {
    fn default() -> Self {
        ElmParams { hidden: 100, seed: 0, ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel {
    /// hidden x inputs
    pub input_weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    /// hidden x 2, columns are lon and lat
    pub output_weights: DMatrix<f64>,
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ElmModel {
    pub fn input_len(&self) -> usize {
        self.feature_min.len()
    }

    pub fn hidden(&self) -> usize {
        self.biases.len()
    }

    /// Maps each feature onto [-1, 1] using the training range. Constant
    /// features map to 0.
    pub fn normalize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.feature_min.iter().zip(&self.feature_max))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    2.0 * (x - lo) / span - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Hidden-layer activations, one row per input vector.
    pub fn hidden_matrix(&self, rows: &[&[f64]]) -> DMatrix<f64> {
        let l = self.hidden();
        let mut h = DMatrix::zeros(rows.len(), l);
        for (i, row) in rows.iter().enumerate() {
            let x = self.normalize(row);
            for j in 0..l {
                let z: f64 = self.input_weights.row(j).iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.biases[j];
                h[(i, j)] = sigmoid(z);
            }
        }
        h
    }

    pub fn predict(&self, features: &[f64]) -> Result<GeoPoint, PredictError> {
        if features.len() != self.input_len() {
            return Err(PredictError::Sizing(format!(
                "model expects {} features, got {}",
                self.input_len(),
                features.len()
            )));
        }
        let h = self.hidden_matrix(&[features]);
        let out = h * &self.output_weights;
        Ok(GeoPoint { lon: out[(0, 0)], lat: out[(0, 1)] })
    }
}

/// Solves min ||H b - T||^2 + ridge ||b||^2 through the SVD of `h`. With
/// `ridge == 0` singular values below the rank tolerance are dropped, which
/// yields the minimum-norm solution. Returns None when the factorisation does
/// not reproduce `h`, which nalgebra's SVD can do on exactly rank-deficient
/// input.
fn solve_svd(h: &DMatrix<f64>, t: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let svd = h.clone().svd(true, true);
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let sigma = &svd.singular_values;
    let rebuilt = u * DMatrix::from_diagonal(sigma) * v_t;
    let scale = h.amax().max(f64::MIN_POSITIVE);
    if (rebuilt - h).amax() > 1e-9 * scale * (h.nrows().max(h.ncols()) as f64) {
        return None;
    }
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let tol = smax * h.nrows().max(h.ncols()) as f64 * f64::EPSILON;
    let mut scaled = u.tr_mul(t);
    for (i, &s) in sigma.iter().enumerate() {
        let f = if ridge > 0.0 {
            s / (s * s + ridge)
        } else if s > tol {
            1.0 / s
        } else {
            0.0
        };
        scaled.row_mut(i).scale_mut(f);
    }
    Some(v_t.tr_mul(&scaled))
}

/// Same problem through the eigendecomposition of H'H. Squares the condition
/// number, so it is only the last resort.
fn solve_eigen(h: &DMatrix<f64>, t: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let eig = h.tr_mul(h).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = lmax * h.nrows().max(h.ncols()) as f64 * f64::EPSILON;
    let mut scaled = eig.eigenvectors.tr_mul(&h.tr_mul(t));
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let f = if ridge > 0.0 {
            1.0 / (l.max(0.0) + ridge)
        } else if l > tol {
            1.0 / l
        } else {
            0.0
        };
        scaled.row_mut(i).scale_mut(f);
    }
    &eig.eigenvectors * scaled
}

/// Solves (H'H + ridge I) b = H'T. Uses a Cholesky factorisation when the
/// system is positive definite and falls back to the SVD otherwise.
pub fn solve_output_weights(h: &DMatrix<f64>, t: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    if ridge > 0.0 {
        let mut gram = h.tr_mul(h);
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(gram) {
            let beta = chol.solve(&h.tr_mul(t));
            if beta.iter().all(|v| v.is_finite()) {
                return beta;
            }
        }
    }
    solve_svd(h, t, ridge).unwrap_or_else(|| {
        log::debug!("SVD did not reproduce H, using the Gram eigendecomposition");
        solve_eigen(h, t, ridge)
    })
}

pub fn train_elm(samples: &[Sample], params: &ElmParams) -> Result<ElmModel, PredictError> {
    let first =
        samples.first().ok_or_else(|| PredictError::Sizing("at least one training sample is required".into()))?;
    let d = first.features.len();
    if d == 0 || samples.iter().any(|s| s.features.len() != d) {
        return Err(PredictError::Sizing("training samples have inconsistent feature lengths".into()));
    }
    if params.hidden == 0 {
        return Err(PredictError::Sizing("hidden layer needs at least one node".into()));
    }
    if !(params.ridge.is_finite() && params.ridge >= 0.0) {
        return Err(PredictError::Sizing(format!("ridge must be >= 0, got {}", params.ridge)));
    }

    let mut feature_min = first.features.clone();
    let mut feature_max = first.features.clone();
    for s in samples {
        for (j, &x) in s.features.iter().enumerate() {
            feature_min[j] = feature_min[j].min(x);
            feature_max[j] = feature_max[j].max(x);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let input_weights = DMatrix::from_fn(params.hidden, d, |_, _| rng.random_range(-1.0..=1.0));
    let biases = DVector::from_fn(params.hidden, |_, _| rng.random_range(-1.0..=1.0));

    let mut model = ElmModel {
        input_weights,
        biases,
        output_weights: DMatrix::zeros(params.hidden, 2),
        feature_min,
        feature_max,
        seed: params.seed,
    };
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let h = model.hidden_matrix(&rows);
    let t =
        DMatrix::from_fn(samples.len(), 2, |i, j| if j == 0 { samples[i].target.lon } else { samples[i].target.lat });
    model.output_weights = solve_output_weights(&h, &t, params.ridge);
    Ok(model)
}
