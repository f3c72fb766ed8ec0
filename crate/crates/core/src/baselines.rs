//! Reference complexity measures.
//!
//! The weak baselines are capacity proxies computed from a model's weights;
//! the strong one is the true gap plus Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::archive::{Layer, LayerKind, TensorArchive};
use crate::error::{Error, Result};
use crate::population::{MeasureVector, Population};
use crate::rng;

pub const DEFAULT_POWER_TOL: f64 = 1e-6;
pub const DEFAULT_POWER_MAX_ITER: usize = 1000;

fn weight_layers(arch: &TensorArchive) -> impl Iterator<Item = &Layer> {
    arch.layers.iter().filter(|l| l.kind != LayerKind::Bias)
}

/// Total number of parameters.
pub fn param_count(arch: &TensorArchive) -> f64 {
    arch.layers.iter().map(|l| l.numel() as f64).sum()
}

/// `params · depth · log2(params)`, depth being the number of non-bias layers.
///
/// A labeled stand-in for a VC-dimension bound, not the bound itself.
pub fn depth_weighted_param_count(arch: &TensorArchive) -> f64 {
    let params = param_count(arch);
    if params < 1.0 {
        return 0.0;
    }
    params * weight_layers(arch).count() as f64 * params.log2()
}

fn frobenius(layer: &Layer) -> f64 {
    layer
        .data
        .iter()
        .map(|&w| (w as f64) * (w as f64))
        .sum::<f64>()
        .sqrt()
}

/// Σ ln ‖W‖_F over non-bias layers.
pub fn log_frobenius_product(arch: &TensorArchive) -> Result<f64> {
    let mut total = 0.0;
    let mut any = false;
    for layer in weight_layers(arch) {
        let norm = frobenius(layer);
        if norm == 0.0 {
            return Err(zero_layer(layer));
        }
        total += norm.ln();
        any = true;
    }
    if !any {
        return Err(Error::NoWeightLayers);
    }
    Ok(total)
}

fn zero_layer(layer: &Layer) -> Error {
    Error::Layer {
        layer: layer.name.clone(),
        message: "all weights are zero; log norm is -inf".into(),
    }
}

/// Largest singular value of the layer's matrix view, by power iteration on
/// the smaller Gram matrix.
///
/// Stops once `‖A v − λ v‖ / λ ≤ tol`, which bounds the relative error of
/// the eigenvalue λ = σ² by `tol`. The start vector comes from a fixed seed
/// that depends only on the matrix shape.
pub fn spectral_norm(layer: &Layer, tol: f64, max_iter: usize) -> Result<f64> {
    if frobenius(layer) == 0.0 {
        return Err(zero_layer(layer));
    }
    let (rows, cols) = layer.matrix_dims();
    let w: Vec<f64> = layer.data.iter().map(|&x| x as f64).collect();
    // v lives on the smaller side.
    let transpose = rows < cols;
    let dim = rows.min(cols);

    let mut start = rng::stream(
        0x5eed,
        rng::PURPOSE_POWER_ITERATION,
        ((rows as u64) << 32) ^ cols as u64,
    );
    let mut v: Vec<f64> = (0..dim).map(|_| start.random_range(-1.0..1.0)).collect();
    normalize(&mut v);

    let mut inner = vec![0.0; rows.max(cols)];
    let mut y = vec![0.0; dim];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        if transpose {
            // y = W Wᵀ v
            mat_t_vec(&w, rows, cols, &v, &mut inner[..cols]);
            mat_vec(&w, rows, cols, &inner[..cols], &mut y);
        } else {
            // y = Wᵀ W v
            mat_vec(&w, rows, cols, &v, &mut inner[..rows]);
            mat_t_vec(&w, rows, cols, &inner[..rows], &mut y);
        }
        let lambda: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
        if lambda > 0.0 {
            residual = y
                .iter()
                .zip(&v)
                .map(|(yi, vi)| (yi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt()
                / lambda;
            if residual <= tol {
                return Ok(lambda.sqrt());
            }
        }
        v.copy_from_slice(&y);
        if !normalize(&mut v) {
            break;
        }
    }
    Err(Error::NotConverged {
        layer: layer.name.clone(),
        iterations: max_iter,
        residual,
    })
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// out = W x, W row-major rows × cols.
fn mat_vec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = w[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    }
}

/// out = Wᵀ x.
fn mat_t_vec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        let xr = x[r];
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += a * xr;
        }
    }
}

/// Σ ln σ_max(W) over non-bias layers.
pub fn log_spectral_product(arch: &TensorArchive, tol: f64, max_iter: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut any = false;
    for layer in weight_layers(arch) {
        total += spectral_norm(layer, tol, max_iter)?.ln();
        any = true;
    }
    if !any {
        return Err(Error::NoWeightLayers);
    }
    Ok(total)
}

/// The true gap plus zero-mean Gaussian noise of standard deviation `sigma`.
///
/// Each model draws from its own ChaCha8 stream selected by its coordinate
/// and replica, so the result ignores record order.
pub fn noisy_oracle(pop: &Population, sigma: f64, seed: u64) -> Result<MeasureVector> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let values = pop
        .records()
        .iter()
        .zip(pop.gaps())
        .map(|(rec, &g)| {
            let z: f64 =
                rng::model_stream(seed, rng::PURPOSE_NOISY_ORACLE, &rec.coord, rec.replica)
                    .sample(StandardNormal);
            g + sigma * z
        })
        .collect();
    Ok(MeasureVector::new("noisy_oracle", values))
}

/// Weight-based baselines selectable by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightBaseline {
    ParamCount,
    VcProxy,
    LogFrobenius,
    LogSpectral,
}

impl WeightBaseline {
    pub const ALL: [WeightBaseline; 4] = [
        WeightBaseline::ParamCount,
        WeightBaseline::VcProxy,
        WeightBaseline::LogFrobenius,
        WeightBaseline::LogSpectral,
    ];

    pub fn id(self) -> &'static str {
        match self {
            WeightBaseline::ParamCount => "param_count",
            WeightBaseline::VcProxy => "vc_proxy",
            WeightBaseline::LogFrobenius => "log_frobenius_product",
            WeightBaseline::LogSpectral => "log_spectral_product",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.id() == id)
    }

    pub fn evaluate(self, arch: &TensorArchive) -> Result<f64> {
        match self {
            WeightBaseline::ParamCount => Ok(param_count(arch)),
            WeightBaseline::VcProxy => Ok(depth_weighted_param_count(arch)),
            WeightBaseline::LogFrobenius => log_frobenius_product(arch),
            WeightBaseline::LogSpectral => {
                log_spectral_product(arch, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(layers: Vec<Layer>) -> TensorArchive {
        TensorArchive::new(layers).unwrap()
    }

    fn eye2(name: &str) -> Layer {
        Layer::new(name, LayerKind::Dense, vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn param_counts() {
        let a = arch(vec![
            Layer::new("w", LayerKind::Dense, vec![10, 10], vec![0.1; 100]),
            Layer::new("b", LayerKind::Bias, vec![10], vec![0.0; 10]),
        ]);
        assert_eq!(param_count(&a), 110.0);
        assert_eq!(depth_weighted_param_count(&a), 110.0 * 110f64.log2());
        assert_eq!(param_count(&TensorArchive::default()), 0.0);
        let c = arch(vec![
            Layer::new("c1", LayerKind::Conv, vec![16, 3, 3, 3], vec![0.0; 432]),
            Layer::new("c2", LayerKind::Conv, vec![32, 16, 3, 3], vec![0.0; 4608]),
        ]);
        assert_eq!(param_count(&c), 5040.0);
    }

    #[test]
    fn frobenius_examples() {
        let two = log_frobenius_product(&arch(vec![eye2("a"), eye2("b")])).unwrap();
        assert!((two - 2f64.ln()).abs() < 1e-15);
        let one = arch(vec![Layer::new("s", LayerKind::Dense, vec![1], vec![1.0])]);
        assert_eq!(log_frobenius_product(&one).unwrap(), 0.0);
    }

    #[test]
    fn frobenius_errors() {
        let zero = arch(vec![
            eye2("a"),
            Layer::new("z", LayerKind::Dense, vec![2], vec![0.0; 2]),
        ]);
        match log_frobenius_product(&zero).unwrap_err() {
            Error::Layer { layer, .. } => assert_eq!(layer, "z"),
            e => panic!("unexpected {e}"),
        }
        let bias_only = arch(vec![Layer::new(
            "b",
            LayerKind::Bias,
            vec![2],
            vec![1.0; 2],
        )]);
        assert!(matches!(
            log_frobenius_product(&bias_only),
            Err(Error::NoWeightLayers)
        ));
    }

    #[test]
    fn spectral_examples() {
        let diag = arch(vec![Layer::new(
            "d",
            LayerKind::Dense,
            vec![2, 2],
            vec![3.0, 0.0, 0.0, 1.0],
        )]);
        let v = log_spectral_product(&diag, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER).unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-6);
        let id = arch(vec![eye2("i")]);
        assert!(log_spectral_product(&id, 1e-12, 10).unwrap().abs() < 1e-12);
        // wide matrix goes through the transposed Gram
        let wide = Layer::new("w", LayerKind::Conv, vec![1, 2, 1, 1], vec![3.0, 4.0]);
        assert!((spectral_norm(&wide, 1e-12, 10).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_reports_non_convergence() {
        // Two nearly equal singular values and one iteration.
        let l = Layer::new(
            "slow",
            LayerKind::Dense,
            vec![2, 2],
            vec![1.0, 0.3, 0.3, 0.9],
        );
        match spectral_norm(&l, 1e-15, 1).unwrap_err() {
            Error::NotConverged {
                layer,
                iterations,
                residual,
            } => {
                assert_eq!((layer.as_str(), iterations), ("slow", 1));
                assert!(residual > 1e-15 && residual.is_finite());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn baseline_ids() {
        for b in WeightBaseline::ALL {
            assert_eq!(WeightBaseline::from_id(b.id()), Some(b));
        }
        assert_eq!(WeightBaseline::from_id("noisy_oracle"), None);
    }
}
