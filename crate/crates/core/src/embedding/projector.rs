use candle_core::{DType, Device, Tensor};

use super::encoder::EmbeddingVector;
use crate::error::{Error, Result};

/// Learnable map from the averaged ingredient embedding to the channel width
/// of the fusion site: `relu(W t + b)`.
#[derive(Debug, Clone)]
pub struct ProjectorParams {
    /// `(C, E)`
    pub weight: Tensor,
    /// `(C)`
    pub bias: Tensor,
}

impl ProjectorParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (c, _e) = weight.dims2()?;
        if bias.dims() != [c] {
            return Err(Error::shape(format!("bias [{c}]"), format!("{:?}", bias.dims())));
        }
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    /// Batched projection `(B, E) -> (B, C)`.
    pub fn forward(&self, t: &Tensor) -> Result<Tensor> {
        let (_, e) = t.dims2()?;
        if e != self.input_dim() {
            return Err(Error::shape(
                format!("embedding dim {}", self.input_dim()),
                format!("{e}"),
            ));
        }
        let t = t.to_dtype(self.weight.dtype())?;
        Ok(t.matmul(&self.weight.t()?)?
            .broadcast_add(&self.bias)?
            .relu()?)
    }
}

/// Embedding vector as a `(1, E)` tensor.
pub fn embedding_tensor(t: &EmbeddingVector, dtype: DType, device: &Device) -> Result<Tensor> {
    Ok(Tensor::from_slice(t.values(), (1, t.dim()), device)?.to_dtype(dtype)?)
}

/// Projects one aggregated ingredient embedding.
pub fn project_ingredient_feature(t: &EmbeddingVector, params: &ProjectorParams) -> Result<Vec<f64>> {
    if t.dim() != params.input_dim() {
        return Err(Error::shape(params.input_dim(), t.dim()));
    }
    let x = embedding_tensor(t, params.weight.dtype(), params.weight.device())?;
    Ok(params
        .forward(&x)?
        .squeeze(0)?
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Var;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(w: Vec<f64>, b: Vec<f64>, c: usize, e: usize) -> ProjectorParams {
        let dev = Device::Cpu;
        ProjectorParams::new(
            Tensor::from_vec(w, (c, e), &dev).unwrap(),
            Tensor::from_vec(b, c, &dev).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_weight_applies_relu() {
        let p = params(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        let out = project_ingredient_feature(&EmbeddingVector(vec![-1.0, 2.0]), &p).unwrap();
        assert_eq!(out, vec![0.0, 2.0]);
    }

    #[test]
    fn negative_bias_on_zero_input() {
        let p = params(vec![0.3, -0.2, 0.5, 0.9], vec![-1.0, -1.0], 2, 2);
        let out = project_ingredient_feature(&EmbeddingVector(vec![0.0, 0.0]), &p).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let p = params(vec![1.0; 6], vec![0.0; 2], 2, 3);
        assert!(matches!(
            project_ingredient_feature(&EmbeddingVector(vec![1.0, 2.0]), &p),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matches_explicit_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (c, e) = (rng.random_range(1..12), rng.random_range(1..12));
            let w: Vec<f64> = (0..c * e).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f32> = (0..e).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let got = project_ingredient_feature(&EmbeddingVector(t.clone()), &params(w.clone(), b.clone(), c, e)).unwrap();
            for row in 0..c {
                let dot: f64 = (0..e).map(|k| w[row * e + k] * t[k] as f64).sum::<f64>() + b[row];
                let want = dot.max(0.0);
                assert!((got[row] - want).abs() <= 1e-6 * want.abs().max(1.0), "{} vs {want}", got[row]);
                assert!(got[row] >= 0.0);
            }
        }
    }

    #[test]
    fn lipschitz_bound_on_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (c, e) = (6, 5);
        let w: Vec<f64> = (0..c * e).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frob = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p = params(w, (0..c).map(|_| rng.random_range(-0.5..0.5)).collect(), c, e);
        for _ in 0..100 {
            let t1: Vec<f32> = (0..e).map(|_| rng.random_range(-2.0f32..2.0)).collect();
            let t2: Vec<f32> = (0..e).map(|_| rng.random_range(-2.0f32..2.0)).collect();
            let y1 = project_ingredient_feature(&EmbeddingVector(t1.clone()), &p).unwrap();
            let y2 = project_ingredient_feature(&EmbeddingVector(t2.clone()), &p).unwrap();
            let dy = y1.iter().zip(&y2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dt = t1.iter().zip(&t2).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>().sqrt();
            assert!(dy <= frob * dt + 1e-9);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        // scalar loss L = sum_c (relu(W t + b)_c * g_c)
        let dev = Device::Cpu;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (c, e) = (4, 3);
        let w0: Vec<f64> = (0..c * e).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b0: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..1.0)).collect();
        let t: Vec<f64> = (0..e).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gt = Tensor::from_vec(g.clone(), (1, c), &dev).unwrap();
        let x = Tensor::from_vec(t.clone(), (1, e), &dev).unwrap();

        let loss_of = |w: &[f64], b: &[f64]| -> f64 {
            (0..c)
                .map(|r| {
                    let z: f64 = (0..e).map(|k| w[r * e + k] * t[k]).sum::<f64>() + b[r];
                    z.max(0.0) * g[r]
                })
                .sum()
        };

        let wv = Var::from_tensor(&Tensor::from_vec(w0.clone(), (c, e), &dev).unwrap()).unwrap();
        let bv = Var::from_tensor(&Tensor::from_vec(b0.clone(), c, &dev).unwrap()).unwrap();
        let p = ProjectorParams::new(wv.as_tensor().clone(), bv.as_tensor().clone()).unwrap();
        let loss = p.forward(&x).unwrap().mul(&gt).unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        let gw = grads.get(&wv).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let gb = grads.get(&bv).unwrap().to_vec1::<f64>().unwrap();

        let h = 1e-6;
        for i in 0..c * e {
            let (mut up, mut dn) = (w0.clone(), w0.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_of(&up, &b0) - loss_of(&dn, &b0)) / (2.0 * h);
            assert!((fd - gw[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "w[{i}]: {fd} vs {}", gw[i]);
        }
        for i in 0..c {
            let (mut up, mut dn) = (b0.clone(), b0.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (loss_of(&w0, &up) - loss_of(&w0, &dn)) / (2.0 * h);
            assert!((fd - gb[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "b[{i}]: {fd} vs {}", gb[i]);
        }
    }
}
