use candle_core::Tensor;

use crate::error::{Error, Result};

/// Batched convolutional activations, `(B, C, H, W)`.
#[derive(Debug, Clone)]
pub struct FeatureMap(pub Tensor);

impl FeatureMap {
    pub fn new(values: Tensor) -> Result<Self> {
        match values.rank() {
            3 => Ok(Self(values.unsqueeze(0)?)),
            4 => Ok(Self(values)),
            r => Err(Error::shape("(C, H, W) or (B, C, H, W)", format!("rank {r}"))),
        }
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }
}

/// Transformer token sequence `(B, N, D)` laid out as
/// `[class, ingredient?, patch...]`.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub has_ingredient_token: bool,
}

impl TokenSequence {
    pub fn new(tokens: Tensor) -> Result<Self> {
        let tokens = match tokens.rank() {
            2 => tokens.unsqueeze(0)?,
            3 => tokens,
            r => return Err(Error::shape("(N, D) or (B, N, D)", format!("rank {r}"))),
        };
        Ok(Self {
            tokens,
            has_ingredient_token: false,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.dims()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.dims()[2]
    }

    /// Patch tokens only, `(B, P, D)`.
    pub fn patches(&self) -> Result<Tensor> {
        let start = if self.has_ingredient_token { 2 } else { 1 };
        Ok(self.tokens.narrow(1, start, self.len() - start)?)
    }
}

/// Normalises an ingredient vector to `(B, C)` for a batch of `b`.
fn batch_vector(t: &Tensor, b: usize, c: usize) -> Result<Tensor> {
    let t = match t.rank() {
        1 => t.unsqueeze(0)?,
        2 => t.clone(),
        r => return Err(Error::shape(format!("vector of {c}"), format!("rank {r}"))),
    };
    let (tb, tc) = t.dims2()?;
    if tc != c {
        return Err(Error::shape(format!("{c} channels"), tc));
    }
    if tb != 1 && tb != b {
        return Err(Error::shape(format!("batch 1 or {b}"), tb));
    }
    Ok(t)
}

/// Adds `t[c]` to every spatial position of channel `c`.
///
/// `t` is either one vector `(C)` shared by the batch or one row per
/// sample `(B, C)`.
pub fn fuse_broadcast(x: &FeatureMap, t: &Tensor) -> Result<FeatureMap> {
    let (b, c, _, _) = x.0.dims4()?;
    let t = batch_vector(t, b, c)?.to_dtype(x.0.dtype())?;
    let t = t.reshape((t.dim(0)?, c, 1, 1))?;
    Ok(FeatureMap(x.0.broadcast_add(&t)?))
}

/// Like [`fuse_broadcast`] but only for rows with `present[i]`; other
/// rows are passed through untouched.
pub(crate) fn fuse_broadcast_masked(x: &FeatureMap, t: &Tensor, present: &[bool]) -> Result<FeatureMap> {
    if present.iter().all(|&p| p) {
        return fuse_broadcast(x, t);
    }
    if !present.iter().any(|&p| p) {
        return Ok(x.clone());
    }
    let fused = fuse_broadcast(x, t)?;
    let (b, c, h, w) = x.0.dims4()?;
    if present.len() != b {
        return Err(Error::shape(format!("{b} mask entries"), present.len()));
    }
    let mask: Vec<u8> = present.iter().map(|&p| p as u8).collect();
    let mask = Tensor::from_vec(mask, (b, 1, 1, 1), x.0.device())?
        .broadcast_as((b, c, h, w))?
        .contiguous()?;
    Ok(FeatureMap(mask.where_cond(&fused.0, &x.0)?))
}

/// Inserts the ingredient token at index 1, directly after the class token.
pub fn fuse_token(tokens: &TokenSequence, t: &Tensor) -> Result<TokenSequence> {
    if tokens.has_ingredient_token {
        return Err(Error::DoubleFusion);
    }
    let (b, n, d) = tokens.tokens.dims3()?;
    if n == 0 {
        return Err(Error::shape("class token", "empty sequence"));
    }
    let t = batch_vector(t, b, d)?.to_dtype(tokens.tokens.dtype())?;
    let t = t.broadcast_as((b, d))?.unsqueeze(1)?;
    let cls = tokens.tokens.narrow(1, 0, 1)?;
    let rest = tokens.tokens.narrow(1, 1, n - 1)?;
    Ok(TokenSequence {
        tokens: Tensor::cat(&[&cls, &t, &rest], 1)?,
        has_ingredient_token: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    fn bits(t: &Tensor) -> Vec<u64> {
        t.flatten_all().unwrap().to_vec1::<f64>().unwrap().into_iter().map(f64::to_bits).collect()
    }

    #[test]
    fn worked_example() {
        let x = FeatureMap::new(Tensor::from_vec(vec![3.0, 4.0], (2, 1, 1), &Device::Cpu).unwrap()).unwrap();
        let t = Tensor::from_vec(vec![1.0, -5.0], 2, &Device::Cpu).unwrap();
        let y = fuse_broadcast(&x, &t).unwrap();
        assert_eq!(y.0.flatten_all().unwrap().to_vec1::<f64>().unwrap(), vec![4.0, -1.0]);
    }

    #[test]
    fn zero_vector_is_bitwise_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureMap(Tensor::from_vec(rand_vec(&mut rng, 2 * 3 * 4 * 5), (2, 3, 4, 5), &Device::Cpu).unwrap());
        let y = fuse_broadcast(&x, &Tensor::zeros(3, DType::F64, &Device::Cpu).unwrap()).unwrap();
        assert_eq!(bits(&x.0), bits(&y.0));
    }

    #[test]
    fn additivity_against_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let (c, h, w) = (rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..5));
            let xv = rand_vec(&mut rng, c * h * w);
            let (t1, t2) = (rand_vec(&mut rng, c), rand_vec(&mut rng, c));
            let x = FeatureMap::new(Tensor::from_vec(xv.clone(), (c, h, w), &Device::Cpu).unwrap()).unwrap();
            let tt = |v: &Vec<f64>| Tensor::from_vec(v.clone(), c, &Device::Cpu).unwrap();
            let twice = fuse_broadcast(&fuse_broadcast(&x, &tt(&t1)).unwrap(), &tt(&t2)).unwrap();
            let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
            let once = fuse_broadcast(&x, &tt(&sum)).unwrap();
            let got = twice.0.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let got1 = once.0.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            for (i, (&a, &b)) in got.iter().zip(&got1).enumerate() {
                let oracle = xv[i] + t1[i / (h * w)] + t2[i / (h * w)];
                assert!((a - oracle).abs() < 1e-12 && (b - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = FeatureMap(Tensor::zeros((1, 3, 2, 2), DType::F64, &Device::Cpu).unwrap());
        let t = Tensor::zeros(4, DType::F64, &Device::Cpu).unwrap();
        assert!(matches!(fuse_broadcast(&x, &t), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn masked_rows_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = FeatureMap(Tensor::from_vec(rand_vec(&mut rng, 3 * 2 * 2 * 2), (3, 2, 2, 2), &Device::Cpu).unwrap());
        let t = Tensor::from_vec(rand_vec(&mut rng, 6), (3, 2), &Device::Cpu).unwrap();
        let y = fuse_broadcast_masked(&x, &t, &[true, false, true]).unwrap();
        let full = fuse_broadcast(&x, &t).unwrap();
        for i in 0..3 {
            let want = if i == 1 { x.0.get(i).unwrap() } else { full.0.get(i).unwrap() };
            assert_eq!(bits(&y.0.get(i).unwrap()), bits(&want));
        }
    }

    #[test]
    fn token_insertion_at_index_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 8;
        let seq = TokenSequence::new(Tensor::from_vec(rand_vec(&mut rng, 197 * d), (197, d), &Device::Cpu).unwrap()).unwrap();
        let t = Tensor::from_vec(rand_vec(&mut rng, d), d, &Device::Cpu).unwrap();
        let out = fuse_token(&seq, &t).unwrap();
        assert_eq!(out.len(), 198);
        assert_eq!(bits(&out.tokens.narrow(1, 0, 1).unwrap()), bits(&seq.tokens.narrow(1, 0, 1).unwrap()));
        assert_eq!(bits(&out.tokens.narrow(1, 1, 1).unwrap()), bits(&t));
        assert_eq!(bits(&out.patches().unwrap()), bits(&seq.patches().unwrap()));
        assert!(matches!(fuse_token(&out, &t), Err(Error::DoubleFusion)));
        let bad = Tensor::zeros(d + 1, DType::F64, &Device::Cpu).unwrap();
        assert!(matches!(fuse_token(&seq, &bad), Err(Error::ShapeMismatch { .. })));
    }
}
