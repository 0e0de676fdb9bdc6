use crate::data::{NutritionPrediction, NutritionVector};
use crate::error::{Error, Result};

/// Mean absolute error per field, in [`crate::Field::ALL`] order.
pub fn mae_per_field(preds: &[NutritionPrediction], targets: &[NutritionVector]) -> Result<[f64; 4]> {
    if preds.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = [0.0; 4];
    for (p, t) in preds.iter().zip(targets) {
        let (p, t) = (p.to_array(), t.to_array());
        for i in 0..4 {
            sum[i] += (p[i] - t[i]).abs();
        }
    }
    Ok(sum.map(|s| s / preds.len() as f64))
}

/// `100 * mae / field_mean`.
pub fn relative_percent(mae: f64, field_mean: f64) -> Result<f64> {
    if !(field_mean > 0.0) {
        return Err(Error::ZeroMean("field_mean"));
    }
    Ok(100.0 * mae / field_mean)
}

/// Mean over the four fields of `|error| / field_mean`.
pub(crate) fn relative_error(pred: &NutritionPrediction, target: &NutritionVector, means: &NutritionVector) -> f64 {
    let (p, t, m) = (pred.to_array(), target.to_array(), means.to_array());
    (0..4).map(|i| (p[i] - t[i]).abs() / m[i]).sum::<f64>() / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: f64) -> NutritionPrediction {
        NutritionPrediction::from_array([c, 1.0, 2.0, 3.0])
    }
    fn t(c: f64) -> NutritionVector {
        NutritionVector::new(c, 1.0, 2.0, 3.0)
    }

    #[test]
    fn exact_is_zero() {
        assert_eq!(mae_per_field(&[p(5.0), p(7.0)], &[t(5.0), t(7.0)]).unwrap(), [0.0; 4]);
    }

    #[test]
    fn caloric_errors_ten_and_twenty() {
        let m = mae_per_field(&[p(110.0), p(80.0)], &[t(100.0), t(100.0)]).unwrap();
        assert_eq!(m[0], 15.0);
    }

    #[test]
    fn length_and_empty_errors() {
        assert!(matches!(mae_per_field(&[p(1.0)], &[]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(mae_per_field(&[], &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn relative_percent_cases() {
        assert_eq!(relative_percent(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(relative_percent(7.5, 7.5).unwrap(), 100.0);
        assert!(matches!(relative_percent(1.0, 0.0), Err(Error::ZeroMean(_))));
        assert!(matches!(relative_percent(1.0, f64::NAN), Err(Error::ZeroMean(_))));
    }

    #[test]
    fn random_batches_match_summation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(1..30);
            let ps: Vec<[f64; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..900.0))).collect();
            let ts: Vec<[f64; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..900.0))).collect();
            let got = mae_per_field(
                &ps.iter().map(|&a| NutritionPrediction::from_array(a)).collect::<Vec<_>>(),
                &ts.iter().map(|&a| NutritionVector::from_array(a)).collect::<Vec<_>>(),
            )
            .unwrap();
            for f in 0..4 {
                let mut s = 0.0;
                let mut j = 0;
                while j < n {
                    s += if ps[j][f] > ts[j][f] { ps[j][f] - ts[j][f] } else { ts[j][f] - ps[j][f] };
                    j += 1;
                }
                assert!((got[f] - s / n as f64).abs() <= 1e-9 * (s / n as f64).max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn scale_consistent_and_permutation_invariant(
            rows in proptest::collection::vec((proptest::array::uniform4(0.0f64..500.0), proptest::array::uniform4(1.0f64..500.0)), 1..15),
            k in 0.01f64..100.0,
        ) {
            let ps: Vec<_> = rows.iter().map(|r| NutritionPrediction::from_array(r.0)).collect();
            let ts: Vec<_> = rows.iter().map(|r| NutritionVector::from_array(r.1)).collect();
            let mean = NutritionVector::mean(&ts).unwrap();
            let mae = mae_per_field(&ps, &ts).unwrap();

            let ps_k: Vec<_> = rows.iter().map(|r| NutritionPrediction::from_array(r.0.map(|x| x * k))).collect();
            let ts_k: Vec<_> = rows.iter().map(|r| NutritionVector::from_array(r.1.map(|x| x * k))).collect();
            let mean_k = NutritionVector::mean(&ts_k).unwrap();
            let mae_k = mae_per_field(&ps_k, &ts_k).unwrap();
            for f in 0..4 {
                let a = relative_percent(mae[f], mean.to_array()[f]).unwrap();
                let b = relative_percent(mae_k[f], mean_k.to_array()[f]).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }

            let mut rev_p = ps.clone();
            let mut rev_t = ts.clone();
            rev_p.reverse();
            rev_t.reverse();
            let r = mae_per_field(&rev_p, &rev_t).unwrap();
            for f in 0..4 {
                prop_assert!((r[f] - mae[f]).abs() <= 1e-9 * mae[f].max(1.0));
            }
        }
    }
}
