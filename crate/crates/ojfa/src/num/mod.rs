//! Deterministic dense linear algebra, reductions, and random generation.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::Rng;

use crate::error::Error;
use crate::Result;

/// Overflow-safe softmax at a given temperature: logits are divided by
/// `temperature`, the maximum is subtracted, and the exponentials are
/// normalized to sum to one.
pub fn softmax(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::InvalidArgument {
            name: "temperature",
            message: format!("must be positive, got {temperature}"),
        });
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Cosine similarity `dot(u,v) / (|u||v|)`, in `[-1, 1]`.
///
/// Zero-norm inputs are an error here; callers that want the
/// orthogonal-equivalent convention (treat the similarity as zero) handle
/// that themselves.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            op: "cosine",
            left: format!("length {}", u.len()),
            right: format!("length {}", v.len()),
        });
    }
    if u.is_empty() {
        return Err(Error::Empty("cosine"));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm("cosine"));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Index of the largest value; ties break toward the smallest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let p = softmax(&[0.7, 0.7, 0.7], 1.0).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_sharp_at_low_temperature() {
        // exp((0.5 - 0.6) / 5e-4) = exp(-200): off-max mass is negligible.
        let p = softmax(&[0.5, 0.6], 5e-4).unwrap();
        assert!(p[0] < 1e-12, "off-max mass {}", p[0]);
        assert!((p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_single_element() {
        assert_eq!(softmax(&[3.2], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn softmax_rejects_empty_and_bad_temperature() {
        assert!(softmax(&[], 1.0).is_err());
        assert!(softmax(&[1.0], 0.0).is_err());
        assert!(softmax(&[1.0], -1.0).is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let v: Vec<f64> = (0..9).map(|_| rng.normal() * 3.0).collect();
            let p = softmax(&v, 1.0).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + 5.0).collect();
            let q = softmax(&shifted, 1.0).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_is_permutation_equivariant() {
        let v = [0.3, -1.2, 2.0, 0.9];
        let p = softmax(&v, 1.0).unwrap();
        let perm = [2usize, 0, 3, 1];
        let vp: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        let pp = softmax(&vp, 1.0).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            assert!((pp[slot] - p[src]).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_orthogonal_parallel_antiparallel() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() <= 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_scale_invariant_and_symmetric() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let u: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let s = rng.next_f64() * 10.0 + 0.1;
            let su: Vec<f64> = u.iter().map(|x| x * s).collect();
            assert!((cosine(&u, &su).unwrap() - 1.0).abs() <= 1e-12);
            let ab = cosine(&u, &v).unwrap();
            let ba = cosine(&v, &u).unwrap();
            assert!((ab - ba).abs() <= 1e-12);
        }
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
