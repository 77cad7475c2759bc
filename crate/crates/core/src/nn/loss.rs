use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `||a - b||_1` and its subgradient with respect to `a` (`sign(0) = 0`).
pub fn l1_loss(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("vector of length {}", a.len()), b.len()));
    }
    let loss = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let grad = a.iter().zip(b).map(|(x, y)| sign(x - y)).collect();
    Ok((loss, grad))
}

/// Row-wise L1 distances between two batches.
pub fn l1_rows(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array1<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok((&a - &b).mapv(f64::abs).sum_axis(Axis(1)))
}

/// `scale * sign(a - b)` elementwise.
pub fn sign_diff(a: ArrayView2<f64>, b: ArrayView2<f64>, scale: f64) -> Array2<f64> {
    let mut out = Array2::zeros(a.raw_dim());
    Zip::from(&mut out)
        .and(&a)
        .and(&b)
        .for_each(|o, &x, &y| *o = scale * sign(x - y));
    out
}

/// Discriminator cross-entropy `-(1/B) sum [ln D(x) + ln(1 - D(x_hat))]`.
pub fn bce_terms(p_real: &[f64], p_fake: &[f64]) -> Result<f64> {
    discriminator_bce(p_real, p_fake).map(|(l, _, _)| l)
}

/// Discriminator loss with its gradients with respect to both probability vectors.
pub fn discriminator_bce(p_real: &[f64], p_fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if p_real.len() != p_fake.len() {
        return Err(Error::shape(format!("batch of {}", p_real.len()), p_fake.len()));
    }
    if p_real.is_empty() {
        return Err(Error::EmptyInput("empty discriminator batch".into()));
    }
    let b = p_real.len() as f64;
    let mut loss = 0.0;
    let mut g_real = Vec::with_capacity(p_real.len());
    let mut g_fake = Vec::with_capacity(p_fake.len());
    for (&pr, &pf) in p_real.iter().zip(p_fake) {
        let (pr, pf) = (clamp_prob(pr), clamp_prob(pf));
        loss -= pr.ln() + (1.0 - pf).ln();
        g_real.push(-1.0 / (b * pr));
        g_fake.push(1.0 / (b * (1.0 - pf)));
    }
    Ok((loss / b, g_real, g_fake))
}

/// Generator adversarial term `-(1/B) sum ln D(x_hat)` and its gradient.
pub fn generator_adversarial(p_fake: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p_fake.is_empty() {
        return Err(Error::EmptyInput("empty generator batch".into()));
    }
    let b = p_fake.len() as f64;
    let mut loss = 0.0;
    let grad = p_fake
        .iter()
        .map(|&p| {
            let p = clamp_prob(p);
            loss -= p.ln();
            -1.0 / (b * p)
        })
        .collect();
    Ok((loss / b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn l1_values() {
        assert_eq!(l1_loss(&[0.5, 0.25], &[0.5, 0.25]).unwrap().0, 0.0);
        let (loss, grad) = l1_loss(&[1.0, 2.0], &[0.0, 4.0]).unwrap();
        assert_eq!(loss, 3.0);
        assert_eq!(grad, vec![1.0, -1.0]);
        assert_eq!(l1_loss(&[1.0], &[1.0]).unwrap().1, vec![0.0]);
        assert!(l1_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bce_values() {
        assert!(bce_terms(&[1.0 - PROB_EPS], &[PROB_EPS]).unwrap() < 1e-6);
        assert!((bce_terms(&[0.5], &[0.5]).unwrap() - 2.0 * LN_2).abs() < 1e-12);
        assert!((generator_adversarial(&[0.5]).unwrap().0 - LN_2).abs() < 1e-12);
        // Clamping keeps the loss finite at the extremes.
        assert!(bce_terms(&[0.0], &[1.0]).unwrap().is_finite());
    }

    #[test]
    fn bce_is_batch_mean() {
        let a = bce_terms(&[0.9], &[0.3]).unwrap();
        let b = bce_terms(&[0.2], &[0.6]).unwrap();
        let both = bce_terms(&[0.9, 0.2], &[0.3, 0.6]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn bce_gradients_match_finite_differences() {
        let (pr, pf) = (vec![0.3, 0.8], vec![0.6, 0.1]);
        let (_, gr, gf) = discriminator_bce(&pr, &pf).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut up = pr.clone();
            let mut dn = pr.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (bce_terms(&up, &pf).unwrap() - bce_terms(&dn, &pf).unwrap()) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-6);
            let mut up = pf.clone();
            let mut dn = pf.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (bce_terms(&pr, &up).unwrap() - bce_terms(&pr, &dn).unwrap()) / (2.0 * h);
            assert!((fd - gf[i]).abs() < 1e-6);
        }
    }
}
