//! Small dense linear-algebra helpers shared by the mixture and evidence code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter levels tried, in order, when a factorization fails.
pub const JITTER_LEVELS: [f64; 2] = [1e-10, 1e-8];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky factorization with the jitter retry policy.
///
/// The matrix is factorized as given first. On failure `eps * mean(diag)` is
/// added to the diagonal for each `eps` in [`JITTER_LEVELS`].
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "{context}: matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular(format!("{context}: non-finite entries")));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1) as f64;
    let scale = m.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n;
    for eps in JITTER_LEVELS {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += eps * scale;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    let pivot = first_failing_pivot(m);
    Err(Error::singular(match pivot {
        Some(p) => format!("{context} (pivot {p})"),
        None => context.to_string(),
    }))
}

/// Cholesky factorization without jitter retries.
pub fn cholesky_strict(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::singular(format!("{context}: non-finite entries")));
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    match Cholesky::new(m.clone()) {
        // Reject pivots at rounding level relative to the largest diagonal entry.
        Some(c) if (0..n).all(|i| c.l_dirty()[(i, i)].powi(2) > 1e-14 * scale) => Ok(c),
        _ => Err(Error::singular(match first_failing_pivot(m) {
            Some(p) => format!("{context} (pivot {p})"),
            None => context.to_string(),
        })),
    }
}

/// Index of the first non-positive pivot of an unpivoted Cholesky sweep.
pub fn first_failing_pivot(m: &DMatrix<f64>) -> Option<usize> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        let scale = m[(j, j)].abs().max(f64::MIN_POSITIVE);
        if !(d > 1e-14 * scale) {
            return Some(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    None
}

/// `log |M|` from a Cholesky factor of `M`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `log N(r | 0, M)` for a residual `r` and Cholesky factor of `M`.
pub fn log_gaussian_residual(residual: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = residual.len() as f64;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(residual)
        .expect("cholesky factor has a positive diagonal");
    -0.5 * (n * LN_2PI + log_det(chol) + z.norm_squared())
}

/// Log density of a multivariate Gaussian, evaluated through a triangular
/// factorization of the covariance.
pub fn log_gaussian_density(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(Error::invalid(format!(
            "log_gaussian_density: x has {} entries, mean {}, cov {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cholesky(cov, "gaussian covariance")?;
    let r = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
    Ok(log_gaussian_residual(&r, &chol))
}

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, context)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_at_mean_with_identity() {
        for d in 1..6 {
            let x = vec![0.3; d];
            let got = log_gaussian_density(&x, &x, &DMatrix::identity(d, d)).unwrap();
            assert_relative_eq!(got, -(d as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln());
        }
    }

    #[test]
    fn standard_normal_at_one() {
        let got = log_gaussian_density(&[1.0], &[0.0], &DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(got, -0.5 - 0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn matches_naive_formula_in_5d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: DMatrix<f64> = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose() + DMatrix::identity(5, 5) * 0.5;
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mu: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = DVector::from_iterator(5, x.iter().zip(&mu).map(|(a, b)| a - b));
            let inv = cov.clone().try_inverse().unwrap();
            let naive = -0.5
                * (5.0 * (2.0 * std::f64::consts::PI).ln()
                    + cov.determinant().ln()
                    + (r.transpose() * inv * &r)[(0, 0)]);
            let got = log_gaussian_density(&x, &mu, &cov).unwrap();
            assert_relative_eq!(got, naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn ill_conditioned_covariance_stays_finite() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1e6, 1e-6]));
        let got = log_gaussian_density(&[1e3, 1e-3], &[0.0, 0.0], &cov).unwrap();
        assert!(got.is_finite());
    }

    #[test]
    fn non_spd_is_singular() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = log_gaussian_density(&[0.0, 0.0], &[0.0, 0.0], &cov).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
