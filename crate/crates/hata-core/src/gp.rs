//! Gaussian-process regression over 2-D inputs with a Matérn kernel.
//!
//! Exact inference via Cholesky factorization. The kernel matrix gets an
//! escalating diagonal jitter when factorization stalls (duplicate inputs
//! with zero noise are legal); if the largest jitter still fails, inference
//! reports an explicit conditioning error rather than returning garbage.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("nu={given} is unsupported; closed forms are implemented for nu in {{0.5, 1.5, 2.5}}")]
    UnsupportedNu { given: f64 },
    #[error("kernel parameters must be positive and finite (sigma2={sigma2}, ell={ell})")]
    InvalidKernel { sigma2: f64, ell: f64 },
    #[error("noise variance must be nonnegative and finite, got {0}")]
    InvalidNoise(f64),
    #[error("observations must be finite")]
    NonFiniteObservation,
    #[error("posterior requires at least one observation")]
    NoObservations,
    #[error("kernel matrix is not positive definite even at maximum jitter")]
    IllConditioned,
}

/// Matérn smoothness values with closed-form kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaternNu {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn try_from_f64(nu: f64) -> Result<Self, GpError> {
        match nu {
            v if v == 0.5 => Ok(MaternNu::Half),
            v if v == 1.5 => Ok(MaternNu::ThreeHalves),
            v if v == 2.5 => Ok(MaternNu::FiveHalves),
            given => Err(GpError::UnsupportedNu { given }),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

/// Matérn covariance between two points at distance `r >= 0`.
pub fn matern(r: f64, sigma2: f64, ell: f64, nu: MaternNu) -> f64 {
    debug_assert!(r >= 0.0);
    let s = r / ell;
    match nu {
        MaternNu::Half => sigma2 * (-s).exp(),
        MaternNu::ThreeHalves => {
            let a = 3.0_f64.sqrt() * s;
            sigma2 * (1.0 + a) * (-a).exp()
        }
        MaternNu::FiveHalves => {
            let a = 5.0_f64.sqrt() * s;
            sigma2 * (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma2: f64,
    pub ell: f64,
    pub nu: MaternNu,
}

impl KernelParams {
    pub fn new(sigma2: f64, ell: f64, nu: MaternNu) -> Result<Self, GpError> {
        if !(sigma2.is_finite() && sigma2 > 0.0 && ell.is_finite() && ell > 0.0) {
            return Err(GpError::InvalidKernel { sigma2, ell });
        }
        Ok(KernelParams { sigma2, ell, nu })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// In-place Cholesky of a row-major symmetric matrix; lower triangle gets L.
/// Returns false when a pivot is non-positive (not positive definite).
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                if !(s.is_finite() && s > 0.0) {
                    return false;
                }
                a[i * n + i] = s.sqrt();
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    true
}

fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Relative jitter levels tried in order before giving up.
const JITTER_LEVELS: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4];

/// A GP with fixed hyperparameters accumulating observations.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    noise_var: f64,
    x: Vec<[f64; 2]>,
    y: Vec<f64>,
}

impl GpModel {
    pub fn new(kernel: KernelParams, noise_var: f64) -> Result<Self, GpError> {
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(GpError::InvalidNoise(noise_var));
        }
        Ok(GpModel {
            kernel,
            noise_var,
            x: Vec::new(),
            y: Vec::new(),
        })
    }

    pub fn observe(&mut self, x: [f64; 2], y: f64) -> Result<(), GpError> {
        if !(x[0].is_finite() && x[1].is_finite() && y.is_finite()) {
            return Err(GpError::NonFiniteObservation);
        }
        self.x.push(x);
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn inputs(&self) -> &[[f64; 2]] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    /// Replace the signal variance (used when it is re-estimated from the
    /// accumulated observations).
    pub fn set_sigma2(&mut self, sigma2: f64) -> Result<(), GpError> {
        self.kernel = KernelParams::new(sigma2, self.kernel.ell, self.kernel.nu)?;
        Ok(())
    }

    /// Posterior mean and variance at each query under a *zero* prior mean:
    /// `mu = k*ᵀ(K+σₙ²I)⁻¹y`, `var = k(x*,x*) − k*ᵀ(K+σₙ²I)⁻¹k*`, with the
    /// variance clamped to be nonnegative.
    pub fn posterior(&self, queries: &[[f64; 2]]) -> Result<Vec<(f64, f64)>, GpError> {
        self.posterior_about_mean(0.0, queries)
    }

    /// Posterior under a constant prior mean `m0`:
    /// `mu = m0 + k*ᵀ(K+σₙ²I)⁻¹(y − m0)`. Variances are unaffected by `m0`.
    pub fn posterior_about_mean(
        &self,
        m0: f64,
        queries: &[[f64; 2]],
    ) -> Result<Vec<(f64, f64)>, GpError> {
        let n = self.y.len();
        if n == 0 {
            return Err(GpError::NoObservations);
        }
        let k = self.kernel;
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = matern(dist(self.x[i], self.x[j]), k.sigma2, k.ell, k.nu);
                base[i * n + j] = v;
                base[j * n + i] = v;
            }
            base[i * n + i] += self.noise_var;
        }
        let mut l = Vec::new();
        let mut ok = false;
        for jit in JITTER_LEVELS {
            l = base.clone();
            let bump = jit * k.sigma2;
            for i in 0..n {
                l[i * n + i] += bump;
            }
            if cholesky(&mut l, n) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(GpError::IllConditioned);
        }

        let mut alpha: Vec<f64> = self.y.iter().map(|v| v - m0).collect();
        solve_lower(&l, n, &mut alpha);
        solve_lower_transpose(&l, n, &mut alpha);

        let mut out = Vec::with_capacity(queries.len());
        let mut kstar = vec![0.0; n];
        for &q in queries {
            for i in 0..n {
                kstar[i] = matern(dist(self.x[i], q), k.sigma2, k.ell, k.nu);
            }
            let mu = m0 + kstar.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
            let mut v = kstar.clone();
            solve_lower(&l, n, &mut v);
            let var = (k.sigma2 - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
            out.push((mu, var));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matern_closed_forms() {
        // At r=0 every form equals sigma2.
        for nu in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves] {
            assert_eq!(matern(0.0, 2.5, 0.3, nu), 2.5);
        }
        // nu=1/2 is the exponential kernel.
        let v = matern(0.6, 1.0, 0.3, MaternNu::Half);
        assert!((v - (-2.0_f64).exp()).abs() < 1e-15);
        // Kernels decay monotonically with distance.
        for nu in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves] {
            let mut prev = matern(0.0, 1.0, 0.5, nu);
            for k in 1..20 {
                let cur = matern(k as f64 * 0.1, 1.0, 0.5, nu);
                assert!(cur < prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn unsupported_nu_lists_options() {
        let err = MaternNu::try_from_f64(2.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.5") && msg.contains("1.5") && msg.contains("2.5"));
        assert_eq!(MaternNu::try_from_f64(2.5), Ok(MaternNu::FiveHalves));
        assert_eq!(MaternNu::try_from_f64(2.5).unwrap().as_f64(), 2.5);
    }

    #[test]
    fn parameter_validation() {
        assert!(KernelParams::new(0.0, 1.0, MaternNu::Half).is_err());
        assert!(KernelParams::new(1.0, -1.0, MaternNu::Half).is_err());
        let k = KernelParams::new(1.0, 1.0, MaternNu::Half).unwrap();
        assert!(GpModel::new(k, -0.5).is_err());
        let mut m = GpModel::new(k, 0.1).unwrap();
        assert!(m.observe([0.0, f64::NAN], 1.0).is_err());
        assert!(m.posterior(&[[0.0, 0.0]]) == Err(GpError::NoObservations));
    }

    /// Dense Gaussian-elimination solve of K a = y, used as an oracle.
    fn dense_solve(mut a: Vec<f64>, n: usize, mut b: Vec<f64>) -> Vec<f64> {
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
                .unwrap();
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row * n + col] / a[col * n + col];
                for j in col..n {
                    a[row * n + j] -= f * a[col * n + j];
                }
                b[row] -= f * b[col];
            }
        }
        for row in (0..n).rev() {
            let mut s = b[row];
            for j in row + 1..n {
                s -= a[row * n + j] * b[j];
            }
            b[row] = s / a[row * n + row];
        }
        b
    }

    #[test]
    fn posterior_matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for nu in [MaternNu::Half, MaternNu::ThreeHalves, MaternNu::FiveHalves] {
            let kp = KernelParams::new(1.7, 0.4, nu).unwrap();
            let noise = 1e-3;
            let mut model = GpModel::new(kp, noise).unwrap();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..9 {
                let x = [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0];
                let y = (x[0] - 0.7).powi(2) + (x[1] - 1.1).sin();
                model.observe(x, y).unwrap();
                xs.push(x);
                ys.push(y);
            }
            let n = xs.len();
            let mut kmat = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    kmat[i * n + j] = matern(dist(xs[i], xs[j]), kp.sigma2, kp.ell, nu);
                }
                kmat[i * n + i] += noise;
            }
            let alpha = dense_solve(kmat.clone(), n, ys.clone());
            let queries: Vec<[f64; 2]> = (0..15)
                .map(|_| [rng.random::<f64>() * 2.5 - 0.2, rng.random::<f64>() * 2.5 - 0.2])
                .collect();
            let post = model.posterior(&queries).unwrap();
            for (qi, &q) in queries.iter().enumerate() {
                let kstar: Vec<f64> = xs
                    .iter()
                    .map(|&x| matern(dist(x, q), kp.sigma2, kp.ell, nu))
                    .collect();
                let mu_o: f64 = kstar.iter().zip(&alpha).map(|(a, b)| a * b).sum();
                let w = dense_solve(kmat.clone(), n, kstar.clone());
                let var_o: f64 =
                    kp.sigma2 - kstar.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                let (mu, var) = post[qi];
                assert!(
                    (mu - mu_o).abs() <= 1e-8 * (1.0 + mu_o.abs()),
                    "mean mismatch: {mu} vs {mu_o}"
                );
                assert!(
                    (var - var_o.max(0.0)).abs() <= 1e-8 * (1.0 + var_o.abs()),
                    "var mismatch: {var} vs {var_o}"
                );
            }
        }
    }

    #[test]
    fn near_interpolation_and_prior_reversion() {
        let kp = KernelParams::new(2.0, 0.5, MaternNu::FiveHalves).unwrap();
        let mut model = GpModel::new(kp, 1e-12).unwrap();
        let pts = [[0.0, 0.0], [1.0, 0.5], [0.3, 0.9]];
        let ys = [1.0, -2.0, 0.5];
        for (x, y) in pts.iter().zip(ys) {
            model.observe(*x, y).unwrap();
        }
        let post = model.posterior(&pts).unwrap();
        for ((mu, var), y) in post.into_iter().zip(ys) {
            assert!((mu - y).abs() < 1e-5);
            assert!(var >= 0.0 && var < 1e-5);
        }
        // Far from all data the posterior reverts to the prior.
        let far = model.posterior(&[[500.0, 500.0]]).unwrap()[0];
        assert!(far.0.abs() < 1e-9);
        assert!((far.1 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_inputs_with_zero_noise_need_jitter() {
        let kp = KernelParams::new(1.0, 0.3, MaternNu::ThreeHalves).unwrap();
        let mut model = GpModel::new(kp, 0.0).unwrap();
        model.observe([0.5, 0.5], 1.0).unwrap();
        model.observe([0.5, 0.5], 1.0).unwrap();
        // Singular kernel matrix: jitter escalation must rescue this.
        let post = model.posterior(&[[0.5, 0.5], [0.6, 0.4]]).unwrap();
        assert!((post[0].0 - 1.0).abs() < 1e-3);
        assert!(post.iter().all(|(m, v)| m.is_finite() && v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn mean_shift_moves_posterior_mean_only() {
        let kp = KernelParams::new(1.0, 0.4, MaternNu::FiveHalves).unwrap();
        let mut model = GpModel::new(kp, 1e-6).unwrap();
        model.observe([0.2, 0.2], 0.7).unwrap();
        model.observe([0.8, 0.4], 1.3).unwrap();
        let q = [[0.5, 0.3], [2.0, 2.0]];
        let a = model.posterior_about_mean(0.0, &q).unwrap();
        let b = model.posterior_about_mean(1.0, &q).unwrap();
        for ((_, va), (_, vb)) in a.iter().zip(&b) {
            assert!((va - vb).abs() < 1e-14);
        }
        // Far from data (kernel tail ~7e-4), the mean reverts to m0 while
        // the observations sit 0.3 away from it.
        assert!((b[1].0 - 1.0).abs() < 1e-3);
        assert!((a[1].0 - 0.0).abs() < 1e-3);
    }

    proptest! {
        // Posterior variance is never negative and never exceeds the prior.
        #[test]
        fn variance_bounds(
            pts in proptest::collection::vec(((0.0_f64..3.0), (0.0_f64..3.0), (-2.0_f64..2.0)), 1..12),
            q0 in 0.0_f64..3.0,
            q1 in 0.0_f64..3.0,
            noise in 1e-8_f64..0.1,
        ) {
            let kp = KernelParams::new(1.3, 0.25, MaternNu::FiveHalves).unwrap();
            let mut model = GpModel::new(kp, noise).unwrap();
            for (x0, x1, y) in pts {
                model.observe([x0, x1], y).unwrap();
            }
            let (mu, var) = model.posterior(&[[q0, q1]]).unwrap()[0];
            prop_assert!(mu.is_finite());
            prop_assert!(var >= 0.0);
            prop_assert!(var <= 1.3 + 1e-9);
        }
    }
}
