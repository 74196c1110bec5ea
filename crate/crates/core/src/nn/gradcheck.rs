//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::mse_loss;
use super::network::Network;
use super::tensor::{Scalar, Tensor};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many entries per parameter group (all when `None`).
    pub max_per_group: Option<usize>,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            max_per_group: None,
            check_input: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(group, index)` of the worst entry; group `usize::MAX` is the input.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries whose perturbation crossed a PReLU or pooling kink.
    pub skipped: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every parameter gradient (and the input gradient) of the MSE
/// loss against central differences on an `f64` copy of `net`.
pub fn gradient_check<T: Scalar>(
    net: &Network<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    gradient_check_with(net, input, target, opts, |_| {})
}

/// Like [`gradient_check`], but `tamper` may rewrite the analytic gradients
/// after the backward pass. Used to confirm the checker catches bad kernels.
pub fn gradient_check_with<T: Scalar, F: FnMut(&mut Network<f64>)>(
    net: &Network<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    opts: &GradCheckOptions,
    mut tamper: F,
) -> Result<GradCheckReport> {
    let mut shadow: Network<f64> = net.cast();
    let x: Tensor<f64> = input.cast();
    let y: Tensor<f64> = target.cast();

    shadow.zero_grad();
    let pred = shadow.forward(&x)?;
    let (_, dloss) = mse_loss(&pred, &y)?;
    let dx = shadow.backward(&dloss)?;
    tamper(&mut shadow);
    let analytic: Vec<Vec<f64>> = shadow.params().iter().map(|p| p.grad.clone()).collect();
    let base_pattern = shadow.activation_pattern(&x)?;

    let loss_at = |n: &Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        Ok(mse_loss(&n.infer(x)?, &y)?.0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pick = |len: usize| -> Vec<usize> {
        match opts.max_per_group {
            Some(m) if m < len => {
                let mut v = sample(&mut rng, len, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        tolerance: opts.tolerance,
        passed: true,
    };
    let record = |report: &mut GradCheckReport, group, idx, a: f64, n: f64| {
        let e = relative_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error || !e.is_finite() {
            report.max_rel_error = e;
            report.worst = Some((group, idx));
        }
    };

    let h = opts.step;
    for g in 0..analytic.len() {
        for i in pick(analytic[g].len()) {
            let orig = shadow.params()[g].value[i];
            shadow.params_mut()[g].value[i] = orig + h;
            let plus_pattern = shadow.activation_pattern(&x)?;
            let lp = loss_at(&shadow, &x)?;
            shadow.params_mut()[g].value[i] = orig - h;
            let minus_pattern = shadow.activation_pattern(&x)?;
            let lm = loss_at(&shadow, &x)?;
            shadow.params_mut()[g].value[i] = orig;
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                report.skipped += 1;
                continue;
            }
            record(&mut report, g, i, analytic[g][i], (lp - lm) / (2.0 * h));
        }
    }

    if opts.check_input {
        let mut xp = x.clone();
        for i in pick(x.len()) {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + h;
            let plus_pattern = shadow.activation_pattern(&xp)?;
            let lp = loss_at(&shadow, &xp)?;
            xp.data_mut()[i] = orig - h;
            let minus_pattern = shadow.activation_pattern(&xp)?;
            let lm = loss_at(&shadow, &xp)?;
            xp.data_mut()[i] = orig;
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                report.skipped += 1;
                continue;
            }
            record(&mut report, usize::MAX, i, dx.data()[i], (lp - lm) / (2.0 * h));
        }
    }

    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < opts.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkBuilder;

    #[test]
    fn zero_parameter_network_passes() {
        let net: Network<f32> = NetworkBuilder::new(vec![2, 2, 2], 0)
            .flatten()
            .unwrap()
            .build();
        let x = Tensor::from_f64(vec![2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let t = Tensor::zeros(vec![8]);
        let opts = GradCheckOptions {
            check_input: false,
            ..Default::default()
        };
        let r = gradient_check(&net, &x, &t, &opts).unwrap();
        assert!(r.passed);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn relative_error_is_symmetric() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }
}
