//! Central finite-difference gradient checking.

use super::{Loss, Network, Scalar, Tensor};
use crate::error::Result;

/// Outcome of comparing analytic and numeric gradients parameter by parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Magnitudes below this are treated as this value when forming the
/// relative error, so two near-zero gradients do not blow it up.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `(L(p + eps) - L(p - eps)) / 2 eps` for every parameter.
pub fn numeric_gradient(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    targets: &Tensor<f64>,
    loss: Loss,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.param_count());
    for i in 0..net.param_count() {
        let orig = net.params().values()[i];
        probe.params_mut().values_mut()[i] = orig + eps;
        let up = probe.loss(batch, targets, loss)?;
        probe.params_mut().values_mut()[i] = orig - eps;
        let down = probe.loss(batch, targets, loss)?;
        probe.params_mut().values_mut()[i] = orig;
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: analytic.len(),
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a, n);
        if e > report.max_rel_error || i == 0 {
            report.max_rel_error = e;
            report.worst_param = i;
            report.analytic = a;
            report.numeric = n;
        }
    }
    report
}

/// Checks an `f64` network's backward pass against central differences.
pub fn check(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    targets: &Tensor<f64>,
    loss: Loss,
    eps: f64,
) -> Result<GradCheck> {
    let (_, grads) = net.backward(batch, targets, loss)?;
    let numeric = numeric_gradient(net, batch, targets, loss, eps)?;
    Ok(compare(grads.values(), &numeric))
}

/// Checks the production `f32` backward pass. The numeric side is computed on
/// an `f64` copy of the same network, since `f32` differences at small `eps`
/// are dominated by rounding.
pub fn check_f32(
    net: &Network<f32>,
    batch: &Tensor<f32>,
    targets: &Tensor<f32>,
    loss: Loss,
    eps: f64,
) -> Result<GradCheck> {
    let (_, grads) = net.backward(batch, targets, loss)?;
    let wide = net.cast::<f64>();
    let numeric = numeric_gradient(&wide, &widen(batch)?, &widen(targets)?, loss, eps)?;
    let analytic: Vec<f64> = grads.values().iter().map(|v| v.as_f64()).collect();
    Ok(compare(&analytic, &numeric))
}

fn widen<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<f64>> {
    Tensor::from_vec(
        t.shape().to_vec(),
        t.data().iter().map(|v| v.as_f64()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use crate::rng::Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.unit() * 2.0 - 1.0).collect()).unwrap()
    }

    fn one_hot(batch: usize, k: usize, rng: &mut Rng) -> Tensor<f64> {
        let mut v = vec![0.0; batch * k];
        for b in 0..batch {
            v[b * k + rng.below_usize(k)] = 1.0;
        }
        Tensor::from_vec(vec![batch, k], v).unwrap()
    }

    #[test]
    fn two_layer_dense_net() {
        for seed in 0..3 {
            let layers = vec![
                LayerSpec::dense(5, 4),
                LayerSpec::Relu,
                LayerSpec::dense(4, 3),
            ];
            let net = Network::<f64>::new(&[5], layers, seed).unwrap();
            let mut rng = Rng::new(100 + seed);
            let x = random_tensor(vec![4, 5], &mut rng);
            let t = one_hot(4, 3, &mut rng);
            let r = check(&net, &x, &t, Loss::SoftmaxCe, 1e-4).unwrap();
            assert!(r.max_rel_error <= 1e-3, "{r:?}");
            let y = random_tensor(vec![4, 3], &mut rng);
            let r = check(&net, &x, &y, Loss::Mse, 1e-4).unwrap();
            assert!(r.max_rel_error <= 1e-3, "{r:?}");
        }
    }

    #[test]
    fn relative_error_handles_zeros() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(relative_error(1e-9, 0.0) < 1e-2);
    }
}
