//! Central finite-difference checks of every layer's and loss's analytic
//! gradients on small random shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mse_loss, softmax_cross_entropy, Activation, BatchNorm1d, Dense, Init, Layer, Matrix, Mode, Sequential};
use crate::Result;

/// Step `h` of the central difference `(f(x+h) - f(x-h)) / 2h`.
pub const STEP: f64 = 1e-6;

/// Largest relative error seen for one gradient of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-5)`. The floor keeps gradients that are zero
/// up to rounding from producing huge ratios.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape matches data")
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` with central differences of `f` over each entry of
/// the parameter vector that `get` exposes on a fresh copy of `base`.
fn compare<T: Clone>(
    name: &str,
    base: &T,
    analytic: &[f64],
    get: impl Fn(&mut T) -> &mut [f64],
    f: impl Fn(&T) -> f64,
) -> GradCheck {
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        get(&mut plus)[i] += STEP;
        let mut minus = base.clone();
        get(&mut minus)[i] -= STEP;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * STEP);
        worst = worst.max(rel_err(a, numeric));
    }
    GradCheck {
        name: name.to_string(),
        entries: analytic.len(),
        max_rel_err: worst,
    }
}

fn shape(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (
        rng.random_range(2..=8),
        rng.random_range(1..=8),
        rng.random_range(1..=8),
    )
}

fn check_dense(rng: &mut ChaCha8Rng) -> Result<Vec<GradCheck>> {
    let (batch, input, output) = shape(rng);
    let mut layer = Dense::new(input, output, Init::XavierUniform, rng);
    layer
        .bias_mut()
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-0.5..0.5));
    let x = random(batch, input, rng);
    let r = random(batch, output, rng);
    let reference = layer.clone();
    layer.forward(&x)?;
    let grad_in = layer.backward(&r)?;
    let loss = |l: &Dense, x: &Matrix| dot(&l.infer(x).expect("shapes checked"), &r);
    Ok(vec![
        compare(
            "dense input",
            &x,
            grad_in.data(),
            |m| m.data_mut(),
            |m| loss(&reference, m),
        ),
        compare(
            "dense weights",
            &reference,
            layer.grad_weights().data(),
            |l| l.weights_mut().data_mut(),
            |l| loss(l, &x),
        ),
        compare(
            "dense bias",
            &reference,
            layer.grad_bias(),
            |l| l.bias_mut(),
            |l| loss(l, &x),
        ),
    ])
}

fn check_batchnorm(rng: &mut ChaCha8Rng, mode: Mode) -> Result<Vec<GradCheck>> {
    let (batch, features, _) = shape(rng);
    let mut layer = BatchNorm1d::new(features);
    for v in layer.gamma_mut() {
        *v = rng.random_range(0.5..1.5);
    }
    for v in layer.beta_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in layer.running_mean_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in layer.running_var_mut() {
        *v = rng.random_range(0.5..2.0);
    }
    layer.set_mode(mode);
    let x = random(batch, features, rng);
    let r = random(batch, features, rng);
    let reference = layer.clone();
    layer.forward(&x)?;
    let grad_in = layer.backward(&r)?;
    let loss = |l: &BatchNorm1d, x: &Matrix| dot(&l.clone().forward(x).expect("shapes checked"), &r);
    let tag = match mode {
        Mode::Train => "train",
        Mode::Eval => "eval",
    };
    Ok(vec![
        compare(
            &format!("batch norm ({tag}) input"),
            &x,
            grad_in.data(),
            |m| m.data_mut(),
            |m| loss(&reference, m),
        ),
        compare(
            &format!("batch norm ({tag}) gamma"),
            &reference,
            layer.grad_gamma(),
            |l| l.gamma_mut(),
            |l| loss(l, &x),
        ),
        compare(
            &format!("batch norm ({tag}) beta"),
            &reference,
            layer.grad_beta(),
            |l| l.beta_mut(),
            |l| loss(l, &x),
        ),
    ])
}

fn check_activation(rng: &mut ChaCha8Rng, kind: Activation) -> Result<GradCheck> {
    let (batch, width, _) = shape(rng);
    // keep ReLU inputs away from the kink
    let mut x = random(batch, width, rng);
    for v in x.data_mut() {
        if v.abs() < 1e-3 {
            *v = 0.5;
        }
    }
    let r = random(batch, width, rng);
    let y = kind.forward(&x);
    let grad_in = kind.backward(&x, &y, &r);
    Ok(compare(
        &format!("{kind:?} input").to_lowercase(),
        &x,
        grad_in.data(),
        |m| m.data_mut(),
        |m| dot(&kind.forward(m), &r),
    ))
}

fn check_losses(rng: &mut ChaCha8Rng) -> Result<Vec<GradCheck>> {
    let (batch, width, classes) = shape(rng);
    let pred = random(batch, width, rng);
    let target = random(batch, width, rng);
    let (_, g) = mse_loss(&pred, &target)?;
    let mse = compare(
        "mse prediction",
        &pred,
        g.data(),
        |m| m.data_mut(),
        |m| mse_loss(m, &target).expect("shapes match").0,
    );

    let classes = classes.max(2);
    let logits = random(batch, classes, rng).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &labels)?;
    let ce = compare(
        "softmax cross-entropy logits",
        &logits,
        g.data(),
        |m| m.data_mut(),
        |m| softmax_cross_entropy(m, &labels).expect("labels in range").0,
    );
    Ok(vec![mse, ce])
}

/// Dense → batch norm → ReLU → dense → sigmoid under MSE, in train mode:
/// the input gradient and every parameter gradient.
fn check_network(rng: &mut ChaCha8Rng) -> Result<Vec<GradCheck>> {
    let (batch, input, hidden) = shape(rng);
    let output = rng.random_range(1..=8);
    let mut net = Sequential::new(vec![
        Layer::from(Dense::new(input, hidden, Init::HeUniform, rng)),
        Layer::from(BatchNorm1d::new(hidden)),
        Layer::from(Activation::Relu),
        Layer::from(Dense::new(hidden, output, Init::XavierUniform, rng)),
        Layer::from(Activation::Sigmoid),
    ]);
    net.set_mode(Mode::Train);
    let x = random(batch, input, rng);
    let target = random(batch, output, rng).map(|v| 0.5 + 0.5 * v);
    let reference = net.clone();
    let out = net.forward(&x)?;
    let (_, g) = mse_loss(&out, &target)?;
    let grad_in = net.backward(&g)?;
    let loss = |n: &Sequential, x: &Matrix| {
        mse_loss(&n.clone().forward(x).expect("shapes"), &target)
            .expect("shapes")
            .0
    };
    let mut checks = vec![compare(
        "network input",
        &x,
        grad_in.data(),
        |m| m.data_mut(),
        |m| loss(&reference, m),
    )];
    let analytic: Vec<Vec<f64>> = net.params_and_grads().into_iter().map(|(_, g)| g.to_vec()).collect();
    for (p, grads) in analytic.iter().enumerate() {
        checks.push(compare(
            &format!("network parameter block {p}"),
            &reference,
            grads,
            |n| n.params_and_grads().into_iter().nth(p).expect("same structure").0,
            |n| loss(n, &x),
        ));
    }
    Ok(checks)
}

/// Every check for one seed: dense, batch norm in both modes, the three
/// activations, both losses, and a small composed network.
pub fn check_all(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = check_dense(&mut rng)?;
    out.extend(check_batchnorm(&mut rng, Mode::Train)?);
    out.extend(check_batchnorm(&mut rng, Mode::Eval)?);
    for kind in [Activation::Relu, Activation::Sigmoid, Activation::Identity] {
        out.push(check_activation(&mut rng, kind)?);
    }
    out.extend(check_losses(&mut rng)?);
    out.extend(check_network(&mut rng)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(rel_err(1e-12, 0.0) < 1e-6);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let x = Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap();
        let check = compare(
            "square",
            &x,
            &[0.6, 1.4],
            |m| m.data_mut(),
            |m| m.data().iter().map(|v| v * v).sum(),
        );
        assert!(check.max_rel_err > 1.0);
    }

    #[test]
    fn all_checks_pass_for_a_few_seeds() {
        for seed in 0..5 {
            for c in check_all(seed).unwrap() {
                assert!(c.max_rel_err < 1e-4, "seed {seed}: {c:?}");
            }
        }
    }
}
