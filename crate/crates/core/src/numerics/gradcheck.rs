use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{concat, NumericsError, Tape, Tensor, Var};

/// Worst-case disagreement between analytic and central-difference gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |numeric|)` over all input entries.
    pub max_error: f64,
    /// `(input index, flat entry index)` where `max_error` occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares tape gradients of a scalar function with central finite
/// differences of step `eps` on every entry of every input.
///
/// `f` must build its output only from the supplied input variables.
pub fn gradient_check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport, NumericsError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NumericsError>,
{
    let eval = |xs: &[Tensor]| -> Result<f64, NumericsError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = out.value().item();
        Ok(v)
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(&out)?;

    let mut max_error = 0.0f64;
    let mut worst = (0, 0);
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            if err > max_error {
                max_error = err;
                worst = (k, i);
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_error, worst, checked })
}

/// Every differentiable tape operation, in registration order.
pub const REGISTERED_OPS: [&str; 17] = [
    "matmul",
    "add",
    "add_bias",
    "mul",
    "scale",
    "sum",
    "relu",
    "leaky_relu",
    "sigmoid",
    "softmax",
    "reshape",
    "slice_rows",
    "select_rows",
    "conv2d",
    "mse_loss",
    "graph_attention",
    "concat",
];

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// Reduces a tensor output to a scalar with fixed random weights so that
/// every output entry contributes a distinct gradient.
fn project<'t>(tape: &'t Tape, out: Var<'t>, seed: u64) -> Result<Var<'t>, NumericsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.leaf(random(&mut rng, &out.shape()));
    Ok(out.mul(&w)?.sum())
}

/// Gradient-checks every entry of [`REGISTERED_OPS`] on random inputs drawn
/// from `seed`. Returns one report per op, in the same order.
pub fn check_registered_ops(seed: u64, eps: f64) -> Result<Vec<(&'static str, GradCheckReport)>, NumericsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let ps = seed ^ 0x9e37_79b9;
    let mut out = Vec::with_capacity(REGISTERED_OPS.len());
    for &op in &REGISTERED_OPS {
        let report = match op {
            "matmul" => gradient_check(&[random(&mut rng, &[m, k]), random(&mut rng, &[k, n])], eps, |t, v| {
                project(t, v[0].matmul(&v[1])?, ps)
            })?,
            "add" => gradient_check(&[random(&mut rng, &[m, n]), random(&mut rng, &[m, n])], eps, |t, v| {
                project(t, v[0].add(&v[1])?, ps)
            })?,
            "add_bias" => gradient_check(&[random(&mut rng, &[m, n]), random(&mut rng, &[n])], eps, |t, v| {
                project(t, v[0].add_bias(&v[1])?, ps)
            })?,
            "mul" => gradient_check(&[random(&mut rng, &[m, n]), random(&mut rng, &[m, n])], eps, |t, v| {
                project(t, v[0].mul(&v[1])?, ps)
            })?,
            "scale" => gradient_check(&[random(&mut rng, &[m, n])], eps, |t, v| project(t, v[0].scale(-1.7), ps))?,
            "sum" => gradient_check(&[random(&mut rng, &[m, n])], eps, |_, v| Ok(v[0].sum()))?,
            "relu" => gradient_check(&[random(&mut rng, &[m, n])], eps, |t, v| project(t, v[0].relu(), ps))?,
            "leaky_relu" => {
                gradient_check(&[random(&mut rng, &[m, n])], eps, |t, v| project(t, v[0].leaky_relu(0.2), ps))?
            }
            "sigmoid" => gradient_check(&[random(&mut rng, &[m, n])], eps, |t, v| project(t, v[0].sigmoid(), ps))?,
            "softmax" => {
                let axis = rng.random_range(0..2);
                gradient_check(&[random(&mut rng, &[m, n])], eps, move |t, v| project(t, v[0].softmax(axis)?, ps))?
            }
            "reshape" => {
                gradient_check(&[random(&mut rng, &[m, n])], eps, |t, v| project(t, v[0].reshape([n * m])?, ps))?
            }
            "slice_rows" => {
                let start = rng.random_range(0..m);
                let end = rng.random_range(start..=m);
                gradient_check(&[random(&mut rng, &[m, n])], eps, move |t, v| {
                    project(t, v[0].slice_rows(start, end)?, ps)
                })?
            }
            "select_rows" => {
                let rows: Vec<usize> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..m)).collect();
                gradient_check(&[random(&mut rng, &[m, n])], eps, move |t, v| {
                    project(t, v[0].select_rows(&rows)?, ps)
                })?
            }
            "conv2d" => {
                let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..3));
                let (stride, pad) = (rng.random_range(1..3), rng.random_range(0..2));
                let inputs = [random(&mut rng, &[2, cin, 5, 4]), random(&mut rng, &[cout, cin, 3, 3]), random(&mut rng, &[cout])];
                gradient_check(&inputs, eps, move |t, v| project(t, v[0].conv2d(&v[1], &v[2], stride, pad)?, ps))?
            }
            "mse_loss" => gradient_check(&[random(&mut rng, &[m, n]), random(&mut rng, &[m, n])], eps, |_, v| {
                v[0].mse_loss(&v[1])
            })?,
            "graph_attention" => {
                let nodes = rng.random_range(1..6);
                let neighbors: Vec<Vec<usize>> = (0..nodes)
                    .map(|i| (0..nodes).filter(|&j| j != i && rng.random_bool(0.6)).collect())
                    .collect();
                let neighbors = Rc::new(neighbors);
                let inputs = [random(&mut rng, &[nodes, n]), random(&mut rng, &[nodes, 1]), random(&mut rng, &[nodes, 1])];
                gradient_check(&inputs, eps, move |t, v| {
                    project(t, v[0].graph_attention(&v[1], &v[2], neighbors.clone(), 0.2)?, ps)
                })?
            }
            "concat" => {
                let axis = rng.random_range(0..2);
                let other = if axis == 0 { [k, n] } else { [m, k] };
                gradient_check(&[random(&mut rng, &[m, n]), random(&mut rng, &other)], eps, move |t, v| {
                    project(t, concat(&[v[0].clone(), v[1].clone()], axis)?, ps)
                })?
            }
            _ => unreachable!("every registered op has a check"),
        };
        out.push((op, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_op_passes_on_twenty_seeds() {
        for seed in 0..20 {
            for (op, r) in check_registered_ops(seed, 1e-6).unwrap() {
                assert!(r.max_error < 1e-4, "seed {seed} {op}: {r:?}");
                assert!(r.checked > 0);
            }
        }
    }

    #[test]
    fn reports_disagreement_at_a_kink() {
        // Central differences straddle relu's kink and see slope 1/2.
        let r = gradient_check(&[Tensor::vector(vec![0.0, 0.3])], 1e-6, |_, v| Ok(v[0].relu().sum())).unwrap();
        assert!((r.max_error - 0.5).abs() < 1e-9, "{r:?}");
        assert_eq!((r.worst, r.checked), ((0, 0), 2));
    }
}
