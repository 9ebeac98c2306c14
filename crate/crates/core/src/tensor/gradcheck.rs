//! Central-difference verification of reverse-mode gradients (64-bit).

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Denominator floor of the relative error, per unit of `max(1, |f|)`.
///
/// At `h = 1e-5` a central difference in 64-bit carries absolute rounding
/// noise of several ulps of `f` over `2h`, up to about `1e-10` for
/// `|f| ≈ 1` through a deep graph.
/// Components smaller than the floor are compared at the floor's scale so
/// that noise does not register as relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, REL_ERROR_FLOOR · max(1, |f|))`.
pub fn relative_error(analytic: f64, numeric: f64, f_scale: f64) -> f64 {
    let floor = REL_ERROR_FLOOR * f_scale.abs().max(1.0);
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Which coordinates of each input to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// Up to `per_tensor` distinct coordinates per input, drawn from `seed`.
    Sampled { per_tensor: usize, seed: u64 },
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinates checked one at a time.
    pub coords_checked: usize,
    /// Relative error of one random directional derivative over all inputs.
    pub directional_rel_error: f64,
    /// Largest per-coordinate error for each input.
    pub per_input: Vec<f64>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.max(self.directional_rel_error)
    }
}

/// A scalar function of graph leaves.
pub trait ScalarFn: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>> ScalarFn for F {}

fn evaluate<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>], fault: bool) -> Result<f64> {
    let mut g = Graph::new();
    if fault {
        g.inject_gelu_backward_fault();
    }
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let out = f(&mut g, &vars)?;
    g.value(out).item()
}

fn analytic<F: ScalarFn>(f: &F, inputs: &[Tensor<f64>], fault: bool) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    if fault {
        g.inject_gelu_backward_fault();
    }
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    vars.iter()
        .map(|&v| {
            g.grad(v)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::Contract("gradient missing after backward".into()))
        })
        .collect()
}

/// Compare autodiff gradients of `f` against central differences
/// `(f(x+h·e) − f(x−h·e)) / 2h`.
///
/// Besides per-coordinate checks, one random direction `d` over all inputs is
/// tested: `∇f·d` against `(f(x+h·d) − f(x−h·d)) / 2h`, which covers every
/// coordinate at once even when only a sample is checked individually.
pub fn check<F: ScalarFn>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    coords: Coords,
) -> Result<GradCheckReport> {
    check_inner(&f, inputs, h, coords, false)
}

#[doc(hidden)]
pub fn check_with_fault<F: ScalarFn>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    coords: Coords,
) -> Result<GradCheckReport> {
    check_inner(&f, inputs, h, coords, true)
}

fn check_inner<F: ScalarFn>(
    f: &F,
    inputs: &[Tensor<f64>],
    h: f64,
    coords: Coords,
    fault: bool,
) -> Result<GradCheckReport> {
    let grads = analytic(f, inputs, fault)?;
    let f0 = evaluate(f, inputs, false)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        per_input: vec![0.0; inputs.len()],
        ..Default::default()
    };

    for (ti, input) in inputs.iter().enumerate() {
        let picks: Vec<usize> = match coords {
            Coords::All => (0..input.numel()).collect(),
            Coords::Sampled { per_tensor, seed } => {
                let mut idx: Vec<usize> = (0..input.numel()).collect();
                Rng::with_stream(seed, ti as u64).shuffle(&mut idx);
                idx.truncate(per_tensor);
                idx
            }
        };
        for j in picks {
            let orig = input.data()[j];
            work[ti].data_mut()[j] = orig + h;
            let plus = evaluate(f, &work, false)?;
            work[ti].data_mut()[j] = orig - h;
            let minus = evaluate(f, &work, false)?;
            work[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grads[ti][j], numeric, f0);
            report.max_rel_error = report.max_rel_error.max(err);
            report.per_input[ti] = report.per_input[ti].max(err);
            report.coords_checked += 1;
        }
    }

    let mut rng = Rng::with_stream(0x5eed, 0xd1);
    let dirs: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| (0..t.numel()).map(|_| rng.normal(0.0, 1.0)).collect())
        .collect();
    let shifted = |sign: f64| -> Vec<Tensor<f64>> {
        inputs
            .iter()
            .zip(&dirs)
            .map(|(t, d)| {
                let mut t = t.clone();
                t.data_mut().iter_mut().zip(d).for_each(|(v, &dv)| *v += sign * h * dv);
                t
            })
            .collect()
    };
    let plus = evaluate(f, &shifted(1.0), false)?;
    let minus = evaluate(f, &shifted(-1.0), false)?;
    let numeric = (plus - minus) / (2.0 * h);
    let analytic_dir: f64 = grads
        .iter()
        .zip(&dirs)
        .flat_map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b))
        .sum();
    report.directional_rel_error = relative_error(analytic_dir, numeric, f0);
    Ok(report)
}
