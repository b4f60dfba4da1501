//! Central finite-difference verification of analytic gradients.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Largest acceptable relative error per parameter tensor.
    pub tolerance: f64,
    /// Denominator floor of the relative error, so entries whose gradient
    /// is numerically zero are judged on absolute error.
    pub floor: f64,
    /// Runs the analytic pass with a deliberately wrong backward rule.
    pub corrupt_backward: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            corrupt_backward: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Element with the largest relative error.
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_error > self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradient of `loss_fn` with respect to every canonical
/// parameter in `store` against central differences. `loss_fn` must be
/// deterministic and build a scalar loss into the graph it is given.
pub fn grad_check<F>(store: &ParamStore, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |g: &mut Graph, s: &ParamStore, what: &dyn Fn() -> String| -> Result<(f64, Var)> {
        let loss = loss_fn(g, s)?;
        let v = g.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss is {v} {}", what())));
        }
        Ok((v, loss))
    };

    let mut g = Graph::new();
    g.corrupt_backward(opts.corrupt_backward);
    let (_, loss) = eval(&mut g, store, &|| "at the unperturbed parameters".to_string())?;
    g.backward(loss)?;

    let mut work = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for (name, tensor) in store.iter() {
        let analytic: Vec<f64> = g
            .bound_params()
            .find(|(n, _)| *n == name)
            .and_then(|(_, v)| g.grad(v).map(<[f64]>::to_vec))
            .unwrap_or_else(|| alloc::vec![0.0; tensor.numel()]);
        let mut check = ParamCheck {
            name: name.to_string(),
            len: tensor.numel(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
        };
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            let mut probe = |delta: f64| -> Result<f64> {
                work.get_mut(name)?.data_mut()[i] = orig + delta;
                let mut gp = Graph::new();
                let r = eval(&mut gp, &work, &|| format!("with {name}[{i}] shifted by {delta:e}"));
                work.get_mut(name)?.data_mut()[i] = orig;
                Ok(r?.0)
            };
            let plus = probe(opts.step)?;
            let minus = probe(-opts.step)?;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let abs = (analytic[i] - numeric).abs();
            let rel = relative_error(analytic[i], numeric, opts.floor);
            check.max_abs_error = check.max_abs_error.max(abs);
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = i;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        params,
    })
}
