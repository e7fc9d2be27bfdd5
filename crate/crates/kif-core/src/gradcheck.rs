//! Finite-difference gradient verification for any parameterized fragment.
//!
//! The fragment is a pair of closures over a [`ParamStore`]: a pure loss
//! evaluation and a backward pass that fills gradients. The checker first
//! runs the loss twice and refuses to proceed if the two values differ
//! (non-determinism invalidates central differences), then perturbs each
//! selected coordinate by ±h.

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Cap on coordinates checked per parameter; `None` checks all of them.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Relative error with an absolute fallback for near-zero pairs, so that a
/// coordinate whose true gradient is zero does not fail on rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom > 1e-8 {
        (analytic - numeric).abs() / denom
    } else {
        (analytic - numeric).abs()
    }
}

pub fn check_gradients<F, L, B>(
    store: &mut ParamStore<F>,
    mut loss_fn: L,
    mut backward_fn: B,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Scalar,
    L: FnMut(&ParamStore<F>) -> Result<f64>,
    B: FnMut(&mut ParamStore<F>) -> Result<()>,
{
    let l1 = loss_fn(store)?;
    let l2 = loss_fn(store)?;
    if l1 != l2 {
        return Err(Error::Numeric(format!(
            "gradient check invalid: forward pass is non-deterministic ({l1} vs {l2})"
        )));
    }
    store.zero_grads();
    backward_fn(store)?;
    let analytic: Vec<Vec<f64>> = store
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g.as_f64()).collect())
        .collect();
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        n_checked: 0,
    };
    let h = F::of(opts.h);
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.iter().enumerate() {
        let n = store.value(*id).len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(cap) if cap < n => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all.truncate(cap);
                all.sort_unstable();
                all
            }
            _ => (0..n).collect(),
        };
        for ci in coords {
            let orig = store.value(*id).data()[ci];
            store.value_mut(*id).data_mut()[ci] = orig + h;
            let lp = loss_fn(store)?;
            store.value_mut(*id).data_mut()[ci] = orig - h;
            let lm = loss_fn(store)?;
            store.value_mut(*id).data_mut()[ci] = orig;
            let numeric = (lp - lm) / (2.0 * opts.h);
            let err = relative_error(analytic[pi][ci], numeric);
            report.n_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = names[pi].clone();
                report.worst_coord = ci;
                report.worst_analytic = analytic[pi][ci];
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
