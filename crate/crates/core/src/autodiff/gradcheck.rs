//! Central finite-difference gradient checks.
//!
//! Reports render as plain text; set `MPCN_GRADCHECK_DUMP=<path>` in the test
//! suites to have them written out.

use std::fmt;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::{Error, Result, Scalar};

/// Magnitude below which errors are measured absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every coordinate.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + eps;
            let hi = f(&p);
            p[i] = x[i] - eps;
            let lo = f(&p);
            p[i] = x[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub label: String,
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.rel_err >= self.tolerance)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradcheck {}: {} entries, max rel err {:.3e}, tol {:.1e}, {}",
            self.label,
            self.entries.len(),
            self.max_rel_err(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )?;
        let mut per_param: Vec<(&str, f64, usize)> = Vec::new();
        for e in &self.entries {
            match per_param.iter_mut().find(|(n, _, _)| *n == e.param) {
                Some(slot) => {
                    slot.1 = slot.1.max(e.rel_err);
                    slot.2 += 1;
                }
                None => per_param.push((&e.param, e.rel_err, 1)),
            }
        }
        for (name, worst, n) in per_param {
            writeln!(f, "  {name:<24} n={n:<5} max_rel_err={worst:.3e}")?;
        }
        for e in self.failures().take(20) {
            writeln!(
                f,
                "  FAIL {}[{}]: analytic={:.10e} numeric={:.10e} rel={:.3e}",
                e.param, e.index, e.analytic, e.numeric, e.rel_err
            )?;
        }
        Ok(())
    }
}

/// Compares `analytic` (one tensor per parameter, in store order) with
/// central differences of `loss` taken over every parameter entry.
pub fn check_store<T: Scalar>(
    label: impl Into<String>,
    store: &ParamStore<T>,
    analytic: &[Tensor<T>],
    eps: f64,
    tolerance: f64,
    loss: impl Fn(&ParamStore<T>) -> Result<f64>,
) -> Result<GradCheckReport> {
    if analytic.len() != store.len() {
        return Err(Error::Config(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            store.len()
        )));
    }
    let mut probe = store.clone();
    let mut entries = Vec::new();
    for (pid, grad) in analytic.iter().enumerate() {
        let id = ParamId(pid);
        let name = store.name(id).to_string();
        for index in 0..store.get(id).len() {
            let orig = store.get(id).data()[index];
            let x = orig.to_f64_lossy();
            probe.get_mut(id).data_mut()[index] = T::from_f64_lossy(x + eps);
            let hi = loss(&probe)?;
            probe.get_mut(id).data_mut()[index] = T::from_f64_lossy(x - eps);
            let lo = loss(&probe)?;
            probe.get_mut(id).data_mut()[index] = orig;
            let numeric = (hi - lo) / (2.0 * eps);
            let a = grad.data()[index].to_f64_lossy();
            entries.push(GradCheckEntry {
                param: name.clone(),
                index,
                analytic: a,
                numeric,
                rel_err: relative_error(a, numeric),
            });
        }
    }
    let report = GradCheckReport {
        label: label.into(),
        tolerance,
        entries,
    };
    if let Ok(path) = std::env::var("MPCN_GRADCHECK_DUMP") {
        use std::io::Write;
        if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
            let _ = write!(f, "{report}");
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|v| v[0] * v[0] + 3.0 * v[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-6) - 1e-3).abs() < 1e-12);
    }
}
