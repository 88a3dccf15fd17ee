//! One-dimensional fractional Allen–Cahn equation
//! `ε ∂_t u = −(−Δ)^{1/2} u − W'(u)/ε` on the line.
//!
//! The unknown is split as `u = ref + v` with an arctan reference carrying
//! the far-field limits; `v` is periodic on `[-L, L)`. The half-Laplacian is
//! implicit, `W'` explicit.

use crate::error::{Error, Result};
use crate::layer::{layer_for, LayerProfile};
use crate::nonlocal::{ArctanReference, Grid1D, SpectralLine};
use crate::potential::PotentialSpec;
use crate::solver::{sample_times, track_crossings, CFL_SAFETY};
use log::{debug, info};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Default `dt / ε²`; the explicit reaction term is only first-order
/// accurate, so the default is well below the stability cap.
pub const DEFAULT_DT_FACTOR: f64 = 1.0 / 64.0;

/// Largest admissible spectral tail fraction.
pub const TAIL_LIMIT: f64 = 1e-6;

fn default_potential() -> String {
    "sine".into()
}

fn default_half_width() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedConfig {
    #[serde(default = "default_potential")]
    pub potential: String,
    pub epsilon: f64,
    pub centers: Vec<f64>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    /// Grid spacing; defaults to `ε/8`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub snapshot_every: f64,
}

impl ReducedConfig {
    pub fn new(epsilon: f64, centers: Vec<f64>, t_final: f64, snapshot_every: f64) -> Self {
        Self {
            potential: default_potential(),
            epsilon,
            centers,
            half_width: default_half_width(),
            h: None,
            t_final,
            dt: None,
            snapshot_every,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(DEFAULT_DT_FACTOR * self.epsilon * self.epsilon)
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D::with_spacing(self.half_width, self.h.unwrap_or(self.epsilon / 8.0))
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {e}")));
        }
        if self.centers.is_empty() || self.centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("centers must be non-empty and strictly increasing".into()));
        }
        let span = (self.centers[self.centers.len() - 1] - self.centers[0]).max(1.0);
        if 2.0 * self.half_width < 4.0 * span {
            return Err(Error::Config(format!(
                "domain width {} must be at least 4 x span = {}",
                2.0 * self.half_width,
                4.0 * span
            )));
        }
        if self.centers.iter().any(|z| z.abs() >= self.half_width / 2.0) {
            return Err(Error::Config("centers must lie in the middle half of the domain".into()));
        }
        let dt = self.dt();
        if !(dt > 0.0) || dt > CFL_SAFETY * e * e * (1.0 + 1e-12) {
            return Err(Error::Config(format!("dt = {dt} violates dt <= {CFL_SAFETY} eps^2")));
        }
        if !(self.t_final > 0.0 && self.snapshot_every > 0.0) {
            return Err(Error::Config("T and snapshot_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedRecord {
    pub grid: Grid1D,
    pub eps: f64,
    pub times: Vec<f64>,
    pub crossings: Vec<Vec<f64>>,
    /// Traces `u(x_k, t)` at the sample times.
    pub traces: Vec<Vec<f64>>,
    pub steps: usize,
    pub max_tail_fraction: f64,
}

/// Solves the reduced equation from the superposition of layer traces.
pub fn solve_reduced_fractional(config: &ReducedConfig) -> Result<ReducedRecord> {
    config.validate()?;
    let potential = PotentialSpec::from_config_value(&config.potential)?;
    let layer = layer_for(&potential, true)?;
    solve_reduced_with(config, &potential, &layer)
}

pub fn solve_reduced_with(config: &ReducedConfig, potential: &PotentialSpec, layer: &LayerProfile) -> Result<ReducedRecord> {
    config.validate()?;
    let eps = config.epsilon;
    let grid = config.grid();
    let line = SpectralLine::new(grid);
    let xs = grid.nodes();
    let reference = ArctanReference {
        centers: config.centers.clone(),
        kappa: 1.0 / layer.alpha(),
        scale: eps,
    };
    let href: Vec<f64> = xs.iter().map(|&x| reference.half_laplacian(x)).collect();
    let rvals: Vec<f64> = xs.iter().map(|&x| reference.value(x)).collect();
    let mut v: Vec<f64> = xs
        .iter()
        .zip(&rvals)
        .map(|(&x, r)| config.centers.iter().map(|z| layer.trace((x - z) / eps)).sum::<f64>() - r)
        .collect();
    info!("reduced eps={} n={} h={:.3e}", eps, grid.n, grid.spacing());
    let n_layers = config.centers.len();
    let times = sample_times(config.t_final, config.snapshot_every);
    let mut rec = ReducedRecord {
        grid,
        eps,
        times: Vec::new(),
        crossings: Vec::new(),
        traces: Vec::new(),
        steps: 0,
        max_tail_fraction: 0.0,
    };
    let dt_max = config.dt();
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let span = t - times[k - 1];
            let n_steps = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let dt = span / n_steps as f64;
            let c = eps / dt;
            for _ in 0..n_steps {
                let forcing: Vec<f64> = (0..v.len())
                    .map(|i| c * v[i] - href[i] - potential.dw(rvals[i] + v[i]) / eps)
                    .collect();
                v = line.multiply(&forcing, |xi| Complex64::new(1.0 / (c + xi.abs()), 0.0));
                rec.steps += 1;
            }
            debug!("reduced t = {t:.4}");
        }
        let tail = tail_relative_to_unit(&line, &v);
        rec.max_tail_fraction = rec.max_tail_fraction.max(tail);
        if tail > TAIL_LIMIT {
            return Err(Error::Resolution(format!(
                "spectral tail fraction {tail:.3e} exceeds {TAIL_LIMIT:.0e} at t = {t}"
            )));
        }
        let trace: Vec<f64> = rvals.iter().zip(&v).map(|(r, w)| r + w).collect();
        rec.times.push(t);
        rec.crossings.push(track_crossings(&trace, &xs, n_layers)?);
        rec.traces.push(trace);
    }
    Ok(rec)
}

/// Tail fraction of `v`, measured against `max(‖v‖, 1)` in root-mean-square
/// norm (the solution itself is of unit size).
fn tail_relative_to_unit(line: &SpectralLine, v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let rms = (v.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    line.tail_fraction(v) * rms / rms.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::phi_explicit;

    #[test]
    fn single_layer_is_steady() {
        let cfg = ReducedConfig::new(0.1, vec![0.0], 0.1, 0.05);
        let rec = solve_reduced_fractional(&cfg).unwrap();
        let xs = rec.grid.nodes();
        let last = rec.traces.last().unwrap();
        let err = xs
            .iter()
            .zip(last)
            .map(|(&x, u)| (u - phi_explicit(x / 0.1, 0.0).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert!(rec.crossings.iter().all(|c| c[0].abs() < 1e-9));
    }

    #[test]
    fn two_layers_repel() {
        let cfg = ReducedConfig::new(0.1, vec![-0.5, 0.5], 0.25, 0.05);
        let rec = solve_reduced_fractional(&cfg).unwrap();
        let gaps: Vec<f64> = rec.crossings.iter().map(|c| c[1] - c[0]).collect();
        assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
    }

    #[test]
    fn rejects_narrow_domain() {
        let mut cfg = ReducedConfig::new(0.1, vec![-2.0, 2.0], 0.1, 0.05);
        cfg.half_width = 6.0;
        assert!(matches!(solve_reduced_fractional(&cfg), Err(Error::Config(_))));
    }
}
