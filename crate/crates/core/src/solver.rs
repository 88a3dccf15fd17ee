//! Coupled bulk/interface evolution on a truncated half-plane:
//! `ε^a ∂_t u = Δu` for `y > 0`, `ε ∂_t u = ∂_y u − W'(u)/ε` on `y = 0`.
//!
//! Finite volumes on a tensor grid (uniform or graded). Each time step is a
//! backward-Euler step with `W'` linearised about the current state; the
//! resulting symmetric system is solved by conjugate gradients
//! preconditioned with a banded Cholesky factor of the state-independent
//! part.

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid2D};
use crate::layer::{layer_for, LayerProfile};
use crate::linalg::{BandCholesky, BandSpd};
use crate::potential::PotentialSpec;
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Largest admissible `dt / ε²`.
pub const CFL_SAFETY: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
}

/// `nx`/`ny` select a uniform grid; otherwise the grid is graded with
/// spacing `h_core` (default `ε/8`) in the core region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_core: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Time between recorded samples.
    pub snapshot_every: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LayerChoice {
    #[default]
    Explicit,
    General,
}

fn default_potential() -> String {
    "sine".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_potential")]
    pub potential: String,
    pub epsilon: f64,
    pub a: f64,
    pub centers: Vec<f64>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub layer: LayerChoice,
    /// Keep full fields at every sample (otherwise only boundary traces).
    #[serde(default = "default_true")]
    pub store_fields: bool,
}

impl ExperimentConfig {
    /// Graded-grid configuration with the default domain `[-30, 30] × [0, 30]`.
    pub fn standard(epsilon: f64, a: f64, centers: Vec<f64>, t_final: f64, snapshot_every: f64) -> Self {
        Self {
            potential: default_potential(),
            epsilon,
            a,
            centers,
            domain: DomainConfig { lx: 30.0, ly: 30.0 },
            grid: GridConfig::default(),
            time: TimeConfig {
                t_final,
                dt: None,
                snapshot_every,
            },
            solver: SolverConfig::default(),
            layer: LayerChoice::Explicit,
            store_fields: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dt(&self) -> f64 {
        self.time.dt.unwrap_or(CFL_SAFETY * self.epsilon * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {e}")));
        }
        if !(self.a > 0.0) {
            return Err(Error::Config(format!("a must be positive, got {}", self.a)));
        }
        if self.centers.is_empty() || self.centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("centers must be non-empty and strictly increasing".into()));
        }
        let (lx, ly) = (self.domain.lx, self.domain.ly);
        if !(lx > 2.0 && ly > 0.0) {
            return Err(Error::Config(format!("bad domain Lx = {lx}, Ly = {ly}")));
        }
        if self.centers.iter().any(|&z| !(z > -lx + 1.0 && z < lx - 1.0)) {
            return Err(Error::Config(format!("centers must lie in (-Lx+1, Lx-1) = ({}, {})", -lx + 1.0, lx - 1.0)));
        }
        if !(self.time.t_final > 0.0 && self.time.snapshot_every > 0.0) {
            return Err(Error::Config("T and snapshot_every must be positive".into()));
        }
        let dt = self.dt();
        if !(dt > 0.0) || dt > CFL_SAFETY * e * e * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {dt} violates dt <= {CFL_SAFETY} eps^2 = {}",
                CFL_SAFETY * e * e
            )));
        }
        if !(self.solver.tol > 0.0 && self.solver.max_iter > 0) {
            return Err(Error::Config("solver tol and max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Short stable identifier of the configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_grid(&self) -> Result<Grid2D> {
        let e = self.epsilon;
        let (lx, ly) = (self.domain.lx, self.domain.ly);
        let g = &self.grid;
        match (g.nx, g.ny) {
            (Some(nx), Some(ny)) => Grid2D::new(Axis::uniform(-lx, lx, nx)?, Axis::uniform(0.0, ly, ny)?),
            (None, None) => {
                let h = g.h_core.unwrap_or(e / 8.0);
                let ratio = g.ratio.unwrap_or(1.08);
                let h_max = g.h_max.unwrap_or(2.0);
                let margin = g.margin.unwrap_or(1.5f64.max(5.0 * e));
                let lo = self.centers[0] - margin;
                let hi = self.centers[self.centers.len() - 1] + margin;
                let x = Axis::graded_symmetric(lx, lo.max(-lx + 0.5), hi.min(lx - 0.5), h, ratio, h_max)?;
                let y = Axis::graded_from_zero(ly, (2.0 * e).min(0.5 * ly), h, ratio, h_max)?;
                Grid2D::new(x, y)
            }
            _ => Err(Error::Config("grid needs both nx and ny, or neither".into())),
        }
    }
}

/// Discrete field on the grid with its physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub eps: f64,
    pub a: f64,
    pub time: f64,
}

impl Field {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// `u(x_i, 0)` for all `i`.
    pub fn boundary_trace(&self) -> Vec<f64> {
        let ny = self.grid.ny();
        (0..self.grid.nx()).map(|i| self.values[i * ny]).collect()
    }

    pub fn shifted(&self, k: f64) -> Self {
        let mut f = self.clone();
        f.values.iter_mut().for_each(|v| *v += k);
        f
    }
}

/// `u⁰(x, y) = Σ φ((x − z_i)/ε, y/ε)`.
pub fn init_superposition(centers: &[f64], eps: f64, a: f64, layer: &LayerProfile, grid: &Grid2D) -> Result<Field> {
    if centers.is_empty() || centers.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("centers must be non-empty and strictly increasing".into()));
    }
    let lx = grid.x.last().min(-grid.x.first());
    if centers.iter().any(|&z| !(z > -lx + 1.0 && z < lx - 1.0)) {
        return Err(Error::Config("centers must lie in (-Lx+1, Lx-1)".into()));
    }
    let (zmin, zmax) = (centers[0], centers[centers.len() - 1]);
    let (hx, hy) = grid.core_spacing(zmin - 4.0 * eps, zmax + 4.0 * eps, 2.0 * eps);
    let limit = eps / 8.0 * (1.0 + 1e-9);
    if hx > limit || hy > limit {
        return Err(Error::Config(format!(
            "unresolved core: hx = {hx:.3e}, hy = {hy:.3e}, need <= eps/8 = {:.3e}",
            eps / 8.0
        )));
    }
    let ny = grid.ny();
    let xs = grid.x.nodes();
    let ys = grid.y.nodes();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let (x, y) = (xs[p / ny], ys[p % ny]);
            centers.iter().map(|z| layer.value((x - z) / eps, y / eps)).sum()
        })
        .collect();
    Ok(Field {
        grid: grid.clone(),
        values,
        eps,
        a,
        time: 0.0,
    })
}

/// Reusable discretisation for a fixed grid, `ε`, `a` and `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    nx: usize,
    ny: usize,
    pub eps: f64,
    pub a: f64,
    pub dt: f64,
    /// `ε^a |cell| + ε wx` (boundary rows) per node.
    mass: Vec<f64>,
    /// Conductance of the edge `(i,j)–(i+1,j)`, stored at `i*ny + j`.
    cx: Vec<f64>,
    /// Conductance of the edge `(i,j)–(i,j+1)`, stored at `i*ny + j`.
    cy: Vec<f64>,
    wx: Vec<f64>,
    precond: BandCholesky,
    shift: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Stepper {
    pub fn new(grid: &Grid2D, eps: f64, a: f64, dt: f64, solver: SolverConfig) -> Result<Self> {
        if !(dt > 0.0) || dt > CFL_SAFETY * eps * eps * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {dt} violates dt <= {CFL_SAFETY} eps^2 = {}",
                CFL_SAFETY * eps * eps
            )));
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let xs = grid.x.nodes();
        let ys = grid.y.nodes();
        let wx = grid.x.cell_widths();
        let wy = grid.y.cell_widths();
        let ea = eps.powf(a);
        let mut mass = vec![0.0; nx * ny];
        let mut cx = vec![0.0; nx * ny];
        let mut cy = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let p = i * ny + j;
                mass[p] = ea * wx[i] * wy[j] + if j == 0 { eps * wx[i] } else { 0.0 };
                if i + 1 < nx {
                    cx[p] = wy[j] / (xs[i + 1] - xs[i]);
                }
                if j + 1 < ny {
                    cy[p] = wx[i] / (ys[j + 1] - ys[j]);
                }
            }
        }
        let mut st = Self {
            nx,
            ny,
            eps,
            a,
            dt,
            mass,
            cx,
            cy,
            wx,
            precond: {
                let mut one = BandSpd::zeros(1, 0);
                one.add(0, 0, 1.0);
                one.factor()?
            },
            shift: 0.0,
            tol: solver.tol,
            max_iter: solver.max_iter,
        };
        let shift = st.shift;
        st.precond = st.assemble(|_| shift).factor()?;
        Ok(st)
    }

    #[inline]
    fn is_wall(&self, p: usize) -> bool {
        p < self.ny || p >= (self.nx - 1) * self.ny
    }

    /// Banded matrix with boundary curvature `curv(i)` in the rows `j = 0`.
    fn assemble<F: Fn(usize) -> f64>(&self, curv: F) -> BandSpd {
        let (nx, ny) = (self.nx, self.ny);
        let mut m = BandSpd::zeros(nx * ny, ny);
        for p in 0..nx * ny {
            if self.is_wall(p) {
                m.add(p, p, 1.0);
                continue;
            }
            let (i, j) = (p / ny, p % ny);
            let mut d = self.mass[p];
            if j == 0 {
                d += self.dt * self.wx[i] * curv(i) / self.eps;
            }
            for (q, c) in self.neighbours(p) {
                d += self.dt * c;
                if !self.is_wall(q) && q < p {
                    m.add(p, q, -self.dt * c);
                }
            }
            m.add(p, p, d);
        }
        m
    }

    #[inline]
    fn neighbours(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let ny = self.ny;
        let (i, j) = (p / ny, p % ny);
        let left = (i > 0).then(|| (p - ny, self.cx[p - ny]));
        let right = (i + 1 < self.nx).then(|| (p + ny, self.cx[p]));
        let down = (j > 0).then(|| (p - 1, self.cy[p - 1]));
        let up = (j + 1 < ny).then(|| (p + 1, self.cy[p]));
        [left, right, down, up].into_iter().flatten()
    }

    fn apply(&self, curv: &[f64], x: &[f64], out: &mut [f64]) {
        let ny = self.ny;
        for p in 0..x.len() {
            if self.is_wall(p) {
                out[p] = x[p];
                continue;
            }
            let (i, j) = (p / ny, p % ny);
            let mut d = self.mass[p];
            if j == 0 {
                d += self.dt * self.wx[i] * curv[i] / self.eps;
            }
            let mut acc = 0.0;
            for (q, c) in self.neighbours(p) {
                d += self.dt * c;
                if !self.is_wall(q) {
                    acc -= self.dt * c * x[q];
                }
            }
            out[p] = d * x[p] + acc;
        }
    }

    /// One linearised backward-Euler step; returns the CG iteration count.
    pub fn advance(&self, u: &mut [f64], potential: &PotentialSpec) -> Result<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let curv: Vec<f64> = (0..nx).map(|i| potential.d2w(u[i * ny])).collect();
        let mut b = vec![0.0; u.len()];
        for p in 0..u.len() {
            if self.is_wall(p) {
                b[p] = u[p];
                continue;
            }
            let (i, j) = (p / ny, p % ny);
            let mut r = self.mass[p] * u[p];
            if j == 0 {
                r += self.dt * self.wx[i] * (curv[i] * u[p] - potential.dw(u[p])) / self.eps;
            }
            for (q, c) in self.neighbours(p) {
                if self.is_wall(q) {
                    r += self.dt * c * u[q];
                }
            }
            b[p] = r;
        }
        let iters = self.pcg(&curv, &b, u)?;
        Ok(iters)
    }

    fn pcg(&self, curv: &[f64], b: &[f64], x: &mut [f64]) -> Result<usize> {
        let n = b.len();
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let mut ax = vec![0.0; n];
        self.apply(curv, x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let mut z = r.clone();
        self.precond.solve_in_place(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for it in 0..=self.max_iter {
            let rn = dot(&r, &r).sqrt();
            if rn <= self.tol * bnorm {
                return Ok(it);
            }
            if it == self.max_iter {
                return Err(Error::Solver(format!(
                    "CG did not converge in {} iterations (relative residual {:.3e})",
                    self.max_iter,
                    rn / bnorm
                )));
            }
            self.apply(curv, &p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(v, d)| *v += alpha * d);
            r.iter_mut().zip(&ap).for_each(|(v, d)| *v -= alpha * d);
            z.copy_from_slice(&r);
            self.precond.solve_in_place(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(v, d)| *v = d + beta * *v);
        }
        unreachable!()
    }

    /// Discrete energy `(ε/2) Σ_edges c (u_p − u_q)² + Σ wx W(u(x_i, 0))`.
    pub fn energy(&self, u: &[f64], potential: &PotentialSpec) -> f64 {
        let ny = self.ny;
        let mut bulk = 0.0;
        for p in 0..u.len() {
            let (i, j) = (p / ny, p % ny);
            if i + 1 < self.nx {
                let d = u[p + ny] - u[p];
                bulk += self.cx[p] * d * d;
            }
            if j + 1 < ny {
                let d = u[p + 1] - u[p];
                bulk += self.cy[p] * d * d;
            }
        }
        let iface: f64 = (0..self.nx).map(|i| self.wx[i] * potential.w(u[i * ny])).sum();
        0.5 * self.eps * bulk + iface
    }
}

/// One time step of size `dt` (builds a fresh [`Stepper`]).
pub fn step(field: &Field, dt: f64, potential: &PotentialSpec) -> Result<Field> {
    let st = Stepper::new(&field.grid, field.eps, field.a, dt, SolverConfig::default())?;
    let mut out = field.clone();
    st.advance(&mut out.values, potential)?;
    out.time += dt;
    Ok(out)
}

/// Discrete energy of a field (see [`Stepper::energy`]).
pub fn energy(field: &Field, potential: &PotentialSpec) -> Result<f64> {
    let st = Stepper::new(
        &field.grid,
        field.eps,
        field.a,
        CFL_SAFETY * field.eps * field.eps,
        SolverConfig::default(),
    )?;
    Ok(st.energy(&field.values, potential))
}

/// For each `i = 1..N`, the `x` at which the trace crosses `i − 1/2`
/// (linear interpolation between bracketing nodes).
pub fn track_crossings(trace: &[f64], xs: &[f64], n: usize) -> Result<Vec<f64>> {
    if trace.len() != xs.len() || trace.len() < 2 {
        return Err(Error::Tracking("trace and node arrays must match".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let level = i as f64 - 0.5;
        let k = trace
            .windows(2)
            .position(|w| w[0] < level && w[1] >= level)
            .ok_or_else(|| Error::Tracking(format!("trace never crosses level {level}")))?;
        let s = (level - trace[k]) / (trace[k + 1] - trace[k]);
        out.push(xs[k] + s * (xs[k + 1] - xs[k]));
    }
    if out.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Tracking(format!("crossings not increasing: {out:?}")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    /// Full field (row-major, `i * ny + j`) or the boundary trace only.
    pub values: Vec<f64>,
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub grid: Grid2D,
    pub eps: f64,
    pub a: f64,
    pub times: Vec<f64>,
    pub crossings: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub config_hash: String,
    pub steps: usize,
    pub max_linear_iterations: usize,
}

impl SolutionRecord {
    pub fn boundary_trace(&self, k: usize) -> Vec<f64> {
        let s = &self.snapshots[k];
        if s.full {
            let ny = self.grid.ny();
            (0..self.grid.nx()).map(|i| s.values[i * ny]).collect()
        } else {
            s.values.clone()
        }
    }

    pub fn field(&self, k: usize) -> Option<Field> {
        let s = &self.snapshots[k];
        s.full.then(|| Field {
            grid: self.grid.clone(),
            values: s.values.clone(),
            eps: self.eps,
            a: self.a,
            time: s.time,
        })
    }

    /// Index of the sample closest to `t`.
    pub fn sample_index(&self, t: f64) -> usize {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Sample times `0, s, 2s, …, T` (the last one is `T` exactly).
pub fn sample_times(t_final: f64, every: f64) -> Vec<f64> {
    let m = (t_final / every - 1e-9).ceil().max(1.0) as usize;
    (0..=m).map(|k| if k == m { t_final } else { k as f64 * every }).collect()
}

/// Evolves an initial field, recording crossings and energy at the sample
/// times.
pub fn evolve(
    initial: Field,
    potential: &PotentialSpec,
    n_layers: usize,
    t_final: f64,
    dt_max: f64,
    snapshot_every: f64,
    solver: SolverConfig,
    store_fields: bool,
) -> Result<SolutionRecord> {
    let grid = initial.grid.clone();
    let (eps, a) = (initial.eps, initial.a);
    let xs = grid.x.nodes().to_vec();
    let band = (-0.1, n_layers as f64 + 0.1);
    let times = sample_times(t_final, snapshot_every);
    let mut u = initial.values;
    let mut record = SolutionRecord {
        grid: grid.clone(),
        eps,
        a,
        times: Vec::new(),
        crossings: Vec::new(),
        energy: Vec::new(),
        snapshots: Vec::new(),
        config_hash: String::new(),
        steps: 0,
        max_linear_iterations: 0,
    };
    let mut stepper: Option<Stepper> = None;
    let ny = grid.ny();
    let push = |rec: &mut SolutionRecord, t: f64, u: &[f64], st: &Stepper| -> Result<()> {
        let trace: Vec<f64> = (0..grid.nx()).map(|i| u[i * ny]).collect();
        let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |m, v| (m.0.min(*v), m.1.max(*v)));
        if lo < band.0 || hi > band.1 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numerical(format!(
                "field left the band [{}, {}] at t = {t}: range [{lo}, {hi}]",
                band.0, band.1
            )));
        }
        rec.times.push(t);
        rec.crossings.push(track_crossings(&trace, &xs, n_layers)?);
        rec.energy.push(st.energy(u, potential));
        rec.snapshots.push(Snapshot {
            time: t,
            values: if store_fields { u.to_vec() } else { trace },
            full: store_fields,
        });
        Ok(())
    };
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let span = t - times[k - 1];
            let n_steps = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let dt = span / n_steps as f64;
            let rebuild = stepper.as_ref().map(|s| s.dt != dt).unwrap_or(true);
            if rebuild {
                stepper = Some(Stepper::new(&grid, eps, a, dt, solver)?);
            }
            let st = stepper.as_ref().expect("stepper");
            for _ in 0..n_steps {
                let it = st.advance(&mut u, potential)?;
                record.max_linear_iterations = record.max_linear_iterations.max(it);
                record.steps += 1;
            }
            debug!("t = {t:.4}, steps = {}, max CG = {}", record.steps, record.max_linear_iterations);
        } else {
            stepper = Some(Stepper::new(&grid, eps, a, dt_max.min(CFL_SAFETY * eps * eps), solver)?);
        }
        let st = stepper.as_ref().expect("stepper");
        push(&mut record, t, &u, st)?;
    }
    Ok(record)
}

/// Runs a configured experiment with a caller-supplied layer.
pub fn run_with_layer(config: &ExperimentConfig, potential: &PotentialSpec, layer: &LayerProfile) -> Result<SolutionRecord> {
    config.validate()?;
    let grid = config.build_grid()?;
    info!(
        "simulate eps={} a={} grid {}x{} dt={:.3e}",
        config.epsilon,
        config.a,
        grid.nx(),
        grid.ny(),
        config.dt()
    );
    let init = init_superposition(&config.centers, config.epsilon, config.a, layer, &grid)?;
    let mut rec = evolve(
        init,
        potential,
        config.centers.len(),
        config.time.t_final,
        config.dt(),
        config.time.snapshot_every,
        config.solver,
        config.store_fields,
    )?;
    rec.config_hash = config.hash();
    Ok(rec)
}

/// Runs a configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<SolutionRecord> {
    config.validate()?;
    let potential = PotentialSpec::from_config_value(&config.potential)?;
    let layer = layer_for(&potential, config.layer == LayerChoice::Explicit)?;
    run_with_layer(config, &potential, &layer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(eps: f64) -> Grid2D {
        let x = Axis::graded_symmetric(10.0, -1.5, 1.5, eps / 8.0, 1.1, 1.0).unwrap();
        let y = Axis::graded_from_zero(10.0, 2.0 * eps, eps / 8.0, 1.1, 1.0).unwrap();
        Grid2D::new(x, y).unwrap()
    }

    #[test]
    fn single_layer_initial_data() {
        let eps = 0.1;
        let g = small_grid(eps);
        let f = init_superposition(&[0.0], eps, 1.0, &LayerProfile::explicit(), &g).unwrap();
        let tr = f.boundary_trace();
        assert!(tr.windows(2).all(|w| w[1] > w[0]));
        let c = track_crossings(&tr, g.x.nodes(), 1).unwrap();
        assert!(c[0].abs() < 1e-12);
        assert!(tr[0] <= 0.05 && tr[tr.len() - 1] >= 0.95);
        let coarse = Grid2D::new(Axis::uniform(-10.0, 10.0, 51).unwrap(), Axis::uniform(0.0, 10.0, 51).unwrap()).unwrap();
        assert!(matches!(
            init_superposition(&[0.0], eps, 1.0, &LayerProfile::explicit(), &coarse),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn integer_constant_is_steady() {
        let eps = 0.2;
        let g = small_grid(eps);
        let w = PotentialSpec::sinusoidal();
        let f = Field {
            values: vec![1.0; g.len()],
            grid: g,
            eps,
            a: 1.0,
            time: 0.0,
        };
        let out = step(&f, 0.25 * eps * eps, &w).unwrap();
        assert!(out.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(energy(&out, &w).unwrap(), 0.0);
    }

    #[test]
    fn system_is_an_m_matrix_at_the_step_cap() {
        let eps = 0.1;
        let g = small_grid(eps);
        let st = Stepper::new(&g, eps, 0.5, CFL_SAFETY * eps * eps, SolverConfig::default()).unwrap();
        let curv = -1.0;
        for p in 0..g.len() {
            if st.is_wall(p) {
                continue;
            }
            let mut d = st.mass[p];
            if p % st.ny == 0 {
                d += st.dt * st.wx[p / st.ny] * curv / eps;
            }
            let mut off = 0.0;
            for (_, c) in st.neighbours(p) {
                assert!(c > 0.0);
                d += st.dt * c;
                off += st.dt * c;
            }
            assert!(d > off, "row {p}: {d} <= {off}");
        }
    }

    #[test]
    fn crossings_shift_with_trace() {
        let xs: Vec<f64> = (0..401).map(|k| -2.0 + 0.01 * k as f64).collect();
        let tr: Vec<f64> = xs.iter().map(|x| ((x + 1.0) / 0.05).atan() / std::f64::consts::PI + 0.5 + ((x - 1.0) / 0.05).atan() / std::f64::consts::PI + 0.5).collect();
        let c = track_crossings(&tr, &xs, 2).unwrap();
        assert!((c[0] + 1.0).abs() < 0.01 && (c[1] - 1.0).abs() < 0.01, "{c:?}");
        let xs2: Vec<f64> = xs.iter().map(|x| x + 0.3).collect();
        let c2 = track_crossings(&tr, &xs2, 2).unwrap();
        assert!((c2[0] - c[0] - 0.3).abs() < 1e-12);
        assert!(matches!(track_crossings(&tr, &xs, 3), Err(Error::Tracking(_))));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{"potential":"sine","epsilon":0.1,"a":1.0,"centers":[-0.5,0.5],
            "domain":{"Lx":20,"Ly":20},"grid":{"nx":401,"ny":201},
            "time":{"T":0.5,"dt":0.0025,"snapshot_every":0.05},"solver":{"tol":1e-10,"max_iter":100}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.grid.nx, Some(401));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut bad = cfg.clone();
        bad.time.dt = Some(0.01);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
