//! Correctors around the layer: the boundary corrector `ψ` (harmonic,
//! with a linearised Neumann condition) and the bulk corrector `q`
//! (Dirichlet problem with source `∂_x φ · g(y)`).

use crate::error::{check_finite, Error, Result};
use crate::layer::LayerProfile;
use crate::linalg::gmres;
use crate::nonlocal::{hermite_interpolate, Grid1D, SpectralLine};
use crate::potential::PotentialSpec;
use crate::quadrature::{adaptive, GaussLegendre};
use crate::report::Report;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Default solve grid for `ψ`: wide enough that `W''(φ) − α` is below
/// `1e-8` at the ends for the arctan layer.
pub fn default_psi_grid() -> Grid1D {
    Grid1D::new(16384.0, 131_072)
}

/// Half-width of the window kept for evaluating the harmonic extension.
const EVAL_HALF_WIDTH: f64 = 512.0;
/// Above this height the extension falls back to Poisson quadrature.
const SPECTRAL_Y_MAX: f64 = 50.0;

/// Boundary trace of `ψ` plus an evaluator for its harmonic extension.
///
/// The trace is split as `ψ = c·x/(x² + 1) + ρ`; the first term carries the
/// `c/x` tail and has the closed-form extension `c·x/(x² + (y+1)²)`, the
/// remainder `ρ` is extended spectrally on a window around the origin.
#[derive(Debug, Clone)]
pub struct PsiProfile {
    grid: Grid1D,
    trace: Vec<f64>,
    slope: Vec<f64>,
    pub tail_coefficient: f64,
    split_coefficient: f64,
    pub residual: f64,
    eval_grid: Grid1D,
    eval_remainder: Vec<f64>,
    eval_slope: Vec<f64>,
    eval_spectrum: Vec<Complex64>,
    eval_wavenumbers: Vec<f64>,
}

fn tail_model(c: f64, x: f64, y: f64) -> (f64, f64, f64) {
    let b = y + 1.0;
    let r2 = x * x + b * b;
    (c * x / r2, c * (b * b - x * x) / (r2 * r2), -2.0 * c * x * b / (r2 * r2))
}

impl PsiProfile {
    fn new(grid: Grid1D, trace: Vec<f64>, residual: f64) -> Self {
        let line = SpectralLine::new(grid);
        let slope = line.derivative(&trace);
        let nodes = grid.nodes();
        // Least-squares fit of ψ ≈ c/x on 20 <= |x| <= 100.
        let (mut num, mut den) = (0.0, 0.0);
        for (&x, &p) in nodes.iter().zip(&trace) {
            if (20.0..=100.0).contains(&x.abs()) {
                num += p / x;
                den += 1.0 / (x * x);
            }
        }
        let tail_coefficient = if den > 0.0 { num / den } else { 0.0 };
        let h = grid.spacing();
        let half = EVAL_HALF_WIDTH.min(grid.half_width);
        // The split uses x·ψ near the window edge, where higher-order tail
        // terms are negligible.
        let (mut acc, mut cnt) = (0.0, 0.0);
        for (&x, &p) in nodes.iter().zip(&trace) {
            if (0.5 * half..=half).contains(&x.abs()) {
                acc += p * (x * x + 1.0) / x;
                cnt += 1.0;
            }
        }
        let c = if cnt > 0.0 { acc / cnt } else { tail_coefficient };
        let m = ((2.0 * half / h).round() as usize) & !1;
        let eval_grid = Grid1D::new(0.5 * m as f64 * h, m.max(4));
        let offset = ((eval_grid.x(0) - grid.x(0)) / h).round() as usize;
        let eval_remainder: Vec<f64> = (0..eval_grid.n)
            .map(|k| {
                let x = eval_grid.x(k);
                trace[offset + k] - tail_model(c, x, 0.0).0
            })
            .collect();
        let eval_line = SpectralLine::new(eval_grid);
        let eval_slope = eval_line.derivative(&eval_remainder);
        let eval_spectrum = eval_line.to_spectrum(&eval_remainder);
        let eval_wavenumbers = eval_line.wavenumbers().to_vec();
        Self {
            grid,
            trace,
            slope,
            tail_coefficient,
            split_coefficient: c,
            residual,
            eval_grid,
            eval_remainder,
            eval_slope,
            eval_spectrum,
            eval_wavenumbers,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn trace_samples(&self) -> &[f64] {
        &self.trace
    }

    /// `ψ(x, 0)`; beyond the solve grid the `c/x` tail.
    pub fn trace_at(&self, x: f64) -> f64 {
        hermite_interpolate(&self.grid, &self.trace, &self.slope, x).unwrap_or(self.tail_coefficient / x)
    }

    /// `∂_x ψ(x, 0)`.
    pub fn trace_slope_at(&self, x: f64) -> f64 {
        crate::nonlocal::hermite_slope(&self.grid, &self.trace, &self.slope, x)
            .unwrap_or(-self.tail_coefficient / (x * x))
    }

    fn remainder_spectral(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let l = self.eval_grid.half_width;
        let n = self.eval_grid.n;
        let (mut v, mut vx, mut vy) = (0.0, 0.0, 0.0);
        for (k, c) in self.eval_spectrum.iter().enumerate() {
            let xi = if k == n / 2 { 0.0 } else { self.eval_wavenumbers[k] };
            let decay = (-xi.abs() * y).exp();
            if decay < 1e-18 {
                continue;
            }
            let (s, co) = (xi * (x + l)).sin_cos();
            let re = c.re * co - c.im * s;
            let im = c.re * s + c.im * co;
            v += decay * re;
            vx -= decay * xi * im;
            vy -= decay * xi.abs() * re;
        }
        let nf = n as f64;
        (v / nf, vx / nf, vy / nf)
    }

    fn remainder_quadrature(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let l = self.eval_grid.half_width;
        let rho = |s: f64| hermite_interpolate(&self.eval_grid, &self.eval_remainder, &self.eval_slope, s).unwrap_or(0.0);
        let bps = [x - y, x, x + y];
        let q = |f: &dyn Fn(f64) -> f64| adaptive(f, -l, l, &bps, 1e-14, 1e-10, 20_000).map(|r| r.value / PI).unwrap_or(f64::NAN);
        let v = q(&|s| {
            let d = x - s;
            rho(s) * y / (d * d + y * y)
        });
        let vx = q(&|s| {
            let d = x - s;
            let r2 = d * d + y * y;
            -rho(s) * 2.0 * d * y / (r2 * r2)
        });
        let vy = q(&|s| {
            let d = x - s;
            let r2 = d * d + y * y;
            rho(s) * (d * d - y * y) / (r2 * r2)
        });
        (v, vx, vy)
    }

    /// `(ψ, ∂_x ψ, ∂_y ψ)` at `(x, y)`, `y >= 0` (unchecked).
    pub fn value_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (t, tx, ty) = tail_model(self.split_coefficient, x, y);
        let l = self.eval_grid.half_width;
        if x.abs() >= l && y == 0.0 {
            return (self.trace_at(x), self.trace_slope_at(x), ty);
        }
        let (r, rx, ry) = if y <= SPECTRAL_Y_MAX {
            self.remainder_spectral(x, y)
        } else {
            self.remainder_quadrature(x, y)
        };
        (t + r, tx + rx, ty + ry)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.value_grad(x, y).0
    }
}

/// `ψ(x, y)`: the solved trace (trigonometric interpolation) on `y = 0`,
/// its harmonic extension above.
pub fn psi_at(profile: &PsiProfile, x: f64, y: f64) -> Result<f64> {
    check_finite("x", x)?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y must be >= 0, got {y}")));
    }
    Ok(profile.value(x, y))
}

/// Solves `(−Δ)^{1/2}ψ₀ + W''(φ)ψ₀ = −rhs` on the periodic grid, with
/// `ψ₀` orthogonal to the translation mode `∂_x φ`.
pub fn solve_psi_with_rhs(
    layer: &LayerProfile,
    potential: &PotentialSpec,
    grid: Grid1D,
    rhs: &[f64],
) -> Result<PsiProfile> {
    if rhs.len() != grid.n {
        return Err(Error::Config("rhs length does not match the grid".into()));
    }
    let line = SpectralLine::new(grid);
    let nodes = grid.nodes();
    let curvature: Vec<f64> = nodes.iter().map(|&x| potential.d2w(layer.trace(x))).collect();
    let mode: Vec<f64> = nodes.iter().map(|&x| layer.trace_slope(x)).collect();
    let mode_norm2: f64 = mode.iter().map(|m| m * m).sum();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let fnorm = dot(rhs, rhs).sqrt();
    let apply_l = |v: &[f64]| -> Vec<f64> {
        let hv = line.half_laplacian(v);
        hv.iter().zip(v.iter().zip(&curvature)).map(|(a, (b, c))| a + b * c).collect()
    };
    let alpha = potential.alpha().max(1e-3);
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = apply_l(v);
        let p = dot(&mode, v) / mode_norm2;
        out.iter_mut().zip(&mode).for_each(|(o, m)| *o += p * m);
        out
    };
    let precond = |r: &[f64]| line.shifted_inverse(r, alpha);
    let b: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let psi = if fnorm == 0.0 {
        vec![0.0; grid.n]
    } else {
        gmres(apply, precond, &b, None, 1e-13, 80, 2000)
            .or_else(|e| match e {
                Error::Convergence { residual, .. } if residual < 1e-9 => {
                    gmres(apply, precond, &b, None, 1e-9, 80, 2000)
                }
                e => Err(e),
            })?
            .0
    };
    let res = apply_l(&psi);
    let residual = res
        .iter()
        .zip(rhs)
        .map(|(a, f)| (a + f).abs())
        .fold(0.0_f64, f64::max);
    if residual > 1e-6 * (1.0 + fnorm) {
        let overlap = dot(rhs, &mode) / (fnorm * mode_norm2.sqrt());
        return Err(Error::Solver(format!(
            "corrector system is resonant with the translation mode dφ/dx \
             (normalised overlap {overlap:.3e}, residual {residual:.3e})"
        )));
    }
    Ok(PsiProfile::new(grid, psi, residual))
}

/// Right-hand side `(1/(αc₀))(W''(φ) − α) + ∂_x φ` at `y = 0`.
pub fn psi_source(layer: &LayerProfile, potential: &PotentialSpec, c0: f64, alpha: f64, grid: &Grid1D) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|&x| (potential.d2w(layer.trace(x)) - alpha) / (alpha * c0) + layer.trace_slope(x))
        .collect()
}

/// Solves the corrector problem for `ψ` through its boundary trace.
pub fn solve_psi(
    layer: &LayerProfile,
    potential: &PotentialSpec,
    c0: f64,
    alpha: f64,
    grid: Grid1D,
) -> Result<PsiProfile> {
    if !(c0 > 0.0 && alpha > 0.0) {
        return Err(Error::Config(format!("need c0, alpha > 0 (got {c0}, {alpha})")));
    }
    let rhs = psi_source(layer, potential, c0, alpha, &grid);
    solve_psi_with_rhs(layer, potential, grid, &rhs)
}

/// Method-of-images Green function of the half-plane with Dirichlet data.
pub fn green_half_plane(source: (f64, f64), target: (f64, f64)) -> Result<f64> {
    let ((xs, ys), (x, y)) = (source, target);
    if !(ys > 0.0) {
        return Err(Error::Domain(format!("source must be interior, got y' = {ys}")));
    }
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("target must have y >= 0, got {y}")));
    }
    if xs == x && ys == y {
        return Err(Error::Singularity("source coincides with target".into()));
    }
    let dx = xs - x;
    let image = dx * dx + (ys + y) * (ys + y);
    let direct = dx * dx + (ys - y) * (ys - y);
    Ok((image.ln() - direct.ln()) / (4.0 * PI))
}

/// Smooth cutoff: 1 on `[0, R/2]`, 0 on `[R, ∞)`, joined by the
/// exponential smoothstep `1 − e^{−1/s}/(e^{−1/s} + e^{−1/(1−s)})`.
pub fn cutoff_g(y: f64, r: f64) -> f64 {
    let half = 0.5 * r;
    if y <= half {
        return 1.0;
    }
    if y >= r {
        return 0.0;
    }
    let s = (y - half) / half;
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    1.0 - a / (a + b)
}

/// `q` and its gradient at targets, from the half-plane Green function.
#[derive(Debug, Clone)]
pub struct QField {
    pub r: f64,
    pub eps: f64,
    pub b: f64,
    layer: LayerProfile,
    rule: GaussLegendre,
    cache: HashMap<(u64, u64), (f64, f64, f64)>,
}

impl QField {
    pub fn new(layer: &LayerProfile, r: f64) -> Result<Self> {
        if !(r > 2.0) {
            return Err(Error::Config(format!("cutoff support R must exceed 2, got {r}")));
        }
        Ok(Self {
            r,
            eps: f64::NAN,
            b: f64::NAN,
            layer: layer.clone(),
            rule: GaussLegendre::new(10),
            cache: HashMap::new(),
        })
    }

    /// Contribution of a Poisson-kernel column: for `∂_x φ(·, y')` equal to
    /// the Poisson kernel at height `y' + κ`, the `x'` integral of the Green
    /// function is `(1/4π)[ln(X² + (2y' + Y + κ)²) − ln(X² + (|Y − y'| + y' + κ)²)]`.
    fn column(x: f64, y: f64, yp: f64, kappa: f64) -> (f64, f64, f64) {
        let a = 2.0 * yp + y + kappa;
        let d = y - yp;
        let bb = d.abs() + yp + kappa;
        let sgn = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
        let (ra, rb) = (x * x + a * a, x * x + bb * bb);
        let k = 1.0 / (4.0 * PI);
        (
            k * (ra.ln() - rb.ln()),
            k * (2.0 * x / ra - 2.0 * x / rb),
            k * (2.0 * a / ra - 2.0 * bb * sgn / rb),
        )
    }

    fn breaks(&self, y: f64) -> Vec<f64> {
        let mut br = vec![0.0, 0.5 * self.r, self.r];
        if y > 0.0 && y < self.r {
            br.push(y);
        }
        br.sort_by(f64::total_cmp);
        br.dedup();
        br
    }

    /// `(q, ∂_x q, ∂_y q)` at `(x, y)` (computed, not cached).
    pub fn compute(&self, x: f64, y: f64) -> (f64, f64, f64) {
        if y == 0.0 {
            // q vanishes identically on the boundary; only ∂_y survives.
            let (_, _, qy) = self.compute_inner(x, 0.0);
            return (0.0, 0.0, qy);
        }
        self.compute_inner(x, y)
    }

    fn compute_inner(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let br = self.breaks(y);
        let max_panel = (0.25 * (1.0 + x.abs().min(y.max(1.0)))).min(1.0);
        match &self.layer {
            LayerProfile::ExplicitArctan => self.integrate_columns(x, y, 1.0, &br, max_panel),
            LayerProfile::Tabulated(_) => {
                let kappa = self.layer.tail_constant();
                let (q0, qx0, qy0) = self.integrate_columns(x, y, kappa, &br, max_panel);
                let (q1, qx1, qy1) = self.remainder_columns(x, y, kappa, &br, max_panel);
                (q0 + q1, qx0 + qx1, qy0 + qy1)
            }
        }
    }

    fn integrate_columns(&self, x: f64, y: f64, kappa: f64, br: &[f64], max_panel: f64) -> (f64, f64, f64) {
        let mut acc = [0.0; 3];
        for (i, out) in acc.iter_mut().enumerate() {
            *out = self.rule.composite(
                |yp| {
                    let c = Self::column(x, y, yp, kappa);
                    let g = cutoff_g(yp, self.r);
                    g * [c.0, c.1, c.2][i]
                },
                br,
                max_panel,
            );
        }
        (acc[0], acc[1], acc[2])
    }

    /// Contribution of the non-arctan part of a tabulated layer's trace
    /// slope, `∂_x φ(s, 0) − P_κ(s)`, convolved column by column.
    fn remainder_columns(&self, x: f64, y: f64, kappa: f64, br: &[f64], max_panel: f64) -> (f64, f64, f64) {
        let layer = &self.layer;
        let slope_rem = |s: f64| layer.trace_slope(s) - kappa / (PI * (s * s + kappa * kappa));
        let (l, _) = match layer {
            LayerProfile::Tabulated(t) => (t.grid().half_width, ()),
            _ => (0.0, ()),
        };
        let mut acc = [0.0; 3];
        for (i, out) in acc.iter_mut().enumerate() {
            *out = self.rule.composite(
                |yp| {
                    let g = cutoff_g(yp, self.r);
                    if g == 0.0 {
                        return 0.0;
                    }
                    let f = |s: f64| {
                        let c = Self::column(x - s, y, yp, 0.0);
                        slope_rem(s) * [c.0, c.1, c.2][i]
                    };
                    g * adaptive(f, -l, l, &[x], 1e-12, 1e-9, 5000).map(|q| q.value).unwrap_or(f64::NAN)
                },
                br,
                max_panel,
            );
        }
        (acc[0], acc[1], acc[2])
    }

    /// Cached value if available, computed otherwise.
    pub fn value_grad(&self, x: f64, y: f64) -> (f64, f64, f64) {
        self.cache
            .get(&(x.to_bits(), y.to_bits()))
            .copied()
            .unwrap_or_else(|| self.compute(x, y))
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.value_grad(x, y).0
    }

    pub fn cached(&self) -> usize {
        self.cache.len()
    }

    /// Fills the cache for `targets` in parallel.
    pub fn precompute(&mut self, targets: &[(f64, f64)]) -> Result<()> {
        let vals: Vec<((u64, u64), (f64, f64, f64))> = targets
            .par_iter()
            .map(|&(x, y)| ((x.to_bits(), y.to_bits()), self.compute(x, y)))
            .collect();
        for (k, v) in vals {
            if !(v.0.is_finite() && v.1.is_finite() && v.2.is_finite()) {
                return Err(Error::Numerical(format!(
                    "q quadrature failed at ({}, {}): estimate {:?}",
                    f64::from_bits(k.0),
                    f64::from_bits(k.1),
                    v
                )));
            }
            self.cache.insert(k, v);
        }
        Ok(())
    }

    /// `−Δ_h q` with the 5-point stencil, minus the source `∂_x φ · g`.
    pub fn laplacian_residual(&self, x: f64, y: f64, h: f64) -> f64 {
        let c = self.compute(x, y).0;
        let lap = (self.compute(x + h, y).0 + self.compute(x - h, y).0 + self.compute(x, y + h).0
            + self.compute(x, y - h).0
            - 4.0 * c)
            / (h * h);
        -lap - self.layer.grad(x, y).0 * cutoff_g(y, self.r)
    }
}

/// Builds `q` with `R = 2ε^{−b}` and caches it at `targets`.
pub fn build_q(layer: &LayerProfile, eps: f64, b: f64, targets: &[(f64, f64)]) -> Result<QField> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!("b must lie in (0, 1), got {b}")));
    }
    let r = 2.0 * eps.powf(-b);
    let mut q = QField::new(layer, r)?;
    q.eps = eps;
    q.b = b;
    for &(x, y) in targets {
        check_finite("x", x)?;
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("q targets need y >= 0, got {y}")));
        }
    }
    q.precompute(targets)?;
    Ok(q)
}

/// Sample lattice used for fitting the decay constants of `q`.
pub fn q_lattice(r: f64) -> Vec<(f64, f64)> {
    let xs = [-20.0, -5.0, -1.0, 0.0, 0.5, 2.0, 10.0, 40.0];
    let ys: Vec<f64> = [0.0, 0.1, 0.5, 1.0]
        .into_iter()
        .chain([0.25, 0.5, 0.9, 1.2, 2.0, 3.0, 4.0, 8.0].into_iter().map(|f| f * r))
        .collect();
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
}

/// Fits the constants of the decay estimates for `q` and `ψ`.
pub fn verify_corrector_bounds(q: &QField, psi: &PsiProfile) -> Result<Report> {
    let r = q.r;
    let ln_r = r.ln();
    let pts = q_lattice(r);
    let fd = 1e-4;
    let vals: Vec<(f64, f64, f64, f64, f64)> = pts
        .par_iter()
        .map(|&(x, y)| {
            let v = q.value(x, y);
            let gx = (q.compute(x + fd, y).0 - q.compute(x - fd, y).0) / (2.0 * fd);
            let gy = if y >= fd {
                (q.compute(x, y + fd).0 - q.compute(x, y - fd).0) / (2.0 * fd)
            } else {
                (-3.0 * q.compute(x, y).0 + 4.0 * q.compute(x, y + fd).0 - q.compute(x, y + 2.0 * fd).0) / (2.0 * fd)
            };
            (x, y, v, gx, gy)
        })
        .collect();
    let mut report = Report::new(format!("corrector_bounds R={r:.4}"));
    let limit = 100.0;
    let min_q = vals.iter().map(|v| v.2).fold(f64::INFINITY, f64::min);
    report.push_ge("q_nonnegative", min_q, -1e-10);
    let c_q = vals.iter().map(|v| v.2 / (r * ln_r)).fold(0.0, f64::max);
    report.push_le("q_le_C_R_lnR", c_q, limit);
    let c_grad = vals.iter().map(|v| v.3.abs().max(v.4.abs()) / ln_r).fold(0.0, f64::max);
    report.push_le("grad_q_le_C_lnR", c_grad, limit);
    let far: Vec<_> = vals.iter().filter(|v| v.1 >= 2.0 * r).collect();
    let c_far = far.iter().map(|v| v.2 * v.1 / (r * r)).fold(0.0, f64::max);
    report.push_le("q_le_C_R2_over_y", c_far, limit);
    let c_far_grad = far.iter().map(|v| v.3.abs().max(v.4.abs()) * v.1 / r).fold(0.0, f64::max);
    report.push_le("grad_q_le_C_R_over_y", c_far_grad, limit);

    let c = psi.tail_coefficient;
    let xs: Vec<f64> = (0..=60).map(|k| 10.0 * 10f64.powf(k as f64 / 60.0)).collect();
    let c_tail = xs
        .iter()
        .flat_map(|&x| [x, -x])
        .map(|x| x * x * (psi.trace_at(x) - c / x).abs())
        .fold(0.0, f64::max);
    report.push_le("psi_tail_x2", c_tail, limit);
    let c_slope = xs
        .iter()
        .flat_map(|&x| [x, -x])
        .map(|x| x * x * psi.trace_slope_at(x).abs())
        .fold(0.0, f64::max);
    report.push_le("psi_slope_x2", c_slope, limit);
    let c_y = [1.0, 2.0, 5.0, 10.0, 30.0, 100.0]
        .iter()
        .flat_map(|&y| [-20.0, -2.0, 0.0, 1.0, 7.0].map(|x| (x, y)))
        .map(|(x, y)| {
            let (v, vx, _) = psi.value_grad(x, y);
            y * v.abs().max(vx.abs())
        })
        .fold(0.0, f64::max);
    report.push_le("psi_le_C_over_y", c_y, limit);
    let c_x = [1.5, 3.0, 10.0, 50.0]
        .iter()
        .flat_map(|&x| [0.0, 0.5, 2.0, 5.0].map(|y| (x, y)))
        .map(|(x, y)| x * psi.value(x, y).abs())
        .fold(0.0, f64::max);
    report.push_le("psi_le_C_over_x", c_x, limit);
    report.push_le("psi_residual", psi.residual, 1e-6);
    Ok(report)
}

/// Integral of `G(·, Z) f` over a disc containing the support of `f`, in
/// polar coordinates around the target so that the logarithmic
/// singularity is integrated exactly by the radial substitution `r = s²`.
pub fn green_potential_polar<F: Fn(f64, f64) -> f64 + Sync>(
    f: F,
    center: (f64, f64),
    radius: f64,
    target: (f64, f64),
    n_theta: usize,
    n_radial: usize,
) -> f64 {
    let rule = GaussLegendre::new(n_radial);
    let (cx, cy) = center;
    let (tx, ty) = target;
    let dtheta = 2.0 * PI / n_theta as f64;
    (0..n_theta)
        .into_par_iter()
        .map(|k| {
            let th = (k as f64 + 0.5) * dtheta;
            let (s, c) = th.sin_cos();
            // Exit distance of the ray from the support disc.
            let (ox, oy) = (tx - cx, ty - cy);
            let bq = ox * c + oy * s;
            let cq = ox * ox + oy * oy - radius * radius;
            let disc = bq * bq - cq;
            if disc <= 0.0 {
                return 0.0;
            }
            let r_out = -bq + disc.sqrt();
            if r_out <= 0.0 {
                return 0.0;
            }
            let sm = r_out.sqrt();
            let radial = rule.composite(
                |sv| {
                    let r = sv * sv;
                    let (x, y) = (tx + r * c, ty + r * s);
                    if y <= 0.0 {
                        return 0.0;
                    }
                    let g = green_half_plane((x, y), target).unwrap_or(0.0);
                    g * f(x, y) * r * 2.0 * sv
                },
                &[0.0, sm],
                sm / 16.0,
            );
            radial * dtheta
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_function_examples() {
        assert_eq!(green_half_plane((0.0, 1.0), (3.0, 0.0)).unwrap(), 0.0);
        let a = green_half_plane((0.0, 1.0), (1.0, 2.0)).unwrap();
        let b = green_half_plane((1.0, 2.0), (0.0, 1.0)).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(green_half_plane((0.0, 1.0), (0.0, 2.0)).unwrap() > 0.0);
        assert!(matches!(green_half_plane((0.0, 1.0), (0.0, 1.0)), Err(Error::Singularity(_))));
    }

    #[test]
    fn cutoff_examples() {
        let r = 6.0;
        assert_eq!(cutoff_g(0.6, r), 1.0);
        assert_eq!(cutoff_g(r, r), 0.0);
        let mut prev = 1.0;
        for k in 0..=200 {
            let g = cutoff_g(3.0 + 3.0 * k as f64 / 200.0, r);
            assert!(g <= prev && (0.0..=1.0).contains(&g));
            prev = g;
        }
    }

    #[test]
    fn q_basic_properties() {
        let layer = LayerProfile::explicit();
        let q = build_q(&layer, 0.1, 0.5, &[(0.0, 1.0), (2.0, 0.0)]).unwrap();
        assert!((q.r - 2.0 * 0.1_f64.powf(-0.5)).abs() < 1e-12);
        assert_eq!(q.cached(), 2);
        assert_eq!(q.value(2.0, 0.0), 0.0);
        assert!(q.value(0.0, 1.0) > 0.0);
        // O(h²) residual of the discrete Laplacian.
        let r1 = q.laplacian_residual(0.3, 1.1, 0.02).abs();
        let r2 = q.laplacian_residual(0.3, 1.1, 0.01).abs();
        assert!(r1 < 1e-3 && r2 < r1 / 2.5, "{r1} {r2}");
        // Analytic gradient against finite differences.
        let (_, qx, qy) = q.compute(0.7, 2.3);
        let h = 1e-5;
        let fx = (q.compute(0.7 + h, 2.3).0 - q.compute(0.7 - h, 2.3).0) / (2.0 * h);
        let fy = (q.compute(0.7, 2.3 + h).0 - q.compute(0.7, 2.3 - h).0) / (2.0 * h);
        assert!((qx - fx).abs() < 1e-7 && (qy - fy).abs() < 1e-7);
    }

    #[test]
    fn q_matches_direct_green_quadrature() {
        // Independent route: 2-D quadrature of G · ∂_x φ · g without the
        // closed-form x' integral.
        let layer = LayerProfile::explicit();
        let q = QField::new(&layer, 3.0).unwrap();
        let (x, y) = (0.4, 0.8);
        let inner = |yp: f64| {
            let f = |xp: f64| {
                let g = green_half_plane((xp, yp), (x, y)).unwrap_or(0.0);
                g * layer.grad(xp, yp).0
            };
            crate::quadrature::adaptive_real_line(f, x, 1.0, &[x], 1e-12, 1e-10).unwrap().value
        };
        let direct = adaptive(
            |yp| if yp <= 0.0 { 0.0 } else { inner(yp) * cutoff_g(yp, 3.0) },
            0.0,
            3.0,
            &[y, 1.5],
            1e-9,
            1e-9,
            2000,
        )
        .unwrap()
        .value;
        assert!((direct - q.compute(x, y).0).abs() < 1e-6, "{direct} {}", q.compute(x, y).0);
    }

    #[test]
    fn green_identity_with_polar_splitting() {
        let (cx, cy, rad) = (0.0, 2.0, 1.0);
        let bump = |x: f64, y: f64| {
            let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (rad * rad);
            if r2 >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - r2)).exp()
            }
        };
        // −Δ of the bump, analytically: with u = 1 − r², bump = e^{−1/u}.
        let neg_lap = |x: f64, y: f64| {
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            if r2 >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - r2;
            let e = (-1.0 / u).exp();
            // f(r²) with f(s) = exp(−1/(1−s)); Δ = 4 s f'' + 4 f'.
            let f1 = -e / (u * u);
            let f2 = e * (1.0 / u.powi(4) - 2.0 / u.powi(3));
            -(4.0 * r2 * f2 + 4.0 * f1)
        };
        for &t in &[(0.3, 2.2), (-0.5, 1.6)] {
            let v = green_potential_polar(neg_lap, (cx, cy), rad, t, 256, 24);
            assert!((v - bump(t.0, t.1)).abs() < 1e-4, "{v} {}", bump(t.0, t.1));
        }
    }

    #[test]
    fn psi_vanishes_for_sine_and_is_linear() {
        let layer = LayerProfile::explicit();
        let w = PotentialSpec::sinusoidal();
        let grid = Grid1D::new(1024.0, 32768);
        let psi = solve_psi(&layer, &w, 2.0 * PI, 1.0, grid).unwrap();
        assert!(psi.residual <= 1e-6);
        assert!(psi.trace_samples().iter().all(|v| v.abs() < 1e-8));
        // Generic odd right-hand side, orthogonal to the even mode.
        let f: Vec<f64> = grid.nodes().iter().map(|&x| x / (1.0 + x * x).powi(2)).collect();
        let p1 = solve_psi_with_rhs(&layer, &w, grid, &f).unwrap();
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let p2 = solve_psi_with_rhs(&layer, &w, grid, &f2).unwrap();
        let scale = p1.trace_samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(scale > 1e-3);
        for (a, b) in p1.trace_samples().iter().zip(p2.trace_samples()) {
            assert!((b - 2.0 * a).abs() < 1e-10 * scale.max(1.0));
        }
        assert!(p1.residual <= 1e-6);
        assert!(psi_at(&p1, 0.0, -1.0).is_err());
        // Extension agrees with direct Poisson quadrature of the trace.
        for &(x, y) in &[(0.5, 0.5), (-3.0, 4.0), (2.0, 60.0)] {
            let direct = crate::layer::poisson_extend(|s| p1.trace_at(s), x, y).unwrap();
            assert!((direct - p1.value(x, y)).abs() < 1e-6, "({x},{y}) {direct} {}", p1.value(x, y));
        }
        // Harmonicity of the extension.
        let h = 0.05;
        let (x, y) = (0.7, 1.3);
        let lap = (p1.value(x + h, y) + p1.value(x - h, y) + p1.value(x, y + h) + p1.value(x, y - h)
            - 4.0 * p1.value(x, y))
            / (h * h);
        assert!(lap.abs() < 1e-4, "{lap}");
    }

    #[test]
    fn resonant_source_is_rejected() {
        let layer = LayerProfile::explicit();
        let w = PotentialSpec::sinusoidal();
        let grid = Grid1D::new(512.0, 4096);
        let f: Vec<f64> = grid.nodes().iter().map(|&x| layer.trace_slope(x)).collect();
        assert!(matches!(solve_psi_with_rhs(&layer, &w, grid, &f), Err(Error::Solver(_))));
    }

    #[test]
    fn corrector_bounds_fit() {
        let layer = LayerProfile::explicit();
        let w = PotentialSpec::sinusoidal();
        let psi = solve_psi(&layer, &w, 2.0 * PI, 1.0, Grid1D::new(2048.0, 16384)).unwrap();
        let q = build_q(&layer, 0.1, 0.5, &q_lattice(2.0 * 0.1_f64.powf(-0.5))).unwrap();
        let rep = verify_corrector_bounds(&q, &psi).unwrap();
        assert!(rep.all_passed(), "{rep}");
    }
}
