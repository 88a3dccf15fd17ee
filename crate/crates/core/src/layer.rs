//! The stationary transition layer `φ`: harmonic in the half-plane, with the
//! nonlinear Neumann condition `∂_y φ = W'(φ)` on `y = 0`, increasing in `x`
//! from 0 to 1 and centred so that `φ(0, 0) = 1/2`.

use crate::error::{check_finite, Error, Result};
use crate::linalg::gmres;
use crate::nonlocal::{hermite_interpolate, hermite_slope, ArctanReference, Grid1D, SpectralLine};
use crate::potential::{PotentialKind, PotentialSpec};
use crate::quadrature::{adaptive, adaptive_real_line};
use crate::report::Report;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    ExplicitArctan,
    Tabulated,
}

/// Trace of a numerically solved layer, stored as an arctan reference with
/// the correct `1/(απx)` tails plus a grid remainder.
#[derive(Debug, Clone)]
pub struct TabulatedLayer {
    grid: Grid1D,
    reference: ArctanReference,
    remainder: Vec<f64>,
    remainder_slope: Vec<f64>,
    alpha: f64,
    c0: f64,
}

impl TabulatedLayer {
    /// Rebuilds a tabulated layer from its trace samples on `grid`.
    pub fn from_trace(grid: Grid1D, trace: &[f64], alpha: f64) -> Result<Self> {
        if trace.len() != grid.n {
            return Err(Error::Format(format!(
                "trace has {} samples, grid has {}",
                trace.len(),
                grid.n
            )));
        }
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        let reference = ArctanReference {
            centers: vec![0.0],
            kappa: 1.0 / alpha,
            scale: 1.0,
        };
        let remainder: Vec<f64> = grid
            .nodes()
            .iter()
            .zip(trace)
            .map(|(&x, &t)| t - reference.value(x))
            .collect();
        Ok(Self::from_parts(grid, reference, remainder, alpha))
    }

    fn from_parts(grid: Grid1D, reference: ArctanReference, remainder: Vec<f64>, alpha: f64) -> Self {
        let line = SpectralLine::new(grid);
        let remainder_slope = line.derivative(&remainder);
        let mut layer = Self {
            grid,
            reference,
            remainder,
            remainder_slope,
            alpha,
            c0: f64::NAN,
        };
        layer.c0 = layer.integrate_c0();
        layer
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Trace values at the grid nodes.
    pub fn trace_samples(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .zip(&self.remainder)
            .map(|(&x, &v)| self.reference.value(x) + v)
            .collect()
    }

    fn trace(&self, x: f64) -> f64 {
        let v = hermite_interpolate(&self.grid, &self.remainder, &self.remainder_slope, x).unwrap_or(0.0);
        self.reference.value(x) + v
    }

    fn trace_slope(&self, x: f64) -> f64 {
        let v = hermite_slope(&self.grid, &self.remainder, &self.remainder_slope, x).unwrap_or(0.0);
        self.reference.derivative(x) + v
    }

    fn integrate_c0(&self) -> f64 {
        let h = self.grid.spacing();
        let sum: f64 = self
            .grid
            .nodes()
            .iter()
            .zip(&self.remainder_slope)
            .map(|(&x, &dv)| {
                let d = self.reference.derivative(x) + dv;
                d * d
            })
            .sum();
        let big_x = self.grid.half_width;
        let tail = 2.0 / (3.0 * self.alpha * self.alpha * PI * PI * big_x.powi(3));
        1.0 / (sum * h + tail)
    }

    /// Poisson extension of the grid remainder and its kernel derivatives.
    fn remainder_extension(&self, x: f64, y: f64, which: Component) -> f64 {
        let l = self.grid.half_width;
        let f = |s: f64| -> f64 {
            let d = x - s;
            let r2 = d * d + y * y;
            match which {
                Component::Value => {
                    hermite_interpolate(&self.grid, &self.remainder, &self.remainder_slope, s).unwrap_or(0.0)
                        * y
                        / r2
                }
                Component::Dx => {
                    hermite_slope(&self.grid, &self.remainder, &self.remainder_slope, s).unwrap_or(0.0) * y / r2
                }
                Component::Dy => {
                    hermite_interpolate(&self.grid, &self.remainder, &self.remainder_slope, s).unwrap_or(0.0)
                        * (d * d - y * y)
                        / (r2 * r2)
                }
            }
        };
        let bps = [x - 10.0 * y, x - y, x, x + y, x + 10.0 * y];
        adaptive(f, -l, l, &bps, 1e-13, 1e-10, 20_000)
            .map(|q| q.value / PI)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy)]
enum Component {
    Value,
    Dx,
    Dy,
}

/// The layer solution, either the closed form for the sinusoidal potential
/// or a tabulated numerical solution for a general potential.
#[derive(Debug, Clone)]
pub enum LayerProfile {
    ExplicitArctan,
    Tabulated(Box<TabulatedLayer>),
}

/// `Φ(x, y) = (1/π) arctan(x / (y + 1)) + 1/2`.
pub fn phi_explicit(x: f64, y: f64) -> Result<f64> {
    check_finite("x", x)?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y must be >= 0, got {y}")));
    }
    Ok((x / (y + 1.0)).atan() / PI + 0.5)
}

impl LayerProfile {
    pub fn explicit() -> Self {
        Self::ExplicitArctan
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Self::ExplicitArctan => LayerKind::ExplicitArctan,
            Self::Tabulated(_) => LayerKind::Tabulated,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Self::ExplicitArctan => 1.0,
            Self::Tabulated(t) => t.alpha,
        }
    }

    pub fn c0(&self) -> f64 {
        match self {
            Self::ExplicitArctan => 2.0 * PI,
            Self::Tabulated(t) => t.c0,
        }
    }

    /// Coefficient of the `1/(απx)` tail, i.e. `1/α`.
    pub fn tail_constant(&self) -> f64 {
        1.0 / self.alpha()
    }

    /// `φ(x, 0)`.
    #[inline]
    pub fn trace(&self, x: f64) -> f64 {
        match self {
            Self::ExplicitArctan => x.atan() / PI + 0.5,
            Self::Tabulated(t) => t.trace(x),
        }
    }

    /// `∂_x φ(x, 0)`.
    #[inline]
    pub fn trace_slope(&self, x: f64) -> f64 {
        match self {
            Self::ExplicitArctan => 1.0 / (PI * (1.0 + x * x)),
            Self::Tabulated(t) => t.trace_slope(x),
        }
    }

    /// `φ(x, y)` for `y >= 0` (unchecked).
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::ExplicitArctan => (x / (y + 1.0)).atan() / PI + 0.5,
            Self::Tabulated(t) => {
                if y == 0.0 {
                    t.trace(x)
                } else {
                    t.reference.extension(x, y) + t.remainder_extension(x, y, Component::Value)
                }
            }
        }
    }

    /// `(∂_x φ, ∂_y φ)` (unchecked).
    #[inline]
    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Self::ExplicitArctan => {
                let b = y + 1.0;
                let r2 = b * b + x * x;
                (b / (PI * r2), -x / (PI * r2))
            }
            Self::Tabulated(t) => {
                let k = t.reference.kappa;
                let b = y + k;
                let r2 = b * b + x * x;
                let (rx, ry) = (b / (PI * r2), -x / (PI * r2));
                if y == 0.0 {
                    (t.trace_slope(x), f64::NAN)
                } else {
                    (
                        rx + t.remainder_extension(x, y, Component::Dx),
                        ry + t.remainder_extension(x, y, Component::Dy),
                    )
                }
            }
        }
    }

    pub fn phi(&self, x: f64, y: f64) -> Result<f64> {
        check_finite("x", x)?;
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("y must be >= 0, got {y}")));
        }
        Ok(self.value(x, y))
    }

    /// Gradient; for tabulated layers `∂_y φ(x, 0)` uses the boundary
    /// condition with the supplied potential.
    pub fn phi_gradient(&self, x: f64, y: f64, potential: &PotentialSpec) -> Result<(f64, f64)> {
        check_finite("x", x)?;
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("y must be >= 0, got {y}")));
        }
        let (gx, gy) = self.grad(x, y);
        if gy.is_nan() {
            Ok((gx, potential.dw(self.trace(x))))
        } else {
            Ok((gx, gy))
        }
    }
}

/// `c₀ = 1 / ∫ (∂_x φ(x,0))² dx` and `α = W''(0)`.
pub fn compute_constants(layer: &LayerProfile, potential: &PotentialSpec) -> Result<(f64, f64)> {
    let alpha = potential.alpha();
    let c0 = match layer {
        LayerProfile::ExplicitArctan => {
            let q = adaptive_real_line(
                |x| {
                    let d = layer.trace_slope(x);
                    d * d
                },
                0.0,
                1.0,
                &[],
                1e-15,
                1e-13,
            )?;
            1.0 / q.value
        }
        LayerProfile::Tabulated(t) => t.integrate_c0(),
    };
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::Numerical(format!("non-integrable trace derivative (c0 = {c0})")));
    }
    Ok((c0, alpha))
}

/// Poisson extension `(1/π) ∫ trace(ζ) y / ((x−ζ)² + y²) dζ`, computed in
/// the angle variable `ζ = x + y tan θ`, so bounded traces with limits at
/// ±∞ need no tail truncation.
pub fn poisson_extend<F: Fn(f64) -> f64>(trace: F, x: f64, y: f64) -> Result<f64> {
    check_finite("x", x)?;
    if !(y > 0.0) {
        return Err(Error::Domain(format!("y must be > 0, got {y}")));
    }
    let mut bad = false;
    let half = 0.5 * PI;
    let q = adaptive(
        |t| {
            let v = trace(x + y * t.tan());
            if !v.is_finite() || v.abs() > 1e12 {
                bad = true;
                0.0
            } else {
                v
            }
        },
        -half,
        half,
        &[(-x / y).atan()],
        1e-12,
        1e-12,
        4000,
    )?;
    if bad {
        return Err(Error::Domain("trace is unbounded".into()));
    }
    Ok(q.value / PI)
}

/// Checks the √ε bracketing of `φ(x/ε, y/ε)` by the shifted arctan limits
/// and fits the smallest admissible constant.
pub fn scaled_layer_bound_check(
    layer: &LayerProfile,
    eps: f64,
    points: &[(f64, f64)],
    constant: f64,
) -> Result<Report> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let s = eps.sqrt();
    let limit = |x: f64, y: f64| (0.5 * PI + (x / y).atan()) / PI;
    let mut fitted: f64 = 0.0;
    let mut gap: f64 = 0.0;
    for &(x, y) in points {
        if !(y > 0.0) {
            return Err(Error::Domain(format!("points need y > 0, got {y}")));
        }
        let v = layer.value(x / eps, y / eps);
        let lower = limit(x - s, y);
        let upper = limit(x + s, y);
        fitted = fitted.max((lower - v) / s).max((v - upper) / s);
        gap = gap.max((v - limit(x, y)).abs());
    }
    let mut r = Report::new(format!("scaled_layer_bound eps={eps}"));
    r.push_le("fitted_constant", fitted.max(0.0), constant);
    r.push("sup_gap_to_limit", true, gap, f64::NAN);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialGuess {
    /// The arctan reference with the correct tails.
    Reference,
    /// `1/2 + tanh(x / width) / 2`.
    Tanh { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSolveOptions {
    pub initial: InitialGuess,
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for LayerSolveOptions {
    fn default() -> Self {
        Self {
            initial: InitialGuess::Tanh { width: 2.0 },
            tol: 1e-10,
            max_newton: 40,
        }
    }
}

/// Outcome of [`solve_layer_general`].
#[derive(Debug, Clone)]
pub struct LayerSolve {
    pub layer: LayerProfile,
    pub residual_history: Vec<f64>,
}

/// Recentres `reference + v` so that the profile equals 1/2 at `x = 0`.
fn recenter(line: &SpectralLine, reference: &ArctanReference, v: &[f64]) -> Vec<f64> {
    let grid = *line.grid();
    let spec = line.to_spectrum(v);
    let n = grid.n as f64;
    let k = line.wavenumbers();
    let l = grid.half_width;
    // Spectral evaluation of the remainder at arbitrary x.
    let eval = |x: f64| -> (f64, f64) {
        let (mut val, mut der) = (0.0, 0.0);
        for (j, c) in spec.iter().enumerate() {
            let xi = if j == grid.n / 2 { 0.0 } else { k[j] };
            let ph = xi * (x + l);
            let (s, co) = ph.sin_cos();
            val += c.re * co - c.im * s;
            der += -xi * (c.re * s + c.im * co);
        }
        (val / n, der / n)
    };
    let mut s = 0.0;
    for _ in 0..30 {
        let (v0, d0) = eval(s);
        let f = reference.value(s) + v0 - 0.5;
        let df = reference.derivative(s) + d0;
        let step = f / df;
        s -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    if s == 0.0 {
        return v.to_vec();
    }
    let shifted = line.shift(v, s);
    grid.nodes()
        .iter()
        .zip(&shifted)
        .map(|(&x, &w)| reference.value(x + s) - reference.value(x) + w)
        .collect()
}

/// Residual `(−Δ)^{1/2}φ + W'(φ)` on the grid for `φ = reference + v`.
pub(crate) fn layer_residual(
    line: &SpectralLine,
    reference: &ArctanReference,
    potential: &PotentialSpec,
    v: &[f64],
) -> Vec<f64> {
    let hv = line.half_laplacian(v);
    line.grid()
        .nodes()
        .iter()
        .zip(v.iter().zip(&hv))
        .map(|(&x, (&vi, &hvi))| reference.half_laplacian(x) + hvi + potential.dw(reference.value(x) + vi))
        .collect()
}

/// Solves `(−Δ)^{1/2}φ₀ + W'(φ₀) = 0` for the layer trace by Newton–GMRES
/// with recentring after every update.
pub fn solve_layer_general(
    potential: &PotentialSpec,
    grid: Grid1D,
    options: LayerSolveOptions,
) -> Result<LayerSolve> {
    let alpha = potential.alpha();
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("W''(0) must be positive, got {alpha}")));
    }
    if grid.x(grid.center_index()).abs() > 1e-12 {
        return Err(Error::Config("layer grid must contain x = 0".into()));
    }
    let line = SpectralLine::new(grid);
    let reference = ArctanReference {
        centers: vec![0.0],
        kappa: 1.0 / alpha,
        scale: 1.0,
    };
    let nodes = grid.nodes();
    let mut v: Vec<f64> = match options.initial {
        InitialGuess::Reference => vec![0.0; grid.n],
        InitialGuess::Tanh { width } => nodes
            .iter()
            .map(|&x| 0.5 + 0.5 * (x / width).tanh() - reference.value(x))
            .collect(),
    };
    let sup = |r: &[f64]| r.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let mut history = Vec::new();
    for _ in 0..options.max_newton {
        let res = layer_residual(&line, &reference, potential, &v);
        let rn = sup(&res);
        history.push(rn);
        if rn <= options.tol {
            let layer = TabulatedLayer::from_parts(grid, reference, v, alpha);
            return Ok(LayerSolve {
                layer: LayerProfile::Tabulated(Box::new(layer)),
                residual_history: history,
            });
        }
        let curvature: Vec<f64> = nodes
            .iter()
            .zip(&v)
            .map(|(&x, &vi)| potential.d2w(reference.value(x) + vi))
            .collect();
        let apply = |d: &[f64]| -> Vec<f64> {
            let hd = line.half_laplacian(d);
            hd.iter().zip(d.iter().zip(&curvature)).map(|(a, (b, c))| a + b * c).collect()
        };
        let precond = |r: &[f64]| line.shifted_inverse(r, alpha);
        let rhs: Vec<f64> = res.iter().map(|a| -a).collect();
        let delta = match gmres(apply, precond, &rhs, None, 1e-6, 60, 600) {
            Ok((d, _)) => d,
            Err(Error::Convergence { .. }) => {
                // Fall back to a preconditioned gradient-type step.
                line.shifted_inverse(&rhs, alpha)
            }
            Err(e) => return Err(e),
        };
        let dmax = sup(&delta);
        let damping = if dmax > 0.25 { 0.25 / dmax } else { 1.0 };
        v.iter_mut().zip(&delta).for_each(|(a, d)| *a += damping * d);
        v = recenter(&line, &reference, &v);
    }
    let res = layer_residual(&line, &reference, potential, &v);
    let rn = sup(&res);
    history.push(rn);
    Err(Error::Convergence {
        iterations: options.max_newton,
        residual: rn,
        history,
    })
}

/// Default layer solve grid (layer units).
pub fn default_layer_grid() -> Grid1D {
    Grid1D::with_spacing(2000.0, 0.1)
}

/// Layer for the given potential: closed form for the sinusoidal case when
/// `prefer_explicit`, otherwise a general numerical solve.
pub fn layer_for(potential: &PotentialSpec, prefer_explicit: bool) -> Result<LayerProfile> {
    if prefer_explicit && potential.kind() == PotentialKind::Sinusoidal {
        Ok(LayerProfile::ExplicitArctan)
    } else {
        Ok(solve_layer_general(potential, default_layer_grid(), LayerSolveOptions::default())?.layer)
    }
}

/// Largest `x² |φ(x,0) − H(x) + 1/(απx)|` over `lo <= |x| <= hi`.
pub fn tail_constant_fit(layer: &LayerProfile, lo: f64, hi: f64, samples: usize) -> f64 {
    let a = layer.alpha();
    (0..=samples)
        .flat_map(|k| {
            let x = lo * (hi / lo).powf(k as f64 / samples as f64);
            [x, -x]
        })
        .map(|x| {
            let heav = if x > 0.0 { 1.0 } else { 0.0 };
            x * x * (layer.trace(x) - heav + 1.0 / (a * PI * x)).abs()
        })
        .fold(0.0, f64::max)
}
