//! Spectral half-Laplacian on a periodic line, with an arctan far-field
//! reference so that profiles with distinct limits at ±∞ can be handled.
//!
//! A profile is written `u = ref + v` where `ref` is a superposition of
//! arctan layers, whose half-Laplacian is known in closed form, and `v` is
//! a periodic remainder treated by FFT with the multiplier `|ξ|`.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Uniform periodic grid `x_k = -L + k h`, `k = 0..n`, `h = 2L/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub half_width: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(half_width: f64, n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "Grid1D needs an even number of points");
        Self { half_width, n }
    }

    /// Grid with spacing close to `h` covering `[-L, L)`.
    pub fn with_spacing(half_width: f64, h: f64) -> Self {
        let mut n = (2.0 * half_width / h).round() as usize;
        if n % 2 == 1 {
            n += 1;
        }
        Self::new(half_width, n.max(4))
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }

    /// Index of the node at `x = 0`.
    pub fn center_index(&self) -> usize {
        self.n / 2
    }
}

/// Superposition of arctan layers `Σ 1/2 + (1/π) arctan((x − z_i)/(s κ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArctanReference {
    pub centers: Vec<f64>,
    pub kappa: f64,
    pub scale: f64,
}

impl ArctanReference {
    pub fn value(&self, x: f64) -> f64 {
        self.centers
            .iter()
            .map(|z| 0.5 + ((x - z) / (self.scale * self.kappa)).atan() / PI)
            .sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let w = self.scale * self.kappa;
        self.centers
            .iter()
            .map(|z| {
                let d = x - z;
                w / (PI * (w * w + d * d))
            })
            .sum()
    }

    /// Exact half-Laplacian on the whole line.
    pub fn half_laplacian(&self, x: f64) -> f64 {
        let w = self.scale * self.kappa;
        self.centers
            .iter()
            .map(|z| {
                let d = x - z;
                d / (PI * (w * w + d * d))
            })
            .sum()
    }

    /// Harmonic extension into `y > 0`.
    pub fn extension(&self, x: f64, y: f64) -> f64 {
        let w = self.scale * self.kappa;
        self.centers
            .iter()
            .map(|z| 0.5 + ((x - z) / (y + w)).atan() / PI)
            .sum()
    }
}

/// FFT-backed operator on a [`Grid1D`].
#[derive(Clone)]
pub struct SpectralLine {
    grid: Grid1D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for SpectralLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralLine").field("grid", &self.grid).finish()
    }
}

impl SpectralLine {
    pub fn new(grid: Grid1D) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let n = grid.n;
        let base = PI / grid.half_width;
        let wavenumbers = (0..n)
            .map(|k| {
                if k <= n / 2 {
                    k as f64 * base
                } else {
                    (k as f64 - n as f64) * base
                }
            })
            .collect();
        Self {
            grid,
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn to_spectrum(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn from_spectrum(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.grid.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Applies the Fourier multiplier `m(ξ)` to a periodic sequence.
    pub fn multiply<F: Fn(f64) -> Complex64>(&self, v: &[f64], m: F) -> Vec<f64> {
        let mut s = self.to_spectrum(v);
        let n = self.grid.n;
        for (k, c) in s.iter_mut().enumerate() {
            let xi = self.wavenumbers[k];
            // Drop the imaginary part of odd multipliers at the Nyquist mode.
            let mk = m(xi);
            *c *= if k == n / 2 { Complex64::new(mk.re, 0.0) } else { mk };
        }
        self.from_spectrum(s)
    }

    /// `(−Δ)^{1/2} v` for periodic `v`.
    pub fn half_laplacian(&self, v: &[f64]) -> Vec<f64> {
        self.multiply(v, |xi| Complex64::new(xi.abs(), 0.0))
    }

    /// Solves `(|ξ| + c) u = f` for constant `c > 0`.
    pub fn shifted_inverse(&self, f: &[f64], c: f64) -> Vec<f64> {
        self.multiply(f, |xi| Complex64::new(1.0 / (xi.abs() + c), 0.0))
    }

    pub fn derivative(&self, v: &[f64]) -> Vec<f64> {
        self.multiply(v, |xi| Complex64::new(0.0, xi))
    }

    /// `v(x + s)` by a Fourier phase shift.
    pub fn shift(&self, v: &[f64], s: f64) -> Vec<f64> {
        self.multiply(v, |xi| Complex64::new((xi * s).cos(), (xi * s).sin()))
    }

    /// Fraction of spectral energy in the top eighth of the frequency band.
    pub fn tail_fraction(&self, v: &[f64]) -> f64 {
        let s = self.to_spectrum(v);
        let n = self.grid.n;
        let cutoff = 0.75 * (n / 2) as f64;
        let (mut top, mut total) = (0.0, 0.0);
        for (k, c) in s.iter().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { (n - k) as f64 };
            let e = c.norm_sqr();
            total += e;
            if kk >= cutoff {
                top += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            (top / total).sqrt()
        }
    }
}

/// Cubic Hermite interpolation of grid data with nodal derivatives.
pub fn hermite_interpolate(grid: &Grid1D, values: &[f64], slopes: &[f64], x: f64) -> Option<f64> {
    let h = grid.spacing();
    let s = (x + grid.half_width) / h;
    if s < 0.0 || s > (grid.n - 1) as f64 {
        return None;
    }
    let mut i = s.floor() as usize;
    if i >= grid.n - 1 {
        i = grid.n - 2;
    }
    let t = s - i as f64;
    let (p0, p1, m0, m1) = (values[i], values[i + 1], slopes[i] * h, slopes[i + 1] * h);
    let t2 = t * t;
    let t3 = t2 * t;
    Some(
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1,
    )
}

/// Derivative of [`hermite_interpolate`].
pub fn hermite_slope(grid: &Grid1D, values: &[f64], slopes: &[f64], x: f64) -> Option<f64> {
    let h = grid.spacing();
    let s = (x + grid.half_width) / h;
    if s < 0.0 || s > (grid.n - 1) as f64 {
        return None;
    }
    let mut i = s.floor() as usize;
    if i >= grid.n - 1 {
        i = grid.n - 2;
    }
    let t = s - i as f64;
    let (p0, p1, m0, m1) = (values[i], values[i + 1], slopes[i] * h, slopes[i + 1] * h);
    let t2 = t * t;
    Some(
        ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h,
    )
}
