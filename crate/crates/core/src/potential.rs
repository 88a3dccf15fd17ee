//! The 1-periodic multi-well misfit potential `W` and its derivatives.

use crate::error::{check_finite, Error, Result};
use crate::report::Report;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    Sinusoidal,
    UserTabulated,
}

/// Periodic cubic spline on a uniform grid over `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    /// Second derivatives at the nodes.
    curvature: Vec<f64>,
    h: f64,
}

impl PeriodicSpline {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(Error::Format(format!(
                "periodic spline needs at least 4 samples, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let prev = values[(i + n - 1) % n];
                let next = values[(i + 1) % n];
                6.0 * (next - 2.0 * values[i] + prev) / (h * h)
            })
            .collect();
        let curvature = solve_cyclic_tridiagonal(1.0, 4.0, 1.0, &rhs);
        Ok(Self { values, curvature, h })
    }

    fn locate(&self, u: f64) -> (usize, usize, f64) {
        let n = self.values.len();
        let s = u.rem_euclid(1.0) / self.h;
        let mut i = s.floor() as usize;
        let mut t = s - i as f64;
        if i >= n {
            i = n - 1;
            t = 1.0;
        }
        (i, (i + 1) % n, t)
    }

    pub fn value(&self, u: f64) -> f64 {
        let (i, j, t) = self.locate(u);
        let h = self.h;
        let (a, b) = (1.0 - t, t);
        a * self.values[i]
            + b * self.values[j]
            + ((a * a * a - a) * self.curvature[i] + (b * b * b - b) * self.curvature[j]) * h * h / 6.0
    }

    pub fn derivative(&self, u: f64) -> f64 {
        let (i, j, t) = self.locate(u);
        let h = self.h;
        let (a, b) = (1.0 - t, t);
        (self.values[j] - self.values[i]) / h
            + ((1.0 - 3.0 * a * a) * self.curvature[i] + (3.0 * b * b - 1.0) * self.curvature[j]) * h
                / 6.0
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        let (i, j, t) = self.locate(u);
        (1.0 - t) * self.curvature[i] + t * self.curvature[j]
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }
}

/// Solves the constant-coefficient cyclic tridiagonal system
/// `lower*x[i-1] + diag*x[i] + upper*x[i+1] = rhs[i]` (indices mod n)
/// by Sherman–Morrison.
fn solve_cyclic_tridiagonal(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - lower * upper / gamma;
    let thomas = |b: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = upper / d[0];
        x[0] = b[0] / d[0];
        for i in 1..n {
            let m = d[i] - lower * c[i - 1];
            c[i] = upper / m;
            x[i] = (b[i] - lower * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let y = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = lower;
    let z = thomas(&u);
    let vy = y[0] + upper / gamma * y[n - 1];
    let vz = z[0] + upper / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    y.iter().zip(&z).map(|(a, b)| a - factor * b).collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Sinusoidal,
    Tabulated(PeriodicSpline),
}

/// The misfit potential. The sinusoidal case is
/// `W(u) = (1 + cos(2π(u − 1/2))) / (4π²)`, whose derivative is
/// `W'(u) = −sin(2π(u − 1/2)) / (2π)` and which vanishes on the integers.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    repr: Repr,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::sinusoidal()
    }
}

impl PotentialSpec {
    pub fn sinusoidal() -> Self {
        Self {
            repr: Repr::Sinusoidal,
        }
    }

    /// Tabulated potential from uniform samples of one period starting at
    /// `u = 0` (the sample at `u = 1`, if present, must be dropped by the
    /// caller).
    pub fn tabulated(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite potential sample".into()));
        }
        Ok(Self {
            repr: Repr::Tabulated(PeriodicSpline::new(samples)?),
        })
    }

    /// Builds a tabulated potential from `(u, W)` pairs covering one period.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 5 {
            return Err(Error::Format("need at least 5 (u, W) rows".into()));
        }
        let h = pairs[1].0 - pairs[0].0;
        if h <= 0.0 {
            return Err(Error::Format("u column must be increasing".into()));
        }
        for (k, w) in pairs.windows(2).enumerate() {
            let dh = w[1].0 - w[0].0;
            if (dh - h).abs() > 1e-9_f64.max(1e-6 * h) {
                return Err(Error::Format(format!(
                    "non-uniform sampling at row {}: spacing {dh} vs {h}",
                    k + 1
                )));
            }
        }
        if pairs[0].0.abs() > 1e-12 {
            return Err(Error::Format("u column must start at 0".into()));
        }
        let last = pairs[pairs.len() - 1].0;
        let mut values: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if (last - 1.0).abs() < 1e-9 {
            values.pop();
        } else if (last + h - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!(
                "samples must cover exactly one period, last u = {last}"
            )));
        }
        Self::tabulated(values)
    }

    /// Reads a CSV file with header row and columns `u, W`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty potential file".into()))?;
        if header.split(',').next().map(str::trim).and_then(|s| s.parse::<f64>().ok()).is_some() {
            return Err(Error::Format("header row required (u, W)".into()));
        }
        let mut pairs = Vec::new();
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(Error::Format(format!("row {}: expected 2 columns", k + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", k + 2)))
            };
            pairs.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::from_pairs(&pairs)
    }

    /// Resolves the `potential` config value: `"sine"` or a CSV path.
    pub fn from_config_value(value: &str) -> Result<Self> {
        match value {
            "sine" | "sinusoidal" => Ok(Self::sinusoidal()),
            path => Self::from_csv(Path::new(path)),
        }
    }

    pub fn kind(&self) -> PotentialKind {
        match self.repr {
            Repr::Sinusoidal => PotentialKind::Sinusoidal,
            Repr::Tabulated(_) => PotentialKind::UserTabulated,
        }
    }

    pub fn period(&self) -> f64 {
        1.0
    }

    #[inline]
    pub fn w(&self, u: f64) -> f64 {
        match &self.repr {
            Repr::Sinusoidal => (1.0 + (2.0 * PI * (u - 0.5)).cos()) / (4.0 * PI * PI),
            Repr::Tabulated(s) => s.value(u),
        }
    }

    #[inline]
    pub fn dw(&self, u: f64) -> f64 {
        match &self.repr {
            Repr::Sinusoidal => -(2.0 * PI * (u - 0.5)).sin() / (2.0 * PI),
            Repr::Tabulated(s) => s.derivative(u),
        }
    }

    #[inline]
    pub fn d2w(&self, u: f64) -> f64 {
        match &self.repr {
            Repr::Sinusoidal => -(2.0 * PI * (u - 0.5)).cos(),
            Repr::Tabulated(s) => s.second_derivative(u),
        }
    }

    pub fn w_value(&self, u: f64) -> Result<f64> {
        check_finite("u", u)?;
        Ok(self.w(u))
    }

    pub fn w_prime(&self, u: f64) -> Result<f64> {
        check_finite("u", u)?;
        Ok(self.dw(u))
    }

    pub fn w_double_prime(&self, u: f64) -> Result<f64> {
        check_finite("u", u)?;
        Ok(self.d2w(u))
    }

    /// `α = W''(0)`.
    pub fn alpha(&self) -> f64 {
        self.d2w(0.0)
    }

    /// Upper bound for `|W''|`, used by the stabilised time steppers.
    pub fn curvature_bound(&self) -> f64 {
        match &self.repr {
            Repr::Sinusoidal => 1.0,
            Repr::Tabulated(_) => (0..2048)
                .map(|k| self.d2w(k as f64 / 2048.0).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Checks each defining property of an admissible potential on `samples`
/// points per period.
pub fn validate_potential(spec: &PotentialSpec, samples: usize) -> Result<Report> {
    if samples < 100 {
        return Err(Error::Config(format!("samples must be >= 100, got {samples}")));
    }
    let periodic_tol = match spec.kind() {
        PotentialKind::Sinusoidal => 1e-12,
        PotentialKind::UserTabulated => 1e-8,
    };
    let mut report = Report::new("potential");
    let grid: Vec<f64> = (0..=4 * samples)
        .map(|k| -2.0 + 4.0 * k as f64 / (4 * samples) as f64)
        .collect();

    let periodic = grid
        .iter()
        .map(|&u| (spec.w(u + 1.0) - spec.w(u)).abs())
        .fold(0.0, f64::max);
    report.push_le("periodicity", periodic, periodic_tol);

    let zero = (-2..=2)
        .map(|k| spec.w(k as f64).abs())
        .fold(0.0, f64::max);
    report.push_le("zero_on_integers", zero, periodic_tol);

    let positivity = (1..samples)
        .map(|k| spec.w(k as f64 / samples as f64))
        .fold(f64::INFINITY, f64::min);
    report.push(
        "positive_off_integers",
        positivity > 0.0,
        positivity,
        0.0,
    );

    let alpha = spec.alpha();
    report.push("convex_at_zero", alpha > 0.0, alpha, 0.0);

    // C² certificate: analytic derivatives agree with centred differences.
    let h = 1e-4;
    let fd1 = (0..samples)
        .map(|k| {
            let u = k as f64 / samples as f64;
            (spec.dw(u) - (spec.w(u + h) - spec.w(u - h)) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max);
    let fd2 = (0..samples)
        .map(|k| {
            let u = k as f64 / samples as f64;
            (spec.d2w(u) - (spec.dw(u + h) - spec.dw(u - h)) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max);
    let scale = spec.d2w(0.0).abs().max(1e-3);
    report.push_le("derivative_consistency", fd1, 1e-6 * scale.max(1.0));
    // Spline W'' is only piecewise linear; its FD error is O(h) at knots.
    report.push_le("second_derivative_consistency", fd2, 1e-3 * scale.max(1.0));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_samples(n: usize) -> Vec<f64> {
        let s = PotentialSpec::sinusoidal();
        (0..n).map(|k| s.w(k as f64 / n as f64)).collect()
    }

    #[test]
    fn sinusoidal_values() {
        let w = PotentialSpec::sinusoidal();
        assert_eq!(w.w_value(0.0).unwrap(), 0.0);
        assert!((w.w(0.5) - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!((w.w(0.3) - w.w(1.3)).abs() < 1e-15);
        assert!(w.dw(0.0).abs() < 1e-16);
        assert!((w.dw(0.25) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(w.dw(0.5).abs() < 1e-16);
        assert!((w.d2w(0.0) - 1.0).abs() < 1e-15);
        assert!((w.d2w(0.5) + 1.0).abs() < 1e-15);
        assert!((w.d2w(1.3) - w.d2w(0.3)).abs() < 1e-12);
    }

    #[test]
    fn w_half_matches_quadrature_of_derivative() {
        let w = PotentialSpec::sinusoidal();
        let q = crate::quadrature::GaussLegendre::new(20).integrate(|u| w.dw(u), 0.0, 0.5);
        assert!((q - 0.050_660_591_821_168_89).abs() < 1e-14);
        assert!((w.w(0.5) - q).abs() < 1e-14);
    }

    #[test]
    fn second_derivative_matches_fd() {
        let w = PotentialSpec::sinusoidal();
        let h = 1e-5;
        for k in 0..50 {
            let u = -1.0 + k as f64 * 0.04;
            let fd = (w.dw(u + h) - w.dw(u - h)) / (2.0 * h);
            assert!((fd - w.d2w(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn nan_is_domain_error() {
        let w = PotentialSpec::sinusoidal();
        assert!(matches!(w.w_value(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(w.w_prime(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(w.w_double_prime(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn sinusoidal_validates() {
        let r = validate_potential(&PotentialSpec::sinusoidal(), 200).unwrap();
        assert!(r.all_passed(), "{r}");
        assert!(validate_potential(&PotentialSpec::sinusoidal(), 50).is_err());
    }

    #[test]
    fn tabulated_sine_validates_and_is_close() {
        let spec = PotentialSpec::tabulated(sine_samples(512)).unwrap();
        let r = validate_potential(&spec, 400).unwrap();
        assert!(r.all_passed(), "{r}");
        let exact = PotentialSpec::sinusoidal();
        for k in 0..100 {
            let u = k as f64 * 0.0123;
            assert!((spec.w(u) - exact.w(u)).abs() < 1e-9);
            assert!((spec.dw(u) - exact.dw(u)).abs() < 1e-6);
            assert!((spec.d2w(u) - exact.d2w(u)).abs() < 1e-3);
        }
    }

    #[test]
    fn injected_zero_breaks_positivity() {
        let mut s = sine_samples(200);
        s[100] = 0.0;
        let spec = PotentialSpec::tabulated(s).unwrap();
        let r = validate_potential(&spec, 200).unwrap();
        assert!(!r.get("positive_off_integers").unwrap().passed);
    }

    #[test]
    fn injected_concavity_breaks_convexity() {
        // Locally W ≈ -u²/2 around the integers.
        let n = 200;
        let samples: Vec<f64> = (0..n)
            .map(|k| {
                let u = k as f64 / n as f64;
                let s = (PI * u).sin();
                -0.5 * s * s / (PI * PI)
            })
            .collect();
        let spec = PotentialSpec::tabulated(samples).unwrap();
        assert!((spec.alpha() + 1.0).abs() < 1e-3);
        let r = validate_potential(&spec, 200).unwrap();
        assert!(!r.get("convex_at_zero").unwrap().passed);
    }

    #[test]
    fn csv_parsing() {
        let mut text = String::from("u,W\n");
        for k in 0..=100 {
            let u = k as f64 / 100.0;
            text.push_str(&format!("{u},{}\n", PotentialSpec::sinusoidal().w(u)));
        }
        let spec = PotentialSpec::from_csv_str(&text).unwrap();
        assert_eq!(spec.kind(), PotentialKind::UserTabulated);
        assert!((spec.w(0.5) - 1.0 / (2.0 * PI * PI)).abs() < 1e-6);

        let no_header = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(PotentialSpec::from_csv_str(&no_header), Err(Error::Format(_))));

        let skewed = "u,W\n0,0\n0.1,1\n0.25,1\n0.3,1\n0.4,1\n0.5,1\n";
        assert!(matches!(PotentialSpec::from_csv_str(skewed), Err(Error::Format(_))));
    }

    #[test]
    fn grid_invariants() {
        let w = PotentialSpec::sinusoidal();
        for k in 0..=1000 {
            let u = -2.0 + 4.0 * k as f64 / 1000.0;
            assert!((w.w(u + 1.0) - w.w(u)).abs() <= 1e-12);
            let h = 1e-4;
            let fd = (w.w(u + h) - w.w(u - h)) / (2.0 * h);
            // |W'''| <= 2π, so the centred difference error is at most 2π h²/6.
            assert!((w.dw(u) - fd).abs() <= 2.0 * PI / 6.0 * h * h + 1e-12);
        }
        let min = (0..=900)
            .map(|k| w.w(0.05 + 0.9 * k as f64 / 900.0))
            .fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
    }
}
