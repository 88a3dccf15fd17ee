//! The repulsive particle system `ż_i = (c₀/π)(Σ_{j≠i} 1/(z_i − z_j) + s)`
//! and its δ-perturbed variants.

use crate::error::{check_finite, Error, Result};
use crate::report::Report;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Minimal admissible gap between consecutive particles.
pub const COLLISION_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Orientation {
    /// Forcing `−δ`, initial shift `−δ`.
    Super,
    #[default]
    None,
    /// Forcing `+δ`, initial shift `+δ`.
    Sub,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Self::Super => -1.0,
            Self::None => 0.0,
            Self::Sub => 1.0,
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "super" => Ok(Self::Super),
            "none" => Ok(Self::None),
            "sub" => Ok(Self::Sub),
            other => Err(Error::Config(format!("unknown orientation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub positions: Vec<f64>,
    pub time: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Config("at least one particle is required".into()));
        }
        for &z in &positions {
            check_finite("position", z)?;
        }
        if positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("positions must be strictly increasing".into()));
        }
        Ok(Self { positions, time: 0.0 })
    }
}

fn min_gap(z: &[f64]) -> f64 {
    z.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Velocities `(c₀/π)(Σ_{j≠i} 1/(z_i − z_j) + s)` with `s = ∓δ` per
/// orientation.
pub fn force(positions: &[f64], c0: f64, delta: f64, orientation: Orientation) -> Result<Vec<f64>> {
    for (i, &a) in positions.iter().enumerate() {
        for &b in &positions[i + 1..] {
            if a == b {
                return Err(Error::Singularity(format!("coincident particles at {a}")));
            }
        }
    }
    let mut v = vec![0.0; positions.len()];
    rhs(positions, c0, orientation.sign() * delta, &mut v);
    Ok(v)
}

fn rhs(z: &[f64], c0: f64, s: f64, out: &mut [f64]) {
    let k = c0 / PI;
    for i in 0..z.len() {
        let mut acc = s;
        for j in 0..z.len() {
            if j != i {
                acc += 1.0 / (z[i] - z[j]);
            }
        }
        out[i] = k * acc;
    }
}

/// Time derivative of the velocities along the flow:
/// `d/dt v_i = −(c₀/π) Σ_{j≠i} (v_i − v_j)/(z_i − z_j)²`.
fn rhs_rate(z: &[f64], v: &[f64], c0: f64) -> Vec<f64> {
    let k = c0 / PI;
    (0..z.len())
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..z.len() {
                if j != i {
                    let d = z[i] - z[j];
                    acc -= (v[i] - v[j]) / (d * d);
                }
            }
            k * acc
        })
        .collect()
}

/// Accepted step of the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub delta: f64,
    pub orientation: Orientation,
    pub c0: f64,
}

impl ParticleTrajectory {
    pub fn n(&self) -> usize {
        self.samples[0].positions.len()
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map(|s| s.time).unwrap_or(0.0)
    }

    fn forcing(&self) -> f64 {
        self.orientation.sign() * self.delta
    }

    fn check_time(&self, t: f64) -> Result<usize> {
        let t_end = self.t_end();
        if !(t >= 0.0 && t <= t_end * (1.0 + 1e-12) + 1e-14) {
            return Err(Error::Domain(format!("t = {t} outside trajectory span [0, {t_end}]")));
        }
        let k = self.samples.partition_point(|s| s.time <= t);
        Ok(k.clamp(1, self.samples.len().max(2) - 1))
    }

    /// Positions at arbitrary `t` by cubic Hermite interpolation.
    pub fn positions_at(&self, t: f64) -> Result<Vec<f64>> {
        if self.samples.len() == 1 {
            return Ok(self.samples[0].positions.clone());
        }
        let k = self.check_time(t)?;
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let h = b.time - a.time;
        let s = ((t - a.time) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok((0..a.positions.len())
            .map(|i| {
                h00 * a.positions[i] + h10 * h * a.velocities[i] + h01 * b.positions[i] + h11 * h * b.velocities[i]
            })
            .collect())
    }

    /// `c_i(t)`, the right-hand side at the interpolated positions.
    pub fn velocities_at(&self, t: f64) -> Result<Vec<f64>> {
        let z = self.positions_at(t)?;
        let mut v = vec![0.0; z.len()];
        rhs(&z, self.c0, self.forcing(), &mut v);
        Ok(v)
    }

    /// `(z(t), c(t), ċ(t))`.
    pub fn state_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let z = self.positions_at(t)?;
        let mut v = vec![0.0; z.len()];
        rhs(&z, self.c0, self.forcing(), &mut v);
        let dv = rhs_rate(&z, &v, self.c0);
        Ok((z, v, dv))
    }

    /// Samples on `m + 1` uniform times in `[0, T]`.
    pub fn resample(&self, m: usize) -> Result<Vec<TrajectorySample>> {
        let t_end = self.t_end();
        (0..=m)
            .map(|k| {
                let t = if k == m { t_end } else { t_end * k as f64 / m as f64 };
                let positions = self.positions_at(t)?;
                let mut velocities = vec![0.0; positions.len()];
                rhs(&positions, self.c0, self.forcing(), &mut velocities);
                Ok(TrajectorySample {
                    time: t,
                    positions,
                    velocities,
                })
            })
            .collect()
    }
}

// Dormand–Prince 5(4) tableau (autonomous, so the nodes are not needed).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates the (possibly perturbed) system on `[0, T]` with an adaptive
/// Dormand–Prince 4(5) pair. `Super`/`Sub` orientations shift the initial
/// positions by `∓δ`.
pub fn integrate(
    initial: &ParticleState,
    c0: f64,
    delta: f64,
    orientation: Orientation,
    t_final: f64,
    tol: f64,
) -> Result<ParticleTrajectory> {
    if !(c0 > 0.0) {
        return Err(Error::Config(format!("c0 must be positive, got {c0}")));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::Config(format!("T must be positive, got {t_final}")));
    }
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::Config(format!("tol must lie in [1e-12, 1e-6], got {tol}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(format!("delta must be >= 0, got {delta}")));
    }
    ParticleState::new(initial.positions.clone())?;
    let s = orientation.sign() * delta;
    let n = initial.positions.len();
    let mut z: Vec<f64> = initial.positions.iter().map(|p| p + orientation.sign() * delta).collect();
    let mut t = 0.0;
    let mut f0 = vec![0.0; n];
    rhs(&z, c0, s, &mut f0);
    let mut samples = vec![TrajectorySample {
        time: 0.0,
        positions: z.clone(),
        velocities: f0.clone(),
    }];
    let scale0 = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let vmax = f0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut h = if vmax > 0.0 {
        (0.01 * min_gap(&z).min(scale0) / vmax).min(t_final)
    } else {
        t_final
    };
    if !h.is_finite() {
        h = t_final;
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut fsal = f0;
    while t < t_final {
        if t + h > t_final {
            h = t_final - t;
        }
        if h < 1e-14 * t_final.max(1.0) {
            let gap = min_gap(&z);
            return Err(collision_error(&z, &fsal, t, gap));
        }
        k[0].copy_from_slice(&fsal);
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = z[i];
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += h * A[stage][j] * kj[i];
                }
                ytmp[i] = acc;
            }
            rhs(&ytmp, c0, s, &mut k[stage]);
        }
        // ytmp now holds the 5th-order solution (stage 7 evaluates at it).
        let mut err = 0.0_f64;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let sc = tol + tol * z[i].abs().max(ytmp[i].abs());
            err = err.max((h * e / sc).abs());
        }
        let ordered = ytmp.windows(2).all(|w| w[1] - w[0] > COLLISION_GAP);
        if err <= 1.0 && ordered && ytmp.iter().all(|v| v.is_finite()) {
            t += h;
            z.copy_from_slice(&ytmp);
            fsal.copy_from_slice(&k[6]);
            samples.push(TrajectorySample {
                time: t,
                positions: z.clone(),
                velocities: fsal.clone(),
            });
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else if !ordered && err <= 1.0 {
            let gap = min_gap(&z);
            if gap < 10.0 * COLLISION_GAP {
                return Err(collision_error(&z, &fsal, t, gap));
            }
            h *= 0.25;
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
        }
    }
    if let Some(last) = samples.last_mut() {
        last.time = t_final;
    }
    Ok(ParticleTrajectory {
        samples,
        delta,
        orientation,
        c0,
    })
}

fn collision_error(z: &[f64], v: &[f64], t: f64, gap: f64) -> Error {
    let closing = z
        .windows(2)
        .zip(v.windows(2))
        .filter(|(w, _)| w[1] - w[0] <= gap * (1.0 + 1e-12))
        .map(|(_, u)| u[0] - u[1])
        .fold(0.0_f64, f64::max);
    let blowup = if closing > 0.0 { t + gap / closing } else { t };
    Error::Collision { time: t, blowup }
}

/// `√(d₀² + (4c₀/π) t)`: separation of two particles under the unperturbed flow.
pub fn two_body_oracle(d0: f64, c0: f64, t: f64) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::Domain(format!("d0 must be positive, got {d0}")));
    }
    Ok((d0 * d0 + 4.0 * c0 / PI * t).sqrt())
}

/// Checks `d(t)² ≥ d(0)² + κ t/(N² − 1)` at every stored sample, where
/// `κ = 4c₀/π` (equal to 8 for `c₀ = 2π`).
pub fn check_distance_bound(traj: &ParticleTrajectory) -> Result<Report> {
    if traj.delta != 0.0 && traj.orientation != Orientation::None {
        return Err(Error::NotApplicable("distance bound needs an unperturbed trajectory".into()));
    }
    let n = traj.n();
    if n < 2 {
        return Err(Error::NotApplicable("distance bound needs at least two particles".into()));
    }
    let d0 = min_gap(&traj.samples[0].positions);
    let kappa = 4.0 * traj.c0 / PI;
    let nn = (n * n - 1) as f64;
    let mut slack = f64::INFINITY;
    let mut ordered = true;
    for s in &traj.samples {
        let d = min_gap(&s.positions);
        ordered &= d > 0.0;
        let bound = (kappa * s.time / nn + d0 * d0).sqrt();
        slack = slack.min(d - bound);
    }
    let mut r = Report::new(format!("distance_bound N={n}"));
    // Rounding in d(0)² − d(0)² allows a tiny negative slack at t = 0.
    r.push_ge("min_slack", slack, -1e-12 * d0.max(1.0));
    r.push("ordering", ordered, if ordered { 1.0 } else { 0.0 }, 1.0);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_examples() {
        assert_eq!(force(&[3.0], 2.0 * PI, 0.0, Orientation::None).unwrap(), vec![0.0]);
        let v = force(&[-1.0, 1.0], 2.0 * PI, 0.0, Orientation::None).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
        let v = force(&[-1.0, 0.0, 2.0], 1.3, 0.0, Orientation::None).unwrap();
        assert!(v.iter().sum::<f64>().abs() < 1e-14);
        assert!(matches!(
            force(&[0.0, 0.0], 1.0, 0.0, Orientation::None),
            Err(Error::Singularity(_))
        ));
        let s = force(&[0.0], PI, 0.1, Orientation::Super).unwrap();
        assert!((s[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn two_body_matches_oracle() {
        let c0 = 2.0 * PI;
        let tr = integrate(&ParticleState::new(vec![-1.0, 1.0]).unwrap(), c0, 0.0, Orientation::None, 1.0, 1e-10)
            .unwrap();
        let z = tr.positions_at(1.0).unwrap();
        assert!((z[1] - z[0] - 12.0_f64.sqrt()).abs() < 1e-6);
        assert_eq!(two_body_oracle(2.0, c0, 0.0).unwrap(), 2.0);
        let mid = tr.positions_at(0.37).unwrap();
        assert!((mid[1] - mid[0] - two_body_oracle(2.0, c0, 0.37).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn perturbed_initial_shift() {
        let init = ParticleState::new(vec![-1.0, 1.0]).unwrap();
        let tr = integrate(&init, 2.0 * PI, 0.01, Orientation::Super, 0.5, 1e-9).unwrap();
        assert_eq!(tr.samples[0].positions, vec![-1.01, 0.99]);
        assert!(matches!(check_distance_bound(&tr), Err(Error::NotApplicable(_))));
        let tr = integrate(&init, 2.0 * PI, 0.01, Orientation::Sub, 0.5, 1e-9).unwrap();
        assert_eq!(tr.samples[0].positions, vec![-0.99, 1.01]);
    }

    #[test]
    fn collision_is_reported() {
        let init = ParticleState::new(vec![0.0, 1e-3]).unwrap();
        assert!(integrate(&init, 2.0 * PI, 0.0, Orientation::None, 1.0, 1e-9).is_ok());
        let err = collision_error(&[0.0, 1e-9], &[1.0, -1.0], 0.5, 1e-9);
        match err {
            Error::Collision { time, blowup } => {
                assert_eq!(time, 0.5);
                assert!((blowup - (0.5 + 0.5e-9)).abs() < 1e-15);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn derivative_of_velocity_matches_finite_difference() {
        let init = ParticleState::new(vec![-1.0, 0.0, 1.5]).unwrap();
        let tr = integrate(&init, 2.0 * PI, 0.05, Orientation::Super, 1.0, 1e-11).unwrap();
        let (_, _, dv) = tr.state_at(0.5).unwrap();
        let h = 1e-4;
        let a = tr.velocities_at(0.5 + h).unwrap();
        let b = tr.velocities_at(0.5 - h).unwrap();
        for i in 0..3 {
            assert!(((a[i] - b[i]) / (2.0 * h) - dv[i]).abs() < 1e-5);
        }
        assert!(tr.positions_at(1.5).is_err());
    }
}
