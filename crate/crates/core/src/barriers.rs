//! Super- and subsolutions built from moving layers, the correctors `ψ`
//! and `q`, and slowly growing gap terms; numerical verification of their
//! differential inequalities and of the ordering with computed solutions.

use crate::correctors::{PsiProfile, QField};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::layer::LayerProfile;
use crate::ode::{integrate, Orientation, ParticleState, ParticleTrajectory};
use crate::potential::PotentialSpec;
use crate::report::Report;
use crate::solver::{run_with_layer, ExperimentConfig, SolutionRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Exponents of the barrier construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierExponents {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub r: f64,
    pub k0: u32,
    pub k1: u32,
    pub delta: f64,
    pub delta_tilde: f64,
}

/// Least `k ≥ 1` with `1 − (k+1) b ≤ 0`.
pub fn least_k0(b: f64) -> u32 {
    let mut k = 1;
    while 1.0 - (k as f64 + 1.0) * b > 0.0 {
        k += 1;
    }
    k
}

/// Least `k ≥ 0` with `(k+1) a / 2 > 1`.
pub fn least_k1(a: f64) -> u32 {
    let mut k = 0;
    while (k as f64 + 1.0) * a / 2.0 <= 1.0 {
        k += 1;
    }
    k
}

fn eq3_margin(e: &BarrierExponents, k: u32) -> f64 {
    let k = k as f64;
    (e.a + k * e.b - 1.0) - (e.theta - (2.0 - e.gamma) * (1.0 - (k + 1.0) * e.b))
}

fn eq4_margin(e: &BarrierExponents, k: u32) -> f64 {
    let k = k as f64;
    (1.0 + k / 2.0) * e.a - (e.theta + (2.0 - e.gamma) * (k + 1.0) / 2.0 * e.a)
}

/// Full inequality set for a choice of exponents.
pub fn check_exponents(e: &BarrierExponents) -> Report {
    let mut rep = Report::new("exponents");
    rep.push_ge("a_positive", e.a, f64::MIN_POSITIVE);
    rep.push("b_in_0_min1a", e.b > 0.0 && e.b < e.a.min(1.0), e.b, e.a.min(1.0));
    rep.push("gamma_in_0_1", e.gamma > 0.0 && e.gamma < 1.0, e.gamma, 1.0);
    rep.push("theta_plus_gamma_gt_1", e.theta + e.gamma > 1.0, e.theta + e.gamma, 1.0);
    rep.push("theta_in_0_a", e.theta > 0.0 && e.theta < e.a, e.theta, e.a);
    let k0 = least_k0(e.b);
    rep.push("k0_definition", e.k0 == k0 && 1.0 - (e.k0 as f64 + 1.0) * e.b <= 0.0, e.k0 as f64, k0 as f64);
    let k1 = least_k1(e.a);
    rep.push("k1_definition", e.k1 == k1 && (e.k1 as f64 + 1.0) * e.a / 2.0 > 1.0, e.k1 as f64, k1 as f64);
    for k in 1..=e.k0 {
        let m = eq3_margin(e, k);
        rep.push(format!("case2_k{k}"), m > 0.0, m, 0.0);
    }
    for k in 0..=e.k1 {
        let m = eq4_margin(e, k);
        rep.push(format!("case3_k{k}"), m > 0.0, m, 0.0);
    }
    let rm = (e.k1 as f64 + 1.0) * e.a / 2.0 - (1.0 + e.r);
    rep.push("r_definition", e.r > 0.0 && rm > 0.0, rm, 0.0);
    rep.push("tau_in_0_r", e.tau > 0.0 && e.tau < e.r, e.tau, e.r);
    rep.push("delta_positive", e.delta > 0.0, e.delta, 0.0);
    rep
}

/// Deterministic feasible exponents: `b = min(1,a)/2`, then the least `m`
/// with `θ = 2^{−m}`, `γ = 1 − θ/2` satisfying every case inequality, then
/// `r = ((k₁+1)a/2 − 1)/2` and `τ = r/2`.
pub fn select_exponents(a: f64, delta: f64, alpha: f64) -> Result<BarrierExponents> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Config(format!("a must be positive, got {a}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let b = a.min(1.0) / 2.0;
    let k0 = least_k0(b);
    let k1 = least_k1(a);
    let r = ((k1 as f64 + 1.0) * a / 2.0 - 1.0) / 2.0;
    for m in 1..=60 {
        let theta = 0.5f64.powi(m);
        let e = BarrierExponents {
            a,
            b,
            theta,
            gamma: 1.0 - theta / 2.0,
            tau: r / 2.0,
            r,
            k0,
            k1,
            delta,
            delta_tilde: delta / alpha,
        };
        if check_exponents(&e).all_passed() {
            return Ok(e);
        }
    }
    Err(Error::Infeasible(format!("no feasible theta = 2^-m with m <= 60 for a = {a}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierKind {
    Super,
    Sub,
}

impl BarrierKind {
    pub fn sign(self) -> f64 {
        match self {
            Self::Super => 1.0,
            Self::Sub => -1.0,
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Self::Super => Orientation::Super,
            Self::Sub => Orientation::Sub,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierEvaluator {
    pub exponents: BarrierExponents,
    pub trajectory: ParticleTrajectory,
    pub layer: Arc<LayerProfile>,
    pub psi: Arc<PsiProfile>,
    pub q: Arc<QField>,
    pub potential: PotentialSpec,
    pub eps: f64,
    pub kind: BarrierKind,
}

impl BarrierEvaluator {
    /// Integrates the perturbed particle system and assembles the barrier.
    /// `q` must have been built with `R = 2ε^{−b}`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: BarrierKind,
        eps: f64,
        centers: &[f64],
        t_final: f64,
        exponents: BarrierExponents,
        layer: Arc<LayerProfile>,
        psi: Arc<PsiProfile>,
        q: Arc<QField>,
        potential: PotentialSpec,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
        }
        let r_expected = 2.0 * eps.powf(-exponents.b);
        if (q.r - r_expected).abs() > 1e-9 * r_expected {
            return Err(Error::Config(format!("q built with R = {}, expected 2 eps^-b = {r_expected}", q.r)));
        }
        let trajectory = integrate(
            &ParticleState::new(centers.to_vec())?,
            layer.c0(),
            exponents.delta,
            kind.orientation(),
            t_final,
            1e-10,
        )?;
        Ok(Self {
            exponents,
            trajectory,
            layer,
            psi,
            q,
            potential,
            eps,
            kind,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.trajectory.t_end()
    }

    fn state(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (z, c, _) = self.trajectory.state_at(t)?;
        Ok((z, c))
    }

    fn check_point(&self, x: f64, y: f64) -> Result<()> {
        if !x.is_finite() || !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Domain(format!("sample ({x}, {y}) outside the closed half-plane")));
        }
        Ok(())
    }

    fn ansatz_with(&self, z: &[f64], c: &[f64], x: f64, y: f64) -> f64 {
        let e = self.eps;
        let yy = y / e;
        let mut v = 0.0;
        for (zi, ci) in z.iter().zip(c) {
            let xx = (x - zi) / e;
            v += self.layer.value(xx, yy) - e * ci * self.psi.value(xx, yy);
        }
        v + self.kind.sign() * e * self.exponents.delta_tilde
    }

    fn barrier_with(&self, z: &[f64], c: &[f64], x: f64, y: f64, t: f64) -> f64 {
        let ex = &self.exponents;
        let e = self.eps;
        let yy = y / e;
        let qsum: f64 = z.iter().zip(c).map(|(zi, ci)| ci * self.q.value((x - zi) / e, yy)).sum();
        self.ansatz_with(z, c, x, y)
            + e.powf(ex.a + 1.0) * qsum
            + self.kind.sign() * (e.powf(ex.theta) * (y + e).powf(ex.gamma) + e.powf(1.0 + ex.tau) * t)
    }

    /// `Σ [φ_i − ε c_i ψ_i] ± εδ̃`.
    pub fn eval_ansatz_v(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        self.check_point(x, y)?;
        let (z, c) = self.state(t)?;
        Ok(self.ansatz_with(&z, &c, x, y))
    }

    pub fn eval_barrier(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        self.check_point(x, y)?;
        let (z, c) = self.state(t)?;
        Ok(self.barrier_with(&z, &c, x, y, t))
    }

    /// `ε^{a+1} Σ c_i q_i`.
    pub fn q_term(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        self.check_point(x, y)?;
        let (z, c) = self.state(t)?;
        let e = self.eps;
        let s: f64 = z.iter().zip(&c).map(|(zi, ci)| ci * self.q.value((x - zi) / e, y / e)).sum();
        Ok(e.powf(self.exponents.a + 1.0) * s)
    }

    /// Barrier on every node of `grid` at time `t` (node order `i * ny + j`).
    pub fn eval_on_grid(&self, grid: &Grid2D, t: f64) -> Result<Vec<f64>> {
        let (z, c) = self.state(t)?;
        let xs = grid.x.nodes();
        let ys = grid.y.nodes();
        let ny = grid.ny();
        Ok((0..grid.len())
            .into_par_iter()
            .map(|p| self.barrier_with(&z, &c, xs[p / ny], ys[p % ny], t))
            .collect())
    }
}

/// Region of the half-plane treated separately in the verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProofCase {
    Boundary,
    Near,
    Intermediate(u32),
    Far(u32),
    Remote,
}

impl std::fmt::Display for ProofCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Boundary => write!(f, "boundary"),
            Self::Near => write!(f, "case1"),
            Self::Intermediate(k) => write!(f, "case2_k{k}"),
            Self::Far(k) => write!(f, "case3_k{k}"),
            Self::Remote => write!(f, "case4"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub case: ProofCase,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// `y`-bands of the four cases for the given `ε`.
pub fn case_bands(e: &BarrierExponents, eps: f64) -> Vec<(ProofCase, f64, f64)> {
    let mut out = vec![(ProofCase::Near, 1e-2 * eps.powf(1.0 - e.b), eps.powf(1.0 - e.b))];
    for k in 1..=e.k0 {
        let k = k as f64;
        let lo = eps.powf(1.0 - k * e.b);
        let hi = eps.powf(1.0 - (k + 1.0) * e.b);
        out.push((ProofCase::Intermediate(k as u32), lo, hi));
    }
    for k in 0..=e.k1 {
        let kf = k as f64;
        out.push((ProofCase::Far(k), eps.powf(-kf * e.a / 2.0), eps.powf(-(kf + 1.0) * e.a / 2.0)));
    }
    let lo = eps.powf(-1.0 - e.r);
    out.push((ProofCase::Remote, lo, 10.0 * lo));
    out
}

/// Per case: log-spaced heights in the band, `x` within ±3 of each center
/// at that time, five interior times in `[0, T]`.
pub fn generate_samples(ev: &BarrierEvaluator, per_band: usize) -> Result<Vec<SamplePoint>> {
    let t_end = ev.t_end();
    let eps = ev.eps;
    let offsets = [-3.0, -0.3, -3.0 * eps, -eps, 0.0, eps, 3.0 * eps, 0.3, 3.0];
    let mut out = Vec::new();
    for k in 0..5 {
        let t = t_end * (0.1 + 0.2 * k as f64);
        let z = ev.trajectory.positions_at(t)?;
        let xs: Vec<f64> = z.iter().flat_map(|zi| offsets.iter().map(move |o| zi + o)).collect();
        for &x in &xs {
            out.push(SamplePoint {
                x,
                y: 0.0,
                t,
                case: ProofCase::Boundary,
            });
        }
        for (case, lo, hi) in case_bands(&ev.exponents, eps) {
            for y in log_space(lo, hi, per_band) {
                for &x in &xs {
                    out.push(SamplePoint { x, y, t, case });
                }
            }
        }
    }
    Ok(out)
}

/// One evaluated inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub case: ProofCase,
    /// Residual times the kind sign (nonnegative when the inequality holds).
    pub margin: f64,
    /// Finite-difference tolerance at this sample.
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub report: Report,
    pub samples: Vec<ResidualSample>,
}

/// Richardson pair: extrapolated value and error estimate from the
/// approximations at `h` and `h/2` of a second-order formula.
fn richardson(d_h: f64, d_h2: f64) -> (f64, f64) {
    ((4.0 * d_h2 - d_h) / 3.0, (d_h2 - d_h).abs() / 3.0)
}

const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// Evaluates the barrier inequalities at `samples`. Derivatives are centered
/// differences (one-sided second order for `∂_y` on the boundary) refined
/// once by Richardson extrapolation; the tolerance is ten times the
/// resulting truncation estimate plus a roundoff allowance.
pub fn residual_check(ev: &BarrierEvaluator, samples: &[SamplePoint]) -> Result<ResidualReport> {
    let eps = ev.eps;
    let t_end = ev.t_end();
    let kt = (eps / 8.0).min(eps * eps) / 4.0;
    let ex = ev.exponents;
    for s in samples {
        ev.check_point(s.x, s.y)?;
        if !(s.t - kt >= 0.0 && s.t + kt <= t_end) {
            return Err(Error::Domain(format!("sample time {} too close to [0, {t_end}] ends", s.t)));
        }
    }
    let rows: Vec<Result<ResidualSample>> = samples
        .par_iter()
        .map(|s| {
            let st = |t: f64| ev.state(t);
            let s0 = st(s.t)?;
            let w = |x: f64, y: f64| ev.barrier_with(&s0.0, &s0.1, x, y, s.t);
            let wt = |t: f64| -> Result<f64> {
                let (z, c) = st(t)?;
                Ok(ev.barrier_with(&z, &c, s.x, s.y, t))
            };
            let (tp, tm, tp2, tm2) = (wt(s.t + kt)?, wt(s.t - kt)?, wt(s.t + kt / 2.0)?, wt(s.t - kt / 2.0)?);
            let (dt, dt_err) = richardson((tp - tm) / (2.0 * kt), (tp2 - tm2) / kt);
            let w0 = w(s.x, s.y);
            let scale = w0.abs().max(1.0);
            let dt_err = dt_err + ROUNDOFF * scale / kt;
            let (residual, tol) = if s.case == ProofCase::Boundary {
                let h = eps / 16.0;
                let dy = |h: f64| (-3.0 * w0 + 4.0 * w(s.x, h) - w(s.x, 2.0 * h)) / (2.0 * h);
                let (wy, wy_err) = richardson(dy(h), dy(h / 2.0));
                let wy_err = wy_err + ROUNDOFF * scale / h;
                let res = eps * dt - wy + ev.potential.dw(w0) / eps;
                (res, 10.0 * (eps * dt_err + wy_err))
            } else {
                let h = ((s.y + eps) / 16.0).min(s.y / 2.0);
                let lap = |h: f64| {
                    (w(s.x + h, s.y) + w(s.x - h, s.y) + w(s.x, s.y + h) + w(s.x, s.y - h) - 4.0 * w0) / (h * h)
                };
                let (l, l_err) = richardson(lap(h), lap(h / 2.0));
                let l_err = l_err + 4.0 * ROUNDOFF * scale / (h * h);
                let ea = eps.powf(ex.a);
                (ea * dt - l, 10.0 * (ea * dt_err + l_err))
            };
            Ok(ResidualSample {
                x: s.x,
                y: s.y,
                t: s.t,
                case: s.case,
                margin: ev.kind.sign() * residual,
                tol,
            })
        })
        .collect();
    let rows: Vec<ResidualSample> = rows.into_iter().collect::<Result<_>>()?;
    let mut report = Report::new(format!("residuals {:?} eps={}", ev.kind, eps));
    let mut cases: Vec<ProofCase> = Vec::new();
    for r in &rows {
        if !cases.contains(&r.case) {
            cases.push(r.case);
        }
    }
    for case in cases {
        let sel: Vec<&ResidualSample> = rows.iter().filter(|r| r.case == case).collect();
        let worst = sel
            .iter()
            .min_by(|a, b| (a.margin + a.tol).total_cmp(&(b.margin + b.tol)))
            .expect("non-empty case");
        let violations = sel.iter().filter(|r| r.margin < -r.tol).count();
        report.push_detail(
            case.to_string(),
            violations == 0,
            worst.margin,
            -worst.tol,
            format!(
                "{violations}/{} violations, worst at ({:.4}, {:.4e}, {:.3})",
                sel.len(),
                worst.x,
                worst.y,
                worst.t
            ),
        );
    }
    Ok(ResidualReport { report, samples: rows })
}

/// Largest `ε^{a+1}|Σ c_i q_i| / (ε^{a+1−b}|ln ε|)` over the samples.
pub fn q_term_constant(ev: &BarrierEvaluator, samples: &[SamplePoint]) -> Result<f64> {
    let e = ev.eps;
    let scale = e.powf(ev.exponents.a + 1.0 - ev.exponents.b) * e.ln().abs();
    let vals: Vec<Result<f64>> = samples.par_iter().map(|s| ev.q_term(s.x, s.y, s.t)).collect();
    let mut worst = 0.0f64;
    for v in vals {
        worst = worst.max(v?.abs() / scale);
    }
    Ok(worst)
}

fn ordering_checks(
    report: &mut Report,
    label: &str,
    grid: &Grid2D,
    u: &[f64],
    upper: &[f64],
    lower: &[f64],
    slack: f64,
) {
    let ny = grid.ny();
    let worst = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(p, (x, y))| (x - y, p))
            .fold((f64::NEG_INFINITY, 0), |m, v| if v.0 > m.0 { v } else { m })
    };
    let (over, p_over) = worst(u, upper);
    let (under, p_under) = worst(lower, u);
    let at = |p: usize| (grid.x.nodes()[p / ny], grid.y.nodes()[p % ny]);
    let count_over = u.iter().zip(upper).filter(|(x, y)| *x - *y > slack).count();
    let count_under = lower.iter().zip(u).filter(|(x, y)| *x - *y > slack).count();
    report.push_detail(
        format!("{label}/u_le_w"),
        over <= slack,
        over,
        slack,
        format!("{count_over} violations, worst at {:?}", at(p_over)),
    );
    report.push_detail(
        format!("{label}/h_le_u"),
        under <= slack,
        under,
        slack,
        format!("{count_under} violations, worst at {:?}", at(p_under)),
    );
}

/// `h_ε(·,0) ≤ u⁰ ≤ w_ε(·,0)` on every grid node.
pub fn initial_ordering_check(u0: &[f64], grid: &Grid2D, sup: &BarrierEvaluator, sub: &BarrierEvaluator) -> Result<Report> {
    if u0.len() != grid.len() {
        return Err(Error::Config("initial field does not match the grid".into()));
    }
    let w = sup.eval_on_grid(grid, 0.0)?;
    let h = sub.eval_on_grid(grid, 0.0)?;
    let mut report = Report::new(format!("initial_ordering eps={}", sup.eps));
    ordering_checks(&mut report, "t=0", grid, u0, &w, &h, 0.0);
    Ok(report)
}

/// `h_ε ≤ u_ε ≤ w_ε` at every stored snapshot, with slack `10 ·
/// scheme_error`.
pub fn sandwich_check(
    record: &SolutionRecord,
    sup: &BarrierEvaluator,
    sub: &BarrierEvaluator,
    scheme_error: f64,
) -> Result<Report> {
    if sup.kind != BarrierKind::Super || sub.kind != BarrierKind::Sub {
        return Err(Error::Config("sandwich needs a Super and a Sub evaluator".into()));
    }
    if (sup.eps - record.eps).abs() > 1e-15 || (sub.eps - record.eps).abs() > 1e-15 {
        return Err(Error::Config("barrier and solution use different eps".into()));
    }
    let t_end = sup.t_end().min(sub.t_end());
    let slack = 10.0 * scheme_error;
    let mut report = Report::new(format!("sandwich eps={}", record.eps));
    for k in 0..record.snapshots.len() {
        let t = record.times[k];
        if t > t_end * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("snapshot time {t} beyond barrier span {t_end}")));
        }
        let field = record
            .field(k)
            .ok_or_else(|| Error::Config("sandwich check needs full-field snapshots".into()))?;
        let w = sup.eval_on_grid(&record.grid, t)?;
        let h = sub.eval_on_grid(&record.grid, t)?;
        ordering_checks(&mut report, &format!("t={t:.4}"), &record.grid, &field.values, &w, &h, slack);
    }
    Ok(report)
}

/// One barrier verification run: a fixed `(ε, a, δ)` with `N` initial
/// centres up to time `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSuiteConfig {
    pub epsilon: f64,
    pub a: f64,
    pub delta: f64,
    pub centers: Vec<f64>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub snapshot_every: f64,
    pub samples_per_band: usize,
}

impl BarrierSuiteConfig {
    pub fn new(epsilon: f64, a: f64, delta: f64, centers: Vec<f64>, t_final: f64) -> Self {
        Self {
            epsilon,
            a,
            delta,
            centers,
            t_final,
            snapshot_every: t_final / 4.0,
            samples_per_band: 3,
        }
    }
}

/// Residual sample tagged with the barrier it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedSample {
    pub kind: BarrierKind,
    pub sample: ResidualSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSuiteOutcome {
    pub config: BarrierSuiteConfig,
    pub exponents: BarrierExponents,
    pub exponent_report: Report,
    pub residual_reports: Vec<Report>,
    pub samples: Vec<TaggedSample>,
    pub q_constant: f64,
    pub initial: Report,
    pub sandwich: Report,
    /// Largest difference between the run and its half-time-step companion.
    pub scheme_error: f64,
}

impl BarrierSuiteOutcome {
    pub fn residuals_passed(&self) -> bool {
        self.residual_reports.iter().all(Report::all_passed)
    }

    pub fn all_passed(&self) -> bool {
        self.exponent_report.all_passed() && self.residuals_passed() && self.initial.all_passed() && self.sandwich.all_passed()
    }
}

/// Selects exponents, evaluates the residual inequalities of both barriers,
/// runs the coupled solver (plus a half-step companion for the scheme error)
/// and checks the initial ordering and the sandwich.
pub fn run_barrier_suite(
    config: &BarrierSuiteConfig,
    layer: Arc<LayerProfile>,
    psi: Arc<PsiProfile>,
    potential: &PotentialSpec,
) -> Result<BarrierSuiteOutcome> {
    let eps = config.epsilon;
    let exponents = select_exponents(config.a, config.delta, layer.alpha())?;
    let exponent_report = check_exponents(&exponents);
    let q = Arc::new(QField::new(&layer, 2.0 * eps.powf(-exponents.b))?);
    let make = |kind| {
        BarrierEvaluator::new(
            kind,
            eps,
            &config.centers,
            config.t_final,
            exponents,
            layer.clone(),
            psi.clone(),
            q.clone(),
            potential.clone(),
        )
    };
    let sup = make(BarrierKind::Super)?;
    let sub = make(BarrierKind::Sub)?;
    let points = generate_samples(&sup, config.samples_per_band)?;
    let mut residual_reports = Vec::new();
    let mut samples = Vec::new();
    for ev in [&sup, &sub] {
        let rr = residual_check(ev, &points)?;
        samples.extend(rr.samples.iter().map(|&sample| TaggedSample { kind: ev.kind, sample }));
        residual_reports.push(rr.report);
    }
    let q_constant = q_term_constant(&sup, &points)?;
    let run_cfg = ExperimentConfig::standard(eps, config.a, config.centers.clone(), config.t_final, config.snapshot_every);
    let record = run_with_layer(&run_cfg, potential, &layer)?;
    let mut fine_cfg = run_cfg.clone();
    fine_cfg.time.dt = Some(run_cfg.dt() / 2.0);
    let fine = run_with_layer(&fine_cfg, potential, &layer)?;
    let scheme_error = record
        .snapshots
        .iter()
        .zip(&fine.snapshots)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    let u0 = record
        .field(0)
        .ok_or_else(|| Error::Config("initial snapshot missing".into()))?;
    let initial = initial_ordering_check(&u0.values, &record.grid, &sup, &sub)?;
    let sandwich = sandwich_check(&record, &sup, &sub, scheme_error)?;
    Ok(BarrierSuiteOutcome {
        config: config.clone(),
        exponents,
        exponent_report,
        residual_reports,
        samples,
        q_constant,
        initial,
        sandwich,
        scheme_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::{default_psi_grid, solve_psi, QField};
    use crate::nonlocal::Grid1D;

    #[test]
    fn k_definitions() {
        assert_eq!(least_k0(0.5), 1);
        assert_eq!(least_k0(0.25), 3);
        assert_eq!(least_k1(2.0), 1);
        assert_eq!(least_k1(1.0), 2);
        assert_eq!(least_k1(3.0), 0);
    }

    #[test]
    fn selected_exponents_pass_checker() {
        for a in [0.5, 1.0, 2.0, 4.0] {
            let e = select_exponents(a, 0.05, 1.0).unwrap();
            let rep = check_exponents(&e);
            assert!(rep.all_passed(), "{rep}");
        }
        let e = select_exponents(2.0, 0.05, 1.0).unwrap();
        assert_eq!((e.b, e.k0, e.k1), (0.5, 1, 1));
        let e = select_exponents(0.5, 0.05, 1.0).unwrap();
        assert_eq!(e.b, 0.25);
        assert!(matches!(select_exponents(-1.0, 0.05, 1.0), Err(Error::Config(_))));
    }

    fn evaluator(kind: BarrierKind, eps: f64, centers: &[f64], delta: f64) -> BarrierEvaluator {
        let layer = LayerProfile::explicit();
        let pot = PotentialSpec::sinusoidal();
        let e = select_exponents(1.0, delta, 1.0).unwrap();
        let psi = solve_psi(&layer, &pot, layer.c0(), 1.0, Grid1D::new(1024.0, 8192)).unwrap();
        let q = QField::new(&layer, 2.0 * eps.powf(-e.b)).unwrap();
        BarrierEvaluator::new(kind, eps, centers, 0.5, e, Arc::new(layer), Arc::new(psi), Arc::new(q), pot).unwrap()
    }

    #[test]
    fn single_layer_ansatz_at_start() {
        let eps = 0.1;
        let delta = 1e-3;
        let ev = evaluator(BarrierKind::Super, eps, &[0.0], delta);
        let cbar = ev.trajectory.velocities_at(0.0).unwrap()[0];
        assert!((cbar + 2.0 * delta).abs() < 1e-12);
        for x in [-0.3, 0.0, 0.05, 0.4] {
            let v = ev.eval_ansatz_v(x, 0.0, 0.0).unwrap();
            let expect = crate::layer::phi_explicit((x + delta) / eps, 0.0).unwrap() + eps * delta;
            assert!((v - expect).abs() < 1e-12, "{v} {expect}");
        }
        assert_eq!(ev.q_term(0.3, 0.0, 0.1).unwrap(), 0.0);
        assert!(default_psi_grid().n > 0);
    }

    #[test]
    fn super_dominates_sub() {
        let eps = 0.1;
        let sup = evaluator(BarrierKind::Super, eps, &[-0.5, 0.5], 0.05);
        let sub = evaluator(BarrierKind::Sub, eps, &[-0.5, 0.5], 0.05);
        let e = sup.exponents;
        for x in [-1.0, -0.5, 0.0, 0.45, 2.0] {
            let gap = sup.eval_barrier(x, 0.0, 0.0).unwrap() - sub.eval_barrier(x, 0.0, 0.0).unwrap();
            let floor = 2.0 * eps * e.delta_tilde + 2.0 * eps.powf(e.theta + e.gamma);
            assert!(gap >= floor - 1e-12, "{gap} {floor}");
            for y in [0.05, 1.0, 10.0] {
                for t in [0.0, 0.25] {
                    assert!(sup.eval_barrier(x, y, t).unwrap() >= sub.eval_barrier(x, y, t).unwrap());
                }
            }
        }
    }

    #[test]
    fn residual_signs_flip_with_kind() {
        let eps = 0.1;
        let sup = evaluator(BarrierKind::Super, eps, &[-0.5, 0.5], 0.05);
        let samples = vec![
            SamplePoint { x: 2.0, y: 3.0, t: 0.25, case: ProofCase::Far(1) },
            SamplePoint { x: 3.0, y: 0.0, t: 0.25, case: ProofCase::Boundary },
        ];
        let rs = residual_check(&sup, &samples).unwrap();
        let mut sub = sup.clone();
        sub.kind = BarrierKind::Sub;
        let rb = residual_check(&sub, &samples).unwrap();
        assert_eq!(rs.samples.len(), 2);
        for (a, b) in rs.samples.iter().zip(&rb.samples) {
            assert!(a.tol.is_finite() && a.tol > 0.0);
            assert!(a.margin.abs() > 0.0 && b.margin.is_finite());
        }
        // Far from the layers the gap term dominates and the interior
        // inequality holds in both directions.
        assert!(rs.samples[0].margin > 0.0);
        assert!(rb.samples[0].margin > 0.0);
    }
}
