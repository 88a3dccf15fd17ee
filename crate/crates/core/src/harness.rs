//! ε-sweeps against the particle system and the bulk arctan limit.

use crate::error::{Error, Result};
use crate::io;
use crate::layer::layer_for;
use crate::ode::{integrate, Orientation, ParticleState, ParticleTrajectory};
use crate::potential::PotentialSpec;
use crate::report::Report;
use crate::solver::{run_with_layer, ExperimentConfig, SolutionRecord};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub time: f64,
    /// `|x̂_i(t) − z_i(t)|` per crossing.
    pub crossing_errors: Vec<f64>,
    /// Sup of `|u − Σ arctan profile|` on the band `y ≥ y₀`.
    pub bulk_error: Option<f64>,
}

impl ConvergenceRow {
    pub fn max_crossing_error(&self) -> f64 {
        self.crossing_errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Numeric form `(eps, t, err_1..err_N, bulk)` with `NaN` for a missing
    /// bulk value.
    pub fn to_rows(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let n = self.rows.first().map(|r| r.crossing_errors.len()).unwrap_or(0);
        let mut header = vec!["eps".to_string(), "t".to_string()];
        header.extend((1..=n).map(|i| format!("err_{i}")));
        header.push("bulk".into());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.eps, r.time];
                v.extend(&r.crossing_errors);
                v.push(r.bulk_error.unwrap_or(f64::NAN));
                v
            })
            .collect();
        (header, rows)
    }

    pub fn eps_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.eps) {
                out.push(r.eps);
            }
        }
        out
    }

    /// Largest crossing error over all times for each `ε`, in table order.
    pub fn sup_crossing_error(&self) -> Vec<(f64, f64)> {
        self.eps_values()
            .into_iter()
            .map(|e| {
                let m = self
                    .rows
                    .iter()
                    .filter(|r| r.eps == e)
                    .map(|r| r.max_crossing_error())
                    .fold(0.0, f64::max);
                (e, m)
            })
            .collect()
    }
}

/// Crossing errors against the unperturbed particle trajectory at every
/// sample time of `record`; flags errors above `factor · ε`.
pub fn compare_ode_pde(record: &SolutionRecord, trajectory: &ParticleTrajectory, factor: f64) -> Result<(Vec<ConvergenceRow>, Report)> {
    if trajectory.delta != 0.0 || trajectory.orientation != Orientation::None {
        return Err(Error::Comparison("comparison needs the unperturbed (delta = 0) trajectory".into()));
    }
    let mut rows = Vec::with_capacity(record.times.len());
    let mut worst: f64 = 0.0;
    for (k, &t) in record.times.iter().enumerate() {
        let z = trajectory.positions_at(t)?;
        let x = &record.crossings[k];
        if x.len() != z.len() {
            return Err(Error::Comparison(format!(
                "{} crossings but {} particles at t = {t}",
                x.len(),
                z.len()
            )));
        }
        let errs: Vec<f64> = x.iter().zip(&z).map(|(a, b)| (a - b).abs()).collect();
        worst = errs.iter().copied().fold(worst, f64::max);
        rows.push(ConvergenceRow {
            eps: record.eps,
            time: t,
            crossing_errors: errs,
            bulk_error: None,
        });
    }
    let mut report = Report::new(format!("ode_vs_pde eps={}", record.eps));
    report.push_le("max_crossing_error", worst, factor * record.eps);
    Ok((rows, report))
}

/// `(1/π) Σ (π/2 + arctan((x − z_i)/y))`.
pub fn arctan_superposition(centers: &[f64], x: f64, y: f64) -> f64 {
    centers.iter().map(|z| 0.5 + ((x - z) / y).atan() / PI).sum()
}

/// Sup-error against the arctan superposition over grid nodes with
/// `y ≥ y₀`, at every full snapshot.
pub fn bulk_limit_check(record: &SolutionRecord, trajectory: &ParticleTrajectory, band_y0: f64) -> Result<Vec<ConvergenceRow>> {
    let hx = record.eps / 8.0;
    if band_y0 < 4.0 * hx {
        return Err(Error::Config(format!("band y0 = {band_y0} must be at least 4 hx = {}", 4.0 * hx)));
    }
    let grid = &record.grid;
    let ny = grid.ny();
    let xs = grid.x.nodes();
    let ys = grid.y.nodes();
    let j0 = ys.partition_point(|&y| y < band_y0);
    let mut rows = Vec::new();
    for (k, &t) in record.times.iter().enumerate() {
        let field = match record.field(k) {
            Some(f) => f,
            None => continue,
        };
        let z = trajectory.positions_at(t)?;
        let err = (0..grid.nx())
            .into_par_iter()
            .map(|i| {
                (j0..ny)
                    .map(|j| (field.values[i * ny + j] - arctan_superposition(&z, xs[i], ys[j])).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        rows.push(ConvergenceRow {
            eps: record.eps,
            time: t,
            crossing_errors: Vec::new(),
            bulk_error: Some(err),
        });
    }
    Ok(rows)
}

fn interp(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&a| a <= x).clamp(1, xs.len() - 1);
    let s = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    v[k - 1] + s * (v[k] - v[k - 1])
}

/// Boundary trace of one run at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceAtTime {
    pub eps: f64,
    pub xs: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Deviations below this are treated as zero in trend comparisons.
const TREND_FLOOR: f64 = 1e-9;

/// Deviation of the trace from the step limit at points a margin `m` away
/// from every particle (the midpoints between neighbours and one unit
/// outside the outermost ones), plus the envelope band `[i−1, i]` at each
/// particle.
pub fn envelope_check(traces: &[TraceAtTime], trajectory: &ParticleTrajectory, t: f64) -> Result<Report> {
    let z = trajectory.positions_at(t)?;
    let n = z.len();
    let mut probes: Vec<(String, f64, f64)> = vec![("outer_left".into(), z[0] - 1.0, 0.0)];
    for i in 1..n {
        probes.push((format!("midpoint_{i}"), 0.5 * (z[i - 1] + z[i]), i as f64));
    }
    probes.push(("outer_right".into(), z[n - 1] + 1.0, n as f64));
    let mut report = Report::new(format!("envelope t={t}"));
    let mut devs: Vec<Vec<f64>> = Vec::new();
    for tr in traces {
        let mut dev = Vec::new();
        for (name, x, level) in &probes {
            let m = z.iter().map(|zi| (x - zi).abs()).fold(f64::INFINITY, f64::min);
            let d = (interp(&tr.xs, &tr.trace, *x) - level).abs();
            let tol = 2.0 * n as f64 * tr.eps / (PI * m);
            report.push_le(format!("eps={}/{name}", tr.eps), d, tol);
            dev.push(if d < TREND_FLOOR { 0.0 } else { d });
        }
        for (i, &x) in z.iter().enumerate() {
            let v = interp(&tr.xs, &tr.trace, x);
            let lo = i as f64;
            let inside = v >= lo && v <= lo + 1.0;
            let gap = if inside { 0.0 } else { (lo - v).max(v - lo - 1.0) };
            report.push(format!("eps={}/band_{}", tr.eps, i + 1), inside, gap, 0.0);
        }
        devs.push(dev);
    }
    if traces.len() >= 3 {
        for (k, (name, _, _)) in probes.iter().enumerate() {
            let seq: Vec<f64> = devs.iter().map(|d| d[k]).collect();
            let (ok, worst) = trend_decreasing(&seq, 0.2);
            report.push(format!("{name}_trend"), ok, worst, 0.2);
        }
    }
    Ok(report)
}

/// Distance by which the crossings of `record` leave the bracket spanned by
/// the `δ`-perturbed particle trajectories, maximised over time, together
/// with the bracket width.
pub fn delta_bracket(record: &SolutionRecord, upper: &ParticleTrajectory, lower: &ParticleTrajectory) -> Result<(f64, f64)> {
    let mut outside: f64 = 0.0;
    let mut width: f64 = 0.0;
    for (k, &t) in record.times.iter().enumerate() {
        let zu = upper.positions_at(t)?;
        let zl = lower.positions_at(t)?;
        let x = &record.crossings[k];
        if x.len() != zu.len() {
            return Err(Error::Comparison(format!("{} crossings but {} particles", x.len(), zu.len())));
        }
        for i in 0..x.len() {
            let (lo, hi) = (zu[i].min(zl[i]), zu[i].max(zl[i]));
            width = width.max(hi - lo);
            outside = outside.max((lo - x[i]).max(x[i] - hi).max(0.0));
        }
    }
    Ok((outside, width))
}

/// Whether `values` (ordered by decreasing ε) decrease, allowing one
/// increase of at most `allowed` relative size. Returns the largest
/// relative increase.
pub fn trend_decreasing(values: &[f64], allowed: f64) -> (bool, f64) {
    let mut inversions = 0;
    let mut worst = 0.0f64;
    let mut ok = true;
    for w in values.windows(2) {
        if w[1] > w[0] {
            let rel = if w[0] > 0.0 { (w[1] - w[0]) / w[0] } else { f64::INFINITY };
            worst = worst.max(rel);
            inversions += 1;
            if rel > allowed || inversions > 1 {
                ok = false;
            }
        }
    }
    (ok, worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Crossing error threshold in units of `ε`.
    pub crossing_factor: f64,
    pub band_y0: f64,
    /// Bulk sup-error threshold at the smallest `ε`.
    pub bulk_max: f64,
    /// Allowed relative size of a single trend inversion.
    pub inversion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            crossing_factor: 5.0,
            band_y0: 0.5,
            bulk_max: 0.1,
            inversion: 0.2,
        }
    }
}

fn default_scenario() -> String {
    "sweep".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_scenario")]
    pub scenario: String,
    /// Template run; its `epsilon` is replaced by each sweep value.
    pub base: ExperimentConfig,
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub delta_list: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl SweepConfig {
    /// Two layers at `±0.5`, `a = 1`, `T = 0.5`, `ε ∈ {0.2, 0.1, 0.05}`.
    pub fn demo() -> Self {
        Self {
            scenario: "demo".into(),
            base: ExperimentConfig::standard(0.1, 1.0, vec![-0.5, 0.5], 0.5, 0.125),
            eps_list: vec![0.2, 0.1, 0.05],
            delta_list: vec![0.1, 0.05, 0.025],
            tolerances: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() || self.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("eps_list must be non-empty and strictly decreasing".into()));
        }
        if self.delta_list.windows(2).any(|w| !(w[1] < w[0])) || self.delta_list.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("delta_list must be positive and strictly decreasing".into()));
        }
        for &e in &self.eps_list {
            let mut c = self.base.clone();
            c.epsilon = e;
            c.time.dt = None;
            c.validate()?;
            if c.grid.nx.is_some() {
                let g = c.build_grid()?;
                let (hx, _) = g.core_spacing(c.centers[0] - 1.0, c.centers[c.centers.len() - 1] + 1.0, 2.0 * e);
                if hx > e / 8.0 * (1.0 + 1e-9) {
                    return Err(Error::Config(format!("grid does not resolve eps = {e} at hx = eps/8")));
                }
            }
        }
        Ok(())
    }

    pub fn run_config(&self, eps: f64) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.epsilon = eps;
        c.time.dt = None;
        c
    }
}

/// Pass/fail line of the machine-readable summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub criterion_id: String,
    pub status: String,
    pub measured: f64,
    pub threshold: f64,
}

impl CriterionStatus {
    pub fn new(id: impl Into<String>, passed: bool, measured: f64, threshold: f64) -> Self {
        Self {
            criterion_id: id.into(),
            status: if passed { "PASS" } else { "FAIL" }.into(),
            measured,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "PASS"
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub table: ConvergenceTable,
    pub records: Vec<SolutionRecord>,
    pub trajectory: ParticleTrajectory,
    pub reports: Vec<Report>,
    pub summary: Vec<CriterionStatus>,
}

/// Runs every `ε` of the sweep (concurrently), compares with the particle
/// system and the bulk limit, and writes the artifacts to `out` if given.
pub fn run_sweep(config: &SweepConfig, out: Option<&Path>) -> Result<SweepOutcome> {
    config.validate()?;
    let potential = PotentialSpec::from_config_value(&config.base.potential)?;
    let layer = layer_for(&potential, config.base.layer == crate::solver::LayerChoice::Explicit)?;
    let base = &config.base;
    let trajectory = integrate(
        &ParticleState::new(base.centers.clone())?,
        layer.c0(),
        0.0,
        Orientation::None,
        base.time.t_final,
        1e-10,
    )?;
    let results: Vec<Result<SolutionRecord>> = config
        .eps_list
        .par_iter()
        .map(|&e| {
            info!("sweep {}: eps = {e}", config.scenario);
            run_with_layer(&config.run_config(e), &potential, &layer)
        })
        .collect();
    let mut records = Vec::new();
    for (r, &e) in results.into_iter().zip(&config.eps_list) {
        let rec = r?;
        if let Some(dir) = out {
            let sub = dir.join(format!("eps_{e}"));
            io::write_record(&sub, &rec, false)?;
        }
        records.push(rec);
    }
    let tol = config.tolerances;
    let mut table = ConvergenceTable::default();
    let mut reports = Vec::new();
    let mut bulk_final = Vec::new();
    let mut energy_ok = true;
    let mut energy_worst = f64::NEG_INFINITY;
    for rec in &records {
        let (mut rows, rep) = compare_ode_pde(rec, &trajectory, tol.crossing_factor)?;
        reports.push(rep);
        let bulk = if rec.snapshots.iter().all(|s| s.full) {
            bulk_limit_check(rec, &trajectory, tol.band_y0)?
        } else {
            Vec::new()
        };
        for (row, b) in rows.iter_mut().zip(bulk.iter()) {
            row.bulk_error = b.bulk_error;
        }
        bulk_final.push(bulk.iter().filter_map(|r| r.bulk_error).fold(f64::NAN, f64::max));
        let (ok, inc) = energy_monotone(&rec.energy, 1e-6);
        energy_ok &= ok;
        energy_worst = energy_worst.max(inc);
        table.rows.extend(rows);
    }
    let sup = table.sup_crossing_error();
    let ratio_worst = sup
        .iter()
        .map(|(e, m)| m / (tol.crossing_factor * e))
        .fold(0.0, f64::max);
    let errs: Vec<f64> = sup.iter().map(|x| x.1).collect();
    let (trend_ok, trend_worst) = trend_decreasing(&errs, tol.inversion);
    let mut summary = vec![
        CriterionStatus::new("7.crossing_error_le_5eps", ratio_worst <= 1.0, ratio_worst, 1.0),
        CriterionStatus::new("7.crossing_error_trend", trend_ok, trend_worst, tol.inversion),
    ];
    let times: Vec<f64> = records[0].times.clone();
    for &t in times.iter().filter(|&&t| t > 0.0) {
        let seq: Vec<f64> = config
            .eps_list
            .iter()
            .map(|&e| {
                table
                    .rows
                    .iter()
                    .find(|r| r.eps == e && (r.time - t).abs() < 1e-12)
                    .map(|r| r.max_crossing_error())
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let (ok, worst) = trend_decreasing(&seq, tol.inversion);
        summary.push(CriterionStatus::new(format!("7.trend_at_t={t}"), ok, worst, tol.inversion));
    }
    if bulk_final.iter().all(|b| b.is_finite()) {
        let (ok, worst) = trend_decreasing(&bulk_final, 0.0);
        summary.push(CriterionStatus::new("8.bulk_error_trend", ok, worst, 0.0));
        let last = *bulk_final.last().expect("non-empty");
        summary.push(CriterionStatus::new("8.bulk_error_smallest_eps", last <= tol.bulk_max, last, tol.bulk_max));
    }
    summary.push(CriterionStatus::new("10.energy_non_increasing", energy_ok, energy_worst, 1e-6));
    let t_end = base.time.t_final;
    let traces: Vec<TraceAtTime> = records
        .iter()
        .map(|r| {
            let k = r.sample_index(t_end);
            TraceAtTime {
                eps: r.eps,
                xs: r.grid.x.nodes().to_vec(),
                trace: r.boundary_trace(k),
            }
        })
        .collect();
    let env = envelope_check(&traces, &trajectory, t_end)?;
    if !config.delta_list.is_empty() {
        let mut rep = Report::new("delta bracket");
        for &d in &config.delta_list {
            let ic = ParticleState::new(base.centers.clone())?;
            let upper = integrate(&ic, layer.c0(), d, Orientation::Sub, base.time.t_final, 1e-10)?;
            let lower = integrate(&ic, layer.c0(), d, Orientation::Super, base.time.t_final, 1e-10)?;
            let mut seq = Vec::new();
            for rec in &records {
                let (outside, width) = delta_bracket(rec, &upper, &lower)?;
                rep.push_le(format!("delta={d}/eps={}/outside", rec.eps), outside, tol.crossing_factor * rec.eps);
                rep.push_ge(format!("delta={d}/eps={}/width", rec.eps), width, 0.0);
                seq.push(if outside < TREND_FLOOR { 0.0 } else { outside });
            }
            let (ok, worst) = trend_decreasing(&seq, tol.inversion);
            rep.push(format!("delta={d}/outside_trend"), ok, worst, tol.inversion);
        }
        summary.push(CriterionStatus::new(
            "envelope_delta",
            rep.all_passed(),
            rep.failures().count() as f64,
            0.0,
        ));
        reports.push(rep);
    }
    summary.push(CriterionStatus::new(
        "envelope",
        env.all_passed(),
        env.failures().count() as f64,
        0.0,
    ));
    reports.push(env);
    if let Some(dir) = out {
        let (header, rows) = table.to_rows();
        io::write_table_csv(&dir.join("convergence.csv"), &header, &rows)?;
        io::write_json(&dir.join("summary.json"), &summary)?;
        io::write_json(&dir.join("reports.json"), &reports)?;
    }
    Ok(SweepOutcome {
        table,
        records,
        trajectory,
        reports,
        summary,
    })
}

/// `E_{k+1} ≤ E_k + tol · E_0` for all `k`; returns the largest relative
/// increase.
pub fn energy_monotone(energy: &[f64], tol: f64) -> (bool, f64) {
    let e0 = energy.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let worst = energy
        .windows(2)
        .map(|w| (w[1] - w[0]) / e0)
        .fold(f64::NEG_INFINITY, f64::max);
    (worst <= tol, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_allows_one_small_inversion() {
        assert!(trend_decreasing(&[3.0, 2.0, 1.0], 0.2).0);
        assert!(trend_decreasing(&[3.0, 3.3, 1.0], 0.2).0);
        assert!(!trend_decreasing(&[3.0, 3.9, 1.0], 0.2).0);
        assert!(!trend_decreasing(&[1.0, 1.1, 0.5, 0.55], 0.2).0);
    }

    #[test]
    fn exact_superposition_has_zero_bulk_error() {
        use crate::grid::{Axis, Grid2D};
        use crate::solver::Snapshot;
        let grid = Grid2D::new(Axis::uniform(-5.0, 5.0, 41).unwrap(), Axis::uniform(0.0, 5.0, 21).unwrap()).unwrap();
        let z = [-0.5, 0.5];
        let ny = grid.ny();
        let vals: Vec<f64> = (0..grid.len())
            .map(|p| {
                let (x, y) = (grid.x.nodes()[p / ny], grid.y.nodes()[p % ny]);
                if y > 0.0 {
                    arctan_superposition(&z, x, y)
                } else {
                    0.0
                }
            })
            .collect();
        let rec = SolutionRecord {
            grid,
            eps: 0.1,
            a: 1.0,
            times: vec![0.0],
            crossings: vec![vec![-0.5, 0.5]],
            energy: vec![1.0],
            snapshots: vec![Snapshot {
                time: 0.0,
                values: vals,
                full: true,
            }],
            config_hash: String::new(),
            steps: 0,
            max_linear_iterations: 0,
        };
        let traj = integrate(&ParticleState::new(z.to_vec()).unwrap(), 2.0 * PI, 0.0, Orientation::None, 0.1, 1e-10).unwrap();
        let rows = bulk_limit_check(&rec, &traj, 0.5).unwrap();
        assert_eq!(rows[0].bulk_error, Some(0.0));
        let (rows, rep) = compare_ode_pde(&rec, &traj, 5.0).unwrap();
        assert_eq!(rows[0].crossing_errors, vec![0.0, 0.0]);
        assert!(rep.all_passed());
        assert!(matches!(bulk_limit_check(&rec, &traj, 0.04), Err(Error::Config(_))));
    }

    #[test]
    fn energy_monotone_detects_increase() {
        assert!(energy_monotone(&[1.0, 0.9, 0.9], 1e-6).0);
        assert!(!energy_monotone(&[1.0, 0.9, 0.95], 1e-6).0);
    }
}
