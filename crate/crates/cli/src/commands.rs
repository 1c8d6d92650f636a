//! The four subcommands as library functions. Each returns the text it
//! would write so tests can drive them without a process.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use legmhe::fif::{solve_fif, FifProblem};
use legmhe::math::{UnitQuat, GRAVITY};
use legmhe::mhe::LoMode;
use legmhe::pipeline::{group_ticks, Estimate, EstimatorConfig, InitialState, Pipeline, PipelineStats, Tick, Truth};
use legmhe::sim::simulate;
use nalgebra::Vector3;

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::log::{LogHeader, SensorLog};
use crate::metrics::{compute_metrics, timing_stats, MetricsReport, TimingStats};

/// Longest log the full-information comparison accepts.
pub const FIF_MAX_TICKS: usize = 1000;

/// Command-line settings that override the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub window: Option<usize>,
    pub no_vo: bool,
    pub lo_mode: Option<LoMode>,
}

/// The estimator keys are checked too, so one config file fails early in
/// the same way for every command.
pub fn simulate_log(cfg: &ConfigFile, seed: Option<u64>, config_path: &str) -> Result<SensorLog, CliError> {
    let mut sim = cfg.sim_config().map_err(|message| CliError::ConfigParse { path: config_path.into(), message })?;
    if let Some(s) = seed {
        sim.seed = s;
    }
    let header = LogHeader::from_sim(&sim);
    estimator_config(cfg, &header, &Overrides::default(), config_path)?;
    Ok(SensorLog { header, records: simulate(&sim) })
}

pub fn estimator_config(
    cfg: &ConfigFile,
    header: &LogHeader,
    ov: &Overrides,
    config_path: &str,
) -> Result<EstimatorConfig, CliError> {
    let mut c = cfg.estimator_config(header).map_err(|message| CliError::ConfigParse { path: config_path.into(), message })?;
    if let Some(w) = ov.window {
        if w == 0 {
            return Err(CliError::InvalidArgument("window must be at least 1".into()));
        }
        c.noise.window_size = w;
    }
    if ov.no_vo {
        c.noise.use_vo = false;
    }
    if let Some(m) = ov.lo_mode {
        c.noise.lo_mode = m;
    }
    Ok(c)
}

/// Start from ground truth when the first tick carries it; otherwise level
/// the body with the accelerometer and place the feet from leg odometry.
pub fn initial_state(tick: &Tick) -> InitialState {
    if let Some(t) = &tick.truth {
        return InitialState::from(t);
    }
    let up = tick.accel.try_normalize(1e-9).unwrap_or_else(Vector3::z);
    let target = -GRAVITY.normalize();
    // Rotation taking the body-frame "up" onto the world one.
    let axis = up.cross(&target);
    let angle = up.dot(&target).clamp(-1.0, 1.0).acos();
    let q = match axis.try_normalize(1e-12) {
        Some(a) => UnitQuat::exp(&(a * angle)),
        None if angle > 1.0 => UnitQuat::exp(&(Vector3::x() * angle)),
        None => UnitQuat::IDENTITY,
    };
    let feet = tick.legs.iter().map(|l| l.map_or_else(Vector3::zeros, |s| q.rotate(&s.rel_position))).collect();
    InitialState { p: Vector3::zeros(), v: Vector3::zeros(), q, feet }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub estimates: Vec<Estimate>,
    pub truth: Vec<Option<Truth>>,
    /// Wall time of each tick (µs).
    pub solve_us: Vec<f64>,
    pub stats: PipelineStats,
}

impl RunOutput {
    pub fn metrics(&self) -> MetricsReport {
        compute_metrics(&self.estimates, &self.truth)
    }

    pub fn timing(&self) -> TimingStats {
        timing_stats(&self.solve_us)
    }
}

pub fn ticks_of(log: &SensorLog) -> Vec<Tick> {
    group_ticks(&log.records, log.header.feet)
}

/// Runs the estimator over every tick of a log.
pub fn run_estimator(ticks: &[Tick], cfg: &EstimatorConfig) -> Result<RunOutput, CliError> {
    let mut out = RunOutput::default();
    let Some(first) = ticks.first() else { return Ok(out) };
    let mut p = Pipeline::new(cfg.clone(), initial_state(first), false);
    for tick in ticks {
        let start = Instant::now();
        let est = p.step(tick)?;
        out.solve_us.push(start.elapsed().as_secs_f64() * 1e6);
        out.estimates.push(est);
        out.truth.push(tick.truth.clone());
    }
    out.stats = p.stats();
    Ok(out)
}

pub fn trace_csv(estimates: &[Estimate], n_feet: usize) -> String {
    let mut s = String::from("t,px,py,pz,vx,vy,vz,qx,qy,qz,qw");
    for i in 0..n_feet {
        let _ = write!(s, ",foot{i}_x,foot{i}_y,foot{i}_z");
    }
    s.push_str(",bax,bay,baz\n");
    for e in estimates {
        let _ = write!(s, "{:.9}", e.t);
        let x = &e.state;
        let q = &e.q;
        let mut vals: Vec<f64> = x.p.iter().chain(x.v.iter()).copied().collect();
        vals.extend([q.x, q.y, q.z, q.w]);
        for f in &x.feet {
            vals.extend(f.iter());
        }
        vals.extend(x.accel_bias.iter());
        for v in vals {
            let _ = write!(s, ",{v:.9}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub window: usize,
    pub metrics: MetricsReport,
    pub timing: TimingStats,
}

pub fn sweep_window(ticks: &[Tick], base: &EstimatorConfig, sizes: &[usize]) -> Result<Vec<SweepRow>, CliError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::InvalidArgument("window sizes must be a non-empty list of positive integers".into()));
    }
    sizes
        .iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.noise.window_size = n;
            let run = run_estimator(ticks, &cfg)?;
            Ok(SweepRow { window: n, metrics: run.metrics(), timing: run.timing() })
        })
        .collect()
}

/// Accuracy columns only, so the table is reproducible.
pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("window,rmse_velocity_body,rmse_euler,rmse_height\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(s, "{},{:.12e},{:.12e},{:.12e}", r.window, m.rmse_velocity, m.rmse_euler, m.rmse_height);
    }
    s
}

pub fn sweep_timing_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("window,solve_us_mean,solve_us_p99\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.3},{:.3}", r.window, r.timing.mean_us, r.timing.p99_us);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FifComparison {
    pub ticks: usize,
    pub window: usize,
    /// max over ticks of ‖x_mhe − x_fif‖∞ / max(‖x_fif‖∞, 1).
    pub max_deviation: f64,
    pub worst_tick: usize,
}

impl FifComparison {
    pub fn to_text(&self) -> String {
        format!(
            "ticks={}\nwindow={}\nmax_relative_deviation={:.6e}\nworst_tick={}\n",
            self.ticks, self.window, self.max_deviation, self.worst_tick
        )
    }
}

/// Runs the estimator and, at every tick, the full-information problem over
/// everything seen so far. `corrupt_arrival` scales the arrival-cost Hessian
/// once, after the first tick, to check that the comparison can fail.
pub fn compare_fif(ticks: &[Tick], cfg: &EstimatorConfig, corrupt_arrival: Option<f64>) -> Result<FifComparison, CliError> {
    if ticks.len() > FIF_MAX_TICKS {
        return Err(CliError::LogTooLong { ticks: ticks.len(), max: FIF_MAX_TICKS });
    }
    let mut out = FifComparison { ticks: ticks.len(), window: cfg.noise.window_size, max_deviation: 0.0, worst_tick: 0 };
    let Some(first) = ticks.first() else { return Ok(out) };
    let mut p = Pipeline::new(cfg.clone(), initial_state(first), true);
    for (k, tick) in ticks.iter().enumerate() {
        let est = p.step(tick)?;
        let mhe = p.mhe().expect("started");
        let problem = FifProblem::from_estimator(mhe).expect("history kept");
        let fif = solve_fif(&problem, problem.nodes.len() - 1)
            .map_err(|e| CliError::SolverFailure { tick: k, message: e.to_string() })?;
        let (a, b) = (est.state.to_vector(), fif.to_vector());
        let d = (a - &b).amax() / b.amax().max(1.0);
        if d > out.max_deviation || d.is_nan() {
            out.max_deviation = d;
            out.worst_tick = k;
        }
        if k == 0 {
            if let Some(f) = corrupt_arrival {
                p.mhe_mut().expect("started").perturb_arrival(f);
            }
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use legmhe::sim::{Scenario, SimConfig};

    fn log(scenario: Scenario, duration: f64, seed: u64) -> SensorLog {
        let sim = SimConfig { scenario, duration, seed, ..SimConfig::default() };
        SensorLog { header: LogHeader::from_sim(&sim), records: simulate(&sim) }
    }

    #[test]
    fn trace_times_are_imu_times() {
        let l = log(Scenario::Trot, 0.2, 2);
        let ticks = ticks_of(&l);
        let cfg = estimator_config(&ConfigFile::default(), &l.header, &Overrides::default(), "-").unwrap();
        let run = run_estimator(&ticks, &cfg).unwrap();
        let csv = trace_csv(&run.estimates, 4);
        let imu: Vec<String> = l
            .records
            .iter()
            .filter_map(|r| matches!(r, legmhe::sim::SensorRecord::Imu { .. }).then(|| format!("{:.9}", r.time())))
            .collect();
        let traced: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
        assert_eq!(traced, imu);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 11 + 12 + 3);
    }

    #[test]
    fn sensor_only_start_is_level() {
        let l = log(Scenario::Static, 0.05, 1);
        let mut ticks = ticks_of(&l);
        let truth = ticks[0].truth.take().unwrap();
        let init = initial_state(&ticks[0]);
        let (a, b) = (init.q.euler_zyx(), truth.q.euler_zyx());
        assert!((a[0] - b[0]).abs() < 0.05 && (a[1] - b[1]).abs() < 0.05);
        assert_eq!(init.feet.len(), 4);
    }

    #[test]
    fn fif_comparison_and_mutation() {
        let l = log(Scenario::Hopper, 0.3, 5);
        let ticks = ticks_of(&l);
        let ov = Overrides { window: Some(5), ..Default::default() };
        let cfg = estimator_config(&ConfigFile::default(), &l.header, &ov, "-").unwrap();
        let ok = compare_fif(&ticks, &cfg, None).unwrap();
        assert!(ok.max_deviation <= 1e-8, "{ok:?}");
        let bad = compare_fif(&ticks, &cfg, Some(10.0)).unwrap();
        assert!(bad.max_deviation > 1e-6, "{bad:?}");
    }

    #[test]
    fn rejects_long_logs_and_bad_sizes() {
        let ticks = vec![ticks_of(&log(Scenario::Static, 0.01, 1))[0].clone(); FIF_MAX_TICKS + 1];
        let cfg = EstimatorConfig::default();
        assert!(matches!(compare_fif(&ticks, &cfg, None), Err(CliError::LogTooLong { .. })));
        assert!(matches!(sweep_window(&ticks, &cfg, &[0]), Err(CliError::InvalidArgument(_))));
    }
}
