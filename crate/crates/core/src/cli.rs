//! Experiment runner: configuration, single-chain and ensemble runs, pulse
//! replay, smoothing and verification, with CSV/JSON outputs.
//!
//! Configuration files are TOML with flat `key = value` entries (see
//! [`RunConfig`]); `key=value` overrides from the command line are applied on
//! top. Every output file carries the fully resolved configuration.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{replay, run_control, ControlSettings, GradientOptions, MaskPolicy, PenaltyScope, RunOutcome, SwitchPolicy};
use crate::model::{sample_ensemble, smooth_pulse, ChainSpec, ControlFrame, DisorderSpec, EnsembleStream, PulseMetadata, PulseSchedule};
use crate::mps::Integrator;
use crate::oracle::{compare_replay, gradient_check, GradientCheckConfig, GradientCheckReport, ReplayComparison, MAX_SITES};
use crate::{Error, Result};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "SPINCHAIN_WORKERS";

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    /// Uniform coupling `J`, also the base of disorder ensembles.
    pub coupling: f64,
    /// Explicit couplings for single runs; overrides `coupling`.
    pub couplings: Option<Vec<f64>>,
    pub d_max: usize,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub mask: MaskPolicy,
    pub penalty: PenaltyScope,
    pub tau_switch: f64,
    pub window: usize,
    pub eps_sat: f64,
    pub grad_floor: f64,
    pub include_delta_term: bool,
    pub kick_seed: u64,
    /// Run duration cap; `4 N / J` when absent.
    pub t_max: Option<f64>,
    pub integrator: Integrator,
    pub disorder_lo: f64,
    pub disorder_hi: f64,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Ensemble a stored pulse is applied to.
    pub apply_stream: EnsembleStream,
    pub output_dir: PathBuf,
    /// Write every `stride`-th trajectory row (the last row is always written).
    pub stride: usize,
    pub smooth_window: i64,
    /// Required peak of the ensemble-mean `c_{1N}`.
    pub peak_threshold: Option<f64>,
    /// Latest admissible time of that peak.
    pub peak_time_threshold: Option<f64>,
    pub verify_states: usize,
    pub verify_frames: usize,
    pub verify_seed: u64,
    /// Integrator substeps per interval in the oracle replay.
    pub verify_substeps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = ControlSettings::default();
        Self {
            n: 10,
            coupling: 1.0,
            couplings: None,
            d_max: s.d_max,
            beta: s.beta,
            delta: s.delta,
            mu: s.mu,
            alpha: s.alpha,
            mask: s.mask,
            penalty: s.penalty,
            tau_switch: s.switch.tau_switch,
            window: s.switch.window,
            eps_sat: s.switch.eps_sat,
            grad_floor: s.grad_floor,
            include_delta_term: s.gradient.include_delta_term,
            kick_seed: s.kick_seed,
            t_max: None,
            integrator: s.integrator,
            disorder_lo: 0.9,
            disorder_hi: 1.1,
            ensemble_size: 50,
            seed: 2024,
            apply_stream: EnsembleStream::Test,
            output_dir: PathBuf::from("out"),
            stride: 1,
            smooth_window: 5,
            peak_threshold: None,
            peak_time_threshold: None,
            verify_states: 100,
            verify_frames: 1000,
            verify_seed: 7,
            verify_substeps: 16,
        }
    }
}

fn parse_override(item: &str) -> Result<toml::Table> {
    let (key, value) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let line = format!("{key} = {value}");
    match line.parse::<toml::Table>() {
        Ok(t) => Ok(t),
        Err(_) => format!("{key} = {}", toml::Value::String(value.to_string()))
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(e.to_string())),
    }
}

impl RunConfig {
    /// Reads an optional TOML file and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => fs::read_to_string(p)?.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for item in overrides {
            table.extend(parse_override(item)?);
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max.unwrap_or(4.0 * self.n as f64 / self.coupling.abs().max(f64::MIN_POSITIVE))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::ChainTooShort(self.n));
        }
        if let Some(c) = &self.couplings {
            ChainSpec::with_sites(self.n, c.clone())?;
        }
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(Error::Config(format!("coupling must be positive, got {}", self.coupling)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        let settings = self.settings();
        settings.validate()?;
        let minimum = (self.n - 1) as f64 * (self.window + 1) as f64 * self.delta;
        if self.t_max() < minimum {
            return Err(Error::Config(format!(
                "t_max {} is shorter than N-1 stall windows ({minimum})",
                self.t_max()
            )));
        }
        if self.ensemble_size == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if self.smooth_window < 1 || self.smooth_window % 2 == 0 {
            return Err(Error::InvalidWindow(self.smooth_window));
        }
        Ok(())
    }

    pub fn settings(&self) -> ControlSettings {
        ControlSettings {
            beta: self.beta,
            delta: self.delta,
            mu: self.mu,
            alpha: self.alpha,
            mask: self.mask,
            penalty: self.penalty,
            switch: SwitchPolicy { tau_switch: self.tau_switch, window: self.window, eps_sat: self.eps_sat },
            grad_floor: self.grad_floor,
            gradient: GradientOptions { include_delta_term: self.include_delta_term },
            kick_seed: self.kick_seed,
            t_max: self.t_max(),
            d_max: self.d_max,
            integrator: self.integrator,
        }
    }

    /// The ordered (or explicitly given) chain of single runs.
    pub fn chain(&self) -> Result<ChainSpec> {
        match &self.couplings {
            Some(c) => ChainSpec::with_sites(self.n, c.clone()),
            None => ChainSpec::uniform(self.n, self.coupling),
        }
    }

    pub fn disorder(&self) -> DisorderSpec {
        DisorderSpec {
            n: self.n,
            base: self.coupling,
            lo: self.disorder_lo,
            hi: self.disorder_hi,
            seed: self.seed,
            count: self.ensemble_size,
        }
    }

    pub fn ensemble(&self, stream: EnsembleStream) -> Result<Vec<ChainSpec>> {
        sample_ensemble(&self.disorder().with_stream(stream))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Header block of a pulse file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseHeader {
    pub n: usize,
    pub delta: f64,
    pub intervals: usize,
    pub switch_times: Vec<f64>,
    pub switch_intervals: Vec<usize>,
    pub metadata: PulseMetadata,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes one row per control interval (every `stride`-th, plus the last).
pub fn write_trajectory(path: &Path, outcome: &RunOutcome, cfg: &RunConfig) -> Result<()> {
    let mut w = create(path)?;
    let n = outcome.n();
    writeln!(w, "# spinchain trajectory")?;
    writeln!(w, "# config: {}", cfg.to_json())?;
    let mut cols = vec!["t".to_string(), "current_target_j".into(), "tau".into()];
    cols.extend((2..=n).map(|k| format!("c_1_{k}")));
    cols.push("cumulative_discarded_weight".into());
    writeln!(w, "{}", cols.join(","))?;
    let last = outcome.rows.len().saturating_sub(1);
    for (i, r) in outcome.rows.iter().enumerate() {
        if (i + 1) % cfg.stride != 0 && i != last {
            continue;
        }
        write!(w, "{},{},{}", r.t, r.target + 1, r.tau)?;
        for c in &r.concurrence {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",{}", r.discarded_weight)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the non-zero field entries of a pulse, sites one-based.
pub fn write_pulse(path: &Path, schedule: &PulseSchedule, cfg: &RunConfig) -> Result<()> {
    let delta = schedule.frames.first().map_or(cfg.delta, |f| f.duration);
    let header = PulseHeader {
        n: schedule.n(),
        delta,
        intervals: schedule.frames.len(),
        switch_times: schedule.switch_times.clone(),
        switch_intervals: schedule.switch_intervals.clone(),
        metadata: schedule.metadata.clone(),
    };
    let mut w = create(path)?;
    writeln!(w, "# spinchain pulse")?;
    writeln!(w, "# pulse: {}", serde_json::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?)?;
    writeln!(w, "# config: {}", cfg.to_json())?;
    writeln!(w, "interval_index,t_start,site,g_x,g_y")?;
    for (k, f) in schedule.frames.iter().enumerate() {
        let t_start = k as f64 * delta;
        for (site, &[gx, gy]) in f.fields.iter().enumerate() {
            if gx != 0.0 || gy != 0.0 {
                writeln!(w, "{k},{t_start},{},{gx},{gy}", site + 1)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>, line: usize) -> Result<T> {
    s.and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("malformed pulse row at line {line}")))
}

pub fn read_pulse(path: &Path) -> Result<PulseSchedule> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut header: Option<PulseHeader> = None;
    let mut frames: Vec<ControlFrame> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix("# pulse: ") {
            let h: PulseHeader = serde_json::from_str(rest).map_err(|e| Error::Parse(e.to_string()))?;
            frames = vec![ControlFrame::zero(h.n, h.delta); h.intervals];
            header = Some(h);
            continue;
        }
        if line.starts_with('#') || line.starts_with("interval_index") || line.trim().is_empty() {
            continue;
        }
        let h = header.as_ref().ok_or_else(|| Error::Parse("pulse rows before the header".into()))?;
        let mut parts = line.split(',');
        let k: usize = parse_field(parts.next(), lineno)?;
        let _t: f64 = parse_field(parts.next(), lineno)?;
        let site: usize = parse_field(parts.next(), lineno)?;
        let gx: f64 = parse_field(parts.next(), lineno)?;
        let gy: f64 = parse_field(parts.next(), lineno)?;
        if k >= h.intervals || site == 0 || site > h.n {
            return Err(Error::Parse(format!("pulse row out of range at line {lineno}")));
        }
        frames[k].fields[site - 1] = [gx, gy];
    }
    let h = header.ok_or_else(|| Error::Parse("missing pulse header".into()))?;
    let schedule = PulseSchedule {
        frames,
        switch_times: h.switch_times,
        switch_intervals: h.switch_intervals,
        metadata: h.metadata,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Peak of one concurrence `c_{1j}` (one-based `j`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakEntry {
    pub j: usize,
    /// Peak of the ensemble-mean trajectory.
    pub peak: f64,
    pub time: f64,
    /// Mean over members of each member's own peak.
    pub mean_member_peak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value >= threshold }
    }

    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub n: usize,
    pub members: usize,
    pub peaks: Vec<PeakEntry>,
    pub member_peaks: Vec<Vec<f64>>,
    pub switch_times: Vec<f64>,
    pub total_duration: f64,
    pub final_discarded_weight: f64,
    pub completed: bool,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub config: RunConfig,
}

impl Summary {
    /// Peak entry of `c_{1j}` (one-based `j`).
    pub fn peak(&self, j: usize) -> &PeakEntry {
        &self.peaks[j - 2]
    }
}

pub fn summarize(command: &str, outcome: &RunOutcome, cfg: &RunConfig, require_completion: bool) -> Summary {
    let n = outcome.n();
    let peaks: Vec<PeakEntry> = (1..n)
        .map(|k| {
            let (peak, time) = outcome.peak(k);
            PeakEntry { j: k + 1, peak, time, mean_member_peak: outcome.mean_member_peak(k) }
        })
        .collect();
    let mut checks = Vec::new();
    if require_completion {
        checks.push(Check::at_least("completed", f64::from(u8::from(outcome.completed)), 1.0));
    }
    let last = peaks.last().expect("n >= 2");
    if let Some(th) = cfg.peak_threshold {
        checks.push(Check::at_least("peak_c_1N", last.peak, th));
    }
    if let Some(th) = cfg.peak_time_threshold {
        checks.push(Check::at_most("peak_time_c_1N", last.time, th));
    }
    let passed = checks.iter().all(|c| c.passed);
    Summary {
        command: command.into(),
        n,
        members: outcome.members.len(),
        member_peaks: outcome.members.iter().map(|m| m.peaks.clone()).collect(),
        peaks,
        switch_times: outcome.schedule.switch_times.clone(),
        total_duration: outcome.total_duration(),
        final_discarded_weight: outcome.final_discarded_weight(),
        completed: outcome.completed,
        checks,
        passed,
        config: cfg.clone(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Outputs of one command.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub outcome: RunOutcome,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

fn finish(command: &str, prefix: &str, outcome: RunOutcome, cfg: &RunConfig, write_schedule: bool, require_completion: bool) -> Result<Artifacts> {
    let dir = &cfg.output_dir;
    let mut files = vec![dir.join(format!("{prefix}trajectory.csv")), dir.join(format!("{prefix}summary.json"))];
    write_trajectory(&files[0], &outcome, cfg)?;
    let summary = summarize(command, &outcome, cfg, require_completion);
    write_json(&files[1], &summary)?;
    if write_schedule {
        let p = dir.join("pulse.csv");
        write_pulse(&p, &outcome.schedule, cfg)?;
        files.push(p);
    }
    Ok(Artifacts { outcome, summary, files })
}

/// Closed-loop control of the single chain of `cfg`.
pub fn run_single(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let chain = cfg.chain()?;
    let outcome = run_control(&[chain], &cfg.settings(), vec![cfg.kick_seed])?;
    finish("run", "", outcome, cfg, true, true)
}

/// One pulse trained on the training ensemble of `cfg`.
pub fn run_ensemble_train(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let chains = cfg.ensemble(EnsembleStream::Train)?;
    let outcome = run_control(&chains, &cfg.settings(), vec![cfg.seed, cfg.kick_seed])?;
    finish("train", "train_", outcome, cfg, true, true)
}

/// Open-loop replay of a stored pulse on the `apply_stream` ensemble.
pub fn run_apply(cfg: &RunConfig, pulse: &Path) -> Result<Artifacts> {
    cfg.validate()?;
    let schedule = read_pulse(pulse)?;
    if schedule.n() != cfg.n {
        return Err(Error::SizeMismatch(format!("pulse for {} sites, config for {}", schedule.n(), cfg.n)));
    }
    let chains = cfg.ensemble(cfg.apply_stream)?;
    let outcome = replay(&chains, &schedule, &cfg.settings())?;
    finish("apply", "apply_", outcome, cfg, false, false)
}

/// Smooths a stored pulse and writes it to `output`.
pub fn smooth(cfg: &RunConfig, input: &Path, output: &Path) -> Result<PulseSchedule> {
    let schedule = read_pulse(input)?;
    let smoothed = smooth_pulse(&schedule, cfg.smooth_window)?;
    write_pulse(output, &smoothed, cfg)?;
    Ok(smoothed)
}

/// Bond-dimension convergence of the closed loop and of a fixed pulse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BondStudy {
    pub d_low: usize,
    pub d_high: usize,
    /// Max `|Δc_{1j}|` between independent closed-loop runs at both caps.
    pub closed_loop_deviation: f64,
    /// Max `|Δc_{1j}|` when the `d_high` pulse is replayed at `d_low`.
    pub replay_deviation: f64,
    pub peak_low: f64,
    pub peak_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub oracle: Option<ReplayComparison>,
    pub bond_dimension: BondStudy,
    pub gradient: Option<GradientCheckReport>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub config: RunConfig,
}

/// Largest `|Δc_{1j}|` over the common rows of two trajectories.
pub fn max_concurrence_deviation(a: &RunOutcome, b: &RunOutcome) -> f64 {
    a.rows
        .iter()
        .zip(&b.rows)
        .flat_map(|(x, y)| x.concurrence.iter().zip(&y.concurrence).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn bond_study(cfg: &RunConfig) -> Result<BondStudy> {
    let chain = cfg.chain()?;
    let low = ControlSettings { d_max: cfg.d_max, ..cfg.settings() };
    let high = ControlSettings { d_max: 2 * cfg.d_max, ..cfg.settings() };
    let run_low = run_control(std::slice::from_ref(&chain), &low, vec![cfg.kick_seed])?;
    let run_high = run_control(std::slice::from_ref(&chain), &high, vec![cfg.kick_seed])?;
    let replayed = replay(std::slice::from_ref(&chain), &run_high.schedule, &low)?;
    let n = chain.n();
    Ok(BondStudy {
        d_low: low.d_max,
        d_high: high.d_max,
        closed_loop_deviation: max_concurrence_deviation(&run_low, &run_high),
        replay_deviation: max_concurrence_deviation(&replayed, &run_high),
        peak_low: run_low.peak(n - 1).0,
        peak_high: run_high.peak(n - 1).0,
    })
}

/// Closed-loop run at exact bond dimension with the fourth-order splitting,
/// replayed on the dense reference.
pub fn oracle_study(cfg: &RunConfig) -> Result<ReplayComparison> {
    let chain = cfg.chain()?;
    let exact = 1usize << (cfg.n / 2);
    let settings = ControlSettings { d_max: exact, integrator: Integrator::Fourth, ..cfg.settings() };
    let run = run_control(std::slice::from_ref(&chain), &settings, vec![cfg.kick_seed])?;
    compare_replay(&chain, &run.schedule, exact, Integrator::Fourth, cfg.verify_substeps, 1000)
}

/// Oracle cross-checks (for `n ≤ 10`), bond-dimension convergence and the
/// gradient validation suite.
pub fn run_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let oracle = if cfg.n <= 10.min(MAX_SITES) {
        let r = oracle_study(cfg)?;
        checks.push(Check::at_least("oracle_min_fidelity", r.min_fidelity, 1.0 - 1e-8));
        checks.push(Check::at_most("oracle_max_rdm_deviation", r.max_rdm_deviation, 1e-9));
        Some(r)
    } else {
        None
    };
    let bond_dimension = bond_study(cfg)?;
    checks.push(Check::at_most("bond_dimension_replay_deviation", bond_dimension.replay_deviation, 5e-3));
    let gradient = if cfg.verify_states > 0 {
        let r = gradient_check(&GradientCheckConfig {
            states: cfg.verify_states,
            frames: cfg.verify_frames,
            seed: cfg.verify_seed,
            beta: cfg.beta,
            ..Default::default()
        })?;
        checks.push(Check { name: "gradient_min_cosine".into(), value: r.min_cosine, threshold: 0.999, passed: r.min_cosine > 0.999 });
        checks.push(Check::at_least("argmax_min_margin", r.min_argmax_margin, -1e-6));
        Some(r)
    } else {
        None
    };
    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport { oracle, bond_dimension, gradient, checks, passed, config: cfg.clone() };
    write_json(&cfg.output_dir.join("verify.json"), &report)?;
    Ok(report)
}

/// Sizes the global worker pool from [`WORKERS_ENV`], if set.
pub fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let threads: usize = v.parse().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}
