use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gradient::{assemble_gradient, reduced_mask, select_frame, FieldGradient, GradientOptions};
use super::scheduler::{SchedulerState, SwitchEvent, SwitchPolicy};
use crate::entanglement::{concurrence, tau, TargetSpec};
use crate::model::{ChainSpec, ControlFrame, PulseMetadata, PulseSchedule};
use crate::mps::{Environments, Integrator, MpsState};
use crate::{Error, Result};

/// Which sites carry penalty terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyScope {
    /// The sites of the control mask.
    #[default]
    Mask,
    /// The sites of the control mask and site 1, the neighbour of the anchor.
    Anchor,
    /// Every site other than the target pair.
    All,
}

impl PenaltyScope {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyScope::Mask => "mask",
            PenaltyScope::Anchor => "anchor",
            PenaltyScope::All => "all",
        }
    }
}

/// Which sites carry fields (and, with [`PenaltyScope::Mask`], penalty terms).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPolicy {
    #[default]
    Full,
    /// Site 0 and the five sites around the current target.
    Reduced,
}

impl MaskPolicy {
    pub fn mask(self, j: usize, n: usize) -> Result<Vec<bool>> {
        match self {
            MaskPolicy::Full => Ok(vec![true; n]),
            MaskPolicy::Reduced => reduced_mask(j, n),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskPolicy::Full => "full",
            MaskPolicy::Reduced => "reduced",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSettings {
    /// Per-site field magnitude `β`.
    pub beta: f64,
    /// Control interval `Δ`; one propagation step per interval.
    pub delta: f64,
    pub mu: f64,
    /// Penalty weight `α_k` on every penalized site.
    pub alpha: f64,
    pub mask: MaskPolicy,
    pub penalty: PenaltyScope,
    pub switch: SwitchPolicy,
    pub grad_floor: f64,
    pub gradient: GradientOptions,
    /// Seed of the frames used while the gradient vanishes identically.
    pub kick_seed: u64,
    /// Hard cap on the run duration.
    pub t_max: f64,
    pub d_max: usize,
    pub integrator: Integrator,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            beta: 70.0,
            delta: 1e-3,
            mu: 0.0,
            alpha: 1.0,
            mask: MaskPolicy::Full,
            penalty: PenaltyScope::Mask,
            switch: SwitchPolicy::default(),
            grad_floor: super::GRADIENT_FLOOR,
            gradient: GradientOptions::default(),
            kick_seed: 0,
            t_max: 100.0,
            d_max: 20,
            integrator: Integrator::Strang,
        }
    }
}

impl ControlSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::NonPositiveBeta(self.beta));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::NonPositiveStep(self.delta));
        }
        if !(self.mu >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::Config("mu and alpha must be non-negative".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::Config(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.d_max == 0 {
            return Err(Error::InvalidBondCap);
        }
        if !(self.grad_floor >= 0.0) {
            return Err(Error::Config("gradient floor must be non-negative".into()));
        }
        self.switch.validate()
    }

    pub fn target(&self, j: usize, n: usize) -> Result<(TargetSpec, Vec<bool>)> {
        let mask = self.mask.mask(j, n)?;
        let target = match self.penalty {
            PenaltyScope::Mask => TargetSpec::masked(n, j, self.mu, self.alpha, &mask)?,
            PenaltyScope::Anchor => {
                let mut penalized = mask.clone();
                penalized[1] = true;
                TargetSpec::masked(n, j, self.mu, self.alpha, &penalized)?
            }
            PenaltyScope::All => TargetSpec::uniform(n, j, self.mu, self.alpha)?,
        };
        Ok((target, mask))
    }

    fn metadata(&self, n: usize, seeds: Vec<u64>) -> PulseMetadata {
        PulseMetadata {
            n,
            beta: self.beta,
            delta: self.delta,
            mu: self.mu,
            alpha: self.alpha,
            mask: self.mask.name().into(),
            penalty: self.penalty.name().into(),
            seeds,
        }
    }
}

/// Ensemble-averaged observables at the end of one control interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    /// Target site `j` (zero-based) active during the interval.
    pub target: usize,
    pub tau: f64,
    /// `c_{0,k}` for `k = 1 … n−1`.
    pub concurrence: Vec<f64>,
    /// Largest accumulated discarded weight over the members.
    pub discarded_weight: f64,
}

/// Per-member peak concurrences `max_t c_{0,k}(t)` and their times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub peaks: Vec<f64>,
    pub peak_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub schedule: PulseSchedule,
    pub rows: Vec<TrajectoryRow>,
    pub members: Vec<MemberReport>,
    /// Whether the final target saturated before `t_max`.
    pub completed: bool,
}

impl RunOutcome {
    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    /// Peak of the ensemble-mean `c_{0,k}` trajectory and its time.
    pub fn peak(&self, k: usize) -> (f64, f64) {
        self.rows
            .iter()
            .map(|r| (r.concurrence[k - 1], r.t))
            .fold((0.0, 0.0), |best, x| if x.0 > best.0 { x } else { best })
    }

    /// Mean over members of each member's own peak of `c_{0,k}`.
    pub fn mean_member_peak(&self, k: usize) -> f64 {
        self.members.iter().map(|m| m.peaks[k - 1]).sum::<f64>() / self.members.len() as f64
    }

    pub fn final_discarded_weight(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.discarded_weight)
    }

    pub fn total_duration(&self) -> f64 {
        self.schedule.total_duration()
    }
}

struct Observation {
    tau: f64,
    concurrence: Vec<f64>,
    discarded: f64,
}

fn observe(state: &MpsState, env: &Environments<'_>, target: &TargetSpec) -> Result<Observation> {
    let tau = tau(env, target)?;
    let concurrence = env.pair_rdms(0)?.iter().map(concurrence).collect::<Result<Vec<_>>>()?;
    Ok(Observation { tau, concurrence, discarded: state.discarded_weight() })
}

fn fresh_states(chains: &[ChainSpec], settings: &ControlSettings) -> Result<Vec<MpsState>> {
    let n = chains.first().ok_or(Error::EmptyEnsemble)?.n();
    if let Some(c) = chains.iter().find(|c| c.n() != n) {
        return Err(Error::SizeMismatch(format!("ensemble mixes {n} and {} sites", c.n())));
    }
    chains
        .iter()
        .map(|_| {
            let mut s = MpsState::all_plus(n, settings.d_max)?;
            s.set_integrator(settings.integrator);
            Ok(s)
        })
        .collect()
}

/// Gradient per member (in parallel), ordered mean, one shared frame applied
/// to every member.
pub fn ensemble_control_step(
    states: &mut [MpsState],
    chains: &[ChainSpec],
    target: &TargetSpec,
    mask: &[bool],
    settings: &ControlSettings,
    interval: u64,
) -> Result<ControlFrame> {
    if states.len() != chains.len() {
        return Err(Error::SizeMismatch(format!("{} states for {} chains", states.len(), chains.len())));
    }
    let grads: Vec<FieldGradient> = states
        .par_iter()
        .zip(chains.par_iter())
        .map(|(s, c)| assemble_gradient(&s.environments(), c, target, mask, settings.gradient))
        .collect::<Result<_>>()?;
    let mean = FieldGradient::mean(&grads)?;
    let frame = select_frame(&mean, mask, settings.beta, settings.delta, settings.grad_floor, settings.kick_seed, interval)?;
    states
        .par_iter_mut()
        .zip(chains.par_iter())
        .try_for_each(|(s, c)| s.step(c, &frame, settings.delta))?;
    Ok(frame)
}

struct Recorder {
    rows: Vec<TrajectoryRow>,
    members: Vec<MemberReport>,
}

impl Recorder {
    fn new(m: usize, n: usize) -> Self {
        Self { rows: Vec::new(), members: vec![MemberReport { peaks: vec![0.0; n - 1], peak_times: vec![0.0; n - 1] }; m] }
    }

    /// Observes every member after an interval and returns the mean `τ`.
    fn record(&mut self, states: &[MpsState], target: &TargetSpec, t: f64) -> Result<f64> {
        let obs: Vec<Observation> = states
            .par_iter()
            .map(|s| observe(s, &s.environments(), target))
            .collect::<Result<_>>()?;
        let m = obs.len() as f64;
        let k = obs[0].concurrence.len();
        let mut mean_c = vec![0.0; k];
        let mut mean_tau = 0.0;
        let mut discarded = 0.0f64;
        for (o, rep) in obs.iter().zip(self.members.iter_mut()) {
            mean_tau += o.tau;
            discarded = discarded.max(o.discarded);
            for (i, &c) in o.concurrence.iter().enumerate() {
                mean_c[i] += c;
                if c > rep.peaks[i] {
                    rep.peaks[i] = c;
                    rep.peak_times[i] = t;
                }
            }
        }
        mean_tau /= m;
        for c in mean_c.iter_mut() {
            *c /= m;
        }
        self.rows.push(TrajectoryRow { t, target: target.pair().1, tau: mean_tau, concurrence: mean_c, discarded_weight: discarded });
        Ok(mean_tau)
    }
}

/// Closed-loop synthesis of one pulse for all `chains`, starting from
/// `|+>^{⊗N}` and sweeping the target from `(0,1)` to `(0,N−1)`.
pub fn run_control(chains: &[ChainSpec], settings: &ControlSettings, seeds: Vec<u64>) -> Result<RunOutcome> {
    settings.validate()?;
    let mut states = fresh_states(chains, settings)?;
    let n = states[0].n();
    let mut scheduler = SchedulerState::new(n, settings.switch)?;
    let mut schedule = PulseSchedule::new(settings.metadata(n, seeds));
    let mut recorder = Recorder::new(chains.len(), n);
    let max_intervals = (settings.t_max / settings.delta).round() as usize;
    for k in 0..max_intervals {
        let (target, mask) = settings.target(scheduler.target(), n)?;
        let frame = ensemble_control_step(&mut states, chains, &target, &mask, settings, k as u64)?;
        schedule.frames.push(frame);
        let t = (k + 1) as f64 * settings.delta;
        let tau_mean = recorder.record(&states, &target, t)?;
        if scheduler.advance(tau_mean, t, k) == SwitchEvent::Completed {
            break;
        }
    }
    schedule.switch_times = scheduler.switch_times().to_vec();
    schedule.switch_intervals = scheduler.switch_intervals().to_vec();
    Ok(RunOutcome { schedule, rows: recorder.rows, members: recorder.members, completed: scheduler.is_completed() })
}

/// Open-loop replay of a stored pulse on `chains`.
pub fn replay(chains: &[ChainSpec], schedule: &PulseSchedule, settings: &ControlSettings) -> Result<RunOutcome> {
    settings.validate()?;
    schedule.validate()?;
    let mut states = fresh_states(chains, settings)?;
    let n = states[0].n();
    if schedule.n() != n {
        return Err(Error::SizeMismatch(format!("pulse for {} sites, chains of {n}", schedule.n())));
    }
    let mut recorder = Recorder::new(chains.len(), n);
    let replay_settings = ControlSettings { mu: schedule.metadata.mu, alpha: schedule.metadata.alpha, ..settings.clone() };
    let mask = if schedule.metadata.mask == "reduced" { MaskPolicy::Reduced } else { MaskPolicy::Full };
    let penalty = match schedule.metadata.penalty.as_str() {
        "all" => PenaltyScope::All,
        "anchor" => PenaltyScope::Anchor,
        _ => PenaltyScope::Mask,
    };
    let replay_settings = ControlSettings { mask, penalty, ..replay_settings };
    let mut t = 0.0;
    for (k, frame) in schedule.frames.iter().enumerate() {
        states
            .par_iter_mut()
            .zip(chains.par_iter())
            .try_for_each(|(s, c)| s.step(c, frame, frame.duration))?;
        t = (k + 1) as f64 * frame.duration;
        let (target, _) = replay_settings.target(schedule.target_at(k), n)?;
        recorder.record(&states, &target, t)?;
    }
    let completed = schedule.switch_times.len() + 1 == n && schedule.switch_times.last().is_some_and(|&s| s <= t + 1e-12);
    Ok(RunOutcome { schedule: schedule.clone(), rows: recorder.rows, members: recorder.members, completed })
}
