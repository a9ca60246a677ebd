//! Static Ising couplings, disorder ensembles and piecewise-constant control
//! fields.

use rand::{Rng, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256StarStar};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nearest-neighbour Ising chain `H_s = Σ_i J_i σ^z_i σ^z_{i+1}`.
///
/// `couplings[k]` couples sites `k` and `k + 1`. Open boundaries: there is
/// no coupling to the left of site 0 or to the right of site `n - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    couplings: Vec<f64>,
}

impl ChainSpec {
    pub fn new(couplings: Vec<f64>) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::ChainTooShort(couplings.len() + 1));
        }
        if let Some(k) = couplings.iter().position(|j| !j.is_finite()) {
            return Err(Error::NonFiniteCoupling(k));
        }
        Ok(Self { couplings })
    }

    pub fn uniform(n: usize, coupling: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort(n));
        }
        Self::new(vec![coupling; n - 1])
    }

    /// Builds a chain of `n` sites, checking the coupling count.
    pub fn with_sites(n: usize, couplings: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::ChainTooShort(n));
        }
        if couplings.len() != n - 1 {
            return Err(Error::CouplingCount { expected: n - 1, got: couplings.len() });
        }
        Self::new(couplings)
    }

    pub fn n(&self) -> usize {
        self.couplings.len() + 1
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Coupling on the bond `(bond, bond + 1)`.
    pub fn bond(&self, bond: usize) -> f64 {
        self.couplings[bond]
    }

    /// Coupling between `site - 1` and `site`; zero at the left edge.
    pub fn left_of(&self, site: usize) -> f64 {
        if site == 0 {
            0.0
        } else {
            self.couplings[site - 1]
        }
    }

    /// Coupling between `site` and `site + 1`; zero at the right edge.
    pub fn right_of(&self, site: usize) -> f64 {
        self.couplings.get(site).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { couplings: self.couplings.iter().map(|j| j * s).collect() }
    }
}

/// Ensemble of chains with `J_i = r_i J`, `r_i` uniform on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub n: usize,
    pub base: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
    pub count: usize,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::ChainTooShort(self.n));
        }
        if !(self.lo > 0.0 && self.lo <= self.hi && self.hi.is_finite()) {
            return Err(Error::InvalidInterval { lo: self.lo, hi: self.hi });
        }
        if self.count == 0 {
            return Err(Error::EmptyEnsemble);
        }
        Ok(())
    }

    /// Same ensemble descriptor drawing from an independent sub-stream.
    pub fn with_stream(&self, stream: EnsembleStream) -> Self {
        Self { seed: sub_seed(self.seed, stream), ..self.clone() }
    }
}

/// Role of an ensemble derived from a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleStream {
    Train,
    Test,
}

/// Derives a seed for one ensemble role from a master seed (SplitMix64 mix).
pub fn sub_seed(master: u64, stream: EnsembleStream) -> u64 {
    let tag = match stream {
        EnsembleStream::Train => 0x7472_6169_6e00_0001,
        EnsembleStream::Test => 0x7465_7374_0000_0002,
    };
    SplitMix64::seed_from_u64(master ^ tag).next_u64()
}

/// Generator used for every reproducible draw in the crate: xoshiro256**
/// seeded through SplitMix64.
pub type ChainRng = Xoshiro256StarStar;

/// Draws `count` chains; member `m` uses the `m`-th 2^128-step jump of the
/// seeded generator, so members are independent of the ensemble size.
pub fn sample_ensemble(spec: &DisorderSpec) -> Result<Vec<ChainSpec>> {
    spec.validate()?;
    let mut stream = ChainRng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut rng = stream.clone();
        stream.jump();
        let couplings = (0..spec.n - 1)
            .map(|_| {
                let u: f64 = rng.random();
                spec.base * (spec.lo + (spec.hi - spec.lo) * u)
            })
            .collect();
        out.push(ChainSpec::new(couplings)?);
    }
    Ok(out)
}

/// Per-site `(g_x, g_y)` fields held constant for `duration`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlFrame {
    pub fields: Vec<[f64; 2]>,
    pub duration: f64,
}

impl ControlFrame {
    pub fn zero(n: usize, duration: f64) -> Self {
        Self { fields: vec![[0.0; 2]; n], duration }
    }

    pub fn n(&self) -> usize {
        self.fields.len()
    }

    pub fn magnitude(&self, site: usize) -> f64 {
        let [gx, gy] = self.fields[site];
        gx.hypot(gy)
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.n()).map(|i| self.magnitude(i)).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.fields.iter().all(|f| f[0] == 0.0 && f[1] == 0.0)
    }
}

/// Descriptive parameters carried along with a pulse.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseMetadata {
    pub n: usize,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub mask: String,
    pub penalty: String,
    pub seeds: Vec<u64>,
}

/// The trained, exportable control sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub frames: Vec<ControlFrame>,
    /// Times at which each target saturated; the last entry ends the run.
    pub switch_times: Vec<f64>,
    /// Interval indices matching `switch_times` (0-based, inclusive).
    pub switch_intervals: Vec<usize>,
    pub metadata: PulseMetadata,
}

impl PulseSchedule {
    pub fn new(metadata: PulseMetadata) -> Self {
        Self { frames: Vec::new(), switch_times: Vec::new(), switch_intervals: Vec::new(), metadata }
    }

    pub fn n(&self) -> usize {
        self.metadata.n
    }

    pub fn total_duration(&self) -> f64 {
        self.frames.iter().map(|f| f.duration).sum()
    }

    /// Zero-based target site active during interval `k`.
    pub fn target_at(&self, k: usize) -> usize {
        1 + self.switch_intervals.iter().filter(|&&s| s < k).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("switch times must be strictly increasing".into()));
        }
        if self.switch_times.len() != self.switch_intervals.len() {
            return Err(Error::Parse("switch times and intervals differ in length".into()));
        }
        if let Some(f) = self.frames.iter().find(|f| f.n() != self.n()) {
            return Err(Error::SizeMismatch(format!(
                "frame with {} sites in a pulse for {} sites",
                f.n(),
                self.n()
            )));
        }
        Ok(())
    }
}

/// Centred moving average of every field component over `window` frames.
///
/// Near the ends the window shrinks symmetrically. The amplitude bound is
/// not re-imposed.
pub fn smooth_pulse(schedule: &PulseSchedule, window: i64) -> Result<PulseSchedule> {
    if window < 1 || window % 2 == 0 {
        return Err(Error::InvalidWindow(window));
    }
    let half = (window as usize) / 2;
    let len = schedule.frames.len();
    let frames = (0..len)
        .map(|k| {
            let h = half.min(k).min(len - 1 - k);
            let span = &schedule.frames[k - h..=k + h];
            let count = span.len() as f64;
            let fields = (0..schedule.n())
                .map(|site| {
                    let mut acc = [0.0; 2];
                    for f in span {
                        acc[0] += f.fields[site][0];
                        acc[1] += f.fields[site][1];
                    }
                    [acc[0] / count, acc[1] / count]
                })
                .collect();
            ControlFrame { fields, duration: schedule.frames[k].duration }
        })
        .collect();
    Ok(PulseSchedule { frames, ..schedule.clone() })
}
