// SPDX-License-Identifier: Apache-2.0

//! The attack cycle against the simulated ROM and the parameter search
//! built on top of it.
//!
//! One cycle: wait for SVI2 bus activation, disable telemetry on both
//! rails, count CS pulses up to the last ARK read, drop the voltage
//! `delay - duration` ticks later, restore it at `delay`, then watch the
//! flash for further reads. A silent flash means the attempt failed and the
//! board is reset through the ATX timeout.

mod search;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::FlashImage;
use crate::sim::{
    rom_boot_execute, Anchor, BootOutcome, CpuProfile, FaultModel, InjectionSchedule, ParamWindow, SimError,
};
use crate::svi2::{Domain, Svi2Command};
use crate::trace::{classify_feedback, Feedback, Tick, TraceError, DEFAULT_FEEDBACK_GUARD};
use crate::TICKS_PER_SECOND;

pub use search::{
    find_delay_window, find_duration_window, Campaign, refine_parameters, run_fixed_window, search_pipeline, DurationWindow,
    RefineConfig, RefineOutcome, SearchReport, SuccessRecord, DEFAULT_PROBE_SAMPLES, SEARCH_REPORT_SCHEMA,
};

/// One attack cycle: 3.14 s, mostly the ATX reset timeout.
pub const CYCLE_TICKS: Tick = 314 * TICKS_PER_SECOND / 100;
/// Cycle-to-cycle variation, ±2 ms.
pub const CYCLE_JITTER_TICKS: Tick = 2 * TICKS_PER_SECOND / 1000;
pub const TICKS_PER_HOUR: Tick = 3600 * TICKS_PER_SECOND;
/// Ticks after bus activation at which telemetry is switched off on the
/// core and SoC rails.
pub const TELEMETRY_DISABLE_OFFSETS: [Tick; 2] = [400, 440];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CampaignError {
    #[error("drop command would be sent at tick {drop_tick}, before telemetry is disabled at {ready_tick}")]
    ScheduleInfeasible { drop_tick: i128, ready_tick: Tick },
    #[error("no transition between booting and failing up to duration {searched_up_to}")]
    NoTransition { searched_up_to: Tick },
    #[error("no success in {} attempts", .0.attempts)]
    BudgetExhausted(CampaignStats),
    #[error("invalid campaign parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Glitch timing, in ticks after the falling edge of the `pulse_count`-th
/// CS pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlitchParams {
    /// Time of the restore command.
    pub delay: Tick,
    /// Time between the drop and the restore command.
    pub duration: Tick,
    pub pulse_count: u32,
    pub low_vid: u8,
    pub restore_vid: u8,
}

impl GlitchParams {
    /// Parameters using the profile's pulse count and voltages.
    pub fn for_profile(profile: &CpuProfile, delay: Tick, duration: Tick) -> Self {
        Self {
            delay,
            duration,
            pulse_count: profile.pulse_count,
            low_vid: profile.low_vid,
            restore_vid: profile.default_vid,
        }
    }
}

/// Simulated target: CPU profile plus the ground-truth fault model.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub profile: CpuProfile,
    pub model: FaultModel,
}

impl Simulator {
    pub fn new(profile: CpuProfile) -> Result<Self, SimError> {
        let model = profile.fault_model(0)?;
        Ok(Self { profile, model })
    }

    pub fn with_model(profile: CpuProfile, model: FaultModel) -> Result<Self, SimError> {
        model.validate()?;
        Ok(Self { profile, model })
    }

    /// Boots `image` once with the fault model reseeded to `seed`.
    pub fn boot(&self, image: &FlashImage, schedule: &InjectionSchedule, seed: u64) -> Result<BootOutcome, SimError> {
        rom_boot_execute(image, schedule, &self.model.with_seed(seed), &self.profile)
    }

    /// Falling edges of the CS pulses before the ARK check, as the attacker
    /// measured them on a reference boot.
    pub fn reference_pulses(&self, image: &FlashImage) -> Vec<Tick> {
        self.profile.prefix_pulses(image.ark_bytes().len()).into_iter().map(|p| p.0).collect()
    }
}

/// Schedule for one attack cycle.
///
/// If the drop would come before the counted pulse, the trigger counts
/// fewer pulses and lengthens the delay by the pulse spacing, keeping both
/// commands at the same absolute ticks. `reference_pulses` are the falling
/// edges of the pre-check CS pulses.
pub fn attack_schedule(
    params: &GlitchParams,
    profile: &CpuProfile,
    reference_pulses: &[Tick],
) -> Result<InjectionSchedule, CampaignError> {
    if params.pulse_count == 0 || params.pulse_count as usize > reference_pulses.len() {
        return Err(CampaignError::InvalidParams(format!(
            "pulse count {} outside 1..={}",
            params.pulse_count,
            reference_pulses.len()
        )));
    }
    let act = profile.bus_activation_tick;
    let ready_tick = act + TELEMETRY_DISABLE_OFFSETS[1];
    let reference = reference_pulses[params.pulse_count as usize - 1];
    let drop_tick = reference as i128 + params.delay as i128 - params.duration as i128;
    if drop_tick <= ready_tick as i128 {
        return Err(CampaignError::ScheduleInfeasible { drop_tick, ready_tick });
    }

    let mut pulse_count = params.pulse_count;
    let mut delay = params.delay;
    while delay < params.duration && pulse_count > 1 {
        pulse_count -= 1;
        delay += reference_pulses[pulse_count as usize] - reference_pulses[pulse_count as usize - 1];
    }
    let (anchor, restore_offset) = if delay >= params.duration {
        (Anchor::CsPulse(pulse_count), delay)
    } else {
        (Anchor::BusActivation, reference + params.delay - act)
    };

    let mut schedule = InjectionSchedule::default();
    schedule.push(Anchor::BusActivation, TELEMETRY_DISABLE_OFFSETS[0], &Svi2Command::telemetry_disable(Domain::Core, profile.default_vid));
    schedule.push(Anchor::BusActivation, TELEMETRY_DISABLE_OFFSETS[1], &Svi2Command::telemetry_disable(Domain::Soc, profile.default_vid));
    schedule.push(anchor, restore_offset - params.duration, &Svi2Command::set_vid(Domain::Both, params.low_vid, false));
    schedule.push(anchor, restore_offset, &Svi2Command::set_vid(Domain::Both, params.restore_vid, false));
    Ok(schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptOutcome {
    Success,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptResult {
    pub params: GlitchParams,
    pub outcome: AttemptOutcome,
    pub boot: BootOutcome,
    /// Length of the whole cycle including the reset.
    pub wall_ticks: Tick,
    pub seed: u64,
}

/// Runs one attack cycle against `image` with per-attempt randomness from
/// `seed`.
pub fn run_attack_cycle(
    params: &GlitchParams,
    image: &FlashImage,
    sim: &Simulator,
    seed: u64,
) -> Result<AttemptResult, CampaignError> {
    let pulses = sim.reference_pulses(image);
    let schedule = attack_schedule(params, &sim.profile, &pulses)?;
    let boot = sim.boot(image, &schedule, seed)?;
    let fault_time = pulses[params.pulse_count as usize - 1] + params.delay;
    let outcome = match classify_feedback(&boot.trace, fault_time, DEFAULT_FEEDBACK_GUARD) {
        Feedback::Continues => AttemptOutcome::Success,
        Feedback::Silent => AttemptOutcome::Fail,
    };
    let mut jitter = ChaCha8Rng::seed_from_u64(seed);
    jitter.set_stream(1);
    let wall_ticks = CYCLE_TICKS - CYCLE_JITTER_TICKS + jitter.gen_range(0..=2 * CYCLE_JITTER_TICKS);
    Ok(AttemptResult { params: *params, outcome, boot, wall_ticks, seed })
}

/// Running totals over attack cycles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub attempts: u64,
    pub successes: u64,
    /// `successes / attempts`, absent before the first attempt.
    pub success_rate: Option<f64>,
    pub attempts_per_hour: Option<f64>,
    pub wall_ticks: u64,
    /// Simulated time spent in the boot itself, excluding resets.
    pub boot_ticks: u64,
}

impl CampaignStats {
    pub fn record(&mut self, result: &AttemptResult) {
        self.attempts += 1;
        self.successes += (result.outcome == AttemptOutcome::Success) as u64;
        self.wall_ticks += result.wall_ticks;
        self.boot_ticks += result.boot.trace.duration_ticks();
        self.success_rate = Some(self.successes as f64 / self.attempts as f64);
        self.attempts_per_hour =
            (self.wall_ticks > 0).then(|| self.attempts as f64 * TICKS_PER_HOUR as f64 / self.wall_ticks as f64);
    }

    /// Success rate in percent, rounded to three decimals.
    pub fn success_percent(&self) -> Option<f64> {
        self.success_rate.map(|r| (r * 100_000.0).round() / 1000.0)
    }

    pub fn wall_seconds(&self) -> f64 {
        self.wall_ticks as f64 / TICKS_PER_SECOND as f64
    }
}

pub fn campaign_stats<'a>(results: impl IntoIterator<Item = &'a AttemptResult>) -> CampaignStats {
    let mut stats = CampaignStats::default();
    for r in results {
        stats.record(r);
    }
    stats
}

/// Source of per-attempt seeds for a campaign.
#[derive(Debug, Clone)]
pub struct SeedStream(ChaCha8Rng);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_seed(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw from an inclusive range.
    pub fn pick(&mut self, lo: Tick, hi: Tick) -> Tick {
        self.0.gen_range(lo..=hi)
    }

    pub fn pick_params(&mut self, window: &ParamWindow, profile: &CpuProfile) -> GlitchParams {
        let delay = self.pick(window.delay_min, window.delay_max);
        let duration = self.pick(window.duration_min, window.duration_max);
        GlitchParams::for_profile(profile, delay, duration)
    }
}
