// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{run_attack_cycle, AttemptOutcome, AttemptResult, CampaignError, CampaignStats, GlitchParams, SeedStream, Simulator};
use crate::image::FlashImage;
use crate::sim::ParamWindow;
use crate::trace::{locate_ark_window, DelayWindow, Tick};
use crate::TICKS_PER_SECOND;

/// Attempts per probe point in the duration search.
pub const DEFAULT_PROBE_SAMPLES: u32 = 32;

/// A simulator plus the campaign's seed stream and running totals.
#[derive(Debug, Clone)]
pub struct Campaign<'a> {
    pub sim: &'a Simulator,
    seeds: SeedStream,
    pub stats: CampaignStats,
}

impl<'a> Campaign<'a> {
    pub fn new(sim: &'a Simulator, seed: u64) -> Self {
        Self { sim, seeds: SeedStream::new(seed), stats: CampaignStats::default() }
    }

    pub fn attempt(&mut self, params: &GlitchParams, image: &FlashImage) -> Result<AttemptResult, CampaignError> {
        let seed = self.seeds.next_seed();
        let result = run_attack_cycle(params, image, self.sim, seed)?;
        self.stats.record(&result);
        Ok(result)
    }

    /// Uniformly drawn parameters from `window`.
    pub fn pick_params(&mut self, window: &ParamWindow) -> GlitchParams {
        self.seeds.pick_params(window, &self.sim.profile)
    }
}

/// Locates the ARK verification window from two duration-zero probes, one
/// with a manipulated ARK and one with the original image.
pub fn find_delay_window(
    campaign: &mut Campaign<'_>,
    original: &FlashImage,
    attacker: &FlashImage,
) -> Result<DelayWindow, CampaignError> {
    let probe = GlitchParams::for_profile(&campaign.sim.profile, 0, 0);
    let invalid = campaign.attempt(&probe, attacker)?;
    let valid = campaign.attempt(&probe, original)?;
    Ok(locate_ark_window(&invalid.boot.trace, &valid.boot.trace, probe.pulse_count)?)
}

/// Durations bracketing the transition from booting to failing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationWindow {
    /// First duration at which not every probe boots.
    pub low: Tick,
    /// First duration at which every probe fails.
    pub high: Tick,
    pub rounds: u32,
}

/// Binary search for the duration band on the original image at `delay`.
///
/// A probe point runs up to `samples` attempts and stops at the first one
/// that decides the predicate.
pub fn find_duration_window(
    campaign: &mut Campaign<'_>,
    original: &FlashImage,
    delay: Tick,
    samples: u32,
) -> Result<DurationWindow, CampaignError> {
    let max = campaign.sim.profile.duration_search_max;
    let mut rounds = 0;
    let probe = |c: &mut Campaign<'_>, duration: Tick, want: AttemptOutcome| -> Result<bool, CampaignError> {
        let params = GlitchParams::for_profile(&c.sim.profile, delay, duration);
        for _ in 0..samples {
            if c.attempt(&params, original)?.outcome != want {
                return Ok(false);
            }
        }
        Ok(true)
    };

    if probe(campaign, max, AttemptOutcome::Success)? {
        return Err(CampaignError::NoTransition { searched_up_to: max });
    }
    let (mut lo, mut hi) = (0, max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        rounds += 1;
        if probe(campaign, mid, AttemptOutcome::Success)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let low = hi;

    if !probe(campaign, max, AttemptOutcome::Fail)? {
        return Err(CampaignError::NoTransition { searched_up_to: max });
    }
    let (mut lo, mut hi) = (low.saturating_sub(1), max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        rounds += 1;
        if probe(campaign, mid, AttemptOutcome::Fail)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DurationWindow { low, high: hi, rounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub budget: u64,
    /// Stop once this many successes were seen.
    pub stop_after_successes: Option<u64>,
    /// Half widths (delay, duration) of the window around the first success.
    pub first_half_widths: (Tick, Tick),
    /// Half widths below which later successes stop shrinking the window.
    pub min_half_widths: (Tick, Tick),
}

impl RefineConfig {
    pub fn with_budget(budget: u64) -> Self {
        Self { budget, stop_after_successes: None, first_half_widths: (50, 10), min_half_widths: (2, 1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessRecord {
    pub attempt: u64,
    pub delay: Tick,
    pub duration: Tick,
    /// Sampling window after this success.
    pub window_after: ParamWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub initial_window: ParamWindow,
    pub final_window: ParamWindow,
    pub stats: CampaignStats,
    pub successes: Vec<SuccessRecord>,
}

/// Random search over `initial`, narrowing around each success: first to
/// the configured half widths, then halving them on every further success,
/// always centred on the latest success and clipped to `initial`.
pub fn refine_parameters(
    campaign: &mut Campaign<'_>,
    attacker: &FlashImage,
    initial: ParamWindow,
    config: &RefineConfig,
) -> Result<RefineOutcome, CampaignError> {
    let outcome = refine_run(campaign, attacker, initial, config)?;
    if outcome.successes.is_empty() {
        return Err(CampaignError::BudgetExhausted(outcome.stats));
    }
    Ok(outcome)
}

fn refine_run(
    campaign: &mut Campaign<'_>,
    attacker: &FlashImage,
    initial: ParamWindow,
    config: &RefineConfig,
) -> Result<RefineOutcome, CampaignError> {
    if config.budget == 0 {
        return Err(CampaignError::InvalidParams("refinement budget must be at least 1".into()));
    }
    if initial.delay_min > initial.delay_max || initial.duration_min > initial.duration_max {
        return Err(CampaignError::InvalidParams(format!("empty window {initial:?}")));
    }
    let mut window = initial;
    let mut half: Option<(Tick, Tick)> = None;
    let mut stats = CampaignStats::default();
    let mut successes = Vec::new();
    for attempt in 0..config.budget {
        let params = campaign.pick_params(&window);
        let result = campaign.attempt(&params, attacker)?;
        stats.record(&result);
        if result.outcome != AttemptOutcome::Success {
            continue;
        }
        let next = match half {
            None => config.first_half_widths,
            Some((hd, hu)) => ((hd / 2).max(config.min_half_widths.0), (hu / 2).max(config.min_half_widths.1)),
        };
        half = Some(next);
        window = centred(&initial, params.delay, params.duration, next);
        successes.push(SuccessRecord { attempt, delay: params.delay, duration: params.duration, window_after: window });
        if config.stop_after_successes.is_some_and(|n| successes.len() as u64 >= n) {
            break;
        }
    }
    Ok(RefineOutcome { initial_window: initial, final_window: window, stats, successes })
}

fn centred(bounds: &ParamWindow, delay: Tick, duration: Tick, (hd, hu): (Tick, Tick)) -> ParamWindow {
    ParamWindow {
        delay_min: delay.saturating_sub(hd).max(bounds.delay_min),
        delay_max: (delay + hd).min(bounds.delay_max),
        duration_min: duration.saturating_sub(hu).max(bounds.duration_min),
        duration_max: (duration + hu).min(bounds.duration_max),
    }
}

/// `attempts` cycles with parameters drawn uniformly from `window`.
pub fn run_fixed_window(
    campaign: &mut Campaign<'_>,
    image: &FlashImage,
    window: &ParamWindow,
    attempts: u64,
) -> Result<CampaignStats, CampaignError> {
    let mut stats = CampaignStats::default();
    for _ in 0..attempts {
        let params = campaign.pick_params(window);
        stats.record(&campaign.attempt(&params, image)?);
    }
    Ok(stats)
}

pub const SEARCH_REPORT_SCHEMA: u32 = 1;

/// Result of the full search: delay window, duration band and optional
/// refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub schema_version: u32,
    pub profile: String,
    pub seed: u64,
    pub delay_window: DelayWindow,
    pub duration_search_delay: Tick,
    pub duration_window: DurationWindow,
    /// Attempts spent on delay and duration probes.
    pub probe_stats: CampaignStats,
    /// Simulated boot time of the probes, excluding resets.
    pub probe_boot_seconds: f64,
    pub refine: Option<RefineOutcome>,
}

/// Delay probes, duration binary search at the centre of the delay window,
/// then optionally random refinement on the attacker image.
pub fn search_pipeline(
    sim: &Simulator,
    original: &FlashImage,
    attacker: &FlashImage,
    seed: u64,
    refine: Option<&RefineConfig>,
) -> Result<SearchReport, CampaignError> {
    let mut campaign = Campaign::new(sim, seed);
    let delay_window = find_delay_window(&mut campaign, original, attacker)?;
    let delay = delay_window.first_delay + delay_window.width() / 2;
    let duration_window = find_duration_window(&mut campaign, original, delay, DEFAULT_PROBE_SAMPLES)?;
    let probe_stats = campaign.stats.clone();
    let refine = match refine {
        Some(config) => {
            let initial = ParamWindow {
                delay_min: delay_window.first_delay,
                delay_max: delay_window.last_delay,
                duration_min: duration_window.low,
                duration_max: duration_window.high,
            };
            Some(refine_run(&mut campaign, attacker, initial, config)?)
        }
        None => None,
    };
    Ok(SearchReport {
        schema_version: SEARCH_REPORT_SCHEMA,
        profile: sim.profile.name.clone(),
        seed,
        delay_window,
        duration_search_delay: delay,
        duration_window,
        probe_boot_seconds: probe_stats.boot_ticks as f64 / TICKS_PER_SECOND as f64,
        probe_stats,
        refine,
    })
}
