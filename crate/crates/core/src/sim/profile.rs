// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{FaultModel, SimError};
use crate::svi2::VidMap;
use crate::trace::Tick;

/// Size of a serialized 4096-bit ARK record.
pub const DEFAULT_ARK_RECORD_LEN: usize = 528;

/// Inclusive parameter ranges for delay and duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamWindow {
    pub delay_min: Tick,
    pub delay_max: Tick,
    pub duration_min: Tick,
    pub duration_max: Tick,
}

impl ParamWindow {
    pub fn contains(&self, delay: Tick, duration: Tick) -> bool {
        (self.delay_min..=self.delay_max).contains(&delay) && (self.duration_min..=self.duration_max).contains(&duration)
    }

    pub fn is_subset_of(&self, other: &ParamWindow) -> bool {
        other.delay_min <= self.delay_min
            && self.delay_max <= other.delay_max
            && other.duration_min <= self.duration_min
            && self.duration_max <= other.duration_max
    }
}

/// Fault parameters of a profile, without the window (which follows from
/// the SPI geometry) and without a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultDefaults {
    pub min_fault_depth_microvolts: i64,
    pub crash_depth_microvolts: i64,
    pub bypass_probability: f64,
}

/// Timing and fault calibration of one attacked CPU model.
///
/// All times are ticks; SVI2 times are relative to bus activation, SPI
/// times to reset release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpuProfile {
    pub name: String,
    pub microarchitecture: String,
    pub bus_activation_tick: Tick,
    /// The CPU's own default-voltage packets (A2).
    pub cpu_default_offsets: [Tick; 2],
    pub telemetry_offset: Tick,
    pub telemetry_period: Tick,
    pub telemetry_len: Tick,
    pub spi_start_tick: Tick,
    pub directory_read_bytes: u32,
    pub ark_chunk_bytes: u32,
    pub continuation_chunk_bytes: u32,
    pub pulse_base_ticks: Tick,
    pub ticks_per_byte: Tick,
    pub inter_pulse_gap: Tick,
    /// Quiet time between the last ARK read and the next flash access when
    /// the key is accepted.
    pub verification_gap_ticks: Tick,
    /// Flash activity kept after the later of fault time and resume time.
    pub observation_ticks: Tick,
    pub ark_record_len: usize,
    /// CS pulses counted before the trigger starts: the directory read plus
    /// every ARK chunk.
    pub pulse_count: u32,
    pub default_vid: u8,
    pub low_vid: u8,
    pub slew_microvolts_per_tick: i64,
    pub fault: FaultDefaults,
    /// Final refinement window from the published per-CPU results.
    pub final_window: ParamWindow,
    /// Upper end of the duration binary search.
    pub duration_search_max: Tick,
    /// ARK digest burned into the simulated boot ROM.
    #[serde(with = "crate::hexser")]
    pub rom_ark_digest: [u8; 32],
}

/// ARK digest of the bundled genuine flash images.
pub const DEFAULT_ROM_ARK_DIGEST: [u8; 32] =
    hex_literal::hex!("9e55d56b2cba2c6e4cfc8a814e210b2d642dd3864f0f8cc25a1f5926ae7d58f5");

pub const PROFILE_NAMES: [&str; 3] = ["72F3", "7272", "7281"];

struct Calibration {
    name: &'static str,
    uarch: &'static str,
    chunk: u32,
    gap: Tick,
    min_depth: i64,
    crash_depth: i64,
    p: f64,
    final_delay_width: Tick,
    final_duration_width: Tick,
}

const CALIBRATIONS: [Calibration; 3] = [
    Calibration {
        name: "72F3",
        uarch: "Zen 3",
        chunk: 64,
        gap: 2000,
        min_depth: 140_000,
        crash_depth: 175_000,
        p: 0.00129,
        final_delay_width: 4,
        final_duration_width: 2,
    },
    Calibration {
        name: "7272",
        uarch: "Zen 2",
        chunk: 128,
        gap: 2000,
        min_depth: 150_000,
        crash_depth: 190_000,
        p: 0.00173,
        final_delay_width: 14,
        final_duration_width: 3,
    },
    Calibration {
        name: "7281",
        uarch: "Zen 1",
        chunk: 32,
        gap: 2000,
        min_depth: 160_000,
        crash_depth: 210_000,
        p: 0.00197,
        final_delay_width: 20,
        final_duration_width: 10,
    },
];

pub fn make_profile(name: &str) -> Result<CpuProfile, SimError> {
    let c = CALIBRATIONS
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| SimError::UnknownProfile(name.to_string()))?;
    let mut p = CpuProfile {
        name: c.name.to_string(),
        microarchitecture: c.uarch.to_string(),
        bus_activation_tick: 80_000,
        cpu_default_offsets: [40, 80],
        telemetry_offset: 800,
        telemetry_period: 1_600,
        telemetry_len: 200,
        spi_start_tick: 160_000,
        directory_read_bytes: 32,
        ark_chunk_bytes: c.chunk,
        continuation_chunk_bytes: 64,
        pulse_base_ticks: 40,
        ticks_per_byte: 2,
        inter_pulse_gap: 96,
        verification_gap_ticks: c.gap,
        observation_ticks: 48_000,
        ark_record_len: DEFAULT_ARK_RECORD_LEN,
        pulse_count: 1 + DEFAULT_ARK_RECORD_LEN.div_ceil(c.chunk as usize) as u32,
        default_vid: 0x58,
        low_vid: 0x98,
        slew_microvolts_per_tick: super::DEFAULT_SLEW_MICROVOLTS_PER_TICK,
        fault: FaultDefaults {
            min_fault_depth_microvolts: c.min_depth,
            crash_depth_microvolts: c.crash_depth,
            bypass_probability: c.p,
        },
        final_window: ParamWindow { delay_min: 0, delay_max: 0, duration_min: 0, duration_max: 0 },
        duration_search_max: 4_000,
        rom_ark_digest: DEFAULT_ROM_ARK_DIGEST,
    };
    let (w0, w1) = p.ark_window();
    let (b0, b1) = p.transition_durations();
    let dc = (w0 + w1) / 2 - c.final_delay_width / 2;
    let uc = (b0 + b1) / 2 - c.final_duration_width / 2;
    p.final_window = ParamWindow {
        delay_min: dc,
        delay_max: dc + c.final_delay_width,
        duration_min: uc,
        duration_max: uc + c.final_duration_width,
    };
    Ok(p)
}

impl CpuProfile {
    fn pulse_low(&self, bytes: u32) -> Tick {
        self.pulse_base_ticks + self.ticks_per_byte * bytes as Tick
    }

    /// CS pulses up to and including the last ARK chunk, as absolute
    /// (falling, rising) ticks.
    pub fn prefix_pulses(&self, ark_len: usize) -> Vec<(Tick, Tick)> {
        let mut sizes = vec![self.directory_read_bytes];
        let chunk = self.ark_chunk_bytes.max(1) as usize;
        let mut left = ark_len;
        while left > 0 {
            let n = left.min(chunk);
            sizes.push(n as u32);
            left -= n;
        }
        let mut t = self.spi_start_tick;
        sizes
            .into_iter()
            .map(|b| {
                let pulse = (t, t + self.pulse_low(b));
                t = pulse.1 + self.inter_pulse_gap;
                pulse
            })
            .collect()
    }

    /// Ground-truth ARK verification window relative to the falling edge of
    /// the last counted pulse: from the end of that pulse to the next flash
    /// access of an accepted boot.
    pub fn ark_window(&self) -> (Tick, Tick) {
        let pulses = self.prefix_pulses(self.ark_record_len);
        let reference = pulses[(self.pulse_count as usize).clamp(1, pulses.len()) - 1].0;
        let last = *pulses.last().unwrap();
        (last.1 - reference, last.1 + self.verification_gap_ticks - reference)
    }

    pub fn default_microvolts(&self) -> i64 {
        VidMap::default().vid_to_voltage(self.default_vid).output_microvolts()
    }

    pub fn max_depth_microvolts(&self) -> i64 {
        self.default_microvolts() - VidMap::default().vid_to_voltage(self.low_vid).output_microvolts()
    }

    /// Duration range whose drop depth lies in the fault model's transition
    /// band, as `(first, last)` inclusive.
    pub fn transition_durations(&self) -> (Tick, Tick) {
        let slew = self.slew_microvolts_per_tick;
        let first = (self.fault.min_fault_depth_microvolts + slew - 1) / slew;
        let crash = (self.fault.crash_depth_microvolts + slew - 1) / slew;
        (first as Tick, (crash - 1).max(first) as Tick)
    }

    pub fn fault_model(&self, rng_seed: u64) -> Result<FaultModel, SimError> {
        FaultModel::new(
            self.ark_window(),
            self.fault.min_fault_depth_microvolts,
            self.fault.crash_depth_microvolts,
            self.fault.bypass_probability,
            rng_seed,
        )
    }
}

/// Profile overrides loaded from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub profiles: Vec<CpuProfile>,
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    /// A profile from the config, falling back to the built-in calibration.
    pub fn profile(&self, name: &str) -> Result<CpuProfile, SimError> {
        match self.profiles.iter().find(|p| p.name.eq_ignore_ascii_case(name)) {
            Some(p) => Ok(p.clone()),
            None => make_profile(name),
        }
    }
}
