// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vr::{vr_step, VrState};
use super::{CpuProfile, FaultModel, SimError};
use crate::image::{parse_image, FlashImage};
use crate::svi2::{decode_command, encode_command, Domain, Svi2Command, Svi2Frame, VidMap};
use crate::trace::{CsTrace, Edge, Level, Tick};

/// Reference point of a scheduled command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    BusActivation,
    /// Falling edge of the n-th CS pulse, counting from 1.
    CsPulse(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub anchor: Anchor,
    pub offset: Tick,
    pub frame: Svi2Frame,
}

/// SVI2 packets the attacker injects during one boot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSchedule {
    pub commands: Vec<ScheduledCommand>,
}

impl InjectionSchedule {
    pub fn push(&mut self, anchor: Anchor, offset: Tick, cmd: &Svi2Command) {
        self.commands.push(ScheduledCommand { anchor, offset, frame: encode_command(cmd) });
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Config(format!("schedule: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BootOutcomeKind {
    KeyRejected,
    Crash,
    Bypass,
    NormalBoot,
}

impl BootOutcomeKind {
    /// Whether the ROM went on to load the next component.
    pub fn continues(self) -> bool {
        matches!(self, BootOutcomeKind::Bypass | BootOutcomeKind::NormalBoot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Sent before the bus was active.
    BusInactive,
    /// Overlapped a telemetry report while telemetry was still enabled.
    TelemetryCollision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCommand {
    /// Index into the schedule.
    pub index: usize,
    pub tick: Tick,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootOutcome {
    pub kind: BootOutcomeKind,
    pub trace: CsTrace,
    /// Lowest rail voltage, when it dipped below the default.
    pub fault_minimum_microvolts: Option<i64>,
    /// First tick at which the minimum was reached.
    pub fault_tick: Option<Tick>,
    pub fault_depth_microvolts: i64,
    /// Falling edge of the last counted CS pulse.
    pub reference_tick: Tick,
    /// End of the last ARK read.
    pub ark_loaded_tick: Tick,
    pub dropped: Vec<DroppedCommand>,
}

impl BootOutcome {
    /// Earliest tick after which the trace reflects the boot decision.
    pub fn decision_tick(&self) -> Tick {
        self.fault_tick.unwrap_or(0).max(self.ark_loaded_tick)
    }
}

/// Parses `bytes` and boots it.
pub fn boot_image_bytes(
    bytes: &[u8],
    schedule: &InjectionSchedule,
    model: &FaultModel,
    profile: &CpuProfile,
) -> Result<BootOutcome, SimError> {
    let image = parse_image(bytes)?;
    rom_boot_execute(&image, schedule, model, profile)
}

struct Event {
    tick: Tick,
    cmd: Svi2Command,
    index: Option<usize>,
}

/// Runs the ROM bootloader on `image` while the attacker replays `schedule`.
pub fn rom_boot_execute(
    image: &FlashImage,
    schedule: &InjectionSchedule,
    model: &FaultModel,
    profile: &CpuProfile,
) -> Result<BootOutcome, SimError> {
    model.validate()?;
    let ark_len = image.ark_bytes().len();
    let key_trusted = image.ark_digest() == profile.rom_ark_digest;
    let prefix = profile.prefix_pulses(ark_len);
    let counted = (profile.pulse_count as usize).clamp(1, prefix.len());
    let reference_tick = prefix[counted - 1].0;
    let ark_loaded_tick = prefix.last().expect("directory read").1;

    let act = profile.bus_activation_tick;
    let mut events = vec![
        Event { tick: act + profile.cpu_default_offsets[0], cmd: Svi2Command::set_vid(Domain::Core, profile.default_vid, true), index: None },
        Event { tick: act + profile.cpu_default_offsets[1], cmd: Svi2Command::set_vid(Domain::Soc, profile.default_vid, true), index: None },
    ];
    for (i, sc) in schedule.commands.iter().enumerate() {
        let base = match sc.anchor {
            Anchor::BusActivation => act,
            Anchor::CsPulse(k) if k >= 1 && (k as usize) <= prefix.len() => prefix[k as usize - 1].0,
            Anchor::CsPulse(k) => return Err(SimError::AnchorUnreachable { pulse: k, available: prefix.len() as u32 }),
        };
        events.push(Event { tick: base + sc.offset, cmd: decode_command(&sc.frame)?, index: Some(i) });
    }
    events.sort_by_key(|e| e.tick);
    let last_scheduled = events.iter().filter(|e| e.index.is_some()).map(|e| e.tick).max().unwrap_or(0);

    let default_uv = VidMap::default().vid_to_voltage(profile.default_vid).output_microvolts();
    let mut state = VrState::settled(default_uv, profile.slew_microvolts_per_tick);
    let mut now: Tick = 0;
    let mut minimum = (default_uv, 0);
    let mut dropped = Vec::new();
    for ev in &events {
        if ev.tick < act {
            if let Some(index) = ev.index {
                dropped.push(DroppedCommand { index, tick: ev.tick, reason: DropReason::BusInactive });
            }
            continue;
        }
        state = vr_step(&state, ev.tick - now, None)?;
        now = ev.tick;
        state.bus_active = true;
        if state.current_microvolts < minimum.0 {
            minimum = (state.current_microvolts, now);
        }
        if let Some(index) = ev.index {
            if state.telemetry_enabled && in_telemetry_slot(profile, ev.tick) {
                dropped.push(DroppedCommand { index, tick: ev.tick, reason: DropReason::TelemetryCollision });
                continue;
            }
        }
        state = vr_step(&state, 0, Some(&ev.cmd))?;
    }
    // The rail keeps moving after the last packet; the target is reached
    // after a known number of ticks.
    let remaining = state.current_microvolts - state.target_microvolts;
    if remaining > 0 && state.target_microvolts < state.current_microvolts.min(minimum.0) {
        let slew = state.slew_microvolts_per_tick.max(1);
        minimum = (state.target_microvolts, now + ((remaining + slew - 1) / slew) as Tick);
    }

    let depth = default_uv - minimum.0;
    let (fault_minimum, fault_tick) = if depth > 0 { (Some(minimum.0), Some(minimum.1)) } else { (None, None) };

    let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
    let unfaulted = if key_trusted { BootOutcomeKind::NormalBoot } else { BootOutcomeKind::KeyRejected };
    let kind = match fault_tick {
        Some(_) if depth < model.min_fault_depth_microvolts => unfaulted,
        None => unfaulted,
        Some(_) if depth >= model.crash_depth_microvolts => BootOutcomeKind::Crash,
        Some(t) => {
            let rel = t as i128 - reference_tick as i128;
            let in_window = rel >= model.ark_window.0 as i128 && rel <= model.ark_window.1 as i128;
            if !in_window {
                BootOutcomeKind::Crash
            } else if rng.gen::<f64>() < model.bypass_probability {
                BootOutcomeKind::Bypass
            } else if rng.gen::<f64>() >= model.disturbance(depth) {
                unfaulted
            } else if rng.gen::<f64>() < 0.5 {
                BootOutcomeKind::Crash
            } else {
                BootOutcomeKind::KeyRejected
            }
        }
    };

    let resume_tick = ark_loaded_tick + profile.verification_gap_ticks.max(1);
    let end = resume_tick.max(fault_tick.unwrap_or(0)).max(last_scheduled) + profile.observation_ticks;
    let mut pulses = prefix;
    let loads_next = kind.continues() || (kind == BootOutcomeKind::Crash && key_trusted);
    if loads_next {
        let low = profile.pulse_base_ticks + profile.ticks_per_byte * profile.continuation_chunk_bytes as Tick;
        let mut t = resume_tick;
        while t + low <= end {
            pulses.push((t, t + low));
            t += low + profile.inter_pulse_gap;
        }
    }
    let trace = if kind == BootOutcomeKind::Crash {
        crashed_trace(&pulses, fault_tick.expect("crash needs a fault"), end)
    } else {
        CsTrace::from_pulses(pulses, end).expect("pulses are ordered")
    };

    Ok(BootOutcome {
        kind,
        trace,
        fault_minimum_microvolts: fault_minimum,
        fault_tick,
        fault_depth_microvolts: depth.max(0),
        reference_tick,
        ark_loaded_tick,
        dropped,
    })
}

fn in_telemetry_slot(profile: &CpuProfile, tick: Tick) -> bool {
    let first = profile.bus_activation_tick + profile.telemetry_offset;
    tick >= first && (tick - first) % profile.telemetry_period.max(1) < profile.telemetry_len
}

/// Flash activity stops at `fault`; a read in progress releases CS one tick
/// later.
fn crashed_trace(pulses: &[(Tick, Tick)], fault: Tick, end: Tick) -> CsTrace {
    let mut edges = Vec::new();
    for &(fall, rise) in pulses {
        if fall > fault {
            break;
        }
        edges.push(Edge { tick: fall, level: Level::Low });
        edges.push(Edge { tick: rise.min(fault + 1), level: Level::High });
    }
    CsTrace::new(edges, end.max(fault + 1)).expect("edges are ordered")
}
