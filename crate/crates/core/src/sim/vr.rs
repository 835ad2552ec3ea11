// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::svi2::{Domain, Svi2Command, VidMap};
use crate::trace::Tick;

/// Default slew rate: 312 µV per 12.5 ns tick, about 25 mV/µs.
pub const DEFAULT_SLEW_MICROVOLTS_PER_TICK: i64 = 312;

/// State of the regulator rail feeding the AMD-SP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrState {
    pub current_microvolts: i64,
    pub target_microvolts: i64,
    pub slew_microvolts_per_tick: i64,
    pub telemetry_enabled: bool,
    pub bus_active: bool,
}

impl VrState {
    /// Rail settled at `microvolts` with the bus still inactive.
    pub fn settled(microvolts: i64, slew_microvolts_per_tick: i64) -> Self {
        Self {
            current_microvolts: microvolts,
            target_microvolts: microvolts,
            slew_microvolts_per_tick,
            telemetry_enabled: true,
            bus_active: false,
        }
    }

    /// Whether a command for `domain` moves this rail. On the modeled
    /// boards the Core settings drive both rails, so SoC-only packets leave
    /// the voltage alone.
    pub fn follows(domain: Domain) -> bool {
        matches!(domain, Domain::Core | Domain::Both)
    }
}

/// Applies `injected` (if any) at the start of the step, then lets the rail
/// slew toward its target for `elapsed` ticks.
pub fn vr_step(state: &VrState, elapsed: Tick, injected: Option<&Svi2Command>) -> Result<VrState, SimError> {
    let mut s = *state;
    if let Some(cmd) = injected {
        if !s.bus_active {
            return Err(SimError::BusInactive);
        }
        if VrState::follows(cmd.domain) {
            s.target_microvolts = VidMap::default().vid_to_voltage(cmd.vid).output_microvolts();
        }
        if !cmd.tfn {
            s.telemetry_enabled = false;
        }
    }
    let reach = (s.slew_microvolts_per_tick as i128 * elapsed as i128).min(i64::MAX as i128) as i64;
    let diff = s.target_microvolts - s.current_microvolts;
    s.current_microvolts += diff.signum() * diff.abs().min(reach);
    Ok(s)
}
