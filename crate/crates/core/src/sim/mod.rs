// SPDX-License-Identifier: Apache-2.0

//! Simulated voltage regulator and AMD-SP ROM bootloader.
//!
//! The ROM reads the flash directory and the ARK over SPI, hashes the ARK
//! against its built-in digest and either continues loading or stops. A
//! voltage excursion on the SP rail during the verification window can skip
//! the check.

mod boot;
mod profile;
mod vr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageError;
use crate::svi2::Svi2Error;
use crate::trace::Tick;

pub use boot::{
    boot_image_bytes, rom_boot_execute, Anchor, BootOutcome, BootOutcomeKind, DropReason, DroppedCommand,
    InjectionSchedule, ScheduledCommand,
};
pub use profile::{make_profile, CpuProfile, FaultDefaults, ParamWindow, SimConfig, DEFAULT_ARK_RECORD_LEN, PROFILE_NAMES};
pub use vr::{vr_step, VrState, DEFAULT_SLEW_MICROVOLTS_PER_TICK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("SVI2 command injected while the bus is inactive")]
    BusInactive,
    #[error("unknown CPU profile {0:?}")]
    UnknownProfile(String),
    #[error("invalid fault model: {0}")]
    InvalidModel(String),
    #[error("schedule anchors on CS pulse {pulse}, but only {available} pulses precede the ARK check")]
    AnchorUnreachable { pulse: u32, available: u32 },
    #[error("flash image does not parse: {0}")]
    ImageUnparseable(#[from] ImageError),
    #[error(transparent)]
    Svi2(#[from] Svi2Error),
    #[error("config: {0}")]
    Config(String),
}

/// Ground truth for the simulated ROM's response to a voltage fault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    /// Ticks after the falling edge of the last counted CS pulse during
    /// which a fault can skip the ARK check, inclusive.
    pub ark_window: (Tick, Tick),
    /// Shallower drops have no effect.
    pub min_fault_depth_microvolts: i64,
    /// Drops at least this deep always crash the ROM.
    pub crash_depth_microvolts: i64,
    pub bypass_probability: f64,
    pub rng_seed: u64,
}

impl FaultModel {
    pub fn new(
        ark_window: (Tick, Tick),
        min_fault_depth_microvolts: i64,
        crash_depth_microvolts: i64,
        bypass_probability: f64,
        rng_seed: u64,
    ) -> Result<Self, SimError> {
        let model = Self {
            ark_window,
            min_fault_depth_microvolts,
            crash_depth_microvolts,
            bypass_probability,
            rng_seed,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.min_fault_depth_microvolts <= 0 {
            return Err(SimError::InvalidModel("minimum fault depth must be positive".into()));
        }
        if self.min_fault_depth_microvolts >= self.crash_depth_microvolts {
            return Err(SimError::InvalidModel(format!(
                "minimum fault depth {} not below crash depth {}",
                self.min_fault_depth_microvolts, self.crash_depth_microvolts
            )));
        }
        if !(0.0..=1.0).contains(&self.bypass_probability) {
            return Err(SimError::InvalidModel(format!(
                "bypass probability {} outside [0, 1]",
                self.bypass_probability
            )));
        }
        if self.ark_window.0 > self.ark_window.1 {
            return Err(SimError::InvalidModel(format!(
                "ARK window {:?} is reversed",
                self.ark_window
            )));
        }
        Ok(())
    }

    /// Probability that an in-band fault which does not skip the check
    /// still disturbs it. Rises linearly from 0 at the minimum depth to 1 at
    /// the crash depth; an undisturbed check compares the hash as usual.
    pub fn disturbance(&self, depth_microvolts: i64) -> f64 {
        let span = (self.crash_depth_microvolts as f64) - (self.min_fault_depth_microvolts as f64);
        (((depth_microvolts - self.min_fault_depth_microvolts) as f64) / span).clamp(0.0, 1.0)
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_validation() {
        assert!(FaultModel::new((0, 10), 100, 200, 0.5, 0).is_ok());
        assert!(FaultModel::new((0, 10), 100, i64::MAX, 1.0, 0).is_ok());
        assert!(matches!(FaultModel::new((0, 10), 200, 200, 0.5, 0), Err(SimError::InvalidModel(_))));
        assert!(matches!(FaultModel::new((0, 10), 100, 200, 1.5, 0), Err(SimError::InvalidModel(_))));
        assert!(matches!(FaultModel::new((0, 10), 100, 200, -0.1, 0), Err(SimError::InvalidModel(_))));
        assert!(matches!(FaultModel::new((0, 10), 100, 200, f64::NAN, 0), Err(SimError::InvalidModel(_))));
        assert!(matches!(FaultModel::new((10, 0), 100, 200, 0.5, 0), Err(SimError::InvalidModel(_))));
    }

    #[test]
    fn disturbance_ramps_across_the_band() {
        let m = FaultModel::new((0, 10), 100, 300, 0.5, 0).unwrap();
        assert_eq!(m.disturbance(50), 0.0);
        assert_eq!(m.disturbance(100), 0.0);
        assert_eq!(m.disturbance(200), 0.5);
        assert_eq!(m.disturbance(300), 1.0);
        let open = FaultModel::new((0, 10), 100, i64::MAX, 0.5, 0).unwrap();
        assert!(open.disturbance(400_000) < 1e-12);
    }

    #[test]
    fn profiles_are_known() {
        for name in PROFILE_NAMES {
            let p = make_profile(name).unwrap();
            assert_eq!(p.name, name);
            p.fault_model(1).unwrap();
        }
        assert_eq!(make_profile("7763"), Err(SimError::UnknownProfile("7763".into())));
    }

    #[test]
    fn profile_bypass_rates_match_published_results() {
        let rate = |n| make_profile(n).unwrap().fault.bypass_probability;
        assert_eq!(rate("72F3"), 0.00129);
        assert_eq!(rate("7272"), 0.00173);
        assert_eq!(rate("7281"), 0.00197);
    }

    #[test]
    fn profile_geometry() {
        let pulses = |n| make_profile(n).unwrap().pulse_count;
        assert_eq!((pulses("72F3"), pulses("7272"), pulses("7281")), (10, 6, 18));
        for name in PROFILE_NAMES {
            let p = make_profile(name).unwrap();
            let prefix = p.prefix_pulses(p.ark_record_len);
            assert_eq!(prefix.len() as u32, p.pulse_count);
            let (w0, w1) = p.ark_window();
            assert_eq!(w1 - w0, 2000);
            assert_eq!(prefix.last().unwrap().0 + w0, prefix.last().unwrap().1);
            let (b0, b1) = p.transition_durations();
            let slew = p.slew_microvolts_per_tick;
            assert!((b0 as i64 - 1) * slew < p.fault.min_fault_depth_microvolts);
            assert!(b0 as i64 * slew >= p.fault.min_fault_depth_microvolts);
            assert!(b1 as i64 * slew < p.fault.crash_depth_microvolts);
            assert!((b1 as i64 + 1) * slew >= p.fault.crash_depth_microvolts);
            assert!(p.fault.crash_depth_microvolts < p.max_depth_microvolts());
            let fw = p.final_window;
            assert!(fw.delay_min >= w0 && fw.delay_max <= w1);
            assert!(fw.duration_min >= b0 && fw.duration_max <= b1);
        }
    }

    #[test]
    fn config_overrides_builtin_profiles() {
        let mut custom = make_profile("7281").unwrap();
        custom.fault.bypass_probability = 0.5;
        let config = SimConfig { profiles: vec![custom.clone()] };
        let text = serde_json::to_string(&config).unwrap();
        let back = SimConfig::from_json(&text).unwrap();
        assert_eq!(back.profile("7281").unwrap(), custom);
        assert_eq!(back.profile("72F3").unwrap(), make_profile("72F3").unwrap());
        assert!(matches!(SimConfig::from_json("{\"profiles\": 3}"), Err(SimError::Config(_))));
    }
}
