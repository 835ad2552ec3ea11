// SPDX-License-Identifier: Apache-2.0

//! SVI2 control packets.
//!
//! An SVI2 command is three bytes sent SMBus "send byte" style, each byte
//! followed by an ACK slot driven by the voltage regulator, for 27 bits on the
//! wire. Field placement (bit 0 is the first bit on the wire):
//!
//! | bits   | field                                   |
//! |--------|-----------------------------------------|
//! | 0..=4  | start pattern `11000`                   |
//! | 5      | VDD (Core) domain select                |
//! | 6      | VDDNB (SoC) domain select               |
//! | 7      | reserved, 0                             |
//! | 8      | ACK                                     |
//! | 9      | PSI0_L                                  |
//! | 10..=16| VID\[7:1\]                              |
//! | 17     | ACK                                     |
//! | 18     | VID\[0\]                                |
//! | 19     | PSI1_L                                  |
//! | 20     | TFN                                     |
//! | 21..=23| load-line slope trim (`011` = no change)|
//! | 24..=25| offset trim (`10` = no change)          |
//! | 26     | ACK                                     |
//!
//! ACK slots are always driven low (acknowledged) by the simulated regulator.

use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame length in bits: three data bytes plus three ACK slots.
pub const FRAME_BITS: u8 = 27;

const START_PATTERN: u32 = 0b11000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Svi2Error {
    #[error("malformed SVI2 frame: {0}")]
    MalformedFrame(String),
    #[error("{microvolts} uV is outside the VID range [{min}, {max}] uV")]
    OutOfRange { microvolts: i64, min: i64, max: i64 },
    #[error("{field} value {value} out of range")]
    InvalidField { field: &'static str, value: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Core,
    Soc,
    Both,
}

impl Domain {
    fn selector_bits(self) -> (bool, bool) {
        match self {
            Domain::Core => (true, false),
            Domain::Soc => (false, true),
            Domain::Both => (true, true),
        }
    }

    fn from_selector_bits(vdd: bool, vddnb: bool) -> Option<Self> {
        match (vdd, vddnb) {
            (true, false) => Some(Domain::Core),
            (false, true) => Some(Domain::Soc),
            (true, true) => Some(Domain::Both),
            (false, false) => None,
        }
    }
}

impl FromStr for Domain {
    type Err = Svi2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "core" | "vdd" => Ok(Domain::Core),
            "soc" | "vddnb" => Ok(Domain::Soc),
            "both" => Ok(Domain::Both),
            _ => Err(Svi2Error::MalformedFrame(format!("unknown domain {s:?}"))),
        }
    }
}

macro_rules! bounded_code {
    ($(#[$m:meta])* $name:ident, $field:literal, $max:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub struct $name(u8);

        impl $name {
            pub const MAX: u8 = $max;

            pub fn new(value: u8) -> Result<Self, Svi2Error> {
                if value <= Self::MAX {
                    Ok(Self(value))
                } else {
                    Err(Svi2Error::InvalidField { field: $field, value })
                }
            }

            pub fn get(self) -> u8 {
                self.0
            }
        }

        impl TryFrom<u8> for $name {
            type Error = Svi2Error;

            fn try_from(value: u8) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$name> for u8 {
            fn from(v: $name) -> u8 {
                v.0
            }
        }
    };
}

bounded_code!(
    /// Regulator efficiency state, 0 (deepest power saving) to 3 (full power).
    ///
    /// Encoded as PSI0_L = bit 0 and PSI1_L = bit 1, so 3 leaves both
    /// power-saving indicators deasserted.
    PowerState,
    "power_state",
    3
);
bounded_code!(LoadLineTrim, "load_line_trim", 7);
bounded_code!(OffsetTrim, "offset_trim", 3);

impl PowerState {
    pub const HIGHEST: PowerState = PowerState(3);
}

impl LoadLineTrim {
    pub const NO_CHANGE: LoadLineTrim = LoadLineTrim(0b011);
}

impl OffsetTrim {
    pub const NO_CHANGE: OffsetTrim = OffsetTrim(0b10);
}

bitflags! {
    /// Configuration fields that carry their "no change" code.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub struct NoChangeMask: u8 {
        const LOAD_LINE_TRIM = 0b01;
        const OFFSET_TRIM = 0b10;
    }
}

/// One SVI2 control packet.
///
/// The VID, domain and power state have no "no change" encoding and are
/// always explicit. TFN = 1 leaves telemetry reporting as it is, TFN = 0
/// switches it off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Svi2Command {
    pub domain: Domain,
    pub vid: u8,
    pub power_state: PowerState,
    pub tfn: bool,
    pub load_line_trim: LoadLineTrim,
    pub offset_trim: OffsetTrim,
}

impl Svi2Command {
    /// A voltage command at full power with every trim left unchanged.
    pub fn set_vid(domain: Domain, vid: u8, tfn: bool) -> Self {
        Self {
            domain,
            vid,
            power_state: PowerState::HIGHEST,
            tfn,
            load_line_trim: LoadLineTrim::NO_CHANGE,
            offset_trim: OffsetTrim::NO_CHANGE,
        }
    }

    /// The packet that turns telemetry reporting off (A4). The VID must
    /// still be a sensible value since there is no "no change" VID.
    pub fn telemetry_disable(domain: Domain, vid: u8) -> Self {
        Self::set_vid(domain, vid, false)
    }

    pub fn no_change_mask(&self) -> NoChangeMask {
        let mut m = NoChangeMask::empty();
        m.set(
            NoChangeMask::LOAD_LINE_TRIM,
            self.load_line_trim == LoadLineTrim::NO_CHANGE,
        );
        m.set(NoChangeMask::OFFSET_TRIM, self.offset_trim == OffsetTrim::NO_CHANGE);
        m
    }
}

/// A bit-level frame as seen on SVD, first wire bit in the most significant
/// position of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Svi2Frame {
    bits: u32,
    len: u8,
}

impl Svi2Frame {
    pub fn new(bits: u32, len: u8) -> Result<Self, Svi2Error> {
        if len > 32 || (len < 32 && bits >> len != 0) {
            return Err(Svi2Error::MalformedFrame(format!(
                "value {bits:#x} does not fit in {len} bits"
            )));
        }
        Ok(Self { bits, len })
    }

    pub fn from_wire_bits(wire: &[bool]) -> Result<Self, Svi2Error> {
        if wire.len() > 32 {
            return Err(Svi2Error::MalformedFrame(format!("{} bits", wire.len())));
        }
        let bits = wire.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        Ok(Self { bits, len: wire.len() as u8 })
    }

    pub fn wire_bits(&self) -> Vec<bool> {
        (0..self.len).rev().map(|i| (self.bits >> i) & 1 == 1).collect()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Field extraction by wire position.
    fn field(&self, first: u8, width: u8) -> u32 {
        (self.bits >> (self.len - first - width)) & ((1 << width) - 1)
    }
}

impl fmt::Display for Svi2Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = (self.len as usize).div_ceil(4).max(1);
        write!(f, "0x{:0digits$x}/{}", self.bits, self.len)
    }
}

impl Serialize for Svi2Frame {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Svi2Frame {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Svi2Frame {
    type Err = Svi2Error;

    /// Accepts `0x612309c/27`, `612309c/27` or a bare hex value, which is
    /// taken as a 27-bit frame.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (hex_part, len) = match s.split_once('/') {
            Some((h, l)) => (
                h,
                l.parse::<u8>()
                    .map_err(|e| Svi2Error::MalformedFrame(format!("bad bit length {l:?}: {e}")))?,
            ),
            None => (s, FRAME_BITS),
        };
        let hex_part = hex_part.trim_start_matches("0x").trim_start_matches("0X");
        let bits = u32::from_str_radix(hex_part, 16)
            .map_err(|e| Svi2Error::MalformedFrame(format!("bad hex {hex_part:?}: {e}")))?;
        Self::new(bits, len)
    }
}

pub fn encode_command(cmd: &Svi2Command) -> Svi2Frame {
    let (vdd, vddnb) = cmd.domain.selector_bits();
    let ps = cmd.power_state.get() as u32;
    let vid = cmd.vid as u32;
    let mut bits = 0u32;
    let mut push = |value: u32, width: u32| bits = (bits << width) | (value & ((1 << width) - 1));

    push(START_PATTERN, 5);
    push(vdd as u32, 1);
    push(vddnb as u32, 1);
    push(0, 1);
    push(0, 1); // ACK
    push(ps & 1, 1);
    push(vid >> 1, 7);
    push(0, 1); // ACK
    push(vid & 1, 1);
    push(ps >> 1, 1);
    push(cmd.tfn as u32, 1);
    push(cmd.load_line_trim.get() as u32, 3);
    push(cmd.offset_trim.get() as u32, 2);
    push(0, 1); // ACK

    Svi2Frame { bits, len: FRAME_BITS }
}

pub fn decode_command(frame: &Svi2Frame) -> Result<Svi2Command, Svi2Error> {
    if frame.len != FRAME_BITS {
        return Err(Svi2Error::MalformedFrame(format!(
            "expected {FRAME_BITS} bits, got {}",
            frame.len
        )));
    }
    if frame.field(0, 5) != START_PATTERN {
        return Err(Svi2Error::MalformedFrame(format!(
            "start pattern {:05b}",
            frame.field(0, 5)
        )));
    }
    if frame.field(7, 1) != 0 {
        return Err(Svi2Error::MalformedFrame("reserved bit 7 set".into()));
    }
    for ack in [8, 17, 26] {
        if frame.field(ack, 1) != 0 {
            return Err(Svi2Error::MalformedFrame(format!("NACK in slot {ack}")));
        }
    }
    let domain = Domain::from_selector_bits(frame.field(5, 1) == 1, frame.field(6, 1) == 1)
        .ok_or_else(|| Svi2Error::MalformedFrame("no voltage domain selected".into()))?;
    let vid = ((frame.field(10, 7) << 1) | frame.field(18, 1)) as u8;
    let power_state = PowerState::new((frame.field(19, 1) << 1 | frame.field(9, 1)) as u8)?;
    Ok(Svi2Command {
        domain,
        vid,
        power_state,
        tfn: frame.field(20, 1) == 1,
        load_line_trim: LoadLineTrim::new(frame.field(21, 3) as u8)?,
        offset_trim: OffsetTrim::new(frame.field(24, 2) as u8)?,
    })
}

/// A regulator output level, kept in integer micro-volts.
///
/// VIDs past the regulator floor map to zero or negative nominal levels;
/// regulators treat those as "output off".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoltageSetting {
    microvolts: i64,
}

impl VoltageSetting {
    /// Rail-off sentinel, returned for VID 0xFF.
    pub const OFF: VoltageSetting = VoltageSetting { microvolts: 0 };

    pub fn microvolts(self) -> i64 {
        self.microvolts
    }

    pub fn volts(self) -> f64 {
        self.microvolts as f64 / 1e6
    }

    /// Level actually driven onto the rail.
    pub fn output_microvolts(self) -> i64 {
        self.microvolts.max(0)
    }
}

impl fmt::Display for VoltageSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.5} V", self.volts())
    }
}

/// Affine VID → voltage mapping of a regulator profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VidMap {
    pub base_microvolts: i64,
    pub step_microvolts: i64,
}

impl Default for VidMap {
    fn default() -> Self {
        Self { base_microvolts: 1_550_000, step_microvolts: 6_250 }
    }
}

impl VidMap {
    pub const OFF_VID: u8 = 0xFF;

    pub fn vid_to_voltage(&self, vid: u8) -> VoltageSetting {
        if vid == Self::OFF_VID {
            return VoltageSetting::OFF;
        }
        VoltageSetting {
            microvolts: self.base_microvolts - vid as i64 * self.step_microvolts,
        }
    }

    /// Nearest VID for a requested level; a level exactly between two codes
    /// resolves to the lower voltage.
    pub fn voltage_to_vid(&self, microvolts: i64) -> Result<u8, Svi2Error> {
        let max = self.vid_to_voltage(0).microvolts;
        let min = self.vid_to_voltage(Self::OFF_VID - 1).microvolts;
        if !(min..=max).contains(&microvolts) {
            return Err(Svi2Error::OutOfRange { microvolts, min, max });
        }
        let below = self.base_microvolts - microvolts;
        let (q, r) = (below / self.step_microvolts, below % self.step_microvolts);
        let vid = if 2 * r >= self.step_microvolts { q + 1 } else { q };
        Ok(vid as u8)
    }
}

pub fn vid_to_voltage(vid: u8) -> VoltageSetting {
    VidMap::default().vid_to_voltage(vid)
}

pub fn voltage_to_vid(microvolts: i64) -> Result<u8, Svi2Error> {
    VidMap::default().voltage_to_vid(microvolts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_command() -> impl Strategy<Value = Svi2Command> {
        (
            prop_oneof![Just(Domain::Core), Just(Domain::Soc), Just(Domain::Both)],
            any::<u8>(),
            0u8..=3,
            any::<bool>(),
            0u8..=7,
            0u8..=3,
        )
            .prop_map(|(domain, vid, ps, tfn, ll, off)| Svi2Command {
                domain,
                vid,
                power_state: PowerState::new(ps).unwrap(),
                tfn,
                load_line_trim: LoadLineTrim::new(ll).unwrap(),
                offset_trim: OffsetTrim::new(off).unwrap(),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn encode_decode_round_trip(cmd in arb_command()) {
            let frame = encode_command(&cmd);
            prop_assert_eq!(frame.len(), FRAME_BITS);
            prop_assert_eq!(decode_command(&frame).unwrap(), cmd);
            let text: Svi2Frame = frame.to_string().parse().unwrap();
            prop_assert_eq!(text, frame);
        }
    }

    // Values from oracles/svi2_oracle.py.
    #[test]
    fn known_frames() {
        let soc = Svi2Command::set_vid(Domain::Soc, 0x18, false);
        assert_eq!(encode_command(&soc).bits(), 0x612309c);
        assert_eq!(encode_command(&soc).to_string(), "0x612309c/27");

        let core = Svi2Command::set_vid(Domain::Core, 0x58, true);
        assert_eq!(encode_command(&core).bits(), 0x622b0dc);

        let odd = Svi2Command {
            domain: Domain::Both,
            vid: 0xFF,
            power_state: PowerState::new(0).unwrap(),
            tfn: false,
            load_line_trim: LoadLineTrim::new(5).unwrap(),
            offset_trim: OffsetTrim::new(1).unwrap(),
        };
        assert_eq!(encode_command(&odd).bits(), 0x631fd2a);
    }

    #[test]
    fn telemetry_disable_leaves_everything_else_unchanged() {
        let cmd = Svi2Command::telemetry_disable(Domain::Soc, 0x58);
        assert!(!cmd.tfn);
        assert_eq!(cmd.no_change_mask(), NoChangeMask::all());
        let decoded = decode_command(&encode_command(&cmd)).unwrap();
        assert_eq!(decoded.no_change_mask(), NoChangeMask::all());
    }

    #[test]
    fn short_frame_is_malformed() {
        let frame = encode_command(&Svi2Command::set_vid(Domain::Soc, 1, true));
        let mut wire = frame.wire_bits();
        wire.pop();
        let short = Svi2Frame::from_wire_bits(&wire).unwrap();
        assert_eq!(short.len(), 26);
        assert!(matches!(decode_command(&short), Err(Svi2Error::MalformedFrame(_))));
    }

    #[test]
    fn invalid_selector_patterns_are_malformed() {
        let good = encode_command(&Svi2Command::set_vid(Domain::Both, 0x20, true)).wire_bits();
        // every start pattern except 11000, and the empty domain selection
        for start in 0u8..32 {
            let mut w = good.clone();
            for (i, bit) in w.iter_mut().take(5).enumerate() {
                *bit = (start >> (4 - i)) & 1 == 1;
            }
            let res = decode_command(&Svi2Frame::from_wire_bits(&w).unwrap());
            assert_eq!(res.is_ok(), start == 0b11000, "start {start:05b}");
        }
        let mut w = good.clone();
        w[5] = false;
        w[6] = false;
        assert!(decode_command(&Svi2Frame::from_wire_bits(&w).unwrap()).is_err());
        let mut w = good.clone();
        w[7] = true;
        assert!(decode_command(&Svi2Frame::from_wire_bits(&w).unwrap()).is_err());
        for ack in [8, 17, 26] {
            let mut w = good.clone();
            w[ack] = true;
            assert!(decode_command(&Svi2Frame::from_wire_bits(&w).unwrap()).is_err());
        }
    }

    #[test]
    fn vid_mapping_boundaries() {
        assert_eq!(vid_to_voltage(0x00).microvolts(), 1_550_000);
        assert_eq!(vid_to_voltage(0x01).microvolts(), 1_543_750);
        assert_eq!(vid_to_voltage(0xFF), VoltageSetting::OFF);
        assert_eq!(voltage_to_vid(1_550_000), Ok(0x00));
        assert_eq!(voltage_to_vid(1_546_875), Ok(0x01));
        assert!(matches!(voltage_to_vid(2_000_000), Err(Svi2Error::OutOfRange { .. })));
    }

    #[test]
    fn vid_mapping_steps_and_round_trip() {
        for vid in 0u8..=254 {
            let v = vid_to_voltage(vid);
            assert_eq!(v.microvolts() % 6250, 0);
            assert_eq!(voltage_to_vid(v.microvolts()), Ok(vid));
            if vid < 254 {
                let next = vid_to_voltage(vid + 1);
                assert_eq!(v.microvolts() - next.microvolts(), 6250);
            }
        }
    }

    #[test]
    fn bounded_fields_reject_out_of_range() {
        assert!(PowerState::new(4).is_err());
        assert!(LoadLineTrim::new(8).is_err());
        assert!(OffsetTrim::new(4).is_err());
        assert!(Svi2Frame::new(1 << 27, 27).is_err());
    }
}
