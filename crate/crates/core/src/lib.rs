// SPDX-License-Identifier: Apache-2.0

//! `sevforge-core` models the AMD Secure Processor's early boot chain at desk
//! scale.
//!
//! The crate contains:
//!
//! * [`svi2`]: the SVI2 voltage-regulator command codec and VID mapping.
//! * [`trace`]: SPI chip-select traces and the trigger analysis built on them.
//! * [`sim`]: a deterministic simulator of the voltage regulator and the ROM
//!   bootloader's ARK check under voltage faults.
//! * [`campaign`]: the glitch attack cycle and the automated parameter search.
//! * [`image`]: the simulated SPI flash image format, signing and chain
//!   verification.
//! * [`fwcrypto`]: the rK → iKEK → cK → component decryption hierarchy.
//! * [`keyderive`]: CEK, chip ID and VCEK derivation, TCB downgrades and the
//!   hash-bound variant.
//! * [`scenario`]: end-to-end pipelines composing all of the above.




pub mod campaign;
pub mod fwcrypto;
pub mod image;
pub mod keyderive;
pub mod scenario;
pub mod sim;


pub mod svi2;
pub mod trace;

mod hexser;

/// Duration of one trigger busy-loop iteration, the toolkit-wide time base.
pub const TICK_PICOSECONDS: u64 = 12_500;

/// Number of ticks in one second of simulated time.
pub const TICKS_PER_SECOND: u64 = 1_000_000_000_000 / TICK_PICOSECONDS;
