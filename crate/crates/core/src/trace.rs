// SPDX-License-Identifier: Apache-2.0

//! SPI chip-select traces.
//!
//! CS is active low: it idles high and the SPI master pulls it low for every
//! transfer. A trace stores only the transitions, timestamped in 12.5 ns
//! ticks, plus the total observation length.
//!
//! The CSV form is a `tick,level` header followed by one row per transition
//! (`1` = high, `0` = low) and a closing `<duration_ticks>,end` row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Tick = u64;

/// Settle interval after the fault before SPI silence is taken as final:
/// 8000 ticks = 100 us.
pub const DEFAULT_FEEDBACK_GUARD: Tick = 8_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("trace CSV line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("trace has only {found} CS pulses, {wanted} requested")]
    MissingPulse { wanted: u32, found: u32 },
    #[error("traces diverge at edge {edge} before the verification window")]
    PrefixMismatch { edge: usize },
    #[error("no quiet gap found after the counted CS pulses")]
    NoGapFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    High,
    Low,
}

impl Level {
    pub fn toggled(self) -> Level {
        match self {
            Level::High => Level::Low,
            Level::Low => Level::High,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub tick: Tick,
    /// Level the line settles at after this transition.
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CsTrace {
    edges: Vec<Edge>,
    duration_ticks: Tick,
}

impl CsTrace {
    pub fn new(edges: Vec<Edge>, duration_ticks: Tick) -> Result<Self, TraceError> {
        for pair in edges.windows(2) {
            if pair[1].tick <= pair[0].tick {
                return Err(TraceError::Invalid(format!(
                    "timestamps not increasing at tick {}",
                    pair[1].tick
                )));
            }
            if pair[1].level == pair[0].level {
                return Err(TraceError::Invalid(format!(
                    "levels do not alternate at tick {}",
                    pair[1].tick
                )));
            }
        }
        if let Some(last) = edges.last() {
            if last.tick > duration_ticks {
                return Err(TraceError::Invalid(format!(
                    "edge at {} beyond trace end {duration_ticks}",
                    last.tick
                )));
            }
        }
        Ok(Self { edges, duration_ticks })
    }

    pub fn empty(duration_ticks: Tick) -> Self {
        Self { edges: Vec::new(), duration_ticks }
    }

    /// Builds a trace from `(falling, rising)` pulse pairs.
    pub fn from_pulses(
        pulses: impl IntoIterator<Item = (Tick, Tick)>,
        duration_ticks: Tick,
    ) -> Result<Self, TraceError> {
        let edges = pulses
            .into_iter()
            .flat_map(|(fall, rise)| {
                [Edge { tick: fall, level: Level::Low }, Edge { tick: rise, level: Level::High }]
            })
            .collect();
        Self::new(edges, duration_ticks)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn duration_ticks(&self) -> Tick {
        self.duration_ticks
    }

    pub fn falling_edges(&self) -> impl Iterator<Item = Tick> + '_ {
        self.edges.iter().filter(|e| e.level == Level::Low).map(|e| e.tick)
    }

    /// Tick of the `n`-th falling edge, counting from 1.
    pub fn nth_falling_edge(&self, n: u32) -> Option<Tick> {
        if n == 0 {
            return None;
        }
        self.falling_edges().nth(n as usize - 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,level\n");
        for e in &self.edges {
            let lvl = match e.level {
                Level::High => 1,
                Level::Low => 0,
            };
            let _ = writeln!(out, "{},{}", e.tick, lvl);
        }
        let _ = writeln!(out, "{},end", self.duration_ticks);
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "tick,level" => {}
            _ => return Err(TraceError::Csv { line: 1, reason: "missing tick,level header".into() }),
        }
        let mut edges = Vec::new();
        let mut duration = None;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if duration.is_some() {
                return Err(TraceError::Csv { line: line_no, reason: "data after end row".into() });
            }
            let (tick, level) = line
                .split_once(',')
                .ok_or_else(|| TraceError::Csv { line: line_no, reason: "expected two columns".into() })?;
            let tick: Tick = tick
                .trim()
                .parse()
                .map_err(|e| TraceError::Csv { line: line_no, reason: format!("tick: {e}") })?;
            match level.trim() {
                "0" => edges.push(Edge { tick, level: Level::Low }),
                "1" => edges.push(Edge { tick, level: Level::High }),
                "end" => duration = Some(tick),
                other => {
                    return Err(TraceError::Csv {
                        line: line_no,
                        reason: format!("unknown level {other:?}"),
                    })
                }
            }
        }
        let duration = duration.unwrap_or_else(|| edges.last().map_or(0, |e| e.tick));
        Self::new(edges, duration)
    }
}

/// Number of complete high → low → high CS excursions whose falling edge
/// lies before `until`. Monotone non-decreasing in `until`.
pub fn count_cs_pulses(trace: &CsTrace, until: Tick) -> u32 {
    trace
        .edges
        .windows(2)
        .filter(|w| w[0].level == Level::Low && w[1].level == Level::High && w[0].tick < until)
        .count() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    /// No further flash accesses: key rejected or the ROM crashed.
    Silent,
    /// The ROM keeps loading from flash.
    Continues,
}

/// Looks for SPI activity after `fault_time + guard`.
pub fn classify_feedback(trace: &CsTrace, fault_time: Tick, guard: Tick) -> Feedback {
    let horizon = fault_time.saturating_add(guard);
    let resumed = trace
        .falling_edges()
        .any(|t| t > horizon && t <= trace.duration_ticks);
    if resumed {
        Feedback::Continues
    } else {
        Feedback::Silent
    }
}

/// Range of sensible delay values, in ticks after the last counted CS pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DelayWindow {
    pub first_delay: Tick,
    pub last_delay: Tick,
}

impl DelayWindow {
    pub fn new(first_delay: Tick, last_delay: Tick) -> Option<Self> {
        (first_delay <= last_delay).then_some(Self { first_delay, last_delay })
    }

    pub fn width(&self) -> Tick {
        self.last_delay - self.first_delay
    }

    pub fn contains(&self, delay: Tick) -> bool {
        (self.first_delay..=self.last_delay).contains(&delay)
    }
}

/// Derives the ARK verification window from two duration-zero probe traces.
///
/// Both traces are aligned on their `pulse_count`-th falling edge. The first
/// delay is the end of the invalid-key trace's last transfer; the last delay
/// is the first falling edge after the quiet gap in the valid-key trace. The
/// gap only counts as such when it is longer than every inter-transfer gap in
/// the shared prefix.
pub fn locate_ark_window(
    trace_invalid_ark: &CsTrace,
    trace_valid_ark: &CsTrace,
    pulse_count: u32,
) -> Result<DelayWindow, TraceError> {
    let found = |t: &CsTrace| t.falling_edges().count() as u32;
    let ref_invalid = trace_invalid_ark
        .nth_falling_edge(pulse_count)
        .ok_or(TraceError::MissingPulse { wanted: pulse_count, found: found(trace_invalid_ark) })?;
    let ref_valid = trace_valid_ark
        .nth_falling_edge(pulse_count)
        .ok_or(TraceError::MissingPulse { wanted: pulse_count, found: found(trace_valid_ark) })?;

    let rel = |e: &Edge, r: Tick| (e.tick as i128 - r as i128, e.level);
    let prefix = trace_invalid_ark.edges();
    if prefix.len() > trace_valid_ark.edges().len() {
        return Err(TraceError::PrefixMismatch { edge: trace_valid_ark.edges().len() });
    }
    for (i, (a, b)) in prefix.iter().zip(trace_valid_ark.edges()).enumerate() {
        if rel(a, ref_invalid) != rel(b, ref_valid) {
            return Err(TraceError::PrefixMismatch { edge: i });
        }
    }

    let last_activity = prefix.last().expect("trace has at least pulse_count edges").tick;
    let first_delay = last_activity - ref_invalid;

    let resume = trace_valid_ark.edges()[prefix.len()..]
        .iter()
        .find(|e| e.level == Level::Low)
        .ok_or(TraceError::NoGapFound)?;
    let last_delay = resume.tick - ref_valid;

    let widest_prefix_gap = prefix
        .windows(2)
        .filter(|w| w[0].level == Level::High)
        .map(|w| w[1].tick - w[0].tick)
        .max()
        .unwrap_or(0);
    if last_delay - first_delay <= widest_prefix_gap {
        return Err(TraceError::NoGapFound);
    }

    Ok(DelayWindow { first_delay, last_delay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pulses(p: &[(Tick, Tick)], end: Tick) -> CsTrace {
        CsTrace::from_pulses(p.iter().copied(), end).unwrap()
    }

    #[test]
    fn empty_trace_has_no_pulses() {
        assert_eq!(count_cs_pulses(&CsTrace::empty(1000), 1000), 0);
    }

    #[test]
    fn counts_complete_pulses() {
        let t = pulses(&[(10, 20), (30, 40), (50, 60)], 100);
        assert_eq!(count_cs_pulses(&t, 100), 3);
        assert_eq!(count_cs_pulses(&t, 30), 1);
        assert_eq!(count_cs_pulses(&t, 31), 2);
        // a falling edge without its rising edge is not a complete pulse
        let open = CsTrace::new(vec![Edge { tick: 5, level: Level::Low }], 10).unwrap();
        assert_eq!(count_cs_pulses(&open, 10), 0);
    }

    #[test]
    fn rejects_bad_edges() {
        let e = |tick, level| Edge { tick, level };
        assert!(CsTrace::new(vec![e(5, Level::Low), e(5, Level::High)], 10).is_err());
        assert!(CsTrace::new(vec![e(5, Level::Low), e(6, Level::Low)], 10).is_err());
        assert!(CsTrace::new(vec![e(50, Level::Low)], 10).is_err());
    }

    #[test]
    fn feedback_classification() {
        let t = pulses(&[(10, 20), (30, 40)], 40);
        assert_eq!(classify_feedback(&t, 40, DEFAULT_FEEDBACK_GUARD), Feedback::Silent);

        let resumed = pulses(&[(10, 20), (1_000_040, 1_000_100)], 2_000_000);
        assert_eq!(classify_feedback(&resumed, 40, DEFAULT_FEEDBACK_GUARD), Feedback::Continues);

        // activity inside the guard interval is ignored
        let early = pulses(&[(10, 20), (100, 120)], 20_000);
        assert_eq!(classify_feedback(&early, 40, DEFAULT_FEEDBACK_GUARD), Feedback::Silent);
    }

    #[test]
    fn csv_round_trip_and_format() {
        let t = pulses(&[(10, 20), (30, 45)], 100);
        let csv = t.to_csv();
        assert_eq!(csv, "tick,level\n10,0\n20,1\n30,0\n45,1\n100,end\n");
        assert_eq!(CsTrace::from_csv(&csv).unwrap(), t);
        assert!(CsTrace::from_csv("t,l\n").is_err());
        assert!(CsTrace::from_csv("tick,level\n10,2\n").is_err());
    }

    fn ark_traces(gap: Tick) -> (CsTrace, CsTrace) {
        let prefix = [(100, 160), (200, 260), (300, 360), (400, 430)];
        let invalid = pulses(&prefix, 20_000);
        let mut v = prefix.to_vec();
        v.extend([(430 + gap, 500 + gap), (540 + gap, 600 + gap)]);
        (invalid, pulses(&v, 20_000))
    }

    #[test]
    fn locates_window_between_last_pulse_and_resume() {
        let (invalid, valid) = ark_traces(2000);
        let w = locate_ark_window(&invalid, &valid, 4).unwrap();
        assert_eq!(w, DelayWindow { first_delay: 30, last_delay: 2030 });
        // fewer counted pulses shift both ends by the skipped transfers
        let w = locate_ark_window(&invalid, &valid, 3).unwrap();
        assert_eq!(w, DelayWindow { first_delay: 130, last_delay: 2130 });
    }

    #[test]
    fn identical_invalid_traces_have_no_gap() {
        let (invalid, _) = ark_traces(2000);
        assert_eq!(locate_ark_window(&invalid, &invalid, 4), Err(TraceError::NoGapFound));
    }

    #[test]
    fn short_gap_is_not_a_window() {
        let (invalid, valid) = ark_traces(5);
        assert_eq!(locate_ark_window(&invalid, &valid, 4), Err(TraceError::NoGapFound));
    }

    #[test]
    fn diverging_prefix_is_rejected() {
        let (invalid, _) = ark_traces(2000);
        let other = pulses(&[(100, 160), (200, 270), (300, 360), (400, 430), (3000, 3100)], 20_000);
        assert_eq!(
            locate_ark_window(&invalid, &other, 4),
            Err(TraceError::PrefixMismatch { edge: 3 })
        );
        assert!(matches!(
            locate_ark_window(&invalid, &other, 9),
            Err(TraceError::MissingPulse { .. })
        ));
    }

    fn arb_trace() -> impl Strategy<Value = CsTrace> {
        prop::collection::vec((1u64..500, 1u64..500), 0..40).prop_map(|steps| {
            let mut t = 0;
            let mut p = Vec::new();
            for (gap, width) in steps {
                let fall = t + gap;
                let rise = fall + width;
                p.push((fall, rise));
                t = rise;
            }
            CsTrace::from_pulses(p, t + 100).unwrap()
        })
    }

    proptest! {
        #[test]
        fn pulse_count_is_monotone(trace in arb_trace(), a in 0u64..30_000, b in 0u64..30_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(count_cs_pulses(&trace, lo) <= count_cs_pulses(&trace, hi));
        }

        #[test]
        fn end_of_trace_is_always_silent(trace in arb_trace()) {
            prop_assert_eq!(
                classify_feedback(&trace, trace.duration_ticks(), DEFAULT_FEEDBACK_GUARD),
                Feedback::Silent
            );
            prop_assert_eq!(classify_feedback(&trace, trace.duration_ticks(), 0), Feedback::Silent);
        }

        #[test]
        fn located_windows_are_ordered(gap in 0u64..5000, count in 1u32..=4) {
            let (invalid, valid) = ark_traces(gap);
            if let Ok(w) = locate_ark_window(&invalid, &valid, count) {
                prop_assert!(w.first_delay <= w.last_delay);
            }
        }

        #[test]
        fn csv_round_trips(trace in arb_trace()) {
            prop_assert_eq!(CsTrace::from_csv(&trace.to_csv()).unwrap(), trace);
        }
    }
}
