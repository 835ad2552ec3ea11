// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sevforge_core::image::{parse_image, FlashImage};
use sevforge_core::sim::{
    make_profile, rom_boot_execute, Anchor, BootOutcomeKind, CpuProfile, InjectionSchedule, PROFILE_NAMES,
};
use sevforge_core::svi2::{vid_to_voltage, Domain, Svi2Command};
use sevforge_core::trace::{classify_feedback, count_cs_pulses, Feedback, Tick, DEFAULT_FEEDBACK_GUARD};

fn fixture(name: &str) -> FlashImage {
    let path = format!("{}/fixtures/images/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_image(&std::fs::read(path).unwrap()).unwrap()
}

fn glitch(p: &CpuProfile, delay: Tick, duration: Tick) -> InjectionSchedule {
    let mut s = InjectionSchedule::default();
    s.push(Anchor::BusActivation, 400, &Svi2Command::telemetry_disable(Domain::Core, p.default_vid));
    s.push(Anchor::BusActivation, 440, &Svi2Command::telemetry_disable(Domain::Soc, p.default_vid));
    let anchor = Anchor::CsPulse(p.pulse_count);
    s.push(anchor, delay - duration, &Svi2Command::set_vid(Domain::Both, p.low_vid, false));
    s.push(anchor, delay, &Svi2Command::set_vid(Domain::Both, p.default_vid, false));
    s
}

#[test]
fn bypass_rate_matches_the_model_over_many_boots() {
    let image = fixture("payload_svn255.bin");
    for name in PROFILE_NAMES {
        let p = make_profile(name).unwrap();
        let (w0, w1) = p.ark_window();
        let (t0, t1) = p.transition_durations();
        let schedule = glitch(&p, (w0 + w1) / 2, (t0 + t1) / 2);
        let n = 100_000u64;
        let mut bypasses = 0u64;
        for seed in 0..n {
            let o = rom_boot_execute(&image, &schedule, &p.fault_model(seed).unwrap(), &p).unwrap();
            bypasses += (o.kind == BootOutcomeKind::Bypass) as u64;
        }
        let q = p.fault.bypass_probability;
        let sigma = (n as f64 * q * (1.0 - q)).sqrt();
        let dev = (bypasses as f64 - n as f64 * q).abs() / sigma;
        assert!(dev <= 3.0, "{name}: {bypasses} bypasses, {dev:.2} sigma");
    }
}

#[test]
fn random_schedules_are_consistent() {
    let images = [fixture("genuine_zen2.bin"), fixture("genuine_zen3.bin"), fixture("payload_svn255.bin")];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..10_000 {
        let p = make_profile(PROFILE_NAMES[rng.gen_range(0..3)]).unwrap();
        let image = &images[rng.gen_range(0..3)];
        let mut schedule = InjectionSchedule::default();
        for _ in 0..rng.gen_range(0..6) {
            let anchor = if rng.gen_bool(0.3) {
                Anchor::BusActivation
            } else {
                Anchor::CsPulse(rng.gen_range(1..=p.pulse_count))
            };
            let domain = [Domain::Core, Domain::Soc, Domain::Both][rng.gen_range(0..3)];
            let cmd = if rng.gen_bool(0.2) {
                Svi2Command::telemetry_disable(domain, p.default_vid)
            } else {
                Svi2Command::set_vid(domain, rng.gen_range(0x40..=0xb0), rng.gen_bool(0.1))
            };
            schedule.push(anchor, rng.gen_range(0..6000), &cmd);
        }
        let model = p.fault_model(rng.gen()).unwrap();
        let o = rom_boot_execute(image, &schedule, &model, &p).unwrap();
        assert_eq!(o, rom_boot_execute(image, &schedule, &model, &p).unwrap(), "case {case}: not deterministic");

        let fb = classify_feedback(&o.trace, o.decision_tick(), DEFAULT_FEEDBACK_GUARD);
        assert_eq!(fb == Feedback::Continues, o.kind.continues(), "case {case}: {:?} vs {fb:?}", o.kind);
        let pulses = count_cs_pulses(&o.trace, o.trace.duration_ticks());
        assert_eq!(pulses as usize, o.trace.falling_edges().count(), "case {case}");
        if o.kind.continues() {
            assert!(pulses > p.pulse_count, "case {case}: no read after the check");
        }
        if o.kind == BootOutcomeKind::KeyRejected {
            assert_eq!(pulses, p.pulse_count, "case {case}: reads after a rejected key");
        }
        if let (Some(min), Some(_)) = (o.fault_minimum_microvolts, o.fault_tick) {
            assert_eq!(o.fault_depth_microvolts, p.default_microvolts() - min, "case {case}");
        }
    }
}

#[test]
fn depth_follows_the_slew_model() {
    let p = make_profile("72F3").unwrap();
    let image = fixture("genuine_zen3.bin");
    let model = p.fault_model(0).unwrap().with_seed(1);
    let floor = p.default_microvolts() - vid_to_voltage(p.low_vid).microvolts();
    let (w0, _) = p.ark_window();
    let mut last = -1;
    for duration in (0..=1600).step_by(20) {
        let o = rom_boot_execute(&image, &glitch(&p, w0 + 1600, duration), &model, &p).unwrap();
        let want = (p.slew_microvolts_per_tick * duration as i64).min(floor);
        assert_eq!(o.fault_depth_microvolts, want, "duration {duration}");
        if want < floor {
            assert!(o.fault_depth_microvolts > last);
        }
        last = o.fault_depth_microvolts;
    }
    assert_eq!(last, floor);
}

#[test]
fn unglitched_boots_read_the_whole_image() {
    for name in PROFILE_NAMES {
        let p = make_profile(name).unwrap();
        let model = p.fault_model(0).unwrap();
        let genuine = rom_boot_execute(&fixture("genuine_zen3.bin"), &InjectionSchedule::default(), &model, &p).unwrap();
        let n = p.prefix_pulses(fixture("genuine_zen3.bin").ark_bytes().len()).len() as u32;
        assert_eq!(n, p.pulse_count);
        assert!(count_cs_pulses(&genuine.trace, genuine.trace.duration_ticks()) > n);
        let rejected =
            rom_boot_execute(&fixture("payload_svn255.bin"), &InjectionSchedule::default(), &model, &p).unwrap();
        assert_eq!(count_cs_pulses(&rejected.trace, rejected.trace.duration_ticks()), n);
    }
}
