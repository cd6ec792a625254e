//! Acceptance suite. Each criterion prints one PASS/FAIL line with the
//! measured values and its wall-clock time; the process exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use irqc::artifact::{format_artifacts, parse_artifacts};
use irqc::cli::{cmd_dtt, cmd_sim, SimArgs};
use irqc_core::dtt::{build_artifacts, compute_effects, generate_masking_map, validate_masking_map, Overrides};
use irqc_core::gic::{DistributorState, EnableOp};
use irqc_core::rtm::{decode_raw, overhead_model, NullClock, RtmState};
use irqc_core::sim::{run, SimOptions};
use irqc_core::{
    ControlFlag, ControlRegister, CriticalityLevel, DegradationMode, EventVector, IrqId, SystemConfig, VmId,
};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn runner() -> TestRunner {
    TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn sample<S: Strategy>(runner: &mut TestRunner, strategy: &S) -> S::Value {
    strategy.new_tree(runner).expect("strategy").current()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_decode_bands() -> Outcome {
    let eps = 1e-9;
    let cases = [
        (0.0, ControlFlag::T3),
        (10.0, ControlFlag::T3),
        (25.0, ControlFlag::T2),
        (25.0 + eps, ControlFlag::T2),
        (50.0, ControlFlag::T1),
        (50.0 + eps, ControlFlag::T1),
        (75.0, ControlFlag::T0),
        (75.0 + eps, ControlFlag::T0),
        (100.0, ControlFlag::T0),
    ];
    let mut wrong = Vec::new();
    for (q, expected) in cases {
        let got = decode_raw(q).map_err(|e| e.to_string())?;
        if got != expected {
            wrong.push(format!("{q} -> {got} (want {expected})"));
        }
    }
    check(wrong.is_empty(), format!("9 points, mismatches: {wrong:?}"))
}

fn c2_overhead() -> Outcome {
    let at10 = overhead_model(0.782, 10.0).map_err(|e| e.to_string())?;
    let worst_tail = (100..=100_000)
        .map(|p| overhead_model(0.782, p as f64).unwrap())
        .fold(0.0, f64::max);
    check(
        (7.77..=7.87).contains(&at10) && worst_tail < 0.8,
        format!("overhead(0.782, 10) = {at10:.4}%, max over p >= 100 = {worst_tail:.4}%"),
    )
}

fn ids(list: &[(u16, u16)]) -> BTreeSet<IrqId> {
    list.iter().map(|(v, k)| IrqId::new(*v, *k)).collect()
}

fn c3_masking_tables() -> Outcome {
    let all = |vms: &[(u16, &[u16])]| -> Vec<(u16, u16)> {
        vms.iter().flat_map(|(v, ks)| ks.iter().map(move |k| (*v, *k))).collect()
    };
    type ModeRows = [Vec<(u16, u16)>; 4];
    let tables: [(&str, ModeRows); 3] = [
        (
            "dual_vm",
            [
                vec![(1, 3)],
                vec![(1, 2), (1, 3)],
                vec![(1, 1), (1, 2), (1, 3)],
                all(&[(1, &[0, 1, 2, 3])]),
            ],
        ),
        (
            "quad_setup1",
            [
                vec![],
                vec![(2, 2), (2, 3), (3, 2), (3, 3)],
                vec![(1, 1), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)],
                all(&[(1, &[0, 1]), (2, &[0, 1, 2, 3]), (3, &[0, 1, 2, 3])]),
            ],
        ),
        (
            "quad_setup2",
            [
                vec![],
                vec![(1, 3), (2, 3), (3, 2), (3, 3)],
                vec![(1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)],
                all(&[(1, &[0, 1, 2, 3]), (2, &[0, 1, 2, 3]), (3, &[0, 1, 2, 3])]),
            ],
        ),
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rows = 0;
    let mut wrong = Vec::new();
    for (name, expected) in tables {
        let out = dir.path().join(format!("{name}.art"));
        let mut log = Vec::new();
        cmd_dtt(
            &fixture(&format!("{name}.conf")),
            Some(&fixture(&format!("{name}.overrides"))),
            &out,
            &mut log,
        )
        .map_err(|e| format!("{name}: {e:#}"))?;
        let artifacts = parse_artifacts(&fs::read_to_string(&out).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let modes = artifacts.masking_map.modes();
        if modes.len() != 4 {
            wrong.push(format!("{name}: {} modes", modes.len()));
            continue;
        }
        for (m, row) in expected.iter().enumerate() {
            rows += 1;
            if modes[m] != ids(row) {
                wrong.push(format!("{name} mode {m}"));
            }
        }
    }
    check(rows == 12 && wrong.is_empty(), format!("{rows} rows compared, mismatches: {wrong:?}"))
}

fn c4_toy_trajectory() -> Outcome {
    let mut config = irqc_core::fixtures::quad_vm_setup2();
    config.stepwise_transitions = true;
    let artifacts = build_artifacts(&config, &Overrides::default()).map_err(|e| e.to_string())?;
    let d_ref = artifacts.reference(VmId(0)).unwrap();
    let mut rtm = RtmState::new(&config, artifacts).map_err(|e| e.to_string())?;
    let mut dist = DistributorState::from_config(&config);
    rtm.apply_initial_mode(&mut dist).map_err(|e| e.to_string())?;
    let initial_words = dist.words().to_vec();

    // Critical-VM QoS per window: T1, T2, T3, then recovery to T0.
    let script = [60.0, 40.0, 10.0, 100.0, 100.0, 100.0];
    let mut modes = vec![rtm.current_mode().0];
    let (mut cleared, mut set) = (Vec::new(), Vec::new());
    for q in script {
        let f = q / 100.0;
        let mut samples: Vec<EventVector> = config
            .vms
            .iter()
            .map(|vm| match vm.criticality {
                CriticalityLevel::AsilD => d_ref.scaled(f, f),
                _ => rtm.reference(vm.id).unwrap_or_default(),
            })
            .collect();
        let out = rtm.tick(&mut samples, &mut dist, &mut NullClock).map_err(|e| e.to_string())?;
        modes.push(out.mode.0);
        for w in out.writes {
            match w.op {
                EnableOp::Clear => cleared.push(w.pin),
                EnableOp::Set => set.push(w.pin),
            }
        }
    }
    let mut reversed = cleared.clone();
    reversed.reverse();
    let fail_safe = config.mode_count - 1;
    let ok = modes == [0, 1, 2, fail_safe, 2, 1, 0]
        && set == reversed
        && cleared.len() == 12
        && dist.words() == initial_words.as_slice();
    check(ok, format!("modes {modes:?}, masked pins {cleared:?}, unmasked pins {set:?}"))
}

fn sim_args(config: &str, scenario: Option<&str>, duration_us: u64, rtm: bool, out: &Path) -> SimArgs {
    SimArgs {
        config: fixture(config),
        artifact: None,
        scenario: scenario.map(fixture),
        duration_us,
        seed: 0,
        out: out.to_path_buf(),
        stepwise: None,
        rtm,
        alpha: None,
        beta: None,
        calibrate: None,
    }
}

fn load(config: &str, overrides: &str) -> Result<(SystemConfig, irqc_core::dtt::Artifacts), String> {
    let c = irqc::cli::load_config(&fixture(config)).map_err(|e| format!("{e:#}"))?;
    let o = irqc::cli::load_overrides(Some(&fixture(overrides))).map_err(|e| format!("{e:#}"))?;
    let a = build_artifacts(&c, &o).map_err(|e| e.to_string())?;
    Ok((c, a))
}

fn c5_calibrated_mitigation() -> Outcome {
    const HORIZON: u64 = 10_000_000;
    const ONSET: u64 = 1_000_000;
    let (config, artifacts) = load("dual_vm.conf", "dual_vm.overrides")?;
    let scenario = irqc::cli::load_scenario(Some(&fixture("dual_onset.scn"))).map_err(|e| format!("{e:#}"))?;
    let from = ONSET + 5 * config.actuation_period_us;
    let d = config.asil_d();
    let off = run(&config, Some(&artifacts), &scenario, HORIZON, SimOptions { rtm_enabled: false, ..SimOptions::default() })
        .map_err(|e| e.to_string())?;
    let on = run(&config, Some(&artifacts), &scenario, HORIZON, SimOptions::default()).map_err(|e| e.to_string())?;
    let s_off = off.window_slowdown(d, from).ok_or("no critical events without RTM")?;
    let s_on = on.window_slowdown(d, from).ok_or("no critical events with RTM")?;
    let mut occupancy = [0usize; 4];
    for (t, m) in &on.modes {
        if *t > from && m.0 < 4 {
            occupancy[m.0] += 1;
        }
    }
    check(
        (s_off - 2.13).abs() <= 0.05 && s_on <= 1.10,
        format!(
            "alpha {:.4}: unmitigated slowdown {s_off:.4} (want 2.13 +- 0.05), with RTM {s_on:.4} (want <= 1.10), mode windows {occupancy:?}",
            config.interference.alpha
        ),
    )
}

fn c6_intermediate_guarantees() -> Outcome {
    const HORIZON: u64 = 10_000_000;
    let (config, artifacts) = load("quad_setup1.conf", "quad_setup1.overrides")?;
    let scenario = Default::default();
    let on = run(&config, Some(&artifacts), &scenario, HORIZON, SimOptions::default()).map_err(|e| e.to_string())?;
    let off = run(&config, Some(&artifacts), &scenario, HORIZON, SimOptions { rtm_enabled: false, ..SimOptions::default() })
        .map_err(|e| e.to_string())?;
    let starved: Vec<String> = on
        .tasks
        .iter()
        .filter(|t| {
            matches!(
                config.criticality(t.irq.vm),
                Some(CriticalityLevel::AsilC | CriticalityLevel::AsilB)
            ) && t.completions == 0
        })
        .map(|t| t.irq.to_string())
        .collect();
    let d = config.asil_d();
    let (d_on, d_off) = (on.vm(d).unwrap(), off.vm(d).unwrap());
    let min_intermediate = on
        .tasks
        .iter()
        .filter(|t| matches!(config.criticality(t.irq.vm), Some(CriticalityLevel::AsilC | CriticalityLevel::AsilB)))
        .map(|t| t.completions)
        .min()
        .unwrap_or(0);
    check(
        starved.is_empty() && d_on.completions >= d_off.completions,
        format!(
            "min C/B task completions {min_intermediate}, starved {starved:?}; ASIL-D completions {} with RTM vs {} without",
            d_on.completions, d_off.completions
        ),
    )
}

fn c7_oracle_equivalence() -> Outcome {
    let mut runner = runner();
    let small = common::arb_config(4, 4);
    let mut registers = 0u64;
    let mut mismatches = Vec::new();
    for _ in 0..500 {
        let config = sample(&mut runner, &small);
        let artifacts = build_artifacts(&config, &Overrides::default()).map_err(|e| e.to_string())?;
        let rtm = RtmState::new(&config, artifacts).map_err(|e| e.to_string())?;
        let layout = rtm.layout().to_vec();
        let d_pos = layout.iter().position(|v| *v == config.asil_d()).unwrap();
        for r in 0..1u32 << (2 * layout.len()) {
            registers += 1;
            let d_flag = ((r >> (2 * d_pos)) & 0b11) as usize;
            let expected = DegradationMode(d_flag.min(config.mode_count - 1));
            let got = rtm.compute_dm(&ControlRegister::unpack(&layout, r)).map_err(|e| e.to_string())?;
            if got != expected && mismatches.len() < 5 {
                mismatches.push(format!("r {r:#x}: {got:?} vs {expected:?}"));
            }
        }
    }
    let large = common::arb_config(6, 8);
    let mut invalid = 0;
    for _ in 0..1000 {
        let config = sample(&mut runner, &large);
        let map = generate_masking_map(&config, &compute_effects(&config));
        if !validate_masking_map(&map, &config).is_ok() {
            invalid += 1;
        }
    }
    check(
        mismatches.is_empty() && invalid == 0,
        format!("{registers} registers over 500 configs, mismatches {mismatches:?}; {invalid}/1000 generated maps invalid"),
    )
}

fn c8_determinism_and_round_trips() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["dual_vm", "quad_setup1", "quad_setup2"] {
        let (_, a) = load(&format!("{name}.conf"), &format!("{name}.overrides"))?;
        let text = format_artifacts(&a);
        let back = parse_artifacts(&text).map_err(|e| e.to_string())?;
        ok &= back == a && format_artifacts(&back) == text && format_artifacts(&a) == text;
    }
    let mut runner = runner();
    let strategy = common::arb_config(6, 8);
    for _ in 0..200 {
        let config = sample(&mut runner, &strategy);
        let a = build_artifacts(&config, &Overrides::default()).map_err(|e| e.to_string())?;
        let text = format_artifacts(&a);
        let back = parse_artifacts(&text).map_err(|e| e.to_string())?;
        ok &= back == a && format_artifacts(&back) == text;
    }
    notes.push(format!("artifact round trips ok={ok}"));

    let mut packs = 0;
    for width in 0..=4usize {
        let layout: Vec<VmId> = (0..width as u16).map(VmId).collect();
        for v in 0..1u32 << (2 * width) {
            packs += 1;
            ok &= ControlRegister::unpack(&layout, v).pack() == v;
        }
    }
    notes.push(format!("{packs} registers packed"));

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}"));
        let mut args = sim_args("quad_setup2.conf", Some("quad_random_phase.scn"), 1_000_000, true, &out);
        args.seed = 7;
        cmd_sim(&args, &mut Vec::new()).map_err(|e| format!("{e:#}"))?;
        let mut files = Vec::new();
        for f in ["report.csv", "qos.csv", "modes.csv", "trace.csv", "instrumentation.csv"] {
            files.push(fs::read(out.join(f)).map_err(|e| e.to_string())?);
        }
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    ok &= same;
    notes.push(format!("seeded CSVs identical={same}"));
    check(ok, notes.join(", "))
}

fn c9_gic_bits() -> Outcome {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    const WORDS: usize = 8;
    let routing = (0..WORDS as u32 * 32).map(|p| (p, VmId((p % 4) as u16))).collect();
    let mut dist = DistributorState::new(routing);
    let mut oracle = vec![false; WORDS * 32];
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let word = rng.random_range(0..WORDS);
        let value: u32 = rng.random();
        let set = rng.random_bool(0.5);
        if set {
            dist.write_isenabler(word, value).unwrap();
        } else {
            dist.write_icenabler(word, value).unwrap();
        }
        for b in 0..32 {
            if value >> b & 1 == 1 {
                oracle[word * 32 + b] = set;
            }
        }
        for (p, want) in oracle.iter().enumerate() {
            if dist.is_delivery_enabled(p as u32) != Ok(*want) {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("10000 writes over {WORDS} words, {mismatches} bit mismatches"))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "decode bands", Duration::from_secs(1), c1_decode_bands),
        (2, "overhead relation", Duration::from_secs(1), c2_overhead),
        (3, "masking tables", Duration::from_secs(1), c3_masking_tables),
        (4, "toy trajectory", Duration::from_secs(1), c4_toy_trajectory),
        (5, "calibrated mitigation", Duration::from_secs(30), c5_calibrated_mitigation),
        (6, "intermediate guarantees", Duration::from_secs(30), c6_intermediate_guarantees),
        (7, "oracle equivalence", Duration::from_secs(60), c7_oracle_equivalence),
        (8, "determinism and round trips", Duration::from_secs(10), c8_determinism_and_round_trips),
        (9, "GIC bit exactness", Duration::from_secs(5), c9_gic_bits),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit:?} limit")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {n} {name}: {} [{:.2}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
