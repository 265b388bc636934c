//! Report the mean rates the shipped synthetic profile is tuned against.
//!
//! `cargo run --release --example calibrate -- [runs] [key=value ...]`
//!
//! Overrides use the experiment config syntax, e.g. `synth.drift_rate=0.03`.

use std::time::Instant;

use sensorfix::classifiers::ClassifierKind;
use sensorfix::harness::{run_experiment, ExperimentConfig, FaultType, Mode, SchedulePreset};

fn stats(base: &ExperimentConfig, mode: Mode, kind: ClassifierKind, schedule: SchedulePreset, fault: FaultType) -> (f64, f64) {
    let mut c = base.clone();
    c.mode = mode;
    c.classifier.kind = kind;
    c.schedule = schedule;
    c.fault_type = fault;
    match run_experiment(&c) {
        Ok(out) => (out.summary.rates.mean, out.summary.rates.std),
        Err(e) => {
            eprintln!("{mode} {kind} {schedule:?}: {e}");
            (f64::NAN, f64::NAN)
        }
    }
}

fn main() {
    let mut args = std::env::args().skip(1).peekable();
    let runs: usize = args.next_if(|a| !a.contains('=')).map_or(20, |a| a.parse().expect("run count"));
    let mut overrides: Vec<String> = args.collect();
    overrides.push(format!("runs.n={runs}"));
    let base = ExperimentConfig::from_toml("", &overrides).expect("config");
    let start = Instant::now();
    for kind in [ClassifierKind::Knn, ClassifierKind::Lda, ClassifierKind::Plsda] {
        let (standard, _) = stats(&base, Mode::Standard, kind, SchedulePreset::None, FaultType::Zero);
        let (uos, _) = stats(&base, Mode::Uos, kind, SchedulePreset::None, FaultType::Zero);
        let (temporary, _) = stats(&base, Mode::Uos, kind, SchedulePreset::SyntheticTemporary, FaultType::Zero);
        print!("{kind:6} standard {standard:.4} uos {uos:.4} temporary {temporary:.4}");
        for fault in [FaultType::Zero, FaultType::Random] {
            let (u, us) = stats(&base, Mode::Uos, kind, SchedulePreset::SyntheticPermanent, fault);
            let (s, ss) = stats(&base, Mode::Sr, kind, SchedulePreset::SyntheticPermanent, fault);
            print!(" | {fault}: uos {u:.4}±{us:.4} sr {s:.4}±{ss:.4}");
        }
        println!();
    }
    println!("({:.1}s)", start.elapsed().as_secs_f64());
}
