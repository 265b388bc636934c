use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sensorfix::dataset::{META_FILE, TEST_FILE, TRAIN_FILE};
use sensorfix::harness::config::{apply_overrides, SourceKind};
use sensorfix::harness::report::{write_outputs, RUNS_FILE, SUMMARY_FILE};
use sensorfix::harness::runner::run_seed;
use sensorfix::harness::{compare_paired, run_experiment_with, run_one, DataSource, ExperimentConfig};
use sensorfix::ingest::{format_record, parse_files, select_subset, SubsetSpec};
use sensorfix::synth::{generate, SynthConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{Manifest, MANIFEST_FILE};
use crate::GlobalArgs;

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.csv";
pub const COMPARISONS_FILE: &str = "comparisons.csv";
pub const SKIPPED_FILE: &str = "skipped.txt";

fn out_dir(g: &GlobalArgs) -> Result<&Path, CliError> {
    let dir = g
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out is required for this command".into()))?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn config_text(g: &GlobalArgs) -> Result<String, CliError> {
    match &g.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::io(p, e)),
        None => Ok(String::new()),
    }
}

/// Config file, then `--set`, then the dedicated flags.
fn load_config<T: DeserializeOwned>(g: &GlobalArgs, flags: &[String]) -> Result<T, CliError> {
    let mut table: toml::Table = toml::from_str(&config_text(g)?)
        .map_err(|e| sensorfix::Error::Config(e.to_string()))?;
    apply_overrides(&mut table, &g.set)?;
    apply_overrides(&mut table, flags)?;
    Ok(table
        .try_into()
        .map_err(|e: toml::de::Error| sensorfix::Error::Config(e.to_string()))?)
}

fn to_toml<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("config serializes")
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn new_manifest(g: &GlobalArgs, command: &str, config: String) -> Result<Manifest, CliError> {
    let mut m = Manifest::new(command, config);
    if let Some(p) = &g.config {
        m.add_input(p)?;
    }
    Ok(m)
}

fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    [TRAIN_FILE, TEST_FILE, META_FILE].iter().map(|f| dir.join(f)).collect()
}

pub fn gen_synth(g: &GlobalArgs) -> Result<(), CliError> {
    if g.workers.is_some() {
        log::warn!("--workers has no effect on gen-synth");
    }
    let flags: Vec<String> = g.seed.iter().map(|s| format!("seed={s}")).collect();
    let cfg: SynthConfig = load_config(g, &flags)?;
    cfg.validate()?;
    let dir = out_dir(g)?;
    let data = generate(&cfg)?;
    data.save(dir)?;

    let mut m = new_manifest(g, "gen-synth", to_toml(&cfg))?;
    m.base_seed = Some(cfg.seed);
    m.add_artifacts(dir, &dataset_files(dir))?;
    m.write(dir)?;
    println!(
        "wrote {} training and {} test samples to {}",
        data.train.n_rows(),
        data.test.len(),
        dir.display()
    );
    Ok(())
}

pub fn ingest(g: &GlobalArgs, files: &[PathBuf], permissive: bool) -> Result<(), CliError> {
    if g.seed.is_some() || g.workers.is_some() {
        log::warn!("--seed and --workers have no effect on ingest");
    }
    let spec: SubsetSpec = load_config(g, &[])?;
    let dir = out_dir(g)?;
    let parsed = parse_files(files, permissive)?;
    let data = select_subset(&parsed.records, &spec)?;
    data.save(dir)?;

    let mut artifacts = dataset_files(dir);
    if !parsed.skipped.is_empty() {
        log::warn!("skipped {} malformed lines", parsed.skipped.len());
        let mut text = String::new();
        for s in &parsed.skipped {
            let _ = writeln!(text, "{}:{}: {}", s.path.display(), s.line, s.reason);
        }
        artifacts.push(write_file(&dir.join(SKIPPED_FILE), &text)?);
    }

    let mut m = new_manifest(g, "ingest", to_toml(&spec))?;
    for f in files {
        m.add_input(f)?;
    }
    m.add_artifacts(dir, &artifacts)?;
    m.write(dir)?;
    log::info!("first record: {}", parsed.records.first().map(format_record).unwrap_or_default());
    println!(
        "selected {} of {} records ({} skipped) into {}",
        data.train.n_rows() + data.test.len(),
        parsed.records.len(),
        parsed.skipped.len(),
        dir.display()
    );
    Ok(())
}

fn experiment_config(g: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let mut flags = Vec::new();
    if let Some(w) = g.workers {
        flags.push(format!("runs.workers={w}"));
    }
    if let Some(s) = g.seed {
        flags.push(format!("runs.seed={s}"));
    }
    let cfg: ExperimentConfig = load_config(g, &flags)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(g: &GlobalArgs) -> Result<(), CliError> {
    let cfg = experiment_config(g)?;
    let dir = out_dir(g)?;
    let source = DataSource::from_config(&cfg)?;
    let outcome = run_experiment_with(&cfg, &source)?;

    let mut artifacts = write_outputs(dir, &cfg, &outcome)?;
    artifacts.push(write_file(&dir.join(CONFIG_FILE), &cfg.to_toml())?);

    let mut m = new_manifest(g, "run", cfg.to_toml())?;
    if cfg.dataset.source == SourceKind::Dir {
        if let Some(p) = &cfg.dataset.path {
            for f in dataset_files(p) {
                m.add_input(&f)?;
            }
        }
    }
    m.base_seed = Some(cfg.runs.seed);
    m.run_seeds = (0..cfg.runs.n).map(|i| run_seed(cfg.runs.seed, i)).collect();
    m.add_artifacts(dir, &artifacts)?;
    m.write(dir)?;

    let s = &outcome.summary;
    println!(
        "{} {} {}: mean rate {:.4} (std {:.4}) over {} runs, {} failed, {} flagged",
        cfg.mode,
        cfg.classifier.kind,
        cfg.fault_label(),
        s.rates.mean,
        s.rates.std,
        s.rates.n,
        s.n_failed,
        s.n_flagged
    );
    Ok(())
}

#[derive(Debug, Clone, serde::Deserialize)]
struct SummaryRow {
    mode: String,
    classifier: String,
    fault_type: String,
    n: usize,
    failed: usize,
    mean: f64,
    std: f64,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    config_hash: String,
    base_seed: u64,
}

#[derive(Debug, Clone, serde::Deserialize)]
struct RunRow {
    run_index: usize,
    seed: u64,
    rate: f64,
    failed: u8,
    digest: String,
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))
}

pub fn report(g: &GlobalArgs, dirs: &[PathBuf], alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let out = out_dir(g)?;
    let mut entries = Vec::new();
    for d in dirs {
        let summary: Vec<SummaryRow> = read_csv(&d.join(SUMMARY_FILE))?;
        let summary = summary
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Usage(format!("{} is empty", d.join(SUMMARY_FILE).display())))?;
        let runs: Vec<RunRow> = read_csv(&d.join(RUNS_FILE))?;
        entries.push((d.clone(), summary, runs));
    }

    let mut table = format!(
        "{:<28} {:<9} {:<10} {:<7} {:>4} {:>6} {:>8} {:>8} {:>8}\n",
        "dir", "mode", "classifier", "fault", "n", "failed", "mean", "std", "median"
    );
    let mut w = csv::Writer::from_path(out.join(REPORT_FILE))?;
    w.write_record([
        "dir", "mode", "classifier", "fault_type", "n", "failed", "mean", "std", "min", "q1", "median", "q3",
        "max", "config_hash", "base_seed",
    ])?;
    for (d, s, _) in &entries {
        let name = d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
        let _ = writeln!(
            table,
            "{:<28} {:<9} {:<10} {:<7} {:>4} {:>6} {:>8.4} {:>8.4} {:>8.4}",
            name, s.mode, s.classifier, s.fault_type, s.n, s.failed, s.mean, s.std, s.median
        );
        let nums = [s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max].map(|v| v.to_string());
        let mut rec = vec![
            d.display().to_string(),
            s.mode.clone(),
            s.classifier.clone(),
            s.fault_type.clone(),
            s.n.to_string(),
            s.failed.to_string(),
        ];
        rec.extend(nums);
        rec.push(s.config_hash.clone());
        rec.push(s.base_seed.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&out.join(REPORT_FILE), e))?;

    // Paired comparisons only make sense between experiments over the same
    // seeds, classifier and faults.
    let mut cw = csv::Writer::from_path(out.join(COMPARISONS_FILE))?;
    cw.write_record([
        "a", "b", "n_pairs", "mean_a", "mean_b", "mean_diff", "w_plus", "w_minus", "z", "p_value", "alpha",
        "significant",
    ])?;
    let mut compared = String::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (da, sa, ra) = &entries[i];
            let (db, sb, rb) = &entries[j];
            if sa.base_seed != sb.base_seed || sa.classifier != sb.classifier || sa.fault_type != sb.fault_type {
                continue;
            }
            let rates = |rs: &[RunRow]| -> Vec<(u64, f64)> {
                rs.iter().filter(|r| r.failed == 0).map(|r| (r.seed, r.rate)).collect()
            };
            let c = match compare_paired(&rates(ra), &rates(rb), alpha) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("{} vs {}: {e}", da.display(), db.display());
                    continue;
                }
            };
            let _ = writeln!(
                compared,
                "{} vs {}: {} pairs, mean diff {:+.4}, p = {:.4}{}",
                sa.mode,
                sb.mode,
                c.n_pairs,
                c.mean_diff,
                c.test.p_value,
                if c.significant { " (significant)" } else { "" }
            );
            cw.write_record([
                da.display().to_string(),
                db.display().to_string(),
                c.n_pairs.to_string(),
                c.mean_a.to_string(),
                c.mean_b.to_string(),
                c.mean_diff.to_string(),
                c.test.w_plus.to_string(),
                c.test.w_minus.to_string(),
                c.test.z.to_string(),
                c.test.p_value.to_string(),
                c.alpha.to_string(),
                u8::from(c.significant).to_string(),
            ])?;
        }
    }
    cw.flush().map_err(|e| CliError::io(&out.join(COMPARISONS_FILE), e))?;

    let mut m = Manifest::new("report", format!("alpha = {alpha}\n"));
    for (d, _, _) in &entries {
        m.add_input(&d.join(SUMMARY_FILE))?;
        m.add_input(&d.join(RUNS_FILE))?;
    }
    m.add_artifacts(out, &[out.join(REPORT_FILE), out.join(COMPARISONS_FILE)])?;
    m.write(out)?;

    print!("{table}");
    if !compared.is_empty() {
        print!("\n{compared}");
    }
    Ok(())
}

pub fn replay(g: &GlobalArgs, path: &Path, run_index: usize) -> Result<(), CliError> {
    if g.config.is_some() || !g.set.is_empty() || g.seed.is_some() {
        return Err(CliError::Usage(
            "replay takes its configuration from the manifest; drop --config, --set and --seed".into(),
        ));
    }
    let (manifest_path, dir) = if path.is_dir() {
        (path.join(MANIFEST_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let m = Manifest::read(&manifest_path)?;
    if m.command != "run" {
        return Err(CliError::Manifest(format!("cannot replay a {:?} manifest", m.command)));
    }
    m.verify(&dir)?;

    let mut cfg = ExperimentConfig::from_toml(&m.config, &[])?;
    if cfg.hash() != m.config_hash {
        return Err(CliError::Manifest("config does not match its recorded hash".into()));
    }
    if let Some(w) = g.workers {
        cfg.runs.workers = w;
    }
    let recorded: Vec<RunRow> = read_csv(&dir.join(RUNS_FILE))?;
    let row = recorded
        .iter()
        .find(|r| r.run_index == run_index)
        .ok_or_else(|| CliError::Usage(format!("run {run_index} is not in {}", dir.join(RUNS_FILE).display())))?;

    let source = DataSource::from_config(&cfg)?;
    let result = run_one(&cfg, &source, run_index);
    if result.seed != row.seed {
        return Err(CliError::ReplayMismatch {
            run_index,
            reason: format!("seed {} != recorded {}", result.seed, row.seed),
        });
    }
    let digest = result.digest();
    if digest != row.digest {
        return Err(CliError::ReplayMismatch {
            run_index,
            reason: format!("digest {digest} != recorded {}", row.digest),
        });
    }
    if let Some(out) = &g.out {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let short = cfg.short_hash();
        let path = out.join(sensorfix::harness::report::timeline_file(&result, &short));
        result.timeline(cfg.report.window).save_csv(&path, &result.truths)?;
    }
    println!(
        "run {run_index} (seed {}) reproduced: rate {:.4}, digest {digest}",
        result.seed, result.rate
    );
    Ok(())
}
