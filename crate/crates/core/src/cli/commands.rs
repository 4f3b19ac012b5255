use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use dopplerga::clstm::{load_model, save_model, NetError, NetworkConfig};
use dopplerga::features::FeatureError;
use dopplerga::pipeline::{
    estimate_sequences, load_examples, update_cache, wav_features, CacheStatus, PipelineError,
};
use dopplerga::signal_io::{load_manifest, SignalError};
use dopplerga::synth::{generate_dataset, DatasetOptions, MonthDistribution, SynthError};
use dopplerga::training::{run_trials, train_model, CrossvalConfig, TrainConfig, TrainError};

use super::config::Resolver;
use super::{Cli, CliError, Command, CrossvalArgs, Distribution, EstimateArgs, FeaturesArgs, NetArgs, SynthArgs, TrainArgs};

fn io_msg(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_msg(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_msg(path, e))
}

fn signal_err(e: SignalError) -> CliError {
    CliError::Io(e.to_string())
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Net(NetError::Io { .. }) | TrainError::Feature(FeatureError::Io { .. }) => CliError::Io(e.to_string()),
        TrainError::Diverged { .. } => CliError::Flagged(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn pipeline_err(e: PipelineError) -> CliError {
    match e {
        PipelineError::Train(t) => train_err(t),
        PipelineError::Net(n) => CliError::Mismatch(n.to_string()),
        PipelineError::Feature(FeatureError::RecordingTooShort { .. }) => CliError::Mismatch(e.to_string()),
        other => CliError::Io(other.to_string()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a),
        Command::Crossval(a) => crossval(a),
        Command::Estimate(a) => estimate(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let patients = r.get_required("patients", a.patients)?;
    let seed = r.seed(a.seed)?;
    let dist = r.get("distribution", a.distribution, Distribution::Clinical)?;
    let defaults = DatasetOptions::default();
    let opts = DatasetOptions {
        duration_s: r.get("duration", a.duration, defaults.duration_s)?,
        fs_hz: defaults.fs_hz,
        snr_db: r.get("snr", a.snr, defaults.snr_db)?,
        eta_std_months: r.get("eta-std", a.eta_std, defaults.eta_std_months)?,
    };
    r.note("out", a.out.display());
    r.finish()?;
    create_dir(&a.out)?;
    let dist = match dist {
        Distribution::Clinical => MonthDistribution::Clinical,
        Distribution::Uniform => MonthDistribution::Uniform,
    };
    let ds = generate_dataset(&a.out, patients, &dist, seed, &opts).map_err(|e| match e {
        SynthError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Io(other.to_string()),
    })?;
    r.write_lock(&a.out, "synth")?;
    println!("wrote {} recordings of {} patients to {}", ds.manifest.len(), ds.truth.len(), a.out.display());
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.as_deref())?;
    r.note("manifest", a.manifest.display());
    r.note("out", a.out.display());
    r.finish()?;
    let manifest = load_manifest(&a.manifest).map_err(signal_err)?;
    create_dir(&a.out)?;
    let results: Vec<_> = manifest.entries.par_iter().map(|e| update_cache(&manifest, e, &a.out)).collect();
    let (mut written, mut cached, mut failed) = (0, 0, 0);
    for (e, res) in manifest.entries.iter().zip(&results) {
        match res {
            Ok(CacheStatus::Written) => written += 1,
            Ok(CacheStatus::UpToDate) => cached += 1,
            Err(err) => {
                failed += 1;
                eprintln!("failed: {}: {err}", e.file_path);
            }
        }
    }
    r.write_lock(&a.out, "features")?;
    println!("{written} written, {cached} up to date, {failed} failed");
    if failed > 0 {
        return Err(CliError::Partial(format!("{failed} of {} recordings failed", manifest.len())));
    }
    Ok(())
}

fn train_config(r: &mut Resolver, n: &NetArgs, seed: u64) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let net = NetworkConfig {
        timesteps: r.get("timesteps", n.timesteps, d.net.timesteps)?,
        width: r.get("width", n.width, d.net.width)?,
        hidden_channels: (
            r.get("hidden-c1", n.hidden_c1, d.net.hidden_channels.0)?,
            r.get("hidden-c2", n.hidden_c2, d.net.hidden_channels.1)?,
        ),
        dropout_rate: r.get("dropout", n.dropout, d.net.dropout_rate)?,
        l2_lambda: r.get("l2", n.l2, d.net.l2_lambda)?,
        seed,
        ..d.net
    };
    let cfg = TrainConfig {
        net,
        epochs: r.get("epochs", n.epochs, d.epochs)?,
        batch_size: r.get("batch", n.batch, d.batch_size)?,
        learning_rate: r.get("lr", n.lr, d.learning_rate)?,
        classes: None,
    };
    cfg.validate().map_err(train_err)?;
    Ok(cfg)
}

fn load_dataset(manifest: &Path, features: &Path) -> Result<Vec<dopplerga::training::LabeledExample>, CliError> {
    let m = load_manifest(manifest).map_err(signal_err)?;
    load_examples(&m, features).map_err(pipeline_err)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let seed = r.seed(a.seed)?;
    let mut cfg = train_config(&mut r, &a.net, seed)?;
    r.note("manifest", a.manifest.display());
    r.note("features", a.features.display());
    r.note("out", a.out.display());
    r.finish()?;
    let examples = load_dataset(&a.manifest, &a.features)?;
    create_dir(&a.out)?;
    // Same seed split as cross-validation: one stream for init, one for batching.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    cfg.net.seed = seed;
    let out = train_model(&examples, &[], &cfg, &mut rng).map_err(train_err)?;
    save_model(&a.out.join("model.dgm"), &out.model).map_err(|e| CliError::Io(e.to_string()))?;
    let history = serde_json::to_string_pretty(&out.history).expect("history serializes");
    write_file(&a.out.join("history.json"), &history)?;
    r.write_lock(&a.out, "train")?;
    match out.history.last() {
        Some(h) => println!("trained {} epochs, final training MAE {:.3}", out.history.len(), h.train_mae),
        None => println!("0 epochs: wrote initialized model"),
    }
    Ok(())
}

fn crossval(a: CrossvalArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let seed = r.seed(a.seed)?;
    let folds = r.get("folds", a.folds, 5usize)?;
    let trials = r.get("trials", a.trials, 50usize)?;
    if folds < 2 {
        return Err(CliError::Config(format!("--folds {folds}: at least 2 folds are required")));
    }
    if trials < 1 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let train = train_config(&mut r, &a.net, seed)?;
    r.note("manifest", a.manifest.display());
    r.note("features", a.features.display());
    r.note("out", a.out.display());
    r.finish()?;
    let examples = load_dataset(&a.manifest, &a.features)?;
    create_dir(&a.out)?;
    let cfg = CrossvalConfig { n_trials: trials, k: folds, base_seed: seed, train };
    let report = run_trials(&examples, &cfg).map_err(train_err)?;
    write_file(&a.out.join("report.json"), &report.to_json())?;
    let table = report.render_table();
    write_file(&a.out.join("report.txt"), &table)?;
    r.write_lock(&a.out, "crossval")?;
    print!("{table}");
    if report.flagged {
        return Err(CliError::Flagged(format!("{} of {trials} trials failed", report.failed_trials)));
    }
    Ok(())
}

struct Target {
    path: PathBuf,
    recording_id: String,
    patient_id: String,
    visit_id: String,
}

fn estimate(a: EstimateArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(None)?;
    r.note("model", a.model.display());
    r.note("out", a.out.display());
    let targets: Vec<Target> = match &a.manifest {
        Some(mp) => {
            r.note("manifest", mp.display());
            let m = load_manifest(mp).map_err(signal_err)?;
            m.entries
                .iter()
                .map(|e| Target {
                    path: m.resolve(e),
                    recording_id: Path::new(&e.file_path).file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    patient_id: e.patient_id.clone(),
                    visit_id: e.visit_id.clone(),
                })
                .collect()
        }
        None => {
            let list: Vec<String> = a.recordings.iter().map(|p| p.display().to_string()).collect();
            r.note("recordings", list.join(" "));
            r.note("patient-id", &a.patient_id);
            r.note("visit-id", &a.visit_id);
            a.recordings
                .iter()
                .map(|p| Target {
                    path: p.clone(),
                    recording_id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    patient_id: a.patient_id.clone(),
                    visit_id: a.visit_id.clone(),
                })
                .collect()
        }
    };
    let model = load_model(&a.model).map_err(|e| match e {
        NetError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Mismatch(other.to_string()),
    })?;
    let seqs = targets
        .par_iter()
        .map(|t| wav_features(&t.path).map_err(|e| (t.path.clone(), e)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|(p, e)| match pipeline_err(e) {
            CliError::Mismatch(m) => CliError::Mismatch(format!("{}: {m}", p.display())),
            other => other,
        })?;
    let need = model.config.frames_needed();
    if let Some((t, s)) = targets.iter().zip(&seqs).find(|(_, s)| s.len() < need) {
        return Err(CliError::Mismatch(format!(
            "{}: {} feature frames ({:.1} s), the model needs {need} ({:.1} s)",
            t.path.display(),
            s.len(),
            s.len() as f64 / 100.0,
            need as f64 / 100.0
        )));
    }
    let refs: Vec<_> = seqs.iter().collect();
    let preds = estimate_sequences(&model, &refs).map_err(pipeline_err)?;

    create_dir(&a.out)?;
    let mut rec_csv = String::from("recording_id,visit_id,ga_estimate\n");
    let mut visits: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for (t, p) in targets.iter().zip(&preds) {
        let _ = writeln!(rec_csv, "{},{},{p:.4}", t.recording_id, t.visit_id);
        println!("{} ({} {}): {p:.1} months", t.recording_id, t.patient_id, t.visit_id);
        let v = visits.entry((&t.patient_id, &t.visit_id)).or_default();
        v.0 += p;
        v.1 += 1;
    }
    let mut visit_csv = String::from("patient_id,visit_id,recordings,ga_estimate\n");
    for ((patient, visit), (sum, n)) in &visits {
        let mean = sum / *n as f64;
        let _ = writeln!(visit_csv, "{patient},{visit},{n},{mean:.4}");
        println!("visit {patient} {visit}: {mean:.1} months ({n} recording{})", if *n == 1 { "" } else { "s" });
    }
    write_file(&a.out.join("estimates.csv"), &rec_csv)?;
    write_file(&a.out.join("visits.csv"), &visit_csv)?;
    r.write_lock(&a.out, "estimate")?;
    Ok(())
}
