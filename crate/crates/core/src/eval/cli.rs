//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::{split, synth, Dataset};
use crate::defense::{self, EpochLog};
use crate::error::{Error, Result};
use crate::eval::config::{Command as Cmd, ExperimentConfig};
use crate::eval::{self as drivers, EvalOptions, NamedModel};
use crate::model::{Architecture, ClassifierParams};
use crate::salience::FixationNet;
use crate::tensor::Tensor;

#[derive(Parser, Debug)]
#[command(
    name = "dualpert",
    version,
    about = "Salience-aware dual-perturbation attacks and defenses on synthetic images",
    arg_required_else_help = true
)]
struct Cli {
    /// key=value configuration file ('#' starts a comment)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the `out` key
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Generate a synthetic dataset and write train/test splits
    GenData,
    /// Train a classifier (clean, pgd, dual or rs) or a fixation net
    Train,
    /// Attack a model and write the adversarial batch
    Attack,
    /// Clean and adversarial accuracy for one or more models
    Eval,
    /// Accuracy and foreground score across a swept parameter
    Sweep,
    /// Transferability matrix between models
    Transfer,
    /// Input-gradient magnitude images
    Gradviz,
}

impl From<Sub> for Cmd {
    fn from(s: Sub) -> Cmd {
        match s {
            Sub::GenData => Cmd::GenData,
            Sub::Train => Cmd::Train,
            Sub::Attack => Cmd::Attack,
            Sub::Eval => Cmd::Eval,
            Sub::Sweep => Cmd::Sweep,
            Sub::Transfer => Cmd::Transfer,
            Sub::Gradviz => Cmd::Gradviz,
        }
    }
}

/// Run the tool on `argv` (including the program name) and return the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let mut overrides = Vec::new();
    for s in &cli.set {
        match s.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => overrides.push((k.trim().to_string(), v.trim().to_string())),
            _ => {
                eprintln!("error: --set expects KEY=VALUE, got {s:?}");
                return 1;
            }
        }
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.to_string_lossy().into_owned()));
    }
    let result = ExperimentConfig::from_file(cli.command.into(), cli.config.as_deref(), &overrides).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.command {
        Cmd::GenData => gen_data(cfg),
        Cmd::Train => train(cfg),
        Cmd::Attack => attack(cfg),
        Cmd::Eval => eval(cfg),
        Cmd::Sweep => sweep(cfg),
        Cmd::Transfer => transfer(cfg),
        Cmd::Gradviz => gradviz(cfg),
    }
}

fn create_out(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Load the dataset at `data`. A directory produced by `gen-data` holds
/// `train/` and `test/`; `split` picks one of them.
fn load_data(cfg: &ExperimentConfig, split_name: &str) -> Result<Dataset> {
    let root = cfg.path("data")?;
    if !root.exists() {
        return Err(Error::Dataset(format!("dataset path {} does not exist", root.display())));
    }
    let nested = root.join(split_name);
    let dir = if !root.join("images.dpt").exists() && nested.join("images.dpt").exists() { nested } else { root };
    let data = Dataset::load(&dir)?;
    Ok(match cfg.usize("limit")? {
        0 => data,
        n => data.subset(&(0..n.min(data.len())).collect::<Vec<_>>()),
    })
}

fn load_models(cfg: &ExperimentConfig) -> Result<Vec<NamedModel>> {
    let smoothing = cfg.smoothing()?;
    cfg.model_paths()?
        .into_iter()
        .map(|(name, path)| {
            let params = ClassifierParams::load_any(&path)?;
            Ok(NamedModel { name, params, smoothing })
        })
        .collect()
}

fn options(cfg: &ExperimentConfig) -> Result<EvalOptions> {
    Ok(EvalOptions {
        salience: cfg.salience_model()?,
        mask_source: cfg.mask_source()?,
        seed: cfg.seed()?,
        timing: cfg.bool("timing")?,
        id: cfg.get("name").to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let synth_cfg = cfg.synth_config()?;
    let data = synth::gen_synthetic(&synth_cfg)?;
    let fraction: f64 = cfg.get("train_fraction").parse().map_err(|_| Error::Config("train_fraction: not a number".into()))?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction must lie in (0,1), got {fraction}")));
    }
    let (train, test) = split(&data, fraction, cfg.seed()?)?;
    let out = create_out(cfg)?;
    let sizes = [
        ("train_samples", train.len().to_string()),
        ("test_samples", test.len().to_string()),
        ("seed", cfg.seed()?.to_string()),
    ];
    train.save(&out.join("train"), &[&[("split", "train".to_string())][..], &sizes[..]].concat())?;
    test.save(&out.join("test"), &[&[("split", "test".to_string())][..], &sizes[..]].concat())?;
    let mut meta = String::new();
    for (k, v) in cfg.resolved() {
        meta.push_str(&format!("# {k}={v}\n"));
    }
    meta.push_str(&format!("classes={}\n", data.classes));
    for (k, v) in &sizes[..2] {
        meta.push_str(&format!("{k}={v}\n"));
    }
    write_text(&out.join("meta.txt"), &meta)?;
    println!("wrote {} train and {} test images to {}", train.len(), test.len(), out.display());
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "train")?;
    let out = create_out(cfg)?;
    match cfg.get("train_target") {
        "classifier" => {}
        "fixation" => {
            let mut net = FixationNet::init(data.image_shape()[0], cfg.seed()?);
            let losses = net.train(&data, cfg.usize("epochs")?, cfg.usize("batch_size")?, cfg.f32("lr")?, cfg.seed()?)?;
            net.save(&out.join("fixation.dpt"))?;
            let rows: Vec<String> = losses.iter().enumerate().map(|(e, l)| format!("{e},{l}")).collect();
            write_text(&out.join("train_log.csv"), &drivers::render_csv(&cfg.resolved(), "epoch,loss", &rows))?;
            println!("wrote {}", out.join("fixation.dpt").display());
            return Ok(());
        }
        other => return Err(Error::Config(format!("unknown train_target {other:?} (expected classifier|fixation)"))),
    }
    let tc = cfg.train_config()?;
    let [c, h, w] = data.image_shape();
    let mut arch = Architecture::reference(data.classes);
    arch.input = [c, h, w];
    let salience = cfg.salience_model()?;
    let outcome = match cfg.get("init_model") {
        "" => defense::train(&data, &arch, &tc, &salience)?,
        path => defense::train_from(&data, ClassifierParams::load(Path::new(path), &arch)?, &tc, &salience)?,
    };
    let path = out.join("model.dpt");
    outcome.params.save(&path)?;
    let rows: Vec<String> = outcome
        .log
        .iter()
        .map(|EpochLog { epoch, loss, clean_acc }| format!("{epoch},{loss},{clean_acc}"))
        .collect();
    write_text(&out.join("train_log.csv"), &drivers::render_csv(&cfg.resolved(), "epoch,loss,clean_acc", &rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn attack(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "test")?;
    let models = load_models(cfg)?;
    let model = models.first().expect("at least one model");
    let attack = cfg
        .eval_attack()?
        .ok_or_else(|| Error::Config("attack command needs attack=pgd|dual|jsma".into()))?;
    let opts = options(cfg)?;
    let (examples, row) = drivers::eval_with_examples(model, &data, Some(&attack), &opts)?;
    let out = create_out(cfg)?;
    let batch = Tensor::stack(&examples.iter().map(|t| t.select(0)).collect::<Vec<_>>())?;
    crate::data::dpt::save_tensor(&out.join("adv.dpt"), &batch)?;
    drivers::write_metrics_csv(&out.join("attack.csv"), &cfg.resolved(), std::slice::from_ref(&row))?;
    println!("{}", row.csv_line());
    Ok(())
}

fn eval(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "test")?;
    let models = load_models(cfg)?;
    let attack = cfg.eval_attack()?;
    let opts = options(cfg)?;
    let rows = models
        .iter()
        .map(|m| drivers::eval_accuracy(m, &data, attack.as_ref(), &opts))
        .collect::<Result<Vec<_>>>()?;
    let out = create_out(cfg)?;
    drivers::write_metrics_csv(&out.join("eval.csv"), &cfg.resolved(), &rows)?;
    for r in &rows {
        println!("{}", r.csv_line());
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "test")?;
    let models = load_models(cfg)?;
    let attack = cfg
        .eval_attack()?
        .ok_or_else(|| Error::Config("sweep needs attack=pgd|dual|jsma".into()))?;
    let spec = cfg.sweep_spec()?;
    let rows = drivers::sweep(&models, &data, &attack, &spec, &options(cfg)?)?;
    let out = create_out(cfg)?;
    drivers::write_metrics_csv(&out.join("sweep.csv"), &cfg.resolved(), &rows)?;
    for r in &rows {
        println!("{}", r.csv_line());
    }
    Ok(())
}

fn transfer(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "test")?;
    let models = load_models(cfg)?;
    let attack = cfg
        .eval_attack()?
        .ok_or_else(|| Error::Config("transfer needs attack=pgd|dual|jsma".into()))?;
    let matrix = drivers::transfer_matrix(&models, &data, &attack, &options(cfg)?)?;
    let text = drivers::render_transfer_csv(&cfg.resolved(), &models, &matrix);
    let out = create_out(cfg)?;
    write_text(&out.join("transfer.csv"), &text)?;
    print!("{}", text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn gradviz(cfg: &ExperimentConfig) -> Result<()> {
    let data = load_data(cfg, "test")?;
    let models = load_models(cfg)?;
    let count = cfg.usize("count")?.min(data.len());
    let indices: Vec<usize> = (0..count).collect();
    let out = cfg.out_dir();
    let rows = drivers::gradviz(&models[0].params, &data, &indices, &out, &cfg.resolved())?;
    println!("wrote {} gradient images to {}", rows.len(), out.display());
    Ok(())
}
