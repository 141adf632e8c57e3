//! `mcgcl`: train, evaluate and generate data for two-task graph contrastive
//! link prediction.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or checkpoint error,
//! 3 numeric divergence, 4 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Arg, ArgAction, ArgMatches, Command};
use mcgcl::config::{TrainConfig, KEYS};
use mcgcl::graph::{ingest_edge_list, synth_generate, write_edge_list, LabelMode, SynthParams};
use mcgcl::report::{build_checkpoint, evaluate_model, load_model, render_loss_csv, render_manifest, render_summary};
use mcgcl::tensor::{read_checkpoint, write_checkpoint};
use mcgcl::training::{run_framework, RunResult};

/// Environment variable naming the directory relative data paths resolve in.
const DATA_DIR_ENV: &str = "MCGCL_DATA_DIR";

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_USAGE: u8 = 4;

fn defaults_table() -> String {
    let cfg = TrainConfig::default();
    let mut out = String::from("Config keys (file lines `key = value`, or flags `--key value`):\n");
    for (key, help) in KEYS {
        out.push_str(&format!(
            "  {key:<16} {:<12} {help}\n",
            cfg.get(key).unwrap_or_default()
        ));
    }
    out.push_str(&format!(
        "\nRelative --data paths are resolved in ${DATA_DIR_ENV} when it is set.\n\
         Exit codes: 0 ok, 1 config, 2 data/checkpoint, 3 divergence, 4 usage."
    ));
    out
}

fn cli() -> Command {
    let mut train = Command::new("train")
        .about("Train on an edge list for every configured seed")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("key = value config file"),
        )
        .arg(
            Arg::new("data")
                .long("data")
                .value_name("PATH")
                .required(true)
                .help("user item rating TSV"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .required(true)
                .help("output directory"),
        )
        .arg(
            Arg::new("parallel-seeds")
                .long("parallel-seeds")
                .action(ArgAction::SetTrue)
                .help("run seeds concurrently"),
        )
        .after_help(defaults_table());
    for (key, help) in KEYS {
        train = train.arg(
            Arg::new(*key)
                .long(key.replace('_', "-"))
                .value_name("VALUE")
                .help(*help),
        );
    }
    Command::new("mcgcl")
        .about("Two-task graph contrastive learning for multi-label link prediction")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("more log output (-v info, -vv debug)"),
        )
        .subcommand(train)
        .subcommand(
            Command::new("eval")
                .about("Evaluate a checkpoint on the test split of a dataset")
                .arg(
                    Arg::new("checkpoint")
                        .long("checkpoint")
                        .value_name("PATH")
                        .required(true),
                )
                .arg(Arg::new("data").long("data").value_name("PATH").required(true)),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a synthetic edge list with planted clusters")
                .arg(num_arg("users", "300"))
                .arg(num_arg("items", "150"))
                .arg(num_arg("clusters", "3"))
                .arg(num_arg("noise", "0.05"))
                .arg(num_arg("seed", "1"))
                .arg(
                    Arg::new("binary")
                        .long("binary")
                        .action(ArgAction::SetTrue)
                        .help("High/Low labels only"),
                )
                .arg(Arg::new("out").long("out").value_name("PATH").required(true)),
        )
}

fn num_arg(name: &'static str, default: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("N").default_value(default)
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn code_of(e: &mcgcl::Error) -> u8 {
    use mcgcl::Error as E;
    match e {
        E::Config(_) => EXIT_CONFIG,
        E::Divergence { .. } | E::NonFinite { .. } => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

impl From<mcgcl::Error> for Failure {
    fn from(e: mcgcl::Error) -> Self {
        Failure {
            code: code_of(&e),
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = error.downcast_ref::<mcgcl::Error>().map_or(EXIT_DATA, code_of);
        Failure { code, error }
    }
}

fn config_failure(msg: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: anyhow::anyhow!(msg),
    }
}

fn resolve_data(path: &str) -> PathBuf {
    let p = PathBuf::from(path);
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p,
    }
}

fn cmd_train(m: &ArgMatches) -> Result<(), Failure> {
    let mut config = match m.get_one::<String>("config") {
        Some(path) => TrainConfig::load(Path::new(path))?,
        None => TrainConfig::default(),
    };
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            config.set(key, v)?;
        }
    }
    config.validate()?;
    let data = resolve_data(m.get_one::<String>("data").expect("required"));
    let out = PathBuf::from(m.get_one::<String>("out").expect("required"));
    let graph = ingest_edge_list(&data, config.label_mode)?;
    log::info!(
        "{}: {} users, {} items, {} edges",
        data.display(),
        graph.user_count(),
        graph.item_count(),
        graph.edge_count()
    );
    let results: Vec<RunResult> = if m.get_flag("parallel-seeds") {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .seeds
                .iter()
                .map(|&seed| {
                    let (graph, config) = (&graph, &config);
                    scope.spawn(move || run_framework(graph, config, seed))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed thread panicked"))
                .collect::<mcgcl::Result<Vec<_>>>()
        })?
    } else {
        config
            .seeds
            .iter()
            .map(|&seed| run_framework(&graph, &config, seed))
            .collect::<mcgcl::Result<Vec<_>>>()?
    };

    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or_default();
    let write = |name: String, bytes: &[u8]| -> Result<(), Failure> {
        let path = out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    };
    write(
        "manifest.txt".into(),
        render_manifest(&config, &results, &timestamp.to_string()).as_bytes(),
    )?;
    write("losses.csv".into(), render_loss_csv(&results).as_bytes())?;
    for r in &results {
        let ck = build_checkpoint(r, config.label_mode);
        let path = out.join(format!("checkpoint-seed{}.bin", r.seed));
        write_checkpoint(&path, &ck)?;
        write(format!("hard-seed{}.tsv", r.seed), r.hard.to_tsv().as_bytes())?;
    }
    print!("{}", render_summary(&results));
    Ok(())
}

fn cmd_eval(m: &ArgMatches) -> Result<(), Failure> {
    let ck = read_checkpoint(Path::new(m.get_one::<String>("checkpoint").expect("required")))?;
    let model = load_model(&ck)?;
    let data = resolve_data(m.get_one::<String>("data").expect("required"));
    let graph = ingest_edge_list(&data, model.mode)?;
    let metrics = evaluate_model(&model, &graph)?;
    println!("{metrics}");
    Ok(())
}

fn parse_num<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Result<T, Failure> {
    let raw = m.get_one::<String>(name).expect("defaulted");
    raw.parse()
        .map_err(|_| config_failure(format!("invalid value '{raw}' for --{name}")))
}

fn cmd_synth(m: &ArgMatches) -> Result<(), Failure> {
    let mut params = SynthParams::new(
        parse_num(m, "users")?,
        parse_num(m, "items")?,
        parse_num(m, "clusters")?,
        parse_num(m, "noise")?,
        parse_num(m, "seed")?,
    );
    if m.get_flag("binary") {
        params.mode = LabelMode::Binary;
    }
    let graph = synth_generate(&params)?;
    let out = PathBuf::from(m.get_one::<String>("out").expect("required"));
    write_edge_list(&graph, &out)?;
    println!(
        "users={} items={} edges={}",
        graph.user_count(),
        graph.item_count(),
        graph.edge_count()
    );
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("synth", m)) => cmd_synth(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
