//! The `amfm` command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage/validation problems, 2 for runtime
//! failures (I/O, divergence). `--help` on any command prints its flags and
//! exits 0. Existing output files are never overwritten without `--force`.
//! The `AMFM_SEED` environment variable overrides the default seed when no
//! `--seed` flag is given.

use crate::error::Error;
use crate::export::{read_grid_csv, write_grid_csv, write_grid_pgm};
use crate::frontend::{
    load_dataset, load_wav, melspectrogram, synth_dataset_with, write_manifest, SynthConfig,
};
use crate::gradcheck::run_suite;
use crate::model::ModelGraph;
use crate::multitask::{FusionConfig, SceneLabel};
use crate::rng::SeededRng;
use crate::tensor::FeatureMap;
use crate::trainer::{evaluate, train, Checkpoint, TrainConfig, TrainFailure};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Run the CLI on `args` (program name excluded); returns the process exit
/// code. All human-facing output goes to stdout, errors to stderr.
pub fn run(args: &[String]) -> i32 {
    let mut it = args.iter();
    let command = match it.next() {
        Some(c) => c.as_str(),
        None => {
            eprintln!("{GLOBAL_HELP}");
            return 1;
        }
    };
    let rest: Vec<String> = it.cloned().collect();
    if command == "--help" || command == "-h" || command == "help" {
        println!("{GLOBAL_HELP}");
        return 0;
    }
    let result = match command {
        "gradcheck" => cmd_gradcheck(&rest),
        "train" => cmd_train(&rest),
        "eval" => cmd_eval(&rest),
        "featmap" => cmd_featmap(&rest),
        "params" => cmd_params(&rest),
        "synth-data" => cmd_synth_data(&rest),
        other => {
            eprintln!("unknown command `{other}`\n{GLOBAL_HELP}");
            return 1;
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Parse(_) | Error::Shape(_) => 1,
        _ => 2,
    }
}

const GLOBAL_HELP: &str = "amfm - attentive max feature map acoustic scene classifier

Usage: amfm <command> [flags]

Commands:
  gradcheck    run the finite-difference gradient verification suite
  train        train a model from a run config
  eval         evaluate a checkpoint on a dataset
  featmap      export a block's inspection taps (a), (b), (c)
  params       print the trainable parameter count and per-slot breakdown
  synth-data   materialize the synthetic dataset plus manifest

Run `amfm <command> --help` for that command's flags.";

/// One command's flag table: `(name, takes_value, description)`.
struct FlagSpec {
    usage: &'static str,
    flags: &'static [(&'static str, bool, &'static str)],
}

impl FlagSpec {
    fn help(&self) -> String {
        let mut out = format!("Usage: {}\n\nFlags:\n", self.usage);
        for (name, takes_value, desc) in self.flags {
            let arg = if *takes_value {
                format!("{name} <value>")
            } else {
                name.to_string()
            };
            out.push_str(&format!("  {arg:<28} {desc}\n"));
        }
        out.push_str("  --help                       print this help\n");
        out
    }

    /// Parse `args`; `Ok(None)` means help was printed.
    fn parse(&self, args: &[String]) -> crate::error::Result<Option<BTreeMap<String, String>>> {
        let mut out = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            if arg == "--help" || arg == "-h" {
                println!("{}", self.help());
                return Ok(None);
            }
            let spec = self
                .flags
                .iter()
                .find(|(name, _, _)| name == arg)
                .ok_or_else(|| {
                    Error::validation(format!("unknown flag `{arg}`\n{}", self.help()))
                })?;
            if spec.1 {
                i += 1;
                let value = args.get(i).ok_or_else(|| {
                    Error::validation(format!("flag {arg} expects a value\n{}", self.help()))
                })?;
                out.insert(arg.clone(), value.clone());
            } else {
                out.insert(arg.clone(), String::new());
            }
            i += 1;
        }
        Ok(Some(out))
    }
}

fn parse_num<T: std::str::FromStr>(
    flags: &BTreeMap<String, String>,
    key: &str,
) -> crate::error::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flags.get(key) {
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| Error::validation(format!("flag {key}: {e}"))),
        None => Ok(None),
    }
}

/// Seed precedence: `--seed` flag, then `AMFM_SEED`, then the fallback.
fn resolve_seed(flags: &BTreeMap<String, String>, fallback: u64) -> crate::error::Result<u64> {
    if let Some(seed) = parse_num::<u64>(flags, "--seed")? {
        return Ok(seed);
    }
    match std::env::var("AMFM_SEED") {
        Ok(v) => v
            .parse::<u64>()
            .map_err(|e| Error::validation(format!("AMFM_SEED: {e}"))),
        Err(_) => Ok(fallback),
    }
}

/// Load a config file, with the literal name `default` meaning built-ins.
fn load_config(spec: &str) -> crate::error::Result<TrainConfig> {
    if spec == "default" {
        Ok(TrainConfig::default())
    } else {
        TrainConfig::load(spec)
    }
}

fn guard_overwrite(path: &Path, force: bool) -> crate::error::Result<()> {
    if path.exists() && !force {
        return Err(Error::validation(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> crate::error::Result<()> {
    // Temp-and-rename so a failed write never leaves a partial file.
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_gradcheck(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage: "amfm gradcheck [--tolerance R] [--seed S]",
        flags: &[
            ("--tolerance", true, "override every suite's tolerance"),
            ("--seed", true, "seed for the random probe points"),
        ],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let tolerance = parse_num::<f64>(&flags, "--tolerance")?;
    let seed = resolve_seed(&flags, 2024)?;
    let results = run_suite(seed, tolerance)?;
    let mut all_pass = true;
    for r in &results {
        let verdict = if r.passed() {
            "PASS"
        } else {
            all_pass = false;
            "FAIL"
        };
        println!(
            "{:<24} max_rel_err {:>12.3e}  tol {:>8.1e}  {verdict}",
            r.name, r.max_rel_err, r.tolerance
        );
    }
    if all_pass {
        println!("all {} gradient suites passed", results.len());
        Ok(0)
    } else {
        eprintln!("gradient verification failed");
        Ok(1)
    }
}

fn cmd_train(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage: "amfm train --config PATH [--data PATH | --synthetic N] [--out DIR]",
        flags: &[
            ("--config", true, "run config file, or `default`"),
            ("--data", true, "dataset manifest (path,scene_label CSV)"),
            (
                "--synthetic",
                true,
                "use N synthetic clips per class instead of --data",
            ),
            ("--out", true, "output directory (default `.`)"),
            ("--seed", true, "override the config seed"),
            (
                "--threads",
                true,
                "worker threads for convolution (default 1)",
            ),
            ("--force", false, "overwrite existing outputs"),
        ],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let mut config = load_config(
        flags
            .get("--config")
            .map(String::as_str)
            .ok_or_else(|| Error::validation("--config is required"))?,
    )?;
    if flags.contains_key("--seed") || std::env::var("AMFM_SEED").is_ok() {
        config.seed = resolve_seed(&flags, config.seed)?;
    }
    if let Some(threads) = parse_num::<usize>(&flags, "--threads")? {
        crate::nn::threads::set_num_threads(threads);
    }
    let force = flags.contains_key("--force");
    let out_dir = PathBuf::from(flags.get("--out").cloned().unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out_dir)?;

    let dataset = match (flags.get("--data"), flags.get("--synthetic")) {
        (Some(_), Some(_)) => {
            return Err(Error::validation(
                "--data and --synthetic are mutually exclusive",
            ));
        }
        (Some(path), None) => load_dataset(path, &config.mel)?,
        (None, Some(n)) => {
            let n: usize = n
                .parse()
                .map_err(|e| Error::validation(format!("--synthetic: {e}")))?;
            synth_dataset_with(&SynthConfig {
                n_per_class: n,
                seed: config.seed,
                ..SynthConfig::default()
            })
        }
        (None, None) => {
            return Err(Error::validation(
                "one of --data or --synthetic is required",
            ))
        }
    };

    let final_path = out_dir.join("final.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let metrics_path = out_dir.join("metrics.csv");
    for p in [&final_path, &best_path, &metrics_path] {
        guard_overwrite(p, force)?;
    }

    match train(&config, &dataset, None) {
        Ok(outcome) => {
            outcome.final_checkpoint.save(&final_path)?;
            outcome.best_checkpoint.save(&best_path)?;
            write_text(&metrics_path, &outcome.metrics.to_csv())?;
            let last = outcome
                .metrics
                .records()
                .last()
                .expect("at least one epoch");
            println!(
                "trained {} epochs; final train acc10 {:.4}{}",
                outcome.metrics.records().len(),
                last.train_acc10,
                last.train_acc3
                    .map(|a| format!(", acc3 {a:.4}"))
                    .unwrap_or_default()
            );
            if let Some(e) = outcome.stopped_early_at {
                println!("stopped early at epoch {e} (train accuracy target reached)");
            }
            println!(
                "wrote {}, {}, {}",
                final_path.display(),
                best_path.display(),
                metrics_path.display()
            );
            Ok(0)
        }
        Err(TrainFailure::Diverged {
            epoch,
            detail,
            last_good,
        }) => {
            let rescue = out_dir.join("last_good.ckpt");
            last_good.save(&rescue)?;
            eprintln!(
                "error: training diverged at epoch {epoch}: {detail}; last good checkpoint written to {}",
                rescue.display()
            );
            Ok(2)
        }
        Err(TrainFailure::Error(e)) => Err(e),
    }
}

fn format_confusion(matrix: &[Vec<usize>], labels: &[&str]) -> String {
    let mut out = String::from("true\\pred");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        out.push_str(labels[i]);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn cmd_eval(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage: "amfm eval --ckpt PATH --data PATH [--fusion-beta R] [--out DIR]",
        flags: &[
            ("--ckpt", true, "checkpoint file"),
            ("--data", true, "dataset manifest"),
            (
                "--fusion-beta",
                true,
                "enable taxonomy fusion with this exponent",
            ),
            ("--out", true, "directory for confusion CSVs (default `.`)"),
            ("--force", false, "overwrite existing outputs"),
        ],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let ckpt_path = flags
        .get("--ckpt")
        .ok_or_else(|| Error::validation("--ckpt is required"))?;
    let data_path = flags
        .get("--data")
        .ok_or_else(|| Error::validation("--data is required"))?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let dataset = load_dataset(data_path, &ckpt.config.mel)?;
    let fusion = match parse_num::<f64>(&flags, "--fusion-beta")? {
        Some(beta) => FusionConfig {
            enabled: true,
            beta,
        },
        None => ckpt.config.fusion,
    };
    let report = evaluate(&ckpt, &dataset, &fusion)?;
    println!("acc10 {:.4}", report.acc10);
    if let Some(a3) = report.acc3 {
        println!("acc3  {a3:.4}");
    }
    let scene_names: Vec<&str> = SceneLabel::ALL.iter().map(|s| s.as_str()).collect();
    let abstract_names = ["indoor", "outdoor", "transportation"];
    println!(
        "confusion (10-class):\n{}",
        format_confusion(&report.confusion10, &scene_names)
    );
    if report.acc3.is_some() {
        println!(
            "confusion (3-class):\n{}",
            format_confusion(&report.confusion3, &abstract_names)
        );
    }
    let out_dir = PathBuf::from(flags.get("--out").cloned().unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out_dir)?;
    let force = flags.contains_key("--force");
    let c10 = out_dir.join("confusion_10.csv");
    guard_overwrite(&c10, force)?;
    write_text(&c10, &format_confusion(&report.confusion10, &scene_names))?;
    if report.acc3.is_some() {
        let c3 = out_dir.join("confusion_3.csv");
        guard_overwrite(&c3, force)?;
        write_text(&c3, &format_confusion(&report.confusion3, &abstract_names))?;
    }
    Ok(0)
}

fn cmd_featmap(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage:
            "amfm featmap --ckpt PATH (--input WAV | --synthetic-class NAME) --block I --out DIR",
        flags: &[
            ("--ckpt", true, "checkpoint file"),
            ("--input", true, "input WAV file"),
            (
                "--synthetic-class",
                true,
                "synthesize one clip of this scene class",
            ),
            ("--block", true, "block index (0-based)"),
            ("--out", true, "output directory"),
            ("--seed", true, "seed for the synthetic clip"),
            ("--force", false, "overwrite existing outputs"),
        ],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let ckpt_path = flags
        .get("--ckpt")
        .ok_or_else(|| Error::validation("--ckpt is required"))?;
    let out_dir = PathBuf::from(
        flags
            .get("--out")
            .ok_or_else(|| Error::validation("--out is required"))?,
    );
    let block: usize = parse_num::<usize>(&flags, "--block")?
        .ok_or_else(|| Error::validation("--block is required"))?;
    let force = flags.contains_key("--force");

    let ckpt = Checkpoint::load(ckpt_path)?;
    let (model, report) = ckpt.build_model()?;
    if !report.clean() {
        eprintln!(
            "warning: checkpoint tensor table does not line up with its config ({} missing, {} unexpected)",
            report.missing.len(),
            report.unexpected.len()
        );
    }
    if block >= model.blocks.len() {
        return Err(Error::validation(format!(
            "--block {block} out of range; model has {} blocks",
            model.blocks.len()
        )));
    }

    let input = match (flags.get("--input"), flags.get("--synthetic-class")) {
        (Some(_), Some(_)) => {
            return Err(Error::validation(
                "--input and --synthetic-class are mutually exclusive",
            ));
        }
        (Some(wav), None) => melspectrogram(&load_wav(wav)?, &ckpt.config.mel)?,
        (None, Some(name)) => {
            let scene: SceneLabel = name.parse()?;
            let seed = resolve_seed(&flags, ckpt.config.seed)?;
            let data = synth_dataset_with(&SynthConfig {
                n_per_class: 1,
                seed,
                ..SynthConfig::default()
            });
            data.into_iter()
                .find(|(_, l)| l.scene == scene)
                .map(|(fm, _)| fm)
                .expect("every class present")
        }
        (None, None) => {
            return Err(Error::validation(
                "one of --input or --synthetic-class is required",
            ));
        }
    };

    let (_, _, taps) = model.forward_infer_with_taps(&input)?;
    let tap_set = &taps[block];
    std::fs::create_dir_all(&out_dir)?;
    let mut written = 0usize;
    for (tag, map) in [("a", &tap_set.a), ("b", &tap_set.b), ("c", &tap_set.c)] {
        for ch in 0..map.channels() {
            let csv = out_dir.join(format!("{tag}_{block}_{ch}.csv"));
            let pgm = out_dir.join(format!("{tag}_{block}_{ch}.pgm"));
            guard_overwrite(&csv, force)?;
            guard_overwrite(&pgm, force)?;
            write_grid_csv(&csv, map, 0, ch)?;
            write_grid_pgm(&pgm, map, 0, ch)?;
            written += 2;
        }
    }
    println!(
        "wrote {written} files for block {block} ({} channels) to {}",
        tap_set.a.channels(),
        out_dir.display()
    );
    Ok(0)
}

fn cmd_params(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage: "amfm params --config PATH",
        flags: &[("--config", true, "run config file, or `default`")],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let config = load_config(
        flags
            .get("--config")
            .map(String::as_str)
            .ok_or_else(|| Error::validation("--config is required"))?,
    )?;
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let model = ModelGraph::new(config.strategy, &config.arch, 1, &mut rng)?;
    for (name, count) in model.param_breakdown() {
        println!("{name:<32} {count:>10}");
    }
    println!("total trainable parameters: {}", model.count_params());
    Ok(0)
}

fn cmd_synth_data(args: &[String]) -> crate::error::Result<i32> {
    let spec = FlagSpec {
        usage: "amfm synth-data --n N --seed S --out DIR",
        flags: &[
            ("--n", true, "clips per class"),
            ("--seed", true, "generator seed"),
            ("--noise", true, "noise level (default 0.1)"),
            ("--out", true, "output directory"),
            ("--force", false, "overwrite existing outputs"),
        ],
    };
    let Some(flags) = spec.parse(args)? else {
        return Ok(0);
    };
    let n: usize =
        parse_num::<usize>(&flags, "--n")?.ok_or_else(|| Error::validation("--n is required"))?;
    if n == 0 {
        return Err(Error::validation("--n must be >= 1"));
    }
    let seed = resolve_seed(&flags, SynthConfig::default().seed)?;
    let noise = parse_num::<f64>(&flags, "--noise")?.unwrap_or(0.1);
    let out_dir = PathBuf::from(
        flags
            .get("--out")
            .ok_or_else(|| Error::validation("--out is required"))?,
    );
    let force = flags.contains_key("--force");
    std::fs::create_dir_all(&out_dir)?;

    let data = synth_dataset_with(&SynthConfig {
        n_per_class: n,
        noise_level: noise,
        seed,
        ..SynthConfig::default()
    });
    let mut rows = Vec::with_capacity(data.len());
    for (i, (fm, label)) in data.iter().enumerate() {
        let name = format!("clip_{i:04}_{}.csv", label.scene);
        let path = out_dir.join(&name);
        guard_overwrite(&path, force)?;
        write_grid_csv(&path, fm, 0, 0)?;
        rows.push((PathBuf::from(name), label.scene));
    }
    let manifest = out_dir.join("manifest.csv");
    guard_overwrite(&manifest, force)?;
    write_manifest(&manifest, &rows)?;
    println!("wrote {} clips and {}", data.len(), manifest.display());
    Ok(0)
}

/// Re-read an exported tap CSV; lets tests re-assert the tap invariant from
/// the files themselves.
pub fn read_tap_csv(path: impl AsRef<Path>) -> crate::error::Result<FeatureMap> {
    read_grid_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(args: &[&str]) -> Vec<String> {
        args.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn no_command_is_a_usage_error() {
        assert_eq!(run(&[]), 1);
        assert_eq!(run(&s(&["frobnicate"])), 1);
    }

    #[test]
    fn help_exits_zero_everywhere() {
        assert_eq!(run(&s(&["--help"])), 0);
        for cmd in [
            "gradcheck",
            "train",
            "eval",
            "featmap",
            "params",
            "synth-data",
        ] {
            assert_eq!(run(&s(&[cmd, "--help"])), 0, "{cmd}");
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert_eq!(run(&s(&["params", "--config", "default", "--frob"])), 1);
        assert_eq!(run(&s(&["gradcheck", "--frob", "1"])), 1);
    }

    #[test]
    fn params_default_prints_and_succeeds() {
        assert_eq!(run(&s(&["params", "--config", "default"])), 0);
    }

    #[test]
    fn train_requires_a_data_source() {
        assert_eq!(run(&s(&["train", "--config", "default"])), 1);
    }
}
