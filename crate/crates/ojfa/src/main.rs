//! Thin pipeline driver. All logic lives in the `ojfa` library; this
//! binary parses a JSON config plus flag overrides and dispatches one of
//! the stage commands.

use std::process::ExitCode;

use ojfa::pipeline::{
    cmd_evaluate, cmd_gen_corpus, cmd_gen_model, cmd_pipeline, cmd_select, cmd_train, RunConfig,
};

const USAGE: &str = "\
usage: ojfa <command> [flags]

commands:
  gen-model    write the seeded model weights (model.ojfw)
  gen-corpus   build train/test hidden-state corpora (corpus_*.ojfc)
  train        train one jump per exit level plus the joint baseline (bank.ojfs, joint.ojfs)
  select       score jumps for reuse and keep the best one (scores.json, ojfa.ojfs)
  evaluate     per-level precision/surprisal for every strategy (metrics.*, *.svg)
  pipeline     all of the above in order

flags:
  --config <path>    JSON configuration file (defaults are built in)
  --out <dir>        output directory (out_dir)
  --seed <u64>       master seed; model/corpus/train seeds derive from it
  --threads <n>      worker-thread bound
  --rank <n>         jump rank override
  --lambda <list>    comma-separated confidence thresholds, each in [0, 1]
  --<dotted.path> <value>
                     override any config key, e.g. --train.epochs 30

stdout carries artifact paths and summary lines; errors go to stderr.";

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<(), String> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = match args.first().map(String::as_str) {
        Some("-h") | Some("--help") | None => {
            println!("{USAGE}");
            return if args.is_empty() {
                Err("missing command".to_string())
            } else {
                Ok(())
            };
        }
        Some(cmd) => cmd.to_string(),
    };

    let overrides = parse_flags(&args[1..])?;
    let config = build_config(&overrides)?;

    if let Some(threads) = config.threads {
        // Later commands reuse the pool; a second build_global is a no-op.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let stage = match command.as_str() {
        "gen-model" => cmd_gen_model,
        "gen-corpus" => cmd_gen_corpus,
        "train" => cmd_train,
        "select" => cmd_select,
        "evaluate" => cmd_evaluate,
        "pipeline" => cmd_pipeline,
        other => return Err(format!("unknown command {other:?}\n\n{USAGE}")),
    };

    let artifacts = stage(&config).map_err(|e| e.to_string())?;
    for path in &artifacts {
        println!("{}", path.display());
    }
    println!(
        "{}: wrote {} artifact{} under {}",
        command,
        artifacts.len(),
        if artifacts.len() == 1 { "" } else { "s" },
        config.out_dir.display()
    );
    Ok(())
}

/// Flag pairs `--key value`, in order.
fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    let mut iter = args.iter();
    while let Some(flag) = iter.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| format!("expected --flag, got {flag:?}"))?;
        let value = iter
            .next()
            .ok_or_else(|| format!("flag --{key} is missing a value"))?;
        pairs.push((key.to_string(), value.clone()));
    }
    Ok(pairs)
}

fn build_config(overrides: &[(String, String)]) -> Result<RunConfig, String> {
    let mut value = match overrides.iter().find(|(k, _)| k == "config") {
        Some((_, path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {path}: {e}"))?;
            serde_json::from_str(&text).map_err(|e| format!("config {path}: {e}"))?
        }
        None => serde_json::to_value(RunConfig::default()).expect("default config serializes"),
    };

    for (key, raw) in overrides {
        let path = match key.as_str() {
            "config" => continue,
            "out" => "out_dir".to_string(),
            "lambda" => "lambda_grid".to_string(),
            other => other.to_string(),
        };
        let parsed = parse_override(&path, raw);
        set_dotted(&mut value, &path, parsed)?;
    }

    let mut config: RunConfig =
        serde_json::from_value(value).map_err(|e| format!("config: {e}"))?;
    config.resolve_seeds();
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

/// Interpret an override value: comma lists become arrays, JSON scalars
/// keep their type, everything else stays a string.
fn parse_override(path: &str, raw: &str) -> serde_json::Value {
    if path == "lambda_grid" || raw.contains(',') {
        let items: Vec<serde_json::Value> = raw
            .split(',')
            .map(|item| scalar_value(item.trim()))
            .collect();
        return serde_json::Value::Array(items);
    }
    scalar_value(raw)
}

fn scalar_value(raw: &str) -> serde_json::Value {
    serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()))
}

fn set_dotted(
    value: &mut serde_json::Value,
    path: &str,
    new_value: serde_json::Value,
) -> Result<(), String> {
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let map = cursor
            .as_object_mut()
            .ok_or_else(|| format!("config key {path:?}: {segment:?} is not an object"))?;
        if i + 1 == segments.len() {
            map.insert((*segment).to_string(), new_value);
            return Ok(());
        }
        cursor = map
            .entry((*segment).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(format!("empty config key for value {new_value}"))
}
