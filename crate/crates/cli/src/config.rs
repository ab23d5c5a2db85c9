//! Layering of parameters: flags over config file over preset over defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::{Cli, Format, Threads};
use crate::error::CliError;

/// Keys of the config file that are not command parameters.
const GLOBAL_KEYS: [&str; 6] = ["command", "out", "format", "seed", "threads", "preset"];

pub struct Preset {
    pub name: &'static str,
    pub command: &'static str,
    pub about: &'static str,
    pub values: &'static str,
}

/// Parameter sets pinned to the reference experiments. Values are TOML.
pub const PRESETS: &[Preset] = &[
    Preset {
        name: "window-q5",
        command: "thresholds",
        about: "repulsive stability window of the 5-twisted state, continuum and M = 1000",
        values: "q = 5\nkind = \"repulsive\"\nm = 1000",
    },
    Preset {
        name: "threshold-q5",
        command: "thresholds",
        about: "attractive threshold of the 5-twisted state, continuum and M = 1000",
        values: "q = 5\nkind = \"attractive\"\nm = 1000",
    },
    Preset {
        name: "ratio-q50",
        command: "gamma",
        about: "pitchfork coefficients at the attractive threshold for q = 50",
        values: "q = 50\nfamily = \"r-linear\"\nat = \"attractive-threshold\"\nell = 1",
    },
    Preset {
        name: "switch-q2",
        command: "gamma",
        about: "t-family through (q, r) = (2, 0.3) at t = 0",
        values: "q = 2\nfamily = \"t-family\"\nr = 0.3\nt = 0.0",
    },
    Preset {
        name: "stability-q8",
        command: "stability-map",
        about: "maximal eigenvalue of the 8-twisted state over r in [0.05, 0.5], lambda in [-2, 2]",
        values: "q = 8\nr = \"0.05:0.5:128\"\nlambda = \"-2:2:128\"",
    },
    Preset {
        name: "branch-q5",
        command: "branch",
        about: "attractive 5-twisted branch at s0 = -1e-4 on M = 1000, refined, with the error-scaling sweep",
        values: "q = 5\nat = \"attractive-threshold\"\nell = 1\ns0 = -1e-4\nm = 1000\nrefine = true\nscaling = [-1e-5, -3e-5, -1e-4, -3e-4, -1e-3]",
    },
    Preset {
        name: "repulsive-q5",
        command: "simulate",
        about: "repulsive M = 1000 ring just below the stability window, perturbed 5-twisted start",
        values: "m = 1000\nq = 5\nsign = \"repulsive\"\nat = \"repulsive-threshold\"\ns = -1e-5\namplitude = 0.01\nt-end = 1e6\ntol = 1e-8\npolish = true",
    },
    Preset {
        name: "iota",
        command: "iota",
        about: "slope function on [0.3, 5]",
        values: "from = 0.3\nto = 5.0\nsteps = 100",
    },
];

/// Fully resolved invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub parameters: Value,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub threads: Threads,
    pub preset: Option<String>,
}

fn toml_to_map(text: &str, origin: &str) -> Result<Map<String, Value>, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
    match serde_json::to_value(table) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(CliError::Usage(format!(
            "{origin}: not a flat key/value table"
        ))),
    }
}

pub fn find_preset(name: &str) -> Result<&'static Preset, CliError> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        CliError::Usage(format!(
            "unknown preset {name:?} (available: {})",
            names.join(", ")
        ))
    })
}

fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml_to_map(&text, &path.display().to_string())
}

/// Merges `cli` over `file` over `preset`, rejecting keys `T` does not have.
fn layer<T: Serialize + DeserializeOwned + Default>(
    cli: &T,
    file: &Map<String, Value>,
    preset: &Map<String, Value>,
) -> Result<T, CliError> {
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    let mut merged = Map::new();
    for (source, map) in [("preset", preset), ("config file", file)] {
        for (k, v) in map {
            if !known.contains_key(k) {
                return Err(CliError::Usage(format!("unknown key {k:?} in {source}")));
            }
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Ok(Value::Object(flags)) = serde_json::to_value(cli) {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("invalid parameter: {e}")))
}

/// Resolves the command parameters into `T` and the shared options.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(
    cli: &Cli,
    args: &T,
) -> Result<(T, RunConfig), CliError> {
    let command = cli.command.name();
    let mut file = match &cli.config {
        Some(path) => read_file(path)?,
        None => Map::new(),
    };
    let mut globals = Map::new();
    for key in GLOBAL_KEYS {
        if let Some(v) = file.remove(key) {
            globals.insert(key.to_string(), v);
        }
    }
    if let Some(Value::String(c)) = globals.get("command") {
        if c != command {
            return Err(CliError::Usage(format!(
                "config file is for command {c:?}, not {command:?}"
            )));
        }
    }
    let preset_name = cli.preset.clone().or_else(|| {
        globals
            .get("preset")
            .and_then(|v| v.as_str())
            .map(String::from)
    });
    let preset = match &preset_name {
        Some(name) => {
            let p = find_preset(name)?;
            if p.command != command {
                return Err(CliError::Usage(format!(
                    "preset {name:?} belongs to the {} command",
                    p.command
                )));
            }
            toml_to_map(p.values, name)?
        }
        None => Map::new(),
    };
    let params = layer(args, &file, &preset)?;

    let global = |key: &str| globals.get(key).cloned();
    let output_dir = cli
        .out
        .clone()
        .or_else(|| global("out").and_then(|v| v.as_str().map(PathBuf::from)));
    let format = match (cli.format, global("format")) {
        (Some(f), _) => f,
        (None, Some(v)) => {
            serde_json::from_value(v).map_err(|e| CliError::Usage(format!("format: {e}")))?
        }
        (None, None) => Format::Both,
    };
    let seed = match (cli.seed, global("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v
            .as_u64()
            .ok_or_else(|| CliError::Usage("seed must be a non-negative integer".into()))?,
        (None, None) => 0,
    };
    let threads = match (cli.threads, global("threads")) {
        (Some(t), _) => t,
        (None, Some(Value::String(s))) => s.parse().map_err(CliError::Usage)?,
        (None, Some(Value::Number(n))) => n.to_string().parse().map_err(CliError::Usage)?,
        (None, Some(_)) => {
            return Err(CliError::Usage(
                "threads must be a positive integer or \"auto\"".into(),
            ))
        }
        (None, None) => match std::env::var("TWISTLAB_THREADS") {
            Ok(s) => s
                .parse()
                .map_err(|e| CliError::Usage(format!("TWISTLAB_THREADS: {e}")))?,
            Err(_) => Threads::Auto(crate::args::AutoTag::Auto),
        },
    };
    let parameters = serde_json::to_value(&params).expect("parameters serialize");
    let config = RunConfig {
        command: command.to_string(),
        parameters,
        output_dir,
        format,
        seed,
        threads,
        preset: preset_name,
    };
    Ok((params, config))
}
