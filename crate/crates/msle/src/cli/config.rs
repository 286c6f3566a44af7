//! Flat key=value run configuration files.
//!
//! The format is one `key = value` pair per line; `#` starts a comment.
//! Lists (kappas, x0, speeds) are comma-separated. A single kappa or
//! speed is broadcast to all curves. Recognised keys:
//!
//! | key              | meaning                                             |
//! |------------------|-----------------------------------------------------|
//! | `n`              | curve count (optional; inferred from lists)         |
//! | `kappas`         | diffusivities, one per curve or a single broadcast  |
//! | `z_form`         | `constant` or `two_point_power`                     |
//! | `z_exponent`     | exponent for `two_point_power`                      |
//! | `x0`             | strictly increasing starting positions              |
//! | `speeds`         | capacity speeds (default all 1)                     |
//! | `T`              | time horizon                                        |
//! | `dt`             | step size                                           |
//! | `N`              | ensemble path count (default 1)                     |
//! | `seed`           | master seed (default 0)                             |
//! | `dynamics`       | `independent`, `cardy`, or `full` (default `full`)  |
//! | `weight`         | `none`, `restriction`, `cardy`, `conformal`,        |
//! |                  | `combined` (default `none`)                         |
//! | `hull_center`    | avoided-hull base point (restriction weight)        |
//! | `hull_capacity`  | avoided-hull half-plane capacity                    |
//! | `gap_floor_scale`| collapse floor as a fraction of the initial gap     |
//! | `eval_floor_scale`| reliability floor for decomposed evaluation        |
//!
//! Unknown keys are rejected so typos fail loudly instead of being
//! silently ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::conformal::ElementarySlit;
use crate::dynamics::{DynamicsMode, SimulationConfig};
use crate::ensemble::{EnsembleConfig, WeightMode};
use crate::error::{Error, Result};
use crate::partition::{PartitionSpec, ZForm};

const KNOWN_KEYS: [&str; 16] = [
    "n",
    "kappas",
    "z_form",
    "z_exponent",
    "x0",
    "speeds",
    "T",
    "dt",
    "N",
    "seed",
    "dynamics",
    "weight",
    "hull_center",
    "hull_capacity",
    "gap_floor_scale",
    "eval_floor_scale",
];

/// A parsed, validated run configuration plus the raw key=value echo for
/// the manifest.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ensemble: EnsembleConfig,
    /// Raw pairs in sorted key order.
    pub echo: BTreeMap<String, String>,
}

pub fn parse_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        if pairs.insert(key.clone(), value).is_some() {
            return Err(Error::config(format!("duplicate key `{key}`")));
        }
    }
    build(pairs)
}

fn get_f64(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match pairs.get(key) {
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a number"))),
        None => Ok(None),
    }
}

fn get_list(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>> {
    match pairs.get(key) {
        Some(v) => {
            let parsed: std::result::Result<Vec<f64>, _> =
                v.split(',').map(|t| t.trim().parse::<f64>()).collect();
            parsed
                .map(Some)
                .map_err(|_| Error::config(format!("key `{key}`: `{v}` is not a number list")))
        }
        None => Ok(None),
    }
}

fn require(opt: Option<f64>, key: &str) -> Result<f64> {
    opt.ok_or_else(|| Error::config(format!("missing required key `{key}`")))
}

fn build(pairs: BTreeMap<String, String>) -> Result<RunConfig> {
    let kappas_raw = get_list(&pairs, "kappas")?
        .ok_or_else(|| Error::config("missing required key `kappas`"))?;
    let x0 = get_list(&pairs, "x0")?.ok_or_else(|| Error::config("missing required key `x0`"))?;
    let n = match pairs.get("n") {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| Error::config(format!("key `n`: `{v}` is not a count")))?,
        None => x0.len(),
    };
    if n == 0 {
        return Err(Error::config("need at least one curve"));
    }
    if x0.len() != n {
        return Err(Error::config(format!("x0 has {} entries for {} curves", x0.len(), n)));
    }
    let kappas = broadcast(kappas_raw, n, "kappas")?;
    let speeds = match get_list(&pairs, "speeds")? {
        Some(s) => broadcast(s, n, "speeds")?,
        None => vec![1.0; n],
    };

    let z_form = match pairs.get("z_form").map(String::as_str) {
        None | Some("constant") => {
            if pairs.contains_key("z_exponent") {
                return Err(Error::config("z_exponent needs z_form = two_point_power"));
            }
            ZForm::Constant
        }
        Some("two_point_power") => {
            let exponent = require(get_f64(&pairs, "z_exponent")?, "z_exponent")?;
            ZForm::TwoPointPower { exponent }
        }
        Some(other) => return Err(Error::config(format!("unknown z_form `{other}`"))),
    };

    let horizon = require(get_f64(&pairs, "T")?, "T")?;
    let dt = require(get_f64(&pairs, "dt")?, "dt")?;
    let paths = match pairs.get("N") {
        Some(v) => v
            .parse::<usize>()
            .map_err(|_| Error::config(format!("key `N`: `{v}` is not a count")))?,
        None => 1,
    };
    let seed = match pairs.get("seed") {
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| Error::config(format!("key `seed`: `{v}` is not an integer")))?,
        None => 0,
    };
    let mode = match pairs.get("dynamics") {
        Some(v) => DynamicsMode::from_str(v)?,
        None => DynamicsMode::Full,
    };
    let weight = match pairs.get("weight") {
        Some(v) => WeightMode::from_str(v)?,
        None => WeightMode::None,
    };
    let hull = match (get_f64(&pairs, "hull_center")?, get_f64(&pairs, "hull_capacity")?) {
        (Some(center), Some(capacity)) => Some(ElementarySlit::new(center, capacity)?),
        (None, None) => None,
        _ => {
            return Err(Error::config("hull_center and hull_capacity must be given together"));
        }
    };

    let spec = PartitionSpec::new(kappas, z_form)?;
    let mut sim = SimulationConfig::new(spec, x0, horizon, dt)?
        .with_mode(mode)
        .with_speeds(speeds)?;
    if let Some(g) = get_f64(&pairs, "gap_floor_scale")? {
        sim.gap_floor_scale = g;
    }
    if let Some(e) = get_f64(&pairs, "eval_floor_scale")? {
        sim.eval_floor_scale = e;
    }
    sim.validate()?;
    let ensemble = EnsembleConfig::new(sim, paths, seed)?.with_weight(weight, hull)?;
    Ok(RunConfig { ensemble, echo: pairs })
}

fn broadcast(values: Vec<f64>, n: usize, key: &str) -> Result<Vec<f64>> {
    if values.len() == n {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0]; n])
    } else {
        Err(Error::config(format!("{key} has {} entries for {n} curves", values.len())))
    }
}
