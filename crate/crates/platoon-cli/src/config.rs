//! Flat `key = value` configuration with dotted sections, chosen so the run
//! manifest can echo the fully resolved configuration line by line.
//! Unknown keys are rejected; omitted keys fall back to the built-in
//! reference defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use platoon_core::clustering::{ClusteringConfig, GainKind, Selection};
use platoon_core::experiments::ExperimentConfig;
use platoon_core::trucking::{FuelParams, SpeedBand};

/// Typed view of the resolved configuration.
#[derive(Debug)]
pub struct AppConfig {
    pub experiment: ExperimentConfig,
    pub sweep_k: Option<Vec<usize>>,
    pub sweep_band_widths: Option<Vec<f64>>,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "network.num_locations",
    "network.side_length",
    "network.detour_factor",
    "trucks.count",
    "trucks.start_time_interval",
    "trucks.terminal_subset_size",
    "trucks.nominal_speed",
    "fuel.f1",
    "fuel.f0",
    "fuel.fp1",
    "fuel.fp0",
    "band.v_min",
    "band.v_max",
    "clustering.variants",
    "clustering.rho_l",
    "clustering.max_iterations",
    "experiment.spontaneous_time_gap",
    "experiment.replicates",
    "experiment.network_per_replicate",
    "experiment.freeze_terminals",
    "sweep.k",
    "sweep.band_widths",
];

fn defaults() -> BTreeMap<String, String> {
    let fuel = FuelParams::default();
    let reference = ExperimentConfig::reference(100, 100, 1);
    let mut map = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        map.insert(k.to_string(), v);
    };
    put("seed", reference.seed.to_string());
    put(
        "network.num_locations",
        reference.network.num_locations.to_string(),
    );
    put(
        "network.side_length",
        reference.network.side_length.to_string(),
    );
    put(
        "network.detour_factor",
        reference.network.detour_factor.to_string(),
    );
    put("trucks.count", reference.trucks.count.to_string());
    put(
        "trucks.start_time_interval",
        reference.trucks.start_time_interval.to_string(),
    );
    put(
        "trucks.terminal_subset_size",
        reference.trucks.terminal_subset_size.to_string(),
    );
    put(
        "trucks.nominal_speed",
        reference.trucks.nominal_speed.to_string(),
    );
    put("fuel.f1", fuel.f1.to_string());
    put("fuel.f0", fuel.f0.to_string());
    put("fuel.fp1", fuel.fp1.to_string());
    put("fuel.fp0", fuel.fp0.to_string());
    put("band.v_min", reference.band.min.to_string());
    put("band.v_max", reference.band.max.to_string());
    put(
        "clustering.variants",
        "total-greedy,total-random,pairwise-greedy,pairwise-random".to_string(),
    );
    put("clustering.rho_l", "0.5".to_string());
    put("clustering.max_iterations", "1000000".to_string());
    put("experiment.spontaneous_time_gap", "0.01".to_string());
    put("experiment.replicates", reference.replicates.to_string());
    put("experiment.network_per_replicate", "false".to_string());
    put("experiment.freeze_terminals", "false".to_string());
    map
}

/// Parses `key = value` lines; `#` starts a comment.
fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", idx + 1))?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Loads and resolves the configuration: defaults, then the file, then
/// `--set` overrides, then the `--seed` override. Returns the typed config
/// together with the resolved key/value map for the run manifest.
pub fn load(
    config_path: Option<&Path>,
    overrides: &[String],
    seed_override: Option<u64>,
) -> Result<(AppConfig, BTreeMap<String, String>)> {
    let mut resolved = defaults();
    if let Some(path) = config_path {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        for (key, value) in parse_lines(&text)? {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("unknown config key `{key}`");
            }
            resolved.insert(key, value);
        }
    }
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{item}`"))?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            bail!("unknown config key `{key}`");
        }
        resolved.insert(key.to_string(), value.trim().to_string());
    }
    if let Some(seed) = seed_override {
        resolved.insert("seed".to_string(), seed.to_string());
    }
    let config = build(&resolved)?;
    Ok((config, resolved))
}

fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> &'a str {
    map.get(key).map(String::as_str).unwrap_or("")
}

fn parse<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    get(map, key)
        .parse::<T>()
        .map_err(|e| anyhow!("config key `{key}`: {e}"))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow!("config key `{key}`: {e}"))
        })
        .collect()
}

pub fn parse_variant(name: &str, rho_l: f64, max_iterations: u64) -> Result<ClusteringConfig> {
    let (gain, selection) = match name {
        "total-greedy" => (GainKind::Total, Selection::Greedy),
        "total-random" => (GainKind::Total, Selection::Random),
        "pairwise-greedy" => (GainKind::Pairwise, Selection::Greedy),
        "pairwise-random" => (GainKind::Pairwise, Selection::Random),
        other => bail!(
            "unknown variant `{other}` (expected total-greedy, total-random, \
             pairwise-greedy or pairwise-random)"
        ),
    };
    Ok(ClusteringConfig {
        gain,
        selection,
        rho_l,
        seed: 0,
        max_iterations,
    })
}

fn build(map: &BTreeMap<String, String>) -> Result<AppConfig> {
    let fuel = FuelParams::new(
        parse(map, "fuel.f1")?,
        parse(map, "fuel.f0")?,
        parse(map, "fuel.fp1")?,
        parse(map, "fuel.fp0")?,
    )
    .map_err(|e| anyhow!("config key `fuel.*`: {e}"))?;
    let band = SpeedBand::new(parse(map, "band.v_min")?, parse(map, "band.v_max")?)
        .map_err(|e| anyhow!("config key `band.*`: {e}"))?;
    let rho_l: f64 = parse(map, "clustering.rho_l")?;
    let max_iterations: u64 = parse(map, "clustering.max_iterations")?;
    let variants = parse_list::<String>(get(map, "clustering.variants"), "clustering.variants")?
        .iter()
        .map(|name| parse_variant(name, rho_l, max_iterations))
        .collect::<Result<Vec<_>>>()?;

    let mut reference = ExperimentConfig::reference(
        parse(map, "trucks.count")?,
        parse(map, "experiment.replicates")?,
        parse(map, "seed")?,
    );
    reference.network.num_locations = parse(map, "network.num_locations")?;
    reference.network.side_length = parse(map, "network.side_length")?;
    reference.network.detour_factor = parse(map, "network.detour_factor")?;
    reference.trucks.start_time_interval = parse(map, "trucks.start_time_interval")?;
    reference.trucks.terminal_subset_size = parse(map, "trucks.terminal_subset_size")?;
    reference.trucks.nominal_speed = parse(map, "trucks.nominal_speed")?;
    reference.fuel = fuel;
    reference.band = band;
    reference.variants = variants;
    reference.spontaneous_time_gap = parse(map, "experiment.spontaneous_time_gap")?;
    reference.network_per_replicate = parse(map, "experiment.network_per_replicate")?;
    reference.freeze_terminals = parse(map, "experiment.freeze_terminals")?;

    let sweep_k = match map.get("sweep.k") {
        Some(v) if !v.is_empty() => Some(parse_list::<usize>(v, "sweep.k")?),
        _ => None,
    };
    let sweep_band_widths = match map.get("sweep.band_widths") {
        Some(v) if !v.is_empty() => Some(parse_list::<f64>(v, "sweep.band_widths")?),
        _ => None,
    };

    Ok(AppConfig {
        experiment: reference,
        sweep_k,
        sweep_band_widths,
    })
}
