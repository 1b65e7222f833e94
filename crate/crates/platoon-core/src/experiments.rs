//! Monte Carlo experiment harness: truck generation, the spontaneous
//! platooning baseline, variant evaluation, replicated runs, and CSV
//! emission of the per-run and aggregated metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clustering::{run, ClusteringConfig, ClusteringResult, GainKind, Termination};
use crate::coordination::CoordinationGraph;
use crate::parallel::map_indexed;
use crate::road_network::{NodeId, RoadNetwork};
use crate::trucking::{FuelParams, SpeedBand, TransportAssignment};

/// Identifier of the seedable RNG used throughout; recorded in run
/// manifests so outputs can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub num_locations: usize,
    pub side_length: f64,
    pub detour_factor: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            num_locations: 100,
            side_length: 800.0,
            detour_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TruckGenConfig {
    /// Number of trucks per replicate.
    pub count: usize,
    /// Start times are sampled uniformly from `[0, start_time_interval)`.
    pub start_time_interval: f64,
    /// Start and destination nodes are drawn from a random subset of this
    /// many nodes.
    pub terminal_subset_size: usize,
    /// Speed used to derive arrival times from path lengths.
    pub nominal_speed: f64,
}

impl Default for TruckGenConfig {
    fn default() -> Self {
        TruckGenConfig {
            count: 100,
            start_time_interval: 1.0,
            terminal_subset_size: 10,
            nominal_speed: 80.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub trucks: TruckGenConfig,
    pub fuel: FuelParams,
    pub band: SpeedBand,
    /// Clustering variants to run on each replicate's coordination graph.
    pub variants: Vec<ClusteringConfig>,
    /// Trucks entering a road segment within this time of each other can
    /// platoon spontaneously.
    pub spontaneous_time_gap: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Generate a fresh network per replicate instead of one per experiment.
    pub network_per_replicate: bool,
    /// Draw the terminal subset once and reuse it across replicates.
    pub freeze_terminals: bool,
}

impl ExperimentConfig {
    /// Reference setup: 100-location network of side 800, speed band
    /// [70, 90], nominal speed 80, 10 terminal nodes, 10% follower discount.
    pub fn reference(k: usize, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            network: NetworkConfig::default(),
            trucks: TruckGenConfig {
                count: k,
                ..TruckGenConfig::default()
            },
            fuel: FuelParams::default(),
            band: SpeedBand::new(70.0, 90.0).unwrap(),
            variants: vec![ClusteringConfig::total_greedy()],
            spontaneous_time_gap: 0.01,
            replicates,
            seed,
            network_per_replicate: false,
            freeze_terminals: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.network.num_locations < 2 {
            return Err(invalid("network.num_locations", "need at least 2"));
        }
        if !(self.network.side_length > 0.0) {
            return Err(invalid("network.side_length", "must be positive"));
        }
        if !(self.network.detour_factor > 1.0) {
            return Err(invalid("network.detour_factor", "must exceed 1"));
        }
        if self.trucks.count == 0 {
            return Err(invalid("trucks.count", "need at least 1 truck"));
        }
        if !(self.trucks.start_time_interval > 0.0) {
            return Err(invalid("trucks.start_time_interval", "must be positive"));
        }
        if self.trucks.terminal_subset_size < 2 {
            return Err(invalid("trucks.terminal_subset_size", "need at least 2"));
        }
        if self.trucks.terminal_subset_size > self.network.num_locations {
            return Err(invalid(
                "trucks.terminal_subset_size",
                "larger than the network",
            ));
        }
        if !self.band.contains(self.trucks.nominal_speed) {
            return Err(invalid(
                "trucks.nominal_speed",
                format!(
                    "speed {} outside the band [{}, {}]",
                    self.trucks.nominal_speed, self.band.min, self.band.max
                ),
            ));
        }
        if !self.fuel.follower_saves_on(self.band) {
            return Err(invalid(
                "fuel",
                "follower rate must lie below the solo rate on the band",
            ));
        }
        if !(self.spontaneous_time_gap >= 0.0) {
            return Err(invalid("experiment.spontaneous_time_gap", "must be >= 0"));
        }
        if self.replicates == 0 {
            return Err(invalid("experiment.replicates", "need at least 1"));
        }
        if self.variants.is_empty() {
            return Err(invalid("clustering.variants", "need at least one variant"));
        }
        for v in &self.variants {
            v.validate()
                .map_err(|m| invalid("clustering.variants", m))?;
        }
        Ok(())
    }
}

/// Stable child-seed derivation: FNV-1a over the replicate index and a
/// purpose tag, folded into the base seed. Platform independent, so runs
/// reproduce anywhere.
pub fn child_seed(base: u64, index: u64, tag: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for byte in index.to_le_bytes() {
        eat(byte);
    }
    for byte in tag.as_bytes() {
        eat(*byte);
    }
    base ^ hash
}

/// Draws `size` distinct terminal nodes.
pub fn draw_terminals(net: &RoadNetwork, size: usize, seed: u64) -> Vec<NodeId> {
    assert!(size >= 2 && size <= net.node_count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, net.node_count(), size).into_vec()
}

/// Generates `cfg.count` trucks: start time uniform in the interval, start
/// and destination drawn from the terminal subset (re-drawing the
/// destination until it differs), arrival time set so the default speed is
/// exactly the nominal speed.
pub fn generate_trucks(
    net: &RoadNetwork,
    cfg: &TruckGenConfig,
    band: SpeedBand,
    terminals: &[NodeId],
    seed: u64,
) -> Vec<TransportAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path_cache: HashMap<(NodeId, NodeId), Arc<crate::road_network::Path>> = HashMap::new();
    (0..cfg.count)
        .map(|id| {
            let start_time = rng.random_range(0.0..cfg.start_time_interval);
            let start = terminals[rng.random_range(0..terminals.len())];
            let mut dest = terminals[rng.random_range(0..terminals.len())];
            while dest == start {
                dest = terminals[rng.random_range(0..terminals.len())];
            }
            let path = path_cache
                .entry((start, dest))
                .or_insert_with(|| Arc::new(net.shortest_path(start, dest).unwrap()))
                .clone();
            let arrival = start_time + path.total_length() / cfg.nominal_speed;
            TransportAssignment::new(id, start, dest, start_time, arrival, (*path).clone(), band)
                .expect("generated assignment is valid by construction")
        })
        .collect()
}

/// Fuel saving of uncoordinated platooning: per road segment, trucks whose
/// entry times (driving the nominal speed) fall within `time_gap` of the
/// first truck of their group platoon over that whole segment for free.
/// Returns the saving relative to the no-platooning baseline.
pub fn spontaneous_platooning(
    trucks: &[TransportAssignment],
    params: &FuelParams,
    nominal_speed: f64,
    time_gap: f64,
) -> f64 {
    // Deterministic iteration: BTreeMap keyed by the directed segment.
    let mut per_edge: BTreeMap<(NodeId, NodeId), Vec<(f64, usize, f64)>> = BTreeMap::new();
    let mut baseline = 0.0;
    for truck in trucks {
        baseline += truck.path.total_length() * params.solo_rate(nominal_speed);
        let mut covered = 0.0;
        for i in 0..truck.path.num_edges() {
            let (from, to, w) = truck.path.edge(i);
            let entry = truck.start_time + covered / nominal_speed;
            per_edge
                .entry((from, to))
                .or_default()
                .push((entry, truck.id, w));
            covered += w;
        }
    }
    let per_distance_saving = params.solo_rate(nominal_speed) - params.platoon_rate(nominal_speed);
    let mut saved = 0.0;
    for entries in per_edge.values_mut() {
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut idx = 0;
        while idx < entries.len() {
            let anchor = entries[idx].0;
            let mut end = idx + 1;
            while end < entries.len() && entries[end].0 - anchor <= time_gap {
                end += 1;
            }
            // Everyone but the group's first member platoons as follower.
            for member in &entries[idx + 1..end] {
                saved += member.2 * per_distance_saving;
            }
            idx = end;
        }
    }
    saved / baseline
}

/// Per-variant outcome of one replicate.
#[derive(Debug, Clone)]
pub struct VariantMetrics {
    pub relative_saving: f64,
    /// Mean absolute virtual start gap over assigned pairs; `None` when
    /// nothing was assigned.
    pub mean_abs_delta_d_start: Option<f64>,
    pub num_leaders: usize,
    pub iterations: u64,
    pub termination: Termination,
    /// Fuel with every truck on its default profile.
    pub baseline_fuel: f64,
    /// Fuel with the clustering applied.
    pub total_fuel: f64,
    /// The clustering objective of the reported leader set.
    pub objective: f64,
}

/// Computes the fuel metrics of a clustering result: leaders and unassigned
/// trucks burn their default fuel, assigned followers burn their plan's
/// adapted fuel. The saving identity `baseline - total = objective` is
/// asserted to 1e-9 relative.
pub fn evaluate_variant(
    g: &CoordinationGraph,
    result: &ClusteringResult,
    trucks: &[TransportAssignment],
    params: &FuelParams,
) -> VariantMetrics {
    let mut baseline = 0.0;
    let mut total = 0.0;
    let mut gap_sum = 0.0;
    let mut gap_count = 0usize;
    for truck in trucks {
        let default_fuel = truck.default_fuel(params);
        baseline += default_fuel;
        match result.assignment.get(&truck.id) {
            Some(&leader) => {
                let plan = g
                    .plan(truck.id, leader)
                    .expect("assigned edges are built from plans");
                total += plan.fuel_adapted;
                gap_sum += plan.delta_d_start.abs();
                gap_count += 1;
            }
            None => total += default_fuel,
        }
    }
    let objective = result.objective;
    let identity_gap = ((baseline - total) - objective).abs();
    assert!(
        identity_gap <= 1e-9 * objective.abs().max(1.0),
        "saving identity violated: baseline - total = {} vs objective {objective}",
        baseline - total
    );
    let relative_saving = 1.0 - total / baseline;
    debug_assert!(relative_saving >= -1e-12);
    VariantMetrics {
        relative_saving,
        mean_abs_delta_d_start: (gap_count > 0).then(|| gap_sum / gap_count as f64),
        num_leaders: result.leaders.len(),
        iterations: result.iterations,
        termination: result.termination,
        baseline_fuel: baseline,
        total_fuel: total,
        objective,
    }
}

/// One CSV row: a variant's metrics on one replicate.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub replicate: usize,
    pub variant: String,
    pub k: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Leader share, for pairwise-gain variants.
    pub rho_l: Option<f64>,
    pub relative_saving: f64,
    pub spontaneous_saving: f64,
    pub mean_abs_delta_d_start: Option<f64>,
    pub num_leaders: usize,
    pub iterations: u64,
    pub termination: Termination,
}

/// Runs the configured experiment: one coordination graph per replicate,
/// every variant on it, plus the spontaneous baseline. Replicates are
/// independent (child seeds are derived from the replicate index), so they
/// run as a parallel map; rows come back in (replicate, variant) order
/// regardless of the schedule.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRow>, ConfigError> {
    cfg.validate()?;
    let shared_network = if cfg.network_per_replicate {
        None
    } else {
        Some(Arc::new(generate_network(cfg, 0)))
    };
    let rows: Vec<Vec<RunRow>> = map_indexed(cfg.replicates, |replicate| {
        let net = match &shared_network {
            Some(net) => Arc::clone(net),
            None => Arc::new(generate_network(cfg, replicate as u64)),
        };
        run_replicate(cfg, &net, replicate)
    });
    Ok(rows.into_iter().flatten().collect())
}

fn generate_network(cfg: &ExperimentConfig, index: u64) -> RoadNetwork {
    RoadNetwork::generate(
        cfg.network.num_locations,
        cfg.network.side_length,
        cfg.network.detour_factor,
        child_seed(cfg.seed, index, "network"),
    )
}

fn run_replicate(cfg: &ExperimentConfig, net: &RoadNetwork, replicate: usize) -> Vec<RunRow> {
    let terminal_index = if cfg.freeze_terminals {
        0
    } else {
        replicate as u64
    };
    let terminals = draw_terminals(
        net,
        cfg.trucks.terminal_subset_size,
        child_seed(cfg.seed, terminal_index, "terminals"),
    );
    let trucks = generate_trucks(
        net,
        &cfg.trucks,
        cfg.band,
        &terminals,
        child_seed(cfg.seed, replicate as u64, "trucks"),
    );
    let graph = CoordinationGraph::build(&trucks, &cfg.fuel, cfg.band);
    let spontaneous = spontaneous_platooning(
        &trucks,
        &cfg.fuel,
        cfg.trucks.nominal_speed,
        cfg.spontaneous_time_gap,
    );
    cfg.variants
        .iter()
        .enumerate()
        .map(|(vi, variant)| {
            let mut variant = variant.clone();
            variant.seed = child_seed(cfg.seed, replicate as u64, &format!("variant-{vi}"));
            let result = run(&graph, &variant);
            let metrics = evaluate_variant(&graph, &result, &trucks, &cfg.fuel);
            RunRow {
                replicate,
                variant: variant.variant_name().to_string(),
                k: cfg.trucks.count,
                v_min: cfg.band.min,
                v_max: cfg.band.max,
                rho_l: (variant.gain == GainKind::Pairwise).then_some(variant.rho_l),
                relative_saving: metrics.relative_saving,
                spontaneous_saving: spontaneous,
                mean_abs_delta_d_start: metrics.mean_abs_delta_d_start,
                num_leaders: metrics.num_leaders,
                iterations: metrics.iterations,
                termination: metrics.termination,
            }
        })
        .collect()
}

pub const ROWS_CSV_HEADER: &str = "replicate,variant,K,v_min,v_max,rho_l,relative_saving,\
spontaneous_saving,mean_abs_delta_d_start,num_leaders,iterations,termination";

/// Serializes rows in the per-replicate CSV schema. Absent values (e.g. the
/// mean gap when nothing was assigned) are empty fields.
pub fn rows_to_csv(rows: &[RunRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{ROWS_CSV_HEADER}").unwrap();
    for r in rows {
        let rho = r.rho_l.map_or(String::new(), |v| v.to_string());
        let gap = r
            .mean_abs_delta_d_start
            .map_or(String::new(), |v| v.to_string());
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.replicate,
            r.variant,
            r.k,
            r.v_min,
            r.v_max,
            rho,
            r.relative_saving,
            r.spontaneous_saving,
            gap,
            r.num_leaders,
            r.iterations,
            r.termination
        )
        .unwrap();
    }
    s
}

/// Mean/standard-deviation aggregate per (K, band width, variant) group:
/// the data points behind the savings, gap, leader-count and iteration
/// plots.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub k: usize,
    pub band_width: f64,
    pub variant: String,
    pub n: usize,
    pub saving: (f64, f64),
    pub spontaneous: (f64, f64),
    /// Over rows that had assigned pairs.
    pub mean_abs_delta_d_start: Option<(f64, f64)>,
    pub num_leaders: (f64, f64),
    pub iterations: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, u64, String), Vec<&RunRow>> = BTreeMap::new();
    for row in rows {
        let width = row.v_max - row.v_min;
        groups
            .entry((row.k, width.to_bits(), row.variant.clone()))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((k, width_bits, variant), members)| {
            let savings: Vec<f64> = members.iter().map(|r| r.relative_saving).collect();
            let spontaneous: Vec<f64> = members.iter().map(|r| r.spontaneous_saving).collect();
            let gaps: Vec<f64> = members
                .iter()
                .filter_map(|r| r.mean_abs_delta_d_start)
                .collect();
            let leaders: Vec<f64> = members.iter().map(|r| r.num_leaders as f64).collect();
            let iterations: Vec<f64> = members.iter().map(|r| r.iterations as f64).collect();
            AggregateRow {
                k,
                band_width: f64::from_bits(width_bits),
                variant,
                n: members.len(),
                saving: mean_std(&savings),
                spontaneous: mean_std(&spontaneous),
                mean_abs_delta_d_start: (!gaps.is_empty()).then(|| mean_std(&gaps)),
                num_leaders: mean_std(&leaders),
                iterations: mean_std(&iterations),
            }
        })
        .collect()
}

pub const AGGREGATE_CSV_HEADER: &str = "K,band_width,variant,n,relative_saving_mean,\
relative_saving_std,spontaneous_saving_mean,spontaneous_saving_std,\
mean_abs_delta_d_start_mean,mean_abs_delta_d_start_std,num_leaders_mean,num_leaders_std,\
iterations_mean,iterations_std";

pub fn aggregate_to_csv(aggregates: &[AggregateRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{AGGREGATE_CSV_HEADER}").unwrap();
    for a in aggregates {
        let (gap_mean, gap_std) = match a.mean_abs_delta_d_start {
            Some((m, d)) => (m.to_string(), d.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.k,
            a.band_width,
            a.variant,
            a.n,
            a.saving.0,
            a.saving.1,
            a.spontaneous.0,
            a.spontaneous.1,
            gap_mean,
            gap_std,
            a.num_leaders.0,
            a.num_leaders.1,
            a.iterations.0,
            a.iterations.1
        )
        .unwrap();
    }
    s
}
