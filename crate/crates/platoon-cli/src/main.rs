//! Batch front-end: network generation, pair planning, graph builds,
//! clustering, and the Monte Carlo experiments, all driven by a flat
//! `key = value` config plus per-run overrides. Every run writes a manifest
//! with the fully resolved configuration so outputs are reproducible.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use platoon_core::clustering::{run_with_trace, ClusteringConfig};
use platoon_core::coordination::CoordinationGraph;
use platoon_core::experiments::{
    aggregate, aggregate_to_csv, child_seed, draw_terminals, evaluate_variant, generate_trucks,
    rows_to_csv, run_experiment, ExperimentConfig, RunRow, RNG_ALGORITHM,
};
use platoon_core::pairwise::adapted_plan;
use platoon_core::road_network::RoadNetwork;
use platoon_core::trucking::{assignments_from_text, assignments_to_text, TransportAssignment};

use config::AppConfig;

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "Fuel-optimal truck platooning: pairwise plans, leader clustering, Monte Carlo experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file; omitted keys use built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set trucks.count=400`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files and the run manifest.
    #[arg(long, default_value = "platoon-out")]
    output_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the road network and write it as plain text.
    GenNetwork {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the fuel-optimal adapted plan for one leader/follower pair.
    PlanPair {
        #[command(flatten)]
        common: CommonArgs,
        /// Network file (`node`/`edge` lines).
        #[arg(long)]
        network: PathBuf,
        /// Assignment file (`truck` lines).
        #[arg(long)]
        trucks: PathBuf,
        /// Leader truck id; defaults to the first truck in the file.
        #[arg(long)]
        leader: Option<usize>,
        /// Follower truck id; defaults to the second truck in the file.
        #[arg(long)]
        follower: Option<usize>,
    },
    /// Build the coordination graph and dump it as `cedge` lines.
    BuildGraph {
        #[command(flatten)]
        common: CommonArgs,
        /// Network file; generated from the config when omitted.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Assignment file; generated from the config when omitted.
        #[arg(long)]
        trucks: Option<PathBuf>,
    },
    /// Run one clustering variant and print the outcome.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        trucks: Option<PathBuf>,
        /// total-greedy, total-random, pairwise-greedy or pairwise-random.
        #[arg(long, default_value = "total-greedy")]
        variant: String,
        /// Print one `iter <k> <node> <delta_u> <objective>` line per flip.
        #[arg(long)]
        trace: bool,
    },
    /// Run the replicated experiment and write per-row and aggregate CSVs.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep the truck count or the speed-band width and aggregate per point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Configuration problems exit with 1, everything else that fails with 2.
enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenNetwork { common } => gen_network(&common),
        Command::PlanPair {
            common,
            network,
            trucks,
            leader,
            follower,
        } => plan_pair(&common, &network, &trucks, leader, follower),
        Command::BuildGraph {
            common,
            network,
            trucks,
        } => build_graph(&common, network.as_deref(), trucks.as_deref()),
        Command::Cluster {
            common,
            network,
            trucks,
            variant,
            trace,
        } => cluster(
            &common,
            network.as_deref(),
            trucks.as_deref(),
            &variant,
            trace,
        ),
        Command::Experiment { common } => experiment(&common),
        Command::Sweep { common } => sweep(&common),
    }
}

struct Session {
    config: AppConfig,
    resolved: BTreeMap<String, String>,
    output_dir: PathBuf,
    inputs: Vec<(String, PathBuf)>,
}

impl Session {
    fn open(common: &CommonArgs, command_name: &str) -> Result<Self, CliError> {
        let (config, resolved) =
            config::load(common.config.as_deref(), &common.overrides, common.seed)
                .map_err(config_err)?;
        config.experiment.validate().map_err(config_err)?;
        fs::create_dir_all(&common.output_dir)
            .with_context(|| format!("cannot create {}", common.output_dir.display()))
            .map_err(runtime_err)?;
        let mut inputs = Vec::new();
        if let Some(path) = &common.config {
            inputs.push(("config".to_string(), path.clone()));
        }
        let session = Session {
            config,
            resolved,
            output_dir: common.output_dir.clone(),
            inputs,
        };
        let _ = command_name;
        Ok(session)
    }

    fn add_input(&mut self, label: &str, path: &Path) {
        self.inputs.push((label.to_string(), path.to_path_buf()));
    }

    /// Output files must never overwrite any input file.
    fn guard_output(&self, name: &str) -> Result<PathBuf, CliError> {
        let dir = fs::canonicalize(&self.output_dir)
            .with_context(|| format!("cannot resolve {}", self.output_dir.display()))
            .map_err(runtime_err)?;
        let out = dir.join(name);
        for (label, input) in &self.inputs {
            if let Ok(canonical) = fs::canonicalize(input) {
                if canonical == out {
                    return Err(config_err(anyhow!(
                        "output {} would overwrite the {label} input {}",
                        out.display(),
                        input.display()
                    )));
                }
            }
        }
        Ok(out)
    }

    fn write_output(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.guard_output(name)?;
        fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(runtime_err)?;
        Ok(path)
    }

    fn write_manifest(&self, command_name: &str) -> Result<(), CliError> {
        let mut text = String::new();
        writeln!(text, "# platoon run manifest").unwrap();
        writeln!(text, "command = {command_name}").unwrap();
        writeln!(text, "rng = {RNG_ALGORITHM}").unwrap();
        for (label, path) in &self.inputs {
            writeln!(text, "input.{label} = {}", path.display()).unwrap();
        }
        for (key, value) in &self.resolved {
            writeln!(text, "{key} = {value}").unwrap();
        }
        self.write_output("run_manifest.txt", &text)?;
        Ok(())
    }

    fn experiment_config(&self) -> &ExperimentConfig {
        &self.config.experiment
    }

    /// The network a replicate-0 experiment with this config would use.
    fn network(&self) -> RoadNetwork {
        let cfg = self.experiment_config();
        RoadNetwork::generate(
            cfg.network.num_locations,
            cfg.network.side_length,
            cfg.network.detour_factor,
            child_seed(cfg.seed, 0, "network"),
        )
    }

    fn trucks_for(&self, net: &RoadNetwork) -> Vec<TransportAssignment> {
        let cfg = self.experiment_config();
        let terminals = draw_terminals(
            net,
            cfg.trucks.terminal_subset_size,
            child_seed(cfg.seed, 0, "terminals"),
        );
        generate_trucks(
            net,
            &cfg.trucks,
            cfg.band,
            &terminals,
            child_seed(cfg.seed, 0, "trucks"),
        )
    }

    fn load_network(&mut self, path: &Path) -> Result<RoadNetwork, CliError> {
        self.add_input("network", path);
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(runtime_err)?;
        RoadNetwork::from_text(&text)
            .with_context(|| format!("cannot parse {}", path.display()))
            .map_err(runtime_err)
    }

    fn load_trucks(
        &mut self,
        path: &Path,
        net: &RoadNetwork,
    ) -> Result<Vec<TransportAssignment>, CliError> {
        self.add_input("trucks", path);
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(runtime_err)?;
        assignments_from_text(&text, net, self.experiment_config().band)
            .with_context(|| format!("cannot parse {}", path.display()))
            .map_err(runtime_err)
    }
}

fn gen_network(common: &CommonArgs) -> Result<(), CliError> {
    let session = Session::open(common, "gen-network")?;
    let net = session.network();
    let path = session.write_output("network.txt", &net.to_text())?;
    session.write_manifest("gen-network")?;
    println!(
        "wrote {} ({} nodes, {} directed edges)",
        path.display(),
        net.node_count(),
        net.edge_count()
    );
    Ok(())
}

fn find_truck<'a>(
    trucks: &'a [TransportAssignment],
    id: Option<usize>,
    position: usize,
    role: &str,
) -> Result<&'a TransportAssignment, CliError> {
    match id {
        Some(id) => trucks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| runtime_err(anyhow!("no truck with id {id} for --{role}"))),
        None => trucks
            .get(position)
            .ok_or_else(|| runtime_err(anyhow!("need at least {} trucks", position + 1))),
    }
}

fn plan_pair(
    common: &CommonArgs,
    network: &Path,
    trucks_path: &Path,
    leader: Option<usize>,
    follower: Option<usize>,
) -> Result<(), CliError> {
    let mut session = Session::open(common, "plan-pair")?;
    let net = session.load_network(network)?;
    let trucks = session.load_trucks(trucks_path, &net)?;
    let leader = find_truck(&trucks, leader, 0, "leader")?;
    let follower = find_truck(&trucks, follower, 1, "follower")?;
    if leader.id == follower.id {
        return Err(config_err(anyhow!("leader and follower must differ")));
    }
    let cfg = session.experiment_config();
    match adapted_plan(leader, follower, &cfg.fuel, cfg.band) {
        Some(plan) => {
            let default_fuel = follower.default_fuel(&cfg.fuel);
            println!(
                "plan follower={} leader={}",
                plan.follower_id, plan.leader_id
            );
            println!(
                "  delta_d_start={} delta_d_end={}",
                plan.delta_d_start, plan.delta_d_end
            );
            println!(
                "  v_merge={} v_platoon={} v_split={}",
                plan.v_merge, plan.v_platoon, plan.v_split
            );
            println!("  t_merge={} t_split={}", plan.t_merge, plan.t_split);
            println!(
                "  merge_pos=(edge {}, offset {}) split_pos=(edge {}, offset {})",
                plan.merge_pos.edge_index,
                plan.merge_pos.offset,
                plan.split_pos.edge_index,
                plan.split_pos.offset
            );
            println!("  d_merge={} d_tail={}", plan.d_merge, plan.d_tail);
            println!(
                "  fuel_adapted={} fuel_default={} saving={}",
                plan.fuel_adapted,
                default_fuel,
                default_fuel - plan.fuel_adapted
            );
        }
        None => println!(
            "no feasible fuel-saving plan for follower={} leader={}",
            follower.id, leader.id
        ),
    }
    session.write_manifest("plan-pair")?;
    Ok(())
}

fn obtain_network_and_trucks(
    session: &mut Session,
    network: Option<&Path>,
    trucks: Option<&Path>,
) -> Result<(RoadNetwork, Vec<TransportAssignment>), CliError> {
    let net = match network {
        Some(path) => session.load_network(path)?,
        None => session.network(),
    };
    let trucks = match trucks {
        Some(path) => session.load_trucks(path, &net)?,
        None => session.trucks_for(&net),
    };
    Ok((net, trucks))
}

fn build_graph(
    common: &CommonArgs,
    network: Option<&Path>,
    trucks: Option<&Path>,
) -> Result<(), CliError> {
    let mut session = Session::open(common, "build-graph")?;
    let (net, fleet) = obtain_network_and_trucks(&mut session, network, trucks)?;
    let cfg = session.experiment_config();
    let graph = CoordinationGraph::build(&fleet, &cfg.fuel, cfg.band);
    let graph_path = session.write_output("graph.txt", &graph.to_text())?;
    if network.is_none() {
        session.write_output("network.txt", &net.to_text())?;
    }
    if trucks.is_none() {
        session.write_output("trucks.txt", &assignments_to_text(&fleet))?;
    }
    session.write_manifest("build-graph")?;
    println!(
        "wrote {} ({} trucks, {} coordination edges)",
        graph_path.display(),
        fleet.len(),
        graph.num_edges()
    );
    Ok(())
}

fn cluster(
    common: &CommonArgs,
    network: Option<&Path>,
    trucks: Option<&Path>,
    variant: &str,
    trace: bool,
) -> Result<(), CliError> {
    let mut session = Session::open(common, "cluster")?;
    let (_, trucks) = obtain_network_and_trucks(&mut session, network, trucks)?;
    let cfg = session.experiment_config();
    let mut clustering: ClusteringConfig = config::parse_variant(
        variant,
        session
            .resolved
            .get("clustering.rho_l")
            .unwrap()
            .parse()
            .unwrap(),
        session
            .resolved
            .get("clustering.max_iterations")
            .unwrap()
            .parse()
            .unwrap(),
    )
    .map_err(config_err)?;
    clustering.seed = child_seed(cfg.seed, 0, "cluster");
    let graph = CoordinationGraph::build(&trucks, &cfg.fuel, cfg.band);
    let (result, steps) = run_with_trace(&graph, &clustering);
    if trace {
        for step in &steps {
            println!(
                "iter {} {} {} {}",
                step.iteration, step.node, step.delta_u, step.objective
            );
        }
    }
    let metrics = evaluate_variant(&graph, &result, &trucks, &cfg.fuel);
    println!(
        "variant={} leaders={} objective={} iterations={} termination={} relative_saving={}",
        clustering.variant_name(),
        result.leaders.len(),
        result.objective,
        result.iterations,
        result.termination,
        metrics.relative_saving
    );
    println!(
        "leader ids: {}",
        result
            .leaders
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    session.write_manifest("cluster")?;
    Ok(())
}

fn experiment(common: &CommonArgs) -> Result<(), CliError> {
    let session = Session::open(common, "experiment")?;
    let rows = run_experiment(session.experiment_config()).map_err(config_err)?;
    write_row_outputs(&session, &rows, "experiment")?;
    Ok(())
}

fn sweep(common: &CommonArgs) -> Result<(), CliError> {
    let session = Session::open(common, "sweep")?;
    let base = session.experiment_config();
    let mut rows: Vec<RunRow> = Vec::new();
    match (&session.config.sweep_k, &session.config.sweep_band_widths) {
        (Some(ks), None) => {
            for &k in ks {
                let mut point = base.clone();
                point.trucks.count = k;
                point.validate().map_err(config_err)?;
                rows.extend(run_experiment(&point).map_err(config_err)?);
            }
        }
        (None, Some(widths)) => {
            for &width in widths {
                let mut point = base.clone();
                let nominal = base.trucks.nominal_speed;
                point.band = platoon_core::trucking::SpeedBand::new(
                    nominal - width / 2.0,
                    nominal + width / 2.0,
                )
                .map_err(|e| config_err(anyhow!("sweep.band_widths: {e}")))?;
                point.validate().map_err(config_err)?;
                rows.extend(run_experiment(&point).map_err(config_err)?);
            }
        }
        (Some(_), Some(_)) => {
            return Err(config_err(anyhow!(
                "set exactly one of sweep.k and sweep.band_widths, not both"
            )))
        }
        (None, None) => {
            return Err(config_err(anyhow!(
                "sweep needs sweep.k or sweep.band_widths in the config"
            )))
        }
    }
    write_row_outputs(&session, &rows, "sweep")?;
    Ok(())
}

fn write_row_outputs(session: &Session, rows: &[RunRow], prefix: &str) -> Result<(), CliError> {
    let rows_path = session.write_output(&format!("{prefix}_rows.csv"), &rows_to_csv(rows))?;
    let agg = aggregate(rows);
    let agg_path =
        session.write_output(&format!("{prefix}_aggregate.csv"), &aggregate_to_csv(&agg))?;
    session.write_manifest(prefix)?;
    println!(
        "wrote {} ({} rows) and {} ({} groups)",
        rows_path.display(),
        rows.len(),
        agg_path.display(),
        agg.len()
    );
    Ok(())
}
