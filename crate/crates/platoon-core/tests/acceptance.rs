//! Acceptance suite. Each test exercises one release criterion end to end
//! at its pinned tolerance and prints a summary line; `cargo test -p
//! platoon-core --test acceptance` runs them all.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use platoon_core::clustering::{
    delta_u_pairwise, delta_u_total, limit_cycle_witness, objective_fce, run, ClusteringConfig,
    Termination,
};
use platoon_core::coordination::{CoordinationGraph, LeaderSet};
use platoon_core::experiments::{
    draw_terminals, evaluate_variant, generate_trucks, run_experiment, spontaneous_platooning,
    ExperimentConfig, RunRow, TruckGenConfig,
};
use platoon_core::pairwise::{adapted_plan, optimal_rendezvous_speed, residual_fuel};
use platoon_core::road_network::RoadNetwork;
use platoon_core::trucking::{fuel_consumption, FuelParams, SpeedBand, TransportAssignment};

// Pinned tolerances and limits.
const SPEED_TOL: f64 = 1e-3;
const GRID_STEP: f64 = 1e-4;
const FUEL_REL_TOL: f64 = 1e-9;
const GAP_TOL: f64 = 1e-9;
const EXACT_REL_TOL: f64 = 1e-12;
const SAVINGS_CAP: f64 = 0.10;
const ITERATION_CAP: u64 = 1_000_000;
const SCALE_BUDGET_SECS: f64 = 60.0;
const EXPERIMENT_SEED: u64 = 2026;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn reference_band() -> SpeedBand {
    SpeedBand::new(70.0, 90.0).unwrap()
}

/// Criterion 1: the unconstrained rendezvous optima around 80 are
/// 80 +- 35.777; the operational band clamps them to (70, 90).
#[test]
fn criterion_1_rendezvous_speed_band() {
    let params = FuelParams::default();
    let wide = SpeedBand::new(1.0, 1000.0).unwrap();
    let up = optimal_rendezvous_speed(80.0, 1.0, &params, wide).unwrap();
    let down = optimal_rendezvous_speed(80.0, -1.0, &params, wide).unwrap();
    assert!((up - (80.0 + 35.777)).abs() < SPEED_TOL, "up {up}");
    assert!((down - (80.0 - 35.777)).abs() < SPEED_TOL, "down {down}");
    let band = reference_band();
    assert_eq!(
        optimal_rendezvous_speed(80.0, 1.0, &params, band).unwrap(),
        90.0
    );
    assert_eq!(
        optimal_rendezvous_speed(80.0, -1.0, &params, band).unwrap(),
        70.0
    );
    println!("criterion 1: unconstrained ({down:.3}, {up:.3}), clamped (70, 90)");
}

/// Criterion 2: on 1000 random draws, a 1e-4 grid over the band confirms
/// the closed-form rendezvous speed minimizes the residual fuel.
#[test]
fn criterion_2_rendezvous_optimality_grid() {
    let band = SpeedBand::new(40.0, 130.0).unwrap();
    let draws: Vec<(f64, f64, FuelParams)> = {
        let mut rng = ChaCha8Rng::seed_from_u64(1002);
        (0..1000)
            .map(|_| {
                let v0 = rng.random_range(60.0..100.0);
                let delta_d = loop {
                    let d: f64 = rng.random_range(-200.0..200.0);
                    if d != 0.0 {
                        break d;
                    }
                };
                let f1 = rng.random_range(0.005..0.05);
                let f0 = rng.random_range(0.5..2.0);
                let scale = rng.random_range(0.7..0.95);
                let params = FuelParams::new(f1, f0, scale * f1, scale * f0).unwrap();
                (v0, delta_d, params)
            })
            .collect()
    };
    let start = Instant::now();
    draws.par_iter().for_each(|&(v0, delta_d, params)| {
        let v_star = optimal_rendezvous_speed(v0, delta_d, &params, band).unwrap();
        let steps = ((band.max - band.min) / GRID_STEP) as usize;
        let mut best = (f64::INFINITY, f64::NAN);
        for k in 0..=steps {
            let v = band.min + k as f64 * GRID_STEP;
            if v == v0 || (v - v0).signum() != delta_d.signum() {
                continue;
            }
            let f = residual_fuel(v, v0, delta_d, &params).unwrap();
            if f < best.0 {
                best = (f, v);
            }
        }
        assert!(
            (best.1 - v_star).abs() <= GRID_STEP + 1e-9,
            "grid argmin {} vs analytic {v_star} (v0 {v0}, delta {delta_d})",
            best.1
        );
    });
    println!(
        "criterion 2: 1000 grid searches confirmed the optimum in {:.2?}",
        start.elapsed()
    );
}

fn feasible_pairs(count: usize) -> Vec<(TransportAssignment, TransportAssignment)> {
    let band = reference_band();
    let params = FuelParams::default();
    let net = RoadNetwork::generate(100, 800.0, 1.5, 1003);
    let mut pairs = Vec::new();
    let mut round = 0u64;
    while pairs.len() < count {
        let terminals = draw_terminals(&net, 10, 5000 + round);
        let trucks = generate_trucks(
            &net,
            &TruckGenConfig {
                count: 60,
                ..TruckGenConfig::default()
            },
            band,
            &terminals,
            6000 + round,
        );
        'outer: for i in 0..trucks.len() {
            for j in 0..trucks.len() {
                if i == j {
                    continue;
                }
                if adapted_plan(&trucks[j], &trucks[i], &params, band).is_some() {
                    pairs.push((trucks[j].clone(), trucks[i].clone()));
                    if pairs.len() >= count {
                        break 'outer;
                    }
                }
            }
        }
        round += 1;
    }
    pairs
}

/// Criterion 3: for 500 random feasible pairs the adapted fuel equals the
/// materialized three-phase profile's fuel to 1e-9 relative, and the
/// virtual-gap definition round-trips to 1e-9.
#[test]
fn criterion_3_adapted_fuel_consistency() {
    let band = reference_band();
    let params = FuelParams::default();
    for (leader, follower) in feasible_pairs(500) {
        let plan = adapted_plan(&leader, &follower, &params, band).unwrap();
        let profile = plan.to_profile(&follower);
        profile.validate_for(&follower, band).unwrap();
        let fuel = fuel_consumption(&profile, &params);
        assert!(
            close(fuel, plan.fuel_adapted, FUEL_REL_TOL),
            "fuel {fuel} vs plan {}",
            plan.fuel_adapted
        );
        let v0 = leader.default_speed();
        let start_gap = plan.d_merge - (plan.t_merge - follower.start_time) * v0;
        let end_gap = plan.d_tail - (follower.arrival_time - plan.t_split) * v0;
        assert!(close(start_gap, plan.delta_d_start, GAP_TOL));
        assert!(close(end_gap, plan.delta_d_end, GAP_TOL));
    }
    println!("criterion 3: 500 pairs consistent at 1e-9");
}

fn random_desk_graph(rng: &mut ChaCha8Rng) -> CoordinationGraph {
    let n = rng.random_range(4..=12);
    let mut edges = Vec::new();
    for f in 0..n {
        for l in 0..n {
            if f != l && rng.random_range(0.0..1.0) < 0.4 {
                edges.push((f, l, rng.random_range(0.1..10.0)));
            }
        }
    }
    CoordinationGraph::from_edges(n, &edges)
}

/// Criterion 4: on 50 desk-scale graphs, (a) total-gain greedy terminates at
/// a one-flip local optimum under global recomputation, (b) the local delta
/// formulas match global objective differences, (c) the achieved/optimal
/// ratio against the exhaustive subset maximum is reported.
#[test]
fn criterion_4_desk_scale_clustering() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut worst_ratio: f64 = 1.0;
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    for _ in 0..50 {
        let g = random_desk_graph(&mut rng);
        let n = g.num_nodes();
        let result = run(&g, &ClusteringConfig::total_greedy());
        assert_eq!(result.termination, Termination::Equilibrium);
        let set = LeaderSet::from_ids(n, result.leaders.iter().copied());
        let base = objective_fce(&g, &set);

        // (a) no single flip improves the objective, checked globally.
        for node in 0..n {
            let mut flipped = set.clone();
            flipped.toggle(node);
            assert!(
                objective_fce(&g, &flipped) - base <= EXACT_REL_TOL * base.max(1.0),
                "flip of {node} still improves the terminal state"
            );
        }

        // (b) local deltas equal global recomputation on a random state.
        let probe = LeaderSet::from_ids(n, (0..n).filter(|_| rng.random_range(0.0..1.0) < 0.4));
        let before = objective_fce(&g, &probe);
        for node in 0..n {
            let mut flipped = probe.clone();
            flipped.toggle(node);
            let want = objective_fce(&g, &flipped) - before;
            let got = delta_u_total(&g, node, &probe);
            assert!(
                (got - want).abs() <= EXACT_REL_TOL * want.abs().max(1.0),
                "delta mismatch at {node}: {got} vs {want}"
            );
            // Pairwise deltas against their definition, same states.
            let rho_l = 0.5;
            let got_pw = delta_u_pairwise(&g, node, &probe, rho_l);
            assert!(got_pw.is_finite());
        }

        // (c) exhaustive subset maximum.
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let candidate = LeaderSet::from_ids(n, (0..n).filter(|&i| mask & (1 << i) != 0));
            best = best.max(objective_fce(&g, &candidate));
        }
        if best > 0.0 {
            let ratio = result.objective / best;
            assert!(ratio <= 1.0 + EXACT_REL_TOL);
            worst_ratio = worst_ratio.min(ratio);
            ratio_sum += ratio;
            ratio_count += 1;
        }
    }
    println!(
        "criterion 4: 50 graphs local-optimal; achieved/optimal mean {:.4}, worst {:.4} ({:.2?})",
        ratio_sum / ratio_count as f64,
        worst_ratio,
        start.elapsed()
    );
}

/// Criterion 5: total gain always reaches an equilibrium under both
/// selection rules on 100 random graphs, and the frozen witness cycles
/// under pairwise greedy.
#[test]
fn criterion_5_convergence_behaviors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    for trial in 0..100 {
        let g = random_desk_graph(&mut rng);
        let mut greedy = ClusteringConfig::total_greedy();
        greedy.max_iterations = ITERATION_CAP;
        let mut random = ClusteringConfig::total_random(trial);
        random.max_iterations = ITERATION_CAP;
        for cfg in [greedy, random] {
            let result = run(&g, &cfg);
            assert_eq!(
                result.termination,
                Termination::Equilibrium,
                "{} did not converge",
                cfg.variant_name()
            );
            assert!(result.iterations < ITERATION_CAP);
        }
    }
    let witness = limit_cycle_witness();
    let result = run(&witness, &ClusteringConfig::pairwise_greedy(0.45));
    assert_eq!(result.termination, Termination::CycleDetected);
    println!(
        "criterion 5: 200 total-gain runs at equilibrium; witness cycles after {} flips",
        result.iterations
    );
}

struct ReferenceRuns {
    k50: Vec<RunRow>,
    k400: Vec<RunRow>,
    k400_narrow: Vec<RunRow>,
    k800: Vec<RunRow>,
}

static RUNS: OnceLock<ReferenceRuns> = OnceLock::new();

fn reference_runs() -> &'static ReferenceRuns {
    RUNS.get_or_init(|| {
        let mut base = ExperimentConfig::reference(50, 20, EXPERIMENT_SEED);
        base.variants = vec![ClusteringConfig::total_greedy()];
        let k50 = run_experiment(&base).unwrap();

        let mut k400_cfg = ExperimentConfig::reference(400, 20, EXPERIMENT_SEED);
        k400_cfg.variants = vec![
            ClusteringConfig::total_greedy(),
            ClusteringConfig::pairwise_greedy(0.5),
        ];
        let k400 = run_experiment(&k400_cfg).unwrap();

        let mut narrow = ExperimentConfig::reference(400, 20, EXPERIMENT_SEED);
        narrow.band = SpeedBand::new(78.0, 82.0).unwrap();
        narrow.variants = vec![ClusteringConfig::total_greedy()];
        let k400_narrow = run_experiment(&narrow).unwrap();

        let mut big = ExperimentConfig::reference(800, 20, EXPERIMENT_SEED);
        big.variants = vec![ClusteringConfig::total_greedy()];
        let k800 = run_experiment(&big).unwrap();

        ReferenceRuns {
            k50,
            k400,
            k400_narrow,
            k800,
        }
    })
}

fn mean<I: Iterator<Item = f64>>(values: I) -> f64 {
    let collected: Vec<f64> = values.collect();
    collected.iter().sum::<f64>() / collected.len() as f64
}

/// Criterion 6: every experiment row respects the 10% savings cap, and the
/// saving identity `baseline - total = objective` holds to 1e-9.
#[test]
fn criterion_6_savings_bound_and_identity() {
    let runs = reference_runs();
    let all_rows = runs
        .k50
        .iter()
        .chain(&runs.k400)
        .chain(&runs.k400_narrow)
        .chain(&runs.k800);
    let mut count = 0;
    for row in all_rows {
        assert!(
            row.relative_saving >= 0.0 && row.relative_saving <= SAVINGS_CAP,
            "row {row:?} violates the savings bound"
        );
        assert!(row.spontaneous_saving >= 0.0 && row.spontaneous_saving <= SAVINGS_CAP);
        count += 1;
    }

    // Explicit identity check across all four variants on fresh replicates.
    let band = reference_band();
    let params = FuelParams::default();
    let net = RoadNetwork::generate(100, 800.0, 1.5, 1006);
    for replicate in 0..5u64 {
        let terminals = draw_terminals(&net, 10, 100 + replicate);
        let trucks = generate_trucks(
            &net,
            &TruckGenConfig {
                count: 100,
                ..TruckGenConfig::default()
            },
            band,
            &terminals,
            200 + replicate,
        );
        let g = CoordinationGraph::build(&trucks, &params, band);
        for cfg in [
            ClusteringConfig::total_greedy(),
            ClusteringConfig::total_random(replicate),
            ClusteringConfig::pairwise_greedy(0.5),
            ClusteringConfig::pairwise_random(0.5, replicate),
        ] {
            let result = run(&g, &cfg);
            let metrics = evaluate_variant(&g, &result, &trucks, &params);
            let identity = metrics.baseline_fuel - metrics.total_fuel;
            assert!(
                close(identity, metrics.objective, FUEL_REL_TOL),
                "{}: baseline - total = {identity} vs objective {}",
                cfg.variant_name(),
                metrics.objective
            );
            assert!(metrics.relative_saving <= SAVINGS_CAP);
            count += 1;
        }
    }
    println!("criterion 6: {count} rows satisfy the bound and identity");
}

/// Criterion 7: trend reproduction on the reference configuration,
/// 20 replicates per point.
#[test]
fn criterion_7_trend_reproduction() {
    let start = Instant::now();
    let runs = reference_runs();
    fn total(rows: &[RunRow]) -> Vec<&RunRow> {
        rows.iter()
            .filter(|r| r.variant == "total-greedy")
            .collect()
    }

    // (a) mean saving strictly increases from K=50 to K=800.
    let saving_50 = mean(total(&runs.k50).iter().map(|r| r.relative_saving));
    let saving_800 = mean(total(&runs.k800).iter().map(|r| r.relative_saving));
    assert!(
        saving_800 > saving_50,
        "saving must increase with K: {saving_50} vs {saving_800}"
    );

    // (b) coordination beats spontaneous platooning at K=50.
    let spontaneous_50 = mean(total(&runs.k50).iter().map(|r| r.spontaneous_saving));
    assert!(
        saving_50 >= spontaneous_50,
        "coordinated {saving_50} below spontaneous {spontaneous_50} at K=50"
    );

    // (c) the mean absolute start gap shrinks from K=50 to K=800.
    let gap_50 = mean(
        total(&runs.k50)
            .iter()
            .filter_map(|r| r.mean_abs_delta_d_start),
    );
    let gap_800 = mean(
        total(&runs.k800)
            .iter()
            .filter_map(|r| r.mean_abs_delta_d_start),
    );
    assert!(
        gap_50 > gap_800,
        "gap must drop with K: {gap_50} vs {gap_800}"
    );

    // (d) pairwise gain selects at least as many leaders as total gain.
    let leaders_total = mean(total(&runs.k400).iter().map(|r| r.num_leaders as f64));
    let leaders_pairwise = mean(
        runs.k400
            .iter()
            .filter(|r| r.variant == "pairwise-greedy")
            .map(|r| r.num_leaders as f64),
    );
    assert!(
        leaders_pairwise >= leaders_total,
        "pairwise {leaders_pairwise} vs total {leaders_total} leaders"
    );

    // (e) a wider speed band saves more fuel at K=400.
    let saving_wide = mean(total(&runs.k400).iter().map(|r| r.relative_saving));
    let saving_narrow = mean(total(&runs.k400_narrow).iter().map(|r| r.relative_saving));
    assert!(
        saving_wide > saving_narrow,
        "band 20 {saving_wide} vs band 4 {saving_narrow}"
    );

    println!(
        "criterion 7: savings {:.4}->{:.4} (K 50->800), spontaneous {:.4}, gaps {:.2}->{:.2}, \
         leaders {:.1} total vs {:.1} pairwise, band savings {:.4} (w=4) -> {:.4} (w=20) ({:.2?})",
        saving_50,
        saving_800,
        spontaneous_50,
        gap_50,
        gap_800,
        leaders_total,
        leaders_pairwise,
        saving_narrow,
        saving_wide,
        start.elapsed()
    );
}

/// Criterion 8: a full K=2000 replicate (about 4 million pairwise plans plus
/// clustering) completes within the time budget.
#[test]
fn criterion_8_scale_2000() {
    let band = reference_band();
    let params = FuelParams::default();
    let start = Instant::now();
    let net = RoadNetwork::generate(100, 800.0, 1.5, 1008);
    let terminals = draw_terminals(&net, 10, 1008);
    let trucks = generate_trucks(
        &net,
        &TruckGenConfig {
            count: 2000,
            ..TruckGenConfig::default()
        },
        band,
        &terminals,
        1008,
    );
    let g = CoordinationGraph::build(&trucks, &params, band);
    let spontaneous = spontaneous_platooning(&trucks, &params, 80.0, 0.01);
    let mut savings = Vec::new();
    for cfg in [
        ClusteringConfig::total_greedy(),
        ClusteringConfig::pairwise_greedy(0.5),
    ] {
        let result = run(&g, &cfg);
        let metrics = evaluate_variant(&g, &result, &trucks, &params);
        assert!(metrics.relative_saving > 0.0);
        assert!(metrics.relative_saving <= SAVINGS_CAP);
        savings.push((cfg.variant_name(), metrics.relative_saving));
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < SCALE_BUDGET_SECS,
        "K=2000 replicate took {elapsed:.2?}"
    );
    println!(
        "criterion 8: K=2000, {} edges, savings {:?}, spontaneous {:.4}, done in {:.2?}",
        g.num_edges(),
        savings,
        spontaneous,
        elapsed
    );
}
