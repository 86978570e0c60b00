//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values (run with `--nocapture` to see
//! them on success).
//!
//! Criteria 4 and 6 encode aspirational convergence thresholds for the
//! pinned step-size schedule. With innovation weight `0.5/(k+1)` the
//! initial-condition transient of tabular learning decays like
//! `k^(-a(1-gamma))` = `k^(-0.15)`, which after 2e5 steps (about 5e4 visits
//! per pair) still leaves roughly 18% relative error; the 5% targets would
//! need about four orders of magnitude more steps (or a larger `a`, which
//! the `a + N b <= 1` budget spends on consensus instead). The tests state
//! the thresholds anyway and fail honestly; see their output for the
//! measured gap.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use qdlearn::config::{ExperimentConfigFile, PRESET_DESK_SCALE};
use qdlearn::graph::{
    algebraic_connectivity, mean_laplacian, sample_laplacian, spectral_norm_symmetric,
    symmetric_eigenvalues, IidErasure, Topology,
};
use qdlearn::harness::{run_experiment, RunRecord};
use qdlearn::learning::{
    centralized_step, qd_step, update_matrix, AgentQState, CentralizedQState, Transition,
    WeightSchedule,
};
use qdlearn::mdp::{generate_random_model, sample_uniform_action, MdpModel, RandomModelSpec};
use qdlearn::oracle::{apply_g_bar, solve_q_star, QTable};
use qdlearn::rng::{derive_stream, StreamLayout};

fn verdict(number: u32, name: &str, pass: bool, detail: &str) -> bool {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number:02} {name}: {status} — {detail}");
    pass
}

/// The 50-model random suite shared by criteria 1 and 2: sizes up to 4x4,
/// up to 10 agents, discounts cycling {0.3, 0.7, 0.9}.
fn model_suite() -> Vec<MdpModel> {
    let discounts = [0.3, 0.7, 0.9];
    (0..50u64)
        .map(|i| {
            let mut rng = derive_stream(1_000 + i, 2);
            generate_random_model(
                &RandomModelSpec {
                    num_states: (i % 4) as usize + 1,
                    num_actions: ((i / 4) % 4) as usize + 1,
                    num_agents: (i % 10) as usize + 1,
                    cost_mean_range: (0.0, 400.0),
                    cost_noise_std: 0.0,
                    discount: discounts[(i % 3) as usize],
                },
                &mut rng,
            )
            .unwrap()
        })
        .collect()
}

/// Independent long-run oracle: iterates the defining fixed-point formula
/// entry by entry from the raw model data, one million times.
fn brute_force_fixed_point(model: &MdpModel, iterations: u32) -> QTable {
    let (m, u_count, n_agents) = (model.num_states(), model.num_actions(), model.num_agents());
    let mut avg_costs = vec![0.0; m * u_count];
    for i in 0..m {
        for u in 0..u_count {
            let mut total = 0.0;
            for n in 0..n_agents {
                total += model.cost_mean(n, i, u);
            }
            avg_costs[i * u_count + u] = total / n_agents as f64;
        }
    }
    let gamma = model.discount();
    let mut q = vec![0.0; m * u_count];
    let mut next = vec![0.0; m * u_count];
    let mut values = vec![0.0; m];
    for _ in 0..iterations {
        for j in 0..m {
            let mut best = f64::INFINITY;
            for v in 0..u_count {
                best = best.min(q[j * u_count + v]);
            }
            values[j] = best;
        }
        for i in 0..m {
            for u in 0..u_count {
                let mut expect = 0.0;
                for (j, p) in model.kernel_row(i, u).iter().enumerate() {
                    expect += p * values[j];
                }
                next[i * u_count + u] = avg_costs[i * u_count + u] + gamma * expect;
            }
        }
        std::mem::swap(&mut q, &mut next);
    }
    QTable::from_values(m, u_count, q).unwrap()
}

/// The shared 10-seed convergence study behind criteria 4-8: the desk-scale
/// preset under master seeds 0..10.
fn desk_runs() -> &'static [(RunRecord, Duration)] {
    static RUNS: OnceLock<Vec<(RunRecord, Duration)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..10u64)
            .map(|seed| {
                let mut file = ExperimentConfigFile::from_preset(PRESET_DESK_SCALE).unwrap();
                file.master_seed = seed;
                let config = file.to_run_config().unwrap();
                assert_eq!(config.total_steps, 200_000);
                let started = Instant::now();
                let record = run_experiment(&config).unwrap();
                (record, started.elapsed())
            })
            .collect()
    })
}

#[test]
fn acceptance_01_oracle_correctness() {
    let started = Instant::now();
    let mut worst_residual = 0.0_f64;
    let mut worst_gap = 0.0_f64;
    for model in &model_suite() {
        let solution = solve_q_star(model, 1e-10).unwrap();
        worst_residual = worst_residual.max(solution.sup_norm_residual);
        let reference = brute_force_fixed_point(model, 1_000_000);
        worst_gap = worst_gap.max(solution.q_star.sup_norm_diff(&reference));
    }
    let elapsed = started.elapsed();
    let pass = worst_residual <= 1e-10 && worst_gap <= 1e-9 && elapsed < Duration::from_secs(5);
    assert!(verdict(
        1,
        "oracle correctness",
        pass,
        &format!(
            "50 models: residual <= {worst_residual:.3e} (limit 1e-10), \
             brute-force gap <= {worst_gap:.3e} (limit 1e-9), {elapsed:.2?} (limit 5s)"
        ),
    ));
}

#[test]
fn acceptance_02_contraction_property() {
    use rand::Rng;
    let mut violations = 0u32;
    let mut worst_margin = f64::NEG_INFINITY;
    for (idx, model) in model_suite().iter().enumerate() {
        let mut rng = derive_stream(5_000 + idx as u64, 0);
        let entries = model.num_states() * model.num_actions();
        for _ in 0..1_000 {
            let q1 = QTable::from_values(
                model.num_states(),
                model.num_actions(),
                (0..entries).map(|_| rng.gen_range(-500.0..500.0)).collect(),
            )
            .unwrap();
            let q2 = QTable::from_values(
                model.num_states(),
                model.num_actions(),
                (0..entries).map(|_| rng.gen_range(-500.0..500.0)).collect(),
            )
            .unwrap();
            let lhs = apply_g_bar(model, &q1).sup_norm_diff(&apply_g_bar(model, &q2));
            let rhs = model.discount() * q1.sup_norm_diff(&q2);
            // the two sides are reached by different summation orders; at the
            // test's value scale (up to ~1e3) a few ulps of disagreement is
            // rounding, not a contraction violation
            if lhs > rhs + 1e-11 {
                violations += 1;
            }
            worst_margin = worst_margin.max(lhs - rhs);
        }
    }
    let pass = violations == 0;
    assert!(verdict(
        2,
        "operator contraction",
        pass,
        &format!("50 models x 1000 pairs: {violations} violations, worst lhs-rhs = {worst_margin:.3e}"),
    ));
}

#[test]
fn acceptance_03_single_agent_reduction() {
    // one agent, consensus weight identically zero, one shared transition
    // stream: the distributed and centralized recursions must stay
    // bit-identical for 1e5 steps
    let mut gen_rng = derive_stream(77, StreamLayout::default().model_generation);
    let model = generate_random_model(
        &RandomModelSpec {
            num_states: 2,
            num_actions: 2,
            num_agents: 1,
            cost_mean_range: (0.0, 400.0),
            cost_noise_std: 40.0_f64.sqrt(),
            discount: 0.7,
        },
        &mut gen_rng,
    )
    .unwrap();
    let schedule = WeightSchedule {
        a: 0.5,
        b: 0.0,
        tau1: 1.0,
        tau2: 0.2,
        epsilon1: 1.0,
    };
    let topology = Topology::from_edges(1, []).unwrap();
    let failure = IidErasure::new(0.0).unwrap();

    let mut qd = AgentQState::new(1, 2, 2);
    let mut central = CentralizedQState::new(2, 2);
    let mut trajectory = derive_stream(77, 0);
    let mut graph = derive_stream(77, 1);
    let mut costs = derive_stream(77, 3);
    let mut x = 0usize;
    let mut divergence_step = None;
    for t in 0..100_000u64 {
        let action = sample_uniform_action(2, &mut trajectory);
        let cost = model.sample_cost(0, x, action, &mut costs);
        let graph_sample = sample_laplacian(&topology, &failure, &mut graph);
        let next_state = model.sample_next_state(x, action, &mut trajectory);
        let transition = Transition {
            state: x,
            action,
            costs: vec![cost],
            next_state,
        };
        qd_step(&mut qd, &model, &graph_sample, &transition, &schedule);
        centralized_step(&mut central, &model, &transition, &schedule);
        x = next_state;

        let identical = qd
            .table(0)
            .values()
            .iter()
            .zip(central.table().values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !identical && divergence_step.is_none() {
            divergence_step = Some(t);
        }
    }
    let pass = divergence_step.is_none();
    assert!(verdict(
        3,
        "single-agent reduction",
        pass,
        &match divergence_step {
            None => "1e5 steps bit-identical".to_string(),
            Some(t) => format!("first divergence at step {t}"),
        },
    ));
}

#[test]
fn acceptance_04_convergence_to_fixed_point() {
    let runs = desk_runs();
    let mut passing_seeds = 0u32;
    let mut lines = Vec::new();
    let mut runtime_ok = true;
    for (record, elapsed) in runs {
        let scale = record.oracle.q_star.sup_norm();
        let error = record.final_oracle_error_max();
        let ok = error <= 0.05 * scale;
        passing_seeds += u32::from(ok);
        runtime_ok &= *elapsed < Duration::from_secs(60);
        lines.push(format!(
            "seed {}: err {:.2} = {:.1}% of |Q*|={:.1} ({})",
            record.seed,
            error,
            100.0 * error / scale,
            scale,
            if ok { "ok" } else { "above 5%" }
        ));
    }
    println!("{}", lines.join("\n"));
    let pass = passing_seeds >= 9 && runtime_ok;
    assert!(verdict(
        4,
        "convergence to the fixed point",
        pass,
        &format!(
            "{passing_seeds}/10 seeds within 0.05*|Q*| after 2e5 steps (need >= 9); \
             runtime per seed < 60s: {runtime_ok}"
        ),
    ));
}

#[test]
fn acceptance_05_consensus() {
    let runs = desk_runs();
    let mut pass = true;
    let mut worst_rel = 0.0_f64;
    for (record, _) in runs {
        let scale = record.oracle.q_star.sup_norm();
        let final_consensus = record.final_consensus_distance();
        let at_10k = record
            .snapshots
            .iter()
            .find(|s| s.step == 10_000)
            .expect("snapshot at t=1e4")
            .consensus_distance;
        worst_rel = worst_rel.max(final_consensus / scale);
        if final_consensus > 0.01 * scale || final_consensus >= at_10k {
            pass = false;
            println!(
                "seed {}: consensus {final_consensus:.3} vs 1% = {:.3}, at t=1e4 {at_10k:.3}",
                record.seed,
                0.01 * scale
            );
        }
    }
    assert!(verdict(
        5,
        "asymptotic consensus",
        pass,
        &format!(
            "10/10 seeds: final consensus <= 1% of |Q*| (worst {:.3}%) and below its t=1e4 value",
            100.0 * worst_rel
        ),
    ));
}

#[test]
fn acceptance_06_centralized_baseline() {
    let runs = desk_runs();
    let mut passing_seeds = 0u32;
    let mut ratios = Vec::new();
    for (record, _) in runs {
        let scale = record.oracle.q_star.sup_norm();
        let summary = record.summary();
        passing_seeds += u32::from(summary.final_centralized_error <= 0.05 * scale);
        ratios.push(summary.error_ratio_distributed_to_centralized);
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let pass = passing_seeds == 10;
    assert!(verdict(
        6,
        "centralized baseline",
        pass,
        &format!(
            "{passing_seeds}/10 seeds with centralized error <= 5% of |Q*|; \
             distributed/centralized final-error ratio {:.3}..{:.3} (mean {:.3}, recorded)",
            ratios.iter().cloned().fold(f64::INFINITY, f64::min),
            ratios.iter().cloned().fold(0.0, f64::max),
            mean_ratio
        ),
    ));
}

#[test]
fn acceptance_07_boundedness() {
    let runs = desk_runs();
    let mut pass = true;
    let mut worst_fraction = 0.0_f64;
    for (record, _) in runs {
        worst_fraction = worst_fraction.max(record.max_sup_norm / record.boundedness_bound);
        pass &= record.max_sup_norm <= record.boundedness_bound;
    }
    assert!(verdict(
        7,
        "pathwise boundedness",
        pass,
        &format!(
            "max_t |Q_t| <= 2(max mean cost + 4 sigma)/(1-gamma) on all runs; \
             worst usage {:.1}% of the bound",
            100.0 * worst_fraction
        ),
    ));
}

#[test]
fn acceptance_08_martingale_residual() {
    // pool each (agent, pair) accumulator across the 10-seed suite: a
    // systematic bias in the sampled update would survive pooling, while
    // single-run 3-sigma flukes (expected ~1 per 400 cells) wash out
    let runs = desk_runs();
    let cells = 10 * 2 * 2;
    let mut pooled = vec![qdlearn::harness::ResidualStats::default(); cells];
    let mut single_run_outliers = 0u32;
    for (record, _) in runs {
        let stats = record
            .residual_stats
            .as_ref()
            .expect("diagnostic mode enabled");
        assert_eq!(stats.len(), cells);
        for (slot, cell) in pooled.iter_mut().zip(stats) {
            if cell.count >= 10_000 && cell.mean.abs() > 3.0 * cell.standard_error() {
                single_run_outliers += 1;
            }
            *slot = slot.merge(cell);
        }
    }
    let mut checked = 0u32;
    let mut outside = 0u32;
    let mut worst_sigma = 0.0_f64;
    let mut min_count = u64::MAX;
    for cell in &pooled {
        if cell.count >= 10_000 {
            checked += 1;
            min_count = min_count.min(cell.count);
            let sigmas = cell.mean.abs() / cell.standard_error();
            worst_sigma = worst_sigma.max(sigmas);
            if sigmas > 3.0 {
                outside += 1;
            }
        }
    }
    let pass = checked == cells as u32 && outside == 0;
    assert!(verdict(
        8,
        "martingale residual",
        pass,
        &format!(
            "{checked} pooled (agent, pair) running means with >= 1e4 visits (min {min_count}); \
             {outside} outside 3 standard errors, worst {worst_sigma:.2} SE \
             ({single_run_outliers}/400 per-run cells past 3 SE, consistent with the null rate)"
        ),
    ));
}

#[test]
fn acceptance_09_laplacian_suite() {
    let mut rng = derive_stream(91, 1);
    let mut pass = true;
    let mut detail = Vec::new();

    // sampled Laplacian invariants across topologies and erasure rates
    for (topo, p) in [
        (Topology::ring(10, 1).unwrap(), 0.5),
        (Topology::ring(40, 2).unwrap(), 0.5),
        (Topology::ring(7, 3).unwrap(), 0.2),
    ] {
        let failure = IidErasure::new(p).unwrap();
        let n = topo.num_agents();
        for _ in 0..1_000 {
            let sample = sample_laplacian(&topo, &failure, &mut rng);
            let m = &sample.matrix;
            let symmetric = m == &m.transpose();
            let zero_rows = (0..n).all(|r| (0..n).map(|c| m[(r, c)]).sum::<f64>().abs() < 1e-12);
            let psd = symmetric_eigenvalues(m)[0] >= -1e-9;
            if !(symmetric && zero_rows && psd) {
                pass = false;
                detail.push(format!("invariant violation on N={n}, p={p}"));
                break;
            }
        }
    }

    // Monte-Carlo mean against exact thinning, three standard errors
    let topo = Topology::ring(6, 1).unwrap();
    let p = 0.5;
    let failure = IidErasure::new(p).unwrap();
    let rounds = 20_000usize;
    let mut acc = nalgebra::DMatrix::<f64>::zeros(6, 6);
    for _ in 0..rounds {
        acc += sample_laplacian(&topo, &failure, &mut rng).matrix;
    }
    acc /= rounds as f64;
    let exact = mean_laplacian(&topo, &failure);
    // each off-diagonal entry averages Bernoulli(1-p) draws
    let sigma = (p * (1.0 - p) / rounds as f64).sqrt();
    let mut worst_se = 0.0_f64;
    for r in 0..6 {
        for c in 0..6 {
            if r != c && topo.edges().contains(&((r.min(c)), (r.max(c)))) {
                worst_se = worst_se.max((acc[(r, c)] - exact[(r, c)]).abs() / sigma);
            }
        }
    }
    if worst_se > 3.0 {
        pass = false;
        detail.push(format!("Monte-Carlo mean off by {worst_se:.2} SE"));
    }

    // closed-form eigenvalues
    let ring4 = Topology::ring(4, 1).unwrap();
    let lambda2 = algebraic_connectivity(&ring4.full_laplacian());
    if (lambda2 - 2.0).abs() > 1e-9 {
        pass = false;
        detail.push(format!("ring(4,1) lambda2 = {lambda2}"));
    }
    let mut edges: Vec<(usize, usize)> = Topology::ring(5, 1).unwrap().edges().to_vec();
    edges.extend(edges.clone().iter().map(|(a, b)| (a + 5, b + 5)));
    let split = Topology::from_edges(10, edges).unwrap();
    let lambda2_split = algebraic_connectivity(&split.full_laplacian());
    if lambda2_split.abs() > 1e-9 {
        pass = false;
        detail.push(format!("two-component lambda2 = {lambda2_split}"));
    }

    assert!(verdict(
        9,
        "Laplacian sampling suite",
        pass,
        &if detail.is_empty() {
            format!(
                "3000 samples symmetric/PSD/zero-row-sum; mean within {worst_se:.2} SE; \
                 lambda2(ring4) = {lambda2:.12}; lambda2(two rings) = {lambda2_split:.2e}"
            )
        } else {
            detail.join("; ")
        },
    ));
}

#[test]
fn acceptance_10_update_matrix_safety() {
    // replay the desk-scale trajectory/graph streams for 1e5 steps and check
    // every realized update matrix entrywise and spectrally
    let mut file = ExperimentConfigFile::from_preset(PRESET_DESK_SCALE).unwrap();
    file.master_seed = 0;
    let config = file.to_run_config().unwrap();
    let model = &config.model;
    assert!(config.schedule.update_matrix_nonneg_guaranteed(10));

    let mut trajectory = derive_stream(0, config.streams.trajectory);
    let mut graph = derive_stream(0, config.streams.graph);
    let mut visit_counts = [0u64; 4];
    let mut x = 0usize;
    let mut min_entry = f64::INFINITY;
    let mut max_norm = 0.0_f64;
    for _ in 0..100_000u64 {
        let action = sample_uniform_action(2, &mut trajectory);
        let sample = sample_laplacian(&config.topology, &config.failure, &mut graph);
        let next_state = model.sample_next_state(x, action, &mut trajectory);
        let k = visit_counts[x * 2 + action];
        let m = update_matrix(&sample, config.schedule.alpha(k), config.schedule.beta(k));
        min_entry = min_entry.min(m.iter().cloned().fold(f64::INFINITY, f64::min));
        max_norm = max_norm.max(spectral_norm_symmetric(&m));
        visit_counts[x * 2 + action] += 1;
        x = next_state;
    }
    let pass = min_entry >= -1e-12 && max_norm <= 1.0 + 1e-12;
    assert!(verdict(
        10,
        "update-matrix safety",
        pass,
        &format!("1e5 steps: min entry {min_entry:.3e} (>= -1e-12), max spectral norm {max_norm:.12} (<= 1+1e-12)"),
    ));
}

#[test]
fn acceptance_11_disconnected_negative_control() {
    // two disjoint 5-rings, erasure as usual, waiver set: the components
    // settle on different fixed points, so network consensus must NOT occur.
    // Master seed pinned to 4; the check is deterministic.
    let mut file = ExperimentConfigFile::from_preset(PRESET_DESK_SCALE).unwrap();
    file.master_seed = 4;
    file.waivers.allow_disconnected = true;
    let mut config = file.to_run_config().unwrap();
    let mut edges: Vec<(usize, usize)> = Topology::ring(5, 1).unwrap().edges().to_vec();
    edges.extend(edges.clone().iter().map(|(a, b)| (a + 5, b + 5)));
    config.topology = Topology::from_edges(10, edges).unwrap();

    let record = run_experiment(&config).unwrap();
    let scale = record.oracle.q_star.sup_norm();
    let threshold = 0.1 * scale;
    let floor = record
        .snapshots
        .iter()
        .filter(|s| s.step >= 10_000)
        .map(|s| s.consensus_distance)
        .fold(f64::INFINITY, f64::min);
    let final_consensus = record.final_consensus_distance();
    let pass = final_consensus >= threshold && floor >= threshold;
    assert!(verdict(
        11,
        "disconnected negative control",
        pass,
        &format!(
            "consensus distance stays >= 0.1|Q*| = {threshold:.2} from t=1e4 on \
             (floor {floor:.2}, final {final_consensus:.2})"
        ),
    ));
}

#[test]
fn acceptance_12_cli_determinism() {
    use std::process::Command;
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = Command::new(env!("CARGO_BIN_EXE_qdlearn"))
            .args([
                "run",
                "--preset",
                "desk-scale",
                "--seed",
                "3",
                "--steps",
                "20000",
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap();
        assert!(output.status.success());
    }
    let csv_a = std::fs::read(out_a.join("run.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("run.csv")).unwrap();
    let json_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let json_b = std::fs::read(out_b.join("summary.json")).unwrap();
    let pass = csv_a == csv_b && json_a == json_b;
    assert!(verdict(
        12,
        "run determinism",
        pass,
        &format!(
            "identical config+seed: CSV bytes equal = {}, summary bytes equal = {}",
            csv_a == csv_b,
            json_a == json_b
        ),
    ));
}
