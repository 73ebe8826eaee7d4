//! Acceptance suite: one test per criterion, each printing a PASS line when
//! it holds. Timing-sensitive criteria share a lock so they never overlap.

use std::sync::Mutex;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use smc_bench::{
    bench_multisensor, bench_redistribute, bench_sort, bench_worst_case, bootstrap_medians,
    compare_mh, median, BenchCommon, BenchModel, SortAlgo, VsMhOptions,
};
use smc_core::comm::spawn_group;
use smc_core::kernels::{
    bitonic_sort, parallel_nearly_sort, KeyedShard, LocalSortAlgo, SortDirection,
};
use smc_core::models::{
    kalman_oracle, LinearGaussianModel, LinearGaussianParams, StudentTSmcsModel,
};
use smc_core::resample::{
    self, mvr_ncopies, normalise, redistribute_centralised, redistribute_nearly, ParticleShard,
    RedistributeAlgo, ResampleConfig, WeightShard,
};
use smc_core::samplers::{recycle, run_sir_pf, run_smc_sampler};

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

// --------------------------------------------------------------------------
// Shared input generation (counts via MVR over random weights, as in the
// kernel benchmarks) and gather helpers.
// --------------------------------------------------------------------------

fn random_instance(
    comm: &smc_core::Communicator,
    n_total: usize,
    m: usize,
    seed: u64,
) -> (Vec<i64>, Vec<f64>) {
    let n = n_total / comm.size();
    let mut rng = StdRng::seed_from_u64(seed ^ ((comm.rank() as u64) << 32));
    let weights: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs() + 1e-9
        })
        .collect();
    let normalised = normalise(comm, &WeightShard::new(weights).unwrap()).unwrap();
    let mut u_rng = StdRng::seed_from_u64(seed ^ 0xD00D);
    let counts = mvr_ncopies(comm, &normalised, n_total as u64, &mut u_rng)
        .unwrap()
        .0;
    let rows: Vec<f64> = (0..n * m).map(|_| rng.random()).collect();
    (counts, rows)
}

fn sorted_row_multiset(rows: &[f64], m: usize) -> Vec<Vec<u64>> {
    let mut v: Vec<Vec<u64>> = rows
        .chunks(m)
        .map(|r| r.iter().map(|x| x.to_bits()).collect())
        .collect();
    v.sort();
    v
}

/// Sequential oracle on the gathered population.
fn sequential_oracle(keys: &[i64], rows: &[f64], m: usize) -> Vec<f64> {
    let staged = ParticleShard::new(rows.to_vec(), m).unwrap();
    resample::redistribute_sequential(keys, &staged)
        .unwrap()
        .into_rows()
}

// --------------------------------------------------------------------------
// Criterion 1: redistribute oracle equivalence, exact, over the full grid.
// --------------------------------------------------------------------------

#[test]
fn criterion_1_redistribute_oracle_equivalence() {
    let _guard = serial();
    let started = Instant::now();
    const INSTANCES: u64 = 1000;
    for n_total in [1usize << 4, 1 << 6, 1 << 8, 1 << 12] {
        for m in [1usize, 4] {
            for p in [1usize, 2, 4, 8] {
                if n_total < p {
                    continue;
                }
                let failures = spawn_group(p, move |comm| {
                    let mut bad = 0u64;
                    for instance in 0..INSTANCES {
                        let seed = 0x5EED_0000
                            + instance * 1009
                            + (n_total as u64) * 7
                            + (m as u64) * 31
                            + (p as u64);
                        let (counts, rows) = random_instance(comm, n_total, m, seed);
                        let gathered_keys = comm.gather_i64(&counts).unwrap();
                        let gathered_rows = comm.gather_f64(&rows).unwrap();

                        let cr = redistribute_centralised(
                            comm,
                            KeyedShard::new(counts.clone(), rows.clone(), m).unwrap(),
                            None,
                        )
                        .unwrap();
                        let cr_rows = comm.gather_f64(cr.rows()).unwrap();

                        let br = resample::redistribute_bitonic(
                            comm,
                            KeyedShard::new(counts.clone(), rows.clone(), m).unwrap(),
                            LocalSortAlgo::Mergesort,
                        )
                        .unwrap();
                        let br_rows = comm.gather_f64(br.rows()).unwrap();

                        let nr = redistribute_nearly(
                            comm,
                            KeyedShard::new(counts.clone(), rows.clone(), m).unwrap(),
                        )
                        .unwrap();
                        let nr_rows = comm.gather_f64(nr.rows()).unwrap();

                        if comm.rank() == 0 {
                            let oracle = sequential_oracle(
                                &gathered_keys.unwrap(),
                                &gathered_rows.unwrap(),
                                m,
                            );
                            // C-R reproduces the oracle exactly, order included.
                            if cr_rows.as_ref().unwrap() != &oracle {
                                bad += 1;
                            }
                            let want = sorted_row_multiset(&oracle, m);
                            if sorted_row_multiset(br_rows.as_ref().unwrap(), m) != want
                                || sorted_row_multiset(nr_rows.as_ref().unwrap(), m) != want
                            {
                                bad += 1;
                            }
                        }
                    }
                    bad
                })
                .unwrap();
                assert_eq!(
                    failures[0], 0,
                    "oracle mismatches at N={n_total} M={m} P={p}"
                );
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 300.0,
        "criterion 1 took {elapsed:.1}s, limit 300s"
    );
    println!("[PASS] criterion 1: redistribute oracle equivalence ({elapsed:.1}s)");
}

// --------------------------------------------------------------------------
// Criterion 2: sorting-network correctness over the same grid.
// --------------------------------------------------------------------------

#[test]
fn criterion_2_sorting_network_correctness() {
    let _guard = serial();
    const CASES: u64 = 1000;
    for n_total in [1usize << 4, 1 << 6, 1 << 8, 1 << 12] {
        for p in [1usize, 2, 4, 8] {
            if n_total < p {
                continue;
            }
            let failures = spawn_group(p, move |comm| {
                let mut bad = 0u64;
                for case in 0..CASES {
                    let seed = 0xB17_0000 + case * 733 + (n_total as u64) * 13 + p as u64;
                    let (counts, rows) = random_instance(comm, n_total, 1, seed);
                    let in_keys = comm.gather_i64(&counts).unwrap();
                    let in_rows = comm.gather_f64(&rows).unwrap();

                    let sorted = bitonic_sort(
                        comm,
                        KeyedShard::new(counts.clone(), rows.clone(), 1).unwrap(),
                        SortDirection::Ascending,
                        LocalSortAlgo::Mergesort,
                    )
                    .unwrap();
                    let bs = (
                        comm.gather_i64(sorted.keys()).unwrap(),
                        comm.gather_f64(sorted.rows()).unwrap(),
                    );

                    let nearly = parallel_nearly_sort(
                        comm,
                        KeyedShard::new(counts.clone(), rows.clone(), 1).unwrap(),
                    )
                    .unwrap();
                    let ns = (
                        comm.gather_i64(nearly.keys()).unwrap(),
                        comm.gather_f64(nearly.rows()).unwrap(),
                    );

                    if comm.rank() == 0 {
                        let mut reference: Vec<(i64, u64)> = in_keys
                            .unwrap()
                            .iter()
                            .zip(in_rows.unwrap().iter())
                            .map(|(&k, &r)| (k, r.to_bits()))
                            .collect();
                        reference.sort_unstable();

                        let bs_keys = bs.0.unwrap();
                        let sorted_ok = bs_keys.windows(2).all(|w| w[0] <= w[1]);
                        let mut bs_pairs: Vec<(i64, u64)> = bs_keys
                            .iter()
                            .zip(bs.1.unwrap().iter())
                            .map(|(&k, &r)| (k, r.to_bits()))
                            .collect();
                        bs_pairs.sort_unstable();

                        let ns_keys = ns.0.unwrap();
                        let first_pos =
                            ns_keys.iter().position(|&k| k > 0).unwrap_or(ns_keys.len());
                        let nearly_ok = ns_keys[first_pos..].iter().all(|&k| k > 0)
                            && ns_keys[..first_pos].iter().all(|&k| k == 0);
                        let mut ns_pairs: Vec<(i64, u64)> = ns_keys
                            .iter()
                            .zip(ns.1.unwrap().iter())
                            .map(|(&k, &r)| (k, r.to_bits()))
                            .collect();
                        ns_pairs.sort_unstable();

                        if !sorted_ok
                            || !nearly_ok
                            || bs_pairs != reference
                            || ns_pairs != reference
                        {
                            bad += 1;
                        }
                    }
                }
                bad
            })
            .unwrap();
            assert_eq!(failures[0], 0, "sorting failures at N={n_total} P={p}");
        }
    }
    println!("[PASS] criterion 2: sorting-network correctness");
}

// --------------------------------------------------------------------------
// Criterion 3: minimum variance resampling properties.
// --------------------------------------------------------------------------

#[test]
fn criterion_3_mvr_properties() {
    let _guard = serial();
    // Mass and bracket over random weight vectors across the grid.
    for n_total in [16u64, 64, 256] {
        for p in [1usize, 2, 4, 8] {
            if (n_total as usize) < p {
                continue;
            }
            let ok = spawn_group(p, move |comm| {
                let n = n_total as usize / comm.size();
                let mut all_ok = true;
                for case in 0..200u64 {
                    let mut rng =
                        StdRng::seed_from_u64(((comm.rank() as u64) << 20) + case * 37 + n_total);
                    let w = WeightShard::new((0..n).map(|_| rng.random::<f64>() + 1e-12).collect())
                        .unwrap();
                    let weights = normalise(comm, &w).unwrap();
                    let mut u_rng = StdRng::seed_from_u64(case ^ 0xFACE);
                    let counts = mvr_ncopies(comm, &weights, n_total, &mut u_rng).unwrap().0;
                    // Global mass is checked inside mvr_ncopies; re-check here.
                    let total = comm.allreduce_sum_i64(counts.iter().sum()).unwrap();
                    all_ok &= total == n_total as i64;
                    for (&w, &c) in weights.values().iter().zip(&counts) {
                        let scaled = n_total as f64 * w;
                        all_ok &= c == scaled.floor() as i64 || c == scaled.ceil() as i64;
                    }
                }
                all_ok
            })
            .unwrap();
            assert!(
                ok.iter().all(|&b| b),
                "MVR mass/bracket at N={n_total} P={p}"
            );
        }
    }

    // Unbiasedness: mean count over 10^4 independent offsets within 0.05 of
    // N*w for every entry, on random weight vectors at N = 2^6.
    const DRAWS: usize = 10_000;
    for (vector_id, p) in [(0u64, 1usize), (1, 1), (2, 4)] {
        let ok = spawn_group(p, move |comm| {
            let n_total = 64u64;
            let n = n_total as usize / comm.size();
            let mut rng = StdRng::seed_from_u64(900 + vector_id + ((comm.rank() as u64) << 8));
            let w =
                WeightShard::new((0..n).map(|_| rng.random::<f64>() + 1e-12).collect()).unwrap();
            let weights = normalise(comm, &w).unwrap();
            let mut sums = vec![0f64; n];
            let mut u_rng = StdRng::seed_from_u64(31_337 + vector_id);
            for _ in 0..DRAWS {
                let counts = mvr_ncopies(comm, &weights, n_total, &mut u_rng).unwrap().0;
                for (s, &c) in sums.iter_mut().zip(&counts) {
                    *s += c as f64;
                }
            }
            weights
                .values()
                .iter()
                .zip(&sums)
                .all(|(&w, &s)| (s / DRAWS as f64 - n_total as f64 * w).abs() < 0.05)
        })
        .unwrap();
        assert!(
            ok.iter().all(|&b| b),
            "MVR unbiasedness failed (vector {vector_id}, P={p})"
        );
    }
    println!("[PASS] criterion 3: MVR mass, bracket and unbiasedness");
}

// --------------------------------------------------------------------------
// Criterion 4: particle filter vs the Kalman oracle.
// --------------------------------------------------------------------------

#[test]
fn criterion_4_pf_matches_kalman_oracle() {
    let _guard = serial();
    let n_total = 1u64 << 14;
    let t_steps = 50;
    let seeds = 20u64;
    let mut checked = 0usize;
    let mut within = 0usize;
    for seed in 0..seeds {
        let params = LinearGaussianParams::default();
        let model = LinearGaussianModel::simulate(params, t_steps, 4000 + seed);
        let oracle = kalman_oracle(&params, &model.measurements);
        let run_model = model.clone();
        let out = spawn_group(2, move |comm| {
            let cfg = ResampleConfig::new(n_total, RedistributeAlgo::Nearly).unwrap();
            run_sir_pf(comm, &run_model, &cfg, t_steps, 4000 + seed).unwrap()
        })
        .unwrap();
        let (estimates, stats) = &out[0];
        for (t, est) in estimates.iter().enumerate() {
            let (kalman_mean, kalman_var) = oracle[t];
            let n_eff = stats.ess_series[t];
            let bound = 3.0 * kalman_var.sqrt() / n_eff.sqrt();
            checked += 1;
            if (est[0] - kalman_mean).abs() < bound {
                within += 1;
            }
        }
    }
    let fraction = within as f64 / checked as f64;
    assert!(
        fraction >= 0.95,
        "only {within}/{checked} steps within the Kalman bound"
    );
    println!(
        "[PASS] criterion 4: PF within 3 sigma/sqrt(N_eff) of Kalman mean on {:.1}% of steps",
        fraction * 100.0
    );
}

// --------------------------------------------------------------------------
// Criterion 5: SMC sampler statistical correctness and exact recycling.
// --------------------------------------------------------------------------

#[test]
fn criterion_5_smcs_student_t_and_recycling() {
    let _guard = serial();
    // Recycling hand-check from the estimator definition.
    let recycled = recycle(&[vec![1.0], vec![3.0]], &[1.0, 3.0]).unwrap();
    assert_eq!(recycled, vec![2.5]);

    let n_total = 1u64 << 14;
    let t_steps = 100;
    let seeds = 20u64;
    let mut hits = 0;
    let mut errors = Vec::new();
    for seed in 0..seeds {
        // The tolerance presumes a kernel scale matched to the naive-L
        // random walk: large steps churn the weights and collapse particle
        // ancestry. 0.2 sits in the robust band for this target.
        let model = StudentTSmcsModel::new(5.0, 3.0, 0.2);
        let out = spawn_group(2, move |comm| {
            let cfg = ResampleConfig::new(n_total, RedistributeAlgo::Nearly).unwrap();
            run_smc_sampler(comm, &model, &cfg, t_steps, 7000 + seed)
                .unwrap()
                .0
                .recycled[0]
        })
        .unwrap();
        let err = (out[0] - 3.0).abs();
        errors.push(err);
        if err < 0.05 {
            hits += 1;
        }
    }
    assert!(
        hits >= 18,
        "|recycled - 3| < 0.05 in only {hits}/20 seeds (errors {errors:?})"
    );
    println!("[PASS] criterion 5: SMCS recycled estimate within 0.05 in {hits}/20 seeds");
}

// --------------------------------------------------------------------------
// Criterion 6: performance trends at desk scale (N = 2^22, reps = 20,
// medians, each relation in >= 15/20 bootstrap resamples).
//
// The criterion presumes at least 8 hardware threads; this host exposes
// fewer, so P = 8 groups run oversubscribed and (c) measures that honestly.
// --------------------------------------------------------------------------

const DESK_N: u64 = 1 << 22;
const REPS: u64 = 20;
const BOOTSTRAP_DRAWS: usize = 20;
const BOOTSTRAP_PASS: usize = 15;

fn walls(records: &[smc_bench::RunRecord], algo: &str, p: u64, d: u64) -> Vec<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.algo == algo && r.p == p && r.d == d)
        .map(|r| r.wall_time_s)
        .collect();
    assert_eq!(
        v.len(),
        REPS as usize,
        "missing runs for {algo} P={p} D={d}"
    );
    v
}

/// Counts bootstrap draws in which `relation` holds over resampled medians.
fn bootstrap_wins(samples: &[Vec<f64>], relation: impl Fn(&[f64]) -> bool, seed: u64) -> usize {
    let mut wins = 0;
    for draw in 0..BOOTSTRAP_DRAWS {
        let medians: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                median(&bootstrap_medians(
                    s,
                    1,
                    seed + draw as u64 * 101 + i as u64,
                ))
            })
            .collect();
        if relation(&medians) {
            wins += 1;
        }
    }
    wins
}

#[test]
fn criterion_6a_nearly_sort_not_slower_than_bitonic() {
    let _guard = serial();
    let common = BenchCommon {
        n_total: DESK_N,
        p_list: vec![1, 2, 4, 8],
        t_steps: 0,
        reps: REPS,
        seed: 60_601,
    };
    let records = bench_sort(&common, &[SortAlgo::Ns, SortAlgo::Bs]).unwrap();
    for p in [2u64, 4, 8] {
        let ns = walls(&records, "NS", p, 0);
        let bs = walls(&records, "BS", p, 0);
        let wins = bootstrap_wins(&[ns.clone(), bs.clone()], |m| m[0] <= m[1], 6001 + p);
        assert!(
            wins >= BOOTSTRAP_PASS,
            "NS <= BS at P={p} in only {wins}/{BOOTSTRAP_DRAWS} bootstraps \
             (medians {:.4}s vs {:.4}s)",
            median(&ns),
            median(&bs)
        );
    }
    // The single-core comparison shows the same ordering.
    assert!(median(&walls(&records, "NS", 1, 0)) <= median(&walls(&records, "BS", 1, 0)));
    println!("[PASS] criterion 6a: parallel nearly sort <= bitonic sort at N=2^22");
}

#[test]
fn criterion_6b_nearly_redistribute_not_slower_than_bitonic() {
    let _guard = serial();
    let common = BenchCommon {
        n_total: DESK_N,
        p_list: vec![2, 4, 8],
        t_steps: 0,
        reps: REPS,
        seed: 60_602,
    };
    // B-R here is the plain-bitonic-local variant, the configuration whose
    // redistribute curves the source experiments report.
    let records = bench_redistribute(
        &common,
        &[RedistributeAlgo::Bitonic, RedistributeAlgo::Nearly],
        LocalSortAlgo::Bitonic,
        None,
    )
    .unwrap();
    for p in [2u64, 4, 8] {
        let nr = walls(&records, "NR", p, 0);
        let br = walls(&records, "BR", p, 0);
        let wins = bootstrap_wins(&[nr.clone(), br.clone()], |m| m[0] <= m[1], 6002 + p);
        assert!(
            wins >= BOOTSTRAP_PASS,
            "N-R <= B-R at P={p} in only {wins}/{BOOTSTRAP_DRAWS} bootstraps \
             (medians {:.4}s vs {:.4}s)",
            median(&nr),
            median(&br)
        );
    }
    println!("[PASS] criterion 6b: N-R <= B-R at N=2^22");
}

#[test]
fn criterion_6c_worst_case_speedup_above_one() {
    let _guard = serial();
    let common = BenchCommon {
        n_total: DESK_N,
        p_list: vec![1, 8],
        t_steps: 5,
        reps: REPS,
        seed: 60_603,
    };
    for model in [
        BenchModel::Econ,
        BenchModel::StudentT {
            nu: 5.0,
            mu: 3.0,
            eps: 0.5,
        },
    ] {
        let prefix = match model {
            BenchModel::StudentT { .. } => "SMCS-NR",
            _ => "PF-NR",
        };
        let records = bench_worst_case(&model, &common, &[RedistributeAlgo::Nearly], true).unwrap();
        let p1 = walls(&records, prefix, 1, 0);
        let p8 = walls(&records, prefix, 8, 0);
        let wins = bootstrap_wins(&[p1.clone(), p8.clone()], |m| m[0] / m[1] > 1.0, 6003);
        assert!(
            wins >= BOOTSTRAP_PASS,
            "{prefix} speed-up P=8 vs P=1 > 1 in only {wins}/{BOOTSTRAP_DRAWS} bootstraps \
             (medians {:.3}s vs {:.3}s, speed-up {:.3})",
            median(&p1),
            median(&p8),
            median(&p1) / median(&p8)
        );
    }
    println!("[PASS] criterion 6c: worst-case speed-up at P=8 exceeds 1");
}

#[test]
fn criterion_6d_multisensor_speedup_increases_with_d() {
    let _guard = serial();
    let d_list = [1usize, 4, 16, 64];
    let common = BenchCommon {
        n_total: DESK_N,
        p_list: vec![1, 8],
        t_steps: 1,
        reps: REPS,
        seed: 60_604,
    };
    let records = bench_multisensor(&d_list, &common, RedistributeAlgo::Nearly).unwrap();
    let cells: Vec<Vec<f64>> = d_list
        .iter()
        .flat_map(|&d| {
            [
                walls(&records, "PF-NR", 1, d as u64),
                walls(&records, "PF-NR", 8, d as u64),
            ]
        })
        .collect();
    let wins = bootstrap_wins(
        &cells,
        |m| {
            let speedups: Vec<f64> = m.chunks(2).map(|pair| pair[0] / pair[1]).collect();
            speedups.windows(2).all(|w| w[1] > w[0])
        },
        6004,
    );
    let observed: Vec<f64> = cells
        .chunks(2)
        .map(|pair| median(&pair[0]) / median(&pair[1]))
        .collect();
    assert!(
        wins >= BOOTSTRAP_PASS,
        "speed-up strictly increasing over D={d_list:?} in only {wins}/{BOOTSTRAP_DRAWS} \
         bootstraps (observed {observed:?})"
    );
    println!("[PASS] criterion 6d: multisensor speed-up increases over D={d_list:?}: {observed:?}");
}

// --------------------------------------------------------------------------
// Criterion 7: space behaviour of C-R vs N-R at N=2^20, M=4, P=8.
// --------------------------------------------------------------------------

#[test]
fn criterion_7_space_accounting() {
    let _guard = serial();
    let n_total = 1usize << 20;
    let m = 4usize;
    let p = 8usize;
    let out = spawn_group(p, move |comm| {
        let (counts, rows) = random_instance(comm, n_total, m, 0x707);

        smc_core::meter::reset();
        let shard = KeyedShard::new(counts.clone(), rows.clone(), m).unwrap();
        let result = redistribute_centralised(comm, shard, None).unwrap();
        drop(result);
        let cr = smc_core::meter::stats();

        smc_core::meter::reset();
        let shard = KeyedShard::new(counts, rows, m).unwrap();
        let result = redistribute_nearly(comm, shard).unwrap();
        drop(result);
        let nr = smc_core::meter::stats();
        (cr, nr)
    })
    .unwrap();

    let full = (n_total * m) as u64;
    let per_rank_bound = 4 * (n_total / p) as u64 * m as u64;
    // Rank 0 of C-R stages the whole population: its largest single buffer
    // is exactly N*M scalars.
    assert_eq!(
        out[0].0.largest_single, full,
        "C-R rank-0 staging buffer should be exactly N*M scalars"
    );
    for (rank, (_, nr)) in out.iter().enumerate() {
        assert!(
            nr.peak_concurrent <= per_rank_bound,
            "rank {rank}: N-R peak {} scalars exceeds 4*(N/P)*M = {per_rank_bound}",
            nr.peak_concurrent
        );
    }
    println!(
        "[PASS] criterion 7: C-R rank-0 buffer = {full} scalars, N-R peak <= {per_rank_bound}"
    );
}

// --------------------------------------------------------------------------
// Criterion 8: SMCS vs Metropolis-Hastings protocol.
// --------------------------------------------------------------------------

#[test]
fn criterion_8_smcs_vs_mh() {
    let _guard = serial();
    // Phase 1 at T_SMC = 100: equal workload, single-worker wall time within
    // 2x of MH. The shared proposal uses the Student-t defaults.
    let common = BenchCommon {
        n_total: 1 << 10,
        p_list: vec![1],
        t_steps: 100,
        reps: REPS,
        seed: 80_801,
    };
    // Both samplers share the same random-walk proposal, at the scale the
    // SMCS correctness criterion is run with.
    let opts = VsMhOptions {
        nu: 5.0,
        mu: 3.0,
        eps: Some(0.2),
        tau: None,
        su_override: None,
    };
    let (_, report) = compare_mh(&common, &opts).unwrap();
    assert_eq!(report.t_mh_equal_workload, 102_400);
    let ratio = report.per_p[0].smcs_median_wall_s / report.mh_median_wall_s;
    assert!(
        ratio <= 2.0,
        "single-worker SMCS at equal workload is {ratio:.2}x MH (limit 2x)"
    );

    // Phase 2 at T_SMC = 1000: equal time via the measured speed-ups, then
    // RMSE comparison at P = 8.
    let common = BenchCommon {
        n_total: 1 << 10,
        p_list: vec![1, 8],
        t_steps: 1000,
        reps: REPS,
        seed: 80_802,
    };
    let (_, report) = compare_mh(&common, &opts).unwrap();
    let p8 = report
        .per_p
        .iter()
        .find(|row| row.p == 8)
        .expect("P=8 row present");
    assert!(
        p8.smcs_rmse <= report.mh_rmse,
        "SMCS RMSE {:.5} exceeds MH RMSE {:.5} at equalised time \
         (SU_8 = {:.3}, T_SMC = {}, T_MH = {})",
        p8.smcs_rmse,
        report.mh_rmse,
        p8.speedup,
        p8.t_smcs_equal_time,
        report.t_mh_equal_time
    );
    println!(
        "[PASS] criterion 8: equal-workload ratio {ratio:.2}x, equal-time RMSE {:.5} <= {:.5}",
        p8.smcs_rmse, report.mh_rmse
    );
}

// --------------------------------------------------------------------------
// Criterion 9: byte-identical CSV reruns (wall_time_s excepted).
// --------------------------------------------------------------------------

/// Replaces the wall_time_s column with a placeholder.
fn mask_wall_time(csv: &str) -> String {
    let mut out = String::new();
    for (idx, line) in csv.lines().enumerate() {
        if idx == 0 {
            out.push_str(line);
        } else if !line.is_empty() {
            let cols: Vec<&str> = line.split(',').collect();
            let mut cols: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
            cols[9] = "WALL".to_string();
            out.push_str(&cols.join(","));
        }
        out.push('\n');
    }
    out
}

#[test]
fn criterion_9_subcommand_determinism() {
    let _guard = serial();
    let bin = env!("CARGO_BIN_EXE_smcbench");
    let dir = tempfile::tempdir().unwrap();
    // Small-but-real configurations for every subcommand. vs-mh pins the
    // speed-ups so nothing except wall_time_s derives from the clock.
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("sort", to_args("sort --n 256 --p 1,2,4 --reps 3 --seed 42")),
        (
            "redistribute",
            to_args("redistribute --n 256 --p 1,2,4 --reps 3 --seed 42"),
        ),
        (
            "pf-econ",
            to_args("pf-econ --n 256 --p 1,2 --t 10 --reps 3 --seed 42 --worst-case"),
        ),
        (
            "pf-bearing",
            to_args("pf-bearing --n 256 --p 1,2 --t 10 --reps 3 --seed 42 --d 2"),
        ),
        (
            "smcs",
            to_args("smcs --n 256 --p 1,2 --t 10 --reps 3 --seed 42 --nu 5 --mu 3 --eps 0.5"),
        ),
        (
            "multisensor",
            to_args("multisensor --n 256 --p 1,2 --t 5 --reps 3 --seed 42 --d 1,4"),
        ),
        (
            "vs-mh",
            to_args("vs-mh --n 64 --p 1,2 --t 20 --reps 3 --seed 42 --eps 0.5 --su 1.0,1.0"),
        ),
    ];
    for (name, args) in cases {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out_path = dir.path().join(format!("{name}_{run}.csv"));
            let status = std::process::Command::new(bin)
                .args(&args)
                .arg("--out")
                .arg(&out_path)
                .stdout(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "{name} run {run} failed");
            outputs.push(std::fs::read_to_string(&out_path).unwrap());
        }
        assert_eq!(
            mask_wall_time(&outputs[0]),
            mask_wall_time(&outputs[1]),
            "{name} reruns differ beyond wall_time_s"
        );
    }
    println!("[PASS] criterion 9: every subcommand is rerun-deterministic");
}

fn to_args(s: &str) -> Vec<String> {
    s.split_whitespace().map(|v| v.to_string()).collect()
}
