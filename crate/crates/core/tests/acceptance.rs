//! End-to-end acceptance checks. Each test prints one `C<n> PASS|FAIL` line
//! (written straight to stdout so it shows even when output is captured).

use std::io::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use iterml::algorithms::synthetic::{block_correlated_lasso, planted_lasso, zipf_corpus};
use iterml::algorithms::{
    gibbs_token_update, lda_log_likelihood, mlr_loss, mlr_sufficient_factors, Corpus, LassoData,
    LassoProgram, LdaProgram, MlrData, MlrProgram,
};
use iterml::engine::{
    run_model_parallel, run_sequential, FactorList, IcProgram, Payload, StoppingCriterion,
    UpdateDelta,
};
use iterml::fabric::{
    broadcast, broadcast_round, check_inflight, decode_delta, encode_delta, Codec, CodecPair,
    Shape, Topology,
};
use iterml::harness::{run_experiment, ExperimentConfig};
use iterml::matrix::{dot, DenseMatrix};
use iterml::sched::{
    build_rotation_plan, FixedBlocks, RandomParallel, RotationSchedule, RoundRobin, SapConfig,
    SapScheduler, ShardSchedule,
};
use iterml::sim::{
    inject_straggler, random_stragglers, replay_all, rotating_straggler, run_simulation, SimConfig, SimOutput,
};
use iterml::store::{assert_staleness_invariants, StalenessConfig};
use iterml::trace::EventKind;

fn report(id: u32, pass: bool, detail: &str) {
    let line = format!("C{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn lasso_instance(n: usize, m: usize, k: usize, seed: u64) -> (LassoData, LassoProgram) {
    let p = planted_lasso(n, m, k, 0.1, seed);
    let d = LassoData::new(p.x, p.y).unwrap();
    let prog = LassoProgram::for_data(&d).unwrap();
    (d, prog)
}

fn sim_lasso(
    d: &LassoData,
    prog: &LassoProgram,
    topo: &Topology,
    s: u64,
    cfg: &SimConfig,
) -> SimOutput {
    let mut sched = FixedBlocks::new(d.m(), cfg.workers).unwrap();
    run_simulation(prog, d, &mut sched, topo, StalenessConfig { s }, cfg).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn c01_ssp_soundness_under_fuzzing() {
    let started = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(0xC1);
    let (mut clocks, mut bad, mut events) = (0usize, Vec::new(), 0usize);
    for run in 0..100u64 {
        let p = [2usize, 4, 8][r.random_range(0..3)];
        let s = r.random_range(0..=3u64);
        let (d, prog) = lasso_instance(40, 16, 4, run);
        let topo = match r.random_range(0..3) {
            0 => Topology::full_p2p(p),
            1 => Topology::halton(p),
            _ => Topology::master_slave(p, r.random_range(1..=2)),
        }
        .unwrap();
        let mut cfg = SimConfig::new(p, run);
        cfg.stop = StoppingCriterion::iterations(30).unwrap();
        cfg.bandwidth = r.random_range(32..4096);
        cfg.latency = r.random_range(0..5);
        cfg.codec = if r.random::<bool>() { Codec::Full } else { Codec::Sparse };
        let cfg = random_stragglers(&cfg, r.random_range(0..6), 6.0, 300, run).unwrap();
        let out = sim_lasso(&d, &prog, &topo, s, &cfg);
        clocks += out.trace.count(EventKind::Clock);
        events += out.trace.events.len();
        let st = assert_staleness_invariants(&out.trace);
        let rep = replay_all(&out.trace);
        if !st.is_clean() || !rep.all_passed() {
            bad.push(format!("run {run} (P={p}, s={s}, {:?}): {rep}", topo.kind()));
        }
    }
    let elapsed = started.elapsed();
    let pass = bad.is_empty() && clocks >= 10_000 && elapsed < Duration::from_secs(120);
    report(
        1,
        pass,
        &format!(
            "100 sims, {clocks} clock events, {events} trace events, {} violating runs, {:.1}s{}",
            bad.len(),
            elapsed.as_secs_f64(),
            bad.first().map(|b| format!("; first: {b}")).unwrap_or_default()
        ),
    );
}

#[test]
fn c02_bsp_is_bit_identical_to_serial_reference() {
    // Correlated columns keep the iterates moving for all 50 iterations.
    let p = block_correlated_lasso(200, 48, 12, 0.9, 12, 0.1, 2);
    let d = LassoData::new(p.x, p.y).unwrap();
    let prog = LassoProgram::for_data(&d).unwrap();
    let mut cfg = SimConfig::new(4, 2);
    cfg.stop = StoppingCriterion::iterations(50).unwrap();
    cfg.record_trajectory = true;
    let cfg = random_stragglers(&cfg, 4, 4.0, 500, 2).unwrap();
    let out = sim_lasso(&d, &prog, &Topology::full_p2p(4).unwrap(), 0, &cfg);
    let mut blocks = FixedBlocks::new(48, 4).unwrap();
    let reference = run_model_parallel(&prog, &d, 4, &mut blocks, &cfg.stop, 2).unwrap();
    let first_diff = out
        .trajectory
        .iter()
        .zip(&reference.trajectory)
        .position(|(a, b)| a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits()));
    let moving = reference.trajectory.windows(2).all(|w| w[0] != w[1]);
    let pass = out.trajectory.len() == 51
        && reference.trajectory.len() == 51
        && first_diff.is_none()
        && moving;
    report(
        2,
        pass,
        &format!(
            "{} sim iterates vs {} reference iterates, first differing iterate: {first_diff:?}, every iterate moves: {moving}",
            out.trajectory.len() - 1,
            reference.trajectory.len() - 1
        ),
    );
}

#[test]
fn c03_stale_runs_reach_the_sequential_objective() {
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    for seed in 0..5u64 {
        let (d, prog) = lasso_instance(200, 50, 10, 100 + seed);
        let stop = StoppingCriterion::iterations(300).unwrap();
        let seq = run_sequential(&prog, &d, &stop, seed).unwrap().final_objective();
        for s in 0..=3u64 {
            let t0 = Instant::now();
            let mut cfg = SimConfig::new(4, seed);
            cfg.stop = stop;
            let cfg = random_stragglers(&cfg, 6, 5.0, 2000, seed).unwrap();
            let out = sim_lasso(&d, &prog, &Topology::full_p2p(4).unwrap(), s, &cfg);
            slowest = slowest.max(t0.elapsed());
            let e = rel(out.summary.final_objective, seq);
            worst = worst.max(e);
            if e > 1e-3 {
                failures.push(format!("seed {seed} s={s}: {e:.2e}"));
            }
        }
    }
    let pass = failures.is_empty() && slowest < Duration::from_secs(60);
    report(
        3,
        pass,
        &format!(
            "worst relative gap {worst:.2e} (tol 1e-3) over 5 seeds x s=0..3, slowest run {:.2}s {failures:?}",
            slowest.as_secs_f64()
        ),
    );
}

#[test]
fn c04_staleness_trades_blocking_for_throughput() {
    // Blocks of correlated columns line up with the workers' coordinate
    // blocks, so the problem needs many iterations.
    let p = block_correlated_lasso(200, 48, 12, 0.9, 12, 0.1, 4);
    let d = LassoData::new(p.x, p.y).unwrap();
    let prog = LassoProgram::for_data(&d).unwrap();
    let stop = StoppingCriterion::iterations(150).unwrap();
    let best = run_sequential(&prog, &d, &stop, 0).unwrap().final_objective();
    let start = prog.objective(&vec![0.0; 48], &d).unwrap();
    let target = best + 1e-3 * (start - best);
    let topo = Topology::full_p2p(4).unwrap();

    let mut base = SimConfig::new(4, 4);
    base.stop = stop;
    let mut pass = true;
    let mut lines = Vec::new();
    // The same worker 5x slower throughout, then the 5x slowdown moving
    // between workers.
    for (name, cfg) in [
        ("fixed", inject_straggler(&base, 1, 5.0, 0..u64::MAX).unwrap()),
        ("rotating", rotating_straggler(&base, 5.0, 40, 100_000, 4).unwrap()),
    ] {
        let runs: Vec<SimOutput> = (0..=2).map(|s| sim_lasso(&d, &prog, &topo, s, &cfg)).collect();
        let blocked: Vec<u64> = runs.iter().map(|o| o.summary.blocked_ticks).collect();
        let ticks: Vec<Option<u64>> = runs.iter().map(|o| o.metrics.ticks_to(target)).collect();
        let decreasing = blocked.windows(2).all(|w| w[1] < w[0]);
        let faster = matches!((ticks[0], ticks[2]), (Some(t0), Some(t2)) if t2 <= t0);
        pass &= decreasing && faster;
        lines.push(format!("{name}: blocked ticks s=0..2 {blocked:?}, ticks to tolerance {ticks:?}"));
    }
    report(4, pass, &lines.join("; "));
}

#[test]
fn c05_sap_rounds_are_dependency_safe() {
    let mut r = ChaCha8Rng::seed_from_u64(0xC5);
    let (mut rounds, mut pairs, mut bad) = (0usize, 0u64, Vec::new());
    for inst in 0..50u64 {
        let m = r.random_range(8..=200usize);
        let block = r.random_range(2..=8usize);
        let rho = r.random_range(0.0..0.9);
        let workers = r.random_range(2..=8usize).min(m);
        // Tall enough that chance correlations stay under κ, so rounds
        // really do spread across workers.
        let p = block_correlated_lasso(1000, m, block, rho, m / 5 + 1, 0.1, inst);
        let data = Arc::new(LassoData::new(p.x, p.y).unwrap());
        let kappa = 0.1;
        let mut cfg = SapConfig::new(workers, inst);
        cfg.kappa = kappa;
        let mut sap = SapScheduler::new(data.clone(), data.coordinate_costs(), cfg).unwrap();
        let prog = LassoProgram::for_data(&data).unwrap();
        run_model_parallel(&prog, &data, workers, &mut sap, &StoppingCriterion::iterations(10).unwrap(), inst)
            .unwrap();
        let cols: Vec<Vec<f64>> = (0..m).map(|j| data.x().column(j)).collect();
        for rec in sap.history() {
            rounds += 1;
            for a in 0..workers {
                for b in a + 1..workers {
                    for &j in &rec.assignment[a] {
                        for &k in &rec.assignment[b] {
                            pairs += 1;
                            let w = dot(&cols[j], &cols[k]).abs();
                            if j == k || w >= kappa {
                                bad.push((inst, j, k, w));
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        5,
        bad.is_empty() && rounds >= 500 && pairs > 0,
        &format!("50 instances, {rounds} rounds, {pairs} cross-worker pairs checked, {} violations {:?}", bad.len(), bad.first()),
    );
}

#[test]
fn c06_sap_makes_faster_progress() {
    // Part 1: dependency-aware rounds vs. random parallel rounds of equal size.
    let workers = 4;
    let count = 16;
    let mut sap_iters = Vec::new();
    let mut rnd_iters = Vec::new();
    let mut ok = true;
    for seed in 0..5u64 {
        let p = block_correlated_lasso(200, 200, 10, 0.9, 20, 0.1, 60 + seed);
        let data = Arc::new(LassoData::new(p.x, p.y).unwrap());
        let prog = LassoProgram::for_data(&data).unwrap();
        let stop = StoppingCriterion::iterations(400).unwrap();
        let long = StoppingCriterion::iterations(3000).unwrap();
        let best = run_sequential(&prog, &data, &StoppingCriterion::iterations(200).unwrap(), 0)
            .unwrap()
            .final_objective();
        let start = prog.objective(&vec![0.0; data.m()], &data).unwrap();
        let target = best + 1e-2 * (start - best);
        let to_target = |objs: &[f64]| objs.iter().position(|&o| o <= target);

        let mut cfg = SapConfig::new(workers, seed);
        cfg.pool_size = Some(count);
        cfg.subset_cap = Some(count);
        let mut sap = SapScheduler::new(data.clone(), data.coordinate_costs(), cfg).unwrap();
        let a = run_model_parallel(&prog, &data, workers, &mut sap, &stop, seed).unwrap();
        let mut rp = RandomParallel::new(data.m(), workers, count, seed).unwrap();
        let b = run_model_parallel(&prog, &data, workers, &mut rp, &long, seed).unwrap();
        let ia = to_target(&a.metrics.iter().map(|m| m.objective).collect::<Vec<_>>());
        let ib = to_target(&b.metrics.iter().map(|m| m.objective).collect::<Vec<_>>());
        ok &= match (ia, ib) {
            (Some(x), Some(y)) => x <= y,
            (Some(_), None) => true,
            _ => false,
        };
        sap_iters.push(ia);
        rnd_iters.push(ib);
    }

    // Part 2: prioritized selection vs. round robin, counted in Δ evaluations.
    let per_round = 10;
    let mut zero_frac = 1.0f64;
    let mut ratios = Vec::new();
    let mut evals = Vec::new();
    for seed in 0..5u64 {
        let (d, prog) = lasso_instance(800, 400, 10, 61 + seed);
        let data = Arc::new(d);
        let m = data.m();
        let seq = run_sequential(&prog, &data, &StoppingCriterion::iterations(500).unwrap(), 0).unwrap();
        let best = seq.final_objective();
        let zeros = seq.trajectory[5].iter().filter(|v| **v == 0.0).count();
        zero_frac = zero_frac.min(zeros as f64 / m as f64);
        let start = prog.objective(&vec![0.0; m], &data).unwrap();
        let target = best + 1e-6 * (start - best);
        let stop = StoppingCriterion::iterations(2000).unwrap();
        let evals_to = |o: &iterml::RunOutput| {
            o.metrics.iter().position(|r| r.objective <= target).map(|i| (i * per_round) as u64)
        };
        let mut cfg = SapConfig::new(1, 61 + seed);
        cfg.pool_size = Some(per_round);
        cfg.subset_cap = Some(m);
        let mut sap = SapScheduler::new(data.clone(), data.coordinate_costs(), cfg).unwrap();
        let pri = run_model_parallel(&prog, &data, 1, &mut sap, &stop, seed).unwrap();
        let mut rr = RoundRobin::new(m, 1, per_round).unwrap();
        let cyc = run_model_parallel(&prog, &data, 1, &mut rr, &stop, seed).unwrap();
        let (ep, er) = (evals_to(&pri), evals_to(&cyc));
        ratios.push(match (ep, er) {
            (Some(a), Some(b)) if a > 0 => b as f64 / a as f64,
            _ => 0.0,
        });
        evals.push((ep, er));
    }
    let ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        6,
        ok && zero_frac >= 0.8 && ratio >= 1.5,
        &format!(
            "SAP iterations to target {sap_iters:?} vs random {rnd_iters:?}; \
             at least {:.0}% zero after 5 sweeps, evaluations (prioritized, round-robin) {evals:?}, worst ratio {ratio:.2}x (need 1.5x)",
            100.0 * zero_frac
        ),
    );
}

#[test]
fn c07_lda_rotation_is_exact() {
    let t0 = Instant::now();
    let (workers, rotations) = (4usize, 30u64);
    let mut sim_ll = Vec::new();
    let mut seq_ll = Vec::new();
    let mut problems = Vec::new();
    for seed in 0..5u64 {
        let z = zipf_corpus(100, 50, 5, 60, 1.0, 70 + seed);
        let corpus = z.corpus;
        let prog = LdaProgram::new(&corpus, 5).unwrap();
        let plan = build_rotation_plan(&corpus.doc_lengths(), corpus.vocab(), workers).unwrap();

        // Each token exactly once per rotation; word sets disjoint per sub-epoch.
        let mut seen = vec![0u32; corpus.n_tokens()];
        for sub in 0..workers as u64 {
            let blocks = plan.blocks(sub);
            for w in 0..corpus.vocab() {
                let owners = blocks.iter().filter(|b| b.contains_word(w)).count();
                if owners != 1 {
                    problems.push(format!("seed {seed} sub-epoch {sub}: word {w} in {owners} blocks"));
                }
            }
            for b in &blocks {
                for t in corpus.tokens_in(b) {
                    seen[t] += 1;
                }
            }
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            problems.push(format!("seed {seed}: token {t} sampled {} times per rotation", seen[t]));
        }

        let mut cfg = SimConfig::new(workers, seed);
        cfg.stop = StoppingCriterion::iterations(rotations * workers as u64).unwrap();
        cfg.codec = Codec::Sparse;
        let mut sched = RotationSchedule::new(plan);
        let out = run_simulation(&prog, &corpus, &mut sched, &Topology::full_p2p(workers).unwrap(), StalenessConfig::bsp(), &cfg)
            .unwrap();
        if out.summary.evaluations != rotations * corpus.n_tokens() as u64 {
            problems.push(format!(
                "seed {seed}: {} token updates for {rotations} rotations of {} tokens",
                out.summary.evaluations,
                corpus.n_tokens()
            ));
        }
        prog.check_counts(&out.state.values, &corpus).unwrap();
        sim_ll.push(lda_log_likelihood(&prog, &out.state.values, &corpus));
        let seq = run_sequential(&prog, &corpus, &StoppingCriterion::iterations(rotations).unwrap(), seed).unwrap();
        seq_ll.push(lda_log_likelihood(&prog, &seq.state.values, &corpus));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&sim_ll), mean(&seq_ll));
    let gap = rel(a, b);
    let elapsed = t0.elapsed();
    report(
        7,
        problems.is_empty() && gap < 0.02 && elapsed < Duration::from_secs(180),
        &format!(
            "mean log-likelihood rotation {a:.1} vs sequential {b:.1} (rel gap {gap:.4}, tol 0.02), {:.1}s {problems:?}",
            elapsed.as_secs_f64()
        ),
    );
}

/// Collapsed `log p(w, z)` for a single document, straight from the
/// Dirichlet-multinomial normalizers.
fn toy_joint(z: &[usize], words: &[usize], k: usize, v: usize, alpha: f64, beta: f64) -> f64 {
    let mut ndk = vec![0.0; k];
    let mut nkw = vec![vec![0.0; v]; k];
    for (&t, &w) in z.iter().zip(words) {
        ndk[t] += 1.0;
        nkw[t][w] += 1.0;
    }
    let (kf, vf) = (k as f64, v as f64);
    let mut ll = ln_gamma(kf * alpha) - ln_gamma(z.len() as f64 + kf * alpha);
    for t in 0..k {
        ll += ln_gamma(ndk[t] + alpha) - ln_gamma(alpha);
        let nk: f64 = nkw[t].iter().sum();
        ll += ln_gamma(vf * beta) - ln_gamma(nk + vf * beta);
        for w in 0..v {
            ll += ln_gamma(nkw[t][w] + beta) - ln_gamma(beta);
        }
    }
    ll
}

#[test]
fn c08_gibbs_conditional_matches_enumeration() {
    let words = vec![0usize, 1];
    let corpus = Corpus::new(vec![words.clone()], 2).unwrap();
    let prog = LdaProgram::with_priors(&corpus, 2, 0.5, 0.3).unwrap();
    let lay = *prog.layout();
    let draws = 50_000u32;
    let mut r = ChaCha8Rng::seed_from_u64(0xC8);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for start in [[0usize, 0], [0, 1], [1, 0], [1, 1]] {
        for token in 0..2 {
            let mut base = vec![0.0; lay.len()];
            for (t, &zt) in start.iter().enumerate() {
                base[lay.assignment(t)] = zt as f64;
            }
            prog.recount(&mut base, &corpus);
            let exact: Vec<f64> = {
                let joint: Vec<f64> = (0..2)
                    .map(|k| {
                        let mut z = start.to_vec();
                        z[token] = k;
                        toy_joint(&z, &words, 2, 2, 0.5, 0.3).exp()
                    })
                    .collect();
                let total: f64 = joint.iter().sum();
                joint.iter().map(|j| j / total).collect()
            };
            let mut hits = [0u32; 2];
            for _ in 0..draws {
                let mut v = base.clone();
                let k = gibbs_token_update(&prog, &mut v, &corpus, 0, token, &mut r).unwrap();
                hits[k] += 1;
            }
            for k in 0..2 {
                let p = exact[k];
                let sigma = (p * (1.0 - p) / draws as f64).sqrt();
                let z = (hits[k] as f64 / draws as f64 - p).abs() / sigma;
                worst = worst.max(z);
                checks += 1;
            }
        }
    }
    report(8, worst < 3.0, &format!("{checks} transition frequencies, worst deviation {worst:.2} sigma (limit 3)"));
}

#[test]
fn c09_sufficient_factors_are_exact_and_accounted() {
    let mut r = ChaCha8Rng::seed_from_u64(0xC9);
    let mut mismatches = 0;
    for i in 0..1000u64 {
        let (k, d, s) = (r.random_range(1..20), r.random_range(1..20), r.random_range(1..5));
        let mut f = FactorList::new(k, d);
        for _ in 0..s {
            let b = (0..k).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
            let c = (0..d).map(|_| r.random::<f64>() * 1e3 - 5e2).collect();
            f.push(b, c);
        }
        let delta = UpdateDelta::new(Payload::Factors(f), i, (i % 7) as usize);
        let bytes = encode_delta(&delta, Codec::SufficientFactor, Shape::new(k, d)).unwrap();
        let (back, shape) = decode_delta(&bytes).unwrap();
        let same = match (&back.payload, &delta.payload) {
            (Payload::Factors(a), Payload::Factors(b)) => {
                a.pairs.len() == b.pairs.len()
                    && a.pairs.iter().zip(&b.pairs).all(|((ab, ac), (bb, bc))| {
                        ab.iter().chain(ac).map(|x| x.to_bits()).eq(bb.iter().chain(bc).map(|x| x.to_bits()))
                    })
            }
            _ => false,
        };
        if !same || shape != Shape::new(k, d) || back.timestamp != delta.timestamp || back.origin != delta.origin {
            mismatches += 1;
        }
    }

    // Simulated byte counters for an MLR run with minibatch S.
    let (n, classes, features, batch, workers) = (240usize, 6usize, 10usize, 5usize, 4usize);
    let mut rr = ChaCha8Rng::seed_from_u64(9);
    let x = DenseMatrix::from_vec(n, features, (0..n * features).map(|_| rr.random::<f64>() - 0.5).collect());
    let labels = (0..n).map(|_| rr.random_range(0..classes)).collect();
    let data = MlrData::new(x, labels, classes).unwrap();
    let prog = MlrProgram::for_data(&data, batch).unwrap();
    let mut cfg = SimConfig::new(workers, 9);
    cfg.codec = Codec::SufficientFactor;
    cfg.shape = Some(Shape::new(classes, features));
    cfg.stop = StoppingCriterion::iterations(12).unwrap();
    let mut sched = ShardSchedule::new(n, workers).unwrap();
    let out = run_simulation(&prog, &data, &mut sched, &Topology::full_p2p(workers).unwrap(), StalenessConfig { s: 1 }, &cfg)
        .unwrap();
    let per_msg = 25 + 8 * batch * (classes + features);
    let sizes_ok = out
        .trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::MsgSend)
        .all(|e| e.bytes == Some(per_msg as u64));
    let msgs = out.traffic.total_messages();
    let counter_ok = sizes_ok && msgs > 0 && out.summary.bytes_sent == msgs * per_msg as u64;

    // Wire ratio at K = 1000, D = 500, S = 10.
    let (k, d, s) = (1000usize, 500usize, 10usize);
    let mut f = FactorList::new(k, d);
    for _ in 0..s {
        f.push((0..k).map(|_| r.random::<f64>()).collect(), (0..d).map(|_| r.random::<f64>()).collect());
    }
    let delta = UpdateDelta::new(Payload::Factors(f), 0, 0);
    let full = encode_delta(&delta, Codec::Full, Shape::new(k, d)).unwrap().len();
    let sf = encode_delta(&delta, Codec::SufficientFactor, Shape::new(k, d)).unwrap().len();
    let ratio = full as f64 / sf as f64;
    let ratio_ok = full == 25 + 8 * k * d && sf == 25 + 8 * s * (k + d) && rel(ratio, 500_000.0 / 15_000.0) < 1e-3;
    report(
        9,
        mismatches == 0 && counter_ok && ratio_ok,
        &format!(
            "1000 round trips, {mismatches} mismatches; {msgs} sim messages of {per_msg} bytes each: {counter_ok}; \
             full {full} B vs factors {sf} B = {ratio:.3}x"
        ),
    );
}

#[test]
fn c10_mlr_gradient_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(0x10);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, k, d) = (30usize, r.random_range(2..6usize), r.random_range(2..8usize));
        let x = DenseMatrix::from_vec(n, d, (0..n * d).map(|_| r.random::<f64>() * 2.0 - 1.0).collect());
        let labels = (0..n).map(|_| r.random_range(0..k)).collect();
        let data = MlrData::new(x, labels, k).unwrap();
        let a: Vec<f64> = (0..k * d).map(|_| r.random::<f64>() - 0.5).collect();
        let lo = r.random_range(0..n - 5);
        let rows = lo..lo + r.random_range(1..=5);
        let grad = mlr_sufficient_factors(&a, &data, rows.clone()).unwrap().reconstruct();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..k * d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[j] += h;
            am[j] -= h;
            let fd = (mlr_loss(&ap, &data, rows.clone()) - mlr_loss(&am, &data, rows.clone())) / (2.0 * h);
            num += (fd - grad[j]).powi(2);
            den += grad[j].powi(2);
        }
        let e = (num / den).sqrt();
        worst = worst.max(e);
    }
    report(10, worst < 1e-5, &format!("20 draws, worst relative gradient error {worst:.2e} (limit 1e-5)"));
}

#[test]
fn c11_topology_contracts() {
    // Workers 1..6 of the worked example are ids 0..5 here.
    let halton = Topology::halton(6).unwrap();
    let route = halton.route(0, 5).unwrap();
    let delta = UpdateDelta::new(Payload::Dense(vec![1.0; 8]), 0, 0);
    let plan = broadcast(&halton, 0, &delta, CodecPair::new(Codec::Full), Shape::vector(8)).unwrap();
    let stale = plan.staleness.get(&(0, 5)).copied();
    let route_ok = route == vec![0, 1, 4, 5] && stale == Some(3);

    let mut counts = Vec::new();
    let mut ok = true;
    for p in [2usize, 4, 6, 8] {
        let deltas: Vec<UpdateDelta> = (0..p).map(|w| UpdateDelta::new(Payload::Dense(vec![1.0; 8]), 0, w)).collect();
        let round: Vec<(usize, &UpdateDelta)> = deltas.iter().enumerate().collect();
        let ms = Topology::master_slave(p, 1).unwrap();
        let p2p = Topology::full_p2p(p).unwrap();
        let n_ms = broadcast_round(&ms, &round, CodecPair::new(Codec::Full), Shape::vector(8)).unwrap().messages.len();
        let n_p2p = broadcast_round(&p2p, &round, CodecPair::new(Codec::Full), Shape::vector(8)).unwrap().messages.len();

        // The same counts from simulated traffic, per iteration.
        let iters = 10u64;
        let (d, prog) = lasso_instance(40, 16, 4, p as u64);
        let mut cfg = SimConfig::new(p, 1);
        cfg.stop = StoppingCriterion::iterations(iters).unwrap();
        let sim_ms = sim_lasso(&d, &prog, &ms, 0, &cfg).traffic.total_messages();
        let sim_p2p = sim_lasso(&d, &prog, &p2p, 0, &cfg).traffic.total_messages();
        ok &= n_ms == 2 * p && n_p2p == p * (p - 1);
        ok &= sim_ms == iters * 2 * p as u64 && sim_p2p == iters * (p * (p - 1)) as u64;
        counts.push((p, n_ms, n_p2p, sim_ms / iters, sim_p2p / iters));
    }
    report(
        11,
        route_ok && ok,
        &format!("halton route {route:?} staleness {stale:?}; (P, ms plan, p2p plan, ms sim, p2p sim) per round {counts:?}"),
    );
}

#[test]
fn c12_rate_limiter_bounds_inflight_and_delay() {
    let mut r = ChaCha8Rng::seed_from_u64(0x12);
    let mut traces = 0;
    let mut over = 0;
    let mut delays = Vec::new();
    let mut ok = true;
    for w in 0..10u64 {
        let p = [2usize, 4, 8][r.random_range(0..3)];
        let (d, prog) = lasso_instance(40, 64, 6, w);
        let topo = Topology::full_p2p(p).unwrap();
        let mut cfg = SimConfig::new(p, w);
        cfg.stop = StoppingCriterion::iterations(20).unwrap();
        // 520-byte messages over a link that moves 16..96 bytes per tick
        cfg.bandwidth = r.random_range(16..96);
        cfg.latency = r.random_range(0..4);
        cfg.ticks_per_unit = 1.0 / r.random_range(64.0..512.0);
        let cfg = random_stragglers(&cfg, r.random_range(1..8), 8.0, 2000, w).unwrap();
        let managed = sim_lasso(&d, &prog, &topo, 2, &cfg);
        let mut raw_cfg = cfg.clone();
        raw_cfg.managed = false;
        let unmanaged = sim_lasso(&d, &prog, &topo, 2, &raw_cfg);
        let inf = check_inflight(&managed.trace);
        traces += 1;
        over += inf.violations.len();
        let (a, b) = (managed.traffic.max_delay(), unmanaged.traffic.max_delay());
        ok &= a <= b;
        delays.push((a, b));
    }
    report(
        12,
        over == 0 && ok,
        &format!("{traces} managed traces, {over} in-flight violations; max delay (managed, unmanaged) {delays:?}"),
    );
}

#[test]
fn c13_shipped_configs_are_deterministic() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut cfgs: Vec<_> = std::fs::read_dir(&dir)
        .expect("configs directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    cfgs.sort();
    let mut lines = Vec::new();
    let mut pass = !cfgs.is_empty();
    for path in &cfgs {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let cfg = ExperimentConfig::load(path).unwrap_or_else(|e| panic!("{name}: {e}"));
        let t0 = Instant::now();
        let a = run_experiment(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let secs = t0.elapsed().as_secs_f64();
        let b = run_experiment(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let same = a.metrics_csv == b.metrics_csv && a.trace == b.trace && a.traffic_csv == b.traffic_csv;
        let ok = same && a.passed() && secs < 300.0;
        pass &= ok;
        lines.push(format!(
            "{name}: {} metrics bytes, {} identical, checks {}, {secs:.1}s",
            a.metrics_csv.len(),
            if same { "all outputs" } else { "NOT" },
            if a.passed() { "pass" } else { "FAIL" },
        ));
    }
    report(13, pass, &lines.join("; "));
}
