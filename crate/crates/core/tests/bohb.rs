use mount_codesign::bohb::*;
use mount_codesign::DesignSpace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quiet() -> BohbConfig {
    BohbConfig {
        record_wall_time: false,
        ..Default::default()
    }
}

fn obs(u: f64, score: f64) -> Observation {
    Observation {
        unit: vec![u],
        budget: 1.0,
        score,
    }
}

fn clustered(rng: &mut ChaCha8Rng) -> Vec<Observation> {
    let mut out = Vec::new();
    for _ in 0..10 {
        out.push(obs(0.2 + 0.05 * (rng.random::<f64>() - 0.5), 1.0 + rng.random::<f64>()));
        out.push(obs(0.8 + 0.05 * (rng.random::<f64>() - 0.5), rng.random::<f64>()));
    }
    out
}

#[test]
fn cold_start_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = BohbConfig {
        random_fraction: 0.0,
        ..quiet()
    };
    let (u, p) = suggest(&[], 6, &cfg, &mut rng);
    assert_eq!(p, Provenance::Random);
    assert_eq!(u.len(), 6);
    assert!(u.iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn suggestions_follow_the_good_cluster() {
    let cfg = BohbConfig {
        random_fraction: 0.0,
        ..quiet()
    };
    let mut inside = 0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = clustered(&mut rng);
        let (u, p) = suggest(&data, 1, &cfg, &mut rng);
        assert_eq!(p, Provenance::Model);
        if u[0] <= 0.45 {
            inside += 1;
        }
        if seed < 20 {
            // brute force l/g on a fine grid agrees on the side of the cube
            let pair = DensityPair::fit(&data, cfg.gamma, 2).unwrap();
            let argmax = (0..=1000)
                .map(|k| k as f64 / 1000.0)
                .max_by(|a, b| pair.log_ratio(&[*a]).total_cmp(&pair.log_ratio(&[*b])))
                .unwrap();
            assert!(argmax <= 0.45, "grid argmax {argmax}");
        }
    }
    assert!(inside >= 950, "{inside}/1000");
}

#[test]
fn forced_random_passes_ks() {
    let cfg = BohbConfig {
        random_fraction: 1.0,
        ..quiet()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let data = clustered(&mut rng);
    let mut xs: Vec<f64> = (0..10_000)
        .map(|_| {
            let (u, p) = suggest(&data, 1, &cfg, &mut rng);
            assert_eq!(p, Provenance::Random);
            u[0]
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    // asymptotic critical value at alpha = 0.01
    assert!(d < 1.628 / n.sqrt(), "D = {d}");
}

fn random_kde(dim: usize, n: usize, seed: u64) -> ParzenEstimator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let bw = (0..dim).map(|_| 0.02 + 0.3 * rng.random::<f64>()).collect();
    ParzenEstimator::with_bandwidths(pts, bw)
}

fn midpoint_integral(f: impl Fn(&[f64]) -> f64, dim: usize, cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    let total = cells.pow(dim as u32);
    let mut x = vec![0.0; dim];
    let mut sum = 0.0;
    for k in 0..total {
        let mut r = k;
        for v in x.iter_mut() {
            *v = (r % cells) as f64 * h + 0.5 * h;
            r /= cells;
        }
        sum += f(&x);
    }
    sum * h.powi(dim as i32)
}

#[test]
fn densities_integrate_to_one() {
    for (dim, cells) in [(1, 20_000), (2, 400), (3, 100)] {
        for seed in 0..3 {
            let kde = random_kde(dim, 5, seed);
            let mass = midpoint_integral(|x| kde.pdf(x), dim, cells);
            assert!((mass - 1.0).abs() < 1e-3, "dim {dim}: {mass}");
        }
    }
}

#[test]
fn six_dimensional_density_factorizes() {
    let kde = random_kde(6, 7, 9);
    for k in 0..7 {
        for d in 0..6 {
            let m = midpoint_integral(|x| kde.kernel_marginal(k, d, x[0]), 1, 20_000);
            assert!((m - 1.0).abs() < 1e-3);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let x: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let product: f64 = (0..7).map(|k| (0..6).map(|d| kde.kernel_marginal(k, d, x[d])).product::<f64>()).sum::<f64>() / 7.0;
        let p = kde.pdf(&x);
        assert!((p - product).abs() <= 1e-9 * product.max(1e-300), "{p} vs {product}");
    }
}

proptest! {
    #[test]
    fn argmax_survives_positive_rescaling(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Observation> = (0..12)
            .map(|_| Observation { unit: (0..3).map(|_| rng.random()).collect(), budget: 2.0, score: rng.random() })
            .collect();
        let scaled: Vec<Observation> = data.iter().map(|o| Observation { score: o.score * scale, ..o.clone() }).collect();
        let cfg = BohbConfig { random_fraction: 0.0, ..quiet() };
        let a = suggest(&data, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        let b = suggest(&scaled, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive(scores in prop::collection::vec(-1e3f64..1e3, 2..60), gamma in 0.01f64..0.99) {
        let (g, b) = split_good_bad(&scores, gamma, 1);
        let mut all: Vec<usize> = g.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..scores.len()).collect::<Vec<_>>());
        prop_assert!(!g.is_empty() && !b.is_empty());
        let worst_good = g.iter().map(|i| scores[*i]).fold(f64::INFINITY, f64::min);
        prop_assert!(b.iter().all(|i| scores[*i] <= worst_good));
    }
}

#[test]
fn default_brackets() {
    let b = make_brackets(&BohbConfig::default()).unwrap();
    let shape: Vec<(usize, Vec<usize>)> = b.iter().map(|b| (b.s, b.rungs.iter().map(|r| r.count).collect())).collect();
    assert_eq!(shape, vec![(1, vec![3, 1]), (0, vec![2])]);
    assert!((b[0].rungs[0].budget - 333_333.333).abs() < 1e-3);
    assert_eq!(b[0].rungs[1].budget, 1_000_000.0);
    assert_eq!(b[1].rungs[0].budget, 1_000_000.0);
}

#[test]
fn halving_matches_closed_form() {
    for eta in [2usize, 3, 4] {
        for n0 in 1..=81usize {
            let counts = halving_counts(n0, eta, 6);
            for (i, c) in counts.iter().enumerate() {
                assert_eq!(*c, (n0 / eta.pow(i as u32)).max(1), "eta {eta} n0 {n0} rung {i}");
            }
        }
    }
}

#[test]
fn hyperband_geometry_closed_form() {
    for eta in [2usize, 3, 4] {
        for r in [1.0, 2.0, 9.0, 27.5, 81.0, 100.0] {
            let cfg = BohbConfig {
                eta,
                b_min: 1.0,
                b_max: r,
                ..quiet()
            };
            let s_max = (r.ln() / (eta as f64).ln() + 1e-9).floor() as usize;
            assert_eq!(cfg.s_max(), s_max);
            for b in make_brackets(&cfg).unwrap() {
                let n = ((s_max + 1) as f64 / (b.s + 1) as f64 * (eta as f64).powi(b.s as i32)).ceil() as usize;
                assert_eq!(b.rungs[0].count, n);
                for w in b.rungs.windows(2) {
                    assert!((w[1].budget / w[0].budget - eta as f64).abs() < 1e-9);
                    assert_eq!(w[1].count, (w[0].count / eta).max(1));
                }
                assert_eq!(b.rungs.last().unwrap().budget, r);
            }
        }
    }
}

fn peak(r: &EvalRequest) -> Result<Evaluation, EvalFault> {
    let d = r.unit.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>().sqrt();
    Ok(Evaluation::scored(1.0 - d))
}

#[test]
fn promotions_are_the_top_prefix() {
    let cfg = BohbConfig {
        b_min: 1.0,
        b_max: 27.0,
        iterations: 2,
        max_designs: 10_000,
        ..quiet()
    };
    let r = optimize(&DesignSpace::default(), &peak, &cfg, 5).unwrap();
    let h = &r.history;
    let mut groups: std::collections::BTreeMap<(usize, usize, usize), Vec<&EvaluationRecord>> = Default::default();
    for rec in h {
        groups.entry((rec.iteration, rec.bracket, rec.rung)).or_default().push(rec);
    }
    for ((it, s, rung), recs) in &groups {
        if *rung == 0 {
            continue;
        }
        let prev = &groups[&(*it, *s, rung - 1)];
        let mut oracle: Vec<&EvaluationRecord> = prev.clone();
        oracle.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
        let mut want: Vec<usize> = oracle[..recs.len()].iter().map(|r| r.design_id).collect();
        let mut got: Vec<usize> = recs.iter().map(|r| r.design_id).collect();
        want.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, want);
        assert_eq!(recs.len(), (prev.len() / 3).max(1));
    }
}

#[test]
fn ties_promote_the_earlier_design() {
    let flat = |_: &EvalRequest| -> Result<Evaluation, EvalFault> { Ok(Evaluation::scored(0.25)) };
    let cfg = BohbConfig {
        b_min: 1.0,
        b_max: 9.0,
        iterations: 1,
        max_designs: 100,
        ..quiet()
    };
    let r = optimize(&DesignSpace::default(), &flat, &cfg, 2).unwrap();
    let first = &r.history[..9];
    let promoted: Vec<usize> = r.history[9..12].iter().map(|p| p.design_id).collect();
    assert_eq!(promoted, first[..3].iter().map(|p| p.design_id).collect::<Vec<_>>());
    assert_eq!(r.history[12].design_id, first[0].design_id);
}

#[test]
fn single_config_rung_is_promoted() {
    let cfg = quiet();
    let mut session = Session::new(DesignSpace::default(), cfg, 0, &peak).unwrap();
    let bracket = Bracket {
        s: 2,
        rungs: vec![Rung { budget: 1.0, count: 1 }, Rung { budget: 3.0, count: 1 }, Rung { budget: 9.0, count: 1 }],
    };
    let new = session.run_bracket(&bracket, 0, &mut |_| Ok(())).unwrap();
    assert_eq!(new, vec![0, 1, 2]);
    let h = session.history();
    assert!(h.iter().all(|r| r.design_id == 0));
    assert_eq!(h.iter().map(|r| r.budget).collect::<Vec<_>>(), vec![1.0, 3.0, 9.0]);
}

#[test]
fn one_design_cap_gives_one_evaluation() {
    let cfg = BohbConfig {
        max_designs: 1,
        ..quiet()
    };
    let r = optimize(&DesignSpace::default(), &peak, &cfg, 8).unwrap();
    assert_eq!(r.history.len(), 1);
}

#[test]
fn fixed_seed_reproduces_history() {
    let cfg = quiet();
    let a = optimize(&DesignSpace::default(), &peak, &cfg, 21).unwrap();
    let b = optimize(&DesignSpace::default(), &peak, &cfg, 21).unwrap();
    assert_eq!(a, b);
    let c = optimize(&DesignSpace::default(), &peak, &cfg, 22).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn history_round_trips_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let cfg = quiet();
    let space = DesignSpace::default();
    let mut w = HistoryWriter::create(&path).unwrap();
    let full = optimize_with(&space, &peak, &cfg, 3, vec![], &mut |r| w.append(r)).unwrap();
    drop(w);
    let read = read_history(&path).unwrap();
    assert_eq!(read, full.history);

    // tear the file in the middle of a record
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.match_indices('\n').nth(16).unwrap().0 + 40;
    std::fs::write(&path, &text[..cut]).unwrap();
    let prefix = read_history(&path).unwrap();
    assert_eq!(prefix.len(), 17);

    let calls = std::sync::atomic::AtomicUsize::new(0);
    let counting = |r: &EvalRequest| {
        calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        peak(r)
    };
    let mut w = HistoryWriter::rewrite(&path, &prefix).unwrap();
    let resumed = optimize_with(&space, &counting, &cfg, 3, prefix, &mut |r| w.append(r)).unwrap();
    drop(w);
    assert_eq!(resumed, full);
    assert_eq!(calls.into_inner(), full.history.len() - 17);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn replay_from_another_seed_is_rejected() {
    let cfg = quiet();
    let space = DesignSpace::default();
    let a = optimize(&space, &peak, &cfg, 3).unwrap();
    let err = optimize_with(&space, &peak, &cfg, 4, a.history, &mut |_| Ok(())).unwrap_err();
    assert!(matches!(err, BohbError::ResumeMismatch { index: 0 }));
}

#[test]
fn torn_middle_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    std::fs::write(&path, "{\"index\": 0\n{}\n").unwrap();
    assert!(matches!(read_history(&path), Err(BohbError::Corrupt { line: 1, .. })));
}

fn sphere(center: [f64; 6]) -> impl Fn(&EvalRequest) -> Result<Evaluation, EvalFault> + Sync {
    move |r: &EvalRequest| Ok(Evaluation::scored(-r.unit.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
}

#[test]
fn beats_random_search_on_a_sphere() {
    let center = [0.3, 0.7, 0.55, 0.2, 0.8, 0.65];
    let f = sphere(center);
    let cfg = BohbConfig {
        b_min: 1.0,
        b_max: 1.0,
        iterations: 60,
        max_designs: 60,
        ..quiet()
    };
    let mut wins = 0;
    for seed in 0..20u64 {
        let best = optimize(&DesignSpace::default(), &f, &cfg, seed).unwrap().best.score;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let random = (0..60)
            .map(|_| -center.iter().map(|c| (rng.random::<f64>() - c).powi(2)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        if best > random {
            wins += 1;
        }
    }
    assert!(wins >= 13, "{wins}/20");
}
