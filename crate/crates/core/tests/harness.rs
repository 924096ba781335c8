use d2dcache::harness::{
    optimize_r, realize, run_trial, run_trials_with, sweep, sweep_resume, Estimate, LibrarySize,
    Policy, RSearch, Radius, SimConfig, SweepTable,
};
use d2dcache::scheduling::{exact_mis, ConflictGraph};

fn cfg(n: usize) -> SimConfig {
    SimConfig {
        n,
        m: LibrarySize::Fixed(5),
        gamma_r: 1.5,
        policy: Policy::Zipf { gamma_c: 1.5 },
        r: Radius::Fixed(0.5),
        seed: 7,
        trials: 1,
        exact_cutoff: 40,
    }
}

/// Largest independent set, by trying every subset.
fn enumerate_mis(g: &ConflictGraph) -> usize {
    let v = g.len();
    (0u64..1 << v)
        .filter(|s| {
            (0..v).all(|a| s >> a & 1 == 0 || g.neighbors(a).iter().all(|&b| s >> b & 1 == 0))
        })
        .map(|s| s.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

#[test]
fn exact_matches_enumeration_on_small_realization() {
    let c = cfg(12).resolve().unwrap().config;
    let mut checked = 0;
    for t in 0..40 {
        let real = realize(&c, t).unwrap();
        if real.graph.len() > 20 {
            continue;
        }
        let res = run_trial(&c, t).unwrap();
        assert_eq!(res.l_exact, Some(enumerate_mis(&real.graph)), "trial {t}");
        assert_eq!(res.l_exact, Some(exact_mis(&real.graph, 40).unwrap().len()));
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} small graphs");
}

#[test]
fn identical_across_worker_counts() {
    let c = cfg(400).with_radius(0.08).with_trials(12).resolve().unwrap().config;
    let one = run_trials_with(&c, 1).unwrap();
    let four = run_trials_with(&c, 4).unwrap();
    assert_eq!(one, four);
    assert_eq!(Estimate::from_trials(&one), Estimate::from_trials(&four));
}

#[test]
fn stderr_shrinks_with_trials() {
    let base = cfg(300).with_radius(0.09);
    let se = |trials: usize| {
        let c = base.with_trials(trials).resolve().unwrap().config;
        Estimate::from_trials(&run_trials_with(&c, 1).unwrap()).l_greedy.se.unwrap()
    };
    let ratio = se(400) / se(800);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn five_point_sweep_in_n_order() {
    let grid: Vec<SimConfig> = [800, 200, 1600, 100, 400]
        .iter()
        .map(|&n| cfg(n).with_radius(0.05).with_trials(3))
        .collect();
    let t = sweep(&grid).unwrap();
    assert_eq!(t.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![100, 200, 400, 800, 1600]);

    // Interrupt after two rows, then resume from the saved CSV.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let mut rows_seen = 0;
    let stop = sweep_resume(&grid, &SweepTable::default(), |partial| {
        partial.save_csv(&path)?;
        rows_seen = partial.len();
        if rows_seen == 2 {
            Err(d2dcache::Error::InvalidData("interrupted".into()))
        } else {
            Ok(())
        }
    });
    assert!(stop.is_err());
    let saved = SweepTable::load_csv(&path).unwrap();
    assert_eq!(saved.len(), 2);
    let resumed = sweep_resume(&grid, &saved, |_| Ok(())).unwrap();
    assert_eq!(resumed, t);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    resumed.write_csv(&mut a).unwrap();
    t.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn links_grow_with_users() {
    let mut prev: Option<(f64, f64)> = None;
    for n in [250, 500, 1000, 2000] {
        let mut c = cfg(n).with_radius(0.04).with_trials(60);
        c.m = LibrarySize::Fixed(12);
        let c = c.resolve().unwrap().config;
        let est = Estimate::from_trials(&run_trials_with(&c, 1).unwrap());
        let (mean, se) = (est.l_greedy.mean, est.l_greedy.se.unwrap());
        if let Some((pm, pse)) = prev {
            assert!(mean + 3.0 * (se * se + pse * pse).sqrt() >= pm, "n={n}: {mean} after {pm}");
        }
        prev = Some((mean, se));
    }
}

#[test]
fn optimum_near_prediction() {
    let mut c = cfg(2000);
    c.m = LibrarySize::Fixed(20);
    let p = optimize_r(&c, &RSearch::new(0.005, 0.5, 15, 20)).unwrap();
    let predicted = 1.5 / 2000f64.sqrt();
    assert!(p.best_r > predicted / 3.0 && p.best_r < predicted * 3.0, "{}", p.best_r);
    assert!(!p.boundary);
    // Pruning skips the expensive tail once the profile has clearly turned.
    assert!(p.points.last().unwrap().estimate.is_none());
}
