use sg_lab::diagnostics::energy_series;
use sg_lab::grid::{make_grid, Field};
use sg_lab::inverse::{family_initials, generate_dataset, input_scaling, reconstruct_initial, FamilySpec};
use sg_lab::neural::{self, TrainConfig};
use sg_lab::soliton::{kink, SolitonParams};
use sg_lab::solver::{reconstruct, solve, ForcingSpec, ProblemConfig, ProblemKind};

fn template(nx: usize, t: f64) -> ProblemConfig {
    let g = make_grid(13.0, nx, t, 0.2).unwrap();
    let mut cfg = ProblemConfig::quiet(ProblemKind::Perturbation, g);
    cfg.epsilon = 0.05;
    cfg.soliton = SolitonParams::new(0.5, 0.0).unwrap();
    cfg.forcing = ForcingSpec::new(1.0, 2.0, 4, &g);
    cfg
}

#[test]
fn kink_is_reproduced_by_the_full_solver() {
    let g = make_grid(13.0, 201, 5.0, 0.2).unwrap();
    let sol = SolitonParams::new(0.5, 0.0).unwrap();
    let mut cfg = ProblemConfig::quiet(ProblemKind::Full, g);
    cfg.soliton = sol;
    let z = Field::zeros(g);
    (cfg.u0, cfg.v0) = ProblemConfig::full_from_deviation(1.0, sol, &z, &z).unwrap();
    let h = solve(&cfg).unwrap();
    let n = h.rows() - 1;
    let err = h
        .row(n)
        .iter()
        .zip(g.xs())
        .map(|(u, x)| (u - kink(x, g.t(n), &sol)).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.02, "{err}");
}

#[test]
fn full_and_decomposed_runs_agree() {
    let p = template(201, 5.0);
    let mut f = p.clone();
    f.kind = ProblemKind::Full;
    (f.u0, f.v0) = ProblemConfig::full_from_deviation(0.05, p.soliton, &p.u0, &p.v0).unwrap();
    let full = solve(&f).unwrap();
    let u = reconstruct(&solve(&p).unwrap(), &p.soliton, 0.05);
    // both are second-order discretizations of one solution
    assert!(full.sup_distance(&u) < 1e-2, "{}", full.sup_distance(&u));
}

#[test]
fn forced_runs_respect_the_energy_envelope() {
    let mut p = template(101, 20.0);
    assert!(energy_series(&solve(&p).unwrap()).unwrap().all_satisfied());
    let w = 4.0 * std::f64::consts::PI / 13.0;
    (p.u0, p.v0) = family_initials(w, &p.grid);
    assert!(energy_series(&solve(&p).unwrap()).unwrap().all_satisfied());
}

#[test]
fn noise_touches_only_target_rows() {
    let cfg = template(61, 3.0);
    let fam = FamilySpec {
        omega_count: 7,
        ..FamilySpec::default()
    };
    let clean = generate_dataset(&fam, &cfg, 3, 20, 0.0, 5).unwrap();
    let noisy = generate_dataset(&fam, &cfg, 3, 20, 0.05, 5).unwrap();
    let strip = |d: &sg_lab::inverse::Dataset| {
        d.rows
            .iter()
            .filter(|r| r.omega != fam.target_omega())
            .copied()
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&clean), strip(&noisy));
    assert_eq!(noisy.rows.iter().filter(|r| r.noisy).count(), 60);
    let diffs: Vec<f64> = noisy
        .rows
        .iter()
        .zip(&clean.rows)
        .filter(|(a, _)| a.noisy)
        .map(|(a, b)| a.eta - b.eta)
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    assert!((sd - 0.05).abs() < 0.02, "sample sd {sd}");
    let other = generate_dataset(&fam, &cfg, 3, 20, 0.05, 6).unwrap();
    assert_ne!(noisy, other);
}

#[test]
fn sampled_initial_rows_equal_the_family() {
    let cfg = template(101, 20.0);
    let fam = FamilySpec::default();
    let d = generate_dataset(&fam, &cfg, 2, 50, 0.0, 0).unwrap();
    assert_eq!(d.rows.len(), 5000);
    for r in d.rows.iter().filter(|r| r.t == 0.0) {
        assert_eq!(r.eta, (r.omega * r.x).cos());
    }
}

#[test]
fn generated_dataset_independent_of_thread_count() {
    let cfg = template(61, 3.0);
    let fam = FamilySpec {
        omega_count: 6,
        ..FamilySpec::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| generate_dataset(&fam, &cfg, 3, 15, 0.05, 2).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let parallel = pool.install(|| generate_dataset(&fam, &cfg, 3, 15, 0.05, 2).unwrap());
    assert_eq!(serial, parallel);
}

#[test]
fn short_training_reduces_loss_and_reconstructs_on_grid() {
    let cfg = template(41, 2.0);
    let fam = FamilySpec {
        omega_count: 5,
        ..FamilySpec::default()
    };
    let d = generate_dataset(&fam, &cfg, 2, 20, 0.0, 0).unwrap();
    let sc = input_scaling(&fam, &cfg.grid);
    let b = d.to_batch(&sc).unwrap();
    let out = neural::train(
        &b,
        &TrainConfig {
            max_epochs: 300,
            seed: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(out.history.last().unwrap() < &(0.5 * out.history[0]));
    let (u, v) = reconstruct_initial(&out.params, &sc, &fam, &cfg.grid);
    assert_eq!((u.len(), v.len()), (41, 41));
}
