//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use evitlab_core::decision::{expected_utility_sampled, unit_grid};
use evitlab_core::regressor::{dirichlet_nll, forward, loss_and_gradient, LossSettings, PenaltyMode, PreparedData};
use evitlab_core::stats::{monotone_violation, spearman};
use evitlab_core::taskgen::bundles_from_population;
use evitlab_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, passed: bool, detail: String) {
        if !passed {
            self.failures += 1;
        }
        println!("{} criterion {id:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
}

fn for_each_permutation(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(perm: &mut Vec<usize>, used: &mut [bool], n: usize, f: &mut impl FnMut(&[usize])) {
        if perm.len() == n {
            f(perm);
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                perm.push(c);
                rec(perm, used, n, f);
                perm.pop();
                used[c] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], n, f);
}

fn brute_force_nearest(source: &LabelledDataset, query: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, row) in source.features.iter().enumerate() {
        let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    source.labels[best.1]
}

/// Gradient components below this magnitude are compared on an absolute
/// scale; finite differences cannot resolve them relatively.
const GRADIENT_FLOOR: f64 = 1e-4;

/// Norm-wise and worst per-parameter relative error of the analytic gradient
/// against central differences.
fn gradient_relative_error(params: &MlpParams, data: &PreparedData, settings: LossSettings) -> (f64, f64) {
    let analytic = loss_and_gradient(params, data, settings, true).1.expect("gradient").flatten();
    let flat = params.flatten();
    let h = 1e-6;
    let (mut diff, mut na, mut nf, mut worst) = (0.0, 0.0, 0.0, 0.0f64);
    for (k, a) in analytic.iter().enumerate() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[k] += h;
        minus[k] -= h;
        let lp = loss_and_gradient(&params.from_flat(&plus), data, settings, false).0;
        let lm = loss_and_gradient(&params.from_flat(&minus), data, settings, false).0;
        let f = (lp - lm) / (2.0 * h);
        diff += (a - f) * (a - f);
        na += a * a;
        nf += f * f;
        worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(GRADIENT_FLOOR));
    }
    (diff.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-12), worst)
}

fn run_pipeline(out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_evitlab"))
        .args(["--seed", "0", "--out"])
        .arg(out)
        .arg("pipeline")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn main() {
    let mut report = Report { failures: 0 };
    let config = PopulationConfig::default();

    // 1. Task count on the default population.
    let started = Instant::now();
    let population = generate_population(&config, 0).expect("population");
    let bundles = bundles_from_population(&population).expect("bundles");
    let dataset = build_transfer_dataset(&bundles, 10, 0).expect("tasks");
    let elapsed = started.elapsed().as_secs_f64();
    report.record(
        1,
        "task count",
        dataset.len() == 380 && elapsed < 60.0,
        format!("{} records in {elapsed:.1}s", dataset.len()),
    );

    // 2. Null expected utility.
    let eu0 = null_expected_utility(200, &UtilityTable::default());
    report.record(2, "null expected utility", (eu0 + 3666.67).abs() <= 0.01, format!("EU(T0) = {eu0:.4}"));

    // 3. Simplex closure over every task.
    let open = dataset.records.iter().filter(|r| r.tr + r.fpr + r.fnr != 1.0).count();
    let in_range = dataset.records.iter().all(|r| r.quality().is_closed());
    report.record(
        3,
        "simplex closure",
        open == 0 && in_range,
        format!("{open} of {} records not closed", dataset.len()),
    );

    // 4. Similarity/true-rate correlation.
    let s: Vec<f64> = dataset.records.iter().map(|r| r.varsigma).collect();
    let tr: Vec<f64> = dataset.records.iter().map(|r| r.tr).collect();
    let rho = spearman(&s, &tr);
    report.record(4, "similarity/TR correlation", rho > 0.5, format!("Spearman = {rho:.3}"));

    // 5. Monotone EVIT from the trained default model.
    let train_config = TrainConfig { seed: config.seed + 1, ..Default::default() };
    let params = train(&dataset, &train_config).expect("training").params;
    let utilities = UtilityTable::default();
    let curve = evit_curve(&params, &unit_grid(100), 200, &utilities).expect("curve");
    let values: Vec<f64> = curve.iter().map(|r| r.evit).collect();
    let violation = monotone_violation(&values);
    report.record(
        5,
        "monotone EVIT",
        violation < 0.01,
        format!("violation {:.4}% of range, EVIT {:.1} .. {:.1}", 100.0 * violation, values[0], values[99]),
    );

    // 6. Positive-transfer threshold.
    let threshold = positive_transfer_threshold(&params, 200, &utilities, 1e-6).expect("threshold");
    let ok = threshold.is_some_and(|t| (0.6..=0.9).contains(&t));
    let min_tr = tr.iter().copied().fold(1.0, f64::min);
    let max_fnr = dataset.records.iter().map(|r| r.fnr).fold(0.0, f64::max);
    report.record(
        6,
        "threshold existence",
        ok,
        format!(
            "threshold = {threshold:?}, EVIT({:.2}) = {:.1}; observed TR >= {min_tr:.3}, FNR <= {max_fnr:.3}",
            curve[0].varsigma, curve[0].evit
        ),
    );

    // 7. Dirichlet NLL closed forms.
    let q = |tr, fpr, fnr| QualityVector { tr, fpr, fnr };
    let uniform = [q(0.2, 0.3, 0.5), q(0.6, 0.1, 0.3), q(0.9, 0.05, 0.05)]
        .iter()
        .map(|qv| (dirichlet_nll([1.0, 1.0, 1.0], qv, 1e-6).unwrap() + 2f64.ln()).abs())
        .fold(0.0, f64::max);
    let skewed = (dirichlet_nll([2.0, 1.0, 1.0], &q(0.5, 0.25, 0.25), 1e-6).unwrap() + 3f64.ln()).abs();
    report.record(
        7,
        "Dirichlet NLL",
        uniform < 1e-9 && skewed < 1e-9,
        format!("|err| uniform {uniform:.1e}, (2,1,1) {skewed:.1e}"),
    );

    // 8. Analytic versus finite-difference gradient on the default task set.
    let data = PreparedData::new(&dataset, 1e-6).expect("prepared");
    let settings = LossSettings { lambda: 1.0, penalty_mode: PenaltyMode::Hinge };
    let (norm_worst, param_worst) = (0..50u64)
        .map(|k| gradient_relative_error(&MlpParams::init(1000 + k, 0.5), &data, settings))
        .fold((0.0f64, 0.0f64), |acc, e| (acc.0.max(e.0), acc.1.max(e.1)));
    report.record(
        8,
        "gradient check",
        norm_worst < 1e-4 && param_worst < 1e-4,
        format!("worst relative error over 50 points: norm-wise {norm_worst:.2e}, per parameter {param_worst:.2e}"),
    );

    // 9. Oracle equivalences.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut assignment_ok = 0;
    for case in 0..100 {
        let n = 1 + case % 6;
        let phi_s = DMatrix::from_fn(8, n, |_, _| rng.random_range(-1.0..1.0));
        let phi_t = DMatrix::from_fn(8, n, |_, _| rng.random_range(-1.0..1.0));
        let mut m = mac_matrix(&phi_s, &phi_t).unwrap();
        m.permutation = optimal_permutation(&m);
        let mut best = f64::NEG_INFINITY;
        for_each_permutation(n, &mut |p| best = best.max(p.iter().enumerate().map(|(i, &j)| m.values[(i, j)]).sum()));
        if (m.trace() - best).abs() < 1e-12 {
            assignment_ok += 1;
        }
    }
    let source = bundles[0].dataset.clone();
    let knn_ok = (0..100)
        .filter(|_| {
            let row = &source.features[rng.random_range(0..source.len())];
            let query: Vec<f64> = row.iter().map(|v| v * (1.0 + rng.random_range(-0.02..0.02))).collect();
            knn_predict(&source, &query).unwrap() == brute_force_nearest(&source, &query)
        })
        .count();
    let two_dof = SystemRealisation::chain(vec![1.0, 1.0], vec![1.0, 1.0]);
    let lambdas: Vec<f64> = modal_analysis(&two_dof).unwrap().natural_frequencies.iter().map(|w| w * w).collect();
    let eig_err = (lambdas[0] - 0.381966011250105).abs().max((lambdas[1] - 2.618033988749895).abs());
    let alpha = forward(&params, 0.85).unwrap();
    let analytic = expected_utility(alpha, 200, &utilities);
    let mc = expected_utility_sampled(alpha, 200, &utilities, 1_000_000, 99).unwrap();
    let z = (analytic - mc.mean).abs() / mc.std_error;
    report.record(
        9,
        "oracle equivalences",
        assignment_ok == 100 && knn_ok == 100 && eig_err < 1e-9 && z < 3.0,
        format!(
            "assignment {assignment_ok}/100, 1-NN {knn_ok}/100, 2-DoF eigen err {eig_err:.1e}, EU |z| = {z:.2} ({analytic:.2} vs {:.2})",
            mc.mean
        ),
    );

    // 10. Normal-condition alignment moments and zero-noise self transfer.
    let (src, tgt) = (&bundles[0].dataset, &bundles[1].dataset);
    let (ss, ts) = (normal_stats(src).unwrap(), normal_stats(tgt).unwrap());
    let aligned: Vec<Vec<f64>> = tgt
        .features
        .iter()
        .zip(&tgt.labels)
        .filter(|(_, &l)| l == 0)
        .map(|(x, _)| nca_align(x, &ts, &ss).unwrap())
        .collect();
    let aligned_stats = normal_stats(&LabelledDataset { labels: vec![0; aligned.len()], features: aligned }).unwrap();
    let moment_err = aligned_stats
        .mean
        .iter()
        .zip(&ss.mean)
        .chain(aligned_stats.std.iter().zip(&ss.std))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let quiet = PopulationConfig { n_structures: 1, feature_noise_std: 0.0, ..Default::default() };
    let quiet_bundle = bundles_from_population(&generate_population(&quiet, 0).unwrap()).unwrap();
    let self_tr = run_task(&quiet_bundle[0], &quiet_bundle[0], 10).unwrap().tr;
    report.record(
        10,
        "NCA alignment",
        moment_err < 1e-10 && self_tr == 1.0,
        format!("max moment error {moment_err:.1e}, zero-noise self-transfer TR = {self_tr}"),
    );

    // 11. Determinism of the full pipeline.
    let dir = tempfile::tempdir().expect("tempdir");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ran = run_pipeline(&a) && run_pipeline(&b);
    let files = ["population.json", "tasks.csv", "model.json", "evit.csv"];
    let identical = files
        .iter()
        .filter(|f| matches!((std::fs::read(a.join(f)), std::fs::read(b.join(f))), (Ok(x), Ok(y)) if x == y))
        .count();
    report.record(
        11,
        "determinism",
        ran && identical == files.len(),
        format!("{identical}/{} artifacts byte-identical across two pipeline runs", files.len()),
    );

    println!("{} of 11 criteria passed", 11 - report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
