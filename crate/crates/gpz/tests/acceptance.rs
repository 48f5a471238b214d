//! Acceptance suite: one PASS/FAIL line per criterion, followed by the
//! measured values. Exits nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use gpz::format::{self, FormatError};
use gpz::pipeline::{self, PipelineConfig, PipelineRun, OUTPUT_FILES};
use gpz_core::cost::{energy_metrics, tx_bytes, Precision};
use gpz_core::datagen::{gaussian_mixture, Dataset, MixtureSpec};
use gpz_core::dynamics::{
    analyze_class, delta_r2_first_order, delta_r2_oracle, feature_grad_bounds, residual_norm_bounds, ClassSample,
};
use gpz_core::entropy::{bridge_residual, class_surrogate, gaussian_entropy, quantized_entropy};
use gpz_core::gpz::{locate, profiles_from_normalized, stability_check, LayerRadiusProfile, DEFAULT_TAU};
use gpz_core::linalg::{determinant, log_det_spd, norm, Matrix};
use gpz_core::micronet::{
    extract, init_model, representation_gradient, sample_gradients, target_row, train, MlpModel, SgdConfig, Target,
    TargetScheme,
};
use gpz_core::repr_stats::class_stats;
use gpz_core::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Default)]
struct Check {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Check {
    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn require(&mut self, ok: bool, s: impl Into<String>) {
        let s = s.into();
        if !ok {
            self.failures.push(s.clone());
        }
        self.notes.push(format!("{} {s}", if ok { "ok  " } else { "FAIL" }));
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_psd(rng: &mut impl Rng, d: usize) -> Matrix {
    let a = random_matrix(rng, d, d);
    a.matmul(&a.transpose()).unwrap()
}

fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cost_model(c: &mut Check) {
    let a = tx_bytes(&[256, 16, 16], Precision::Fp32).unwrap();
    let b = tx_bytes(&[512, 4, 4], Precision::Fp32).unwrap();
    c.require(a == 262_144, format!("tx_bytes(256x16x16, fp32) = {a}"));
    c.require(b == 32_768, format!("tx_bytes(512x4x4, fp32) = {b}"));
    let m = energy_metrics(498.6036, 500, 628.1730 / 498.6036, 1.826e9).unwrap();
    c.require((m.e_inf - 0.9972).abs() <= 1e-4, format!("E_inf = {:.6} J (0.9972)", m.e_inf));
    c.require((m.ed2p - 791.4130).abs() <= 0.01, format!("ED2P = {:.4} (791.4130)", m.ed2p));
    c.require(
        (m.gflops_per_watt - 0.003662).abs() <= 1e-5,
        format!("GFLOPs/W = {:.6} (0.003662)", m.gflops_per_watt),
    );
}

fn bridge(c: &mut Check) {
    let mut rng = stream_rng(2, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
    let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + 100f64.ln();
    let h = quantized_entropy(&xs, 1, 0.01).unwrap();
    c.require((h - expected).abs() <= 0.05, format!("H(Q_0.01) = {h:.4} nats (expected {expected:.4} +- 0.05)"));
    let h_ref = gaussian_entropy(&[1.0]).unwrap();
    let residuals: Vec<f64> = [0.1, 0.05, 0.01]
        .iter()
        .map(|&d| bridge_residual(&xs, 1, d, h_ref).unwrap())
        .collect();
    let shrinking = residuals.windows(2).all(|w| w[1].abs() < w[0].abs());
    c.require(
        shrinking,
        format!(
            "|residual| at delta 0.1, 0.05, 0.01 = {:.2e}, {:.2e}, {:.2e} shrinks monotonically",
            residuals[0].abs(),
            residuals[1].abs(),
            residuals[2].abs()
        ),
    );
    if !shrinking {
        c.note(format!(
            "     signed residuals {:.2e}, {:.2e}, {:.2e}",
            residuals[0], residuals[1], residuals[2]
        ));
        c.note(
            "     the true residual (about delta^2/24, 4e-4 down to 4e-6) is below the estimator's sampling \
             error (about 2e-3 at N = 1e5), so the ordering is not resolvable at this N",
        );
    }
}

fn det_trace(c: &mut Check) {
    let mut rng = stream_rng(3, 0);
    let ln_2pi_e = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let (mut violations, mut worst_iso, mut surrogate_violations) = (0, 0.0f64, 0);
    for _ in 0..200 {
        let d = rng.random_range(1..=6);
        let s = random_psd(&mut rng, d);
        let det = determinant(&s).unwrap();
        let bound = (s.trace() / d as f64).powi(d as i32);
        if det > bound * (1.0 + 1e-12) {
            violations += 1;
        }
        let scale = rng.random_range(0.1..5.0);
        let iso = Matrix::from_fn(d, d, |i, j| if i == j { scale } else { 0.0 });
        let (det, bound) = (determinant(&iso).unwrap(), (iso.trace() / d as f64).powi(d as i32));
        worst_iso = worst_iso.max((det - bound).abs() / bound);

        let mut reg = s.clone();
        for i in 0..d {
            reg[(i, i)] += 1e-3;
        }
        let exact = 0.5 * (d as f64 * ln_2pi_e + log_det_spd(&reg).unwrap());
        if class_surrogate(reg.trace(), d).unwrap() < exact - 1e-9 {
            surrogate_violations += 1;
        }
    }
    c.require(violations == 0, format!("det <= (tr/d)^d on 200 PSD matrices, {violations} violations"));
    c.require(worst_iso <= 1e-9, format!("isotropic equality, worst relative gap {worst_iso:.1e}"));
    c.require(
        surrogate_violations == 0,
        format!("Gaussian entropy at fixed trace <= surrogate, {surrogate_violations} violations"),
    );
}

fn dynamics_instance(rng: &mut impl Rng, seed: u64) -> (MlpModel, Dataset, usize, usize) {
    let k = rng.random_range(2..=5);
    let d = rng.random_range(2..=8);
    let d0 = rng.random_range(2..=6);
    let model = init_model(d0, &[d, rng.random_range(2..=8)], k, seed).unwrap();
    let n = rng.random_range(3..=10);
    let class = rng.random_range(0..k);
    let inputs: Vec<f32> = (0..n * d0).map(|_| rng.random_range(0.0f32..1.0)).collect();
    (model, Dataset::new(inputs, vec![class as u32; n], k, d0).unwrap(), class, k)
}

fn dynamics(c: &mut Check) {
    let gamma = 1e-2;
    let mut rng = stream_rng(4, 0);
    for (scheme_id, name) in ["onehot", "ls:0.3", "prior:0.3"].iter().enumerate() {
        let (mut worst, mut lo, mut hi, mut exact) = (0.0f64, f64::INFINITY, 0.0f64, 0);
        for t in 0..100 {
            let (model, ds, class, k) = dynamics_instance(&mut rng, 4000 + t);
            let scheme = match scheme_id {
                0 => TargetScheme::OneHot,
                1 => TargetScheme::LabelSmoothing { alpha: 0.3 },
                _ => TargetScheme::PriorSmoothing {
                    alpha: 0.3,
                    prior: random_simplex(&mut rng, k).into_iter().map(|p| 0.5 * p + 0.5 / k as f64).collect(),
                },
            };
            let full = analyze_class(&model, &ds, 0, class, &scheme, gamma).unwrap();
            let half = analyze_class(&model, &ds, 0, class, &scheme, gamma / 2.0).unwrap();
            worst = worst.max(full.abs_err / (gamma * gamma));
            if full.abs_err > 1e-14 {
                let ratio = full.abs_err / half.abs_err;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            } else {
                exact += 1;
            }
        }
        c.require(worst <= 10.0, format!("{name}: max |pred - oracle| = {worst:.3} gamma^2 over 100 instances"));
        c.require(
            (3.0..=5.0).contains(&lo) && (3.0..=5.0).contains(&hi),
            format!("{name}: halving gamma divides the error by {lo:.3}..{hi:.3} ({exact} instances exact to 1e-14)"),
        );
    }

    let samples = [
        ClassSample {
            z: vec![1.0, 0.0],
            jacobian: Matrix::identity(2),
            probs: vec![0.9, 0.1],
        },
        ClassSample {
            z: vec![-1.0, 0.0],
            jacobian: Matrix::identity(2),
            probs: vec![0.5, 0.5],
        },
    ];
    let pred = delta_r2_first_order(&samples, 0, &TargetScheme::OneHot, gamma).unwrap();
    let zs: Vec<Vec<f64>> = samples.iter().map(|s| s.z.clone()).collect();
    let grads = vec![vec![-0.1, 0.1], vec![-0.5, 0.5]];
    let oracle = delta_r2_oracle(&zs, &grads, gamma, true).unwrap();
    c.require(
        (pred + 0.004).abs() < 1e-12 && (oracle + 0.003992).abs() < 1e-12,
        format!("hand case: predicted {pred:.6}, oracle {oracle:.6}"),
    );
}

fn bound_suite(c: &mut Check) {
    let mut rng = stream_rng(5, 0);
    let alphas = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
    let (mut onehot_bad, mut ls_bad, mut ls_checked) = (0, 0, 0);
    for i in 0..10_000 {
        let k = 2 + i % 9;
        let alpha = alphas[(i / 9) % alphas.len()];
        let p = random_simplex(&mut rng, k);
        let class = rng.random_range(0..k);
        let b = residual_norm_bounds(&p, class, alpha).unwrap();
        let dist = |q: &[f64]| norm(&p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist(&target_row(&TargetScheme::OneHot, class, k).unwrap()) > b.onehot_ub + 1e-12 {
            onehot_bad += 1;
        }
        if b.epsilon < alpha {
            ls_checked += 1;
            if dist(&target_row(&TargetScheme::LabelSmoothing { alpha }, class, k).unwrap()) < b.ls_lb - 1e-12 {
                ls_bad += 1;
            }
        }
    }
    c.require(onehot_bad == 0, format!("|p - e_c| <= sqrt2 eps on 10^4 points, {onehot_bad} violations"));
    c.require(
        ls_bad == 0,
        format!("|p - q_LS| >= (alpha - eps) sqrt(K/(K-1)) on {ls_checked} points with eps < alpha, {ls_bad} violations"),
    );

    let p = [0.9, 0.1];
    let b = residual_norm_bounds(&p, 0, 0.3).unwrap();
    let ls = target_row(&TargetScheme::LabelSmoothing { alpha: 0.3 }, 0, 2).unwrap();
    let measured = norm(&[p[0] - ls[0], p[1] - ls[1]]);
    c.require(
        (measured - 0.282843).abs() < 5e-7 && (b.ls_lb - measured).abs() < 1e-12,
        format!("K = 2 equality: |p - q_LS| = {measured:.6}, bound {:.6}", b.ls_lb),
    );

    let mut sandwich_bad = 0;
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let d = rng.random_range(1..=8);
        let mut j = random_matrix(&mut rng, k, d);
        if k > 1 && rng.random_bool(0.3) {
            for col in 0..d {
                j[(k - 1, col)] = j[(0, col)];
            }
        }
        let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let g = feature_grad_bounds(&j, &v).unwrap();
        let slack = 1e-9 * g.upper.max(1.0);
        if !(g.lower <= g.measured + slack && g.measured <= g.upper + slack) {
            sandwich_bad += 1;
        }
    }
    c.require(sandwich_bad == 0, format!("SVD sandwich on 200 random matrices, {sandwich_bad} violations"));
}

fn locator(c: &mut Check, standard: Option<&(PipelineConfig, PipelineRun)>) {
    let r = locate(&profiles_from_normalized(&[10.0, 9.0, 8.5, 2.0, 1.9]).unwrap(), 0.20).unwrap();
    c.require(
        r.l_tp == 3 && r.localized && r.zone == [3],
        format!(
            "hand trace: l_TS {} l_TP {} (edge 8.5 -> 2 ends at position 3), localized {}",
            r.l_ts, r.l_tp, r.localized
        ),
    );

    let profiles: Vec<LayerRadiusProfile> = [64usize, 32, 16, 8, 4]
        .iter()
        .enumerate()
        .map(|(i, &d)| LayerRadiusProfile::new(i, format!("l{i}"), d, 0.25 * d as f64).unwrap())
        .collect();
    let r = locate(&profiles, DEFAULT_TAU).unwrap();
    c.require(!r.peak_above_tau, format!("r2 proportional to d: peak_above_tau = {}", r.peak_above_tau));

    let Some((cfg, run)) = standard else {
        c.require(false, "standard checkpoint unavailable");
        return;
    };
    let reports: Vec<_> = (1..=3)
        .map(|s| {
            let ds = gaussian_mixture(MixtureSpec {
                seed: 1000 + s,
                ..cfg.mixture()
            })
            .unwrap();
            let layers: Vec<usize> = (0..run.model.num_layers()).collect();
            pipeline::locate_report(&extract(&run.model, &ds, &layers).unwrap(), cfg.tau).unwrap().0
        })
        .collect();
    let s = stability_check(&reports).unwrap();
    let zones: Vec<String> = reports.iter().map(|r| format!("{:?}", r.zone)).collect();
    c.require(
        s.agreement == 1.0 && s.mean_jaccard == 1.0,
        format!(
            "three eval seeds on the seed-1 checkpoint: zones {}, agreement {:.0}/3, mean Jaccard {:.2}",
            zones.join(" "),
            s.agreement * 3.0,
            s.mean_jaccard
        ),
    );
}

fn transition(c: &mut Check, standard: Option<&(PipelineConfig, PipelineRun)>) {
    let Some((cfg, run)) = standard else {
        c.require(false, "standard pipeline did not run");
        return;
    };
    let mse: Vec<f64> = run.inversion.layers.iter().map(|l| l.test_mse).collect();
    let l_tp = run.gpz.l_tp;
    let ratio = mse[l_tp] / mse[0];
    let (max_layer, _) = (1..mse.len())
        .map(|l| (l, mse[l] - mse[l - 1]))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    c.note(format!(
        "seed {}, scheme {}, accuracy {:.4}; decoder {:?} epochs {} lr {}",
        cfg.seed, cfg.scheme, run.train.accuracy.0, cfg.decoder.hidden, cfg.decoder.epochs, cfg.decoder.lr
    ));
    c.note(format!(
        "r2_norm profile {:?}",
        run.profiles.iter().map(|p| format!("{:.3e}", p.r2_norm)).collect::<Vec<_>>()
    ));
    c.note(format!(
        "drops % {:?}",
        run.gpz.drops.iter().map(|d| d.pct.map(|v| format!("{v:.1}"))).collect::<Vec<_>>()
    ));
    c.note(format!(
        "l_TS {} l_TP {} zone {:?} localized {} peak_above_tau {}",
        run.gpz.l_ts, l_tp, run.gpz.zone, run.gpz.localized, run.gpz.peak_above_tau
    ));
    if !run.gpz.peak_above_tau {
        c.note("     no drop exceeds tau here: the radius grows with depth and l_TP marks the smallest increase");
    }
    c.note(format!("test MSE per layer {:?}", mse.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>()));
    c.require(ratio >= 2.0, format!("MSE[l_TP = {l_tp}] / MSE[0] = {ratio:.2} (>= 2)"));
    c.require(
        max_layer.abs_diff(l_tp) <= 1,
        format!("largest MSE increase at layer {max_layer}, within 1 of l_TP = {l_tp}"),
    );
}

fn class_avg_r2(model: &MlpModel, ds: &Dataset, layer: usize) -> f64 {
    class_stats(&extract(model, ds, &[layer]).unwrap().batches[0]).unwrap().r2_class_avg
}

fn ls_contraction(c: &mut Check) {
    let mut wins = 0;
    for seed in 1..=5 {
        let cfg = PipelineConfig::standard(seed);
        let ds = gaussian_mixture(cfg.mixture()).unwrap();
        let sgd: SgdConfig = cfg.sgd();
        let fit = |scheme: TargetScheme| {
            let m = init_model(ds.dim(), &cfg.arch, ds.classes(), seed).unwrap();
            train(m, &ds, &scheme, sgd).unwrap().model
        };
        let onehot = fit(TargetScheme::OneHot);
        let ls = fit(TargetScheme::LabelSmoothing { alpha: 0.3 });
        let deepest = [onehot.num_layers() - 2, onehot.num_layers() - 1];
        let a: Vec<f64> = deepest.iter().map(|&l| class_avg_r2(&onehot, &ds, l)).collect();
        let b: Vec<f64> = deepest.iter().map(|&l| class_avg_r2(&ls, &ds, l)).collect();
        let smaller = a.iter().zip(&b).all(|(o, l)| l < o);
        wins += smaller as usize;
        c.note(format!(
            "seed {seed}: layers {deepest:?} onehot [{:.3e}, {:.3e}] ls:0.3 [{:.3e}, {:.3e}] {}",
            a[0],
            a[1],
            b[0],
            b[1],
            if smaller { "smaller" } else { "not smaller" }
        ));
    }
    c.require(wins >= 4, format!("LS smaller at both deepest layers in {wins}/5 seeds (>= 4)"));
}

fn numerics(c: &mut Check) {
    let mut rng = stream_rng(9, 0);
    let mut worst_bp = 0.0f64;
    let (mut bp_bad, mut compared) = (0, 0);
    for m in 0..20 {
        let k = rng.random_range(2..=4);
        let d0 = rng.random_range(2..=5);
        let model = init_model(d0, &[rng.random_range(2..=6), rng.random_range(2..=6)], k, 900 + m).unwrap();
        let x: Vec<f64> = (0..d0).map(|_| rng.random_range(0.0..1.0)).collect();
        let q = target_row(&TargetScheme::LabelSmoothing { alpha: 0.1 }, rng.random_range(0..k), k).unwrap();
        let (_, grads) = sample_gradients(&model, &x, Target::CrossEntropy(&q)).unwrap();
        let loss = |mm: &MlpModel| sample_gradients(mm, &x, Target::CrossEntropy(&q)).unwrap().0;
        for (l, layer) in model.layers().iter().enumerate() {
            for idx in 0..layer.weights().len() {
                let w0 = layer.weights()[idx];
                let (mut plus, mut minus) = (model.clone(), model.clone());
                plus.layers_mut()[l].weights_mut()[idx] = w0 + 1e-4;
                minus.layers_mut()[l].weights_mut()[idx] = w0 - 1e-4;
                let h = plus.layers()[l].weights()[idx] as f64 - minus.layers()[l].weights()[idx] as f64;
                let fd = (loss(&plus) - loss(&minus)) / h;
                let g = grads.weights[l][idx];
                let err = (g - fd).abs();
                let rel = err / g.abs().max(fd.abs()).max(1e-4);
                worst_bp = worst_bp.max(rel);
                compared += 1;
                if rel > 1e-3 && err >= 1e-7 {
                    bp_bad += 1;
                }
            }
        }
        for l in 0..model.num_layers() {
            let via_bp = representation_gradient(&model, &x, Target::CrossEntropy(&q), l).unwrap();
            let trace = model.forward_f64(&x).unwrap();
            let delta: Vec<f64> = trace.probs.iter().zip(&q).map(|(p, q)| p - q).collect();
            let via_j = model.jacobian_at(&trace, l).unwrap().t_matvec(&delta).unwrap();
            if via_j.iter().zip(&via_bp).any(|(a, b)| (a - b).abs() > 1e-6) {
                bp_bad += 1;
            }
        }
    }
    c.require(bp_bad == 0, format!("backprop vs finite differences, {compared} weights in 20 models, worst relative error {worst_bp:.1e}"));

    let (mut checked, mut kinks, mut worst_j) = (0, 0, 0.0f64);
    for m in 0..20 {
        let d0 = rng.random_range(2..=5);
        let model = init_model(d0, &[rng.random_range(2..=6), rng.random_range(2..=6)], 3, 950 + m).unwrap();
        let x: Vec<f32> = (0..d0).map(|_| rng.random_range(0.0f32..1.0)).collect();
        let trace = model.forward(&x).unwrap();
        for l in 0..model.num_layers() - 1 {
            let near_kink = trace.pre_activations[l + 1..model.num_layers() - 1]
                .iter()
                .flatten()
                .any(|v| v.abs() < 1e-3);
            if near_kink {
                kinks += 1;
                continue;
            }
            let j = model.jacobian(&x, l).unwrap();
            let z = &trace.activations[l];
            let h = 1e-6;
            let scale = j.as_slice().iter().fold(1e-8f64, |a, v| a.max(v.abs()));
            for col in 0..z.len() {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[col] += h;
                zm[col] -= h;
                let (op, om) = (model.forward_from(l, &zp).unwrap(), model.forward_from(l, &zm).unwrap());
                for row in 0..j.rows() {
                    let fd = (op[row] - om[row]) / (2.0 * h);
                    worst_j = worst_j.max((fd - j[(row, col)]).abs() / scale);
                }
            }
            checked += 1;
        }
    }
    c.require(
        worst_j <= 1e-6,
        format!("Jacobian vs finite differences at {checked} points ({kinks} skipped near a kink), worst {worst_j:.1e}"),
    );
}

fn io(c: &mut Check) {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_gpz");
    for out in ["r1", "r2"] {
        let status = Command::new(bin)
            .args(["pipeline", "--seed", "1", "--out-dir", out])
            .current_dir(dir.path())
            .output()
            .unwrap();
        c.require(status.status.success(), format!("gpz pipeline --seed 1 --out-dir {out}"));
    }
    let differing: Vec<&str> = OUTPUT_FILES
        .iter()
        .copied()
        .filter(|f| std::fs::read(dir.path().join("r1").join(f)).ok() != std::fs::read(dir.path().join("r2").join(f)).ok())
        .collect();
    c.require(
        differing.is_empty(),
        format!("{} output files byte-identical across two runs; differing {differing:?}", OUTPUT_FILES.len()),
    );

    let r1 = dir.path().join("r1");
    let read = |name: &str| std::fs::read(r1.join(name)).unwrap_or_default();
    let (data, model, acts) = (read("data.gpzd"), read("model.gpzm"), read("acts.gpza"));
    let round_trip = |bytes: &[u8], name: &str| -> bool {
        let re = match name {
            "GPZD" => format::decode_dataset(bytes).and_then(|d| format::encode_dataset(&d)),
            "GPZM" => format::decode_model(bytes).and_then(|m| format::encode_model(&m)),
            _ => format::decode_activations(bytes).and_then(|a| format::encode_activations(&a)),
        };
        re.map(|r| r == bytes).unwrap_or(false)
    };
    for (bytes, name) in [(&data, "GPZD"), (&model, "GPZM"), (&acts, "GPZA")] {
        c.require(round_trip(bytes, name), format!("{name} decode/encode is bit-exact ({} bytes)", bytes.len()));
    }

    let corruptions: Vec<(&str, Vec<u8>, Box<dyn Fn(&[u8]) -> Result<(), FormatError>>)> = vec![
        ("GPZD magic", patch(&data, 0, b"XPZD"), Box::new(|b| format::decode_dataset(b).map(drop))),
        ("GPZM version", patch(&model, 4, &9u32.to_le_bytes()), Box::new(|b| format::decode_model(b).map(drop))),
        ("GPZA layer_count", patch(&acts, 8, &0u32.to_le_bytes()), Box::new(|b| format::decode_activations(b).map(drop))),
        ("GPZA truncated", acts[..acts.len().saturating_sub(1)].to_vec(), Box::new(|b| format::decode_activations(b).map(drop))),
    ];
    for (what, bytes, decode) in corruptions {
        match decode(&bytes) {
            Err(e) => match e.location() {
                Some((field, offset)) => c.require(true, format!("{what}: field `{field}` at byte {offset}")),
                None => c.require(false, format!("{what}: error without location: {e}")),
            },
            Ok(()) => c.require(false, format!("{what}: accepted")),
        }
    }
}

fn patch(bytes: &[u8], at: usize, with: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if out.len() >= at + with.len() {
        out[at..at + with.len()].copy_from_slice(with);
    }
    out
}

fn standard_run() -> Result<(PipelineConfig, PipelineRun), String> {
    let cfg = PipelineConfig::standard(1);
    let run = pipeline::run(&cfg).map_err(|e| format!("{e:#}"))?;
    Ok((cfg, run))
}

fn main() -> ExitCode {
    let standard = standard_run();
    if let Err(e) = &standard {
        eprintln!("standard pipeline failed: {e}");
    }
    let standard = standard.as_ref().ok();

    type Criterion<'a> = (&'a str, Box<dyn Fn(&mut Check) + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("cost model", Box::new(cost_model)),
        ("quantization bridge", Box::new(bridge)),
        ("determinant-trace and Gaussian maximality", Box::new(det_trace)),
        ("first-order dynamics vs oracle", Box::new(dynamics)),
        ("residual and gradient bounds", Box::new(bound_suite)),
        ("zone locator", Box::new(move |c| locator(c, standard))),
        ("transition analog", Box::new(move |c| transition(c, standard))),
        ("label-smoothing contraction", Box::new(ls_contraction)),
        ("numerics", Box::new(numerics)),
        ("I/O", Box::new(io)),
    ];

    let mut failed = Vec::new();
    for (i, (title, check)) in criteria.iter().enumerate() {
        let mut c = Check::default();
        let started = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut c)));
        if outcome.is_err() {
            c.failures.push("panicked".into());
        }
        let pass = c.failures.is_empty();
        println!(
            "{} criterion {}: {title} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            started.elapsed().as_secs_f64()
        );
        for n in &c.notes {
            println!("    {n}");
        }
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
