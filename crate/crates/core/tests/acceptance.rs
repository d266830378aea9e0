//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::{
    brute_force_is, covariance, disk_corpus, fd_discriminator, fd_generator, jacobi_eigen, random_batch, tiny_config,
    toy_setup, FD_TOL,
};
use metalgan_core::advloss::{bce_with_logits, discriminator_gradient, generator_gradient, Label, LossWeights};
use metalgan_core::colorlab::{lab_pixel_to_rgb, rgb_pixel_to_lab};
use metalgan_core::datapipe::toy::{class_of_id, toy_corpus, TOY_CLASSES};
use metalgan_core::datapipe::{Pair, PairStore};
use metalgan_core::evalkit::{evaluate, inception_score_from_probs, ColorPrototypeClassifier, LabelModel};
use metalgan_core::metatrain::{
    load_checkpoint, reptile_update, save_checkpoint, train_cgan, train_metalgan, Adaptation, Mode, NetColorizer,
    TrainConfig, TrainState,
};
use metalgan_core::netcore::{DiscriminatorArch, DiscriminatorNet, GeneratorArch, GeneratorNet, Network, Phase};
use metalgan_core::rng::substream;
use metalgan_core::taskforge::{
    fit_pca, kmeans, mac_descriptor, BackboneConfig, ConvBackbone, Descriptor, DescriptorSource, FeatureExtractor,
    TaskSet,
};
use rand::Rng as _;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn reptile_exactness() -> Result<String, String> {
    let mut rng = substream(1, "reptile");
    let theta: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let tilde: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let apply = |lambda: f64, to: &[f64]| {
        let mut t = theta.clone();
        reptile_update(&mut t, to, lambda).unwrap();
        t
    };
    ensure(apply(0.0, &tilde) == theta, || "stepsize 0 moved θ".into())?;
    ensure(apply(1.0, &tilde) == tilde, || "stepsize 1 did not land on θ̃".into())?;
    for lambda in [0.1, 0.5, 0.9] {
        ensure(apply(lambda, &theta) == theta, || format!("θ̃ = θ moved θ at {lambda}"))?;
    }
    let mut t = vec![1.0, -2.0, 0.5];
    reptile_update(&mut t, &[3.0, 2.0, 0.5], 0.25).unwrap();
    ensure(t == [1.5, -1.0, 0.5], || format!("worked example gave {t:?}"))?;
    let half = apply(0.5, &tilde);
    let worst = half
        .iter()
        .zip(theta.iter().zip(&tilde))
        .map(|(h, (a, b))| (h - 0.5 * (a + b)).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-15, || format!("midpoint off by {worst:e}"))?;
    Ok(format!("10^4 dims, midpoint max dev {worst:.1e}"))
}

fn gradient_fidelity() -> Result<String, String> {
    let g = GeneratorArch { depth: 1, base_width: 2 };
    let d = DiscriminatorArch {
        n_blocks: 1,
        base_width: 2,
        patch: false,
    };
    let worst = [
        fd_generator(g, d, 1, 8, Phase::Eval),
        fd_generator(g, d, 2, 8, Phase::Train),
        fd_discriminator(g, d, 1, 8, Phase::Eval),
        fd_discriminator(g, d, 2, 8, Phase::Train),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(worst < FD_TOL, || format!("worst relative error {worst:.3e}"))?;
    Ok(format!("worst relative error {worst:.2e} (step 1e-5)"))
}

fn loss_composition() -> Result<String, String> {
    let g = GeneratorNet::with_seed(GeneratorArch { depth: 2, base_width: 4 }, 5).unwrap();
    let d = DiscriminatorNet::with_seed(
        DiscriminatorArch {
            n_blocks: 2,
            base_width: 4,
            patch: false,
        },
        6,
    )
    .unwrap();
    let b = random_batch(3, 16, 7);
    let w = LossWeights { w_adv: 1.0, w_l1: 100.0 };
    let fake = g.forward(&b.l, Phase::Train).unwrap();
    let l1 = fake.data.iter().zip(&b.ab.data).map(|(a, t)| (a - t).abs()).sum::<f64>() / fake.data.len() as f64;
    let softplus = |z: f64| z.max(0.0) + (-z.abs()).exp().ln_1p();
    let fake_logits = d.logits(&b.l.concat_channels(&fake).unwrap(), Phase::Train).unwrap();
    let real_logits = d.logits(&b.l.concat_channels(&b.ab).unwrap(), Phase::Train).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let adv = mean(fake_logits.iter().map(|&z| softplus(-z)).collect());
    let d_loss = mean(real_logits.iter().map(|&z| softplus(-z)).collect()) + mean(fake_logits.iter().map(|&z| softplus(z)).collect());

    let gg = generator_gradient(&g, &d, &b, &w, Phase::Train).unwrap();
    let dg = discriminator_gradient(&d, &g, &b, Phase::Train).unwrap();
    let err_g = (gg.bundle.loss_value - (adv + 100.0 * l1)).abs();
    let err_d = (dg.bundle.loss_value - d_loss).abs();
    ensure(err_g < 1e-12 * (adv + 100.0 * l1), || format!("generator objective off by {err_g:e}"))?;
    ensure(err_d < 1e-12 * d_loss, || format!("discriminator objective off by {err_d:e}"))?;
    ensure((bce_with_logits(&[0.0], Label::Real).0 - std::f64::consts::LN_2).abs() < 1e-15, || "bce(0) != ln 2".into())?;
    Ok(format!("|ΔL_G| {err_g:.1e}, |ΔL_D| {err_d:.1e}"))
}

fn colorspace_lattice() -> Result<String, String> {
    let mut worst = 0;
    for r in (0..=255u8).step_by(17) {
        for g in (0..=255u8).step_by(17) {
            for b in (0..=255u8).step_by(17) {
                let back = lab_pixel_to_rgb(rgb_pixel_to_lab([r, g, b]));
                for (x, y) in [r, g, b].iter().zip(back) {
                    worst = worst.max((i16::from(*x) - i16::from(y)).abs());
                }
            }
        }
    }
    ensure(worst <= 1, || format!("round trip off by {worst} levels"))?;
    ensure(rgb_pixel_to_lab([255, 255, 255]) == [100.0, 0.0, 0.0], || "white anchor".into())?;
    ensure(rgb_pixel_to_lab([0, 0, 0]) == [0.0, 0.0, 0.0], || "black anchor".into())?;
    Ok(format!("16^3 lattice, max deviation {worst} level"))
}

fn descriptor_oracles() -> Result<String, String> {
    let bb = ConvBackbone::seeded(&BackboneConfig::default()).unwrap();
    for (img, _) in toy_corpus(6, 32, 3) {
        let fm = bb.extract(&img).unwrap();
        let plane = fm.h * fm.w;
        let maxima: Vec<f64> = (0..fm.channels)
            .map(|c| fm.values[c * plane..(c + 1) * plane].iter().fold(f64::MIN, |m, &v| m.max(v)))
            .collect();
        let norm = maxima.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = mac_descriptor(&fm);
        let dev = d.vector.iter().zip(&maxima).map(|(a, m)| (a - m / norm).abs()).fold(0.0, f64::max);
        ensure(dev < 1e-12, || format!("MAC of {} off by {dev:e}", img.id))?;
    }

    let mut rng = substream(9, "pca-fixture");
    let samples: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..10).map(|j| rng.gen_range(-1.0..1.0) * (1.0 + j as f64)).collect())
        .collect();
    let pca = fit_pca(&samples, 10).unwrap();
    let (values, vectors) = jacobi_eigen(&covariance(&samples));
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut pca_dev = 0.0_f64;
    for (row, &j) in order.iter().enumerate().filter(|(_, &j)| values[j] > 1e-9) {
        pca_dev = pca_dev.max((pca.explained_variance[row] - values[j]).abs() / values[j].max(1.0));
        let dot: f64 = (0..10).map(|i| vectors[i][j] * pca.basis[row][i]).sum();
        for i in 0..10 {
            pca_dev = pca_dev.max((vectors[i][j] * dot.signum() - pca.basis[row][i]).abs());
        }
    }
    ensure(pca_dev < 1e-6, || format!("PCA deviates from Jacobi by {pca_dev:e}"))?;

    let data: Vec<Descriptor> = (0..400)
        .map(|i| Descriptor::normalized(&format!("d{i:04}"), (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let a = kmeans(&data, 64, 17).unwrap();
    let monotone = a.inertia_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    ensure(monotone, || "k-means inertia increased".into())?;
    ensure(a == kmeans(&data, 64, 17).unwrap(), || "k-means not reproducible".into())?;
    ensure(a.clusters.iter().all(|c| !c.member_ids.is_empty()), || "empty cluster".into())?;
    Ok(format!(
        "MAC exact, PCA dev {pca_dev:.1e}, k-means {} iterations monotone",
        a.inertia_trace.len()
    ))
}

fn algorithm_no_op() -> Result<String, String> {
    let setup = toy_setup(40, 3, 4);
    let zero = TrainConfig {
        lr_g: 0.0,
        lr_d: 0.0,
        stepsize_ml: 0.0,
        d_pass_cap: None,
        ..tiny_config(4)
    };
    let start = TrainState::init(&zero).unwrap();
    let same = |s: &TrainState| {
        s.generator.params() == start.generator.params() && s.discriminator.params() == start.discriminator.params()
    };
    let meta = train_metalgan(&setup.store, &setup.tasks.clusters, &setup.pool, &zero, None, &mut |_, _| Ok(())).unwrap();
    ensure(same(&meta), || "zero rates changed parameters (metalgan)".into())?;
    let no_inner = TrainConfig {
        n_meta_iter: 0,
        lr_d: 0.0,
        ..tiny_config(4)
    };
    let meta = train_metalgan(&setup.store, &setup.tasks.clusters, &setup.pool, &no_inner, None, &mut |_, _| Ok(())).unwrap();
    ensure(same(&meta), || "empty inner loop changed parameters".into())?;
    let cgan = train_cgan(&setup.store, &TrainConfig { mode: Mode::Cgan, ..zero }, None, &mut |_, _| Ok(())).unwrap();
    ensure(same(&cgan), || "zero rates changed parameters (cgan)".into())?;
    Ok("parameters bit-identical".into())
}

fn inception_analytic() -> Result<String, String> {
    for n in [2usize, 5, 8] {
        let uniform = vec![vec![1.0 / n as f64; n]; 40];
        let r = inception_score_from_probs(&uniform, 4, "u").unwrap();
        ensure((r.mean - 1.0).abs() < 1e-9 && r.std < 1e-9, || format!("uniform N={n} scored {}", r.mean))?;
        let one_hot: Vec<Vec<f64>> = (0..10 * n)
            .map(|i| (0..n).map(|c| f64::from(u8::from(c == i % n))).collect())
            .collect();
        let r = inception_score_from_probs(&one_hot, 1, "h").unwrap();
        ensure((r.mean - n as f64).abs() < 1e-9, || format!("one-hot N={n} scored {}", r.mean))?;
    }
    let clf = ColorPrototypeClassifier::fit(&toy_corpus(96, 16, 31), TOY_CLASSES, "fixture").unwrap();
    let probs: Vec<Vec<f64>> = toy_corpus(64, 16, 32).iter().map(|(i, _)| clf.predict(i).unwrap()).collect();
    let r = inception_score_from_probs(&probs, 4, "fixture").unwrap();
    let (mean, std) = brute_force_is(&probs, 4);
    ensure((r.mean - mean).abs() < 1e-9 && (r.std - std).abs() < 1e-9, || "fixture disagrees with brute force".into())?;
    Ok(format!("uniform 1, one-hot N for N in {{2,5,8}}, fixture {:.4}", r.mean))
}

fn directional() -> Result<String, String> {
    let seed = 7;
    let corpus = disk_corpus(500, 32, 0.2, seed);
    let labeled: Vec<_> = corpus.train.iter().map(|i| (i.clone(), class_of_id(&i.id).unwrap())).collect();
    let clf = ColorPrototypeClassifier::fit(&labeled, TOY_CLASSES, "toy-train").unwrap();
    let bb = ConvBackbone::seeded(&BackboneConfig {
        seed,
        ..BackboneConfig::default()
    })
    .unwrap();
    let tasks = TaskSet::build(&corpus.train, bb, DescriptorSource::Luminance, 16, 8, seed).unwrap();
    let pool: Vec<Descriptor> = corpus.train.iter().map(|i| tasks.describe(i).unwrap()).collect();
    let store = PairStore::from_images(&corpus.train).unwrap();
    let test: Vec<Pair> = corpus.test.iter().map(|i| Pair::from_rgb(i).unwrap()).collect();
    let cfg = TrainConfig {
        n_epochs: 20,
        n_meta_iter: 20,
        lr_g: 1e-3,
        lr_d: 1e-3,
        stepsize_ml: 0.3,
        k: 8,
        batch_size: 4,
        seed,
        d_pass_cap: Some(4),
        adapt_steps: 20,
        ..TrainConfig::default()
    };
    let untrained = TrainState::init(&cfg).unwrap();
    let l1_epoch0 = evaluate(&mut NetColorizer::new(&untrained.generator, None), &test, &clf, 10).unwrap().report.l1_error;
    let meta = train_metalgan(&store, &tasks.clusters, &pool, &cfg, None, &mut |_, _| Ok(())).unwrap();
    let cgan_cfg = TrainConfig {
        mode: Mode::Cgan,
        ..cfg.clone()
    };
    let cgan = train_cgan(&store, &cgan_cfg, None, &mut |_, _| Ok(())).unwrap();

    let adapted = |s: &TrainState, c: &TrainConfig| {
        let mut col = NetColorizer::new(
            &s.generator,
            Some(Adaptation {
                tasks: &tasks,
                train: &store,
                discriminator: &s.discriminator,
                cfg: c,
                steps: c.adapt_steps,
            }),
        );
        evaluate(&mut col, &test, &clf, 10).unwrap().report
    };
    let m = adapted(&meta, &cfg);
    let c = evaluate(&mut NetColorizer::new(&cgan.generator, None), &test, &clf, 10).unwrap().report;
    // informational: the baseline given the same per-task fine-tuning
    let ca = adapted(&cgan, &cgan_cfg);
    let detail = format!(
        "{} train / {} test, epoch-0 L1 {:.4}; MetalGAN IS {:.3}±{:.3} L1 {:.4}; cGAN IS {:.3}±{:.3} L1 {:.4} (adapted: IS {:.3} L1 {:.4})",
        store.len(),
        test.len(),
        l1_epoch0,
        m.score.mean,
        m.score.std,
        m.l1_error,
        c.score.mean,
        c.score.std,
        c.l1_error,
        ca.score.mean,
        ca.l1_error
    );
    if m.score.mean >= c.score.mean && m.l1_error <= c.l1_error && m.l1_error < l1_epoch0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn checkpoint_bytes(dir: &std::path::Path) -> Vec<u8> {
    let mut bytes = std::fs::read(dir.join("params.bin")).unwrap();
    bytes.extend(std::fs::read(dir.join("manifest.json")).unwrap());
    bytes
}

fn determinism_and_resume() -> Result<String, String> {
    let setup = toy_setup(48, 3, 11);
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::Metalgan, Mode::Cgan] {
        let cfg = TrainConfig {
            n_epochs: 10,
            mode,
            ..tiny_config(11)
        };
        let run = |cfg: &TrainConfig, resume: Option<TrainState>| match mode {
            Mode::Metalgan => train_metalgan(&setup.store, &setup.tasks.clusters, &setup.pool, cfg, resume, &mut |_, _| Ok(())),
            Mode::Cgan => train_cgan(&setup.store, cfg, resume, &mut |_, _| Ok(())),
        }
        .unwrap();
        let save = |name: &str, s: &TrainState, c: &TrainConfig| {
            let path = dir.path().join(format!("{mode}-{name}"));
            save_checkpoint(&path, s, c).unwrap();
            path
        };
        let a = save("a", &run(&cfg, None), &cfg);
        let b = save("b", &run(&cfg, None), &cfg);
        ensure(checkpoint_bytes(&a) == checkpoint_bytes(&b), || format!("{mode}: repeated runs differ"))?;
        let five = TrainConfig { n_epochs: 5, ..cfg.clone() };
        let half = save("half", &run(&five, None), &five);
        let (restored, _) = load_checkpoint(&half).unwrap();
        let resumed = save("resumed", &run(&cfg, Some(restored)), &cfg);
        ensure(checkpoint_bytes(&a) == checkpoint_bytes(&resumed), || format!("{mode}: 5+5 differs from 10"))?;
    }
    Ok("metalgan and cgan: repeat and 5+5 resume bit-identical".into())
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("reptile update exactness", reptile_exactness),
        ("gradient finite-difference fidelity", gradient_fidelity),
        ("loss composition", loss_composition),
        ("colorspace lattice round trip", colorspace_lattice),
        ("descriptor, PCA and k-means oracles", descriptor_oracles),
        ("zero-rate training is a no-op", algorithm_no_op),
        ("inception score analytic cases", inception_analytic),
        ("metalgan vs cgan on toy corpus", directional),
        ("determinism and 5+5 resume", determinism_and_resume),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
