//! Acceptance gate: one test per criterion, each emitting a single
//! PASS/FAIL line (visible with `--nocapture`). Tests are ordered cheap
//! to expensive; the directional-trend test records an observation only.

use std::path::Path;
use std::process::Command;

use ndarray::{Array3, Array4, Axis};

use outpaint_core::config::{TrainConfig, Variant};
use outpaint_core::data::{
    local_crop, make_masked_input, Batch, DatasetManifest, Mask, Split,
};
use outpaint_core::discriminator::{DiscPair, DiscTower, DiscWiring, SCORE_SIZE};
use outpaint_core::generator::{expected_trace_residual, Generator, GeneratorArch, FRAME};
use outpaint_core::nn::HasParams;
use outpaint_core::objectives::{
    adv_loss_gen, adv_loss_gen_grad, disc_loss, disc_loss_grads, lambda_adv, rec_loss,
    rec_loss_grad, LossWeights,
};
use outpaint_core::train::{
    disc_seed, fit_from, flatten_params, gen_seed, train_step, Models, TrainState,
};

struct Gate {
    label: &'static str,
}

impl Gate {
    fn new(label: &'static str) -> Gate {
        Gate { label }
    }

    fn pass(self) {
        println!("PASS: {}", self.label);
    }
}

impl Drop for Gate {
    fn drop(&mut self) {
        if std::thread::panicking() {
            println!("FAIL: {}", self.label);
        }
    }
}

/// Smooth, mutually distinct synthetic frames: per-image color gradients.
fn synth_image(i: usize, size: usize) -> Array3<f32> {
    let mut img = Array3::<f32>::zeros((3, size, size));
    let fi = i as f32;
    for y in 0..size {
        for x in 0..size {
            let fy = y as f32 / size as f32;
            let fx = x as f32 / size as f32;
            img[[0, y, x]] = (0.2 + 0.6 * fx + 0.05 * fi).fract();
            img[[1, y, x]] = (0.8 - 0.5 * fy + 0.09 * fi).fract();
            img[[2, y, x]] = (0.5 * fx * fy + 0.13 * fi).fract();
        }
    }
    img
}

fn write_synth_dataset(dir: &Path, count: usize) {
    for i in 0..count {
        let img = synth_image(i, FRAME);
        outpaint_core::data::save_image(&img, &dir.join(format!("synth_{i:03}.png"))).unwrap();
    }
}

fn synth_batch(ids: &[usize], mask: &Mask) -> Batch {
    let n = ids.len();
    let mut masked = Array4::<f32>::zeros((n, 4, FRAME, FRAME));
    let mut gt = Array4::<f32>::zeros((n, 3, FRAME, FRAME));
    for (bi, &i) in ids.iter().enumerate() {
        let img = synth_image(i, FRAME);
        masked
            .index_axis_mut(Axis(0), bi)
            .assign(&make_masked_input(&img, mask).unwrap());
        gt.index_axis_mut(Axis(0), bi).assign(&img);
    }
    Batch { masked, gt, paths: Vec::new() }
}

#[test]
fn acceptance_01_shape_conformance() {
    let gate = Gate::new("criterion 1: architecture shape conformance (exact)");
    let gen = Generator::<f32>::init(GeneratorArch::Residual, 1);
    let x = Array4::<f32>::from_elem((1, 4, FRAME, FRAME), 0.25);
    let (_, rows) = gen.forward_traced(&x).unwrap();
    let expected = expected_trace_residual();
    assert_eq!(rows.len(), expected.len(), "trace row count");
    for (got, want) in rows.iter().zip(&expected) {
        assert_eq!(got, want);
    }

    let frame = Array4::<f32>::from_elem((2, 3, FRAME, FRAME), 0.4);
    for seed in [2, 3] {
        let tower = DiscTower::<f32>::init(seed);
        let s = tower.forward(&frame).unwrap();
        assert_eq!(s.dim(), (2, 1, SCORE_SIZE, SCORE_SIZE));
    }
    gate.pass();
}

#[test]
fn acceptance_02_equation_suite() {
    let gate = Gate::new("criterion 2: equation suite (exact / 1e-9)");

    // score averaging with stubbed constant towers
    let mut pair = DiscPair::<f32>::init(DiscWiring::Dual, 4);
    pair.global.convs[5].w.fill(0.0);
    pair.global.convs[5].b.fill(0.8);
    let local = pair.local.as_mut().unwrap();
    local.convs[5].w.fill(0.0);
    local.convs[5].b.fill(0.2);
    let mask = Mask::band(FRAME, 128).unwrap();
    let x = Array4::<f32>::from_elem((1, 3, FRAME, FRAME), 0.5);
    let s = pair.combined_score(&x, &mask).unwrap();
    assert!(s.iter().all(|&v| (v - 0.5).abs() < 1e-9));

    // closed-form loss cases
    let zeros = Array3::<f64>::zeros((3, 4, 4));
    let halves = Array3::<f64>::from_elem((3, 4, 4), 0.5);
    let ones = Array3::<f64>::ones((3, 4, 4));
    assert!((rec_loss(&zeros, &halves).unwrap() - 0.5).abs() < 1e-9);
    assert!(rec_loss(&ones, &ones).unwrap() < 1e-9);
    assert!((adv_loss_gen(&halves) - 0.25).abs() < 1e-9);
    assert!(adv_loss_gen(&ones) < 1e-9);
    assert!(disc_loss(&ones, &zeros) < 1e-9);
    assert!((disc_loss(&halves, &halves) - 0.5).abs() < 1e-9);
    assert!((disc_loss(&zeros, &ones) - 2.0).abs() < 1e-9);

    // schedule, exact over every epoch
    for n in 1..=50u32 {
        let expect = if n <= 10 {
            0.001
        } else if n <= 30 {
            0.005
        } else {
            0.015
        };
        assert_eq!(lambda_adv(n).unwrap(), expect, "epoch {n}");
    }
    gate.pass();
}

#[test]
fn acceptance_03_gradient_checks() {
    let gate = Gate::new("criterion 3: gradient checks (1e-3 losses, 1e-2 end-to-end)");
    let h = 1e-6;

    // losses on 3x4x4 tensors
    let grid = |seed: u64| {
        let mut v = Array3::<f64>::zeros((3, 4, 4));
        for (i, p) in v.iter_mut().enumerate() {
            *p = (((i as u64 * 37 + seed * 101) % 89) as f64) / 89.0;
        }
        v
    };
    let x = grid(1);
    let mut gx = grid(2);
    let g = rec_loss_grad(&x, &gx).unwrap();
    let mut checked = 0;
    for idx in [(0, 0, 0), (1, 1, 2), (2, 3, 3)] {
        let orig = gx[idx];
        gx[idx] = orig + h;
        let lp = rec_loss(&x, &gx).unwrap();
        gx[idx] = orig - h;
        let lm = rec_loss(&x, &gx).unwrap();
        gx[idx] = orig;
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - g[idx]).abs() <= 1e-3 * fd.abs().max(1e-8), "rec {idx:?}");
        checked += 1;
    }
    let mut s = grid(3);
    let ga = adv_loss_gen_grad(&s);
    let (gr, gf) = disc_loss_grads(&s, &x);
    for idx in [(0, 2, 1), (2, 0, 3)] {
        let orig = s[idx];
        s[idx] = orig + h;
        let (ap, rp) = (adv_loss_gen(&s), disc_loss(&s, &x));
        s[idx] = orig - h;
        let (am, rm) = (adv_loss_gen(&s), disc_loss(&s, &x));
        s[idx] = orig;
        let fa = (ap - am) / (2.0 * h);
        let fr = (rp - rm) / (2.0 * h);
        assert!((fa - ga[idx]).abs() <= 1e-3 * fa.abs().max(1e-8), "adv {idx:?}");
        assert!((fr - gr[idx]).abs() <= 1e-3 * fr.abs().max(1e-8), "disc real {idx:?}");
        checked += 1;
    }
    let mut f2 = x.clone();
    for idx in [(1, 2, 2)] {
        let orig = f2[idx];
        f2[idx] = orig + h;
        let lp = disc_loss(&s, &f2);
        f2[idx] = orig - h;
        let lm = disc_loss(&s, &f2);
        f2[idx] = orig;
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - gf[idx]).abs() <= 1e-3 * fd.abs().max(1e-8), "disc fake {idx:?}");
        checked += 1;
    }
    assert!(checked >= 6);

    // end-to-end through the full f64 residual generator: loss = L1 to a
    // fixed target, >= 20 parameters sampled across distinct tensors
    let mut gen = Generator::<f64>::init(GeneratorArch::Residual, 5);
    let mask = Mask::band(FRAME, 128).unwrap();
    let gt32 = synth_image(0, FRAME);
    let gt = gt32.mapv(|v| v as f64).insert_axis(Axis(0));
    let x_in = make_masked_input(&gt32, &mask)
        .unwrap()
        .mapv(|v| v as f64)
        .insert_axis(Axis(0));

    let cache = gen.forward_train(&x_in).unwrap();
    let gy = rec_loss_grad(&gt, &cache.y).unwrap();
    gen.zero_grads();
    gen.backward(&cache, &gy);

    // (slot index, element index) pairs, then the analytic grads
    let picks: Vec<(usize, usize)> = {
        let slots = gen.collect_slots();
        (0..slots.len())
            .map(|si| (si, (si * 131) % slots[si].value.len()))
            .collect()
    };
    let analytic: Vec<f64> = {
        let slots = gen.collect_slots();
        picks.iter().map(|&(si, ei)| slots[si].grad[ei]).collect()
    };
    let names: Vec<String> = {
        let slots = gen.collect_slots();
        picks.iter().map(|&(si, _)| slots[si].name.clone()).collect()
    };
    assert!(picks.len() >= 20, "only {} tensors", picks.len());

    // cap the finite-difference sweep; each probe costs two full forwards
    let step = (picks.len() / 24).max(1);
    let hp = 1e-6;
    let mut verified = 0;
    for (pi, &(si, ei)) in picks.iter().enumerate().step_by(step) {
        let orig = {
            let mut slots = gen.collect_slots();
            let v = slots[si].value[ei];
            slots[si].value[ei] = v + hp;
            v
        };
        let lp = rec_loss(&gt, &gen.forward(&x_in).unwrap()).unwrap();
        {
            let mut slots = gen.collect_slots();
            slots[si].value[ei] = orig - hp;
        }
        let lm = rec_loss(&gt, &gen.forward(&x_in).unwrap()).unwrap();
        {
            let mut slots = gen.collect_slots();
            slots[si].value[ei] = orig;
        }
        let fd = (lp - lm) / (2.0 * hp);
        let an = analytic[pi];
        let denom = fd.abs().max(an.abs()).max(1e-7);
        assert!(
            (fd - an).abs() / denom <= 1e-2,
            "{}[{ei}]: fd {fd} vs analytic {an}",
            names[pi]
        );
        verified += 1;
    }
    assert!(verified >= 20, "only {verified} parameters verified");
    gate.pass();
}

#[test]
fn acceptance_04_mask_algebra() {
    let gate = Gate::new("criterion 4: mask algebra (exact)");
    let mask = Mask::band(192, 128).unwrap();
    assert!(mask.data.iter().all(|&v| v == 0.0 || v == 1.0));
    assert_eq!(mask.ones_count(), 192 * 192 - 128 * 128);
    assert_eq!(mask.ones_count(), 20480);

    let img = synth_image(3, 192);
    let once = local_crop(&img, &mask).unwrap();
    let twice = local_crop(&once, &mask).unwrap();
    assert_eq!(once, twice, "ϵ× is idempotent");

    // center pixel sits in the preserved square: masked input keeps it,
    // the crop kills it
    let mi = make_masked_input(&img, &mask).unwrap();
    for c in 0..3 {
        assert_eq!(mi[[c, 96, 96]], img[[c, 96, 96]]);
        assert_eq!(once[[c, 96, 96]], 0.0);
    }
    assert_eq!(mi[[3, 96, 96]], 0.0);

    // paste fixed points: pasting gt onto gt is gt; pasting twice equals once
    let gen = synth_image(4, 192);
    let p = outpaint_core::composite_paste(&gen, &img, &mask, true).unwrap();
    let pp = outpaint_core::composite_paste(&p, &img, &mask, true).unwrap();
    assert_eq!(p, pp);
    let idp = outpaint_core::composite_paste(&img, &img, &mask, true).unwrap();
    assert_eq!(idp, img);
    gate.pass();
}

fn overfit_config(dir: &Path, variant: Variant, seed: u64, epochs: u32, batch: usize) -> TrainConfig {
    TrainConfig {
        variant,
        seed,
        epochs,
        batch_size: batch,
        data_dir: Some(dir.join("data")),
        checkpoint_dir: dir.join("ckpt"),
        checkpoint_every: 1000,
        ..TrainConfig::default()
    }
}

#[test]
fn acceptance_05_overfit_sanity() {
    let gate = Gate::new("criterion 5: overfit sanity (final L_rec <= 0.5 x first)");
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("data")).unwrap();
    write_synth_dataset(&dir.path().join("data"), 8);
    // 8 images, batch 2 -> 4 steps per epoch, 50 epochs = 200 steps
    let cfg = overfit_config(dir.path(), Variant::Residual, 11, 50, 2);
    let (_, stats) = outpaint_core::fit(&cfg).unwrap();
    assert_eq!(stats.len(), 50);
    let total_steps: u64 = stats.iter().map(|s| s.steps).sum();
    assert_eq!(total_steps, 200);
    let first = stats.first().unwrap().mean_rec;
    let last = stats.last().unwrap().mean_rec;
    println!("  overfit: first-epoch L_rec {first:.5}, final-epoch L_rec {last:.5}");
    assert!(
        last <= 0.5 * first,
        "L_rec did not halve: {first:.5} -> {last:.5}"
    );
    gate.pass();
}

#[test]
fn acceptance_06_determinism_and_checkpoints() {
    let gate = Gate::new("criterion 6: determinism, resume, checkpoint round trip (exact)");
    let base = tempfile::tempdir().unwrap();
    let data = base.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_synth_dataset(&data, 4);

    let cfg_for = |name: &str, epochs: u32, every: u32| TrainConfig {
        variant: Variant::Residual,
        seed: 21,
        epochs,
        batch_size: 2,
        data_dir: Some(data.clone()),
        checkpoint_dir: base.path().join(name),
        checkpoint_every: every,
        ..TrainConfig::default()
    };

    // identical config + seed + data twice -> identical loss CSVs
    let (mut s1, _) = outpaint_core::fit(&cfg_for("run1", 4, 2)).unwrap();
    let (mut s2, _) = outpaint_core::fit(&cfg_for("run2", 4, 2)).unwrap();
    let csv1 = std::fs::read(base.path().join("run1/history.csv")).unwrap();
    let csv2 = std::fs::read(base.path().join("run2/history.csv")).unwrap();
    assert!(!csv1.is_empty());
    assert_eq!(csv1, csv2, "loss CSVs differ between identical runs");
    assert_eq!(
        flatten_params(&mut s1.models.gen),
        flatten_params(&mut s2.models.gen)
    );

    // save at epoch 2, resume, and match the uninterrupted run bit-for-bit
    let (_, _) = outpaint_core::fit(&cfg_for("half", 2, 2)).unwrap();
    let resumed = outpaint_core::checkpoint::load_checkpoint(
        &base.path().join("half/epoch_0002.ckpt"),
    )
    .unwrap_or_else(|_| {
        // epoch 2 is also the final epoch, so only final.ckpt exists
        outpaint_core::checkpoint::load_checkpoint(&base.path().join("half/final.ckpt")).unwrap()
    });
    assert_eq!(resumed.epoch, 2);
    let (mut s3, _) = fit_from(&cfg_for("resumed", 4, 2), resumed).unwrap();
    assert_eq!(
        flatten_params(&mut s1.models.gen),
        flatten_params(&mut s3.models.gen),
        "resumed generator parameters diverge"
    );
    assert_eq!(
        flatten_params(&mut s1.models.disc),
        flatten_params(&mut s3.models.disc),
        "resumed discriminator parameters diverge"
    );
    let tail = |p: &Path| -> Vec<String> {
        String::from_utf8(std::fs::read(p).unwrap())
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("3,") || l.starts_with("4,"))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(
        tail(&base.path().join("run1/history.csv")),
        tail(&base.path().join("resumed/history.csv")),
        "post-resume loss rows diverge"
    );

    // checkpoint round trip preserves evaluation losses bit-for-bit
    let manifest = DatasetManifest::scan(&data, Split::Val).unwrap();
    let mask = Mask::band(FRAME, 128).unwrap();
    let before =
        outpaint_core::evaluate_model(&s1.models, &manifest, &mask, "m").unwrap();
    let rt = base.path().join("rt.ckpt");
    outpaint_core::checkpoint::save_checkpoint(&mut s1, &rt).unwrap();
    let restored = outpaint_core::checkpoint::load_checkpoint(&rt).unwrap();
    let after =
        outpaint_core::evaluate_model(&restored.models, &manifest, &mask, "m").unwrap();
    assert_eq!(before.l1.to_bits(), after.l1.to_bits());
    assert_eq!(before.mse.to_bits(), after.mse.to_bits());
    assert_eq!(before.adversarial.to_bits(), after.adversarial.to_bits());
    gate.pass();
}

#[test]
fn acceptance_07_variant_wiring_purity() {
    let gate = Gate::new("criterion 7: wiring cannot leak into pure reconstruction (exact)");
    let mask = Mask::band(FRAME, 128).unwrap();
    let batch = synth_batch(&[0, 1], &mask);
    let weights = LossWeights::default().without_adversarial();
    let cfg = TrainConfig::default();

    // same generator stream for all three, only the wiring differs
    let run = |wiring: DiscWiring| -> Vec<f32> {
        let mut state = TrainState {
            variant: Variant::Residual,
            seed: 31,
            epoch: 0,
            step: 0,
            models: Models {
                gen: Generator::init(GeneratorArch::Residual, gen_seed(31)),
                disc: DiscPair::init(wiring, disc_seed(31)),
            },
            opt_g: outpaint_core::Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2),
            opt_d: outpaint_core::Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2),
        };
        for _ in 0..2 {
            let l = train_step(&mut state, &batch, &mask, &weights, 1).unwrap();
            assert_eq!(l.loss_adv, 0.0);
            assert_eq!(l.loss_d, 0.0);
        }
        flatten_params(&mut state.models.gen)
    };
    let a = run(DiscWiring::GlobalOnly);
    let b = run(DiscWiring::Dual);
    assert_eq!(a, b, "generator updates depend on discriminator wiring");
    gate.pass();
}

#[test]
fn acceptance_08_end_to_end_cli() {
    let gate = Gate::new("criterion 8: end-to-end CLI train/eval/outpaint");
    let bin = env!("CARGO_BIN_EXE_outpaint");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_synth_dataset(&data, 32);
    let ckpt_dir = dir.path().join("ckpt");

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "`outpaint {}` failed:\n{}{}",
            args.join(" "),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };

    run(&[
        "train",
        "--data-dir",
        data.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch-size",
        "8",
        "--seed",
        "5",
        "--variant",
        "residual",
        "--checkpoint-dir",
        ckpt_dir.to_str().unwrap(),
    ]);
    let final_ckpt = ckpt_dir.join("final.ckpt");
    assert!(final_ckpt.exists());

    let report_path = dir.path().join("report.txt");
    let table = run(&[
        "eval",
        "--data-dir",
        data.to_str().unwrap(),
        "--checkpoint",
        final_ckpt.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines.len() >= 2, "report too short:\n{table}");
    assert!(lines[0].contains("Model") && lines[0].contains("L1"));
    assert!(lines[0].contains("MSE") && lines[0].contains("Adversarial"));
    let row: Vec<&str> = lines[1].split('|').map(str::trim).collect();
    assert_eq!(row.len(), 4, "row is not four columns: {}", lines[1]);
    for cell in &row[1..] {
        cell.parse::<f64>().unwrap_or_else(|_| panic!("non-numeric cell {cell}"));
    }
    assert_eq!(std::fs::read_to_string(&report_path).unwrap(), table);

    let out_png = dir.path().join("out.png");
    run(&[
        "outpaint",
        "--image",
        data.join("synth_000.png").to_str().unwrap(),
        "--checkpoint",
        final_ckpt.to_str().unwrap(),
        "--paste",
        "--out",
        out_png.to_str().unwrap(),
    ]);
    let png = image::open(&out_png).unwrap();
    assert_eq!((png.width(), png.height()), (192, 192));
    gate.pass();
}

#[test]
fn acceptance_09_directional_trend_observation() {
    let gate = Gate::new("criterion 9: adversarial-loss ordering (observation, non-gating)");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_synth_dataset(&data, 8);

    let adv_of = |variant: Variant, name: &str| -> f64 {
        let cfg = TrainConfig {
            variant,
            seed: 77,
            epochs: 2,
            batch_size: 4,
            data_dir: Some(data.clone()),
            checkpoint_dir: dir.path().join(name),
            checkpoint_every: 1000,
            ..TrainConfig::default()
        };
        let (_, stats) = outpaint_core::fit(&cfg).unwrap();
        stats.last().unwrap().mean_adv
    };
    let g = adv_of(Variant::GlobalOnly, "g");
    let l = adv_of(Variant::Local, "l");
    let r = adv_of(Variant::Residual, "r");
    let ordered = l <= g && r <= g;
    println!(
        "  observation: adv loss global-only {g:.5}, local {l:.5}, residual {r:.5} \
         (dual <= global-only ordering {}; desk scale, not a gate)",
        if ordered { "holds" } else { "does not hold" }
    );
    gate.pass();
}
