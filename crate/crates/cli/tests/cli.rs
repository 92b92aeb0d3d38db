use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cvmri::tensor::{read_cvt, AnyTensor, CTensor};

fn covegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covegan")).args(args).env("COVEGAN_THREADS", "1").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = covegan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    covegan(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mask_popcount_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.cvt"), dir.path().join("b.cvt"));
    let msg = ok(&["mask", "--pattern", "gauss1d", "--ratio", "0.3", "--size", "64", "--seed", "3", "--out", s(&a)]);
    assert!(msg.contains(&format!("{} samples", 19 * 64)), "{msg}");
    ok(&["mask", "--pattern", "gauss1d", "--ratio", "0.3", "--size", "64", "--seed", "3", "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let m = read_cvt::<f32>(&a).unwrap();
    assert_eq!(m.as_real().unwrap().data().iter().filter(|&&v| v == 1.0).count(), 19 * 64);

    ok(&["mask", "--pattern", "radial", "--ratio", "1.0", "--size", "16", "--out", s(&a)]);
    assert!(read_cvt::<f32>(&a).unwrap().as_real().unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.cvt");
    assert_eq!(code(&["mask", "--ratio", "1.5", "--size", "64", "--out", s(&out)]), 2);
    assert_eq!(code(&["mask", "--ratio", "0.3", "--size", "48", "--out", s(&out)]), 2);
    assert_eq!(code(&["mask", "--pattern", "zigzag", "--ratio", "0.3", "--out", s(&out)]), 2);
    assert_eq!(code(&["simulate", "--in", s(dir.path()), "--mask", s(&dir.path().join("none.cvt")), "--out", s(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "train.bogus_key = 1\n").unwrap();
    ok(&["phantom", "--count", "2", "--size", "16", "--out", s(&dir.path().join("ph"))]);
    let run = covegan(&["train", "--config", s(&cfg), "--data", s(&dir.path().join("ph")), "--out", s(&dir.path().join("t"))]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("train.bogus_key"));

    let img = dir.path().join("ph/phantom_0000.cvt");
    assert_eq!(code(&["export-image", "--in", s(&img), "--channel", "hue", "--out", s(&dir.path().join("x.pgm"))]), 2);
}

#[test]
fn simulate_full_and_partial_masks() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["phantom", "--count", "3", "--size", "16", "--seed", "5", "--out", s(&p("ph"))]);
    ok(&["mask", "--ratio", "1.0", "--size", "16", "--out", s(&p("full.cvt"))]);
    ok(&["simulate", "--in", s(&p("ph")), "--mask", s(&p("full.cvt")), "--out", s(&p("full"))]);
    let manifest = fs::read_to_string(p("full/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    assert_eq!(manifest.lines().next(), Some("file,seed,noise_pct"));
    for i in 0..3 {
        let name = format!("phantom_{i:04}.cvt");
        let gt = read_cvt::<f32>(p("ph").join(&name)).unwrap();
        let z = read_cvt::<f32>(p("full/zfr").join(&name)).unwrap();
        let (gt, z) = (gt.as_complex().unwrap(), z.as_complex().unwrap());
        assert!(gt.data().iter().zip(z.data()).all(|(a, b)| (a - b).norm() < 1e-5));
        assert!(p("full/y").join(&name).exists());
    }

    ok(&["mask", "--ratio", "0.3", "--size", "16", "--out", s(&p("m.cvt"))]);
    ok(&["simulate", "--in", s(&p("ph")), "--mask", s(&p("m.cvt")), "--noise", "mix", "--seed", "2", "--out", s(&p("part"))]);
    ok(&["eval", "--rec", s(&p("part/zfr")), "--gt", s(&p("ph")), "--report", s(&p("part.csv"))]);
    let report = fs::read_to_string(p("part.csv")).unwrap();
    let mean: Vec<&str> = report.lines().last().unwrap().split(',').collect();
    assert_eq!(mean[0], "mean");
    let psnr: f64 = mean[1].parse().unwrap();
    assert!(psnr.is_finite() && psnr > 0.0, "{report}");
}

#[test]
fn eval_identical_and_swapped() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["phantom", "--count", "2", "--size", "16", "--out", s(&p("a"))]);
    ok(&["phantom", "--count", "2", "--size", "16", "--seed", "1", "--out", s(&p("b"))]);
    ok(&["eval", "--rec", s(&p("a")), "--gt", s(&p("a")), "--report", s(&p("same.csv"))]);
    let same = fs::read_to_string(p("same.csv")).unwrap();
    assert_eq!(same.lines().next(), Some("file,psnr_db,mssim,phase_rmse"));
    for line in same.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], "inf");
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(same.lines().count(), 4);
    // PSNR after per-image GT normalization is symmetric only when both
    // peaks agree, so the swap check uses a pair with equal peaks.
    let img = |n: &str| read_cvt::<f32>(p(n)).unwrap();
    let a = img("a/phantom_0000.cvt");
    let a = a.as_complex().unwrap();
    let b = a.map(|z| z.conj());
    fs::create_dir_all(p("c")).unwrap();
    cvmri::tensor::write_cvt(p("c/phantom_0000.cvt"), &AnyTensor::Complex(b)).unwrap();
    fs::create_dir_all(p("d")).unwrap();
    fs::copy(p("a/phantom_0000.cvt"), p("d/phantom_0000.cvt")).unwrap();
    ok(&["eval", "--rec", s(&p("c")), "--gt", s(&p("d")), "--report", s(&p("cd.csv"))]);
    ok(&["eval", "--rec", s(&p("d")), "--gt", s(&p("c")), "--report", s(&p("dc.csv"))]);
    let field = |f: &str| fs::read_to_string(p(f)).unwrap().lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(field("cd.csv"), field("dc.csv"));
}

#[test]
fn export_image_channels() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    cvmri::tensor::write_cvt(p("z.cvt"), &AnyTensor::Complex(CTensor::<f32>::zeros(&[4, 3]))).unwrap();
    ok(&["export-image", "--in", s(&p("z.cvt")), "--channel", "mag", "--out", s(&p("z.pgm"))]);
    let bytes = fs::read(p("z.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n3 4\n255\n"));
    assert_eq!(&bytes[11..], &[0u8; 12]);
    ok(&["phantom", "--count", "1", "--size", "16", "--out", s(&p("ph"))]);
    for ch in ["mag", "phase", "re", "im"] {
        ok(&["export-image", "--in", s(&p("ph/phantom_0000.cvt")), "--channel", ch, "--out", s(&p("o.pgm"))]);
        assert_eq!(fs::read(p("o.pgm")).unwrap().len(), b"P5\n16 16\n255\n".len() + 256);
    }
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    ok(&["phantom", "--count", "8", "--size", "16", "--seed", "4", "--out", s(&p("train"))]);
    ok(&["phantom", "--count", "2", "--size", "16", "--seed", "40", "--out", s(&p("test"))]);
    let cfg = "train.batch = 2\ntrain.epochs = 2\ntrain.lr = 1e-3\ngen.depth = 2\ngen.channels = 4\ngen.conv_units = 2\n\
               disc.channels = 4,8\ndisc.strides = 2,2\n";
    fs::write(p("run.cfg"), cfg).unwrap();
    let msg = ok(&["train", "--config", s(&p("run.cfg")), "--data", s(&p("train")), "--out", s(&p("run"))]);
    assert!(msg.contains("8 generator steps"), "{msg}");
    let log = fs::read_to_string(p("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,L_GAN,L_l1,L_mSSIM,L_wvt,total,d_loss"));
    assert_eq!(log.lines().count(), 9);
    assert!(p("run/epoch002.cvck").exists());

    ok(&["mask", "--ratio", "0.3", "--size", "16", "--out", s(&p("m.cvt"))]);
    ok(&["simulate", "--in", s(&p("test")), "--mask", s(&p("m.cvt")), "--out", s(&p("sim"))]);
    ok(&["reconstruct", "--ckpt", s(&p("run/latest.cvck")), "--in", s(&p("sim/zfr")), "--out", s(&p("rec"))]);
    ok(&["reconstruct", "--ckpt", s(&p("run/latest.cvck")), "--in", s(&p("sim/zfr/phantom_0000.cvt")), "--out", s(&p("one.cvt"))]);
    assert_eq!(fs::read(p("one.cvt")).unwrap(), fs::read(p("rec/phantom_0000.cvt")).unwrap());
    ok(&["eval", "--rec", s(&p("rec")), "--gt", s(&p("test")), "--report", s(&p("rec.csv"))]);
    assert_eq!(fs::read_to_string(p("rec.csv")).unwrap().lines().count(), 4);

    // 32×32 input against a model trained on 16×16.
    ok(&["phantom", "--count", "1", "--size", "32", "--out", s(&p("big"))]);
    assert_eq!(code(&["reconstruct", "--ckpt", s(&p("run/latest.cvck")), "--in", s(&p("big/phantom_0000.cvt")), "--out", s(&p("x.cvt"))]), 2);
}
