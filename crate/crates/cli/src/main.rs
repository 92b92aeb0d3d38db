mod pgm;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use cvmri::config::KeyValues;
use cvmri::mri::{self, ManifestRow, MaskPattern, SamplingMask};
use cvmri::tensor::{read_cvt, write_cvt, AnyTensor, CTensor};
use cvmri::training::{self, Dataset, Reconstructor, TrainConfig, Trainer};
use cvmri::{gradcheck, models, Error};

/// Tensors are stored and processed in single precision.
type F = f32;

#[derive(Parser)]
#[command(name = "covegan", version, about = "Complex-valued GAN reconstruction for undersampled MRI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a k-space sampling mask
    Mask {
        #[arg(long, default_value = "gauss1d")]
        pattern: MaskPattern,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic complex phantoms
    Phantom {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Undersample phantoms: k-space data, zero-filled images and a manifest
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Noise percentage, or `mix` for the 70/15/15 clean/10%/20% split
        #[arg(long, default_value = "0")]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train generator and discriminator on a directory of clean phantoms
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a trained generator on one file or every file of a directory
    Reconstruct {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score reconstructions against ground truth
    Eval {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference check of every layer and loss
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render one channel of a tensor as a binary PGM
    ExportImage {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "mag")]
        channel: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Contract(_) | Error::Dimension(_) | Error::UnsupportedSize(_) | Error::Kind { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Sorted `.cvt` files of a directory.
fn cvt_files(dir: &Path) -> Result<Vec<PathBuf>> {
    require(dir, "directory")?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cvt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .cvt files in {}", dir.display())));
    }
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// A single `[K, K]` complex image, accepting `[1, 1, K, K]` as well.
fn read_image(path: &Path) -> Result<CTensor<F>> {
    let t = match read_cvt::<F>(path)? {
        AnyTensor::Complex(c) => c,
        AnyTensor::Real(r) => r.to_complex(),
    };
    let shape = t.shape().to_vec();
    let (n, h, w) = t.spatial()?;
    if n != 1 || h != w {
        return Err(CliError::Usage(format!("{}: expected one square image, got shape {shape:?}", path.display())));
    }
    Ok(t.reshape(&[h, w])?)
}

fn read_mask(path: &Path) -> Result<SamplingMask> {
    require(path, "mask file")?;
    let t = read_cvt::<F>(path)?;
    Ok(SamplingMask::from_tensor(t.as_real()?, MaskPattern::Gauss1d, 0)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask { pattern, ratio, size, seed, out } => {
            let m = mri::make_mask(pattern, ratio, size, seed)?;
            write_cvt(&out, &mri::mask_tensor::<F>(&m))?;
            println!("{pattern} mask {size}x{size}: {} samples, achieved ratio {:.6}", m.popcount(), m.achieved_ratio());
        }
        Command::Phantom { count, size, seed, out } => {
            fs::create_dir_all(&out)?;
            for p in mri::make_phantoms::<F>(count, size, seed)? {
                write_cvt(out.join(format!("phantom_{:04}.cvt", p.index)), &AnyTensor::Complex(p.image))?;
            }
            println!("wrote {count} phantoms of {size}x{size} to {}", out.display());
        }
        Command::Simulate { input, mask, noise, seed, out } => {
            let mask = read_mask(&mask)?;
            let files = cvt_files(&input)?;
            let levels = match noise.as_str() {
                "mix" => mri::NoiseMix::default().assign(files.len(), seed)?,
                v => vec![v.parse::<f64>().map_err(|_| CliError::Usage(format!("--noise expects a number or `mix`, got `{v}`")))?; files.len()],
            };
            fs::create_dir_all(out.join("y"))?;
            fs::create_dir_all(out.join("zfr"))?;
            let rows = files
                .par_iter()
                .zip(levels.par_iter())
                .enumerate()
                .map(|(i, (path, &pct))| {
                    let x = read_image(path)?;
                    let file_seed = seed.wrapping_add(i as u64);
                    let y = mri::acquire(&x, &mask, pct, file_seed)?;
                    let name = file_name(path);
                    write_cvt(out.join("zfr").join(&name), &AnyTensor::Complex(mri::zfr(&y, &mask)?))?;
                    write_cvt(out.join("y").join(&name), &AnyTensor::Complex(y))?;
                    Ok(ManifestRow { file: name, seed: file_seed, noise_pct: pct })
                })
                .collect::<Result<Vec<_>>>()?;
            fs::write(out.join("manifest.csv"), mri::write_manifest(&rows))?;
            println!("simulated {} acquisitions into {}", rows.len(), out.display());
        }
        Command::Train { config, data, out } => {
            let kv = match &config {
                Some(path) => {
                    require(path, "config file")?;
                    KeyValues::parse(&fs::read_to_string(path)?)?
                }
                None => KeyValues::new(),
            };
            let cfg = TrainConfig::from_kv(&kv)?;
            let images = cvt_files(&data)?.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
            let k = images[0].shape()[0];
            let mask = mri::make_mask(cfg.mask, cfg.ratio, k, cfg.mask_seed)?;
            let dataset = Dataset::new(images, mask, cfg.noise)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.txt"), cfg.to_kv().to_text())?;
            let mut trainer = Trainer::<F>::new(cfg, dataset)?;
            trainer.dump_dir = Some(out.clone());
            let mut log = std::io::BufWriter::new(fs::File::create(out.join("train_log.csv"))?);
            let rows = trainer.run(Some(&mut log), Some(&out))?;
            if let Some(last) = rows.last() {
                println!("{} generator steps; final loss {:.5} (L1 {:.5}, 1-mSSIM {:.5}, wavelet {:.5})", last.step, last.total, last.l1, last.mssim, last.wavelet);
            }
        }
        Command::Reconstruct { ckpt, input, out } => {
            require(&ckpt, "checkpoint")?;
            let model = Reconstructor::<F>::from_checkpoint(&models::read_checkpoint(&ckpt)?)?;
            let pairs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
                fs::create_dir_all(&out)?;
                cvt_files(&input)?.into_iter().map(|p| { let o = out.join(file_name(&p)); (p, o) }).collect()
            } else {
                require(&input, "input")?;
                vec![(input, out)]
            };
            pairs
                .par_iter()
                .map(|(src, dst)| {
                    let x = read_image(src)?;
                    write_cvt(dst, &AnyTensor::Complex(model.reconstruct(&x)?))?;
                    Ok(())
                })
                .collect::<Result<Vec<()>>>()?;
            println!("reconstructed {} image(s)", pairs.len());
        }
        Command::Eval { rec, gt, report } => {
            let gts = cvt_files(&gt)?;
            require(&rec, "directory")?;
            let rows = gts
                .par_iter()
                .map(|g| {
                    let name = file_name(g);
                    let r = rec.join(&name);
                    require(&r, "reconstruction")?;
                    let k = |t: CTensor<F>| { let s = t.shape()[0]; t.reshape(&[1, 1, s, s]) };
                    let m = training::metrics(&k(read_image(&r)?)?, &k(read_image(g)?)?)?;
                    Ok((name, m))
                })
                .collect::<Result<Vec<_>>>()?;
            let fmt_psnr = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.6}") };
            let mut csv = String::from("file,psnr_db,mssim,phase_rmse\n");
            for (name, m) in &rows {
                csv.push_str(&format!("{name},{},{:.6},{:.6}\n", fmt_psnr(m.psnr), m.mssim, m.phase_rmse));
            }
            let n = rows.len() as f64;
            let mean = |f: fn(&training::Metrics) -> f64| rows.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
            let (p, s, ph) = (mean(|m| m.psnr), mean(|m| m.mssim), mean(|m| m.phase_rmse));
            csv.push_str(&format!("mean,{},{s:.6},{ph:.6}\n", fmt_psnr(p)));
            fs::write(&report, csv)?;
            println!("{} images: PSNR {} dB, mSSIM {s:.4}, phase RMSE {ph:.4}", rows.len(), fmt_psnr(p));
        }
        Command::Gradcheck { seed } => {
            let cases = gradcheck::run_suite(seed)?;
            print!("{}", gradcheck::render_table(&cases));
            let failed = cases.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} gradient check(s) failed")));
            }
        }
        Command::ExportImage { input, channel, out } => {
            let channel: pgm::Channel = channel.parse().map_err(CliError::Usage)?;
            require(&input, "input")?;
            let t = read_cvt::<F>(&input)?;
            let (w, h, pixels) = pgm::render(&t, channel).map_err(CliError::Usage)?;
            fs::write(&out, pgm::encode(w, h, &pixels))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("COVEGAN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
