use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sbd_core::bench::{benchmark, sobel_baseline, uniform_thresholds, BenchmarkSummary};
use sbd_core::boundary::{
    boundary_pixel_fraction, category_pair_lengths, detect_junctions, extract_boundaries, PairLength,
};
use sbd_core::config::Config;
use sbd_core::dataset::{self, ground_truth};
use sbd_core::manifest::{DatasetManifest, Split};
use sbd_core::net::{
    checkpoint, grad_check, predict as run_model, train_stage_greedy, train_stage_multiscale, train_stage_scale,
    LossSelector, ModelParams, Sample, StageLog,
};
use sbd_core::synth::{synth_scene, SynthSpec};
use sbd_core::{io, BoundaryMap, SoftBoundaryMap};

use crate::{BoundsArgs, EvalArgs, GradcheckArgs, LabelsArgs, PredictArgs, StatsArgs, SynthArgs, TrainArgs};

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stem_name(stem: &Path) -> Result<String> {
    stem.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .with_context(|| format!("{} has no file name", stem.display()))
}

pub fn bounds(cfg: &Config, args: &BoundsArgs) -> Result<()> {
    // (label stem, output path)
    let mut jobs: Vec<(PathBuf, PathBuf)> = Vec::new();
    for stem in &args.labels {
        jobs.push((stem.clone(), args.out_dir.join(format!("{}.gt.png", stem_name(stem)?))));
    }
    if let Some(path) = &args.manifest {
        let m = DatasetManifest::load(path)?;
        let splits: Vec<Split> = args.splits.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
        for e in m.entries.iter().filter(|e| splits.contains(&e.split)) {
            if let Some(l) = &e.labels {
                let mut out = args.out_dir.join(l).into_os_string();
                out.push(".gt.png");
                jobs.push((m.resolve(l), out.into()));
            }
        }
    }
    if jobs.is_empty() {
        bail!("no label maps given (use --labels or --manifest)");
    }
    jobs.par_iter().try_for_each(|(stem, out)| -> Result<()> {
        let lm = io::load_label_map(stem)?;
        let band = extract_boundaries(&lm, cfg.connectivity);
        let bm = if args.no_thin { band } else { sbd_core::boundary::thin(&band) };
        create_parent(out)?;
        io::save_boundary_map(&bm, out)?;
        Ok(())
    })?;
    println!("bounds: wrote {} boundary maps to {}", jobs.len(), args.out_dir.display());
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let maps: Vec<BoundaryMap> = args
        .maps
        .par_iter()
        .map(|p| io::load_boundary_map(p).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let (mut set, mut total) = (0usize, 0usize);
    for (p, bm) in args.maps.iter().zip(&maps) {
        println!("{}\t{:.6}", p.display(), boundary_pixel_fraction(bm));
        set += bm.count();
        total += bm.width() * bm.height();
    }
    println!(
        "stats: {} maps, boundary fraction {:.6} ({set} of {total} pixels)",
        maps.len(),
        set as f64 / total as f64
    );
    Ok(())
}

pub fn pairs(cfg: &Config, args: &LabelsArgs) -> Result<()> {
    let mut merged: BTreeMap<(u16, u16), u64> = BTreeMap::new();
    for stem in &args.labels {
        let lm = io::load_label_map(stem)?;
        for e in category_pair_lengths(&lm, cfg.connectivity).entries {
            *merged.entry((e.category_a, e.category_b)).or_default() += e.length;
        }
    }
    let mut entries: Vec<PairLength> = merged
        .into_iter()
        .map(|((category_a, category_b), length)| PairLength {
            category_a,
            category_b,
            length,
        })
        .collect();
    entries.sort_by(|a, b| b.length.cmp(&a.length));
    if args.json {
        println!("{}", serde_json::to_string_pretty(&entries)?);
    } else {
        println!("category_a\tcategory_b\tlength");
        for e in &entries {
            println!("{}\t{}\t{}", e.category_a, e.category_b, e.length);
        }
    }
    Ok(())
}

pub fn junctions(args: &LabelsArgs) -> Result<()> {
    let mut all = BTreeMap::new();
    for stem in &args.labels {
        let lm = io::load_label_map(stem)?;
        all.insert(stem.display().to_string(), detect_junctions(&lm));
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&all)?);
    } else {
        for (stem, pts) in &all {
            println!("{stem}: {} junctions", pts.len());
            for (x, y) in pts {
                println!("{x}\t{y}");
            }
        }
    }
    Ok(())
}

pub fn synth(cfg: &Config, args: &SynthArgs) -> Result<()> {
    let scenes = dataset::generate(cfg)?;
    dataset::write(&scenes, &args.out)?;
    let frac = scenes.iter().map(|s| boundary_pixel_fraction(&s.gt)).sum::<f64>() / scenes.len().max(1) as f64;
    println!(
        "synth: {} train / {} val / {} test scenes at {}x{}, mean boundary fraction {frac:.4}, manifest {}",
        cfg.n_train,
        cfg.n_val,
        cfg.n_test,
        cfg.synth.width,
        cfg.synth.height,
        args.out.join("manifest.json").display()
    );
    Ok(())
}

fn curve_csv(summary: &BenchmarkSummary) -> String {
    let mut out = String::from("threshold,precision,recall,f\n");
    for p in &summary.curve {
        writeln!(out, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f).expect("writing to a String");
    }
    out
}

fn load_gt(m: &DatasetManifest, e: &sbd_core::manifest::ManifestEntry, cfg: &Config) -> Result<BoundaryMap> {
    Ok(match (&e.boundary, &e.labels) {
        (Some(b), _) => io::load_boundary_map(m.resolve(b))?,
        (None, Some(l)) => ground_truth(&io::load_label_map(m.resolve(l))?, cfg.connectivity),
        (None, None) => bail!("{}: no ground truth", e.image.display()),
    })
}

pub fn eval(cfg: &Config, args: &EvalArgs) -> Result<()> {
    let pairs: Vec<(SoftBoundaryMap, BoundaryMap)> = match (&args.manifest, &args.pred, &args.gt) {
        (Some(mpath), _, _) => {
            let m = DatasetManifest::load(mpath)?;
            let split: Split = args.split.parse()?;
            let pred_dir = args.pred_dir.as_ref().expect("clap requires --pred-dir");
            let entries: Vec<_> = m.split(split).collect();
            if entries.is_empty() {
                bail!("split {} of {} is empty", args.split, mpath.display());
            }
            entries
                .par_iter()
                .map(|e| Ok((io::load_soft_map(pred_dir.join(&e.image))?, load_gt(&m, e, cfg)?)))
                .collect::<Result<_>>()?
        }
        (None, Some(pred), Some(gt)) => vec![(io::load_soft_map(pred)?, io::load_boundary_map(gt)?)],
        _ => bail!("give either --manifest with --pred-dir, or --pred with --gt"),
    };
    let thresholds = uniform_thresholds(cfg.n_thresholds);
    let summary = benchmark(&pairs, &thresholds, cfg.d_max_fraction)?;
    let d_max_pixels = pairs
        .iter()
        .map(|(_, g)| {
            let (w, h) = g.dims();
            cfg.d_max_fraction * ((w * w + h * h) as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let out = serde_json::json!({
        "ods_f": summary.ods_f,
        "ods_threshold": summary.ods_threshold,
        "ois_f": summary.ois_f,
        "ap": summary.ap,
        "n_images": pairs.len(),
        "n_thresholds": thresholds.len(),
        "d_max_pixels": d_max_pixels,
    });
    write_text(&args.out.join("summary.json"), &(serde_json::to_string_pretty(&out)? + "\n"))?;
    write_text(&args.out.join("curve.csv"), &curve_csv(&summary))?;
    println!(
        "eval: ODS {:.4} (t={:.2}) OIS {:.4} AP {:.4} over {} images",
        summary.ods_f,
        summary.ods_threshold,
        summary.ois_f,
        summary.ap,
        pairs.len()
    );
    Ok(())
}

fn losses_csv(logs: &[StageLog]) -> String {
    let mut out = String::from("stage,step,loss\n");
    for log in logs {
        for (i, l) in log.losses.iter().enumerate() {
            writeln!(out, "{},{},{}", log.name, i, l).expect("writing to a String");
        }
    }
    out
}

pub fn train(cfg: &Config, args: &TrainArgs) -> Result<()> {
    let m = DatasetManifest::load(&args.manifest)?;
    let data: Vec<Sample> = dataset::load_split(&m, Split::Train, cfg.connectivity)?;
    if data.is_empty() {
        bail!("manifest has no train entries");
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut model = ModelParams::init(&cfg.arch, cfg.train.seed)?;
    let mut logs = train_stage_greedy(&mut model, &data, &cfg.train)?;
    checkpoint::save(&model, args.out.join("greedy.ckpt"))?;
    logs.push(train_stage_scale(&mut model, &data, &cfg.train)?);
    checkpoint::save(&model, args.out.join("stage_b.ckpt"))?;
    logs.push(train_stage_multiscale(&mut model, &data, &cfg.train)?);
    checkpoint::save(&model, args.out.join("model.ckpt"))?;
    write_text(&args.out.join("losses.csv"), &losses_csv(&logs))?;
    let last = logs.last().expect("three stages ran");
    let final_loss = last.window_means(1).map_or(f64::NAN, |(_, t)| t);
    println!(
        "train: final loss {final_loss:.6} after {} phases on {} images; checkpoints in {}",
        logs.len(),
        data.len(),
        args.out.display()
    );
    Ok(())
}

enum Predictor {
    Model(ModelParams),
    Sobel,
}

impl Predictor {
    fn run(&self, image: &sbd_core::net::Tensor) -> Result<SoftBoundaryMap> {
        Ok(match self {
            Predictor::Model(m) => run_model(m, image)?,
            Predictor::Sobel => sobel_baseline(image)?,
        })
    }
}

pub fn predict(cfg: &Config, args: &PredictArgs) -> Result<()> {
    let predictor = if args.sobel {
        Predictor::Sobel
    } else {
        let model = match (&args.model, args.untrained) {
            (Some(p), _) => checkpoint::load(p)?,
            (None, true) => ModelParams::init(&cfg.arch, cfg.train.seed)?,
            (None, false) => bail!("choose --model, --untrained or --sobel"),
        };
        Predictor::Model(if args.single_scale { model.single_scale() } else { model })
    };
    match (&args.manifest, &args.image) {
        (Some(mpath), _) => {
            let m = DatasetManifest::load(mpath)?;
            let split: Split = args.split.parse()?;
            let out_dir = args.out_dir.as_ref().expect("clap requires --out-dir");
            let entries: Vec<_> = m.split(split).collect();
            entries.par_iter().try_for_each(|e| -> Result<()> {
                let soft = predictor.run(&io::load_image(m.resolve(&e.image))?)?;
                let out = out_dir.join(&e.image);
                create_parent(&out)?;
                io::save_soft_map(&soft, &out)?;
                Ok(())
            })?;
            println!("predict: wrote {} maps to {}", entries.len(), out_dir.display());
        }
        (None, Some(image)) => {
            let out = args.out.as_ref().expect("clap requires --out");
            let soft = predictor.run(&io::load_image(image)?)?;
            create_parent(out)?;
            io::save_soft_map(&soft, out)?;
            println!("predict: wrote {}", out.display());
        }
        (None, None) => bail!("give --manifest with --out-dir, or --image with --out"),
    }
    Ok(())
}

fn parse_selector(s: &str) -> Result<LossSelector> {
    let one_based = |v: &str| -> Result<usize> {
        let n: usize = v.parse().with_context(|| format!("bad index in `{s}`"))?;
        n.checked_sub(1).with_context(|| format!("indices are 1-based in `{s}`"))
    };
    match s.split_once(':') {
        Some(("side", k)) => Ok(LossSelector::SideOutput(one_based(k)?)),
        Some(("scale", v)) => Ok(LossSelector::ScaleSpecific(one_based(v)?)),
        None if s == "boundary" => Ok(LossSelector::Boundary),
        _ => bail!("unknown selector `{s}` (side:K, scale:S or boundary)"),
    }
}

fn selector_name(s: LossSelector) -> String {
    match s {
        LossSelector::SideOutput(k) => format!("side:{}", k + 1),
        LossSelector::ScaleSpecific(s) => format!("scale:{}", s + 1),
        LossSelector::Boundary => "boundary".into(),
    }
}

pub fn gradcheck(cfg: &Config, args: &GradcheckArgs) -> Result<()> {
    let model = match &args.model {
        Some(p) => checkpoint::load(p)?,
        None => ModelParams::init(&cfg.arch, cfg.train.seed)?,
    };
    let (image, labels) = synth_scene(&SynthSpec::small(args.size, cfg.synth.seed))?;
    let batch = [Sample {
        image,
        gt: ground_truth(&labels, cfg.connectivity),
    }];
    let selectors: Vec<LossSelector> = if args.selector.is_empty() {
        (0..model.stages())
            .map(LossSelector::SideOutput)
            .chain((0..model.branches.len()).map(LossSelector::ScaleSpecific))
            .chain([LossSelector::Boundary])
            .collect()
    } else {
        args.selector.iter().map(|s| parse_selector(s)).collect::<Result<_>>()?
    };
    let mut worst: f64 = 0.0;
    for sel in selectors {
        let r = grad_check(&model, &batch, sel, cfg.train.beta, args.eps)?;
        println!(
            "{:<10} max relative error {:.3e} over {} parameters ({} at kinks)",
            selector_name(sel),
            r.max_rel_error,
            r.n_params,
            r.n_kinks
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("gradcheck: max relative error {worst:.3e} (tolerance {:.0e})", args.tolerance);
    if worst > args.tolerance {
        bail!("gradient check failed: {worst:.3e} > {:.0e}", args.tolerance);
    }
    Ok(())
}
