use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dirseg::dircodec::encode_direction_map;
use dirseg::metrics::{mpq, multi_r2};
use dirseg::reconstruct::{
    assign_classes, counts_from_instances, decode_maps, maps_from_outputs, postprocess_counts,
};
use dirseg::render::{overlay_rgb, write_rgb_png};
use dirseg::synth::generate;
use dirseg::tensorio::{
    read_class_map, read_counts, read_direction_map, read_instance_map, read_tensor, write_counts,
    write_counts_to, write_label_map,
};
use dirseg::{
    ClassMap, CountVector, DirectionConfig, DirectionMap, LossInputs, MetricsReport,
    PanopticResult, PqAggregation, R2Aggregation, ReconstructionConfig, SynthConfig,
};
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::dataset::{self, CLASSES, COUNTS, DIRECTIONS, INSTANCES};
use crate::{Cli, Command, GlobalOpts, LossArgs, SynthArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Encode { inputs } => encode(g, inputs),
        Command::Decode { seg, dir } => decode(g, seg, dir),
        Command::Eval {
            gt,
            pred,
            per_image,
            pooled_r2,
        } => eval(g, gt, pred, *per_image, *pooled_r2),
        Command::Counts { input } => counts(g, input),
        Command::Synth(args) => synth(g, args),
        Command::Render { instances, classes } => render(g, instances, classes.as_deref()),
        Command::Loss(args) => loss(g, args),
    }
}

fn pool(g: &GlobalOpts) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs.unwrap_or(0))
        .build()
        .context("starting worker threads")
}

/// Runs `f` over `items` on the pool, keeping input order.
fn par_map<T: Sync, R: Send>(
    pool: &ThreadPool,
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Vec<Result<R>> {
    pool.install(|| items.par_iter().map(f).collect())
}

/// Prints every failure to stderr and keeps the successes in order.
fn split_failures<R>(labels: &[String], results: Vec<Result<R>>) -> (Vec<(String, R)>, usize) {
    let mut ok = Vec::new();
    let mut failed = 0;
    for (label, r) in labels.iter().zip(results) {
        match r {
            Ok(v) => ok.push((label.clone(), v)),
            Err(e) => {
                eprintln!("error: {label}: {e:#}");
                failed += 1;
            }
        }
    }
    (ok, failed)
}

fn fail_if_any(failed: usize, total: usize) -> Result<()> {
    if failed > 0 {
        bail!("{failed} of {total} inputs failed");
    }
    Ok(())
}

fn out_path(g: &GlobalOpts) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(g: &GlobalOpts, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn encode(g: &GlobalOpts, inputs: &[PathBuf]) -> Result<()> {
    let cfg = DirectionConfig::new(g.directions())?;
    let out = out_path(g)?;
    let files = dataset::expand_pngs(inputs)?;
    if files.is_empty() {
        bail!("no PNG inputs found");
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results = par_map(&pool(g)?, &files, |path| {
        let name = path.file_name().ok_or_else(|| anyhow!("not a file"))?;
        let inst = read_instance_map(path)?;
        let dirs = encode_direction_map(&inst, &cfg)?;
        write_label_map(&dirs.into(), out.join(name))?;
        Ok(())
    });
    let labels: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    let (_, failed) = split_failures(&labels, results);
    fail_if_any(failed, files.len())
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Hard maps from either two label PNGs or two probability tensors.
fn load_maps(seg: &Path, dir: &Path, n_directions: u8) -> Result<(ClassMap, DirectionMap)> {
    match (is_png(seg), is_png(dir)) {
        (true, true) => {
            let classes = read_class_map(seg).with_context(|| seg.display().to_string())?;
            let directions =
                read_direction_map(dir, n_directions).with_context(|| dir.display().to_string())?;
            Ok((classes, directions))
        }
        (false, false) => {
            let s = read_tensor(seg).with_context(|| seg.display().to_string())?;
            let d = read_tensor(dir).with_context(|| dir.display().to_string())?;
            let (classes, directions) = maps_from_outputs(&s, &d)?;
            if directions.n_directions() != n_directions {
                bail!(
                    "{}: tensor has {} direction channels, --directions is {n_directions}",
                    dir.display(),
                    directions.n_directions()
                );
            }
            Ok((classes, directions))
        }
        _ => bail!("segmentation and direction inputs must both be PNG maps or both be tensors"),
    }
}

fn decode(g: &GlobalOpts, seg: &Path, dir: &Path) -> Result<()> {
    let cfg = ReconstructionConfig {
        connectivity: g.connectivity,
        n_directions: g.directions(),
    };
    DirectionConfig::new(cfg.n_directions)?;
    let out = out_path(g)?;
    let jobs: Vec<(String, PathBuf, PathBuf)> = match (seg.is_dir(), dir.is_dir()) {
        (true, true) => dataset::pair_by_stem(
            dataset::files_by_stem(seg)?,
            &dataset::files_by_stem(dir)?,
            &seg.display().to_string(),
            &dir.display().to_string(),
        )?,
        (false, false) => {
            let stem = seg
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("{}: bad file name", seg.display()))?;
            vec![(stem.to_string(), seg.to_path_buf(), dir.to_path_buf())]
        }
        _ => bail!("segmentation and direction inputs must both be files or both be directories"),
    };
    if jobs.is_empty() {
        bail!("no inputs found in {}", seg.display());
    }
    dataset::create_dirs(out, &[INSTANCES, CLASSES])?;
    let results = par_map(&pool(g)?, &jobs, |(stem, s, d)| {
        let (classes, directions) = load_maps(s, d, cfg.n_directions)?;
        let result = decode_maps(&classes, &directions, &cfg)?;
        let name = dataset::png_name(stem);
        write_label_map(
            &result.instances.clone().into(),
            out.join(INSTANCES).join(&name),
        )?;
        write_label_map(
            &result.classes.clone().into(),
            out.join(CLASSES).join(&name),
        )?;
        Ok(counts_from_instances(&result))
    });
    let labels: Vec<String> = jobs.iter().map(|j| j.0.clone()).collect();
    let (rows, failed) = split_failures(&labels, results);
    write_counts(&rows, out.join(COUNTS))?;
    fail_if_any(failed, jobs.len())
}

fn load_panoptic(root: &Path, stem: &str) -> Result<PanopticResult> {
    let name = dataset::png_name(stem);
    let inst_path = root.join(INSTANCES).join(&name);
    let cls_path = root.join(CLASSES).join(&name);
    let instances =
        read_instance_map(&inst_path).with_context(|| inst_path.display().to_string())?;
    let classes = read_class_map(&cls_path).with_context(|| cls_path.display().to_string())?;
    Ok(assign_classes(&instances, &classes)?)
}

/// Counts rows for `stems`, in that order; rows must match the images one to one.
fn counts_for(path: &Path, stems: &[String]) -> Result<Vec<CountVector>> {
    let mut rows = BTreeMap::new();
    for (id, v) in read_counts(path)? {
        if rows.insert(id.clone(), v).is_some() {
            bail!("{}: duplicate row for image `{id}`", path.display());
        }
    }
    let out = stems
        .iter()
        .map(|s| {
            rows.remove(s)
                .ok_or_else(|| anyhow!("{}: no row for image `{s}`", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = rows.keys().next() {
        bail!("{}: row `{extra}` has no matching image", path.display());
    }
    Ok(out)
}

fn eval(g: &GlobalOpts, gt: &Path, pred: &Path, per_image: bool, pooled_r2: bool) -> Result<()> {
    let pairs = dataset::pair_by_stem(
        dataset::files_by_stem(&gt.join(INSTANCES))?,
        &dataset::files_by_stem(&pred.join(INSTANCES))?,
        "ground truth",
        "prediction",
    )?;
    let stems: Vec<String> = pairs.into_iter().map(|p| p.0).collect();
    if stems.is_empty() {
        bail!("no images in {}", gt.join(INSTANCES).display());
    }
    let results = par_map(&pool(g)?, &stems, |stem| {
        Ok((load_panoptic(gt, stem)?, load_panoptic(pred, stem)?))
    });
    let (images, failed) = split_failures(&stems, results);
    fail_if_any(failed, stems.len())?;
    let images: Vec<(PanopticResult, PanopticResult)> =
        images.into_iter().map(|(_, v)| v).collect();

    let aggregation = if per_image {
        PqAggregation::PerImage
    } else {
        PqAggregation::Pooled
    };
    let panoptic = mpq(&images, aggregation)?;

    let (gt_counts, pred_counts) = (gt.join(COUNTS), pred.join(COUNTS));
    let r2 = match (gt_counts.is_file(), pred_counts.is_file()) {
        (true, true) => {
            let agg = if pooled_r2 {
                R2Aggregation::Pooled
            } else {
                R2Aggregation::PerClass
            };
            Some(multi_r2(
                &counts_for(&gt_counts, &stems)?,
                &counts_for(&pred_counts, &stems)?,
                agg,
            )?)
        }
        (false, false) => None,
        (true, false) => bail!(
            "{} exists but {} does not",
            gt_counts.display(),
            pred_counts.display()
        ),
        (false, true) => bail!(
            "{} exists but {} does not",
            pred_counts.display(),
            gt_counts.display()
        ),
    };
    let report = MetricsReport::new(images.len(), &panoptic, r2.as_ref());
    emit(g, &to_json(&report)?)
}

fn counts(g: &GlobalOpts, input: &Path) -> Result<()> {
    let rows = read_counts(input)?
        .into_iter()
        .map(|(id, raw)| Ok((id, postprocess_counts(&raw)?)))
        .collect::<Result<Vec<_>>>()?;
    match &g.out {
        Some(p) => write_counts(&rows, p)?,
        None => write_counts_to(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn synth(g: &GlobalOpts, args: &SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(h) = args.height {
        cfg.height = h;
    }
    if let Some(w) = args.width {
        cfg.width = w;
    }
    if let Some(n) = args.nuclei {
        cfg.n_nuclei = n;
    }
    if args.touching {
        cfg.allow_touching = true;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.n_directions {
        cfg.n_directions = n;
    }
    cfg.validate()?;
    let out = out_path(g)?;
    dataset::create_dirs(out, &[INSTANCES, CLASSES, DIRECTIONS])?;
    std::fs::write(out.join("synth.json"), to_json(&cfg)?)?;

    let stems: Vec<String> = (0..args.images).map(|i| format!("img_{i:04}")).collect();
    let indexed: Vec<(usize, &String)> = stems.iter().enumerate().collect();
    let results = par_map(&pool(g)?, &indexed, |&(i, stem)| {
        let bundle = generate(&SynthConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        })?;
        let name = dataset::png_name(stem);
        write_label_map(&bundle.instances.into(), out.join(INSTANCES).join(&name))?;
        write_label_map(&bundle.classes.into(), out.join(CLASSES).join(&name))?;
        write_label_map(&bundle.directions.into(), out.join(DIRECTIONS).join(&name))?;
        Ok(bundle.counts)
    });
    let (rows, failed) = split_failures(&stems, results);
    write_counts(&rows, out.join(COUNTS))?;
    fail_if_any(failed, stems.len())
}

fn render(g: &GlobalOpts, instances: &Path, classes: Option<&Path>) -> Result<()> {
    let out = out_path(g)?;
    let inst = read_instance_map(instances)?;
    let cls = classes.map(read_class_map).transpose()?;
    let rgb = overlay_rgb(&inst, cls.as_ref())?;
    write_rgb_png(out, inst.height(), inst.width(), &rgb)?;
    Ok(())
}

/// The row named `image`, or the only row when no name is given.
fn pick_row(path: &Path, image: Option<&str>) -> Result<CountVector> {
    let rows = read_counts(path)?;
    match image {
        Some(id) => rows
            .into_iter()
            .find(|(r, _)| r == id)
            .map(|(_, v)| v)
            .ok_or_else(|| anyhow!("{}: no row for image `{id}`", path.display())),
        None => match <[_; 1]>::try_from(rows) {
            Ok([(_, v)]) => Ok(v),
            Err(rows) => bail!(
                "{}: has {} rows; pick one with --image",
                path.display(),
                rows.len()
            ),
        },
    }
}

fn loss(g: &GlobalOpts, args: &LossArgs) -> Result<()> {
    let seg_pred = read_tensor(&args.seg_pred)?;
    let dir_pred = read_tensor(&args.dir_pred)?;
    let seg_gt = read_class_map(&args.classes)?;
    let dir_gt = read_direction_map(&args.direction_map, g.directions())?;
    let (count_pred, count_gt) = match (&args.count_pred, &args.count_gt) {
        (Some(p), Some(t)) => (
            pick_row(p, args.image.as_deref())?,
            pick_row(t, args.image.as_deref())?,
        ),
        _ => (CountVector::zeros(), CountVector::zeros()),
    };
    let breakdown = dirseg::losses::total_loss(
        &LossInputs {
            seg_pred: &seg_pred,
            seg_gt: &seg_gt,
            dir_pred: &dir_pred,
            dir_gt: &dir_gt,
            count_pred: &count_pred,
            count_gt: &count_gt,
        },
        g.weights,
    )?;
    emit(g, &to_json(&breakdown)?)
}
