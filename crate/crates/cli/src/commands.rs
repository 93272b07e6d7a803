use crate::config::FileConfig;
use crate::{BenchArgs, CliError, EvalArgs, GenArgs, TrainArgs, UpsampleArgs};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;
use voxcolor::baselines::{upsample_baseline, Method};
use voxcolor::data::{default_corpus, read_ply, write_ply, Manifest, ObjectSource, Split};
use voxcolor::eval::{
    bench_cloud, bench_scaling, evaluate, write_csv, write_scaling_dat, EvalReport, EvalSummary, ScalingReport,
};
use voxcolor::geometry::voxelize;
use voxcolor::model::{train_model, Model, TrainConfig};
use voxcolor::{exec, Error, Result};

pub struct Context {
    pub file: FileConfig,
    pub seed: Option<u64>,
    /// Raw `--config` text, copied into reports.
    pub config_text: Option<String>,
}

const DEFAULT_BENCH_SIZES: [usize; 5] = [50_000, 100_000, 200_000, 400_000, 800_000];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_method(s: &str) -> std::result::Result<Method, CliError> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn load_model(path: &Path) -> Result<Model> {
    let (model, header) = Model::load(path)?;
    log::info!(
        "loaded {} ({} params, trained at {}x)",
        path.display(),
        header.params.len(),
        model.config().v_train
    );
    Ok(model)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

pub fn gen(ctx: &Context, a: GenArgs) -> std::result::Result<(), CliError> {
    let mut cfg = ctx.file.corpus()?;
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.extent = a.extent.unwrap_or(cfg.extent);
    cfg.target_points = a.target_points.unwrap_or(cfg.target_points);
    cfg.train_fraction = a.train_fraction.unwrap_or(cfg.train_fraction);
    cfg.val_fraction = a.val_fraction.unwrap_or(cfg.val_fraction);
    let mut manifest = default_corpus(&cfg)?;
    if let Some(dir) = &a.export_ply {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let base = a.out.parent().unwrap_or(Path::new(""));
        let rel_dir = dir.strip_prefix(base).unwrap_or(dir).to_path_buf();
        let files = exec::map_slice(&manifest.objects, |o| -> Result<PathBuf> {
            let name = format!("{}.ply", o.id);
            write_ply(&manifest.load_object(o)?, &dir.join(&name))?;
            Ok(rel_dir.join(name))
        });
        let files = files.into_iter().collect::<Result<Vec<_>>>()?;
        let objects = manifest
            .objects
            .iter()
            .zip(files)
            .map(|(o, f)| voxcolor::data::ObjectEntry {
                source: ObjectSource::Path(f),
                ..o.clone()
            })
            .collect();
        manifest = Manifest::new(manifest.extent, manifest.seed, objects)?;
    }
    manifest.save(&a.out)?;
    println!(
        "wrote {} objects ({} train, {} val, {} test) to {}",
        manifest.objects.len(),
        manifest.entries(Split::Train).len(),
        manifest.entries(Split::Val).len(),
        manifest.entries(Split::Test).len(),
        a.out.display()
    );
    Ok(())
}

fn train_config(ctx: &Context, a: &TrainArgs) -> Result<TrainConfig> {
    let ratio = a.ratio.or(ctx.file.train_ratio()?).unwrap_or(5);
    let mut c = ctx.file.train(ratio)?;
    c.ratio = ratio;
    c.seed = ctx.seed.unwrap_or(c.seed);
    c.epochs = a.epochs.unwrap_or(c.epochs);
    c.batch_size = a.batch_size.unwrap_or(c.batch_size);
    c.channels = a.channels.unwrap_or(c.channels);
    c.blocks = a.blocks.unwrap_or(c.blocks);
    c.lr = a.lr.unwrap_or(c.lr);
    c.weight_decay = a.weight_decay.unwrap_or(c.weight_decay);
    c.precision = a.precision.unwrap_or(c.precision);
    c.validate()?;
    Ok(c)
}

pub fn train(ctx: &Context, a: TrainArgs) -> std::result::Result<(), CliError> {
    let cfg = train_config(ctx, &a)?;
    let manifest = Manifest::load(&a.manifest)?;
    let train_set = manifest.pairs(Split::Train, cfg.ratio)?;
    let val_set = manifest.pairs(Split::Val, cfg.ratio)?;
    log::info!(
        "training at {}x on {} objects ({} val): {:?}",
        cfg.ratio,
        train_set.len(),
        val_set.len(),
        cfg
    );
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.csv"));
    let mut w = csv::Writer::from_path(&log_path).map_err(|e| Error::Config(format!("{}: {e}", log_path.display())))?;
    let mut write_err = None;
    let started = Instant::now();
    let (model, _) = train_model(&train_set, &val_set, &cfg, |e| {
        println!(
            "epoch {:>3}  loss {:.6e}  val_psnr {}  lr {:.1e}  [{:.0}s]",
            e.epoch,
            e.loss,
            e.val_psnr.map_or("-".into(), |p| format!("{p:.3}")),
            e.lr,
            started.elapsed().as_secs_f64()
        );
        if let Err(err) = w.serialize(e).and_then(|_| w.flush().map_err(Into::into)) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::Config(format!("{}: {e}", log_path.display())).into());
    }
    model.save(&a.out, Some(&cfg))?;
    println!("saved {}", a.out.display());
    Ok(())
}

pub fn upsample(_ctx: &Context, a: UpsampleArgs) -> std::result::Result<(), CliError> {
    let method = parse_method(&a.method)?;
    if method == Method::Cunet && a.checkpoint.is_none() {
        return Err(usage("--method cunet requires --checkpoint"));
    }
    let lr = read_ply(&a.lr)?;
    let hr = read_ply(&a.hr)?.without_colors();
    let colors = match &a.checkpoint {
        Some(p) if method == Method::Cunet => load_model(p)?.upsample(&lr, &hr, a.ratio)?,
        _ => upsample_baseline(method, &lr, &hr, a.ratio)?,
    };
    let n = hr.len();
    write_ply(&hr.with_colors(colors)?, &a.out)?;
    println!("wrote {n} colored points to {}", a.out.display());
    Ok(())
}

fn provenance(ctx: &Context, settings: serde_json::Value) -> serde_json::Value {
    json!({
        "seed": ctx.seed,
        "threads": exec::threads(),
        "config_file": ctx.config_text,
        "settings": settings,
    })
}

pub fn eval(ctx: &Context, a: EvalArgs) -> std::result::Result<(), CliError> {
    let sec = &ctx.file.eval;
    let method_names = a.methods.clone().or(sec.methods.clone()).unwrap_or_else(|| {
        let mut m = vec!["devox".to_string(), "knn".into(), "waan".into()];
        if !a.checkpoint.is_empty() {
            m.push("cunet".into());
        }
        m
    });
    let methods = method_names.iter().map(|m| parse_method(m)).collect::<std::result::Result<Vec<_>, _>>()?;
    if methods.contains(&Method::Cunet) && a.checkpoint.is_empty() {
        return Err(usage("method cunet requires --checkpoint"));
    }
    let ratios = a.ratios.clone().or(sec.ratios.clone()).unwrap_or(vec![5]);
    let split: Split = a.split.as_deref().or(sec.split.as_deref()).unwrap_or("test").parse().map_err(|e: Error| usage(e.to_string()))?;
    let manifest = Manifest::load(&a.manifest)?;
    let models = a.checkpoint.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;

    let mut reports: Vec<EvalReport> = Vec::new();
    for &v in &ratios {
        let pairs = manifest.pairs(split, v)?;
        for &m in &methods {
            if m == Method::Cunet {
                for model in &models {
                    reports.push(evaluate(m, &pairs, Some(model))?);
                }
            } else {
                reports.push(evaluate(m, &pairs, None)?);
            }
        }
    }
    write_csv(&a.out, &reports)?;
    let settings = json!({
        "manifest": a.manifest,
        "split": split,
        "methods": method_names,
        "ratios": ratios,
        "checkpoints": a.checkpoint,
    });
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "json"));
    EvalSummary::new(provenance(ctx, settings), &reports).save(&summary_path)?;
    println!("{:<10} {:>7} {:>6} {:>8} {:>10}", "method", "v_train", "v_test", "objects", "psnr_db");
    for r in &reports {
        println!(
            "{:<10} {:>7} {:>6} {:>8} {:>10.3}",
            r.method,
            r.v_train.map_or("-".into(), |v| v.to_string()),
            r.v_test,
            r.objects.len(),
            r.mean_psnr()
        );
    }
    Ok(())
}

pub fn bench(ctx: &Context, a: BenchArgs) -> std::result::Result<(), CliError> {
    let sec = &ctx.file.bench;
    let sizes = a.sizes.clone().or(sec.sizes.clone()).unwrap_or(DEFAULT_BENCH_SIZES.to_vec());
    let method = parse_method(a.method.as_deref().or(sec.method.as_deref()).unwrap_or("cunet"))?;
    let ratio = a.ratio.or(sec.ratio).unwrap_or(5);
    let repeats = a.repeats.or(sec.repeats).unwrap_or(3);
    let seed = ctx.seed.unwrap_or(0);
    let model = match (method, &a.checkpoint) {
        (Method::Cunet, Some(p)) => Some(load_model(p)?),
        (Method::Cunet, None) => {
            let cfg = TrainConfig::for_ratio(ratio);
            log::info!("no checkpoint; timing an untrained {}-channel network", cfg.channels);
            Some(Model::new(cfg.model_config(), cfg.precision, seed)?)
        }
        _ => None,
    };

    let mut tasks = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let hr = bench_cloud(n, seed)?;
        let (lr, _) = voxelize(&hr, ratio)?;
        log::info!("size {n}: {} HR, {} LR points", hr.len(), lr.len());
        tasks.push((lr, hr.without_colors()));
    }
    let actual: Vec<usize> = tasks.iter().map(|(_, hr)| hr.len()).collect();
    let (samples, fit) = bench_scaling(&actual, repeats, |i| {
        let (lr, hr) = &tasks[i];
        let t = Instant::now();
        let out = match &model {
            Some(m) => m.upsample(lr, hr, ratio)?,
            None => upsample_baseline(method, lr, hr, ratio)?,
        };
        let dt = t.elapsed().as_secs_f64();
        std::hint::black_box(out);
        Ok(dt)
    })?;
    let report = ScalingReport::new(method.to_string(), ratio, repeats, samples, fit);

    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Error::Config(format!("{}: {e}", a.out.display())))?;
    let wrap = |e: csv::Error| Error::Config(format!("{}: {e}", a.out.display()));
    w.write_record(["method", "ratio", "threads", "n_lr", "n_hr", "median_s"]).map_err(wrap)?;
    for (s, (lr, _)) in report.samples.iter().zip(&tasks) {
        w.write_record([
            report.method.clone(),
            ratio.to_string(),
            report.threads.to_string(),
            lr.len().to_string(),
            s.n_hr.to_string(),
            format!("{:.6e}", s.seconds),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(io_err(&a.out))?;
    let dat = a.dat.clone().unwrap_or_else(|| sibling(&a.out, "dat"));
    write_scaling_dat(&dat, &report)?;
    let summary = json!({
        "config": provenance(ctx, json!({"sizes": sizes, "checkpoint": a.checkpoint})),
        "report": report,
    });
    let summary_path = sibling(&a.out, "json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap() + "\n").map_err(io_err(&summary_path))?;
    println!(
        "{} at {}x on {} threads: seconds = {:.4e} * n_hr + {:.4e}, R^2 = {:.4}",
        report.method, ratio, report.threads, fit.slope, fit.intercept, fit.r2
    );
    Ok(())
}
