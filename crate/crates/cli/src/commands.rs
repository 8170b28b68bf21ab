//! The five subcommands. Each returns `Ok(exit_code)` for outcomes it
//! reports itself and `Err` for failures mapped by `main`.

use std::fs;
use std::path::{Path, PathBuf};

use hscmt::data::{
    class_counts, load_dataset, oversample_balance, split_auto, synth_export, synth_generate, DatasetSplit, Sample,
    SYNTH_CLASSES,
};
use hscmt::eval::{write_eval_report, write_pca_report};
use hscmt::train::{evaluate, fit, import_weights, load_checkpoint, Trainer, BEST_DIR, LAST_DIR};
use hscmt::verify::{run_case, GRADIENT_CASES};
use hscmt::{Error, Model, ModelConfig, Result};
use log::{info, warn};

use crate::config::{prepare_out, RunConfig, RunRecord};
use crate::{Common, DataArgs, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs};

/// Dataset source resolved from flags and file.
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
}

fn load_data(data: Option<&Path>, synthetic: Option<usize>, size: usize, seed: u64) -> Result<Dataset> {
    match (data, synthetic) {
        (Some(_), Some(_)) => Err(Error::Config("pass either --data or --synthetic, not both".into())),
        (None, None) => Err(Error::Config("no dataset: pass --data <dir> or --synthetic <n-per-class>".into())),
        (None, Some(n)) => Ok(Dataset {
            samples: synth_generate(n, size, seed)?,
            class_names: SYNTH_CLASSES.iter().map(|s| s.to_string()).collect(),
        }),
        (Some(root), None) => {
            let loaded = load_dataset(root, size)?;
            if loaded.skipped > 0 {
                warn!("{} undecodable files skipped", loaded.skipped);
            }
            Ok(Dataset { samples: loaded.samples, class_names: loaded.class_names })
        }
    }
}

fn out_dir(common: &Common, cfg_out: Option<&PathBuf>, command: &str) -> PathBuf {
    common.out.clone().or_else(|| cfg_out.cloned()).unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn mark_completed(out: &Path, mut record: RunRecord) -> Result<()> {
    record.status = "completed".into();
    record.write(out)
}

fn file_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

/// Applies shared and training flags over the file config.
pub fn resolve_train(common: &Common, data: &DataArgs, args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = file_config(common)?;
    if let Some(p) = &common.preset {
        cfg.preset = p.clone();
        cfg.model = None;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &data.data {
        cfg.data = Some(d.clone());
    }
    if let Some(n) = data.synthetic {
        cfg.synthetic = Some(n);
    }
    if let Some(f) = data.fractions {
        cfg.fractions = f;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr0 = lr;
    }
    if args.no_oversample {
        cfg.oversample = false;
    }
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn train(common: &Common, data: &DataArgs, args: &TrainArgs) -> Result<i32> {
    let cfg = resolve_train(common, data, args)?;
    let model_cfg = cfg.model_config()?;
    let out = out_dir(common, cfg.out.as_ref(), "train");
    prepare_out(&out, common.force || args.resume)?;
    let record = RunRecord::new("train", cfg.seed, serde_json::to_value(&cfg)?);
    record.write(&out)?;

    let ds = load_data(cfg.data.as_deref(), cfg.synthetic, model_cfg.input_size, cfg.seed)?;
    if ds.class_names.len() != model_cfg.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model expects {}",
            ds.class_names.len(),
            model_cfg.num_classes
        )));
    }
    let split = split_auto(&ds.samples, model_cfg.num_classes, cfg.fractions, cfg.seed)?;
    split.manifest(&ds.class_names).write(&out.join("split.json"))?;
    info!("split: train {} / val {} / test {}", split.train.len(), split.val.len(), split.test.len());

    let mut train_samples = split.train.clone();
    if cfg.oversample {
        let aug = cfg.train.augment.clone().unwrap_or_default();
        train_samples = oversample_balance(&train_samples, &aug, cfg.seed);
        info!("oversampled train counts: {:?}", class_counts(&train_samples, model_cfg.num_classes));
    }
    let fit_split = DatasetSplit { train: train_samples, val: split.val.clone(), test: split.test.clone() };

    let mut trainer = if args.resume && out.join(LAST_DIR).join(hscmt::train::MANIFEST_FILE).exists() {
        let mut t = Trainer::resume(&out.join(LAST_DIR))?;
        if t.model.config != model_cfg {
            return Err(Error::Checkpoint("resumed checkpoint was trained with a different model config".into()));
        }
        info!("resuming after epoch {}", t.state.epoch);
        t.state.cfg.epochs = cfg.train.epochs;
        t
    } else {
        let mut model = Model::<f32>::new(model_cfg.clone(), cfg.seed)?;
        if let Some(dir) = &args.import_weights {
            let report = import_weights(&mut model.store, dir)?;
            info!(
                "imported {} parameters ({} unmatched, {} left at initialisation)",
                report.loaded.len(),
                report.unmatched.len(),
                report.missing.len()
            );
        }
        Trainer::new(model, cfg.train.clone())?
    };

    let history = fit(&mut trainer, &fit_split, Some(&out), &mut |r| {
        println!(
            "epoch {:>3}  lr {:.3e}  train_loss {:.5}  val_loss {:.5}  val_acc {:.4}",
            r.epoch, r.lr, r.train_loss, r.val_loss, r.val_acc
        )
    })?;

    let best_dir = out.join(BEST_DIR);
    let (best, _) = if best_dir.exists() { load_checkpoint(&best_dir)? } else { (trainer.model.clone(), trainer.state.clone()) };
    let val = evaluate(&best, &split.val)?;
    let report = write_eval_report(&out.join("val"), &val.labels, &val.preds, &val.probs, &ds.class_names)?;
    println!(
        "trained {} epochs; best val acc {:.2}% (epoch {}); val macro F1 {:.2}%",
        history.records.len(),
        report.metrics.accuracy,
        trainer.state.best.map_or(0, |b| b.0),
        report.metrics.macro_f1
    );
    mark_completed(&out, record)?;
    Ok(0)
}

/// Model, class names and the selected samples for `eval`/`features`.
fn eval_inputs(common: &Common, args: &EvalArgs) -> Result<(Model<f32>, Vec<String>, Vec<Sample>, RunConfig)> {
    let mut cfg = file_config(common)?;
    let (model, state) = load_checkpoint(&args.checkpoint)?;
    cfg.seed = common.seed.unwrap_or(state.cfg.seed);
    cfg.model = Some(model.config.clone());
    cfg.train = state.cfg.clone();
    if let Some(d) = &args.data.data {
        cfg.data = Some(d.clone());
    }
    if let Some(n) = args.data.synthetic {
        cfg.synthetic = Some(n);
    }
    if let Some(f) = args.data.fractions {
        cfg.fractions = f;
    }
    let mc: &ModelConfig = &model.config;
    let ds = load_data(cfg.data.as_deref(), cfg.synthetic, mc.input_size, cfg.seed)?;
    if ds.class_names.len() != mc.num_classes {
        return Err(Error::Config(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            mc.num_classes,
            ds.class_names.len()
        )));
    }
    let samples = match args.split.as_str() {
        "all" => ds.samples,
        part => {
            let s = split_auto(&ds.samples, mc.num_classes, cfg.fractions, cfg.seed)?;
            match part {
                "train" => s.train,
                "val" => s.val,
                "test" => s.test,
                other => return Err(Error::Config(format!("unknown split `{other}` (expected train, val, test or all)"))),
            }
        }
    };
    if samples.is_empty() {
        return Err(Error::Dataset(format!("the {} split is empty", args.split)));
    }
    Ok((model, ds.class_names, samples, cfg))
}

pub fn eval(common: &Common, args: &EvalArgs) -> Result<i32> {
    let (model, class_names, samples, cfg) = eval_inputs(common, args)?;
    let out = out_dir(common, cfg.out.as_ref(), "eval");
    prepare_out(&out, common.force)?;
    let record = RunRecord::new("eval", cfg.seed, serde_json::to_value(&cfg)?);
    record.write(&out)?;

    let ev = evaluate(&model, &samples)?;
    let report = write_eval_report(&out, &ev.labels, &ev.preds, &ev.probs, &class_names)?;
    let m = &report.metrics;
    println!("{} samples ({} split)", m.samples, args.split);
    println!("{:<16} {:>8} {:>8} {:>8} {:>8}", "class", "acc", "sen", "pre", "f1");
    for c in &m.classes {
        println!("{:<16} {:>8.2} {:>8.2} {:>8.2} {:>8.2}", c.name, c.accuracy, c.sensitivity, c.precision, c.f1);
    }
    println!(
        "{:<16} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
        "macro", m.macro_accuracy, m.macro_sensitivity, m.macro_precision, m.macro_f1
    );
    println!("accuracy {:.2}% ± {:.2} (95% CI on error)", m.accuracy, m.ci95);
    match (report.macro_auc_roc, report.macro_auc_pr) {
        (Some(roc), Some(pr)) => println!("macro AUC: ROC {roc:.4}  PR {pr:.4}"),
        _ => println!("macro AUC: undefined (some class lacks positives or negatives)"),
    }
    mark_completed(&out, record)?;
    Ok(0)
}

pub fn features(common: &Common, args: &EvalArgs) -> Result<i32> {
    let (model, class_names, samples, cfg) = eval_inputs(common, args)?;
    let out = out_dir(common, cfg.out.as_ref(), "features");
    prepare_out(&out, common.force)?;
    let record = RunRecord::new("features", cfg.seed, serde_json::to_value(&cfg)?);
    record.write(&out)?;

    let ev = evaluate(&model, &samples)?;
    let dim = ev.features.first().map_or(0, Vec::len);
    let mut csv = String::from("label");
    for j in 0..dim {
        csv.push_str(&format!(",f{j}"));
    }
    csv.push('\n');
    for (label, row) in ev.labels.iter().zip(&ev.features) {
        csv.push_str(&label.to_string());
        for v in row {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    let path = out.join("features.csv");
    fs::write(&path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    let pca = write_pca_report(&out, &ev.features, &ev.labels, &class_names)?;
    println!(
        "{} feature vectors of dimension {dim}; PC1 {:.1}% / PC2 {:.1}% of variance",
        samples.len(),
        100.0 * pca.explained_ratio[0],
        100.0 * pca.explained_ratio[1]
    );
    mark_completed(&out, record)?;
    Ok(0)
}

pub fn gradcheck(common: &Common, args: &GradcheckArgs) -> Result<i32> {
    let names: Vec<&str> = if args.only.is_empty() {
        GRADIENT_CASES.to_vec()
    } else {
        args.only.iter().map(String::as_str).collect()
    };
    let out = out_dir(common, None, "gradcheck");
    prepare_out(&out, common.force)?;
    let config = serde_json::json!({ "cases": names, "inject_fault": args.inject_fault });
    let record = RunRecord::new("gradcheck", 7, config);
    record.write(&out)?;

    let scale = if args.inject_fault { 0.5 } else { 1.0 };
    let mut csv = String::from("case,max_rel_error,tolerance,coords,worst_param,passed\n");
    let mut failed = Vec::new();
    for name in names {
        let r = run_case(name, scale)?;
        let ok = r.passed();
        println!(
            "{:<16} max rel err {:.3e}  (tol {:.0e}, {} coords, worst {})  {}",
            r.name,
            r.report.max_rel_error,
            r.tolerance,
            r.report.coords_checked,
            r.report.worst_param,
            if ok { "ok" } else { "FAIL" }
        );
        csv.push_str(&format!(
            "{},{:e},{:e},{},{},{}\n",
            r.name, r.report.max_rel_error, r.tolerance, r.report.coords_checked, r.report.worst_param, ok
        ));
        if !ok {
            failed.push(r.name);
        }
    }
    let path = out.join("gradcheck.csv");
    fs::write(&path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    mark_completed(&out, record)?;
    if failed.is_empty() {
        println!("all gradient checks passed");
        Ok(0)
    } else {
        println!("failed: {}", failed.join(", "));
        Ok(1)
    }
}

pub fn synth(common: &Common, args: &SynthArgs) -> Result<i32> {
    let seed = common.seed.unwrap_or(0);
    let out = out_dir(common, None, "synth");
    prepare_out(&out, common.force)?;
    let record = RunRecord::new("synth", seed, serde_json::json!({ "n": args.n, "size": args.size }));
    record.write(&out)?;
    let samples = synth_generate(args.n, args.size, seed)?;
    let files = synth_export(&samples, &SYNTH_CLASSES, &out)?;
    println!("wrote {} images to {}", files.len(), out.display());
    mark_completed(&out, record)?;
    Ok(0)
}
