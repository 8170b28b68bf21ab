//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs library-level oracle checks in-process and drives the `hscmt`
//! binary for the training, persistence and end-to-end criteria. Exits
//! non-zero when any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hscmt::backbone::{residual_block_m, residual_block_n, ResidualM, ResidualN};
use hscmt::cmt::{irffn, lpu, IrffnParams};
use hscmt::data::{split, synth_generate};
use hscmt::eval::{confidence_interval, f1_score, roc_pr};
use hscmt::head::{pixel_attention, PixelAttentionParams};
use hscmt::ops::{relu, softmax};
use hscmt::param::Builder;
use hscmt::train::{fit, load_checkpoint, save_checkpoint, TrainConfig, Trainer, BLOB_FILE};
use hscmt::verify::oracles::{auc_suite, kernel_suite, metrics_suite};
use hscmt::{Mode, Model, ModelConfig, ParamStore64, Tape, Tensor32, Tensor64};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Runs the binary; returns (exit code, stdout + stderr).
fn hscmt(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hscmt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn hscmt");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap_or(-1), text)
}

fn hscmt_ok(args: &[&str]) -> Result<String, String> {
    let (code, text) = hscmt(args);
    ensure(code == 0, || format!("`hscmt {}` exited {code}: {}", args.join(" "), text.trim()))?;
    Ok(text)
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn kernel_oracles() -> Outcome {
    let t0 = Instant::now();
    let checks = ok(kernel_suite(60, 1))?;
    let elapsed = t0.elapsed();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    for c in &checks {
        ensure(c.max_rel_error <= 1e-6, || format!("{} rel err {:.3e}", c.kernel, c.max_rel_error))?;
    }
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("4 kernels x 60 shapes, max rel err {worst:.2e}, {:.2}s", elapsed.as_secs_f64()))
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let out = hscmt_ok(&["gradcheck", "--out", path(&tempfile::tempdir().map_err(|e| e.to_string())?.keep())])?;
    let elapsed = t0.elapsed();
    let cases = out.lines().filter(|l| l.contains("max rel err")).count();
    ensure(cases == hscmt::verify::GRADIENT_CASES.len(), || format!("{cases} case lines"))?;
    let fault_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (code, _) = hscmt(&["gradcheck", "--only", "lmhsa", "--inject-fault", "--out", path(fault_dir.path())]);
    ensure(code == 1, || format!("injected fault exited {code}, expected 1"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{cases} cases within tolerance in {:.1}s; injected fault exits 1", elapsed.as_secs_f64()))
}

fn shapes_of(config: ModelConfig) -> Result<Vec<Vec<usize>>, String> {
    let s = config.input_size;
    let model = ok(Model::<f32>::new(config, 1))?;
    let image = Tensor32::from_fn(&[1, s, s], |i| ((i * 7919) % 251) as f32 / 251.0);
    let mut tape = Tape::new();
    let f = ok(model.forward(&mut tape, &image, Mode::Eval, None))?;
    let mut v: Vec<Vec<usize>> = f.pyramid.stages.iter().map(|&n| tape.shape(n).to_vec()).collect();
    for n in [f.pyramid.residual, f.pyramid.fused, f.logits] {
        v.push(tape.shape(n).to_vec());
    }
    Ok(v)
}

fn shape_contract() -> Outcome {
    let paper = shapes_of(ModelConfig::paper())?;
    let want = vec![
        vec![1, 64, 56, 56],
        vec![1, 128, 28, 28],
        vec![1, 256, 14, 14],
        vec![1, 512, 7, 7],
        vec![1, 256, 7, 7],
        vec![1, 768, 7, 7],
        vec![1, 4],
    ];
    ensure(paper == want, || format!("paper shapes {paper:?}"))?;
    let desk = shapes_of(ModelConfig::desk())?;
    let want = vec![
        vec![1, 16, 16, 16],
        vec![1, 32, 8, 8],
        vec![1, 64, 4, 4],
        vec![1, 128, 2, 2],
        vec![1, 64, 2, 2],
        vec![1, 192, 2, 2],
        vec![1, 4],
    ];
    ensure(desk == want, || format!("desk shapes {desk:?}"))?;
    Ok("paper 64@56² 128@28² 256@14² 512@7², residual 256@7², fused 768@7², 4 logits; desk 16@16²…128@2²".into())
}

fn identities() -> Outcome {
    let mut store = ParamStore64::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut b = Builder::new(&mut store, &mut rng);
    let n = ok(ResidualN::build(&mut b, "n", 4))?;
    let m = ok(ResidualM::build(&mut b, "m", 4, 4, 1))?;
    let ffn = ok(IrffnParams::build(&mut b, "ffn", 4, 2))?;
    let pa = ok(PixelAttentionParams::build(&mut b, "pa", 4))?;
    *store.tensor_mut(n.conv2.weight) = Tensor64::zeros(&[4, 4, 3, 3]);
    *store.tensor_mut(m.conv.weight) = Tensor64::zeros(&[4, 4, 3, 3]);
    *store.tensor_mut(m.shortcut.weight) = Tensor64::from_fn(&[4, 4, 1, 1], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
    *store.tensor_mut(ffn.project_w) = Tensor64::zeros(store.tensor(ffn.project_w).shape());
    *store.tensor_mut(ffn.project_b) = Tensor64::zeros(store.tensor(ffn.project_b).shape());
    let x = Tensor64::from_fn(&[1, 4, 6, 6], |i| (i as f64 * 0.37).sin() * 2.0);
    let mut t = Tape::new();
    let xi = ok(t.input(x.clone()))?;
    let yn = ok(residual_block_n(&mut t, &store, xi, &n))?;
    let ym = ok(residual_block_m(&mut t, &store, xi, &m))?;
    ensure(t.value(yn) == &relu(&x), || "identity block with T=0 is not relu(x)".into())?;
    ensure(t.value(ym) == &relu(&x), || "projection block with T=0 is not relu(x)".into())?;
    let k0 = ok(t.input(Tensor64::zeros(&[4, 1, 3, 3])))?;
    let yl = ok(lpu(&mut t, xi, k0))?;
    ensure(t.value(yl) == &x, || "LPU with zero kernel is not the identity".into())?;
    let tokens = ok(t.input(Tensor64::from_fn(&[36, 4], |i| (i as f64 * 0.11).cos())))?;
    let yf = ok(irffn(&mut t, &store, tokens, (6, 6), &ffn))?;
    ensure(t.value(yf).max_abs() == 0.0, || "IRFFN with zero projection is not zero".into())?;

    let logits = Tensor64::from_fn(&[32, 5], |i| (i as f64 * 1.7).sin() * 10f64.powi((i % 4) as i32));
    let sm = ok(softmax(&logits, 1))?;
    let worst = sm.data().chunks(5).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("softmax row sum off by {worst:e}"))?;

    let (_, gate) = ok(pixel_attention(&mut t, &store, xi, &pa))?;
    ensure(t.value(gate).data().iter().all(|&g| g > 0.0 && g < 1.0), || "gate outside (0,1)".into())?;
    *store.tensor_mut(pa.f) = Tensor64::zeros(store.tensor(pa.f).shape());
    *store.tensor_mut(pa.b_f) = Tensor64::from_fn(&[1], |_| 40.0);
    let mut t = Tape::new();
    let xi = ok(t.input(x.clone()))?;
    let (out, _) = ok(pixel_attention(&mut t, &store, xi, &pa))?;
    let err = t.value(out).data().iter().zip(x.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err < 1e-6, || format!("saturated gate passthrough error {err:e}"))?;
    Ok(format!("residual N/M, LPU, IRFFN exact; softmax rows within {worst:.1e}; gate passthrough {err:.1e}"))
}

fn metrics_oracle() -> Outcome {
    ok(metrics_suite(100, 25))??;
    let f1a = f1_score(98.60, 98.50);
    let f1b = f1_score(94.81, 94.52);
    ensure((f1a - 98.55).abs() < 0.01 && (f1b - 94.67).abs() < 0.01, || format!("F1 spot checks {f1a} {f1b}"))?;
    for (e, n) in [(0.1, 1280usize), (0.5, 100), (0.0, 7), (0.0158, 1280)] {
        let direct = 1.96 * (e * (1.0 - e) / n as f64).sqrt();
        let ci = ok(confidence_interval(e, n))?;
        ensure((ci - direct).abs() < 1e-9, || format!("CI({e}, {n}) = {ci}, direct {direct}"))?;
    }
    Ok(format!(
        "100 random matrices match counting; F1 {f1a:.2}/{f1b:.2}; CI(0.1,1280) = {:.6}",
        ok(confidence_interval(0.1, 1280))?
    ))
}

fn auc_oracle() -> Outcome {
    let check = ok(auc_suite(20, 6))?;
    ensure(check.max_rank_error < 1e-9, || format!("{check:?}"))?;
    ensure(check.max_transform_error < 1e-12, || format!("{check:?}"))?;
    let probs = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7], vec![0.1, 0.9]];
    let perfect = ok(roc_pr(&probs, &[0, 0, 1, 1], 0))?.auc_roc;
    let anti = ok(roc_pr(&probs, &[1, 1, 0, 0], 0))?.auc_roc;
    ensure(perfect == 1.0 && anti == 0.0, || format!("perfect {perfect}, anti {anti}"))?;
    Ok(format!("20 sets, max |trapezoid − rank| {:.1e}; perfect 1.0, anti 0.0", check.max_rank_error))
}

struct Row {
    train_loss: f64,
    val_acc: f64,
}

fn read_history(p: &Path) -> Result<Vec<Row>, String> {
    let text = ok(fs::read_to_string(p))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
            Ok(Row { train_loss: f[2], val_acc: f[4] })
        })
        .collect()
}

fn desk_training() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<(Duration, std::path::PathBuf), String> {
        let out = root.path().join(name);
        let t0 = Instant::now();
        let args =
            ["train", "--preset", "desk", "--synthetic", "100", "--epochs", "20", "--seed", "7", "--threads", "1", "--out", path(&out)];
        hscmt_ok(&args)?;
        Ok((t0.elapsed(), out))
    };
    let (t_a, a) = run("a")?;
    let rows = read_history(&a.join("history.csv"))?;
    ensure(rows.len() == 20, || format!("{} history rows", rows.len()))?;
    let best = rows.iter().map(|r| r.val_acc).fold(0.0, f64::max);
    let first5: Vec<f64> = rows[..5].iter().map(|r| r.train_loss).collect();
    let decreasing = first5.windows(2).all(|w| w[1] < w[0]);
    let (t_b, b) = run("b")?;
    let same_history = ok(fs::read(a.join("history.csv")))? == ok(fs::read(b.join("history.csv")))?;
    let same_params = ok(fs::read(a.join("last").join(BLOB_FILE)))? == ok(fs::read(b.join("last").join(BLOB_FILE)))?;
    let summary = format!(
        "best val acc {:.3}, epochs 1-5 loss {:?}, {:.0}s / {:.0}s, identical history {same_history}",
        best,
        first5.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        t_a.as_secs_f64(),
        t_b.as_secs_f64()
    );
    let limit = Duration::from_secs(15 * 60);
    ensure(best >= 0.95, || format!("val accuracy below 0.95: {summary}"))?;
    ensure(decreasing, || format!("train loss not strictly decreasing: {summary}"))?;
    ensure(t_a < limit && t_b < limit, || format!("too slow: {summary}"))?;
    ensure(same_history && same_params, || format!("runs differ: {summary}"))?;
    Ok(summary)
}

fn persistence() -> Outcome {
    let data = ok(synth_generate(5, 32, 3))?;
    let s = ok(split(&data, (0.6, 0.2, 0.2), 3))?;
    let cfg = TrainConfig { epochs: 1, batch_size: 4, seed: 5, ..Default::default() };
    let mut t = ok(Trainer::new(ok(Model::new(ModelConfig::micro(), 9))?, cfg))?;
    ok(fit(&mut t, &s, None, &mut |_| {}))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    ok(save_checkpoint(dir.path(), &t.model, &t.state))?;
    let (model, state) = ok(load_checkpoint(dir.path()))?;
    ensure(state == t.state, || "optimiser state differs after reload".into())?;
    for smp in &s.test {
        ensure(ok(model.predict(&smp.image))? == ok(t.model.predict(&smp.image))?, || "forward output differs".into())?;
    }

    // Resume through the CLI: 2 epochs, then continue to 3, against 3 uninterrupted.
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (full, part) = (root.path().join("full"), root.path().join("part"));
    let base = ["train", "--preset", "micro", "--synthetic", "6", "--seed", "4"];
    hscmt_ok(&[&base[..], &["--epochs", "3", "--out", path(&full)]].concat())?;
    hscmt_ok(&[&base[..], &["--epochs", "2", "--out", path(&part)]].concat())?;
    hscmt_ok(&[&base[..], &["--epochs", "3", "--resume", "--out", path(&part)]].concat())?;
    let same = |f: &str| -> Result<bool, String> { Ok(ok(fs::read(full.join(f)))? == ok(fs::read(part.join(f)))?) };
    ensure(same("history.csv")?, || "resumed history differs".into())?;
    ensure(same("last/params.bin")?, || "resumed parameters differ".into())?;
    ensure(same("last/manifest.json")?, || "resumed manifest differs".into())?;
    Ok(format!("{} test outputs bit-identical after reload; resume 2→3 equals 3 uninterrupted", s.test.len()))
}

fn end_to_end() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = root.path().join("dataset");
    let run = root.path().join("run");
    hscmt_ok(&["synth", "--n", "12", "--size", "64", "--seed", "2", "--out", path(&data)])?;
    hscmt_ok(&["train", "--preset", "desk", "--data", path(&data), "--epochs", "2", "--seed", "2", "--out", path(&run)])?;
    let ckpt = run.join("best");
    let eval_dir = root.path().join("eval");
    let feat_dir = root.path().join("features");
    hscmt_ok(&["eval", "--checkpoint", path(&ckpt), "--data", path(&data), "--out", path(&eval_dir)])?;
    hscmt_ok(&["features", "--checkpoint", path(&ckpt), "--data", path(&data), "--split", "all", "--out", path(&feat_dir)])?;
    let mut expected = vec![eval_dir.join("confusion.csv"), eval_dir.join("metrics.json"), feat_dir.join("pca.csv")];
    for class in ["checker", "cross", "gradient", "ring"] {
        expected.push(eval_dir.join(format!("roc_{class}.csv")));
        expected.push(eval_dir.join(format!("pr_{class}.csv")));
    }
    let missing: Vec<_> = expected.iter().filter(|p| !p.exists()).collect();
    ensure(missing.is_empty(), || format!("missing outputs {missing:?}"))?;
    let rows = ok(fs::read_to_string(feat_dir.join("pca.csv")))?.lines().count() - 1;
    ensure(rows == 48, || format!("pca.csv has {rows} rows, expected 48"))?;
    let (code, _) = hscmt(&["train", "--preset", "desk", "--epochs", "1", "--out", path(&root.path().join("nodata"))]);
    ensure(code == 2, || format!("missing dataset exited {code}, expected 2"))?;
    Ok(format!("synth → train → eval → features produced {} artifacts; missing dataset exits 2", expected.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("kernel oracles", kernel_oracles),
        ("gradient suite", gradient_suite),
        ("shape contract", shape_contract),
        ("identity/degeneracy", identities),
        ("metrics oracle", metrics_oracle),
        ("AUC oracle", auc_oracle),
        ("desk training smoke", desk_training),
        ("persistence", persistence),
        ("end-to-end dry run", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
