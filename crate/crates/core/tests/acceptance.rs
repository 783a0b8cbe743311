//! Acceptance suite: one PASS/FAIL line per criterion, each at its stated
//! tolerance and runtime budget. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 3 7`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use reln::audit::{dot_product_recovery, lorentz_checks, run_audit, skew_checks, spd_checks, AuditConfig};
use reln::forms::{check_ad_invariance, killing_oracle, nondegeneracy_rank, BilinearForm, FormKind};
use reln::layers::{deserialize_model, init_params, serialize_model, LayerSpec, ModelSpec};
use reln::liealg::{AlgebraKind, LieAlgebraBasis};
use reln::rng::{self, Stream};
use reln::tasks::{decode_dataset, encode_dataset, gen_sp4_dataset};
use reln::train::{evaluate, grad_check, invariance_error, smooth_sample, train, TrainConfig, DEFAULT_STEP};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1() -> Outcome {
    let mut r = rng::stream(1, Stream::Test);
    let mut worst_inv = 0.0f64;
    let mut details = vec![];
    let mut ok = true;
    for n in 2..=5 {
        let basis = LieAlgebraBasis::new(AlgebraKind::Gl(n)).map_err(|e| e.to_string())?;
        let form = BilinearForm::of_kind(FormKind::ModifiedGl, &basis).map_err(|e| e.to_string())?;
        let inv = check_ad_invariance(&form, &basis, 1000, 0.5, &mut r).map_err(|e| e.to_string())?;
        worst_inv = worst_inv.max(inv);
        let rank = nondegeneracy_rank(&form).map_err(|e| e.to_string())?;
        let killing = nondegeneracy_rank(&killing_oracle(&basis)).map_err(|e| e.to_string())?;
        ok &= inv <= 1e-8 && rank == n * n && killing == n * n - 1;
        details.push(format!("gl{n}: rank {rank}, killing {killing}"));
    }
    for kind in [AlgebraKind::Sl(2), AlgebraKind::Sl(3), AlgebraKind::So3, AlgebraKind::Sp4, AlgebraKind::So13] {
        let basis = LieAlgebraBasis::new(kind).map_err(|e| e.to_string())?;
        let rank = nondegeneracy_rank(&killing_oracle(&basis)).map_err(|e| e.to_string())?;
        ok &= rank == basis.dim();
        details.push(format!("{kind} killing {rank}/{}", basis.dim()));
    }
    check(ok, format!("max Ad deviation {worst_inv:.2e}; {}", details.join(", ")))
}

fn c2() -> Outcome {
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let basis = LieAlgebraBasis::new(AlgebraKind::Sl(n)).map_err(|e| e.to_string())?;
        let trace = BilinearForm::of_kind(FormKind::Trace, &basis).map_err(|e| e.to_string())?;
        let killing = killing_oracle(&basis);
        let scaled = trace.gram() * (2.0 * n as f64);
        worst = worst.max((&scaled - killing.gram()).iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    check(worst <= 1e-9, format!("max entry difference {worst:.2e}"))
}

fn c3() -> Outcome {
    let basis = LieAlgebraBasis::new(AlgebraKind::So3).map_err(|e| e.to_string())?;
    let dev = dot_product_recovery(&basis, 1000, &mut rng::stream(3, Stream::Test)).map_err(|e| e.to_string())?;
    check(dev <= 1e-10, format!("max relative deviation {dev:.2e}"))
}

fn c4() -> Outcome {
    let names = [
        "linear_equivariance",
        "relu_equivariance",
        "leaky_relu_equivariance",
        "bracket_equivariance",
        "relu_gate_invariance",
        "invariant_layer_invariance",
        "pool_argmax_mismatches",
    ];
    let mut worst = 0.0f64;
    let mut mismatches = 0.0;
    let mut ok = true;
    for kind in [AlgebraKind::So3, AlgebraKind::Sl(3), AlgebraKind::Sp4, AlgebraKind::Gl(3)] {
        let report = run_audit(&AuditConfig::new(kind, 100, 4)).map_err(|e| e.to_string())?;
        for name in names {
            let c = report.check(name).ok_or(format!("missing check {name}"))?;
            ok &= c.passed;
            if name == "pool_argmax_mismatches" {
                mismatches += c.deviation;
            } else {
                worst = worst.max(c.deviation);
            }
        }
    }
    check(ok, format!("max layer deviation {worst:.2e}, pooling mismatches {mismatches}"))
}

fn four_layer_reln(c: usize) -> ModelSpec {
    ModelSpec::new(
        AlgebraKind::Sp4,
        2,
        vec![LayerSpec::linear(2, c), LayerSpec::relu(c), LayerSpec::bracket(c), LayerSpec::invariant(c)],
    )
    .with_head(vec![16, 16], 1)
}

fn c5() -> Outcome {
    let ds = gen_sp4_dataset(200, 0.4, 5).map_err(|e| e.to_string())?;
    let model = init_params(&four_layer_reln(8), 5).map_err(|e| e.to_string())?;
    let rep = evaluate(&model, &ds, 100, 0.5, &mut rng::stream(5, Stream::Eval)).map_err(|e| e.to_string())?;
    let rel = (rep.mse_conjugated - rep.mse_id).abs() / rep.mse_id;
    check(
        rep.invariance_error <= 1e-10 && rel <= 1e-9,
        format!("invariance error {:.2e}, |conj - id| / id {rel:.2e}", rep.invariance_error),
    )
}

fn c6() -> Outcome {
    let mut worst = 0.0f64;
    let mut pooled = ModelSpec::new(
        AlgebraKind::Sl(3),
        2,
        vec![
            LayerSpec::linear(2, 3),
            LayerSpec::leaky_relu(3, 0.2),
            LayerSpec::pool(3),
            LayerSpec::bracket(3),
            LayerSpec::invariant(3),
        ],
    )
    .with_head(vec![5], 1);
    pooled.set_size = 3;
    for (i, spec) in [four_layer_reln(4), pooled].iter().enumerate() {
        let model = init_params(spec, 6 + i as u64).map_err(|e| e.to_string())?;
        let mut r = rng::stream(6 + i as u64, Stream::Test);
        let (x, y) = smooth_sample(&model, 4, 0.5, &mut r).map_err(|e| e.to_string())?;
        worst = worst.max(grad_check(&model, &x, &y, DEFAULT_STEP).map_err(|e| e.to_string())?.max_rel_err);
    }
    let linear = ModelSpec::new(AlgebraKind::Gl(3), 2, vec![LayerSpec::linear(2, 3), LayerSpec::invariant(3)]);
    let model = init_params(&linear, 6).map_err(|e| e.to_string())?;
    let (x, y) = smooth_sample(&model, 4, 0.5, &mut rng::stream(7, Stream::Test)).map_err(|e| e.to_string())?;
    let lin = grad_check(&model, &x, &y, DEFAULT_STEP).map_err(|e| e.to_string())?.max_rel_err;
    check(worst <= 1e-4 && lin <= 1e-9, format!("all layer types {worst:.2e}, linear-only {lin:.2e}"))
}

/// Hidden width of a two-layer tanh network on `inputs` features whose
/// parameter count is closest to `target`.
fn matched_width(inputs: usize, target: usize) -> usize {
    let count = |h: usize| inputs * h + h + h * h + h + h + 1;
    (1..1000).min_by_key(|&h| count(h).abs_diff(target)).unwrap()
}

fn c7() -> Outcome {
    let train_ds = gen_sp4_dataset(2000, 0.4, 1).map_err(|e| e.to_string())?;
    let test_ds = gen_sp4_dataset(2000, 0.4, 2).map_err(|e| e.to_string())?;
    let mut reln_spec = ModelSpec::new(
        AlgebraKind::Sp4,
        2,
        vec![LayerSpec::linear(2, 32), LayerSpec::relu(32), LayerSpec::invariant(32)],
    )
    .with_head(vec![200, 200], 1);
    reln_spec.form = FormKind::Trace;
    let reln_params = init_params(&reln_spec, 3).map_err(|e| e.to_string())?.num_params();
    let h = matched_width(20, reln_params);
    let mlp_spec = ModelSpec::flat_baseline(AlgebraKind::Sp4, 2, vec![h, h]);
    let mlp_params = init_params(&mlp_spec, 3).map_err(|e| e.to_string())?.num_params();
    let run = |spec: ModelSpec| {
        let cfg = TrainConfig { epochs: 300, batch_size: 100, seed: 3, ..TrainConfig::new("sp4-train".into(), spec) };
        train(&cfg, &train_ds, Some(&test_ds), None, |_| {}).map_err(|e| e.to_string())
    };
    let reln = run(reln_spec)?.report;
    let mlp = run(mlp_spec)?.report;
    let ratio = reln.mse_conjugated / mlp.mse_conjugated;
    let rel = (reln.mse_conjugated - reln.mse_id).abs() / reln.mse_id;
    check(
        reln.invariance_error <= 1e-10 && mlp.invariance_error >= 1e-3 && ratio <= 0.2 && rel <= 1e-9,
        format!(
            "ReLN ({reln_params} params) id {:.3e} conj {:.3e} inv {:.1e} | MLP {h}x{h} ({mlp_params} params) id {:.3e} conj {:.3e} inv {:.1e} | ratio {ratio:.3}",
            reln.mse_id, reln.mse_conjugated, reln.invariance_error, mlp.mse_id, mlp.mse_conjugated, mlp.invariance_error
        ),
    )
}

fn c8() -> Outcome {
    let so13 = LieAlgebraBasis::new(AlgebraKind::So13).map_err(|e| e.to_string())?;
    let (lift, metric) = lorentz_checks(&so13, 1000, &mut rng::stream(8, Stream::Test)).map_err(|e| e.to_string())?;
    check(lift <= 1e-8 && metric <= 1e-9, format!("lift residual {lift:.2e}, metric residual {metric:.2e}"))
}

fn c9() -> Outcome {
    let (eq, rt) = spd_checks(1000, &mut rng::stream(9, Stream::Test)).map_err(|e| e.to_string())?;
    check(eq <= 1e-8 && rt <= 1e-9, format!("log equivariance {eq:.2e}, round trip {rt:.2e}"))
}

fn c10() -> Outcome {
    let so3 = LieAlgebraBasis::new(AlgebraKind::So3).map_err(|e| e.to_string())?;
    let dev = skew_checks(&so3, 1000, &mut rng::stream(10, Stream::Test)).map_err(|e| e.to_string())?;
    check(dev <= 1e-10, format!("max deviation {dev:.2e}"))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reln"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("reln {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn c11() -> Outcome {
    let ds = gen_sp4_dataset(300, 0.4, 11).map_err(|e| e.to_string())?;
    let bytes = encode_dataset(&ds).map_err(|e| e.to_string())?;
    let back = decode_dataset(&bytes).map_err(|e| e.to_string())?;
    let data_ok = back == ds && encode_dataset(&back).map_err(|e| e.to_string())? == bytes;
    let again = encode_dataset(&gen_sp4_dataset(300, 0.4, 11).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let regen_ok = again == bytes;
    let model = init_params(&four_layer_reln(6), 11).map_err(|e| e.to_string())?;
    let mbytes = serialize_model(&model).map_err(|e| e.to_string())?;
    let mback = deserialize_model(&mbytes).map_err(|e| e.to_string())?;
    let model_ok = mback.params == model.params && serialize_model(&mback).map_err(|e| e.to_string())? == mbytes;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    for name in ["a.rlnd", "b.rlnd"] {
        run_cli(&["gen-data", "--task", "sp4", "--n", "200", "--seed", "4", "--out", name], d)?;
    }
    let cli_regen_ok = std::fs::read(d.join("a.rlnd")).ok() == std::fs::read(d.join("b.rlnd")).ok();
    for (threads, out) in [("1", "t1.rlnm"), ("4", "t4.rlnm")] {
        run_cli(
            &[
                "--threads", threads, "train", "--data", "a.rlnd", "--out", out, "--epochs", "3", "--channels", "6",
                "--head", "8", "--batch", "50", "--augment", "2", "--conj", "10",
            ],
            d,
        )?;
    }
    let strip_seconds = |p: &str| -> Vec<String> {
        std::fs::read_to_string(d.join(p))
            .unwrap_or_default()
            .lines()
            .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head).to_string())
            .collect()
    };
    let threads_ok = std::fs::read(d.join("t1.rlnm")).ok() == std::fs::read(d.join("t4.rlnm")).ok()
        && strip_seconds("t1.tsv") == strip_seconds("t4.tsv");
    check(
        data_ok && regen_ok && model_ok && cli_regen_ok && threads_ok,
        format!(
            "dataset round trip {data_ok}, regeneration {regen_ok}/{cli_regen_ok}, model round trip {model_ok}, threads 1 vs 4 {threads_ok}"
        ),
    )
}

fn c12() -> Outcome {
    let broken = run_audit(&AuditConfig { broken_form: true, ..AuditConfig::new(AlgebraKind::Gl(3), 100, 12) })
        .map_err(|e| e.to_string())?;
    let ds = gen_sp4_dataset(200, 0.4, 12).map_err(|e| e.to_string())?;
    let reln = init_params(&four_layer_reln(8), 12).map_err(|e| e.to_string())?;
    let flat = init_params(&ModelSpec::flat_baseline(AlgebraKind::Sp4, 2, vec![32, 32]), 12).map_err(|e| e.to_string())?;
    let e_reln = invariance_error(&reln, &ds, 20, 0.5, 12).map_err(|e| e.to_string())?;
    let e_flat = invariance_error(&flat, &ds, 20, 0.5, 12).map_err(|e| e.to_string())?;
    let failed: Vec<&str> = broken.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    check(
        !broken.passed() && e_flat >= 1e-3 && e_flat >= 1e6 * e_reln,
        format!("broken form fails {} checks; invariance error flat {e_flat:.2e} vs ReLN {e_reln:.2e}", failed.len()),
    )
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Outcome); 12] = [
        (1, "bilinear form correctness", 5.0, c1),
        (2, "killing oracle equivalence", 1.0, c2),
        (3, "dot-product recovery", 1.0, c3),
        (4, "layer equivariance", 30.0, c4),
        (5, "structural model invariance", 10.0, c5),
        (6, "gradient correctness", 30.0, c6),
        (7, "sp4 regression vs baseline", 1200.0, c7),
        (8, "lorentz lift", 5.0, c8),
        (9, "spd log equivariance", 5.0, c9),
        (10, "skew extraction", 1.0, c10),
        (11, "serialization and determinism", 10.0, c11),
        (12, "negative controls", 10.0, c12),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, budget, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(d) => (secs <= budget, d),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {detail} [{secs:.1}s of {budget:.0}s]",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
