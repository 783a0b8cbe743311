//! Randomized invariance, equivariance and non-degeneracy checks.
//!
//! Each check reports its worst observed deviation next to the tolerance it
//! must meet. The suite depends on the algebra: so(3) adds the dot-product
//! identity and skew extraction, gl(3) the SPD logarithm, so(1,3) the
//! Lorentz lift, and sl(n) the Killing-form equivalence.

use ndarray::{Array3, Array4, Axis};
use serde::Serialize;

use crate::error::{RelnError, Result};
use crate::forms::{
    check_ad_invariance, killing_oracle, modified_form_gl, nondegeneracy_rank, BilinearForm, FormKind,
};
use crate::geomaps::{block_with_one, lorentz_lift, skew_extract, spd_exp, spd_log, FourMomentum, SpdMatrix};
use crate::layers::ops::{act_on_features, pool_margin};
use crate::layers::{
    bracket_forward, init_params, invariant_forward, linear_forward, pool_forward, relu_forward, relu_gates,
    LayerSpec, ModelSpec,
};
use crate::liealg::{minkowski_mostly_plus, sample_algebra, sample_group, AlgebraKind, LieAlgebraBasis};
use crate::linalg::{frob, inverse, Matrix, Vector};
use crate::rng::{self, Rng, Stream};

/// Conjugation scale used throughout the suite.
pub const AUDIT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub algebra: String,
    pub trials: usize,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, deviation: f64, tolerance: f64) {
        self.checks.push(AuditCheck {
            name: name.to_string(),
            deviation,
            tolerance,
            // NaN deviations fail
            passed: deviation <= tolerance,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub algebra: AlgebraKind,
    pub trials: usize,
    pub seed: u64,
    /// Replace the model form by a random symmetric Gram matrix, which the
    /// invariance checks must catch.
    pub broken_form: bool,
}

impl AuditConfig {
    pub fn new(algebra: AlgebraKind, trials: usize, seed: u64) -> Self {
        AuditConfig { algebra, trials, seed, broken_form: false }
    }
}

/// Symmetric Gram with i.i.d. normal entries; almost surely not Ad-invariant.
pub fn random_symmetric_form(basis: &LieAlgebraBasis, r: &mut Rng) -> Result<BilinearForm> {
    let k = basis.dim();
    let a = Matrix::from_shape_simple_fn((k, k), || rng::normal(r));
    BilinearForm::from_gram((&a + &a.t()) / 2.0, basis)
}

fn rel_dev(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / (1.0 + scale)
}

fn scalar_dev(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / (1.0 + x.abs())))
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    if cfg.trials == 0 {
        return Err(RelnError::invalid("trials must be >= 1"));
    }
    let basis = LieAlgebraBasis::new(cfg.algebra)?;
    let k = basis.dim();
    let mut r = rng::stream(cfg.seed, Stream::Test);
    let form = if cfg.broken_form {
        random_symmetric_form(&basis, &mut r)?
    } else {
        BilinearForm::of_kind(FormKind::ModifiedGl, &basis)?
    };
    let mut report = AuditReport { algebra: cfg.algebra.to_string(), trials: cfg.trials, checks: vec![] };

    report.push("form_ad_invariance", check_ad_invariance(&form, &basis, cfg.trials, AUDIT_SIGMA, &mut r)?, 1e-8);
    report.push("form_rank_deficit", (k - nondegeneracy_rank(&form)?) as f64, 0.0);
    let killing = killing_oracle(&basis);
    let expected_deficit = if matches!(cfg.algebra, AlgebraKind::Gl(_)) { 1 } else { 0 };
    let deficit = k - nondegeneracy_rank(&killing)?;
    report.push("killing_rank_deficit_error", (deficit as f64 - expected_deficit as f64).abs(), 0.0);
    if let AlgebraKind::Sl(n) = cfg.algebra {
        let trace = BilinearForm::of_kind(FormKind::Trace, &basis)?;
        let scaled = trace.gram() * (2.0 * n as f64);
        let dev = (&scaled - killing.gram()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.push("killing_equals_2n_trace", dev, 1e-9);
    }

    layer_checks(&basis, &form, cfg.trials, &mut r, &mut report)?;
    model_check(cfg, &mut r, &mut report)?;

    match cfg.algebra {
        AlgebraKind::So3 => {
            report.push("dot_product_recovery", dot_product_recovery(&basis, cfg.trials, &mut r)?, 1e-10);
            report.push("skew_extraction_equivariance", skew_checks(&basis, cfg.trials, &mut r)?, 1e-10);
        }
        AlgebraKind::Gl(3) => {
            let (eq, rt) = spd_checks(cfg.trials, &mut r)?;
            report.push("spd_log_equivariance", eq, 1e-8);
            report.push("spd_round_trip", rt, 1e-9);
        }
        AlgebraKind::So13 => {
            let (lift, metric) = lorentz_checks(&basis, cfg.trials, &mut r)?;
            report.push("lorentz_lift_equivariance", lift, 1e-8);
            report.push("lorentz_metric_preserved", metric, 1e-9);
        }
        _ => {}
    }
    Ok(report)
}

fn layer_checks(
    basis: &LieAlgebraBasis,
    form: &BilinearForm,
    trials: usize,
    r: &mut Rng,
    report: &mut AuditReport,
) -> Result<()> {
    let (c, k) = (4, basis.dim());
    let mut worst = [0.0f64; 6];
    let mut pool_mismatch = 0usize;
    let randm = |r: &mut Rng| Matrix::from_shape_simple_fn((c, c), || rng::normal(r));
    for _ in 0..trials {
        let g = sample_group(basis, AUDIT_SIGMA, r)?;
        let x = Array3::from_shape_simple_fn((2, k, c), || rng::normal(r));
        let gx = act_on_features(&g.adj, x.view());
        let (w, w2) = (randm(r), randm(r));
        let layers: [&dyn Fn(&Array3<f64>) -> Result<Array3<f64>>; 4] = [
            &|x| linear_forward(x.view(), &w),
            &|x| Ok(relu_forward(x.view(), &w, form, 0.0)?.0),
            &|x| Ok(relu_forward(x.view(), &w, form, 0.2)?.0),
            &|x| Ok(bracket_forward(x.view(), &w, &w2, basis)?.0),
        ];
        for (slot, layer) in layers.iter().enumerate() {
            let expect = act_on_features(&g.adj, layer(&x)?.view());
            worst[slot] = worst[slot].max(rel_dev(&layer(&gx)?, &expect));
        }
        worst[4] = worst[4].max(scalar_dev(&relu_gates(x.view(), &w, form)?, &relu_gates(gx.view(), &w, form)?));
        worst[5] = worst[5].max(scalar_dev(&invariant_forward(x.view(), form)?, &invariant_forward(gx.view(), form)?));

        let set = Array4::from_shape_simple_fn((2, 3, k, c), || rng::normal(r));
        let mut moved = set.clone();
        for (mut m, s) in moved.outer_iter_mut().zip(set.outer_iter()) {
            m.assign(&act_on_features(&g.adj, s.view()));
        }
        let (p0, c0) = pool_forward(&set, &w, form)?;
        let (p1, c1) = pool_forward(&moved, &w, form)?;
        if pool_margin(&c0) > 1e-6
            && (c0.selected != c1.selected || rel_dev(&p1, &act_on_features(&g.adj, p0.view())) > 1e-9)
        {
            pool_mismatch += 1;
        }
    }
    let names = [
        "linear_equivariance",
        "relu_equivariance",
        "leaky_relu_equivariance",
        "bracket_equivariance",
        "relu_gate_invariance",
        "invariant_layer_invariance",
    ];
    for (name, dev) in names.iter().zip(worst) {
        report.push(name, dev, 1e-9);
    }
    report.push("pool_argmax_mismatches", pool_mismatch as f64, 0.0);
    Ok(())
}

fn model_check(cfg: &AuditConfig, r: &mut Rng, report: &mut AuditReport) -> Result<()> {
    let c = 4;
    let spec = ModelSpec::new(
        cfg.algebra,
        2,
        vec![
            LayerSpec::linear(2, c),
            LayerSpec::relu(c),
            LayerSpec::bracket(c),
            LayerSpec::invariant(c),
        ],
    )
    .with_head(vec![8], 1);
    let mut model = init_params(&spec, cfg.seed)?;
    if cfg.broken_form {
        let broken = random_symmetric_form(model.basis(), r)?;
        model = model.with_form(broken)?;
    }
    let k = cfg.algebra.dim();
    let x = Array4::from_shape_simple_fn((8, 1, k, 2), || 0.5 * rng::normal(r));
    let base = model.predict(&x)?;
    let mut worst = 0.0f64;
    for _ in 0..cfg.trials.min(100) {
        let g = sample_group(model.basis(), AUDIT_SIGMA, r)?;
        let mut moved = x.clone();
        for mut sample in moved.outer_iter_mut() {
            for mut el in sample.outer_iter_mut() {
                let acted = act_on_features(&g.adj, el.view().insert_axis(Axis(0)));
                el.assign(&acted.index_axis(Axis(0), 0));
            }
        }
        worst = worst.max(scalar_dev(&base, &model.predict(&moved)?));
    }
    report.push("model_invariance", worst, 1e-9);
    Ok(())
}

/// `|B(v̂, ŵ) + 12 v·w| / (1 + |v·w|)` for the modified form on so(3).
pub fn dot_product_recovery(basis: &LieAlgebraBasis, trials: usize, r: &mut Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = sample_algebra(basis, 1.0, r)?;
        let w = sample_algebra(basis, 1.0, r)?;
        let b = modified_form_gl(&basis.hat(v.as_slice().unwrap())?, &basis.hat(w.as_slice().unwrap())?)?;
        let dot = v.dot(&w);
        worst = worst.max((b + 12.0 * dot).abs() / (1.0 + dot.abs()));
    }
    Ok(worst)
}

/// Worst `|skew(RARᵀ) − R skew(A)|` and `|skew(hat v) − v|` entry.
pub fn skew_checks(so3: &LieAlgebraBasis, trials: usize, r: &mut Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a = Matrix::from_shape_simple_fn((3, 3), || rng::normal(r));
        let rot = sample_group(so3, 1.0, r)?.g;
        let lhs = skew_extract(&rot.dot(&a).dot(&rot.t()))?;
        let rhs = rot.dot(&Vector::from(skew_extract(&a)?.to_vec()));
        let v = sample_algebra(so3, 1.0, r)?;
        let back = skew_extract(&so3.hat(v.as_slice().unwrap())?)?;
        for i in 0..3 {
            worst = worst.max((lhs[i] - rhs[i]).abs()).max((back[i] - v[i]).abs());
        }
    }
    Ok(worst)
}

/// Worst `‖log(RCRᵀ) − R log(C) Rᵀ‖_F` and relative `exp∘log` round-trip error.
pub fn spd_checks(trials: usize, r: &mut Rng) -> Result<(f64, f64)> {
    let so3 = LieAlgebraBasis::new(AlgebraKind::So3)?;
    let (mut eq, mut rt) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let a = Matrix::from_shape_simple_fn((3, 3), || rng::normal(r));
        let c = a.dot(&a.t()) + Matrix::eye(3) * 0.1;
        let rot = sample_group(&so3, 1.0, r)?.g;
        let spd = SpdMatrix::new(c.clone())?;
        let rotated = rot.dot(&c).dot(&rot.t());
        let rotated = SpdMatrix::new((&rotated + &rotated.t()) / 2.0)?;
        let log_c = spd_log(&spd)?;
        eq = eq.max(frob(&(spd_log(&rotated)? - rot.dot(&log_c).dot(&rot.t()))));
        rt = rt.max(frob(&(spd_exp(&log_c)?.matrix() - &c)) / frob(&c));
    }
    Ok((eq, rt))
}

/// Worst relative residual of `G lift(p) G⁻¹ = lift(Λp)` with `G = diag(Λ, 1)`,
/// and worst `‖ΛᵀηΛ − η‖_F`.
pub fn lorentz_checks(so13: &LieAlgebraBasis, trials: usize, r: &mut Rng) -> Result<(f64, f64)> {
    let eta = minkowski_mostly_plus();
    let (mut lift, mut metric) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let lam = sample_group(so13, AUDIT_SIGMA, r)?.g;
        metric = metric.max(frob(&(lam.t().dot(&eta).dot(&lam) - &eta)));
        let p = FourMomentum::new([0, 1, 2, 3].map(|_| rng::normal(r)))?;
        let lp = lam.dot(&p.as_vector());
        let lp = FourMomentum::new([lp[0], lp[1], lp[2], lp[3]])?;
        let g = block_with_one(&lam);
        let g_inv = block_with_one(&inverse(&lam)?);
        let rhs = lorentz_lift(&lp);
        let lhs = g.dot(&lorentz_lift(&p)).dot(&g_inv);
        lift = lift.max(frob(&(&lhs - &rhs)) / (1.0 + frob(&rhs)));
    }
    Ok((lift, metric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_every_algebra() {
        for name in ["so3", "sl2", "sl3", "sp4", "gl3", "so13"] {
            let algebra = AlgebraKind::parse(name, None).unwrap();
            let report = run_audit(&AuditConfig::new(algebra, 30, 1)).unwrap();
            for c in &report.checks {
                assert!(c.passed, "{name}: {c:?}");
            }
        }
    }

    #[test]
    fn so3_includes_dot_product_identity() {
        let report = run_audit(&AuditConfig::new(AlgebraKind::So3, 10, 2)).unwrap();
        assert!(report.check("dot_product_recovery").is_some());
        assert!(report.check("killing_equals_2n_trace").is_none());
    }

    #[test]
    fn broken_form_fails() {
        let cfg = AuditConfig { broken_form: true, ..AuditConfig::new(AlgebraKind::Gl(3), 20, 3) };
        let report = run_audit(&cfg).unwrap();
        assert!(!report.passed());
        assert!(!report.check("form_ad_invariance").unwrap().passed);
        assert!(!report.check("model_invariance").unwrap().passed);
    }
}
