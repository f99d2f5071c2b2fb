//! Acceptance suite. Every criterion writes one `PASS`/`FAIL` line to the
//! process stderr (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use berwald_core::averaging::{averaged_metric, AveragedMetricData, AveragingConfig};
use berwald_core::berwald::{decide, ClassificationReport, DecideConfig, GlobalVerdict, GridSpec};
use berwald_core::metric::{frame_ground_truth_torsion, ChartPoint, MatrixField, MetricFamily};
use berwald_core::quadrature::SphereQuadrature;
use berwald_core::spec_file::parse_metric_spec;
use berwald_core::torsion::extremal::{block_for, lattice};
use berwald_core::torsion::{
    extremal_from_blocks, extremal_torsion, oracle_min_norm, symmetry_invariance_check, ConstraintBlock, DirectionPools,
    PointBlocks, Route, Termination, Tolerances,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [&str; 5] = ["euclidean", "conformal", "minkowski_randers", "frame_randers", "nongb_randers"];

fn metric_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../metrics").join(format!("{name}.metric"))
}

fn load(name: &str) -> MetricFamily {
    parse_metric_spec(&std::fs::read_to_string(metric_path(name)).unwrap()).unwrap()
}

/// Collects the checks of one criterion and reports them on a single line.
struct Criterion {
    id: u32,
    title: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn finish(self) {
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        let detail = if self.failures.is_empty() {
            self.notes.join("; ")
        } else {
            self.failures.join("; ")
        };
        let line = format!("acceptance criterion {:>2} {status}: {} ({detail})\n", self.id, self.title);
        let _ = std::io::stderr().write_all(line.as_bytes());
        assert!(self.failures.is_empty(), "{line}");
    }
}

fn decide_with(fam: &MetricFamily, gamma_scale: f64, seed: u64, transport: bool) -> ClassificationReport {
    let dim = fam.dim();
    let mut cfg = DecideConfig::for_dim(dim).unwrap();
    cfg.averaging.gamma_scale = gamma_scale;
    cfg.pools.seed = seed;
    if !transport {
        cfg.transport = None;
    }
    decide(fam, &GridSpec::unit_box(dim, 5).unwrap(), &cfg).unwrap()
}

/// Reports of the five families on the 5×5 unit grid with default settings.
fn reports() -> &'static Vec<(&'static str, MetricFamily, ClassificationReport)> {
    static CELL: OnceLock<Vec<(&'static str, MetricFamily, ClassificationReport)>> = OnceLock::new();
    CELL.get_or_init(|| {
        FAMILIES
            .iter()
            .map(|&name| {
                let fam = load(name);
                let report = decide_with(&fam, 1.0, 0, true);
                (name, fam, report)
            })
            .collect()
    })
}

fn report_of(name: &str) -> &'static ClassificationReport {
    &reports().iter().find(|(n, _, _)| *n == name).unwrap().2
}

fn total_directions(report: &ClassificationReport) -> usize {
    report.pools.selection + report.pools.random + report.pools.validation
}

#[test]
fn criterion_01_averaged_metric_exactness() {
    let mut c = Criterion::new(1, "averaged metric exactness");
    let quad = SphereQuadrature::circle(256);
    let p = ChartPoint::new(vec![0.0, 0.0]);
    let two_pi = 2.0 * std::f64::consts::PI;

    let euclid = load("euclidean");
    let gamma = averaged_metric(&euclid.at(&p).unwrap(), &quad).unwrap();
    let err = (&gamma - DMatrix::identity(2, 2) * two_pi).amax();
    c.check(err <= 1e-10, format!("euclidean error {err:e}"));
    c.note(format!("euclidean |γ − 2πI| = {err:.3e}"));

    let g = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
    let diag = MetricFamily::riemannian(MatrixField::constant(&g)).unwrap();
    let gamma = averaged_metric(&diag.at(&p).unwrap(), &quad).unwrap();
    let err = (&gamma - &g * two_pi).amax();
    c.check(err <= 1e-8, format!("diag(4,1) error {err:e}"));
    c.note(format!("diag(4,1) |γ − 2πg| = {err:.3e}"));
    c.finish();
}

#[test]
fn criterion_02_riemannian_detection() {
    let mut c = Criterion::new(2, "riemannian detection");
    for name in ["euclidean", "conformal"] {
        let r = report_of(name);
        c.check(r.global == GlobalVerdict::Riemannian, format!("{name}: verdict {}", r.global.as_str()));
        let total = total_directions(r);
        for v in &r.verdicts {
            for d in [&v.chain_diag, &v.alternate_diag] {
                c.check(
                    d.vertical_contacts == total,
                    format!("{name} at {:?}: {} of {total} vertical", v.p, d.vertical_contacts),
                );
            }
            let spread = v.norm_ratio_spread.unwrap_or(f64::INFINITY);
            c.check(spread <= 1e-9, format!("{name} at {:?}: F/F* spread {spread:e}", v.p));
        }
        let worst = r.verdicts.iter().filter_map(|v| v.norm_ratio_spread).fold(0.0, f64::max);
        c.note(format!("{name}: {}, max F/F* spread {worst:.2e}", r.global.as_str()));
    }
    c.finish();
}

#[test]
fn criterion_03_classical_berwald_detection() {
    let mut c = Criterion::new(3, "classical Berwald detection");
    let r = report_of("minkowski_randers");
    c.check(r.global == GlobalVerdict::ClassicalBerwald, format!("verdict {}", r.global.as_str()));
    let total = total_directions(r);
    for v in &r.verdicts {
        c.check(v.torsion_norm < 1e-9, format!("|T0| = {:e} at {:?}", v.torsion_norm, v.p));
        c.check(
            v.chain_diag.horizontal_contacts == total,
            format!("{} of {total} horizontal at {:?}", v.chain_diag.horizontal_contacts, v.p),
        );
    }
    c.note(format!("{}, max |T0| {:.2e}", r.global.as_str(), r.torsion_max));
    c.finish();
}

#[test]
fn criterion_04_generalized_berwald_recovery() {
    let mut c = Criterion::new(4, "generalized Berwald recovery");
    let fam = load("frame_randers");
    let r = report_of("frame_randers");
    c.check(r.global == GlobalVerdict::GeneralizedBerwald, format!("verdict {}", r.global.as_str()));
    c.check(r.pools.validation == 64, format!("{} validation directions", r.pools.validation));
    let mut worst_truth: f64 = 0.0;
    let mut worst_val: f64 = 0.0;
    for v in &r.verdicts {
        let truth = frame_ground_truth_torsion(&fam, &ChartPoint::new(v.p.clone())).unwrap();
        let err = v.torsion_chart_tensor().sub(&truth).max_abs();
        worst_truth = worst_truth.max(err);
        worst_val = worst_val.max(v.chain_diag.validation_residual);
    }
    c.check(worst_truth <= 1e-6, format!("ground truth error {worst_truth:e}"));
    c.check(worst_val < 1e-7, format!("validation residual {worst_val:e}"));
    let drift = r.transport_drift.unwrap_or(f64::INFINITY);
    c.check(drift < 1e-6, format!("transport drift {drift:e}"));
    c.note(format!(
        "{}, torsion error {worst_truth:.2e}, validation residual {worst_val:.2e}, transport drift {drift:.2e}",
        r.global.as_str()
    ));
    c.finish();
}

#[test]
fn criterion_05_negative_control() {
    let mut c = Criterion::new(5, "negative control");
    let r = report_of("nongb_randers");
    c.check(r.global == GlobalVerdict::NotGeneralizedBerwald, format!("verdict {}", r.global.as_str()));
    let witnesses: Vec<_> = r
        .verdicts
        .iter()
        .filter(|v| v.ls_residual > 1e-3 && v.ls_residual_refined.is_some_and(|f| f >= v.ls_residual && f > 1e-3))
        .collect();
    c.check(!witnesses.is_empty(), "no point with a persistent least-squares residual");
    let worst_drop = r
        .verdicts
        .iter()
        .filter_map(|v| v.ls_residual_refined.map(|f| v.ls_residual - f))
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(w) = witnesses.first() {
        c.note(format!(
            "{}, {} of {} points witness; e.g. {:.4e} -> {:.4e}; largest decrease under refinement {worst_drop:.2e}",
            r.global.as_str(),
            witnesses.len(),
            r.verdicts.len(),
            w.ls_residual,
            w.ls_residual_refined.unwrap()
        ));
    }
    c.finish();
}

/// A consistent system of `count` random full-rank blocks.
fn synthetic_blocks(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<ConstraintBlock> {
    let big_n = n * n * (n - 1) / 2;
    let hidden = DVector::from_fn(big_n, |_, _| rng.random_range(-1.0..1.0));
    (0..count)
        .map(|_| loop {
            let s = DMatrix::from_fn(n, big_n, |_, _| rng.random_range(-1.0..1.0));
            if s.clone().svd(false, false).singular_values.min() > 1e-2 {
                let rhs = -(&s * &hidden);
                break ConstraintBlock::synthetic(s, rhs);
            }
        })
        .collect()
}

#[test]
fn criterion_06_oracle_equivalence() {
    let mut c = Criterion::new(6, "oracle equivalence");
    let tols = Tolerances::default();
    let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm() / b.norm().max(1e-300).max(a.norm()).max(1e-12);

    let fam = load("frame_randers");
    let cfg = DecideConfig::for_dim(2).unwrap();
    let pools = DirectionPools::generate(2, &cfg.pools, 0.0).unwrap();
    let mut worst_family: f64 = 0.0;
    for p in GridSpec::unit_box(2, 5).unwrap().points() {
        let local = fam.at(&p).unwrap();
        let avg = AveragedMetricData::compute(&fam, &p, &cfg.averaging).unwrap();
        let blocks = PointBlocks::assemble(&local, &avg, &pools).unwrap();
        let ext = extremal_from_blocks(&blocks, &tols).torsion.to_vector();
        let ora = oracle_min_norm(blocks.all()).unwrap().torsion.to_vector();
        worst_family = worst_family.max(rel(&ext, &ora));
    }
    c.check(worst_family <= 1e-8, format!("frame family relative gap {worst_family:e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst_synthetic: f64 = 0.0;
    let mut failures = 0;
    for case in 0..100 {
        let n = if case % 2 == 0 { 2 } else { 3 };
        let count = rng.random_range(1..=6);
        let selection = synthetic_blocks(&mut rng, n, count);
        let blocks = PointBlocks {
            validation: selection.clone(),
            selection,
        };
        let out = extremal_from_blocks(&blocks, &tols);
        let ora = oracle_min_norm(blocks.selection.iter()).unwrap().torsion.to_vector();
        let gap = rel(&out.torsion.to_vector(), &ora);
        if gap > 1e-8 {
            failures += 1;
            if failures <= 3 {
                c.check(
                    false,
                    format!(
                        "case {case} (n={n}, {count} blocks): gap {gap:e}, {:?} after {}",
                        out.diagnostics.termination, out.diagnostics.chain_length
                    ),
                );
            }
        }
        worst_synthetic = worst_synthetic.max(gap);
    }
    c.check(failures == 0, format!("{failures} of 100 synthetic systems disagree"));
    c.note(format!(
        "frame family gap {worst_family:.2e}, synthetic gap {worst_synthetic:.2e} over 100 systems"
    ));
    c.finish();
}

#[test]
fn criterion_07_chain_properties() {
    let mut c = Criterion::new(7, "chain properties");
    let mut chains = 0;
    let mut worst_orth: f64 = 0.0;
    let mut check_diag = |c: &mut Criterion, name: &str, n: usize, d: &berwald_core::torsion::ChainDiagnostics| {
        if d.route != Route::Chain {
            return;
        }
        chains += 1;
        worst_orth = worst_orth.max(d.orthogonality_defect);
        c.check(d.orthogonality_defect <= 1e-8, format!("{name}: defect {:e}", d.orthogonality_defect));
        c.check(d.chain_length <= n * n * (n - 1) / 2, format!("{name}: length {}", d.chain_length));
        let monotone = d.chain_norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
        c.check(monotone, format!("{name}: norms {:?}", d.chain_norms));
    };
    for (name, _, r) in reports() {
        for v in &r.verdicts {
            check_diag(&mut c, name, 2, &v.chain_diag);
            check_diag(&mut c, name, 2, &v.alternate_diag);
        }
    }
    let fam3 = parse_metric_spec(
        "family = frame_minkowski; dim = 3; frame = [[1, 0, 0], [0, exp(x1), 0], [0, 0, 1 + 0.5*x2]]; minkowski_b = [0.2, 0.1, 0];",
    )
    .unwrap();
    let mut cfg = DecideConfig::for_dim(3).unwrap();
    cfg.transport = None;
    let r3 = decide(&fam3, &GridSpec::unit_box(3, 3).unwrap(), &cfg).unwrap();
    for v in &r3.verdicts {
        check_diag(&mut c, "frame_randers_3d", 3, &v.chain_diag);
        check_diag(&mut c, "frame_randers_3d", 3, &v.alternate_diag);
    }
    let longest = r3.verdicts.iter().map(|v| v.chain_diag.chain_length).max().unwrap_or(0);
    c.note(format!(
        "{chains} chains, worst orthogonality defect {worst_orth:.2e}, longest 3d chain {longest} (bound 9)"
    ));
    c.finish();
}

#[test]
fn criterion_08_rank_lemma_dichotomy() {
    let mut c = Criterion::new(8, "rank lemma dichotomy");
    let tol = 1e-9;
    let mut fams: Vec<(String, MetricFamily)> = FAMILIES.iter().map(|n| (n.to_string(), load(n))).collect();
    fams.push(("randers3".into(), load("randers3")));
    let mut scanned = 0usize;
    let mut contacts = 0usize;
    let mut min_constant = f64::INFINITY;
    for (name, fam) in &fams {
        let dim = fam.dim();
        let dirs = lattice(dim, 720, 0.0);
        let cfg = AveragingConfig::for_dim(dim).unwrap();
        for p in GridSpec::unit_box(dim, 3).unwrap().points() {
            let local = fam.at(&p).unwrap();
            let avg = AveragedMetricData::compute(fam, &p, &cfg).unwrap();
            for u in &dirs {
                let b = block_for(&local, &avg, u).unwrap();
                scanned += 1;
                let degenerate = b.is_degenerate(tol);
                let contact = b.vertical_margin < tol;
                c.check(
                    degenerate == contact,
                    format!("{name} at {:?}: S≈0 {degenerate}, contact {contact}", p.coords),
                );
                if contact {
                    contacts += 1;
                } else {
                    let smin = SymmetricEigen::new(b.gram()).eigenvalues.min();
                    c.check(smin > 0.0, format!("{name}: singular Gramian off contact"));
                    min_constant = min_constant.min(smin / (b.f * b.vertical_margin).powi(2));
                }
            }
        }
    }
    c.note(format!(
        "{scanned} directions, {contacts} vertical contacts, min σ_min(G)/(F·margin)² = {min_constant:.3e}"
    ));
    c.finish();
}

#[test]
fn criterion_09_symmetry_invariance() {
    let mut c = Criterion::new(9, "holonomy and symmetry invariance");
    let fam = load("randers3");
    let cfg = AveragingConfig::for_dim(3).unwrap();
    let samples = lattice(3, 200, 0.0);
    for x in [[0.0, 0.0, 0.0], [0.5, 0.25, 1.0]] {
        let p = ChartPoint::new(x.to_vec());
        let local = fam.at(&p).unwrap();
        let avg = AveragedMetricData::compute(&fam, &p, &cfg).unwrap();
        for (label, d) in [("y2 -> -y2", [1.0, -1.0, 1.0]), ("y3 -> -y3", [1.0, 1.0, -1.0])] {
            let phi = DMatrix::from_diagonal(&DVector::from_row_slice(&d));
            match symmetry_invariance_check(&local, &avg, &phi, &samples) {
                Ok(rep) => {
                    c.check(rep.null_dim > 0, format!("{label}: empty residual-free set"));
                    c.check(
                        rep.invariance_residual <= 1e-8,
                        format!("{label}: invariance residual {:e}", rep.invariance_residual),
                    );
                    c.note(format!(
                        "{label} at {:?}: null dim {}, residual {:.2e}",
                        x, rep.null_dim, rep.invariance_residual
                    ));
                }
                Err(e) => c.check(false, format!("{label}: {e}")),
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_10_scale_invariance() {
    let mut c = Criterion::new(10, "scale invariance");
    let mut worst_res: f64 = 0.0;
    let mut worst_torsion: f64 = 0.0;
    for (name, fam, base) in reports() {
        let scaled = decide_with(fam, 1e3, 0, true);
        c.check(
            scaled.global == base.global,
            format!("{name}: {} vs {}", base.global.as_str(), scaled.global.as_str()),
        );
        for (a, b) in base.verdicts.iter().zip(&scaled.verdicts) {
            let pairs = [
                (a.residual_max, b.residual_max),
                (a.ls_residual, b.ls_residual),
                (a.chain_diag.validation_residual, b.chain_diag.validation_residual),
                (a.alternate_diag.selection_residual, b.alternate_diag.selection_residual),
            ];
            for (x, y) in pairs {
                // residuals are already relative to F(v)
                let d = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
                worst_res = worst_res.max(d);
                c.check(d <= 1e-9, format!("{name} at {:?}: residual {x:e} vs {y:e}", a.p));
            }
            c.check(a.status == b.status, format!("{name} at {:?}: status changed", a.p));
            let scale = a.torsion_chart_tensor().max_abs().max(1.0);
            let dt = a.torsion_chart_tensor().sub(&b.torsion_chart_tensor()).max_abs() / scale;
            worst_torsion = worst_torsion.max(dt);
        }
        if let (Some(x), Some(y)) = (base.transport_drift, scaled.transport_drift) {
            c.check((x - y).abs() <= 1e-9, format!("{name}: drift {x:e} vs {y:e}"));
        }
    }
    c.note(format!(
        "γ × 1e3: verdicts unchanged, worst residual change {worst_res:.2e}, worst chart torsion change {worst_torsion:.2e}"
    ));
    c.finish();
}

fn run_cli(name: &str, seed: u64, out: &std::path::Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_berwald"))
        .args(["decide", "--transport-steps", "0", "--seed", &seed.to_string(), "--metric"])
        .arg(metric_path(name))
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    status.code().unwrap()
}

fn verdict_of(bytes: &[u8]) -> String {
    let v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v["verdict"].as_str().unwrap().to_string()
}

#[test]
fn criterion_11_determinism() {
    let mut c = Criterion::new(11, "determinism");
    let dir = tempfile::tempdir().unwrap();
    let mut verdicts = Vec::new();
    for name in FAMILIES {
        let (a, b, s) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("s.json"));
        let codes = [run_cli(name, 7, &a), run_cli(name, 7, &b), run_cli(name, 123_456_789, &s)];
        let (ja, jb, js) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), std::fs::read(&s).unwrap());
        c.check(ja == jb, format!("{name}: reports differ for the same seed"));
        c.check(codes[0] == codes[1] && codes[1] == codes[2], format!("{name}: exit codes {codes:?}"));
        let (va, vs) = (verdict_of(&ja), verdict_of(&js));
        c.check(va == vs, format!("{name}: verdict {va} vs {vs} across seeds"));
        verdicts.push(format!("{name}={va}"));
    }
    c.note(format!("byte-identical reports, seed-stable verdicts: {}", verdicts.join(", ")));
    c.finish();
}

#[test]
fn chain_termination_is_reported_for_the_negative_control() {
    // the inconsistency surfaces as an infeasible step, not as a silent stall
    let fam = load("nongb_randers");
    let p = ChartPoint::new(vec![0.5, 0.5]);
    let cfg = DecideConfig::for_dim(2).unwrap();
    let avg = AveragedMetricData::compute(&fam, &p, &cfg.averaging).unwrap();
    let pools = DirectionPools::generate(2, &cfg.pools, 0.0).unwrap();
    let out = extremal_torsion(&fam.at(&p).unwrap(), &avg, &pools, &Tolerances::default()).unwrap();
    assert_eq!(out.diagnostics.termination, Termination::Infeasible);
    assert!(out.diagnostics.infeasible_residual.unwrap() > 1e-6);
}
