//! The acceptance suite: one check per criterion, each with its measured
//! quantities and a fingerprint of every number it produced, so runs at
//! different worker counts can be compared bit for bit.

use std::hash::{DefaultHasher, Hasher};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::counterexample::{continuity_demo, continuity_fields, geometric_perturbations, nonuniform_demo, PlateauBump};
use crate::fixtures::{generate_fixture, smooth_family, Fixture};
use crate::haar::{audit_far_pairs, audit_lp_contraction, audit_seminorm_bound, cube_pair_kernel_check, haar_project};
use crate::manifold::{compose_field, Abs, BallProjection, Clamp, ManifoldTarget, PointMap};
use crate::mollify::audit_lemma4_with;
use crate::parallel::with_workers;
use crate::pipeline::{approximate_high, approximate_low, audit_claim8, Extension, HighRegimeConfig};
use crate::seminorm::{lp_norm, Quadrature, Seminorm};
use crate::{DyadicCubication, Grid, GridField, Result, SobolevParams, WspError};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    pub detail: String,
    #[serde(serialize_with = "hex")]
    pub fingerprint: u64,
    pub seconds: f64,
}

fn hex<S: serde::Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:016x}"))
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Hash of the bit patterns of every value fed to it.
#[derive(Default)]
struct Fingerprint(DefaultHasher);

impl Fingerprint {
    fn f(&mut self, v: f64) {
        self.0.write_u64(v.to_bits());
    }

    fn field(&mut self, u: &GridField) {
        self.0.write_usize(u.values().len());
        u.values().iter().for_each(|&v| self.f(v));
    }

    fn finish(&self) -> u64 {
        self.0.finish()
    }
}

struct Outcome {
    passed: bool,
    measured: Vec<(String, f64)>,
    detail: String,
    fp: Fingerprint,
}

impl Outcome {
    fn new() -> Self {
        Self { passed: true, measured: Vec::new(), detail: String::new(), fp: Fingerprint::default() }
    }

    fn record(&mut self, key: impl Into<String>, v: f64) {
        self.fp.f(v);
        self.measured.push((key.into(), v));
    }

    fn require(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str("failed: ");
            self.detail.push_str(what.as_ref());
        }
    }

    fn note(&mut self, s: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(s.as_ref());
    }
}

pub const CRITERIA: [(u32, &str); 13] = [
    (1, "seminorm oracle"),
    (2, "discrete D^{s,p} identity"),
    (3, "composition contraction"),
    (4, "mollifier sweep"),
    (5, "Haar L^p contraction"),
    (6, "Haar seminorm uniformity"),
    (7, "cube-pair kernel"),
    (8, "high-regime pipeline"),
    (9, "shift-average audit"),
    (10, "low-regime pipeline"),
    (11, "composition counterexample"),
    (12, "regime gates"),
    (13, "worker determinism"),
];

fn random_field(grid: Grid, nu: usize, seed: u64) -> Result<GridField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridField::new(grid, nu, (0..grid.node_count() * nu).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn c1(o: &mut Outcome) -> Result<()> {
    let params = SobolevParams::new(0.5, 2.0, 1)?;
    let g = Grid::unit(1, 256)?;
    let u = generate_fixture(Fixture::Linear, g, 0)?;
    let start = Instant::now();
    let rep = Seminorm::new(g, params)?.gagliardo(&u, None)?;
    let secs = start.elapsed().as_secs_f64();
    let target = 8.0 / 3.0;
    let rel = (rep.seminorm_p - target).abs() / target;
    o.record("seminorm_sq", rep.seminorm_p);
    o.record("target", target);
    o.record("rel_err", rel);
    // exact value of the double integral of |x - y| over (-1,1)^2
    o.record("closed_form_4_rel_err", (rep.seminorm_p - 4.0).abs() / 4.0);
    o.measured.push(("seconds".into(), secs));
    o.note(format!("[u]^2 = {:.6}, target 8/3, rel err {:.4}", rep.seminorm_p, rel));
    o.require(rel <= 0.02, "[u]^2 within 2% of 8/3");
    o.require(secs < 1.0, "runtime < 1 s");
    Ok(())
}

fn c2(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 24)?;
    let mut mismatches = 0;
    for seed in 0..10u64 {
        let params = SobolevParams::new(0.3 + 0.05 * seed as f64, 1.0 + 0.25 * seed as f64, 2)?;
        let u = random_field(g, 2, seed)?;
        let ev = Seminorm::new(g, params)?;
        let a = ev.dsp_field(&u)?.integrate_p();
        let b = ev.gagliardo(&u, None)?.seminorm_p;
        o.record(format!("seminorm_p_{seed}"), b);
        if a.to_bits() != b.to_bits() {
            mismatches += 1;
        }
    }
    o.note(format!("{mismatches} of 10 fields differ"));
    o.require(mismatches == 0, "bit-exact identity");
    Ok(())
}

fn c3(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 24)?;
    let params = SobolevParams::new(0.5, 2.0, 2)?;
    let ev = Seminorm::new(g, params)?;
    let maps: [(&str, Box<dyn PointMap>); 3] = [
        ("abs", Box::new(Abs)),
        ("clamp", Box::new(Clamp { lo: -0.5, hi: 0.5 })),
        ("ball", Box::new(BallProjection { radius: 0.75 })),
    ];
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let u = random_field(g, 2, 100 + seed)?;
        let base = ev.gagliardo(&u, None)?.seminorm;
        for (name, k) in &maps {
            let l = k.lipschitz().expect("Lipschitz maps");
            let lhs = ev.gagliardo(&compose_field(&u, k.as_ref())?, None)?.seminorm;
            o.fp.f(lhs);
            let slack = lhs - l * base;
            worst = worst.max(slack);
            o.require(slack <= 1e-12, format!("{name} on field {seed}"));
        }
    }
    o.record("max_excess", worst);
    o.note(format!("max [k(u)] - L[u] = {worst:.3e}"));
    Ok(())
}

fn c4(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 128)?;
    let params = SobolevParams::new(0.5, 2.0, 2)?;
    let u = generate_fixture(Fixture::Bump, g, 0)?;
    let start = Instant::now();
    let dsp = Seminorm::new(g, params)?.dsp_field(&u)?;
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    for k in 2..=5 {
        let t = 0.5f64.powi(k);
        let rep = audit_lemma4_with(&u, &dsp, &params, t)?;
        o.record(format!("ratio_i_max_t{k}"), rep.ratio_i.max);
        o.record(format!("ratio_ii_max_t{k}"), rep.ratio_ii.max);
        o.record(format!("ratio_i_p99_t{k}"), rep.ratio_i.p99);
        o.record(format!("ratio_ii_p99_t{k}"), rep.ratio_ii.p99);
        r1.push(rep.ratio_i.max);
        r2.push(rep.ratio_ii.max);
    }
    let secs = start.elapsed().as_secs_f64();
    let spread = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max) / xs.iter().copied().fold(f64::INFINITY, f64::min);
    let (s1, s2) = (spread(&r1), spread(&r2));
    o.measured.push(("seconds".into(), secs));
    o.record("spread_i", s1);
    o.record("spread_ii", s2);
    o.note(format!("max ratio_i {r1:.3?} (spread {s1:.2}), ratio_ii {r2:.3?} (spread {s2:.2})"));
    o.require(s1 < 2.0, "ratio_i max varies by < 2x");
    o.require(s2 < 2.0, "ratio_ii max varies by < 2x");
    o.require(secs < 30.0, "runtime < 30 s");
    Ok(())
}

fn c5(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 64)?;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..50u64 {
        let v = random_field(g, 1 + (seed % 2) as usize, 500 + seed)?;
        let p = [1.0, 1.5, 2.0, 3.0][(seed % 4) as usize];
        for j in 1..=4 {
            let (lhs, rhs) = audit_lp_contraction(&v, j, p)?;
            o.fp.f(lhs);
            worst = worst.max(lhs - rhs);
            if lhs > rhs + 1e-12 {
                violations += 1;
            }
        }
    }
    o.record("max_excess", worst);
    o.require(violations == 0, format!("{violations} Jensen violations"));
    let mut worst_final: f64 = 0.0;
    for (name, v) in smooth_family(g)? {
        let norm = lp_norm(&v, 2.0);
        let errs: Vec<f64> =
            (1..=5).map(|j| Ok(lp_norm(&haar_project(&v, j)?.field.sub(&v)?, 2.0) / norm)).collect::<Result<_>>()?;
        for (j, e) in errs.iter().enumerate() {
            o.record(format!("{name}_rel_err_j{}", j + 1), *e);
        }
        worst_final = worst_final.max(errs[4]);
        o.require(strictly_decreasing(&errs), format!("{name}: error decreasing in j"));
        o.require(errs[4] < 0.1, format!("{name}: error at j = 5 below 0.1"));
    }
    o.note(format!("max excess {worst:.2e}; worst relative error at j=5 {worst_final:.4}"));
    Ok(())
}

fn c6(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 64)?;
    let params = SobolevParams::new(0.5, 1.5, 2)?;
    let family = smooth_family(g)?;
    let mut per_j = Vec::new();
    for j in 1..=4 {
        let mut best: f64 = 0.0;
        for (name, v) in &family {
            let r = audit_seminorm_bound(v, j, &params)?;
            o.record(format!("{name}_ratio_j{j}"), r);
            best = best.max(r);
        }
        o.record(format!("max_ratio_j{j}"), best);
        per_j.push(best);
    }
    let top = per_j.iter().copied().fold(0.0, f64::max);
    o.note(format!("max ratio over family per j {per_j:.3?}; max/j1 = {:.3}", top / per_j[0]));
    o.require(top <= 1.5 * per_j[0], "max over j within 1.5x of j = 1");
    Ok(())
}

fn c7(o: &mut Outcome) -> Result<()> {
    let params = SobolevParams::new(0.5, 1.0, 1)?;
    let cub = DyadicCubication::new(Grid::unit(1, 512)?, 1)?;
    let chk = cube_pair_kernel_check(&cub, 0, 1, &params, Quadrature::NearFieldCorrected)?;
    let exact = 8.0 - 4.0 * 2f64.sqrt();
    let rel = (chk.lhs - exact).abs() / exact;
    o.record("lhs", chk.lhs);
    o.record("lhs_midpoint", chk.lhs_midpoint);
    o.record("rhs_unit", chk.rhs_unit);
    o.record("rel_err", rel);
    o.require(rel <= 0.03, "adjacent halves within 3% of 8 - 4 sqrt 2");
    let mut pairs = 0;
    for (m, n) in [(1, 512), (2, 64)] {
        let cub = DyadicCubication::new(Grid::unit(m, n)?, 3)?;
        let a = audit_far_pairs(&cub, &SobolevParams::new(0.5, 1.0, m)?)?;
        o.record(format!("far_pairs_m{m}"), a.pairs as f64);
        o.record(format!("far_min_lower_m{m}"), a.min_lower_ratio);
        o.record(format!("far_max_upper_m{m}"), a.max_upper_ratio);
        pairs += a.pairs;
        o.require(a.failures == 0 && a.pairs > 0, format!("far-pair interval at m = {m}"));
    }
    o.note(format!(
        "lhs {:.5} vs {exact:.5} (rel {rel:.4}; midpoint {:.5}); {pairs} far pairs checked",
        chk.lhs, chk.lhs_midpoint
    ));
    Ok(())
}

const HIGH_TS: [f64; 3] = [0.25, 0.125, 0.0625];

fn high_setup() -> Result<(GridField, SobolevParams, ManifoldTarget)> {
    let g = Grid::unit(2, 128)?;
    Ok((generate_fixture(Fixture::Vortex, g, 0)?, SobolevParams::new(0.6, 2.0, 2)?, ManifoldTarget::circle()))
}

fn high_sweep(u: &GridField, params: &SobolevParams, target: &ManifoldTarget, fp: &mut Fingerprint) -> Result<Vec<crate::pipeline::HighReport>> {
    let mut reps = Vec::new();
    for &t in &HIGH_TS {
        let cfg = HighRegimeConfig::new(params, t)?;
        let (out, rep) = approximate_high(u, target, &cfg, params)?;
        fp.field(&out);
        for x in [rep.distance, rep.t1, rep.t2, rep.t3] {
            fp.f(x);
        }
        rep.xi.iter().for_each(|&x| fp.f(x));
        target.check_field(&out)?;
        reps.push(rep);
    }
    Ok(reps)
}

fn c8(o: &mut Outcome) -> Result<()> {
    let (u, params, target) = high_setup()?;
    let start = Instant::now();
    let mut first = Fingerprint::default();
    let reps = high_sweep(&u, &params, &target, &mut first)?;
    let secs = start.elapsed().as_secs_f64();
    let mut again = Fingerprint::default();
    high_sweep(&u, &params, &target, &mut again)?;
    let reproducible = first.finish() == again.finish();
    o.fp.0.write_u64(first.finish());
    let d: Vec<f64> = reps.iter().map(|r| r.distance).collect();
    for (r, t) in reps.iter().zip(HIGH_TS) {
        let k = (1.0 / t) as u32;
        o.record(format!("d_t1/{k}"), r.distance);
        o.record(format!("T1_t1/{k}"), r.t1);
        o.record(format!("T2_t1/{k}"), r.t2);
        o.record(format!("T3_t1/{k}"), r.t3);
        o.record(format!("slack_t1/{k}"), r.t1 + r.t2 + r.t3 - r.distance);
        if let Some(g) = r.gn_ratio {
            o.record(format!("gn_ratio_t1/{k}"), g);
        }
        o.require(r.distance <= r.t1 + r.t2 + r.t3 + 1e-9, format!("triangle decomposition at t = {t}"));
        o.require(r.winding == Some(1), format!("winding 1 at t = {t} (got {:?})", r.winding));
        o.require(r.norm_defect <= 1e-9, format!("output on the circle at t = {t}"));
    }
    o.measured.push(("seconds".into(), secs));
    o.require(strictly_decreasing(&d), "d strictly decreasing along the sweep");
    o.require(reproducible, "bit-reproducible under a fixed seed");
    o.require(secs < 120.0, "runtime < 2 min");
    o.note(format!("d = {d:.4?}; sweep took {secs:.1}s"));
    Ok(())
}

fn c9(o: &mut Outcome) -> Result<()> {
    let (u, params, target) = high_setup()?;
    let mut ratios = Vec::new();
    let mut counts = Vec::new();
    for &t in &HIGH_TS {
        let cfg = HighRegimeConfig::new(&params, t)?;
        let a = audit_claim8(&u, &target, &cfg, &params)?;
        let k = (1.0 / t) as u32;
        o.record(format!("lhs_mc_t1/{k}"), a.lhs_mc);
        o.record(format!("rhs_t1/{k}"), a.rhs);
        o.record(format!("exceptional_t1/{k}"), a.exceptional as f64);
        let r = a.ratio().unwrap_or(f64::NAN);
        o.record(format!("ratio_t1/{k}"), r);
        ratios.push(r);
        counts.push(a.exceptional as f64);
    }
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    o.require(finite, "ratio finite at every t");
    o.require(spread <= 3.0, "ratio within 3x across the sweep");
    o.require(strictly_decreasing(&counts), "exceptional set shrinks with t");
    o.note(format!("ratios {ratios:.3?} (spread {spread:.2}); exceptional nodes {counts:?}"));
    Ok(())
}

fn c10(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 64)?;
    let u = generate_fixture(Fixture::SmoothCircle, g, 0)?;
    let params = SobolevParams::new(0.4, 2.0, 2)?;
    let target = ManifoldTarget::circle();
    let mut d = Vec::new();
    let mut last_clamped = usize::MAX;
    for j in 2..=4u32 {
        let t = 0.5f64.powi(j as i32);
        let (out, rep) = approximate_low(&u, &target, j, &[1.0, 0.0], t, &params, Extension::Reflection)?;
        o.fp.field(&out);
        o.record(format!("d_j{j}"), rep.distance);
        o.record(format!("clamped_j{j}"), rep.clamped_cubes as f64);
        o.record(format!("norm_defect_j{j}"), rep.norm_defect);
        o.require(rep.norm_defect <= 1e-9, format!("unit norm at j = {j}"));
        d.push(rep.distance);
        last_clamped = rep.clamped_cubes;
    }
    o.require(strictly_decreasing(&d), "d strictly decreasing in j");
    o.require(last_clamped == 0, "no clamp events at j = 4");
    o.note(format!("d = {d:.4?}; clamps at j=4: {last_clamped}"));
    Ok(())
}

fn c11(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(1, 512)?;
    let params = SobolevParams::new(0.5, 2.0, 1)?;
    let demo = nonuniform_demo(&PlateauBump::default(), &[1, 2, 4, 8], &[0.3], &Abs, &params, g)?;
    let sem: Vec<f64> = demo.rows.iter().map(|r| r.seminorm).collect();
    let wsp: Vec<f64> = demo.rows.iter().map(|r| r.wsp_diff).collect();
    for r in &demo.rows {
        o.record(format!("seminorm_j{}", r.j), r.seminorm);
        o.record(format!("wsp_diff_j{}", r.j), r.wsp_diff);
    }
    o.record("slope", demo.slope);
    let wsp_spread = wsp.iter().copied().fold(f64::NEG_INFINITY, f64::max) - wsp.iter().copied().fold(f64::INFINITY, f64::min);
    o.require(strictly_increasing(&sem), "seminorm strictly increasing in j");
    o.require(demo.slope >= 0.4, "log-log slope >= 0.4");
    o.require(wsp_spread <= 1e-12, "‖u_j - v_j‖ constant to 1e-12");

    let (u, w) = continuity_fields(g)?;
    let vs = geometric_perturbations(&u, &w, 0..=14)?;
    let rows = continuity_demo(&u, &Abs, &vs, &params)?;
    let comp: Vec<f64> = rows.iter().map(|r| r.composed).collect();
    let dist: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    for r in &rows {
        o.record(format!("composed_k{}", r.k), r.composed);
        o.record(format!("distance_k{}", r.k), r.distance);
    }
    let (lc, ld) = (comp[comp.len() - 1], dist[dist.len() - 1]);
    o.require(strictly_decreasing(&comp) && strictly_decreasing(&dist), "continuity columns co-decrease");
    o.require(lc < 1e-3 && ld < 1e-3, "continuity columns end below 1e-3");
    o.note(format!(
        "seminorms {sem:.4?}, slope {:.3}, W^sp spread {wsp_spread:.1e}; continuity ends at ({lc:.2e}, {ld:.2e})",
        demo.slope
    ));
    Ok(())
}

fn c12(o: &mut Outcome) -> Result<()> {
    let g = Grid::unit(2, 32)?;
    let u = generate_fixture(Fixture::Vortex, g, 0)?;
    let target = ManifoldTarget::circle();
    let low = SobolevParams::new(0.4, 2.0, 2)?;
    let high = SobolevParams::new(0.6, 2.0, 2)?;
    let cfg = HighRegimeConfig::new(&high, 0.25)?;
    let a = approximate_high(&u, &target, &cfg, &low);
    let b = approximate_low(&u, &target, 2, &[1.0, 0.0], 0.25, &high, Extension::Reflection);
    let msg = |r: &Result<_>| match r {
        Err(e) => e.to_string(),
        Ok(_) => "accepted".to_string(),
    };
    let ok_a = matches!(a, Err(WspError::Regime(_)));
    let ok_b = matches!(b, Err(WspError::Regime(_)));
    o.fp.f(ok_a as u8 as f64);
    o.fp.f(ok_b as u8 as f64);
    o.require(ok_a, "high-regime pipeline rejects sp = 0.8");
    o.require(ok_b, "low-regime pipeline rejects sp = 1.2");
    o.note(format!("high@0.8: {}; low@1.2: {}", msg(&a.map(|_| ())), msg(&b.map(|_| ()))));
    Ok(())
}

/// Runs criterion `id` (1 to 12) on the current thread pool.
pub fn run_criterion(id: u32) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown").to_string();
    let mut o = Outcome::new();
    let start = Instant::now();
    let res = match id {
        1 => c1(&mut o),
        2 => c2(&mut o),
        3 => c3(&mut o),
        4 => c4(&mut o),
        5 => c5(&mut o),
        6 => c6(&mut o),
        7 => c7(&mut o),
        8 => c8(&mut o),
        9 => c9(&mut o),
        10 => c10(&mut o),
        11 => c11(&mut o),
        12 => c12(&mut o),
        _ => Err(WspError::InvalidParameter(format!("no criterion {id}"))),
    };
    if let Err(e) = res {
        o.passed = false;
        o.note(format!("error: {e}"));
    }
    CriterionResult {
        id,
        name,
        passed: o.passed,
        fingerprint: o.fp.finish(),
        measured: o.measured,
        detail: o.detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Criteria 1 to 12 at `workers`, then all of them again at
/// `compare_workers` for criterion 13. `on_result` sees each result as it
/// completes.
pub fn run_suite(
    workers: usize,
    compare_workers: usize,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<Vec<CriterionResult>> {
    let mut results = Vec::new();
    for id in 1..=12 {
        let r = with_workers(workers, || run_criterion(id))?;
        on_result(&r);
        results.push(r);
    }
    let start = Instant::now();
    let mut o = Outcome::new();
    let mut differing = Vec::new();
    for first in &results {
        let other = with_workers(compare_workers, || run_criterion(first.id))?;
        o.fp.0.write_u64(other.fingerprint);
        if other.fingerprint != first.fingerprint {
            differing.push(first.id);
        }
    }
    o.require(differing.is_empty(), format!("criteria {differing:?} differ"));
    if differing.is_empty() {
        o.note(format!("criteria 1-12 bit-identical at {workers} and {compare_workers} workers"));
    }
    let r = CriterionResult {
        id: 13,
        name: CRITERIA[12].1.to_string(),
        passed: o.passed,
        measured: vec![("differing".into(), differing.len() as f64)],
        detail: o.detail,
        fingerprint: o.fp.finish(),
        seconds: start.elapsed().as_secs_f64(),
    };
    on_result(&r);
    results.push(r);
    Ok(results)
}
