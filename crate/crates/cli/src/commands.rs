use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wsp_core::acceptance::run_suite;
use wsp_core::counterexample::{continuity_demo, continuity_fields, geometric_perturbations, nonuniform_demo, PlateauBump};
use wsp_core::fixtures::generate_fixture;
use wsp_core::haar::{audit_aj_claim, audit_lp_contraction, audit_seminorm_bound, clamp_to_tube, haar_project, max_oscillation};
use wsp_core::io::{load_field, save_field, write_atomic};
use wsp_core::manifold::{winding_number, Abs, Identity, NodeLoop, PointMap};
use wsp_core::mollify::{audit_lemma4, convolve};
use wsp_core::parallel::{resolve_workers, with_workers};
use wsp_core::pipeline::{approximate_high, approximate_low, mollify_extended, Extension, HighRegimeConfig};
use wsp_core::seminorm::{lp_norm, Seminorm};
use wsp_core::{Grid, SobolevParams};

use crate::args::*;
use crate::manifest::{Manifest, RunLog};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let workers = resolve_workers(cli.workers)?;
    let out_dir = match &cli.command {
        Command::Report(a) => a.out.clone(),
        _ => cli.out_dir.clone(),
    };
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut log = RunLog::default();
    let result = with_workers(workers, || run(&cli.command, workers, &out_dir, &mut log))?;
    let name = subcommand_name(&cli.command);
    let manifest = Manifest {
        tool: "wsp",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        config: cli,
        workers,
        seed: log.seed,
        measured: log.measured,
        outputs: log.outputs,
        error: result.as_ref().err().map(|e| format!("{e:#}")),
    };
    write_atomic(out_dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    result
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Seminorm(_) => "seminorm",
        Command::Mollify(_) => "mollify",
        Command::Haar(_) => "haar",
        Command::ApproxHigh(_) => "approx-high",
        Command::ApproxLow(_) => "approx-low",
        Command::Counterexample(_) => "counterexample",
        Command::Obstruction(_) => "obstruction",
        Command::Report(_) => "report",
        Command::Fixture(_) => "fixture",
    }
}

fn run(cmd: &Command, workers: usize, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    match cmd {
        Command::Seminorm(a) => seminorm(a, out_dir, log),
        Command::Mollify(a) => mollify(a, out_dir, log),
        Command::Haar(a) => haar(a, out_dir, log),
        Command::ApproxHigh(a) => approx_high(a, out_dir, log),
        Command::ApproxLow(a) => approx_low(a, out_dir, log),
        Command::Counterexample(a) => counterexample(a, out_dir, log),
        Command::Obstruction(a) => obstruction(a, out_dir, log),
        Command::Report(a) => report(a, workers, out_dir, log),
        Command::Fixture(a) => fixture(a, log),
    }
}

/// Buffers CSV rows, then prints them and saves a copy under the output
/// directory.
struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Self { w })
    }

    fn row<I, T>(&mut self, cells: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.w.write_record(cells)?;
        Ok(())
    }

    fn finish(self, path: PathBuf, log: &mut RunLog) -> Result<()> {
        let bytes = self.w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        std::io::stdout().write_all(&bytes)?;
        write_atomic(&path, &bytes)?;
        log.output(&path);
        Ok(())
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn quantity_table(rows: &[(String, f64)], path: PathBuf, log: &mut RunLog) -> Result<()> {
    let mut t = Table::new(&["quantity", "value"])?;
    for (k, v) in rows {
        log.measure(k.clone(), *v);
        t.row([k.clone(), num(*v)])?;
    }
    t.finish(path, log)
}

fn stage_table(rows: &[(String, String, f64)], path: PathBuf, log: &mut RunLog) -> Result<()> {
    let mut t = Table::new(&["stage", "quantity", "value"])?;
    for (stage, k, v) in rows {
        log.measure(format!("{stage}.{k}"), *v);
        t.row([stage.clone(), k.clone(), num(*v)])?;
    }
    t.finish(path, log)
}

fn seminorm(a: &SeminormArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let u = load_field(&a.field)?;
    let params = SobolevParams::new(a.s, a.p, u.grid().m)?;
    let region = match &a.region {
        Some(path) => {
            let r = load_field(path)?;
            if r.nu() != 1 || !r.grid().same_as(u.grid()) {
                bail!("region file must be a scalar field on the same grid as --field");
            }
            Some(r.values().iter().map(|&v| v != 0.0).collect::<Vec<bool>>())
        }
        None => None,
    };
    let rep = Seminorm::new(*u.grid(), params)?.gagliardo(&u, region.as_deref())?;
    let mut rows = vec![
        ("seminorm".to_string(), rep.seminorm),
        ("seminorm_p".to_string(), rep.seminorm_p),
        ("pair_count".to_string(), rep.pair_count as f64),
    ];
    if let Some(k) = rep.region_size {
        rows.push(("region_size".to_string(), k as f64));
    }
    quantity_table(&rows, out_dir.join("seminorm.csv"), log)
}

fn mollify(a: &MollifyArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let u = load_field(&a.field)?;
    let out = match a.gamma {
        Some(gamma) => mollify_extended(&u, a.t, gamma, Extension::Dilation)?.0,
        None => convolve(&u, a.t)?,
    };
    save_field(&out, &a.out)?;
    log.output(&a.out);
    log.measure("output_n", out.grid().n as f64);
    log.measure("output_half_width", out.grid().half_width);
    if let Some((s, p)) = a.audit {
        let params = SobolevParams::new(s, p, u.grid().m)?;
        let r = audit_lemma4(&u, &params, a.t)?;
        let rows = vec![
            ("t".to_string(), r.t),
            ("ratio_i_max".to_string(), r.ratio_i.max),
            ("ratio_i_p99".to_string(), r.ratio_i.p99),
            ("ratio_ii_max".to_string(), r.ratio_ii.max),
            ("ratio_ii_p99".to_string(), r.ratio_ii.p99),
            ("unmasked".to_string(), r.unmasked as f64),
            ("interior".to_string(), r.interior as f64),
            ("degenerate".to_string(), r.degenerate as u8 as f64),
        ];
        quantity_table(&rows, out_dir.join("mollify_audit.csv"), log)?;
    }
    Ok(())
}

fn haar(a: &HaarArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let v = load_field(&a.field)?;
    let params = a.audit.map(|(s, p)| SobolevParams::new(s, p, v.grid().m)).transpose()?;
    let p = params.map_or(2.0, |q| q.p);
    let mut header = vec!["j", "nodes_per_cube", "lp_error", "lp_projected", "lp_input", "max_oscillation"];
    if params.is_some() {
        header.push("seminorm_ratio");
    }
    if a.clamp.is_some() {
        header.push("clamped_cubes");
        if params.is_some() {
            header.extend(["aj_lhs", "aj_ej_minus_u", "aj_u_on_aj", "aj_ratio"]);
        }
    }
    let mut t = Table::new(&header)?;
    let norm = lp_norm(&v, p);
    let mut last = None;
    for &j in &a.j {
        let e = haar_project(&v, j)?;
        let (lp_e, _) = audit_lp_contraction(&v, j, p)?;
        let err = lp_norm(&e.field.sub(&v)?, p);
        let osc = max_oscillation(&v, &e);
        log.measure(format!("lp_error_j{j}"), err);
        let mut cells = vec![
            j.to_string(),
            e.cubication.nodes_per_cube().to_string(),
            num(err),
            num(lp_e),
            num(norm),
            num(osc),
        ];
        if let Some(params) = &params {
            let r = audit_seminorm_bound(&v, j, params)?;
            log.measure(format!("seminorm_ratio_j{j}"), r);
            cells.push(num(r));
        }
        if let Some(c) = &a.clamp {
            let (_, clamped) = clamp_to_tube(&e, &c.target, &c.b)?;
            let count = clamped.iter().filter(|&&x| x).count();
            log.measure(format!("clamped_cubes_j{j}"), count as f64);
            cells.push(count.to_string());
            if let Some(params) = &params {
                let aj = audit_aj_claim(&v, j, params, &c.target, &c.b)?;
                log.measure(format!("aj_ratio_j{j}"), aj.ratio());
                cells.extend([num(aj.lhs), num(aj.ej_minus_u), num(aj.u_on_aj), num(aj.ratio())]);
            }
        }
        t.row(cells)?;
        last = Some(e);
    }
    if let (Some(path), Some(e)) = (&a.out, last) {
        save_field(&e.field, path)?;
        log.output(path);
    }
    t.finish(out_dir.join("haar.csv"), log)
}

fn approx_high(a: &HighArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let u = load_field(&a.field)?;
    let params = SobolevParams::new(a.s, a.p, u.grid().m)?;
    let mut cfg = HighRegimeConfig::new(&params, a.t)?;
    if let Some(q) = a.q {
        cfg = cfg.with_q(&params, q)?;
    }
    cfg.gamma = a.gamma.unwrap_or(a.t);
    cfg.n_shifts = a.shifts;
    cfg.seed = a.seed;
    cfg.extension = a.extension.into();
    cfg.selection = a.selection.into();
    log.seed = Some(a.seed);
    log.measure("q", cfg.q);
    log.measure("r", cfg.r);
    let (out, rep) = approximate_high(&u, &a.manifold, &cfg, &params)?;
    save_field(&out, &a.out)?;
    log.output(&a.out);
    stage_table(&rep.rows(), out_dir.join("approx_high.csv"), log)
}

fn approx_low(a: &LowArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let u = load_field(&a.field)?;
    let params = SobolevParams::new(a.s, a.p, u.grid().m)?;
    let t_chart = a.t_chart.unwrap_or(0.5f64.powi(a.j as i32));
    let (out, rep) = approximate_low(&u, &a.manifold, a.j, &a.b, t_chart, &params, a.extension.into())?;
    save_field(&out, &a.out)?;
    log.output(&a.out);
    stage_table(&rep.rows(), out_dir.join("approx_low.csv"), log)
}

fn counterexample(a: &CounterexampleArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let grid = Grid::unit(a.m, a.n)?;
    let params = SobolevParams::new(a.s, a.p, a.m)?;
    let kappa: &dyn PointMap = match a.kappa {
        KappaArg::Abs => &Abs,
        KappaArg::Identity => &Identity,
    };
    match a.mode {
        Mode::Nonuniform => {
            let demo = nonuniform_demo(&PlateauBump::default(), &a.j_list, &a.xi, kappa, &params, grid)?;
            let mut t = Table::new(&["j", "composed_seminorm", "wsp_diff", "lp_diff"])?;
            for r in &demo.rows {
                log.measure(format!("composed_seminorm_j{}", r.j), r.seminorm);
                t.row([r.j.to_string(), num(r.seminorm), num(r.wsp_diff), num(r.lp_diff)])?;
            }
            log.measure("slope", demo.slope);
            log.measure("witness_gap", demo.witness_gap);
            t.finish(out_dir.join("counterexample_nonuniform.csv"), log)
        }
        Mode::Continuity => {
            let (u, w) = continuity_fields(grid)?;
            let vs = geometric_perturbations(&u, &w, 0..=a.k_max)?;
            let rows = continuity_demo(&u, kappa, &vs, &params)?;
            let mut t = Table::new(&["k", "composed_seminorm", "wsp_distance"])?;
            for r in &rows {
                t.row([r.k.to_string(), num(r.composed), num(r.distance)])?;
            }
            if let Some(r) = rows.last() {
                log.measure("final_composed", r.composed);
                log.measure("final_distance", r.distance);
            }
            t.finish(out_dir.join("counterexample_continuity.csv"), log)
        }
    }
}

fn obstruction(a: &ObstructionArgs, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let u = load_field(&a.field)?;
    if u.grid().m != 2 || u.nu() != 2 {
        bail!("obstruction needs a circle-valued field on m = 2 (got m = {}, nu = {})", u.grid().m, u.nu());
    }
    let n = u.grid().n;
    let mut t = Table::new(&["ring", "lo", "hi", "winding"])?;
    for k in 0..n.saturating_sub(1) / 2 {
        let lp = NodeLoop { lo: [k, k], hi: [n - 1 - k, n - 1 - k] };
        let w = winding_number(&u, &lp)?;
        if k == 0 {
            log.measure("boundary_winding", w as f64);
        }
        t.row([k.to_string(), k.to_string(), (n - 1 - k).to_string(), w.to_string()])?;
    }
    t.finish(out_dir.join("obstruction.csv"), log)
}

fn report(a: &ReportArgs, workers: usize, out_dir: &Path, log: &mut RunLog) -> Result<()> {
    let Suite::Acceptance = a.suite;
    let results = run_suite(workers, a.compare_workers, |r| eprintln!("{}", r.line()))?;
    let mut t = Table::new(&["id", "name", "status", "seconds", "fingerprint", "detail"])?;
    let mut m = csv::Writer::from_writer(Vec::new());
    m.write_record(["id", "quantity", "value"])?;
    for r in &results {
        t.row([
            r.id.to_string(),
            r.name.clone(),
            if r.passed { "PASS".into() } else { "FAIL".to_string() },
            format!("{:.3}", r.seconds),
            format!("{:016x}", r.fingerprint),
            r.detail.clone(),
        ])?;
        for (k, v) in &r.measured {
            log.measure(format!("c{}.{k}", r.id), *v);
            m.write_record([r.id.to_string(), k.clone(), num(*v)])?;
        }
    }
    let measured = out_dir.join("acceptance_measured.csv");
    write_atomic(&measured, &m.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)?;
    log.output(&measured);
    let json = out_dir.join("acceptance.json");
    write_atomic(&json, &serde_json::to_vec_pretty(&results)?)?;
    log.output(&json);
    t.finish(out_dir.join("acceptance.csv"), log)?;
    let failed: Vec<u32> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    log.measure("failed", failed.len() as f64);
    if a.strict && !failed.is_empty() {
        bail!("criteria {failed:?} failed");
    }
    Ok(())
}

fn fixture(a: &FixtureArgs, log: &mut RunLog) -> Result<()> {
    let f = a.name.parse()?;
    log.seed = Some(a.seed);
    let u = generate_fixture(f, Grid::unit(a.m, a.n)?, a.seed)?;
    save_field(&u, &a.out)?;
    log.output(&a.out);
    Ok(())
}
