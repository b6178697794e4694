//! One function per command. Each writes its artifacts and returns a JSON summary.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::analysis::{coarea_check, interface_extract, rigidity_sample, Needle, ScalarLatticeField};
use crate::cli::config::{Command, RunConfig, Source};
use crate::cli::report::ArtifactWriter;
use crate::energy::{energy, energy_report, Density, EnergyReport, Sign, WellLabel, WellSystem};
use crate::error::{Error, Result};
use crate::fixtures::{
    calibrate, reference_needle, rigidity_configuration, rigidity_params, verify, CalibrateOptions, Fixture,
    LayerCalibration, VerifyOptions,
};
use crate::gridperturb::{recursion_limit, recursion_sequence, simulate_chain_selection, Placement};
use crate::layers::{estimate_layer_energy, scaling_study, surface_scaling_study, LayerKind, LayerOptions, SurfaceOptions};
use crate::lattice::format::{read_deformation, write_deformation};
use crate::lattice::{Deformation, Ends, LatticeDomain, Shape};
use crate::linalg::{smallest_singular_value, Mat2, Vec2};
use crate::optimize::{
    initialize, initialize_with_boundary, minimize, minimize_with_continuation, InitMode, Laminate, Method,
    MinimizeOptions, SMOOTHING_SCHEDULE,
};
use crate::spin::{comparison_check, spin_field_from_report};

/// Summary printed to stdout plus whether the command's own checks passed.
pub struct Outcome {
    pub summary: Value,
    /// A failed check: artifacts are kept and the process exits nonzero.
    pub failure: Option<Error>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, failure: None }
    }
}

fn mat(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn sign(s: &str) -> Sign {
    if s == "-" {
        Sign::Minus
    } else {
        Sign::Plus
    }
}

fn density(cfg: &RunConfig) -> Density {
    Density::parse(&cfg.density).expect("validated")
}

pub fn fixture(cfg: &RunConfig) -> Result<Fixture> {
    if cfg.fixture.is_empty() {
        Ok(Fixture::bundled())
    } else {
        Fixture::load(Path::new(&cfg.fixture))
    }
}

fn domain(cfg: &RunConfig, n: u32) -> Result<Arc<LatticeDomain>> {
    let ends = if cfg.domain_ends == "free" { Ends::Free } else { Ends::Clamped };
    let shape = Shape::new(cfg.domain_d, cfg.domain_l, sign(&cfg.domain_sign)).with_ends(ends);
    Ok(Arc::new(LatticeDomain::new(shape, n)?))
}

fn minimize_options(cfg: &RunConfig, n: u32) -> MinimizeOptions {
    let mut o = MinimizeOptions::for_resolution(n).with_max_iters(cfg.max_iters);
    o.seed = cfg.seed;
    o.method = if cfg.method == "gradient_descent" { Method::GradientDescent } else { Method::Lbfgs };
    o
}

fn smoothing(cfg: &RunConfig) -> Vec<f64> {
    if cfg.smoothing {
        SMOOTHING_SCHEDULE.to_vec()
    } else {
        Vec::new()
    }
}

/// The input file, or a state built from `init` with the boundary data applied.
fn state(cfg: &RunConfig) -> Result<(Deformation, WellSystem)> {
    if !cfg.input.is_empty() {
        let text = std::fs::read_to_string(&cfg.input)?;
        return read_deformation(&text);
    }
    let w = WellSystem::new(cfg.a)?;
    let dom = domain(cfg, cfg.n)?;
    let f = w.f_lambda(cfg.lambda);
    let base = match cfg.init.as_str() {
        "laminate" => {
            let s = sign(&cfg.domain_sign);
            let qu1 = match s {
                Sign::Plus => w.q * w.u1,
                Sign::Minus => w.q_tilde * w.u1,
            };
            // volume fraction λ of U0 across the diagonal extent
            let half = cfg.domain_d / std::f64::consts::SQRT_2;
            let cut = -half + 2.0 * half * cfg.lambda;
            InitMode::Laminate(Laminate { sign: s, offsets: vec![cut], phases: vec![w.u0, qu1] })
        }
        _ => InitMode::Affine(f),
    };
    let mode = if cfg.init == "perturbed" || cfg.amplitude > 0.0 {
        InitMode::Perturbed { base: Box::new(base), amplitude: cfg.amplitude / cfg.n as f64, seed: cfg.seed }
    } else {
        base
    };
    let u = if cfg.domain_ends == "clamped" {
        initialize_with_boundary(dom, &mode, &w, cfg.lambda, Vec2::zeros())?
    } else {
        initialize(dom, &mode, &w)?
    };
    Ok((u, w))
}

fn energy_table(out: &mut ArtifactWriter, u: &Deformation, rep: &EnergyReport, name: &str) -> Result<()> {
    let mut t = out.table(&["i", "j", "h_site", "dist_K", "bracket_U0", "bracket_U1"]);
    for (k, &(i, j)) in u.domain().nodes()[..rep.site_density.len()].iter().enumerate() {
        t.row(&[&i, &j, &rep.site_density[k], &rep.dist_to_wells[k], &rep.bracket_u0[k], &rep.bracket_u1[k]]);
    }
    out.csv(name, t)
}

fn energy_summary(rep: &EnergyReport, w: &WellSystem, lambda: f64) -> Value {
    json!({ "total": rep.total, "rescaled": rep.rescaled, "n": rep.n, "a": w.a, "lambda": lambda, "density": rep.density })
}

pub fn run(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    match cfg.command {
        Command::Wells => wells(cfg, out),
        Command::Energy => energy_cmd(cfg, out),
        Command::Minimize => minimize_cmd(cfg, out),
        Command::Layer => layer(cfg, out),
        Command::Scaling => scaling(cfg, out),
        Command::SurfaceScaling => surface(cfg, out),
        Command::Spin => spin(cfg, out),
        Command::Coarea => coarea(cfg, out),
        Command::Rigidity => rigidity(cfg, out),
        Command::PerturbGrid => perturb_grid(cfg, out),
        Command::Verify => verify_cmd(cfg, out),
        Command::Calibrate => calibrate_cmd(cfg, out),
        Command::Export => export(cfg, out),
    }
}

fn wells(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let w = WellSystem::new(cfg.a)?;
    let qu1 = w.q * w.u1;
    let v = json!({
        "a": w.a,
        "b": w.b,
        "U0": mat(&w.u0),
        "U1": mat(&w.u1),
        "Q": mat(&w.q),
        "Q_tilde": mat(&w.q_tilde),
        "c_bar": w.cbar,
        "F_lambda": mat(&w.f_lambda(cfg.lambda)),
        "lambda": cfg.lambda,
        "sigma_min_U0_minus_QU1": smallest_singular_value(&(w.u0 - qu1)),
        "rank_one_defect": w.rank_one_defect(&w.u0, &qu1, Sign::Plus),
    });
    out.json("wells.json", &v)?;
    Ok(Outcome::ok(v))
}

fn energy_cmd(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = state(cfg)?;
    let rep = energy_report(&u, &w, &density(cfg))?;
    energy_table(out, &u, &rep, "energy.csv")?;
    let mut v = energy_summary(&rep, &w, u.lambda());
    v["admissible"] = json!(u.is_admissible());
    out.json("energy.json", &v)?;
    Ok(Outcome::ok(v))
}

fn minimize_cmd(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = state(cfg)?;
    let d = density(cfg);
    let n = u.domain().n();
    let opts = minimize_options(cfg, n);
    let initial = energy(&u, &w, &d)?;
    let (res, stages) = if cfg.smoothing {
        let c = minimize_with_continuation(&u, &w, &d, &opts, &smoothing(cfg))?;
        (c.result, c.stages)
    } else {
        (minimize(&u, &w, &d, &opts)?, Vec::new())
    };
    let mut t = out.table(&["iteration", "energy"]);
    for (i, e) in res.energy_trace.iter().enumerate() {
        t.row(&[&i, e]);
    }
    out.csv("trace.csv", t)?;
    let rep = energy_report(&res.final_state, &w, &d)?;
    energy_table(out, &res.final_state, &rep, "energy.csv")?;
    out.text("state.txt", "deformation", &write_deformation(&res.final_state, &w))?;
    let interfaces = interface_extract(&res.final_state, &w, 0.1 * w.cbar);
    let mut seg = out.table(&["segment", "x", "y"]);
    for (s, segment) in interfaces.segments.iter().enumerate() {
        for p in &segment.points {
            seg.row(&[&s, &p[0], &p[1]]);
        }
    }
    out.csv("interfaces.csv", seg)?;
    let v = json!({
        "initial": initial,
        "final": rep.total,
        "rescaled": rep.rescaled,
        "iterations": res.iterations,
        "termination": res.termination,
        "admissible": res.admissible,
        "grad_norm": res.grad_norm,
        "stages": stages,
        "interfaces": interfaces,
    });
    out.json("minimize.json", &v)?;
    Ok(Outcome::ok(v))
}

fn side(w: &WellSystem, f: &Mat2, s: &str) -> Mat2 {
    match s {
        "data" => *f,
        other => w.matrix(WellLabel::parse(other).expect("validated")),
    }
}

fn layer_setup(cfg: &RunConfig) -> Result<(LayerKind, Mat2, Mat2, Sign, WellSystem, LayerOptions)> {
    let w = WellSystem::new(cfg.a)?;
    let f = w.f_lambda(cfg.lambda);
    let kind = LayerKind::parse(&cfg.kind).expect("validated");
    let sign = if kind == LayerKind::CMinus { Sign::Minus } else { Sign::Plus };
    let mut left = cfg.left.as_str();
    let mut right = cfg.right.as_str();
    // boundary layers carry the data on their fixed side unless told otherwise
    if kind == LayerKind::BPlus && cfg.provenance["left"] == Source::Default {
        left = "data";
        right = "U0";
    }
    if kind == LayerKind::BMinus && cfg.provenance["right"] == Source::Default {
        left = "U0";
        right = "data";
    }
    if kind == LayerKind::CMinus && cfg.provenance["right"] == Source::Default {
        right = "QtU1";
    }
    let opts = LayerOptions {
        density: density(cfg),
        max_iters: cfg.max_iters,
        smoothing: smoothing(cfg),
        ..LayerOptions::default()
    };
    Ok((kind, side(&w, &f, left), side(&w, &f, right), sign, w, opts))
}

fn layer(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (kind, v1, v2, sign, w, opts) = layer_setup(cfg)?;
    let est = estimate_layer_energy(kind, &v1, &v2, sign, cfg.m1, cfg.m2, &cfg.n_list.0, &w, &opts)?;
    let mut t = out.table(&["n", "m1", "m2", "estimate", "residual"]);
    for r in &est.per_n {
        t.row(&[&r.n, &cfg.m1, &cfg.m2, &r.rescaled, &est.fit_residual]);
    }
    out.csv("layer.csv", t)?;
    let v = serde_json::to_value(&est)?;
    out.json("layer.json", &v)?;
    let failure = est.failed().then(|| Error::Domain(format!("{} layer: a resolution failed", kind.name())));
    Ok(Outcome { summary: v, failure })
}

fn scaling(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (_, v1, v2, sign, w, opts) = layer_setup(cfg)?;
    let rep = scaling_study(&v1, &v2, sign, &cfg.m1_list.0, &cfg.m2_list.0, cfg.n, &w, &opts)?;
    let mut t = out.table(&["n", "m1", "m2", "estimate", "residual"]);
    for e in &rep.entries {
        t.row(&[&rep.n, &e.m1, &e.m2, &e.estimate, &None::<f64>]);
    }
    out.csv("scaling.csv", t)?;
    let mut v = serde_json::to_value(&rep)?;
    v["passes"] = json!(rep.passes());
    out.json("scaling.json", &v)?;
    Ok(Outcome::ok(v))
}

fn surface(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let opts = SurfaceOptions { density: density(cfg), max_iters: cfg.max_iters, smoothing: smoothing(cfg) };
    let study = surface_scaling_study(cfg.lambda, cfg.a, &cfg.n_list.0, cfg.restarts, cfg.seed, &opts)?;
    let mut t = out.table(&["n", "restart", "rescaled"]);
    for row in &study.rows {
        for (r, e) in row.per_restart.iter().enumerate() {
            t.row(&[&row.n, &r, e]);
        }
    }
    out.csv("surface.csv", t)?;
    let v = serde_json::to_value(&study)?;
    out.json("surface.json", &v)?;
    Ok(Outcome::ok(v))
}

fn spin(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = state(cfg)?;
    let rep = energy_report(&u, &w, &Density::Truncated)?;
    let sf = spin_field_from_report(&u, &w, &rep)?;
    let mut t = out.table(&["i", "j", "sigma"]);
    for (k, &(i, j)) in u.domain().nodes()[..sf.sigma.len()].iter().enumerate() {
        t.row(&[&i, &j, &sf.sigma[k]]);
    }
    out.csv("spin.csv", t)?;
    let cmp = comparison_check(&u, &w)?;
    let fx = fixture(cfg)?;
    let v = json!({
        "h_spin": sf.h_spin,
        "mismatches": sf.mismatch_edges.len(),
        "energy": rep.total,
        "comparison": cmp,
        "comparison_passes": cmp.passes(),
        "fixture": { "version": fx.version, "spin_ratio": fx.thresholds.spin_ratio, "perimeter": fx.thresholds.perimeter },
    });
    out.json("spin.json", &v)?;
    let failure = (!cmp.passes()).then(|| Error::Falsification("spin-mismatch edge without density exceedance".into()));
    Ok(Outcome { summary: v, failure })
}

fn coarea(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = state(cfg)?;
    let rep = energy_report(&u, &w, &Density::Truncated)?;
    let values: Vec<f64> = if cfg.field == "distance" {
        rep.dist_to_wells.iter().map(|d| d.unwrap_or(0.0)).collect()
    } else {
        rep.site_density.clone()
    };
    let f = ScalarLatticeField::new(u.domain().clone(), values);
    let rec = coarea_check(&f, None)?;
    let fx = fixture(cfg)?;
    let within = rec.ratio <= fx.thresholds.coarea;
    let v = json!({ "field": cfg.field, "record": rec, "threshold": fx.thresholds.coarea, "within": within, "fixture_version": fx.version });
    out.json("coarea.json", &v)?;
    let failure = (!within).then(|| Error::Falsification(format!("coarea ratio {} above {}", rec.ratio, fx.thresholds.coarea)));
    Ok(Outcome { summary: v, failure })
}

fn rigidity(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = if cfg.input.is_empty() {
        let w = WellSystem::new(cfg.a)?;
        let needle = Needle { width: cfg.needle_width, half_length: cfg.needle_half_length, ..reference_needle() };
        (rigidity_configuration(cfg.n, &w, &needle)?, w)
    } else {
        state(cfg)?
    };
    let rec = rigidity_sample(&u, &w, &rigidity_params(cfg.samples, cfg.seed))?;
    let fx = fixture(cfg)?;
    let c = fx.thresholds.rigidity;
    let mut t = out.table(&["pair", "ratio"]);
    for (p, r) in rec.ratios.iter().enumerate() {
        t.row(&[&p, r]);
    }
    out.csv("rigidity.csv", t)?;
    let frac = rec.fraction_within(c);
    let v = json!({
        "mu": rec.mu, "eta": rec.eta, "r": rec.r, "nodes_in_hull": rec.nodes_in_hull,
        "c": c, "fraction_within": frac, "deviation_q99": rec.deviation_quantile(0.99),
        "fixture_version": fx.version,
    });
    out.json("rigidity.json", &v)?;
    Ok(Outcome::ok(v))
}

fn perturb_grid(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let rec = recursion_sequence(cfg.theta, cfg.m_max)?;
    let mut t = out.table(&["m", "x_m"]);
    for (m, x) in rec.sequence.iter().enumerate() {
        t.row(&[&m, x]);
    }
    out.csv("recursion.csv", t)?;
    let placement = if cfg.placement == "uniform" { Placement::Uniform } else { Placement::WorstCase };
    let chain = if cfg.theta <= 0.25 {
        let tr = simulate_chain_selection(cfg.theta, cfg.chain_length, cfg.seed, cfg.resolution, placement, cfg.neighbors)?;
        let mut t = out.table(&["step", "feasible_fraction", "bad_fraction"]);
        for s in &tr.steps {
            t.row(&[&s.step, &s.feasible_fraction, &s.bad_fraction]);
        }
        out.csv("trace.csv", t)?;
        Some(tr)
    } else {
        None
    };
    let v = json!({
        "theta": cfg.theta,
        "status": rec.status,
        "steps": rec.sequence.len() - 1,
        "last": rec.last(),
        "limit": rec.limit,
        "closed_form": recursion_limit(cfg.theta)?,
        "chain": chain.map(|c| json!({ "min_feasible": c.min_feasible, "bound": c.bound, "effective_theta": c.effective_theta, "final_bad_fraction": c.steps.last().map(|s| s.bad_fraction) })),
    });
    out.json("perturb_grid.json", &v)?;
    Ok(Outcome::ok(v))
}

fn verify_cmd(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let fx = fixture(cfg)?;
    let opts = VerifyOptions { seed: cfg.seed, suite_size: cfg.suite_size, spin_suite_size: cfg.spin_suite_size, ..VerifyOptions::default() };
    let rep = verify(&fx, &opts)?;
    let mut t = out.table(&["check", "passed", "evaluated", "violations", "extreme", "threshold"]);
    for c in &rep.checks {
        t.row(&[&c.name.to_string(), &(c.passed as u32), &c.evaluated, &c.violations, &c.extreme, &c.threshold]);
    }
    out.csv("checks.csv", t)?;
    let v = serde_json::to_value(&rep)?;
    out.json("verify.json", &v)?;
    let failed: Vec<&str> = rep.failures().iter().map(|c| c.name.as_ref()).collect();
    let failure = (!failed.is_empty()).then(|| Error::Falsification(format!("failed checks: {}", failed.join(", "))));
    Ok(Outcome { summary: v, failure })
}

fn calibrate_cmd(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let mut opts = CalibrateOptions { a: cfg.a, seed: cfg.seed, ..CalibrateOptions::default() };
    if cfg.provenance["suite_size"] != Source::Default {
        opts.suite_size = cfg.suite_size;
    }
    if cfg.provenance["spin_suite_size"] != Source::Default {
        opts.spin_suite_size = cfg.spin_suite_size;
    }
    if cfg.layers {
        opts.layers = Some(LayerCalibration {
            lambda: cfg.lambda,
            n_list: cfg.n_list.0.clone(),
            options: LayerOptions { density: density(cfg), max_iters: cfg.max_iters, smoothing: smoothing(cfg), ..LayerOptions::default() },
        });
    }
    let fx = calibrate(&opts)?;
    let text = fx.to_json()?;
    out.text("fixture.json", "fixture", &text)?;
    if !cfg.fixture.is_empty() {
        std::fs::write(&cfg.fixture, &text)?;
    }
    Ok(Outcome::ok(serde_json::to_value(&fx)?))
}

fn export(cfg: &RunConfig, out: &mut ArtifactWriter) -> Result<Outcome> {
    let (u, w) = state(cfg)?;
    let dom = u.domain();
    let mut t = out.table(&["i", "j", "x", "y", "ux", "uy", "role"]);
    for (k, &(i, j)) in dom.nodes().iter().enumerate() {
        let x = dom.point(k);
        let p = u.position(k);
        t.row(&[&i, &j, &x.x, &x.y, &p.x, &p.y, &format!("{:?}", dom.role(k))]);
    }
    out.csv("nodes.csv", t)?;
    let rep = energy_report(&u, &w, &density(cfg))?;
    energy_table(out, &u, &rep, "energy.csv")?;
    let adm = u.admissibility();
    let mut v = energy_summary(&rep, &w, u.lambda());
    v["admissible"] = json!(adm.is_admissible());
    v["nodes"] = json!(dom.num_nodes());
    out.json("export.json", &v)?;
    Ok(Outcome::ok(v))
}
