//! Randomized configuration suites, calibration of the empirical constants, and the
//! verification suite that checks every inequality against the stored constants.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{coarea_check, needle_state, rigidity_sample, second_diff_check, Needle, RigidityParams, ScalarLatticeField};
use crate::energy::{energy_gradient, energy_report, node_stencil, Density, Sign, Stencil, WellLabel, WellSystem};
use crate::error::{Error, Result};
use crate::gridperturb::{recursion_limit, recursion_sequence, RecursionStatus};
use crate::layers::{assemble_limit_energy, layer_problem, LayerKind, LayerTable};
use crate::lattice::{Deformation, Ends, LatticeDomain, Shape, NONE};
use crate::linalg::{rotation, Mat2, Vec2};
use crate::optimize::{initialize, InitMode, Laminate};
use crate::spin::comparison_check;

pub const FIXTURE_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20_240_917;
/// Salt separating the verification suite from the calibration suite.
const VERIFY_SALT: u64 = 0x5EED_0F_7E57;

/// Lower-type constants are divided by 2 and upper-type ones multiplied by 2 before use.
pub const SAFETY_LOWER: f64 = 0.5;
pub const SAFETY_UPPER: f64 = 2.0;

// ---------------------------------------------------------------------------------------
// configuration suites

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Random affine map with a smooth perturbation.
    Generic,
    /// Slightly perturbed rotated well.
    NearWell,
    /// Perturbed rank-one laminate of a well pair.
    Laminate,
    /// Large stretches, inside the truncation regime.
    Large,
    /// Perturbed boundary-data gradient `F_λ`.
    Boundary,
}

const KINDS: [SuiteKind; 5] = [SuiteKind::Generic, SuiteKind::NearWell, SuiteKind::Laminate, SuiteKind::Large, SuiteKind::Boundary];

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn random_stretch(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Mat2 {
    let s = Mat2::new(rng.random_range(lo..hi), 0.0, 0.0, rng.random_range(lo..hi));
    rotation(rng.random_range(0.0..2.0 * PI)) * s * rotation(rng.random_range(0.0..2.0 * PI))
}

fn random_domain(rng: &mut ChaCha8Rng, n: u32) -> Result<Arc<LatticeDomain>> {
    let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
    let ends = if rng.random_bool(0.5) { Ends::Clamped } else { Ends::Free };
    let (d, l) = if rng.random_bool(0.5) { (4.0, 1.0) } else { (2.0, 1.0) };
    Ok(Arc::new(LatticeDomain::new(Shape::new(d, l, sign).with_ends(ends), n)?))
}

fn perturbed(dom: &Arc<LatticeDomain>, base: InitMode, amplitude: f64, seed: u64, w: &WellSystem) -> Result<Deformation> {
    let mut amp = amplitude;
    loop {
        let mode = InitMode::Perturbed { base: Box::new(base.clone()), amplitude: amp, seed };
        match initialize(dom.clone(), &mode, w) {
            Ok(u) => return Ok(u),
            Err(Error::Domain(_)) if amp > 1e-8 => amp *= 0.5,
            Err(e) => return Err(e),
        }
    }
}

/// Random laminate of `U0` and its rank-one partner across the normal of `sign`.
fn random_laminate(rng: &mut ChaCha8Rng, dom: &LatticeDomain, w: &WellSystem) -> Laminate {
    let sign = dom.shape().sign;
    let partner = match sign {
        Sign::Plus => w.q * w.u1,
        Sign::Minus => w.q_tilde * w.u1,
    };
    let half = dom.shape().d / SQRT_2;
    let c = Vec2::new(dom.shape().center[0], dom.shape().center[1]).dot(&sign.unit_normal());
    let k = rng.random_range(1..=3);
    let mut offsets: Vec<f64> = (0..k).map(|_| c + rng.random_range(-0.8..0.8) * half).collect();
    offsets.sort_by(f64::total_cmp);
    offsets.dedup();
    let start_u0 = rng.random_bool(0.5);
    let phases = (0..=offsets.len()).map(|i| if (i % 2 == 0) == start_u0 { w.u0 } else { partner }).collect();
    Laminate { sign, offsets, phases }
}

/// Configuration `index` of the randomized suite: `n = 8` for even and `n = 16` for odd
/// indices, kind cycling through `SuiteKind`.
pub fn suite_state(seed: u64, index: u64, w: &WellSystem) -> Result<(SuiteKind, Deformation)> {
    let n = if index % 2 == 0 { 8 } else { 16 };
    suite_state_at(seed, index, n, w)
}

/// As `suite_state` with a fixed resolution.
pub fn suite_state_at(seed: u64, index: u64, n: u32, w: &WellSystem) -> Result<(SuiteKind, Deformation)> {
    let kind = KINDS[(index / 2) as usize % KINDS.len()];
    Ok((kind, suite_state_of_kind(seed, index, n, kind, w)?))
}

pub fn suite_state_of_kind(seed: u64, index: u64, n: u32, kind: SuiteKind, w: &WellSystem) -> Result<Deformation> {
    let mut rng = rng_for(seed, index);
    let dom = random_domain(&mut rng, n)?;
    let pseed = rng.random();
    let mut u = match kind {
        SuiteKind::Generic => {
            let f = random_stretch(&mut rng, 0.3, 2.5);
            perturbed(&dom, InitMode::Affine(f), rng.random_range(0.0..0.08), pseed, w)?
        }
        SuiteKind::NearWell => {
            let f = if rng.random_bool(0.5) { w.u0 } else { w.u1 };
            perturbed(&dom, InitMode::Affine(f), 10f64.powf(rng.random_range(-4.0..-1.5)), pseed, w)?
        }
        SuiteKind::Laminate => {
            let lam = random_laminate(&mut rng, &dom, w);
            perturbed(&dom, InitMode::Laminate(lam), 10f64.powf(rng.random_range(-4.0..-2.0)), pseed, w)?
        }
        SuiteKind::Large => {
            let f = random_stretch(&mut rng, 2.5, 6.0);
            perturbed(&dom, InitMode::Affine(f), rng.random_range(0.0..0.2), pseed, w)?
        }
        SuiteKind::Boundary => {
            let f = w.f_lambda(rng.random_range(0.0..=1.0));
            perturbed(&dom, InitMode::Affine(f), rng.random_range(0.0..0.05), pseed, w)?
        }
    };
    let r = rotation(rng.random_range(0.0..2.0 * PI));
    u.map_image(&r, Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    Ok(u)
}

/// Named exact laminates and layer profiles: single and multiple interfaces on both
/// diagonals, rotated copies, and the sampled profiles of the four layer problems.
pub fn laminate_constructions(n: u32, w: &WellSystem) -> Result<Vec<(String, Deformation)>> {
    let mut out = Vec::new();
    let qu1 = w.q * w.u1;
    let qtu1 = w.q_tilde * w.u1;
    for (sign, partner, tag) in [(Sign::Plus, qu1, "QU1"), (Sign::Minus, qtu1, "QtU1")] {
        let dom = Arc::new(LatticeDomain::new(Shape::new(4.0, 1.0, sign), n)?);
        let plans: [(&str, Vec<f64>, Vec<Mat2>); 4] = [
            ("single", vec![0.0], vec![w.u0, partner]),
            ("single_reversed", vec![0.0], vec![partner, w.u0]),
            ("triple", vec![-1.0, 0.25, 1.5], vec![w.u0, partner, w.u0, partner]),
            ("thin_band", vec![-0.1, 0.1], vec![w.u0, partner, w.u0]),
        ];
        for (name, offsets, phases) in plans {
            let lam = Laminate { sign, offsets, phases };
            let mut u = initialize(dom.clone(), &InitMode::Laminate(lam), w)?;
            out.push((format!("{name}_U0_{tag}"), u.clone()));
            u.map_image(&rotation(0.7), Vec2::new(0.3, -0.2));
            out.push((format!("{name}_U0_{tag}_rotated"), u));
        }
    }
    let f = w.f_lambda(0.5);
    let profiles = [
        (LayerKind::BPlus, f, w.u0, Sign::Plus),
        (LayerKind::BMinus, qu1, f, Sign::Plus),
        (LayerKind::CPlus, w.u0, qu1, Sign::Plus),
        (LayerKind::CMinus, w.u0, qtu1, Sign::Minus),
    ];
    for (kind, v1, v2, sign) in profiles {
        let u = layer_problem(kind, &v1, &v2, sign, 1.0, 1.0, n, w, 0.125)?;
        out.push((format!("profile_{}", kind.name()), u));
    }
    Ok(out)
}

/// `U0 x` with a small tapered `QU1` needle between the two sampling balls.
pub fn rigidity_configuration(n: u32, w: &WellSystem, needle: &Needle) -> Result<Deformation> {
    let dom = Arc::new(LatticeDomain::standard(n)?);
    let mut u = Deformation::affine(dom, w.u0, Vec2::zeros());
    needle_state(&mut u, w, needle);
    Ok(u)
}

/// Resolution of the needle configurations.
pub const RIGIDITY_N: u32 = 64;

/// Balls on either side of the origin along the `(1,1)` normal, so that a needle through
/// the origin separates them.
pub fn rigidity_params(samples: usize, seed: u64) -> RigidityParams {
    RigidityParams { x0: Vec2::new(-0.5, -0.5), y0: Vec2::new(0.5, 0.5), alpha: 0.1, samples, seed }
}

/// The configuration used by the rigidity acceptance check.
pub fn reference_needle() -> Needle {
    Needle { center: Vec2::new(0.0, 0.0), width: 0.05, half_length: 0.1, taper: 0.1 }
}

/// Needles around the reference one: shifted along and across the normal, thinner and
/// thicker, shorter and longer.
fn calibration_needles() -> Vec<Needle> {
    let mut out = Vec::new();
    for (cx, cy) in [(0.0, 0.0), (0.05, -0.05), (-0.03, -0.03)] {
        for (width, half) in [(0.03, 0.15), (0.08, 0.05), (0.05, 0.2)] {
            out.push(Needle { center: Vec2::new(cx, cy), width, half_length: half, taper: 0.1 });
        }
    }
    out
}

// ---------------------------------------------------------------------------------------
// affine ratio scan

/// `(h̃ / dist², h / dist²)` for the affine stencil of `F`, `None` on `K`.
pub fn affine_ratios(f: &Mat2, w: &WellSystem) -> Option<(f64, f64)> {
    let d2 = w.dist_to_k(f).powi(2);
    if d2 == 0.0 {
        return None;
    }
    let s = Stencil::affine(f);
    Some((Density::Tilde.value(&s, w) / d2, Density::Truncated.value(&s, w) / d2))
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct RatioExtremes {
    pub tilde_min: f64,
    pub truncated_min: f64,
    pub truncated_max: f64,
    pub samples: usize,
}

impl RatioExtremes {
    fn empty() -> Self {
        RatioExtremes { tilde_min: f64::INFINITY, truncated_min: f64::INFINITY, truncated_max: 0.0, samples: 0 }
    }

    fn add(&mut self, r: Option<(f64, f64)>) {
        if let Some((t, h)) = r {
            self.tilde_min = self.tilde_min.min(t);
            self.truncated_min = self.truncated_min.min(h);
            self.truncated_max = self.truncated_max.max(h);
            self.samples += 1;
        }
    }

    fn merge(mut self, o: RatioExtremes) -> Self {
        self.tilde_min = self.tilde_min.min(o.tilde_min);
        self.truncated_min = self.truncated_min.min(o.truncated_min);
        self.truncated_max = self.truncated_max.max(o.truncated_max);
        self.samples += o.samples;
        self
    }
}

/// Singular-value grid: fine steps up to 4, geometric steps beyond.
fn sigma_grid(radius: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (1..=200).map(|k| k as f64 * 0.02).collect();
    let steps = 40;
    for k in 1..=steps {
        g.push(4.0 * (radius / 4.0).powf(k as f64 / steps as f64));
    }
    g
}

/// Deterministic scan over `F = diag(σ₁, σ₂) R(β)` with `σ₁ ≥ |σ₂|`, `|F| ≤ radius`.
/// Both densities and `dist(·, K)` are invariant under `F ↦ RF`, so the scan covers all
/// gradients in the ball up to that rotation.
pub fn grid_scan(w: &WellSystem, radius: f64, angles: usize) -> RatioExtremes {
    let sig = sigma_grid(radius);
    let rots: Vec<Mat2> = (0..angles).map(|k| rotation(PI * k as f64 / angles as f64)).collect();
    sig.par_iter()
        .map(|&s1| {
            let mut ext = RatioExtremes::empty();
            let s2s = std::iter::once(0.0).chain(sig.iter().take_while(|&&s| s <= s1).flat_map(|&s| [s, -s]));
            for s2 in s2s {
                if s1 * s1 + s2 * s2 > radius * radius {
                    continue;
                }
                let d = Mat2::new(s1, 0.0, 0.0, s2);
                for r in &rots {
                    ext.add(affine_ratios(&(d * r), w));
                }
            }
            ext
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(RatioExtremes::empty(), RatioExtremes::merge)
}

/// Uniform samples in the ball `|F| ≤ radius` of `ℝ^{2×2}`, half of them in the inner
/// ball `|F| ≤ 4` where both wells lie.
pub fn random_scan(w: &WellSystem, radius: f64, samples: usize, seed: u64) -> RatioExtremes {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ext = RatioExtremes::empty();
    for i in 0..samples {
        let rad = if i % 2 == 0 { radius } else { 4.0f64.min(radius) };
        let g: [f64; 4] = std::array::from_fn(|_| {
            // Box-Muller
            let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        });
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = rad * rng.random::<f64>().powf(0.25) / norm;
        ext.add(affine_ratios(&Mat2::new(g[0] * scale, g[1] * scale, g[2] * scale, g[3] * scale), w));
    }
    ext
}

// ---------------------------------------------------------------------------------------
// per-configuration measurements

/// Extremes of every inequality ratio over one configuration.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ConfigMeasure {
    /// `min h̃ / dist²(∇u, K)` over nodes with a gradient off `K`.
    pub lower_min: f64,
    pub truncated_min: f64,
    /// `max h / dist²`; infinite when `h > 0` at a node whose gradient lies on `K`.
    pub truncated_max: f64,
    pub second_diff_max: f64,
    pub coarea_max: f64,
    pub nodes: usize,
}

/// Node-wise violations of the density bounds for given thresholds.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct NodeViolations {
    pub lower: usize,
    pub two_sided_lower: usize,
    pub two_sided_upper: usize,
}

/// Density ratios use `∇u^{ij}` from the node's own difference quotients (forward, or
/// backward where the forward neighbor is missing).
pub fn measure_configuration(u: &Deformation, w: &WellSystem, t: Option<&Thresholds>) -> Result<(ConfigMeasure, NodeViolations)> {
    let tilde = energy_report(u, w, &Density::Tilde)?;
    let trunc = energy_report(u, w, &Density::Truncated)?;
    let mut m = ConfigMeasure { lower_min: f64::INFINITY, truncated_min: f64::INFINITY, ..Default::default() };
    let mut v = NodeViolations::default();
    for k in 0..tilde.site_density.len() {
        // the gradient built from the quotients the density sees
        let Some((f, _, _)) = node_stencil(u, k).gradient() else { continue };
        let d2 = w.dist_to_k(&f).powi(2);
        let (ht, h) = (tilde.site_density[k], trunc.site_density[k]);
        m.nodes += 1;
        if d2 > 0.0 {
            m.lower_min = m.lower_min.min(ht / d2);
            m.truncated_min = m.truncated_min.min(h / d2);
            m.truncated_max = m.truncated_max.max(h / d2);
        } else if h > 0.0 {
            m.truncated_max = f64::INFINITY;
        }
        if let Some(t) = t {
            v.lower += (ht < t.lower_bound * d2) as usize;
            v.two_sided_lower += (h < t.two_sided_lower * d2) as usize;
            v.two_sided_upper += (h > t.two_sided_upper * d2) as usize;
        }
    }
    m.second_diff_max = second_diff_check(u, &trunc)?.max_ratio;
    let dom = u.domain().clone();
    let dist: Vec<f64> = tilde.dist_to_wells.iter().map(|d| d.unwrap_or(0.0)).collect();
    for values in [trunc.site_density.clone(), dist] {
        let rec = coarea_check(&ScalarLatticeField::new(dom.clone(), values), None)?;
        m.coarea_max = m.coarea_max.max(rec.ratio);
    }
    Ok((m, v))
}

// ---------------------------------------------------------------------------------------
// fixtures

/// Raw calibrated constants, before the safety factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// `min h̃ / dist²` over the affine scan.
    pub lower_bound: f64,
    /// `min h / dist²` over the affine scan (truncated density).
    pub two_sided_lower: f64,
    /// `max h / dist²` over the affine scan.
    pub two_sided_upper: f64,
    /// Largest second-difference ratio over the calibration suite.
    pub second_diff: f64,
    /// Largest coarea ratio over the calibration suite.
    pub coarea: f64,
    /// Smallest `H_n / H_n^s` over the spin calibration suite.
    pub spin_ratio: f64,
    /// Largest `perimeter / (n H_n)` over the spin calibration suite.
    pub perimeter: f64,
    /// Largest `q₉₉(|ratio - 1|) / μ` over the needle calibration suite.
    pub rigidity: f64,
}

/// Constants with the safety factors applied; these are what the checks compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lower_bound: f64,
    pub two_sided_lower: f64,
    pub two_sided_upper: f64,
    pub second_diff: f64,
    pub coarea: f64,
    pub spin_ratio: f64,
    pub perimeter: f64,
    pub rigidity: f64,
}

impl Constants {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            lower_bound: SAFETY_LOWER * self.lower_bound,
            two_sided_lower: SAFETY_LOWER * self.two_sided_lower,
            two_sided_upper: SAFETY_UPPER * self.two_sided_upper,
            second_diff: SAFETY_UPPER * self.second_diff,
            coarea: SAFETY_UPPER * self.coarea,
            spin_ratio: SAFETY_LOWER * self.spin_ratio,
            perimeter: SAFETY_UPPER * self.perimeter,
            rigidity: SAFETY_UPPER * self.rigidity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub seed: u64,
    /// `|F| ≤ grid_radius`, `30(c̄ + 1)`.
    pub grid_radius: f64,
    pub grid_angles: usize,
    pub grid_points: usize,
    pub random_samples: usize,
    pub suite_size: usize,
    pub spin_suite_size: usize,
    pub rigidity_samples: usize,
    pub safety_lower: f64,
    pub safety_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub version: u32,
    pub a: f64,
    pub constants: Constants,
    pub thresholds: Thresholds,
    pub calibration: CalibrationSettings,
    /// Layer energies on the unit strip, when estimated.
    pub layers: Option<LayerTable>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture> {
        let text = std::fs::read_to_string(path)?;
        let fx: Fixture = serde_json::from_str(&text)?;
        if fx.version != FIXTURE_VERSION {
            return Err(Error::Config(format!("fixture version {} (expected {FIXTURE_VERSION})", fx.version)));
        }
        if fx.thresholds != fx.constants.thresholds() {
            return Err(Error::Config("fixture thresholds do not match its constants".into()));
        }
        Ok(fx)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// The fixture shipped with the crate.
    pub fn bundled() -> Fixture {
        serde_json::from_str(include_str!("../fixtures/default.json")).expect("bundled fixture parses")
    }
}

#[derive(Clone, Debug)]
pub struct CalibrateOptions {
    pub a: f64,
    pub seed: u64,
    pub grid_angles: usize,
    pub random_samples: usize,
    pub suite_size: usize,
    pub spin_suite_size: usize,
    pub rigidity_samples: usize,
    /// Estimate the layer table as well (minutes).
    pub layers: Option<LayerCalibration>,
}

#[derive(Clone, Debug)]
pub struct LayerCalibration {
    pub lambda: f64,
    pub n_list: Vec<u32>,
    pub options: crate::layers::LayerOptions,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            a: SQRT_2,
            seed: DEFAULT_SEED,
            grid_angles: 90,
            random_samples: 100_000,
            suite_size: 200,
            spin_suite_size: 200,
            rigidity_samples: 2000,
            layers: None,
        }
    }
}

/// Resolution of the spin suites.
pub const SPIN_N: u32 = 16;

/// Laminate constructions plus `size` random configurations, all at `n = 16`.
pub fn spin_suite(w: &WellSystem, seed: u64, size: usize) -> Result<Vec<(String, Deformation)>> {
    let mut out = laminate_constructions(SPIN_N, w)?;
    for i in 0..size as u64 {
        out.push((format!("random_{i}"), suite_state_at(seed, i, SPIN_N, w)?.1));
    }
    Ok(out)
}

/// Runs every calibration: the affine ratio scans, the inequality suite, the spin suite
/// and the needle suite, each seeded from `opts.seed`.
pub fn calibrate(opts: &CalibrateOptions) -> Result<Fixture> {
    let w = WellSystem::new(opts.a)?;
    let radius = 30.0 * (w.cbar + 1.0);
    let grid = grid_scan(&w, radius, opts.grid_angles);
    let scan = grid.merge(random_scan(&w, radius, opts.random_samples, opts.seed));

    let measures: Vec<ConfigMeasure> = (0..opts.suite_size as u64)
        .into_par_iter()
        .map(|i| Ok(measure_configuration(&suite_state(opts.seed, i, &w)?.1, &w, None)?.0))
        .collect::<Result<_>>()?;
    let second_diff = measures.iter().map(|m| m.second_diff_max).fold(0.0, f64::max);
    let coarea = measures.iter().map(|m| m.coarea_max).fold(0.0, f64::max);

    let spins: Vec<_> = spin_suite(&w, opts.seed, opts.spin_suite_size)?
        .par_iter()
        .map(|(_, u)| comparison_check(u, &w))
        .collect::<Result<_>>()?;
    let spin_ratio = spins.iter().filter_map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let perimeter = spins
        .iter()
        .filter(|r| r.mismatch_edges > 0)
        .map(|r| r.perimeter / (SPIN_N as f64 * r.energy))
        .fold(0.0, f64::max);

    let mut rigidity: f64 = 0.0;
    for (k, needle) in calibration_needles().iter().enumerate() {
        let u = rigidity_configuration(RIGIDITY_N, &w, needle)?;
        let rec = rigidity_sample(&u, &w, &rigidity_params(opts.rigidity_samples, opts.seed.wrapping_add(k as u64)))?;
        if rec.mu > 0.0 {
            rigidity = rigidity.max(rec.deviation_quantile(0.99) / rec.mu);
        }
    }

    let constants = Constants {
        lower_bound: scan.tilde_min,
        two_sided_lower: scan.truncated_min,
        two_sided_upper: scan.truncated_max,
        second_diff,
        coarea,
        spin_ratio,
        perimeter,
        rigidity,
    };
    let layers = match &opts.layers {
        Some(l) => Some(LayerTable::estimate(opts.a, l.lambda, &l.n_list, &l.options)?),
        None => None,
    };
    Ok(Fixture {
        version: FIXTURE_VERSION,
        a: opts.a,
        thresholds: constants.thresholds(),
        constants,
        calibration: CalibrationSettings {
            seed: opts.seed,
            grid_radius: radius,
            grid_angles: opts.grid_angles,
            grid_points: grid.samples,
            random_samples: opts.random_samples,
            suite_size: opts.suite_size,
            spin_suite_size: opts.spin_suite_size,
            rigidity_samples: opts.rigidity_samples,
            safety_lower: SAFETY_LOWER,
            safety_upper: SAFETY_UPPER,
        },
        layers,
    })
}

// ---------------------------------------------------------------------------------------
// gradient check

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GradientCheck {
    pub max_abs_error: f64,
    /// `max |∂H|` over the checked components.
    pub scale: f64,
    /// `max_abs_error / scale`.
    pub relative: f64,
    pub checked: usize,
    /// Components next to a kink of `|·|`, where central differences are meaningless.
    pub skipped: usize,
}

/// Relative tolerance of a stencil inner product treated as a kink.
const KINK_TOL: f64 = 1e-4;

fn near_kink(s: &Stencil) -> bool {
    [(0, 2), (0, 3), (1, 2), (1, 3)].iter().any(|&(p, q)| {
        s.present[p] && s.present[q] && {
            let (a, b) = (s.entries[p], s.entries[q]);
            a.dot(&b).abs() <= KINK_TOL * a.norm() * b.norm()
        }
    })
}

/// Central differences of `H_n` in every free node coordinate against the analytic
/// gradient. Moving one node changes only its own stencil and those of its neighbors,
/// so the difference quotient is formed from that local energy.
pub fn gradient_fd_check(u: &Deformation, w: &WellSystem, density: &Density, step: f64) -> Result<GradientCheck> {
    let g = energy_gradient(u, w, density)?;
    let dom = u.domain().clone();
    let inv = 1.0 / (dom.nf() * dom.nf());
    let mut work = u.clone();
    let mut out = GradientCheck { max_abs_error: 0.0, scale: 0.0, relative: 0.0, checked: 0, skipped: 0 };
    // real nodes whose stencil reads node k
    let mut readers: Vec<Vec<usize>> = vec![Vec::new(); dom.num_nodes()];
    for q in 0..dom.num_real() {
        readers[q].push(q);
        for &p in dom.neighbors()[q].iter().filter(|&&p| p != NONE) {
            readers[p as usize].push(q);
        }
    }
    for (k, affected) in readers.iter().enumerate() {
        if u.constraints()[k] != crate::lattice::Constraint::Free {
            continue;
        }
        if affected.iter().any(|&q| near_kink(&node_stencil(u, q))) {
            out.skipped += 2;
            continue;
        }
        let local = |v: &Deformation| affected.iter().map(|&q| density.value(&node_stencil(v, q), w) * inv).sum::<f64>();
        let p = u.position(k);
        for axis in 0..2 {
            let mut e = Vec2::zeros();
            e[axis] = step;
            work.set_free_position(k, p + e);
            let up = local(&work);
            work.set_free_position(k, p - e);
            let down = local(&work);
            work.set_free_position(k, p);
            let fd = (up - down) / (2.0 * step);
            out.max_abs_error = out.max_abs_error.max((fd - g.nodes[k][axis]).abs());
            out.scale = out.scale.max(g.nodes[k][axis].abs());
            out.checked += 1;
        }
    }
    out.relative = if out.scale > 0.0 { out.max_abs_error / out.scale } else { out.max_abs_error };
    Ok(out)
}

/// Random configurations away from the wells (generic, large and boundary-data kinds).
pub fn gradient_state(seed: u64, index: u64, n: u32, w: &WellSystem) -> Result<Deformation> {
    let kind = [SuiteKind::Generic, SuiteKind::Large, SuiteKind::Boundary][index as usize % 3];
    suite_state_of_kind(seed, index, n, kind, w)
}

// ---------------------------------------------------------------------------------------
// verification

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub evaluated: usize,
    pub violations: usize,
    /// Worst observed value of the checked quantity.
    pub extreme: f64,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, evaluated: usize, violations: usize, extreme: f64, threshold: Option<f64>, detail: String) -> Self {
        CheckOutcome { name: name.into(), passed: violations == 0, evaluated, violations, extreme, threshold, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub fixture_version: u32,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Suites are drawn from `seed`, salted so they never coincide with the calibration suites.
    pub seed: u64,
    pub suite_size: usize,
    pub spin_suite_size: usize,
    pub gradient_configs: usize,
    pub gradient_n: u32,
    pub rigidity_n: u32,
    pub rigidity_samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: DEFAULT_SEED,
            suite_size: 1000,
            spin_suite_size: 200,
            gradient_configs: 100,
            gradient_n: 12,
            rigidity_n: RIGIDITY_N,
            rigidity_samples: 10_000,
        }
    }
}

pub fn verification_seed(seed: u64) -> u64 {
    seed ^ VERIFY_SALT
}

/// Exact zero energy on rotated wells and the rank-one structure of `U0 - QU1`.
pub fn wells_checks(a: f64) -> Result<Vec<CheckOutcome>> {
    let w = WellSystem::new(a)?;
    let dom = Arc::new(LatticeDomain::standard(32)?);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    let mut count = 0;
    for density in [Density::Tilde, Density::Truncated] {
        for (f, b) in [(w.u0, Vec2::zeros()), (rotation(0.9) * w.u1, Vec2::new(0.4, -1.3)), (rotation(-2.0) * w.u0, Vec2::new(3.0, 1.0))] {
            let e = crate::energy::energy(&Deformation::affine(dom.clone(), f, b), &w, &density)?;
            worst = worst.max(e);
            bad += (e > 1e-12) as usize;
            count += 1;
        }
    }
    let zero = CheckOutcome::new("wells_zero_energy", count, bad, worst, Some(1e-12), "H_n on rotated wells, n = 32".into());

    let m = w.u0 - w.q * w.u1;
    let sv = crate::linalg::smallest_singular_value(&m);
    let defect = w.rank_one_defect(&w.u0, &(w.q * w.u1), Sign::Plus);
    let mut err = sv.max(defect);
    if (a - SQRT_2).abs() < 1e-15 {
        err = err.max((w.q - Mat2::new(0.8, -0.6, 0.6, 0.8)).abs().max());
    }
    let tol = 1e-10;
    let rank = CheckOutcome::new(
        "rank_one",
        1,
        (err > tol) as usize,
        err,
        Some(tol),
        format!("σ_min(U0 - QU1) = {sv:e}, tangent defect {defect:e}"),
    );
    Ok(vec![zero, rank])
}

/// The four density and field inequalities over the randomized suite.
pub fn inequality_checks(fx: &Fixture, seed: u64, size: usize) -> Result<Vec<CheckOutcome>> {
    let w = WellSystem::new(fx.a)?;
    let t = &fx.thresholds;
    let results: Vec<(ConfigMeasure, NodeViolations)> = (0..size as u64)
        .into_par_iter()
        .map(|i| measure_configuration(&suite_state(seed, i, &w)?.1, &w, Some(t)))
        .collect::<Result<_>>()?;
    let nodes: usize = results.iter().map(|r| r.0.nodes).sum();
    let sum = |f: fn(&NodeViolations) -> usize| results.iter().map(|r| f(&r.1)).sum::<usize>();
    let min = |f: fn(&ConfigMeasure) -> f64| results.iter().map(|r| f(&r.0)).fold(f64::INFINITY, f64::min);
    let max = |f: fn(&ConfigMeasure) -> f64| results.iter().map(|r| f(&r.0)).fold(0.0, f64::max);
    let over = |f: fn(&ConfigMeasure) -> f64, thr: f64| results.iter().filter(|r| !(f(&r.0) <= thr)).count();
    let upper_configs = results.iter().filter(|r| r.1.two_sided_upper > 0).count();
    Ok(vec![
        CheckOutcome::new(
            "lower_bound",
            nodes,
            sum(|v| v.lower),
            min(|m| m.lower_min),
            Some(t.lower_bound),
            "h̃ ≥ c dist²(∇u, K) per node".into(),
        ),
        CheckOutcome::new(
            "two_sided_lower",
            nodes,
            sum(|v| v.two_sided_lower),
            min(|m| m.truncated_min),
            Some(t.two_sided_lower),
            "h ≥ C₁ dist²(∇u, K) per node".into(),
        ),
        CheckOutcome::new(
            "two_sided_upper",
            nodes,
            sum(|v| v.two_sided_upper),
            max(|m| m.truncated_max),
            Some(t.two_sided_upper),
            format!("h ≤ C₂ dist²(∇u, K) per node; {upper_configs} of {size} configurations affected"),
        ),
        CheckOutcome::new(
            "second_diff",
            size,
            over(|m| m.second_diff_max, t.second_diff),
            max(|m| m.second_diff_max),
            Some(t.second_diff),
            "second differences ≤ C n √h".into(),
        ),
        CheckOutcome::new(
            "coarea",
            size,
            over(|m| m.coarea_max, t.coarea),
            max(|m| m.coarea_max),
            Some(t.coarea),
            "∫ Per({f ≥ t}) dt ≤ C Σ n⁻² |∇_n f| for f = h and f = dist".into(),
        ),
    ])
}

/// Per-edge density exceedance, the comparison ratio and the perimeter bound.
pub fn spin_checks(fx: &Fixture, seed: u64, size: usize) -> Result<Vec<CheckOutcome>> {
    let w = WellSystem::new(fx.a)?;
    let t = &fx.thresholds;
    let recs: Vec<_> = spin_suite(&w, seed, size)?.par_iter().map(|(_, u)| comparison_check(u, &w)).collect::<Result<_>>()?;
    let edges: usize = recs.iter().map(|r| r.mismatch_edges).sum();
    let violations: usize = recs.iter().map(|r| r.violations.len()).sum();
    let min_minus = recs.iter().filter_map(|r| r.min_minus_density).fold(f64::INFINITY, f64::min);
    let ratios: Vec<f64> = recs.iter().filter_map(|r| r.ratio).collect();
    let perims: Vec<f64> = recs.iter().filter(|r| r.mismatch_edges > 0).map(|r| r.perimeter / (SPIN_N as f64 * r.energy)).collect();
    Ok(vec![
        CheckOutcome::new(
            "spin_edges",
            edges,
            violations,
            min_minus,
            Some(w.cbar / 100.0),
            format!("density at the -1 endpoint of every mismatch edge over {} configurations", recs.len()),
        ),
        CheckOutcome::new(
            "spin_ratio",
            ratios.len(),
            ratios.iter().filter(|&&r| r < t.spin_ratio).count(),
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            Some(t.spin_ratio),
            "H_n ≥ C H_n^s".into(),
        ),
        CheckOutcome::new(
            "perimeter",
            perims.len(),
            perims.iter().filter(|&&p| p > t.perimeter).count(),
            perims.iter().copied().fold(0.0, f64::max),
            Some(t.perimeter),
            "mismatch length ≤ C n H_n".into(),
        ),
    ])
}

/// Analytic against central-difference gradients of the truncated density.
pub fn gradient_checks(seed: u64, configs: usize, n: u32) -> Result<CheckOutcome> {
    let w = WellSystem::new(SQRT_2)?;
    let tol = 1e-6;
    let checks: Vec<GradientCheck> = (0..configs as u64)
        .into_par_iter()
        .map(|i| gradient_fd_check(&gradient_state(seed, i, n, &w)?, &w, &Density::Truncated, 1e-6))
        .collect::<Result<_>>()?;
    let worst = checks.iter().map(|c| c.relative).fold(0.0, f64::max);
    let skipped: usize = checks.iter().map(|c| c.skipped).sum();
    let checked: usize = checks.iter().map(|c| c.checked).sum();
    Ok(CheckOutcome::new(
        "gradient",
        configs,
        checks.iter().filter(|c| !(c.relative <= tol)).count(),
        worst,
        Some(tol),
        format!("{checked} components checked, {skipped} next to a kink skipped, n = {n}"),
    ))
}

/// Figure values of the bad-set recursion and closed form against iteration.
pub fn recursion_checks() -> Result<Vec<CheckOutcome>> {
    let quarter = recursion_sequence(0.25, 10_000_000)?;
    let e1 = (quarter.last() - 0.5).abs();
    let tenth = recursion_sequence(0.1, 100_000)?;
    let e2 = tenth.limit.map_or(f64::INFINITY, |x| (x - 0.112702).abs());
    let div = recursion_sequence(0.26, 100_000)?;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for k in 1..=100 {
        let theta = 0.25 * k as f64 / 101.0;
        let it = recursion_sequence(theta, 10_000_000)?;
        let cf = recursion_limit(theta)?;
        let err = match (it.limit, cf) {
            (Some(x), Some(y)) => (x - y).abs(),
            _ => f64::INFINITY,
        };
        worst = worst.max(err);
        bad += (err > 1e-10) as usize;
    }
    Ok(vec![
        CheckOutcome::new("recursion_quarter", 1, (e1 > 1e-6) as usize, e1, Some(1e-6), "|x_m - 1/2| at θ = 1/4, m = 10⁷".into()),
        CheckOutcome::new("recursion_tenth", 1, (e2 > 1e-5) as usize, e2, Some(1e-5), "|x̄ - 0.112702| at θ = 0.1".into()),
        CheckOutcome::new(
            "recursion_divergence",
            1,
            (div.status != RecursionStatus::Diverged) as usize,
            div.last(),
            None,
            format!("θ = 0.26 status {:?}", div.status),
        ),
        CheckOutcome::new("recursion_closed_form", 100, bad, worst, Some(1e-10), "closed form against iteration".into()),
    ])
}

/// Fraction of sampled pairs inside `[1 - cμ, 1 + cμ]` for the reference needle.
pub fn rigidity_check(fx: &Fixture, n: u32, samples: usize, seed: u64) -> Result<CheckOutcome> {
    let w = WellSystem::new(fx.a)?;
    let u = rigidity_configuration(n, &w, &reference_needle())?;
    let rec = rigidity_sample(&u, &w, &rigidity_params(samples, seed))?;
    let frac = rec.fraction_within(fx.thresholds.rigidity);
    Ok(CheckOutcome::new(
        "rigidity",
        samples,
        (frac < 0.9) as usize,
        frac,
        Some(0.9),
        format!("μ = {:.3e}, η = {:.3e}, c = {:.3}", rec.mu, rec.eta, fx.thresholds.rigidity),
    ))
}

/// Consistency of the stored layer table with the assembly rule.
pub fn layer_checks(fx: &Fixture) -> Result<Vec<CheckOutcome>> {
    let Some(table) = &fx.layers else { return Ok(Vec::new()) };
    let finite = table.entries.iter().filter(|e| !(e.value.is_finite() && e.value >= 0.0)).count();
    let asm = assemble_limit_energy(&[WellLabel::U0, WellLabel::QU1], table.lambda, table)?;
    let hand: f64 = asm.terms.iter().map(|t| t.value).sum();
    let err = (asm.total - hand).abs();
    Ok(vec![
        CheckOutcome::new("layer_entries", table.entries.len(), finite, 0.0, None, "finite non-negative layer energies".into()),
        CheckOutcome::new("layer_assembly", 1, (err > 1e-12) as usize, err, Some(1e-12), "B+ + C + B- equals the term sum".into()),
    ])
}

/// Every suite against the fixture.
pub fn verify(fx: &Fixture, opts: &VerifyOptions) -> Result<VerifyReport> {
    let seed = verification_seed(opts.seed);
    let mut checks = wells_checks(fx.a)?;
    checks.extend(recursion_checks()?);
    checks.extend(inequality_checks(fx, seed, opts.suite_size)?);
    checks.extend(spin_checks(fx, seed, opts.spin_suite_size)?);
    checks.push(gradient_checks(seed, opts.gradient_configs, opts.gradient_n)?);
    checks.push(rigidity_check(fx, opts.rigidity_n, opts.rigidity_samples, seed)?);
    checks.extend(layer_checks(fx)?);
    Ok(VerifyReport { fixture_version: fx.version, seed: opts.seed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> WellSystem {
        WellSystem::new(SQRT_2).unwrap()
    }

    #[test]
    fn suite_states_are_reproducible() {
        let w = w();
        for i in 0..10 {
            let (k1, a) = suite_state(7, i, &w).unwrap();
            let (k2, b) = suite_state(7, i, &w).unwrap();
            assert_eq!(k1, k2);
            assert_eq!(a.positions(), b.positions());
            assert!(a.is_admissible());
        }
        let (_, a) = suite_state(7, 0, &w).unwrap();
        let (_, b) = suite_state(8, 0, &w).unwrap();
        assert_ne!(a.positions(), b.positions());
    }

    #[test]
    fn suite_cycles_through_kinds_and_sizes() {
        let w = w();
        let kinds: Vec<SuiteKind> = (0..10).map(|i| suite_state(1, i, &w).unwrap().0).collect();
        for k in [SuiteKind::Generic, SuiteKind::NearWell, SuiteKind::Laminate, SuiteKind::Large, SuiteKind::Boundary] {
            assert!(kinds.contains(&k));
        }
        assert_eq!(suite_state(1, 0, &w).unwrap().1.domain().n(), 8);
        assert_eq!(suite_state(1, 1, &w).unwrap().1.domain().n(), 16);
    }

    #[test]
    fn thresholds_apply_the_safety_factors() {
        let fx = Fixture::bundled();
        let c = &fx.constants;
        let t = c.thresholds();
        assert_eq!(t.lower_bound, SAFETY_LOWER * c.lower_bound);
        assert_eq!(t.two_sided_upper, SAFETY_UPPER * c.two_sided_upper);
        assert_eq!(t.coarea, SAFETY_UPPER * c.coarea);
        assert_eq!(t.spin_ratio, SAFETY_LOWER * c.spin_ratio);
        assert_eq!(t, fx.thresholds);
    }

    #[test]
    fn bundled_fixture_is_complete() {
        let fx = Fixture::bundled();
        assert_eq!(fx.version, FIXTURE_VERSION);
        assert_eq!(fx.a, SQRT_2);
        assert_eq!(fx.calibration.seed, DEFAULT_SEED);
        let c = &fx.constants;
        for v in [c.lower_bound, c.two_sided_lower, c.second_diff, c.coarea, c.spin_ratio, c.perimeter, c.rigidity] {
            assert!(v.is_finite() && v > 0.0, "{c:?}");
        }
        let layers = fx.layers.as_ref().expect("layer table");
        assert_eq!(layers.entries.len(), 8);
        assert!(layers.entries.iter().all(|e| e.value.is_finite() && e.value >= 0.0));
    }

    #[test]
    fn fixture_round_trips_and_rejects_tampering() {
        let fx = Fixture::bundled();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        std::fs::write(&p, fx.to_json().unwrap()).unwrap();
        assert_eq!(Fixture::load(&p).unwrap(), fx);

        let mut bad = fx.clone();
        bad.version += 1;
        std::fs::write(&p, bad.to_json().unwrap()).unwrap();
        assert_eq!(Fixture::load(&p).unwrap_err().exit_code(), 2);

        let mut bad = fx.clone();
        bad.thresholds.coarea *= 10.0;
        std::fs::write(&p, bad.to_json().unwrap()).unwrap();
        assert!(Fixture::load(&p).unwrap_err().to_string().contains("thresholds"));
    }

    #[test]
    fn calibration_is_deterministic_and_matches_the_bundle() {
        // the bundled constants must be reproducible from its recorded settings
        let fx = Fixture::bundled();
        let s = &fx.calibration;
        let opts = CalibrateOptions {
            a: fx.a,
            seed: s.seed,
            grid_angles: s.grid_angles,
            random_samples: s.random_samples,
            suite_size: s.suite_size,
            spin_suite_size: s.spin_suite_size,
            rigidity_samples: s.rigidity_samples,
            layers: None,
        };
        let again = calibrate(&opts).unwrap();
        assert_eq!(again.constants, fx.constants);
        assert_eq!(again.thresholds, fx.thresholds);
    }

    #[test]
    fn affine_ratios_are_positive_off_the_wells() {
        let w = w();
        let (tilde, trunc) = affine_ratios(&(rotation(0.3) * w.u0 * 1.1), &w).unwrap();
        assert!(tilde > 0.0 && trunc > 0.0);
    }

    #[test]
    fn gradient_check_passes_on_a_generic_state() {
        let w = w();
        let u = gradient_state(3, 0, 8, &w).unwrap();
        let g = gradient_fd_check(&u, &w, &Density::Truncated, 1e-6).unwrap();
        assert!(g.relative < 1e-6, "{g:?}");
        assert!(g.checked > 0);
    }

    #[test]
    fn recursion_checks_pass() {
        for c in recursion_checks().unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn verification_seed_differs_from_calibration() {
        assert_ne!(verification_seed(DEFAULT_SEED), DEFAULT_SEED);
    }
}
