//! Acceptance suite: thirteen criteria, each a list of numeric checks of the
//! form `value < threshold`.

use crate::run::StageTiming;
use crate::trial_rng;
use lattice_spectra::bands::{catalog_spectrum, spectrum_bands};
use lattice_spectra::charpoly::{
    char_poly, char_poly_closed, eigen_residual, kagome_flat_vector, subdivision_flat_vectors, verify_identity,
    IdentityKind, IdentityTrial,
};
use lattice_spectra::embedded::{
    construct_compact_eigenvector, construct_graphite_embedded, construct_ladder_embedded, Construction,
    EmbeddedEigenpair, Sign,
};
use lattice_spectra::besov::DecayClass;
use lattice_spectra::fermi::{density_of_states, dos_total_mass, fermi_surface};
use lattice_spectra::green::{green_eps, green_offspectrum, green_pv, EpsOptions, GreenTable, PvOptions, Side};
use lattice_spectra::lattice::{build_lattice, realspace_window, LatticeName, PeriodicLatticeSpec};
use lattice_spectra::linalg::C64;
use lattice_spectra::perturbation::{
    assemble, lippmann_schwinger, perturbed_resolvent, PerturbationSpec, PerturbedOperator, PotentialEntry, SiteRef,
    Vertex,
};
use lattice_spectra::quadrature::OffsetBox;
use lattice_spectra::scattering::{
    channel_basis, helmholtz_in_out, rank_one_coupling, s_matrix, ChannelBasis, SMatrix, HELMHOLTZ_MARGIN,
};
use lattice_spectra::spectral::{f0_apply, LatticeVector};
use lattice_spectra::thresholds::{catalog, thresholds, ThresholdMode};
use lattice_spectra::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

/// Knobs for deliberate degradation of the suite.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiplier of the surface term of every principal-value Green table.
    pub surface_sign: f64,
    /// Factor applied to every channel-mesh resolution.
    pub resolution_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: crate::config::DEFAULT_SEED, surface_sign: 1.0, resolution_scale: 1.0 }
    }
}

impl VerifyOptions {
    fn pv(&self, dim: usize) -> PvOptions {
        PvOptions { surface_sign: self.surface_sign, ..PvOptions::for_dim(dim) }
    }

    fn resolution(&self, n: usize) -> usize {
        ((n as f64 * self.resolution_scale).round() as usize).max(8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn below(label: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { label: label.into(), value, threshold, passed: value < threshold }
    }

    /// Boolean condition recorded as `0 < 0.5` (holds) or `1 < 0.5` (fails).
    pub fn flag(label: impl Into<String>, holds: bool) -> Self {
        Self::below(label, if holds { 0.0 } else { 1.0 }, 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Value and threshold of the check closest to failing.
    pub metric: f64,
    pub threshold: f64,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn check(&self, label: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub results: Vec<CriterionResult>,
    pub passed: bool,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

pub const CRITERIA: [&str; 13] = [
    "spectrum intervals",
    "characteristic polynomial closed forms",
    "graph-operation identities",
    "flat bands and point spectrum",
    "threshold sets",
    "limiting absorption cross-method",
    "optical theorem",
    "Parseval identity",
    "perturbed resolvent routes and bound state",
    "embedded eigenvalue constructions",
    "S-matrix unitarity and rank-one oracle",
    "Helmholtz in/out",
    "density of states",
];

/// Wall-time budgets in seconds for the criteria that state one.
pub const BUDGETS: [(usize, f64); 3] = [(1, 30.0), (6, 60.0), (11, 120.0)];
/// Wall-time budget in seconds for the whole suite.
pub const TOTAL_BUDGET: f64 = 600.0;

pub fn budget(id: usize) -> Option<f64> {
    BUDGETS.iter().find(|(k, _)| *k == id).map(|(_, b)| *b)
}

#[derive(Default)]
struct Findings {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Findings {
    fn below(&mut self, label: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(Check::below(label, value, threshold));
    }

    fn flag(&mut self, label: impl Into<String>, holds: bool) {
        self.checks.push(Check::flag(label, holds));
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

/// Run the listed criteria in order.
pub fn verify_all(opts: &VerifyOptions, ids: &[usize]) -> VerifySummary {
    let mut results = Vec::new();
    let mut timings = Vec::new();
    for &id in ids {
        let t = Instant::now();
        results.push(run_criterion(id, opts));
        timings.push(StageTiming { stage: format!("criterion {id}"), seconds: t.elapsed().as_secs_f64() });
    }
    let passed = results.iter().all(|r| r.passed);
    VerifySummary { results, passed, timings }
}

/// One criterion; library errors are recorded as a failure of the criterion.
pub fn run_criterion(id: usize, opts: &VerifyOptions) -> CriterionResult {
    assert!((1..=13).contains(&id), "criterion {id} does not exist");
    let mut f = Findings::default();
    let outcome = match id {
        1 => spectrum_intervals(&mut f),
        2 => char_poly_forms(opts, &mut f),
        3 => identities(opts, &mut f),
        4 => flat_bands(opts, &mut f),
        5 => threshold_sets(&mut f),
        6 => cross_method(opts, &mut f),
        7 => optical_theorem(opts, &mut f),
        8 => parseval(opts, &mut f),
        9 => resolvent_routes(opts, &mut f),
        10 => embedded(&mut f),
        11 => s_matrix_checks(opts, &mut f),
        12 => helmholtz(opts, &mut f),
        _ => dos(&mut f),
    };
    let error = outcome.err().map(|e| e.to_string());
    let worst = f
        .checks
        .iter()
        .max_by(|a, b| severity(a).total_cmp(&severity(b)))
        .map_or((f64::NAN, f64::NAN), |c| (c.value, c.threshold));
    CriterionResult {
        id,
        name: CRITERIA[id - 1],
        passed: error.is_none() && !f.checks.is_empty() && f.checks.iter().all(|c| c.passed),
        metric: worst.0,
        threshold: worst.1,
        checks: f.checks,
        notes: f.notes,
        error,
    }
}

fn severity(c: &Check) -> f64 {
    if c.passed {
        c.value / c.threshold
    } else {
        f64::INFINITY
    }
}

fn lattice(name: LatticeName, dim: usize) -> Result<PeriodicLatticeSpec> {
    build_lattice(name, dim)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

fn torus_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| uniform(rng, 0.0, 2.0 * PI)).collect()
}

/// Random vector on cell 0 of the sites `|n|_∞ <= radius`, each site kept
/// with probability 1/2 (the origin always).
fn random_source(rng: &mut ChaCha8Rng, d: usize, radius: i64) -> LatticeVector {
    let sites = OffsetBox { d, radius }.offsets();
    LatticeVector::from_entries(sites.into_iter().filter_map(|n| {
        let keep = n.iter().all(|&k| k == 0) || rng.gen_bool(0.5);
        let x = C64::new(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        keep.then(|| (Vertex::site(0, &n), x))
    }))
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let one = |x: &[f64], y: &[f64]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one(a, b).max(one(b, a))
}

fn point_to_intervals(p: f64, set: &[(f64, f64)]) -> f64 {
    set.iter().map(|&(lo, hi)| if p < lo { lo - p } else if p > hi { p - hi } else { 0.0 }).fold(f64::INFINITY, f64::min)
}

/// Hausdorff distance between finite unions of closed intervals. The
/// distance from `a` to `b` peaks at an endpoint of `a` or at the midpoint
/// of a gap of `b`.
fn interval_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let directed = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        let gaps = b.windows(2).map(|w| 0.5 * (w[0].1 + w[1].0)).filter(|&m| point_to_intervals(m, a) == 0.0);
        a.iter().flat_map(|&(lo, hi)| [lo, hi]).chain(gaps).map(|p| point_to_intervals(p, b)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn spectrum_intervals(f: &mut Findings) -> Result<()> {
    let mut cases: Vec<(LatticeName, usize, usize)> = LatticeName::ALL.iter().map(|&n| (n, 2, 256)).collect();
    cases.extend([(LatticeName::Square, 3, 64), (LatticeName::Diamond, 3, 64)]);
    for (name, d, grid) in cases {
        let got = spectrum_bands(&lattice(name, d)?, grid).union();
        let want = catalog_spectrum(name);
        let defect = interval_distance(&got, &want);
        f.below(format!("{name} d={d} grid {grid}: Hausdorff distance to the catalog spectrum"), defect, 2e-3);
    }
    Ok(())
}

fn char_poly_forms(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let mut rng = trial_rng(opts.seed, 2);
    let mut cases: Vec<(LatticeName, usize)> = LatticeName::ALL.iter().map(|&n| (n, 2)).collect();
    cases.extend([(LatticeName::Square, 3), (LatticeName::Diamond, 3), (LatticeName::SubdivisionSquare, 3), (LatticeName::LadderSquare, 3)]);
    for (name, d) in cases {
        let spec = lattice(name, d)?;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = torus_point(&mut rng, d);
            let l = C64::new(uniform(&mut rng, -1.2, 1.2), uniform(&mut rng, -0.5, 0.5));
            worst = worst.max((char_poly(&spec, &x, l) - char_poly_closed(name, &x, l)).norm());
        }
        f.below(format!("{name} d={d}: |det - closed form|"), worst, 1e-12);
    }
    Ok(())
}

fn identities(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let mut rng = trial_rng(opts.seed, 3);
    let cases = [
        (IdentityKind::FactorizationBd, 2),
        (IdentityKind::FactorizationBd, 3),
        (IdentityKind::FactorizationBd, 4),
        (IdentityKind::LinegraphHexToKagome, 2),
        (IdentityKind::SubdivisionRelation, 2),
        (IdentityKind::SubdivisionRelation, 3),
        (IdentityKind::LadderRelation, 2),
        (IdentityKind::LadderRelation, 3),
    ];
    for (kind, d) in cases {
        let trials: Vec<IdentityTrial> = (0..100)
            .map(|_| IdentityTrial {
                z: (0..d).map(|_| C64::new(uniform(&mut rng, 0.0, 2.0 * PI), uniform(&mut rng, -0.5, 0.5))).collect(),
                lambda: uniform(&mut rng, -1.2, 1.2),
            })
            .collect();
        f.below(format!("{} d={d}", kind.as_str()), verify_identity(kind, d, &trials)?, 1e-12);
    }
    Ok(())
}

fn flat_bands(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let mut rng = trial_rng(opts.seed, 4);
    let kagome = lattice(LatticeName::Kagome, 2)?;
    let mut worst: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    for _ in 0..100 {
        let x = torus_point(&mut rng, 2);
        let v = kagome_flat_vector(&x);
        worst = worst.max(eigen_residual(&kagome, &x, &v, 0.5));
        smallest = smallest.min(v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt());
    }
    f.below("kagome v(x): |(H0(x) - 1/2) v|", worst, 1e-13);
    f.flag("kagome v(x) is nonzero at every sample", smallest > 1e-6);
    for d in [2, 3] {
        let sub = lattice(LatticeName::SubdivisionSquare, d)?;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = torus_point(&mut rng, d);
            for v in subdivision_flat_vectors(&x) {
                worst = worst.max(eigen_residual(&sub, &x, &v, 0.0));
            }
        }
        f.below(format!("subdivision d={d} v_j(x): |H0(x) v|"), worst, 1e-13);
    }
    for (name, want) in [(LatticeName::Kagome, 0.5), (LatticeName::SubdivisionSquare, 0.0)] {
        let flats = spectrum_bands(&lattice(name, 2)?, 64).flat_bands;
        f.flag(format!("{name}: point spectrum of the free operator is {{{want}}}"), flats.len() == 1 && (flats[0] - want).abs() < 1e-9);
        f.note(format!("{name} flat bands: {flats:?}"));
    }
    Ok(())
}

fn threshold_sets(f: &mut Findings) -> Result<()> {
    for name in [LatticeName::Square, LatticeName::Triangular, LatticeName::Hexagonal, LatticeName::Kagome] {
        let spec = lattice(name, 2)?;
        let set = thresholds(&spec, ThresholdMode::Numeric);
        let numeric = set.t0_numeric.clone().unwrap_or_default();
        f.below(format!("{name}: numeric critical values vs restricted catalog"), sup_distance(&numeric, &set.t0_restricted), 1e-6);
        let printed = catalog(name, 2);
        f.note(format!("{name}: T0 = {} ; T1 = {}", printed.t0_printed, printed.t1_printed));
    }
    Ok(())
}

/// Energies per lattice kept away from every threshold.
const CROSS_METHOD: [(LatticeName, [f64; 5]); 3] = [
    (LatticeName::Square, [-0.75, -0.3, 0.2, 0.35, 0.8]),
    (LatticeName::Hexagonal, [-0.8, -0.5, -0.15, 0.2, 0.6]),
    (LatticeName::Triangular, [-0.8, -0.5, -0.1, 0.2, 0.42]),
];

fn max_table_difference(a: &GreenTable, b: &GreenTable, radius: i64) -> f64 {
    OffsetBox { d: a.dim, radius }
        .offsets()
        .iter()
        .map(|n| a.get(n).expect("inside").sub(b.get(n).expect("inside")).max_abs())
        .fold(0.0, f64::max)
}

fn cross_method(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    for (name, energies) in CROSS_METHOD {
        let spec = lattice(name, 2)?;
        let mut worst: f64 = 0.0;
        for e in energies {
            let eps = green_eps(&spec, e, Side::Plus, 3, &EpsOptions::default())?;
            let pv = green_pv(&spec, e, Side::Plus, 3, &opts.pv(2))?;
            worst = worst.max(max_table_difference(&eps, &pv, 3));
        }
        f.below(format!("{name}: max |G_eps - G_pv| over |n| <= 3"), worst, 1e-4);
    }
    Ok(())
}

const OPTICAL_ENERGIES: [f64; 4] = [-0.6, -0.3, 0.3, 0.6];
const SOURCE_RADIUS: i64 = 2;

fn sources(opts: &VerifyOptions) -> Vec<LatticeVector> {
    let mut rng = trial_rng(opts.seed, 7);
    (0..10).map(|_| random_source(&mut rng, 2, SOURCE_RADIUS)).collect()
}

fn optical_theorem(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let spec = lattice(LatticeName::Square, 2)?;
    let fs = sources(opts);
    for e in OPTICAL_ENERGIES {
        let g = green_pv(&spec, e, Side::Plus, 2 * SOURCE_RADIUS, &opts.pv(2))?;
        let mesh = fermi_surface(&spec, e, 384)?;
        let mut worst: f64 = 0.0;
        for src in &fs {
            let lhs = g.form(src, src)?.im;
            let rhs = PI * f0_apply(&spec, src, &mesh)?.norm_sqr(&mesh);
            worst = worst.max((lhs - rhs).abs() / src.norm_sqr());
        }
        f.below(format!("λ={e}: |Im(R0 f, f) - π‖F0 f‖²| / ‖f‖²"), worst, 1e-4);
    }
    Ok(())
}

fn parseval(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let spec = lattice(LatticeName::Square, 2)?;
    let fs = sources(opts);
    for e in OPTICAL_ENERGIES {
        let plus = green_eps(&spec, e, Side::Plus, 2 * SOURCE_RADIUS, &EpsOptions::default())?;
        let minus = green_eps(&spec, e, Side::Minus, 2 * SOURCE_RADIUS, &EpsOptions::default())?;
        let mesh = fermi_surface(&spec, e, 512)?;
        let mut worst: f64 = 0.0;
        for src in &fs {
            let lhs = (plus.form(src, src)? - minus.form(src, src)?) / C64::new(0.0, 2.0 * PI);
            let rhs = f0_apply(&spec, src, &mesh)?.norm_sqr(&mesh);
            worst = worst.max((lhs - rhs).norm() / rhs);
        }
        f.below(format!("λ={e}: relative |(R+ - R-) f, f)/2πi - ‖F0 f‖²|"), worst, 1e-3);
    }
    Ok(())
}

fn potential(entries: &[(usize, [i64; 2], f64)]) -> PerturbationSpec {
    PerturbationSpec {
        potential: entries.iter().map(|&(band, n, value)| PotentialEntry { band, site: n.to_vec(), value }).collect(),
        ..Default::default()
    }
}

fn resolvent_routes(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let cases: [(LatticeName, [f64; 3], [PerturbationSpec; 3]); 2] = [
        (
            LatticeName::Square,
            [-0.45, 0.3, 0.7],
            [
                potential(&[(0, [0, 0], 0.5)]),
                potential(&[(0, [0, 0], 1.0), (0, [1, 0], -0.7)]),
                potential(&[(0, [0, 0], -0.3), (0, [0, 1], 0.8), (0, [1, 1], 0.4)]),
            ],
        ),
        (
            LatticeName::Hexagonal,
            [-0.55, 0.2, 0.7],
            [
                potential(&[(0, [0, 0], 0.5)]),
                potential(&[(0, [0, 0], 1.0), (1, [0, 0], -0.7)]),
                potential(&[(0, [0, 0], -0.3), (1, [1, 0], 0.8), (0, [0, 1], 0.4)]),
            ],
        ),
    ];
    let source = LatticeVector::from_entries([
        (Vertex::site(0, &[1, -1]), C64::new(1.0, 0.0)),
        (Vertex::site(0, &[0, 2]), C64::new(0.0, -0.5)),
    ]);
    for (name, energies, perts) in cases {
        let spec = lattice(name, 2)?;
        let ops: Vec<PerturbedOperator> = perts.iter().map(|p| assemble(&spec, p)).collect::<Result<_>>()?;
        let reach = |op: &PerturbedOperator| op.box_radius + 2;
        let radius = ops.iter().map(|op| op.required_radius().max(2 * reach(op) + 1)).max().unwrap_or(0);
        let mut worst: f64 = 0.0;
        for e in energies {
            let g = green_pv(&spec, e, Side::Plus, radius, &opts.pv(2))?;
            for op in &ops {
                let eval = op.graph.vertices_within(reach(op));
                let k1 = perturbed_resolvent(op, &g, &source, &eval)?;
                let ls = lippmann_schwinger(op, &g, &source, &eval)?;
                worst = worst.max(k1.iter().zip(&ls).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
            }
        }
        f.below(format!("{name}: max |u_K1 - u_LS|"), worst, 1e-6);
    }
    bound_state(f)
}

/// Coupling of the single-site bound state and the grid for its Green
/// function.
const BOUND_COUPLING: f64 = -4.0;
const BOUND_GRID: usize = 512;
const BOUND_WINDOW: usize = 40;

fn bound_state(f: &mut Findings) -> Result<()> {
    let spec = lattice(LatticeName::Square, 2)?;
    let secular = |l: f64| -> Result<f64> {
        let g = green_offspectrum(&spec, C64::new(l, 0.0), 0, BOUND_GRID)?;
        Ok(1.0 + BOUND_COUPLING * g.get(&[0, 0]).expect("origin")[(0, 0)].re)
    };
    let (mut lo, mut hi) = (-8.0, -1.2);
    let (flo, fhi) = (secular(lo)?, secular(hi)?);
    if flo.signum() == fhi.signum() {
        f.flag("secular equation changes sign on [-8, -1.2]", false);
        return Ok(());
    }
    while hi - lo > 1e-14 * lo.abs() {
        let mid = 0.5 * (lo + hi);
        if secular(mid)?.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let pert = PerturbationSpec::single_site(0, &[0, 0], BOUND_COUPLING);
    let window = realspace_window(&spec, Some(&pert), BOUND_WINDOW)?;
    // Power iteration on -H: the bound state dominates the continuum by a
    // factor of about four.
    let mut v = vec![0.0; window.len()];
    v[window.index[&Vertex::site(0, &[0, 0])]] = 1.0;
    let mut rayleigh = 0.0;
    for _ in 0..400 {
        let w: Vec<f64> = window.symmetric.apply_real(&v).iter().map(|x| -x).collect();
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
        let done = (next - rayleigh).abs() < 1e-15;
        rayleigh = next;
        if done {
            break;
        }
    }
    let window_energy = -rayleigh;
    f.note(format!("bound state: secular root {root:.15}, window eigenvalue {window_energy:.15}"));
    f.below("bound state: |root - window eigenvalue|", (root - window_energy).abs(), 1e-6);
    let op = assemble(&spec, &pert)?;
    let g = green_offspectrum(&spec, C64::new(root, 0.0), op.required_radius(), BOUND_GRID)?;
    let singular = matches!(op.solve(&g, &LatticeVector::delta(0, &[0, 0])), Err(Error::SystemSingular { .. }));
    f.flag("boundary system reports SystemSingular at the root", singular);
    Ok(())
}

fn embedded(f: &mut Findings) -> Result<()> {
    let superpoly = |p: &EmbeddedEigenpair| matches!(p.decay, DecayClass::Superpolynomial { .. });
    let (_, ladder) = construct_ladder_embedded(2, 0.75, Sign::Plus, 40)?;
    f.below("ladder d=2 λ=0.75: residual", ladder.residual, 1e-8);
    f.flag("ladder: superpolynomial decay", superpoly(&ladder));
    let (_, graphite) = construct_graphite_embedded(0.8, Sign::Plus, 40)?;
    f.below("graphite λ=0.8: residual", graphite.residual, 1e-8);
    f.flag("graphite: superpolynomial decay", superpoly(&graphite));
    for kind in [Construction::KagomeHexagon, Construction::SubdivisionPlaquette] {
        let (_, pair) = construct_compact_eigenvector(kind, 0.0)?;
        f.below(format!("{kind:?}: residual"), pair.residual, 1e-14);
        let radius = match pair.decay {
            DecayClass::Compact { radius } => radius as f64,
            _ => f64::INFINITY,
        };
        f.below(format!("{kind:?}: compact support radius"), radius, 2.5);
    }
    Ok(())
}

/// Scattering setup: square lattice, `V = 0.5 δ0`, `λ = 0.3`.
const SCATTER_ENERGY: f64 = 0.3;
const SCATTER_COUPLING: f64 = 0.5;
const SCATTER_RESOLUTION: usize = 256;

fn scatter_at(
    spec: &PeriodicLatticeSpec,
    op: &PerturbedOperator,
    green: &GreenTable,
    energy: f64,
    resolution: usize,
) -> Result<(ChannelBasis, SMatrix)> {
    let basis = channel_basis(spec, energy, resolution)?;
    let s = s_matrix(op, &basis, green)?;
    Ok((basis, s))
}

fn s_matrix_checks(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let spec = lattice(LatticeName::Square, 2)?;
    let free = assemble(&spec, &PerturbationSpec::default())?;
    let g0 = green_pv(&spec, SCATTER_ENERGY, Side::Plus, free.required_radius(), &opts.pv(2))?;
    let (_, s0) = scatter_at(&spec, &free, &g0, SCATTER_ENERGY, opts.resolution(SCATTER_RESOLUTION))?;
    f.below("zero perturbation: ‖S - I‖", s0.distance_to_identity(), 1e-8);

    let site = Vertex::site(0, &[0, 0]);
    let op = assemble(&spec, &PerturbationSpec::single_site(0, &[0, 0], SCATTER_COUPLING))?;
    let g = green_pv(&spec, SCATTER_ENERGY, Side::Plus, op.required_radius(), &opts.pv(2))?;
    let mut defects = Vec::new();
    for n in [128, 256, 512] {
        let res = opts.resolution(n);
        let (basis, s) = scatter_at(&spec, &op, &g, SCATTER_ENERGY, res)?;
        f.note(format!("resolution {res}: {} nodes, unitarity defect {:.3e}", s.node_count, s.unitarity_defect));
        if n == SCATTER_RESOLUTION {
            f.below(format!("unitarity defect at resolution {res}"), s.unitarity_defect, 1e-3);
            let t = rank_one_coupling(&g, &site, SCATTER_COUPLING)?;
            f.below("rank-one oracle: ‖A - t ψ(0)ψ(0)*‖ / ‖t ψ(0)ψ(0)*‖", s.rank_one_defect(&basis, &site, t), 1e-4);
        }
        defects.push(s.unitarity_defect);
    }
    f.below("refinement trend: defect(512) < defect(128)", defects[2], defects[0]);
    Ok(())
}

/// `Σ_q c_q conj(ψ_l(q))` over a few sites: a smooth incoming datum.
fn smooth_incoming(basis: &ChannelBasis, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let sites: Vec<(Vertex, C64)> = [[0, 0], [1, 0], [0, 2], [-1, 1]]
        .iter()
        .map(|n| (Vertex::site(0, n), C64::new(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0))))
        .collect();
    (0..basis.len()).map(|l| sites.iter().map(|(v, c)| c * basis.psi(l, v).conj()).sum()).collect()
}

fn helmholtz(opts: &VerifyOptions, f: &mut Findings) -> Result<()> {
    let mut rng = trial_rng(opts.seed, 12);
    let cases = [
        ("square V=0.5δ0", LatticeName::Square, SCATTER_ENERGY, PerturbationSpec::single_site(0, &[0, 0], SCATTER_COUPLING)),
        (
            "hexagonal, vertex removed",
            LatticeName::Hexagonal,
            0.5,
            PerturbationSpec { removed_vertices: vec![SiteRef::new(0, &[0, 0])], ..Default::default() },
        ),
    ];
    for (label, name, energy, pert) in cases {
        let spec = lattice(name, 2)?;
        let op = assemble(&spec, &pert)?;
        let radius = 2 * op.box_radius + HELMHOLTZ_MARGIN + 1;
        let g = green_pv(&spec, energy, Side::Plus, radius, &opts.pv(2))?;
        let (basis, s) = scatter_at(&spec, &op, &g, energy, opts.resolution(SCATTER_RESOLUTION))?;
        let alpha = smooth_incoming(&basis, &mut rng);
        let phi_in = basis.datum(&alpha);
        let sol = helmholtz_in_out(&op, &basis, &g, &s, &phi_in)?;
        let nin = phi_in.norm_sqr(&basis.mesh);
        let nout = sol.phi_out.norm_sqr(&basis.mesh);
        f.below(format!("{label}: interior residual vs 10 x estimate"), sol.residual, 10.0 * sol.error_estimate);
        f.below(
            format!("{label}: |‖φ_out‖² - ‖φ_in‖²| / ‖φ_in‖² vs unitarity defect"),
            (nout - nin).abs() / nin,
            s.unitarity_defect.max(1e-12),
        );
        // Far field: (A α)_k = ⟨ψ_k, V u⟩ for a pure potential, from the
        // constructed solution rather than the factorized S-matrix.
        if pert.is_pure_potential() {
            let a = s.apply_a(&alpha);
            let support = op.graph.potential_support();
            let direct: Vec<C64> = (0..basis.len())
                .map(|k| support.iter().map(|(v, x)| basis.psi(k, v).conj() * *x * sol.u.get(v)).sum())
                .collect();
            let scale = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let diff = a.iter().zip(&direct).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            f.below(format!("{label}: φ_out = S φ_in against ⟨ψ_k, V u⟩"), diff / scale, 1e-6);
        }
        f.note(format!(
            "{label}: residual {:.3e}, estimate {:.3e}, defect {:.3e}",
            sol.residual, sol.error_estimate, s.unitarity_defect
        ));
    }
    // Single-site potential: ψ(0) spans the range of A, so it is an
    // eigenvector of S with a unimodular eigenvalue.
    let spec = lattice(LatticeName::Square, 2)?;
    let site = Vertex::site(0, &[0, 0]);
    let op = assemble(&spec, &PerturbationSpec::single_site(0, &[0, 0], SCATTER_COUPLING))?;
    let g = green_pv(&spec, SCATTER_ENERGY, Side::Plus, op.required_radius(), &opts.pv(2))?;
    let (basis, s) = scatter_at(&spec, &op, &g, SCATTER_ENERGY, opts.resolution(SCATTER_RESOLUTION))?;
    let alpha: Vec<C64> = (0..basis.len()).map(|l| basis.psi(l, &site).conj()).collect();
    let image = s.apply(&alpha);
    let nn = basis.inner(&alpha, &alpha).re;
    let c = basis.inner(&alpha, &image) / nn;
    let rest: Vec<C64> = image.iter().zip(&alpha).map(|(y, x)| y - c * x).collect();
    f.below("rank-one: ‖S α - c α‖ / ‖α‖", (basis.inner(&rest, &rest).re / nn).sqrt(), 1e-8);
    f.below("rank-one: ||c| - 1| vs unitarity defect", (c.norm() - 1.0).abs(), s.unitarity_defect.max(1e-12));
    f.note(format!("rank-one phase: arg c = {:.12}", c.arg()));
    Ok(())
}

fn dos(f: &mut Findings) -> Result<()> {
    for name in [LatticeName::Square, LatticeName::Hexagonal, LatticeName::Kagome] {
        let spec = lattice(name, 2)?;
        let bands = spectrum_bands(&spec, 64).bands.iter().filter(|b| !b.flat).count();
        let mass = dos_total_mass(&spec, 32, 256)?;
        f.note(format!("{name}: total mass {mass:.6}, dispersive bands {bands}"));
        f.below(format!("{name}: |∫ρ - dispersive band count|"), (mass - bands as f64).abs(), 1e-2);
    }
    let spec = lattice(LatticeName::Square, 2)?;
    let energies = [0.3, 0.1, 0.03, 0.01];
    for sign in [1.0, -1.0] {
        let e: Vec<f64> = energies.iter().map(|x| sign * x).collect();
        let rho = density_of_states(&spec, &e, 512)?;
        f.note(format!("ρ at {e:?}: {rho:?}"));
        f.flag(format!("ρ increases towards the van Hove energy 0 along {e:?}"), rho.windows(2).all(|w| w[1] > w[0]));
    }
    Ok(())
}
