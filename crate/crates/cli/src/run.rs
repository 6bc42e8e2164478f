//! Task dispatch and the run report.

use crate::config::{ExperimentConfig, Format, Task, TaskParams};
use crate::table::{int, num, Table};
use crate::verify::{verify_all, CriterionResult, VerifyOptions};
use crate::CliError;
use lattice_spectra::bands::spectrum_bands;
use lattice_spectra::embedded::{
    construct_compact_eigenvector, construct_graphite_embedded, construct_ladder_embedded, Construction, Sign,
};
use lattice_spectra::fermi::{density_of_states, fermi_surface};
use lattice_spectra::green::{
    default_grid, green_eps, green_offspectrum, green_pv, EpsOptions, GreenMethod, GreenTable, PvOptions, Side,
};
use lattice_spectra::lattice::{build_lattice, PeriodicLatticeSpec};
use lattice_spectra::linalg::C64;
use lattice_spectra::perturbation::{assemble, point_spectrum_scan, PerturbationSpec, Vertex};
use lattice_spectra::quadrature::OffsetBox;
use lattice_spectra::scattering::{channel_basis, s_matrix, scattering_green};
use lattice_spectra::spectral::LatticeVector;
use lattice_spectra::thresholds::{thresholds, ThresholdMode};
use lattice_spectra::Error;
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

pub const REPORT_SCHEMA: &str = "lattice-spectra/run-report/v1";
/// Green-table radius emitted by `green` when none is requested.
pub const DEFAULT_GREEN_RADIUS: i64 = 3;
/// Window radius of the embedded constructions when none is requested.
pub const DEFAULT_WINDOW: usize = 40;
pub const DEFAULT_SCAN_SAMPLES: usize = 41;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// How the emitted numbers were produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub library_version: &'static str,
    pub operation: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<GreenMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Imaginary parts `ε_k` of the extrapolation ladder.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extrapolation: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub result: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<CriterionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<StageTiming>>,
    #[serde(skip)]
    pub table: Table,
    #[serde(skip)]
    pub stages: Vec<StageTiming>,
}

impl RunReport {
    /// Output document in the configured format.
    pub fn render(&self) -> String {
        match self.config.output.format {
            Format::Json => serde_json::to_string_pretty(self).expect("serializable") + "\n",
            Format::Csv => self.table.to_csv(),
        }
    }

    /// Write the rendered document to the configured path, or return it for
    /// standard output.
    pub fn emit(&self) -> Result<Option<String>, CliError> {
        let text = self.render();
        match &self.config.output.path {
            Some(p) => {
                std::fs::write(p, text)?;
                Ok(None)
            }
            None => Ok(Some(text)),
        }
    }
}

struct Stages(Vec<StageTiming>);

impl Stages {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push(StageTiming { stage: stage.to_string(), seconds: t.elapsed().as_secs_f64() });
        out
    }
}

struct Outcome {
    provenance: Provenance,
    result: Value,
    table: Table,
    assertions: Vec<CriterionResult>,
    passed: Option<bool>,
}

impl Outcome {
    fn new(provenance: Provenance, result: Value, table: Table) -> Self {
        Self { provenance, result, table, assertions: Vec::new(), passed: None }
    }
}

/// Execute one configured task.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    config.validate()?;
    let mut stages = Stages(Vec::new());
    let task = config.task.as_str();
    let num_err = CliError::numerical(task);
    let spec = match &config.lattice {
        Some(l) => Some(stages.time("build_lattice", || build_lattice(l.name, l.dim)).map_err(&num_err)?),
        None => None,
    };
    let p = &config.params;
    let outcome = match (config.task, spec) {
        (Task::Verify, _) => run_verify(config, &mut stages),
        (Task::Bands, Some(s)) => Ok(run_bands(&s, p, &mut stages)),
        (Task::Dos, Some(s)) => run_dos(&s, p, &mut stages),
        (Task::Fermi, Some(s)) => run_fermi(&s, p, &mut stages),
        (Task::Thresholds, Some(s)) => Ok(run_thresholds(&s, p, &mut stages)),
        (Task::Green, Some(s)) => run_green(&s, p, &mut stages),
        (Task::Resolve, Some(s)) => run_resolve(&s, p, config.perturbation.as_ref(), &mut stages),
        (Task::Eigs, Some(s)) => run_eigs(&s, p, config.perturbation.as_ref(), &mut stages),
        (Task::Scatter, Some(s)) => run_scatter(&s, p, config.perturbation.as_ref(), &mut stages),
        (_, None) => unreachable!("validated"),
    }
    .map_err(|e| match e {
        TaskError::Lib(source) => CliError::Numerical { task: task.to_string(), source },
        TaskError::Config(m) => CliError::ConfigInvalid(format!("{task}: {m}")),
    })?;
    let stages = stages.0;
    Ok(RunReport {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        provenance: Provenance { library_version: env!("CARGO_PKG_VERSION"), ..outcome.provenance },
        result: outcome.result,
        assertions: outcome.assertions,
        passed: outcome.passed,
        timings: config.output.timings.then(|| stages.clone()),
        table: outcome.table,
        stages,
    })
}

enum TaskError {
    Lib(Error),
    Config(String),
}

impl From<Error> for TaskError {
    fn from(e: Error) -> Self {
        TaskError::Lib(e)
    }
}

type TaskResult = Result<Outcome, TaskError>;

fn require<T: Copy>(v: Option<T>, name: &str) -> Result<T, TaskError> {
    v.ok_or_else(|| TaskError::Config(format!("parameter `{name}` is required")))
}

fn prov(operation: &'static str) -> Provenance {
    Provenance { operation, ..Default::default() }
}

fn n_header(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("n{k}")).collect()
}

/// `cell, n1..nd` columns; added vertices are written `added:<i>` with empty
/// translation columns.
fn vertex_cols(v: &Vertex, d: usize) -> Vec<String> {
    match v {
        Vertex::Site { cell, n } => std::iter::once(int(cell)).chain(n.iter().map(int)).collect(),
        Vertex::Added(i) => std::iter::once(format!("added:{i}")).chain((0..d).map(|_| String::new())).collect(),
    }
}

fn vertex_table(schema: &str, d: usize, entries: &[(Vertex, C64)]) -> Table {
    let mut header = vec!["cell".to_string()];
    header.extend(n_header(d));
    header.extend(["re".to_string(), "im".to_string()]);
    let mut t = Table { schema: schema.to_string(), header, rows: Vec::new() };
    for (v, x) in entries {
        let mut row = vertex_cols(v, d);
        row.extend([num(x.re), num(x.im)]);
        t.push(row);
    }
    t
}

fn vertex_json(entries: &[(Vertex, C64)]) -> Value {
    Value::Array(entries.iter().map(|(v, x)| json!({ "vertex": v, "re": x.re, "im": x.im })).collect())
}

fn run_bands(spec: &PeriodicLatticeSpec, p: &TaskParams, st: &mut Stages) -> Outcome {
    let grid = p.grid.unwrap_or(default_grid(spec.dim));
    let rep = st.time("spectrum_bands", || spectrum_bands(spec, grid));
    let mut t = Table::new("lattice-spectra/bands/v1", &["band", "min", "max", "flat"]);
    for b in &rep.bands {
        t.push(vec![int(b.band), num(b.min), num(b.max), int(b.flat)]);
    }
    let result = json!({ "bands": rep.bands, "intervals": rep.intervals, "flat_bands": rep.flat_bands, "union": rep.union() });
    Outcome::new(Provenance { grid: Some(grid), ..prov("spectrum_bands") }, result, t)
}

fn run_dos(spec: &PeriodicLatticeSpec, p: &TaskParams, st: &mut Stages) -> TaskResult {
    if p.energies.is_empty() {
        return Err(TaskError::Config("parameter `energies` is required".into()));
    }
    let res = p.resolution.unwrap_or(default_grid(spec.dim));
    let rho = st.time("density_of_states", || density_of_states(spec, &p.energies, res))?;
    let mut t = Table::new("lattice-spectra/dos/v1", &["energy", "rho"]);
    for (e, r) in p.energies.iter().zip(&rho) {
        t.push(vec![num(*e), num(*r)]);
    }
    let result = json!({ "energies": p.energies, "rho": rho });
    Ok(Outcome::new(Provenance { resolution: Some(res), ..prov("density_of_states") }, result, t))
}

fn run_fermi(spec: &PeriodicLatticeSpec, p: &TaskParams, st: &mut Stages) -> TaskResult {
    let energy = require(p.energy, "energy")?;
    let res = p.resolution.unwrap_or(default_grid(spec.dim));
    let mesh = st.time("fermi_surface", || fermi_surface(spec, energy, res))?;
    let mut header = vec!["band".to_string()];
    header.extend((1..=spec.dim).map(|k| format!("x{k}")));
    header.extend(["weight", "coarea_weight", "energy_defect"].map(String::from));
    let mut t = Table { schema: "lattice-spectra/fermi/v1".into(), header, rows: Vec::new() };
    let mut nodes = Vec::with_capacity(mesh.nodes.len());
    for n in &mesh.nodes {
        let mut row = vec![int(n.band)];
        row.extend(n.x.iter().map(|&x| num(x)));
        row.extend([num(n.weight), num(n.coarea_weight), num(n.energy_defect)]);
        t.push(row);
        nodes.push(json!({
            "band": n.band, "x": n.x, "weight": n.weight,
            "coarea_weight": n.coarea_weight, "energy_defect": n.energy_defect,
        }));
    }
    let result = json!({
        "energy": energy,
        "node_count": mesh.nodes.len(),
        "dropped": mesh.dropped,
        "total_measure": mesh.total_measure(),
        "total_mass": mesh.total_mass(),
        "nodes": nodes,
    });
    Ok(Outcome::new(Provenance { resolution: Some(res), ..prov("fermi_surface") }, result, t))
}

fn run_thresholds(spec: &PeriodicLatticeSpec, p: &TaskParams, st: &mut Stages) -> Outcome {
    let mode = p.mode.unwrap_or(ThresholdMode::Catalog);
    let set = st.time("thresholds", || thresholds(spec, mode));
    let mut t = Table::new("lattice-spectra/thresholds/v1", &["kind", "value"]);
    let groups: [(&str, &[f64]); 4] = [
        ("t0", &set.t0),
        ("t0_restricted", &set.t0_restricted),
        ("t0_numeric", set.t0_numeric.as_deref().unwrap_or(&[])),
        ("discrepancy", &set.discrepancies),
    ];
    for (kind, vals) in groups {
        for v in vals {
            t.push(vec![kind.to_string(), num(*v)]);
        }
    }
    Outcome::new(prov("thresholds"), serde_json::to_value(&set).expect("serializable"), t)
}

/// Green table for the requested spectral parameter and method.
fn green_for(spec: &PeriodicLatticeSpec, p: &TaskParams, radius: i64) -> Result<(GreenTable, Provenance), TaskError> {
    if let Some([re, im]) = p.z {
        if p.method.is_some_and(|m| m != GreenMethod::Offspectrum) {
            return Err(TaskError::Config("a complex `z` is evaluated off the spectrum only".into()));
        }
        let grid = p.grid.unwrap_or(default_grid(spec.dim));
        let t = green_offspectrum(spec, C64::new(re, im), radius, grid)?;
        return Ok((t, Provenance { method: Some(GreenMethod::Offspectrum), grid: Some(grid), ..prov("green") }));
    }
    let energy = require(p.energy, "energy")?;
    let side = p.side.unwrap_or(Side::Plus);
    let method = p.method.unwrap_or(GreenMethod::PvDelta);
    let base = Provenance { method: Some(method), ..prov("green_limit") };
    Ok(match method {
        GreenMethod::Offspectrum => {
            let grid = p.grid.unwrap_or(default_grid(spec.dim));
            (green_offspectrum(spec, C64::new(energy, 0.0), radius, grid)?, Provenance { grid: Some(grid), ..base })
        }
        GreenMethod::EpsExtrapolation => {
            let opts = EpsOptions::default();
            let ladder = (0..opts.levels).map(|k| opts.eps0 / (1u64 << k) as f64).collect();
            let t = green_eps(spec, energy, side, radius, &opts)?;
            let grid = t.grid_n;
            (t, Provenance { grid: Some(grid), extrapolation: Some(ladder), ..base })
        }
        GreenMethod::PvDelta => {
            let opts = PvOptions::for_dim(spec.dim);
            let prov = Provenance { grid: Some(opts.outer_grid), resolution: Some(opts.mesh_resolution), ..base };
            (green_pv(spec, energy, side, radius, &opts)?, prov)
        }
    })
}

fn run_green(spec: &PeriodicLatticeSpec, p: &TaskParams, st: &mut Stages) -> TaskResult {
    let radius = p.radius.unwrap_or(DEFAULT_GREEN_RADIUS);
    if radius < 0 {
        return Err(TaskError::Config("`radius` must be non-negative".into()));
    }
    let (table, provenance) = st.time("green", || green_for(spec, p, radius))?;
    let d = spec.dim;
    let mut header = n_header(d);
    header.extend(["row", "col", "re", "im"].map(String::from));
    let mut t = Table { schema: "lattice-spectra/green/v1".into(), header, rows: Vec::new() };
    let mut entries = Vec::new();
    for n in (OffsetBox { d, radius }).offsets() {
        let block = table.get(&n).expect("inside");
        for r in 0..table.s {
            for c in 0..table.s {
                let x = block[(r, c)];
                let mut row: Vec<String> = n.iter().map(int).collect();
                row.extend([int(r), int(c), num(x.re), num(x.im)]);
                t.push(row);
                entries.push(json!({ "n": n, "row": r, "col": c, "re": x.re, "im": x.im }));
            }
        }
    }
    let result = json!({
        "z": [table.z.re, table.z.im],
        "side": table.side,
        "radius": radius,
        "free_residual": table.free_residual(&spec.stencil()),
        "entries": entries,
    });
    Ok(Outcome::new(provenance, result, t))
}

fn source_vector(p: &TaskParams, d: usize) -> LatticeVector {
    if p.source.is_empty() {
        return LatticeVector::delta(0, &vec![0; d]);
    }
    LatticeVector::from_entries(p.source.iter().map(|s| (Vertex::site(s.band, &s.site), C64::new(s.re, s.im))))
}

fn run_resolve(
    spec: &PeriodicLatticeSpec,
    p: &TaskParams,
    pert: Option<&PerturbationSpec>,
    st: &mut Stages,
) -> TaskResult {
    let pert = pert.cloned().unwrap_or_default();
    let op = st.time("assemble", || assemble(spec, &pert))?;
    let a = op.box_radius;
    let g = source_vector(p, spec.dim);
    let eval: Vec<Vertex> =
        if p.eval.is_empty() { op.graph.vertices_within(a + 1) } else { p.eval.iter().map(|s| s.vertex()).collect() };
    let r_src = g.support_radius();
    let r_eval = eval.iter().map(|v| v.radius()).max().unwrap_or(0);
    let radius = op.required_radius().max(r_src + a + 1).max(r_eval + (a + 1).max(r_src));
    let (table, provenance) = st.time("green", || green_for(spec, p, radius))?;
    let sol = st.time("solve", || op.solve(&table, &g))?;
    let values: Vec<(Vertex, C64)> = st.time("evaluate", || {
        eval.iter().map(|v| op.evaluate(&table, &sol, v).map(|x| (v.clone(), x))).collect::<Result<_, Error>>()
    })?;
    let residual = op.interior_residual(&table, &sol, &g)?;
    let result = json!({
        "z": [table.z.re, table.z.im],
        "side": table.side,
        "box_radius": a,
        "table_radius": radius,
        "sigma_min": sol.sigma_min,
        "interior_residual": residual,
        "values": vertex_json(&values),
    });
    let t = vertex_table("lattice-spectra/resolve/v1", spec.dim, &values);
    Ok(Outcome::new(Provenance { operation: "perturbed_resolvent", ..provenance }, result, t))
}

fn run_eigs(
    spec: &PeriodicLatticeSpec,
    p: &TaskParams,
    pert: Option<&PerturbationSpec>,
    st: &mut Stages,
) -> TaskResult {
    if let Some(kind) = p.construction {
        return run_construction(spec, p, kind, st);
    }
    let pert = pert.cloned().unwrap_or_default();
    let op = st.time("assemble", || assemble(spec, &pert))?;
    let [lo, hi] = p.interval.unwrap_or([-1.5, 1.5]);
    let samples = p.samples.unwrap_or(DEFAULT_SCAN_SAMPLES);
    let radius = op.required_radius();
    let grid = p.grid.unwrap_or(default_grid(spec.dim));
    let method = p.method.unwrap_or(GreenMethod::PvDelta);
    let green_at = |e: f64| match green_offspectrum(spec, C64::new(e, 0.0), radius, grid) {
        Err(Error::SpectrumTooClose { .. }) => match method {
            GreenMethod::EpsExtrapolation => green_eps(spec, e, Side::Plus, radius, &EpsOptions::default()),
            _ => green_pv(spec, e, Side::Plus, radius, &PvOptions::for_dim(spec.dim)),
        },
        other => other,
    };
    let found = st.time("point_spectrum_scan", || point_spectrum_scan(&op, green_at, (lo, hi), samples))?;
    let free = st.time("flat_bands", || spectrum_bands(spec, default_grid(spec.dim)).flat_bands);
    let mut t = Table::new("lattice-spectra/eigs/v1", &["energy", "sigma_min", "multiplicity", "residual", "unresolved"]);
    for c in &found {
        t.push(vec![num(c.energy), num(c.sigma_min), int(c.multiplicity), num(c.residual), int(c.unresolved)]);
    }
    let result = json!({ "interval": [lo, hi], "samples": samples, "candidates": found, "free_flat_bands": free });
    Ok(Outcome::new(Provenance { method: Some(method), grid: Some(grid), ..prov("point_spectrum_scan") }, result, t))
}

fn run_construction(spec: &PeriodicLatticeSpec, p: &TaskParams, kind: Construction, st: &mut Stages) -> TaskResult {
    let window = p.window.unwrap_or(DEFAULT_WINDOW);
    let sign = p.sign.unwrap_or(Sign::Plus);
    let energy = match kind {
        Construction::Ladder | Construction::Graphite => require(p.energy, "energy")?,
        _ => 0.0,
    };
    let (pert, pair) = st.time("construct", || match kind {
        Construction::Ladder => construct_ladder_embedded(spec.dim, energy, sign, window),
        Construction::Graphite => construct_graphite_embedded(energy, sign, window),
        _ => construct_compact_eigenvector(kind, p.value.unwrap_or(0.0)),
    })?;
    if pair.lattice != spec.name {
        return Err(TaskError::Config(format!("construction lives on `{}`, not `{}`", pair.lattice, spec.name)));
    }
    let entries: Vec<(Vertex, C64)> = pair.vector.iter().map(|(v, x)| (v.clone(), *x)).collect();
    let result = json!({
        "construction": pair.construction,
        "lattice": pair.lattice,
        "dim": pair.dim,
        "energy": pair.energy,
        "residual": pair.residual,
        "window_radius": pair.window_radius,
        "decay": pair.decay,
        "perturbation": pert,
        "support_size": entries.len(),
    });
    let t = vertex_table("lattice-spectra/eigenvector/v1", pair.dim, &entries);
    Ok(Outcome::new(prov("embedded_construction"), result, t))
}

fn run_scatter(
    spec: &PeriodicLatticeSpec,
    p: &TaskParams,
    pert: Option<&PerturbationSpec>,
    st: &mut Stages,
) -> TaskResult {
    let energy = require(p.energy, "energy")?;
    let res = p.resolution.unwrap_or(default_grid(spec.dim));
    let pert = pert.cloned().unwrap_or_default();
    let op = st.time("assemble", || assemble(spec, &pert))?;
    let basis = st.time("channel_basis", || channel_basis(spec, energy, res))?;
    let green = st.time("green", || scattering_green(spec, &op, energy, 0))?;
    let smat = st.time("s_matrix", || s_matrix(&op, &basis, &green))?;
    let s = st.time("s_dense", || smat.s_dense());
    let n = smat.node_count;
    let mut t = Table::new("lattice-spectra/scatter/v1", &["k", "l", "abs2"]);
    let (mut re, mut im) = (Vec::with_capacity(n * n), Vec::with_capacity(n * n));
    for k in 0..n {
        for l in 0..n {
            let x = s[(k, l)];
            re.push(x.re);
            im.push(x.im);
            t.push(vec![int(k), int(l), num(x.norm_sqr())]);
        }
    }
    let nodes: Vec<Value> =
        basis.mesh.nodes.iter().map(|nd| json!({ "band": nd.band, "x": nd.x, "weight": nd.coarea_weight })).collect();
    let result = json!({
        "energy": energy,
        "node_count": n,
        "nodes": nodes,
        "weights": smat.weights,
        "s": { "layout": "row_major", "re": re, "im": im },
        "unitarity_defect": smat.unitarity_defect,
        "distance_to_identity": smat.distance_to_identity(),
    });
    let provenance = Provenance {
        method: Some(GreenMethod::PvDelta),
        resolution: Some(res),
        grid: Some(PvOptions::for_dim(spec.dim).outer_grid),
        ..prov("s_matrix")
    };
    Ok(Outcome::new(provenance, result, t))
}

fn run_verify(config: &ExperimentConfig, st: &mut Stages) -> TaskResult {
    let p = &config.params;
    let opts = VerifyOptions {
        seed: config.seed,
        surface_sign: p.surface_sign.unwrap_or(1.0),
        resolution_scale: p.resolution_scale.unwrap_or(1.0),
    };
    let ids = if p.criteria.is_empty() { p.suite.unwrap_or(crate::config::Suite::All).criteria() } else { p.criteria.clone() };
    let summary = verify_all(&opts, &ids);
    st.0.extend(summary.timings.iter().cloned());
    let mut t = Table::new("lattice-spectra/verify/v1", &["id", "name", "passed", "metric", "threshold"]);
    for c in &summary.results {
        t.push(vec![int(c.id), c.name.to_string(), int(c.passed), num(c.metric), num(c.threshold)]);
    }
    let result = json!({ "criteria": ids, "passed": summary.passed });
    Ok(Outcome {
        provenance: prov("verify_all"),
        result,
        table: t,
        passed: Some(summary.passed),
        assertions: summary.results,
    })
}
