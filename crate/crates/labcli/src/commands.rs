//! Subcommand implementations. Per-k work runs in parallel; every file is
//! written afterwards from the calling thread.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use liouville_core::asymptotics::{
    detect_family_cascade, diagnose, CascadeInput, CascadeReport, DiagnosticsReport, MemberInput,
    VerdictStatus,
};
use liouville_core::families::{BubbleProfile, DevelopingMapField, FamilyMember};
use liouville_core::solver::{
    solve_dirichlet, solve_with_continuation, ConvergenceKind, ConvergenceRecord, DirichletProblem,
    InitialGuess, Solution,
};
use liouville_core::{
    ClosedForm, CollapsingFamily, DevelopingMap, DiskGrid, Point, ScalarField, SmoothFactor,
    WeightSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BoundarySource, ExperimentConfig, SolveSection, SweepParameter};
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "liouville-lab/manifest/1";

/// Probe points per member in the exact-field spot check.
const PROBES: usize = 8;

/// Columns of `sweep.csv`, in order.
pub const SWEEP_COLUMNS: [&str; 17] = [
    "run",
    "parameter",
    "value",
    "k",
    "tau",
    "lambda",
    "peak",
    "local_mass",
    "outer_mass",
    "sigma_hat",
    "n",
    "status",
    "energy_defect",
    "profile_residual",
    "peak_boundary",
    "oscillation",
    "algebraic_defect",
];

pub fn stem(k: usize) -> String {
    format!("k{k:03}")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file =
        fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Two-column gnuplot data with a comment header.
fn write_dat(path: &Path, columns: [&str; 2], rows: &[(f64, f64)]) -> Result<(), CliError> {
    let file =
        fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {} {}", columns[0], columns[1])?;
    for (x, y) in rows {
        writeln!(w, "{x:.12e} {y:.12e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub k: usize,
    pub tau: f64,
    pub lambda: f64,
    pub degree: usize,
    pub poles: Vec<Point>,
    pub multiplicities: Vec<u32>,
    pub field: String,
    /// Largest relative residual `|Δξ + W e^ξ| / max(1, W e^ξ)` at the probe
    /// points, with a Richardson-extrapolated difference Laplacian.
    pub probe_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub grid_n: usize,
    pub grid_radius: f64,
    pub seed: u64,
    pub members: Vec<ManifestEntry>,
}

fn difference_laplacian(c: &dyn ClosedForm, x: Point, s: f64) -> f64 {
    let v = |dx: f64, dy: f64| c.value([x[0] + dx, x[1] + dy]);
    (v(s, 0.0) + v(-s, 0.0) + v(0.0, s) + v(0.0, -s) - 4.0 * v(0.0, 0.0)) / (s * s)
}

fn probe_residual(c: &dyn ClosedForm, w: &WeightSpec, radius: f64, rng: &mut ChaCha8Rng) -> f64 {
    let s = 1e-3 * radius;
    let mut worst: f64 = 0.0;
    for _ in 0..PROBES {
        let r = 0.9 * radius * rng.gen::<f64>().sqrt();
        let t = rng.gen_range(0.0..std::f64::consts::TAU);
        let x = [r * t.cos(), r * t.sin()];
        let lap = (4.0 * difference_laplacian(c, x, 0.5 * s) - difference_laplacian(c, x, s)) / 3.0;
        let rhs = w.value(x) * c.value(x).exp();
        worst = worst.max((lap + rhs).abs() / rhs.max(1.0));
    }
    worst
}

pub fn generate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    if !cfg.mode.exact() {
        return Err(CliError::Config(
            "mode: generate needs mode = \"exact\" or \"both\"".into(),
        ));
    }
    let family = cfg.family()?;
    let grid = DiskGrid::shared(cfg.grid.radius, cfg.grid.n)?;
    let fields: Vec<ScalarField> = family
        .members
        .par_iter()
        .map(|m| m.field(grid.clone()))
        .collect::<liouville_core::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dir = out.join("fields");
    create_dir(&dir)?;
    let mut members = Vec::with_capacity(fields.len());
    for (m, f) in family.members.iter().zip(&fields) {
        let name = stem(m.k);
        f.write(&dir.join(&name))?;
        let closed = f.closed_form().expect("exact members have closed forms");
        members.push(ManifestEntry {
            k: m.k,
            tau: m.tau,
            lambda: m.lambda,
            degree: m.map.degree(),
            poles: m.poles.poles().to_vec(),
            multiplicities: m.poles.multiplicities().to_vec(),
            field: format!("fields/{name}"),
            probe_residual: probe_residual(closed.as_ref(), &m.weight(), cfg.grid.radius, &mut rng),
        });
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        grid_n: cfg.grid.n,
        grid_radius: cfg.grid.radius,
        seed: cfg.seed,
        members,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Failed,
}

/// Per-k entry of `solve.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub k: usize,
    pub lambda: f64,
    pub status: SolveStatus,
    pub kind: Option<ConvergenceKind>,
    pub steps: Option<usize>,
    pub final_residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub interior_residual: Option<f64>,
    /// Continuation parameters actually solved (`[1]` for a direct solve).
    pub stages: Vec<f64>,
    /// Stored field (the best iterate for a failed solve).
    pub field: Option<String>,
    pub message: Option<String>,
}

fn solve_weight(
    m: &FamilyMember,
    solve: &SolveSection,
    radius: f64,
) -> Result<WeightSpec, CliError> {
    if solve.weight_scale == 1.0 {
        return Ok(m.weight());
    }
    Ok(WeightSpec::new(
        m.poles.clone(),
        SmoothFactor::Constant {
            value: solve.weight_scale,
        },
        radius,
    )?)
}

fn member_problem(
    m: &FamilyMember,
    solve: &SolveSection,
    grid: &Arc<DiskGrid>,
    t: f64,
) -> liouville_core::Result<DirichletProblem> {
    let weight = solve_weight(m, solve, grid.radius())
        .map_err(|e| liouville_core::Error::Config(e.to_string()))?;
    match &solve.boundary {
        BoundarySource::Trace => {
            let map = DevelopingMap::new(m.poles.clone(), t * m.lambda, m.map.centering())?;
            DirichletProblem::from_trace(
                grid.clone(),
                weight,
                Arc::new(DevelopingMapField::new(map)),
            )
        }
        BoundarySource::LeastMass => {
            let w0 = weight.at_origin();
            if w0.is_nan() || w0 <= 0.0 {
                return Err(liouville_core::Error::Config(
                    "solve.boundary: least_mass needs W(0) > 0".into(),
                ));
            }
            let lambda = t * m.lambda;
            let profile = Arc::new(BubbleProfile {
                peak: (8.0 * lambda * lambda / w0).ln(),
                w0,
            });
            let initial = ScalarField::from_closed_form(grid.clone(), profile.clone())?;
            Ok(DirichletProblem::from_trace(grid.clone(), weight, profile)?
                .with_initial(InitialGuess::Field(initial)))
        }
        BoundarySource::Constant { value } => {
            let v = *value;
            DirichletProblem::new(grid.clone(), weight, move |_| v)
        }
    }
}

/// Solution (or best iterate) of one member with its outcome record.
pub struct Solved {
    pub member: usize,
    pub solution: Option<Solution>,
    pub outcome: SolveOutcome,
}

fn record_fields(outcome: &mut SolveOutcome, s: &Solution) {
    outcome.kind = Some(s.record.kind);
    outcome.steps = Some(s.record.steps());
    outcome.final_residual = Some(s.record.final_residual());
    outcome.tolerance = Some(s.record.tolerance);
    outcome.interior_residual = Some(s.interior_residual);
}

fn solve_member(
    i: usize,
    m: &FamilyMember,
    cfg: &ExperimentConfig,
    solve: &SolveSection,
) -> Solved {
    let params = solve.newton.params();
    let grid = match DiskGrid::shared(cfg.grid.radius, cfg.grid.n) {
        Ok(g) => g,
        Err(e) => {
            return failed(i, m, e.to_string(), None);
        }
    };
    let make = |t: f64| member_problem(m, solve, &grid, t);
    let result = if solve.continuation {
        solve_with_continuation(make, &params, &solve.fractions)
            .map(|(s, stages)| (s, stages.iter().map(|st| st.parameter).collect()))
    } else {
        make(1.0)
            .map_err(Into::into)
            .and_then(|p| solve_dirichlet(&p, &params))
            .map(|s| (s, vec![1.0]))
    };
    match result {
        Ok((s, stages)) => {
            let mut outcome = SolveOutcome {
                k: m.k,
                lambda: m.lambda,
                status: SolveStatus::Converged,
                kind: None,
                steps: None,
                final_residual: None,
                tolerance: None,
                interior_residual: None,
                stages,
                field: None,
                message: None,
            };
            record_fields(&mut outcome, &s);
            Solved {
                member: i,
                solution: Some(s),
                outcome,
            }
        }
        Err(f) => failed(i, m, f.message, f.best),
    }
}

fn failed(i: usize, m: &FamilyMember, message: String, best: Option<Solution>) -> Solved {
    let mut outcome = SolveOutcome {
        k: m.k,
        lambda: m.lambda,
        status: SolveStatus::Failed,
        kind: None,
        steps: None,
        final_residual: None,
        tolerance: None,
        interior_residual: None,
        stages: Vec::new(),
        field: None,
        message: Some(message),
    };
    if let Some(s) = &best {
        record_fields(&mut outcome, s);
    }
    Solved {
        member: i,
        solution: best,
        outcome,
    }
}

fn solve_family(
    cfg: &ExperimentConfig,
    family: &CollapsingFamily,
) -> Result<Vec<Solved>, CliError> {
    let solve = cfg.solve.as_ref().ok_or_else(|| {
        CliError::Config("solve: section required when mode includes solve".into())
    })?;
    Ok(family
        .members
        .par_iter()
        .enumerate()
        .map(|(i, m)| solve_member(i, m, cfg, solve))
        .collect())
}

fn write_record(out: &Path, k: usize, record: &ConvergenceRecord) -> Result<(), CliError> {
    let name = stem(k);
    let path = out.join("convergence").join(format!("{name}.jsonl"));
    let file =
        fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    record.write_json_lines(&mut w)?;
    w.flush()?;
    let rows: Vec<(f64, f64)> = record
        .iterations
        .iter()
        .map(|r| (r.iter as f64, r.residual))
        .collect();
    write_dat(
        &out.join("plots").join(format!("convergence_{name}.dat")),
        ["iteration", "residual"],
        &rows,
    )
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SolveOutcome>, CliError> {
    if !cfg.mode.solve() {
        return Err(CliError::Config(
            "mode: solve needs mode = \"solve\" or \"both\"".into(),
        ));
    }
    let family = cfg.family()?;
    let solved = solve_family(cfg, &family)?;
    for dir in ["solved", "convergence", "plots"] {
        create_dir(&out.join(dir))?;
    }
    let mut outcomes = Vec::with_capacity(solved.len());
    for s in solved {
        let mut outcome = s.outcome;
        if let Some(sol) = &s.solution {
            let name = stem(outcome.k);
            sol.field.write(&out.join("solved").join(&name))?;
            outcome.field = Some(format!("solved/{name}"));
            write_record(out, outcome.k, &sol.record)?;
        }
        outcomes.push(outcome);
    }
    write_json(&out.join("solve.json"), &outcomes)?;
    let failures = outcomes
        .iter()
        .filter(|o| o.status == SolveStatus::Failed)
        .count();
    if failures == outcomes.len() {
        return Err(CliError::Solver(format!(
            "all {failures} members failed to converge"
        )));
    }
    Ok(outcomes)
}

fn cascade_input(cfg: &ExperimentConfig, family: &CollapsingFamily) -> Option<CascadeInput> {
    (!cfg.family.exponents.is_empty()).then(|| CascadeInput {
        tracks: family.identity_tracks(),
        multiplicities: cfg.family.multiplicities.clone(),
    })
}

fn run_diagnostics(
    cfg: &ExperimentConfig,
    family: &CollapsingFamily,
    fields: &[ScalarField],
    weights: &[WeightSpec],
) -> Result<DiagnosticsReport, CliError> {
    let members: Vec<MemberInput<'_>> = family
        .members
        .iter()
        .zip(fields.iter().zip(weights))
        .map(|(m, (field, weight))| MemberInput {
            k: m.k,
            tau: m.tau,
            lambda: Some(m.lambda),
            field,
            weight,
        })
        .collect();
    Ok(diagnose(
        &members,
        cascade_input(cfg, family).as_ref(),
        &cfg.diagnostics,
    )?)
}

/// Fields and weights of the diagnosed source: solved fields when the mode
/// includes solving, exact closed forms otherwise.
fn load_fields(
    cfg: &ExperimentConfig,
    family: &CollapsingFamily,
    out: &Path,
) -> Result<(Vec<ScalarField>, Vec<WeightSpec>), CliError> {
    let dir: PathBuf = out.join(if cfg.mode.solve() { "solved" } else { "fields" });
    let missing: Vec<String> = family
        .members
        .iter()
        .filter(|m| {
            let s = dir.join(stem(m.k));
            !(s.with_extension("csv").is_file() && s.with_extension("json").is_file())
        })
        .map(|m| m.k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!(
            "missing fields for k = {} in {}",
            missing.join(", "),
            dir.display()
        )));
    }
    if cfg.mode.solve() {
        let solve = cfg.solve.as_ref().expect("validated");
        let fields = family
            .members
            .iter()
            .map(|m| ScalarField::read(&dir.join(stem(m.k))))
            .collect::<liouville_core::Result<Vec<_>>>()?;
        let weights = family
            .members
            .iter()
            .map(|m| solve_weight(m, solve, cfg.grid.radius))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((fields, weights))
    } else {
        let grid = DiskGrid::shared(cfg.grid.radius, cfg.grid.n)?;
        let fields = family
            .members
            .par_iter()
            .map(|m| m.field(grid.clone()))
            .collect::<liouville_core::Result<Vec<_>>>()?;
        Ok((fields, family.members.iter().map(|m| m.weight()).collect()))
    }
}

fn column(
    report: &DiagnosticsReport,
    value: impl Fn(&liouville_core::asymptotics::KRow) -> Option<f64>,
) -> Vec<(f64, f64)> {
    report
        .rows
        .iter()
        .filter_map(|r| value(r).map(|v| (r.k as f64, v)))
        .collect()
}

type RowValue = fn(&liouville_core::asymptotics::KRow) -> Option<f64>;

pub fn diagnose_run(cfg: &ExperimentConfig, out: &Path) -> Result<DiagnosticsReport, CliError> {
    let family = cfg.family()?;
    let (fields, weights) = load_fields(cfg, &family, out)?;
    let report = run_diagnostics(cfg, &family, &fields, &weights)?;
    write_json(&out.join("report.json"), &report)?;
    let path = out.join("report.csv");
    let file =
        fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    report.write_csv(BufWriter::new(file))?;

    let plots = out.join("plots");
    create_dir(&plots)?;
    for row in &report.mass_profile.rows {
        let rows: Vec<(f64, f64)> = report
            .mass_profile
            .deltas
            .iter()
            .zip(&row.entries)
            .filter_map(|(d, e)| e.mass.map(|m| (*d, m)))
            .collect();
        write_dat(
            &plots.join(format!("mass_{}.dat", stem(row.k))),
            ["delta", "mass"],
            &rows,
        )?;
    }
    let columns: [(&str, RowValue); 7] = [
        ("energy_defect", |r| r.energy_defect),
        ("profile_residual", |r| r.profile_residual),
        ("peak_boundary", |r| r.peak_boundary),
        ("oscillation", |r| r.oscillation),
        ("harmonic_defect", |r| r.harmonic_defect),
        ("pointwise_c_star", |r| r.pointwise_c_star),
        ("algebraic_defect", |r| r.algebraic_defect),
    ];
    for (name, value) in columns {
        write_dat(
            &plots.join(format!("{name}.dat")),
            ["k", name],
            &column(&report, value),
        )?;
    }
    Ok(report)
}

pub fn cascade(cfg: &ExperimentConfig, out: &Path) -> Result<CascadeReport, CliError> {
    let family = cfg.family()?;
    if cfg.family.exponents.is_empty() {
        return Err(CliError::Config(
            "family: cascade detection needs at least one pole".into(),
        ));
    }
    let report = detect_family_cascade(&family)?;
    write_json(&out.join("cascade.json"), &report)?;
    let plots = out.join("plots");
    create_dir(&plots)?;
    let eps: Vec<(f64, f64)> = report
        .ks
        .iter()
        .zip(&report.eps)
        .map(|(k, e)| (*k as f64, *e))
        .collect();
    write_dat(&plots.join("cascade_eps.dat"), ["k", "eps"], &eps)?;
    let tracks = family.identity_tracks();
    for pole in &report.poles {
        let rows: Vec<(f64, f64)> = report
            .ks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let p = tracks[i][pole.track];
                (k as f64, p[0].hypot(p[1]) / report.eps[i])
            })
            .collect();
        write_dat(
            &plots.join(format!("cascade_ratio_j{}.dat", pole.label)),
            ["k", "ratio"],
            &rows,
        )?;
    }
    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

fn status_name(status: VerdictStatus) -> &'static str {
    match status {
        VerdictStatus::Plateau => "plateau",
        VerdictStatus::NoBlowUp => "no_blow_up",
        VerdictStatus::Inconclusive => "inconclusive",
    }
}

fn parameter_name(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::Degree => "degree",
        SweepParameter::Lambda0 => "lambda0",
        SweepParameter::GridN => "grid_n",
        SweepParameter::KMax => "k_max",
    }
}

/// Fields of one sweep run: exact, or solved in memory.
fn sweep_fields(
    cfg: &ExperimentConfig,
    family: &CollapsingFamily,
) -> Result<(Vec<ScalarField>, Vec<WeightSpec>), CliError> {
    if cfg.mode.solve() {
        let solve = cfg.solve.as_ref().expect("validated");
        let mut fields = Vec::new();
        let mut weights = Vec::new();
        for s in solve_family(cfg, family)? {
            match s.solution {
                Some(sol) if s.outcome.status == SolveStatus::Converged => {
                    weights.push(solve_weight(
                        &family.members[s.member],
                        solve,
                        cfg.grid.radius,
                    )?);
                    fields.push(sol.field);
                }
                _ => {
                    return Err(CliError::Solver(format!(
                        "sweep member k = {} failed: {}",
                        s.outcome.k,
                        s.outcome.message.unwrap_or_default()
                    )))
                }
            }
        }
        Ok((fields, weights))
    } else {
        let grid = DiskGrid::shared(cfg.grid.radius, cfg.grid.n)?;
        let fields = family
            .members
            .par_iter()
            .map(|m| m.field(grid.clone()))
            .collect::<liouville_core::Result<Vec<_>>>()?;
        Ok((fields, family.members.iter().map(|m| m.weight()).collect()))
    }
}

/// Runs every sweep value and writes `sweep.csv`; returns the number of data rows.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<usize, CliError> {
    let section = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: section required for the sweep command".into()))?;
    let runs: Vec<ExperimentConfig> = section
        .values
        .iter()
        .map(|&v| cfg.with_sweep_value(section.parameter, v))
        .collect::<Result<_, _>>()?;
    create_dir(out)?;
    let path = out.join("sweep.csv");
    let file =
        fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(io)?;
    let mut count = 0;
    for (run, (c, value)) in runs.iter().zip(&section.values).enumerate() {
        let family = c.family()?;
        let (fields, weights) = sweep_fields(c, &family)?;
        let report = run_diagnostics(c, &family, &fields, &weights)?;
        let (sigma, n, status) = match &report.quantization {
            Ok(q) => (q.sigma_hat, q.n, status_name(q.status).to_string()),
            Err(e) => (None, None, format!("error: {e}")),
        };
        for row in &report.rows {
            let outer = row.masses.last().copied().flatten();
            w.write_record([
                run.to_string(),
                parameter_name(section.parameter).to_string(),
                format!("{value}"),
                row.k.to_string(),
                format!("{:.12e}", row.tau),
                cell(row.lambda),
                cell(row.peak),
                cell(row.local_mass),
                cell(outer),
                cell(sigma),
                n.map(|n| n.to_string()).unwrap_or_default(),
                status.clone(),
                cell(row.energy_defect),
                cell(row.profile_residual),
                cell(row.peak_boundary),
                cell(row.oscillation),
                cell(row.algebraic_defect),
            ])
            .map_err(io)?;
            count += 1;
        }
    }
    w.flush()?;
    Ok(count)
}
