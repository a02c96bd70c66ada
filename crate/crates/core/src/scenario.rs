//! JSON-configured scenarios: build a model, run the whole pipeline and
//! collect every residual into a [`Report`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::invariants::{
    check_invariant_ode, check_lewis_relation, commutation_check, default_condition_tol, invariant_from_floquet,
    invariant_from_initial, nonabelian_condition, spectrum_constancy, transport_eigenframes, FrameTrace, Gauge,
    InvariantSpec, InvariantTrace, NonAbelianConditionReport,
};
use crate::linalg::{c64, frob, CMatrix, C64};
use crate::phases::{
    connection_matrices, cyclic_state_phases, frame_reconstruction_check, holonomy_invariants, transport_unitary,
    StatePhases, TransportResult,
};
use crate::propagator::{
    floquet_decompose_with_tol, propagate, write_trace_csv, FloquetDecomposition, Method, PropagatorTrace, TimeGrid,
};
use crate::spin::{
    field_hamiltonian, precessing_model, spin_generators, HarmonicPath, PeriodicHamiltonian, PrecessingFieldParams,
    TabulatedPath,
};

pub const REPORT_VERSION: &str = "1";

/// Complex scalar written as `[re, im]`.
pub type Complex2 = [f64; 2];

fn to_c(z: Complex2) -> C64 {
    c64(z[0], z[1])
}

fn from_c(z: C64) -> Complex2 {
    [z.re, z.im]
}

/// Row-major matrix of `[re, im]` pairs.
pub fn matrix_json(m: &CMatrix) -> Vec<Vec<Complex2>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| from_c(m[(i, j)])).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Precessing {
        #[serde(default = "one")]
        j: f64,
        omega: f64,
        big_omega: f64,
    },
    CustomField {
        #[serde(default = "one")]
        b: f64,
        j: f64,
        period: f64,
        path: PathConfig,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathConfig {
    /// R(t) = c + Σₙ aₙcos(2πnt/T) + bₙsin(2πnt/T).
    Harmonic {
        #[serde(default)]
        constant: [f64; 3],
        #[serde(default)]
        cos: Vec<[f64; 3]>,
        #[serde(default)]
        sin: Vec<[f64; 3]>,
    },
    /// Uniform samples over [0, T).
    Tabulated { samples: Vec<[f64; 3]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub method: Method,
}

fn default_steps() -> usize {
    512
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { steps: default_steps(), method: Method::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub lambda: f64,
    /// Indices of computational basis vectors spanning the eigenspace.
    pub basis: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantConfig {
    #[default]
    FromFloquet,
    Spectral(Vec<BlockConfig>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameConfig {
    /// ψ₁ = ξ|b₀⟩ + ζ|b₁⟩, ψ₂ = ζ*|b₀⟩ − ξ*|b₁⟩ on a two-dimensional
    /// eigenspace with basis (b₀, b₁).
    Mixing {
        xi: Complex2,
        zeta: Complex2,
        #[serde(default)]
        lambda: Option<f64>,
    },
    /// Explicit columns, each a list of `[re, im]` amplitudes.
    Vectors { vectors: Vec<Vec<Complex2>>, lambda: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub resonance: f64,
    pub floquet_reconstruction: f64,
    pub periodicity: f64,
    pub commutation: f64,
    pub spectrum: f64,
    pub ode_residual: f64,
    pub lewis: f64,
    pub closure: f64,
    pub frame_reconstruction: f64,
    pub cross_gauge: f64,
    pub nonabelian: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            resonance: crate::linalg::DEFAULT_RESONANCE_TOL,
            floquet_reconstruction: 1e-8,
            periodicity: 1e-8,
            commutation: 1e-8,
            spectrum: 1e-8,
            ode_residual: 1e-3,
            lewis: 1e-3,
            closure: 1e-6,
            frame_reconstruction: 1e-6,
            cross_gauge: 1e-7,
            nonabelian: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub invariant: InvariantConfig,
    #[serde(default)]
    pub frame: Option<FrameConfig>,
    #[serde(default = "all_gauges")]
    pub gauges: Vec<Gauge>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "scenario".into()
}

fn all_gauges() -> Vec<Gauge> {
    vec![Gauge::Floquet, Gauge::Aligned]
}

pub const BUILTIN_SCENARIOS: &[&str] = &["spin1-precessing"];

/// The precessing spin-1 scenario with I(0) = diag(1, 1, −1) and the
/// balanced frame ξ = ζ = 1/√2 on the λ = 1 eigenspace.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "spin1-precessing" => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            Some(ScenarioConfig {
                name: name.into(),
                model: ModelConfig::Precessing { j: 1.0, omega: 0.4, big_omega: 1.0 },
                grid: GridConfig::default(),
                invariant: InvariantConfig::Spectral(vec![
                    BlockConfig { lambda: 1.0, basis: vec![0, 1] },
                    BlockConfig { lambda: -1.0, basis: vec![2] },
                ]),
                frame: Some(FrameConfig::Mixing { xi: [s, 0.0], zeta: [s, 0.0], lambda: Some(1.0) }),
                gauges: all_gauges(),
                tolerances: Tolerances::default(),
                output: OutputConfig::default(),
            })
        }
        _ => None,
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.steps;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!("grid.steps must be a power of two ≥ 8, got {n}")));
        }
        if self.gauges.is_empty() {
            return Err(Error::Config("at least one gauge is required".into()));
        }
        match &self.model {
            ModelConfig::Precessing { j, omega, big_omega } => {
                PrecessingFieldParams { j: *j, larmor: *omega, precession: *big_omega }.validate()?;
            }
            ModelConfig::CustomField { j, period, path, .. } => {
                crate::spin::Spin::new(*j)?;
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(Error::Config(format!("period must be positive and finite, got {period}")));
                }
                if let PathConfig::Tabulated { samples } = path {
                    if samples.len() < 2 {
                        return Err(Error::Config("a tabulated path needs at least two samples".into()));
                    }
                }
            }
        }
        if let Some(FrameConfig::Mixing { xi, zeta, .. }) = &self.frame {
            let norm = to_c(*xi).norm_sqr() + to_c(*zeta).norm_sqr();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Config(format!("frame must satisfy |xi|^2 + |zeta|^2 = 1, got {norm:.12}")));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("resonance", t.resonance),
            ("floquet_reconstruction", t.floquet_reconstruction),
            ("periodicity", t.periodicity),
            ("commutation", t.commutation),
            ("spectrum", t.spectrum),
            ("ode_residual", t.ode_residual),
            ("lewis", t.lewis),
            ("closure", t.closure),
            ("frame_reconstruction", t.frame_reconstruction),
            ("cross_gauge", t.cross_gauge),
            ("nonabelian", t.nonabelian),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn hamiltonian(&self) -> Result<PeriodicHamiltonian> {
        match &self.model {
            ModelConfig::Precessing { j, omega, big_omega } => {
                Ok(precessing_model(PrecessingFieldParams { j: *j, larmor: *omega, precession: *big_omega })?.hamiltonian)
            }
            ModelConfig::CustomField { b, j, period, path } => {
                let gens = spin_generators(*j)?;
                match path {
                    PathConfig::Harmonic { constant, cos, sin } => field_hamiltonian(
                        *b,
                        HarmonicPath {
                            constant: *constant,
                            cos: cos.clone(),
                            sin: sin.clone(),
                            angular_frequency: 2.0 * PI / period,
                        },
                        gens,
                        *period,
                    ),
                    PathConfig::Tabulated { samples } => {
                        field_hamiltonian(*b, TabulatedPath::new(samples.clone(), *period)?, gens, *period)
                    }
                }
            }
        }
    }
}

/// A residual compared with its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conventions {
    pub phase_zone: String,
    pub sign: String,
    pub complex: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            phase_zone: "quasienergies in (-pi/T, pi/T], phases in (-pi, pi]".into(),
            sign: "U(t) = Z(t) exp(iMt); i du/dt = (E - A) u; u(T) = exp(i(delta + gamma)) when l = 1".into(),
            complex: "[re, im]".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FloquetSummary {
    pub mu: Vec<f64>,
    pub multiplicity: Vec<usize>,
    pub reconstruction: f64,
    pub z_periodicity: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checks {
    pub ode_residual: f64,
    pub periodicity: f64,
    pub commutation: f64,
    pub lewis: f64,
    pub spectrum_constancy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub lambda: f64,
    pub multiplicity: usize,
    pub gauge: Gauge,
    #[serde(rename = "E0")]
    pub e0: Vec<Vec<Complex2>>,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<Complex2>>,
    #[serde(rename = "Delta0")]
    pub delta0: Vec<Vec<Complex2>>,
    pub delta_variation: f64,
    pub a_asymmetry: f64,
    #[serde(rename = "uT")]
    pub u_t: Vec<Vec<Complex2>>,
    pub holonomy_phases: Vec<f64>,
    pub det_phase: f64,
    pub frame_reconstruction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Skipped {
    pub lambda: f64,
    pub gauge: Gauge,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub conventions: Conventions,
    pub config: ScenarioConfig,
    pub floquet: FloquetSummary,
    pub checks: Checks,
    pub nonabelian_condition: NonAbelianConditionReport,
    pub states: Vec<StatePhases>,
    pub subspaces: Vec<SubspaceReport>,
    pub skipped: Vec<Skipped>,
    pub cross_gauge_distance: f64,
    pub failures: Vec<Failure>,
    pub passed: bool,
    /// SHA-256 of the report with `checksum` and `timings` removed.
    pub checksum: String,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn compute_checksum(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("checksum");
            obj.remove("timings");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// A finished run: the report plus the traces behind it.
pub struct ScenarioRun {
    pub report: Report,
    pub trace: PropagatorTrace,
    pub floquet: FloquetDecomposition,
    pub transports: Vec<TransportResult>,
}

fn initial_frame(cfg: &FrameConfig, basis: &CMatrix) -> Result<CMatrix> {
    match cfg {
        FrameConfig::Mixing { xi, zeta, .. } => {
            if basis.ncols() != 2 {
                return Err(Error::Config(format!(
                    "an (xi, zeta) frame needs a two-dimensional eigenspace, found multiplicity {}",
                    basis.ncols()
                )));
            }
            let (xi, zeta) = (to_c(*xi), to_c(*zeta));
            let w = CMatrix::from_row_slice(2, 2, &[xi, zeta.conj(), zeta, -xi.conj()]);
            Ok(basis * w)
        }
        FrameConfig::Vectors { vectors, .. } => {
            let dim = basis.nrows();
            if vectors.len() != basis.ncols() {
                return Err(Error::Config(format!(
                    "{} frame vectors for an eigenspace of multiplicity {}",
                    vectors.len(),
                    basis.ncols()
                )));
            }
            let mut f = CMatrix::zeros(dim, vectors.len());
            for (a, v) in vectors.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::Config(format!("frame vector {a} has length {}, expected {dim}", v.len())));
                }
                for (i, z) in v.iter().enumerate() {
                    f[(i, a)] = to_c(*z);
                }
            }
            Ok(f)
        }
    }
}

fn invariant_spec(cfg: &InvariantConfig, dim: usize) -> Result<Option<InvariantSpec>> {
    let InvariantConfig::Spectral(blocks) = cfg else { return Ok(None) };
    let mut seen = vec![false; dim];
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut basis = CMatrix::zeros(dim, b.basis.len());
        for (col, &i) in b.basis.iter().enumerate() {
            if i >= dim || seen[i] {
                return Err(Error::Config(format!("basis index {i} is out of range or repeated (dimension {dim})")));
            }
            seen[i] = true;
            basis[(i, col)] = c64(1.0, 0.0);
        }
        out.push((b.lambda, basis));
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Config("invariant blocks must cover every basis index".into()));
    }
    Ok(Some(InvariantSpec::Spectral { blocks: out }))
}

fn frame_lambda(cfg: &FrameConfig, inv: &InvariantTrace) -> Result<f64> {
    let explicit = match cfg {
        FrameConfig::Mixing { lambda, .. } => *lambda,
        FrameConfig::Vectors { lambda, .. } => Some(*lambda),
    };
    match explicit {
        Some(l) => Ok(l),
        None => inv
            .spectrum
            .clusters
            .iter()
            .find(|c| c.multiplicity() == 2)
            .map(|c| c.value)
            .ok_or_else(|| Error::Config("no two-dimensional eigenspace for the (xi, zeta) frame".into())),
    }
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.insert(stage.into(), (now - self.1).as_secs_f64());
        self.1 = now;
    }
}

/// Largest ‖I(T) − I(0)‖_F for which eigenframes are still transported; a
/// larger defect leaves the closing unitary of each frame non-unitary.
const FRAME_CLOSURE_TOL: f64 = 1e-6;

fn check(failures: &mut Vec<Failure>, name: &str, value: f64, bound: f64) {
    if value.is_nan() || value > bound {
        failures.push(Failure { check: name.into(), value, bound });
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let tol = cfg.tolerances;
    let mut timer = Timer(BTreeMap::new(), Instant::now());
    let mut failures = Vec::new();

    let h = cfg.hamiltonian()?;
    let grid = TimeGrid::new(h.period(), cfg.grid.steps)?;
    let trace = propagate(&h, &grid, cfg.grid.method)?;
    timer.lap("propagate");

    let fd = floquet_decompose_with_tol(&trace, tol.resonance)?;
    for w in &fd.warnings {
        log::warn!("{w}");
    }
    let floquet = FloquetSummary {
        mu: fd.spectrum.values(),
        multiplicity: fd.spectrum.multiplicities(),
        reconstruction: fd.reconstruction_residual(&trace)?,
        z_periodicity: fd.periodicity_defect(),
        warnings: fd.warnings.clone(),
    };
    check(&mut failures, "floquet_reconstruction", floquet.reconstruction, tol.floquet_reconstruction);
    check(&mut failures, "z_periodicity", floquet.z_periodicity, tol.periodicity);
    timer.lap("floquet");

    let inv = match invariant_spec(&cfg.invariant, h.dim())? {
        Some(spec) => invariant_from_initial(&spec, &trace)?,
        None => invariant_from_floquet(&fd)?,
    };
    let commutation = commutation_check(inv.initial(), &fd.m)?;
    let checks = Checks {
        ode_residual: check_invariant_ode(&inv, &h)?,
        periodicity: inv.periodicity_defect(),
        commutation,
        lewis: 0.0,
        spectrum_constancy: spectrum_constancy(&inv)?,
    };
    let condition = nonabelian_condition(&inv.spectrum, &fd, tol.nonabelian)?;
    timer.lap("invariant");

    let frame_target = match &cfg.frame {
        Some(f) => {
            let lambda = frame_lambda(f, &inv)?;
            let idx = inv
                .spectrum
                .find(lambda, 1e-8 * lambda.abs().max(1.0))
                .ok_or(Error::EigenvalueNotFound { lambda })?;
            Some((idx, initial_frame(f, &inv.spectrum.clusters[idx].basis)?))
        }
        None => None,
    };

    let mut frames: Vec<FrameTrace> = Vec::new();
    let mut skipped = Vec::new();
    let floquet_ok = commutation <= default_condition_tol(h.dim()).max(tol.commutation);
    let periodic = checks.periodicity <= FRAME_CLOSURE_TOL;
    for (ci, cluster) in inv.spectrum.clusters.iter().enumerate() {
        let initial = frame_target.as_ref().filter(|(i, _)| *i == ci).map(|(_, f)| f);
        for &gauge in &cfg.gauges {
            if !periodic {
                skipped.push(Skipped {
                    lambda: cluster.value,
                    gauge,
                    reason: format!("I(t) is not periodic (defect {:.3e})", checks.periodicity),
                });
                continue;
            }
            if gauge == Gauge::Floquet && !floquet_ok {
                skipped.push(Skipped {
                    lambda: cluster.value,
                    gauge,
                    reason: format!("I(0) does not commute with M (residual {commutation:.3e})"),
                });
                continue;
            }
            let fd_ref = (gauge == Gauge::Floquet).then_some(&fd);
            frames.push(transport_eigenframes(&inv, cluster.value, gauge, fd_ref, initial)?);
        }
    }
    timer.lap("frames");

    let mut checks = checks;
    checks.lewis = match frames.first() {
        Some(first) => {
            let same_gauge: Vec<FrameTrace> = frames.iter().filter(|f| f.gauge == first.gauge).cloned().collect();
            check_lewis_relation(&same_gauge, &h)?
        }
        None => 0.0,
    };
    check(&mut failures, "ode_residual", checks.ode_residual, tol.ode_residual);
    check(&mut failures, "invariant_periodicity", checks.periodicity, tol.periodicity);
    check(&mut failures, "commutation", checks.commutation, tol.commutation);
    check(&mut failures, "lewis", checks.lewis, tol.lewis);
    check(&mut failures, "spectrum_constancy", checks.spectrum_constancy, tol.spectrum);

    let states: Vec<StatePhases> = {
        let all = cyclic_state_phases(&fd, &trace, &h)?;
        let mut out = Vec::new();
        let mut i = 0;
        for c in &fd.spectrum.clusters {
            if c.multiplicity() == 1 {
                out.push(all[i].clone());
            }
            i += c.multiplicity();
        }
        out
    };
    for (i, s) in states.iter().enumerate() {
        check(&mut failures, &format!("state_closure[{i}]"), s.closure, tol.closure);
    }
    timer.lap("state_phases");

    let computed = crate::parallel::try_map_indices(frames.len(), |i| {
        let conn = connection_matrices(&frames[i], &h)?;
        let t = transport_unitary(&conn)?;
        let recon = frame_reconstruction_check(&frames[i], &t, &trace)?;
        Ok((conn, t, recon))
    })?;
    let mut subspaces = Vec::new();
    let mut transports = Vec::new();
    for (frame, (conn, t, recon)) in frames.iter().zip(computed) {
        let det = t.holonomy.determinant();
        check(
            &mut failures,
            &format!("frame_reconstruction[{}:{}]", frame.lambda, frame.gauge),
            recon,
            tol.frame_reconstruction,
        );
        subspaces.push(SubspaceReport {
            lambda: frame.lambda,
            multiplicity: frame.multiplicity(),
            gauge: frame.gauge,
            e0: matrix_json(&conn.e[0]),
            a0: matrix_json(&conn.a[0]),
            delta0: matrix_json(&conn.delta[0]),
            delta_variation: conn.delta_variation(),
            a_asymmetry: conn.asymmetry,
            u_t: matrix_json(&t.holonomy),
            holonomy_phases: t.eigenphases.clone(),
            det_phase: det.arg(),
            frame_reconstruction: recon,
        });
        transports.push(t);
    }

    let mut cross_gauge_distance: f64 = 0.0;
    for cluster in &inv.spectrum.clusters {
        let group: Vec<TransportResult> =
            transports.iter().filter(|t| t.lambda == cluster.value).cloned().collect();
        if group.len() > 1 {
            cross_gauge_distance = cross_gauge_distance.max(holonomy_invariants(&group)?.max_distance);
        }
    }
    check(&mut failures, "cross_gauge_distance", cross_gauge_distance, tol.cross_gauge);
    timer.lap("transport");

    let mut report = Report {
        version: REPORT_VERSION.into(),
        conventions: Conventions::default(),
        config: cfg.clone(),
        floquet,
        checks,
        nonabelian_condition: condition,
        states,
        subspaces,
        skipped,
        cross_gauge_distance,
        passed: failures.is_empty(),
        failures,
        checksum: String::new(),
        timings: BTreeMap::new(),
    };
    report.checksum = report.compute_checksum();
    report.timings = timer.0;
    Ok(ScenarioRun { report, trace, floquet: fd, transports })
}

impl ScenarioRun {
    /// Write `report.json` and, for CSV formats, `propagator.csv`,
    /// `floquet_z.csv` and one `transport_<i>_<gauge>.csv` per subspace.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<()> {
        let io = |e: std::io::Error| Error::Config(format!("cannot write to {}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let file = File::create(dir.join("report.json")).map_err(io)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.report)
            .map_err(|e| Error::Config(format!("cannot write report: {e}")))?;
        if format.csv() {
            self.trace.write_csv(BufWriter::new(File::create(dir.join("propagator.csv")).map_err(io)?)).map_err(io)?;
            self.floquet
                .write_z_csv(BufWriter::new(File::create(dir.join("floquet_z.csv")).map_err(io)?))
                .map_err(io)?;
            for (i, t) in self.transports.iter().enumerate() {
                let gauge = t.gauge.map_or("none".to_string(), |g| g.to_string());
                let out = File::create(dir.join(format!("transport_{i}_{gauge}.csv"))).map_err(io)?;
                let mats: Vec<&CMatrix> = t.u.iter().collect();
                write_trace_csv(BufWriter::new(out), &self.trace.grid, &mats).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Largest entrywise distance of a reported matrix from `m`.
pub fn reported_matrix_distance(reported: &[Vec<Complex2>], m: &CMatrix) -> f64 {
    let mut r = CMatrix::zeros(reported.len(), reported.first().map_or(0, |row| row.len()));
    for (i, row) in reported.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            r[(i, j)] = to_c(*z);
        }
    }
    if r.shape() != m.shape() {
        return f64::INFINITY;
    }
    frob(&(r - m))
}
