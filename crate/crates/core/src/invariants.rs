//! Periodic dynamical invariants I(t) = U(t)·I(0)·U†(t), their eigenframes,
//! and the test for whether a degenerate cyclic subspace can carry a
//! non-Abelian phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    c64, commutator, commutator_norm, default_cluster_tol, frob, herm_eig, polar_unitary, unitarity_defect,
    unitary_exp, CMatrix, CVector, HermitianOperator, SpectralDecomposition,
};
use crate::parallel::{max_over, try_map_indices};
use crate::propagator::{FloquetDecomposition, PropagatorTrace, TimeGrid};
use crate::spin::PeriodicHamiltonian;

/// Initial value I(0) of an invariant.
#[derive(Clone, Debug)]
pub enum InvariantSpec {
    /// I(0) = Σ c_n |ψ_n⟩⟨ψ_n| over a complete set of initial states.
    Weighted { weights: Vec<f64>, states: Vec<CVector> },
    /// I(0) = Σ λ_n Λ_n with Λ_n spanned by the orthonormal columns of each block.
    Spectral { blocks: Vec<(f64, CMatrix)> },
}

impl InvariantSpec {
    pub fn dim(&self) -> usize {
        match self {
            InvariantSpec::Weighted { states, .. } => states.first().map_or(0, |s| s.len()),
            InvariantSpec::Spectral { blocks } => blocks.first().map_or(0, |b| b.1.nrows()),
        }
    }

    /// Spectral data of I(0). For [`InvariantSpec::Spectral`] the supplied
    /// blocks are kept as the eigenbases.
    pub fn spectrum(&self) -> Result<SpectralDecomposition> {
        match self {
            InvariantSpec::Weighted { weights, states } => {
                if weights.len() != states.len() || states.is_empty() {
                    return Err(Error::Invalid(format!(
                        "{} weights for {} states",
                        weights.len(),
                        states.len()
                    )));
                }
                let dim = states[0].len();
                if states.len() < dim {
                    return Err(Error::Invalid(format!("{} states cannot be complete in dimension {dim}", states.len())));
                }
                let mut i0 = CMatrix::zeros(dim, dim);
                for (c, psi) in weights.iter().zip(states) {
                    if psi.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
                    }
                    if !c.is_finite() {
                        return Err(Error::Invalid("weights must be finite reals".into()));
                    }
                    i0 += psi * psi.adjoint() * c64(*c, 0.0);
                }
                let i0 = HermitianOperator::hermitize(i0)?;
                herm_eig(&i0, default_cluster_tol(i0.matrix()))
            }
            InvariantSpec::Spectral { blocks } => {
                let scale = blocks.iter().map(|b| b.0.abs()).fold(1.0, f64::max);
                SpectralDecomposition::from_blocks(blocks.clone(), 1e-8 * scale)
            }
        }
    }
}

/// Samples of a dynamical invariant with the spectrum of I(0).
#[derive(Clone, Debug)]
pub struct InvariantTrace {
    pub grid: TimeGrid,
    pub samples: Vec<HermitianOperator>,
    pub spectrum: SpectralDecomposition,
}

impl InvariantTrace {
    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn initial(&self) -> &HermitianOperator {
        &self.samples[0]
    }

    /// ‖I(t_N) − I(t_0)‖_F.
    pub fn periodicity_defect(&self) -> f64 {
        frob(&(self.samples.last().unwrap().matrix() - self.samples[0].matrix()))
    }
}

/// I(t_k) = U(t_k)·I(0)·U†(t_k).
pub fn invariant_from_initial(spec: &InvariantSpec, trace: &PropagatorTrace) -> Result<InvariantTrace> {
    let spectrum = spec.spectrum()?;
    if spectrum.dim() != trace.dim() {
        return Err(Error::DimensionMismatch { expected: trace.dim(), found: spectrum.dim() });
    }
    let i0 = HermitianOperator::hermitize(spectrum.reconstruct())?;
    let samples = try_map_indices(trace.samples.len(), |k| {
        if k == 0 {
            return Ok(i0.clone());
        }
        let u = trace.samples[k].matrix();
        HermitianOperator::hermitize(u * i0.matrix() * u.adjoint())
    })?;
    Ok(InvariantTrace { grid: trace.grid, samples, spectrum })
}

/// I(t_k) = Z(t_k)·M·Z†(t_k). Z is periodic by construction, so I(t_N) is
/// set to I(0) = M.
pub fn invariant_from_floquet(fd: &FloquetDecomposition) -> Result<InvariantTrace> {
    let m = fd.m.clone();
    let n = fd.z.len() - 1;
    let samples = try_map_indices(fd.z.len(), |k| {
        if k == 0 || k == n {
            return Ok(m.clone());
        }
        let z = fd.z[k].matrix();
        HermitianOperator::hermitize(z * m.matrix() * z.adjoint())
    })?;
    Ok(InvariantTrace { grid: fd.grid, samples, spectrum: fd.spectrum.clone() })
}

/// Eigendecompose every sample and compare with the spectrum of I(0).
///
/// Returns max_k max_n |λ_n(t_k) − λ_n(0)|. A change in the number of
/// clusters or their multiplicities is a level crossing.
pub fn spectrum_constancy(inv: &InvariantTrace) -> Result<f64> {
    node_spectra(inv).map(|(_, dev)| dev)
}

fn node_spectra(inv: &InvariantTrace) -> Result<(Vec<SpectralDecomposition>, f64)> {
    let tol = inv.spectrum.cluster_tol;
    let reference = inv.spectrum.multiplicities();
    let values = inv.spectrum.values();
    let spectra = try_map_indices(inv.samples.len(), |k| {
        let s = herm_eig(&inv.samples[k], tol)?;
        if s.multiplicities() != reference {
            return Err(Error::LevelCrossing(format!(
                "degeneracy pattern of I(t) changes from {reference:?} to {:?} at node {k} (t = {:.6})",
                s.multiplicities(),
                inv.grid.node(k)
            )));
        }
        Ok(s)
    })?;
    let dev = spectra
        .iter()
        .flat_map(|s| s.values().into_iter().zip(values.iter()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok((spectra, dev))
}

fn check_grids(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if !a.same_as(b) {
        return Err(Error::InvalidGrid("traces were sampled on different grids".into()));
    }
    Ok(())
}

/// max over interior nodes of ‖(I_{k+1} − I_{k−1})/2h − i[I_k, H(t_k)]‖_F.
pub fn check_invariant_ode(inv: &InvariantTrace, h: &PeriodicHamiltonian) -> Result<f64> {
    let grid = inv.grid;
    if grid.steps() < 4 {
        return Err(Error::InvalidGrid(format!("ODE residual needs N ≥ 4, got {}", grid.steps())));
    }
    if (grid.period() - h.period()).abs() > 1e-12 * h.period() {
        return Err(Error::InvalidGrid("invariant and Hamiltonian periods differ".into()));
    }
    let step = grid.step();
    let residuals = try_map_indices(grid.steps() - 1, |i| {
        let k = i + 1;
        let hk = h.sample(grid.node(k))?;
        let deriv = (inv.samples[k + 1].matrix() - inv.samples[k - 1].matrix()) * c64(1.0 / (2.0 * step), 0.0);
        let rhs = commutator(inv.samples[k].matrix(), hk.matrix()) * c64(0.0, 1.0);
        Ok(frob(&(deriv - rhs)))
    })?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// ‖[I(0), M]‖_F.
pub fn commutation_check(i0: &HermitianOperator, m: &HermitianOperator) -> Result<f64> {
    commutator_norm(i0.matrix(), m.matrix())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    /// |λ_n, a; t⟩ = Z(t)|λ_n, a; 0⟩.
    Floquet,
    /// Successive frames related by the polar factor of their overlap
    /// (discrete parallel transport).
    Aligned,
}

impl std::fmt::Display for Gauge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gauge::Floquet => "floquet",
            Gauge::Aligned => "aligned",
        })
    }
}

/// Single-valued orthonormal eigenframes of one degeneracy subspace of I(t).
#[derive(Clone, Debug)]
pub struct FrameTrace {
    pub lambda: f64,
    pub gauge: Gauge,
    pub grid: TimeGrid,
    /// `frames[N] == frames[0]`.
    pub frames: Vec<CMatrix>,
    /// The transported frame at t = T before closure. It spans the same
    /// subspace as `frames[0]`.
    pub raw_end: CMatrix,
}

impl FrameTrace {
    pub fn multiplicity(&self) -> usize {
        self.frames[0].ncols()
    }

    /// Frames along the continuous path: `frames[k]` for k < N, `raw_end` at N.
    pub fn continuous(&self, k: usize) -> &CMatrix {
        if k == self.grid.steps() {
            &self.raw_end
        } else {
            &self.frames[k]
        }
    }

    /// W = frame(0)†·raw_end, so that raw_end = frame(0)·W.
    pub fn closure(&self) -> CMatrix {
        self.frames[0].adjoint() * &self.raw_end
    }

    /// Column `a` of every frame: a single-valued state path.
    pub fn column(&self, a: usize) -> Vec<CVector> {
        self.frames.iter().map(|f| f.column(a).into_owned()).collect()
    }
}

/// Default tolerance of the commutation and projector checks.
pub fn default_condition_tol(dim: usize) -> f64 {
    1e-8 * dim as f64
}

/// Transport an eigenframe of I(t) for eigenvalue `lambda` around the cycle.
///
/// `initial` picks frame(0) (orthonormal columns spanning the eigenspace of
/// I(0)); by default the stored eigenbasis is used. The floquet gauge needs
/// the Floquet decomposition and [I(0), M] = 0.
pub fn transport_eigenframes(
    inv: &InvariantTrace,
    lambda: f64,
    gauge: Gauge,
    fd: Option<&FloquetDecomposition>,
    initial: Option<&CMatrix>,
) -> Result<FrameTrace> {
    let spec = &inv.spectrum;
    let idx = spec
        .find(lambda, spec.cluster_tol.max(1e-10 * lambda.abs()))
        .ok_or(Error::EigenvalueNotFound { lambda })?;
    let cluster = &spec.clusters[idx];
    let dim = inv.dim();
    let frame0 = match initial {
        None => cluster.basis.clone(),
        Some(f) => {
            if f.shape() != cluster.basis.shape() {
                return Err(Error::Invalid(format!(
                    "initial frame is {}×{}, eigenspace needs {}×{}",
                    f.nrows(),
                    f.ncols(),
                    dim,
                    cluster.multiplicity()
                )));
            }
            let defect = frob(&(f.adjoint() * f - CMatrix::identity(f.ncols(), f.ncols())));
            if defect > 1e-10 {
                return Err(Error::Invalid(format!("initial frame is not orthonormal (defect {defect:.3e})")));
            }
            let outside = frob(&(cluster.projector() * f - f));
            if outside > 1e-8 {
                return Err(Error::Invalid(format!(
                    "initial frame leaves the λ = {lambda} eigenspace (residual {outside:.3e})"
                )));
            }
            f.clone()
        }
    };

    let (spectra, _) = node_spectra(inv)?;
    let n = inv.grid.steps();
    let mut frames = Vec::with_capacity(n + 1);
    let raw_end = match gauge {
        Gauge::Floquet => {
            let fd = fd.ok_or_else(|| Error::Invalid("floquet gauge needs a Floquet decomposition".into()))?;
            check_grids(&inv.grid, &fd.grid)?;
            let residual = commutation_check(inv.initial(), &fd.m)?;
            let tol = default_condition_tol(dim);
            if residual > tol {
                return Err(Error::Invalid(format!(
                    "floquet gauge needs [I(0), M] = 0, residual {residual:.3e} > {tol:.1e}"
                )));
            }
            frames.push(frame0.clone());
            frames.extend(fd.z[1..n].iter().map(|z| z.matrix() * &frame0));
            fd.z[n].matrix() * &frame0
        }
        Gauge::Aligned => {
            frames.push(frame0.clone());
            for (k, s) in spectra.iter().enumerate().skip(1) {
                let c = &s.clusters[s.find(lambda, f64::INFINITY).expect("cluster count checked")];
                let overlap = c.basis.adjoint() * frames.last().unwrap();
                let smin = overlap.clone().singular_values().min();
                if smin < 0.1 {
                    return Err(Error::CoarseGrid(format!(
                        "eigenspace of λ = {lambda} turns too fast between nodes {} and {k} (overlap σ_min = {smin:.3e})",
                        k - 1
                    )));
                }
                let next = &c.basis * polar_unitary(&overlap)?.matrix();
                frames.push(next);
            }
            frames.pop().unwrap()
        }
    };
    frames.push(frame0);
    Ok(FrameTrace { lambda: cluster.value, gauge, grid: inv.grid, frames, raw_end })
}

/// Largest cross-subspace Lewis residual
/// ‖F_m†·H·F_n − i·F_m†·dF_n/dt‖_F (m ≠ n) over interior nodes, with
/// centered differences.
pub fn check_lewis_relation(frames: &[FrameTrace], h: &PeriodicHamiltonian) -> Result<f64> {
    let first = frames.first().ok_or_else(|| Error::Invalid("no frames supplied".into()))?;
    let grid = first.grid;
    let dim = first.frames[0].nrows();
    let covered: usize = frames.iter().map(FrameTrace::multiplicity).sum();
    if covered != dim {
        return Err(Error::Invalid(format!(
            "Lewis check needs frames for every eigenvalue: they cover {covered} of {dim} dimensions"
        )));
    }
    for f in frames {
        check_grids(&grid, &f.grid)?;
    }
    if grid.steps() < 4 {
        return Err(Error::InvalidGrid(format!("Lewis residual needs N ≥ 4, got {}", grid.steps())));
    }
    if frames.len() < 2 {
        return Ok(0.0);
    }
    let step = grid.step();
    let residuals = try_map_indices(grid.steps() - 1, |i| {
        let k = i + 1;
        let hk = h.sample(grid.node(k))?;
        let mut worst: f64 = 0.0;
        for (a, fm) in frames.iter().enumerate() {
            for (b, fn_) in frames.iter().enumerate() {
                if a == b {
                    continue;
                }
                let left = fm.continuous(k).adjoint();
                let deriv = (fn_.continuous(k + 1) - fn_.continuous(k - 1)) * c64(1.0 / (2.0 * step), 0.0);
                let r = &left * hk.matrix() * fn_.continuous(k) - &left * deriv * c64(0.0, 1.0);
                worst = worst.max(frob(&r));
            }
        }
        Ok(worst)
    })?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Per degenerate eigenprojector Λ of I(0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectorCondition {
    pub lambda: f64,
    pub multiplicity: usize,
    /// ‖MΛ − ΛMΛ‖_F; zero iff the subspace is M-invariant.
    pub invariance_residual: f64,
    /// min_μ ‖MΛ − μΛ‖_F over the quasienergies μ.
    pub eigenprojector_residual: f64,
    pub is_m_eigenprojector: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonAbelianConditionReport {
    /// ‖[I(0), M]‖_F.
    pub commutator_residual: f64,
    /// ‖[I(0), e^{iMT}]‖_F, which can vanish without the former vanishing
    /// at resonant periods.
    pub monodromy_commutator_residual: f64,
    pub commutes_with_m: bool,
    pub tolerance: f64,
    pub projectors: Vec<ProjectorCondition>,
    /// Commuting, and some degenerate Λ is not an eigenprojector of M.
    pub satisfied: bool,
}

/// The necessary condition for a non-Abelian cyclic phase: I(0) commutes
/// with M yet has a degenerate eigenprojector that M does not share.
pub fn nonabelian_condition(
    i0: &SpectralDecomposition,
    fd: &FloquetDecomposition,
    tol: f64,
) -> Result<NonAbelianConditionReport> {
    let m = fd.m.matrix();
    if i0.dim() != m.nrows() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: i0.dim() });
    }
    let i0_op = i0.reconstruct();
    let commutator_residual = commutator_norm(&i0_op, m)?;
    let monodromy = unitary_exp(&fd.m, fd.period());
    let monodromy_commutator_residual = commutator_norm(&i0_op, monodromy.matrix())?;
    let commutes_with_m = commutator_residual <= tol;
    let mus = fd.spectrum.values();
    let projectors: Vec<ProjectorCondition> = i0
        .clusters
        .iter()
        .filter(|c| c.multiplicity() > 1)
        .map(|c| {
            let p = c.projector();
            let mp = m * &p;
            let invariance_residual = frob(&(&mp - &p * &mp));
            let eigenprojector_residual = mus
                .iter()
                .map(|&mu| frob(&(&mp - &p * c64(mu, 0.0))))
                .fold(f64::INFINITY, f64::min);
            ProjectorCondition {
                lambda: c.value,
                multiplicity: c.multiplicity(),
                invariance_residual,
                eigenprojector_residual,
                is_m_eigenprojector: eigenprojector_residual <= tol,
            }
        })
        .collect();
    let satisfied = commutes_with_m && projectors.iter().any(|p| !p.is_m_eigenprojector);
    Ok(NonAbelianConditionReport {
        commutator_residual,
        monodromy_commutator_residual,
        commutes_with_m,
        tolerance: tol,
        projectors,
        satisfied,
    })
}

/// Largest ‖frame_a(t_k)†·frame_b(t_k)‖ unitarity defect between two frame
/// traces of the same subspace; zero iff they differ by a right unitary.
pub fn gauge_relation_defect(a: &FrameTrace, b: &FrameTrace) -> Result<f64> {
    check_grids(&a.grid, &b.grid)?;
    if a.multiplicity() != b.multiplicity() {
        return Err(Error::DimensionMismatch { expected: a.multiplicity(), found: b.multiplicity() });
    }
    Ok(max_over(a.frames.len(), |k| unitarity_defect(&(a.frames[k].adjoint() * &b.frames[k]))))
}
