//! Dynamical, geometric and total phases of cyclic states, and the
//! non-Abelian transport u(t) of a degenerate cyclic subspace.
//!
//! Sign convention: u solves i·du/dt = Δ(t)·u with Δ = E − A, so that for a
//! one-dimensional subspace u(T) = e^{i(δ+γ)} = e^{iμT}.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{FrameTrace, Gauge};
use crate::linalg::{
    c64, commutator_norm, frob, hermitian_part, asymmetry, unitarity_defect, unitary_eigen, wrap_phase, CMatrix,
    CVector, C64,
};
use crate::parallel::{max_over, try_map_indices};
use crate::propagator::{cyclic_states, time_ordered_exp, FloquetDecomposition, Method, PropagatorTrace, TimeGrid};
use crate::spin::PeriodicHamiltonian;

fn inner(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// δ = −∫₀ᵀ ⟨ψ|H|ψ⟩ dt by composite Simpson on the grid (N even).
pub fn dynamical_phase(states: &[CVector], h: &PeriodicHamiltonian, grid: &TimeGrid) -> Result<f64> {
    let n = grid.steps();
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidGrid(format!("Simpson quadrature needs an even step count, got {n}")));
    }
    if states.len() != grid.len() {
        return Err(Error::InvalidGrid(format!("{} states for {} nodes", states.len(), grid.len())));
    }
    let energies = try_map_indices(grid.len(), |k| {
        let hk = h.sample(grid.node(k))?;
        let psi = &states[k];
        Ok(inner(psi, &(hk.matrix() * psi)).re)
    })?;
    let weighted: f64 = energies
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * e
        })
        .sum();
    Ok(-weighted * grid.step() / 3.0)
}

/// γ = −Σ_k arg⟨φ_k|φ_{k+1}⟩ over a closed single-valued chain, in (−π, π].
pub fn geometric_phase(states: &[CVector]) -> Result<f64> {
    let (first, last) = match (states.first(), states.last()) {
        (Some(a), Some(b)) if states.len() >= 2 => (a, b),
        _ => return Err(Error::Invalid("geometric phase needs at least two states".into())),
    };
    let gap = (first - last).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if gap > 1e-8 {
        return Err(Error::Invalid(format!("state path is not closed: ‖φ(T) − φ(0)‖ = {gap:.3e}")));
    }
    let mut total = 0.0;
    for (k, pair) in states.windows(2).enumerate() {
        let norm = inner(&pair[0], &pair[0]).re.sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Invalid(format!("state at node {k} has norm {norm}")));
        }
        let o = inner(&pair[0], &pair[1]);
        if o.norm() < 0.1 {
            return Err(Error::CoarseGrid(format!(
                "overlap between nodes {k} and {} has modulus {:.3e} < 0.1",
                k + 1,
                o.norm()
            )));
        }
        total -= o.arg();
    }
    Ok(wrap_phase(total))
}

/// |μ_n·T − δ − γ| reduced modulo 2π, for the n-th state of [`cyclic_states`].
pub fn total_phase_check(fd: &FloquetDecomposition, delta: f64, gamma: f64, n: usize) -> Result<f64> {
    let states = cyclic_states(fd);
    let s = states
        .get(n)
        .ok_or_else(|| Error::Invalid(format!("state index {n} out of range ({} states)", states.len())))?;
    Ok(wrap_phase(s.alpha - delta - gamma).abs())
}

/// E, A and Δ = E − A on one degeneracy subspace.
#[derive(Clone, Debug)]
pub struct ConnectionTrace {
    pub lambda: f64,
    pub gauge: Option<Gauge>,
    pub grid: TimeGrid,
    pub e: Vec<CMatrix>,
    pub a: Vec<CMatrix>,
    pub delta: Vec<CMatrix>,
    /// Closing unitary W with raw_end = frame(0)·W; identity for
    /// connections not built from frames.
    pub closure: CMatrix,
    /// Largest ‖A − A†‖_F before Hermitization.
    pub asymmetry: f64,
}

impl ConnectionTrace {
    /// Connection given directly by samples of E and A.
    pub fn from_samples(lambda: f64, grid: TimeGrid, e: Vec<CMatrix>, a: Vec<CMatrix>) -> Result<Self> {
        if e.len() != grid.len() || a.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} E and {} A samples for {} nodes",
                e.len(),
                a.len(),
                grid.len()
            )));
        }
        let l = e[0].nrows();
        for m in e.iter().chain(a.iter()) {
            if m.shape() != (l, l) {
                return Err(Error::DimensionMismatch { expected: l, found: m.nrows() });
            }
        }
        let asym = e.iter().chain(a.iter()).map(asymmetry).fold(0.0, f64::max);
        if asym > 1e-8 {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let delta = e.iter().zip(&a).map(|(e, a)| e - a).collect();
        Ok(ConnectionTrace { lambda, gauge: None, grid, e, a, delta, closure: CMatrix::identity(l, l), asymmetry: asym })
    }

    pub fn dim(&self) -> usize {
        self.closure.nrows()
    }

    /// max_k ‖Δ(t_k) − Δ(t_0)‖_F.
    pub fn delta_variation(&self) -> f64 {
        max_over(self.delta.len(), |k| frob(&(&self.delta[k] - &self.delta[0])))
    }
}

/// Fourth-order finite-difference derivative of `f` at node k.
fn derivative<'a, F>(f: F, k: usize, n: usize, step: f64) -> CMatrix
where
    F: Fn(usize) -> &'a CMatrix,
{
    let c = |w: [f64; 5], idx: [usize; 5]| -> CMatrix {
        let mut acc = f(idx[0]) * c64(w[0], 0.0);
        for i in 1..5 {
            acc += f(idx[i]) * c64(w[i], 0.0);
        }
        acc * c64(1.0 / (12.0 * step), 0.0)
    };
    match k {
        0 => c([-25.0, 48.0, -36.0, 16.0, -3.0], [0, 1, 2, 3, 4]),
        1 => c([-3.0, -10.0, 18.0, -6.0, 1.0], [0, 1, 2, 3, 4]),
        k if k == n - 1 => c([3.0, 10.0, -18.0, 6.0, -1.0], [n, n - 1, n - 2, n - 3, n - 4]),
        k if k == n => c([25.0, -48.0, 36.0, -16.0, 3.0], [n, n - 1, n - 2, n - 3, n - 4]),
        k => c([1.0, -8.0, 0.0, 8.0, -1.0], [k - 2, k - 1, k, k + 1, k + 2]),
    }
}

/// E(t_k) = F†H F, A(t_k) = i F†·dF/dt along the continuous frame path.
pub fn connection_matrices(frame: &FrameTrace, h: &PeriodicHamiltonian) -> Result<ConnectionTrace> {
    let grid = frame.grid;
    let n = grid.steps();
    if n < 4 {
        return Err(Error::InvalidGrid(format!("connection needs N ≥ 4, got {n}")));
    }
    if (grid.period() - h.period()).abs() > 1e-12 * h.period() {
        return Err(Error::InvalidGrid("frame and Hamiltonian periods differ".into()));
    }
    let step = grid.step();
    let rows = try_map_indices(grid.len(), |k| {
        let f = frame.continuous(k);
        let hk = h.sample(grid.node(k))?;
        let e = hermitian_part(&(f.adjoint() * hk.matrix() * f));
        let d = derivative(|i| frame.continuous(i), k, n, step);
        let a_raw = f.adjoint() * d * c64(0.0, 1.0);
        Ok((e, hermitian_part(&a_raw), asymmetry(&a_raw)))
    })?;
    let asym = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if asym > 1e-4 {
        return Err(Error::CoarseGrid(format!("connection A is non-Hermitian by {asym:.3e} > 1e-4")));
    }
    let (e, a): (Vec<CMatrix>, Vec<CMatrix>) = rows.into_iter().map(|r| (r.0, r.1)).unzip();
    let delta = e.iter().zip(&a).map(|(e, a)| e - a).collect();
    Ok(ConnectionTrace {
        lambda: frame.lambda,
        gauge: Some(frame.gauge),
        grid,
        e,
        a,
        delta,
        closure: frame.closure(),
        asymmetry: asym,
    })
}

/// Cubic Lagrange interpolation through the four nodes around `t`.
fn interpolate(samples: &[CMatrix], grid: &TimeGrid, t: f64) -> CMatrix {
    let n = grid.steps();
    let x = t / grid.step();
    let k = (x.floor().max(0.0) as usize).min(n - 1);
    let s = k.saturating_sub(1).min(n.saturating_sub(3));
    let u = x - s as f64;
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut out = CMatrix::zeros(samples[0].nrows(), samples[0].ncols());
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (u - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        out += &samples[s + i] * c64(w, 0.0);
    }
    out
}

fn sampled_exp(samples: &[CMatrix], grid: &TimeGrid, sign: f64) -> Result<Vec<CMatrix>> {
    let dim = samples[0].nrows();
    if grid.steps() < 3 {
        return Err(Error::InvalidGrid("sampled transport needs N ≥ 3".into()));
    }
    let v = time_ordered_exp(|t| Ok(interpolate(samples, grid, t) * c64(sign, 0.0)), dim, grid, Method::Magnus4)?;
    Ok(v.into_iter().map(|u| u.into_matrix()).collect())
}

/// u(t_k) and the holonomy u(T) of one subspace.
#[derive(Clone, Debug)]
pub struct TransportResult {
    pub lambda: f64,
    pub gauge: Option<Gauge>,
    /// u(t_k) relative to the stored frames; `u[N]` is the holonomy.
    pub u: Vec<CMatrix>,
    pub holonomy: CMatrix,
    pub eigenvalues: Vec<C64>,
    /// Eigenphases of the holonomy in (−π, π], ascending.
    pub eigenphases: Vec<f64>,
}

fn finish_transport(conn: &ConnectionTrace, mut u: Vec<CMatrix>) -> Result<TransportResult> {
    let last = u.pop().expect("nonempty");
    u.push(&conn.closure * last);
    let drift = u.iter().map(unitarity_defect).fold(0.0, f64::max);
    if drift > 1e-6 {
        return Err(Error::UnitarityDrift { drift, bound: 1e-6 });
    }
    let holonomy = u.last().unwrap().clone();
    let (eigenvalues, _) = unitary_eigen(&holonomy)?;
    let mut eigenphases: Vec<f64> = eigenvalues.iter().map(|z| wrap_phase(z.arg())).collect();
    eigenphases.sort_by(f64::total_cmp);
    Ok(TransportResult { lambda: conn.lambda, gauge: conn.gauge, u, holonomy, eigenvalues, eigenphases })
}

/// Solve i·du/dt = Δ(t)·u, u(0) = 1, and close the loop with the frame
/// closure so that U(t_k)·frame(0) = frame(t_k)·u(t_k) at every node.
pub fn transport_unitary(conn: &ConnectionTrace) -> Result<TransportResult> {
    transport_with_sign(conn, 1.0)
}

/// [`transport_unitary`] with the generator multiplied by `sign`. Only for
/// mutation checks of the acceptance suite.
#[doc(hidden)]
pub fn transport_with_sign(conn: &ConnectionTrace, sign: f64) -> Result<TransportResult> {
    let u = sampled_exp(&conn.delta, &conn.grid, sign)?;
    finish_transport(conn, u)
}

#[derive(Clone, Debug)]
pub struct FactorizedTransport {
    /// 𝒯e^{−i∫E}.
    pub dynamical: Vec<CMatrix>,
    /// 𝒯e^{+i∫A}, the non-Abelian geometric factor.
    pub geometric: Vec<CMatrix>,
    pub result: TransportResult,
    pub max_commutator: f64,
}

#[derive(Clone, Debug)]
pub enum Factorization {
    Applicable(Box<FactorizedTransport>),
    NotApplicable { max_commutator: f64 },
}

const COMMUTATOR_SAMPLES: usize = 65;

/// u(T) = 𝒯e^{−i∫E}·𝒯e^{i∫A}, valid when every E(t) commutes with every A(s).
pub fn factorized_transport(conn: &ConnectionTrace, commute_tol: f64) -> Result<Factorization> {
    let len = conn.grid.len();
    let stride = len.div_ceil(COMMUTATOR_SAMPLES).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    let max_commutator = max_over(idx.len() * idx.len(), |p| {
        let (i, j) = (idx[p / idx.len()], idx[p % idx.len()]);
        commutator_norm(&conn.e[i], &conn.a[j]).unwrap_or(f64::INFINITY)
    });
    if max_commutator > commute_tol {
        return Ok(Factorization::NotApplicable { max_commutator });
    }
    let dynamical = sampled_exp(&conn.e, &conn.grid, 1.0)?;
    let geometric = sampled_exp(&conn.a, &conn.grid, -1.0)?;
    let u: Vec<CMatrix> = dynamical.iter().zip(&geometric).map(|(d, g)| d * g).collect();
    let result = finish_transport(conn, u)?;
    Ok(Factorization::Applicable(Box::new(FactorizedTransport { dynamical, geometric, result, max_commutator })))
}

/// Holonomy eigenphases per gauge and their worst pairwise mismatch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolonomyComparison {
    pub phases: Vec<Vec<f64>>,
    pub max_distance: f64,
}

/// Bottleneck distance between two equal-size multisets of angles. On a
/// circle the optimal matching of sorted angles is a cyclic shift.
pub fn phase_multiset_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sort = |v: &[f64]| {
        let mut v: Vec<f64> = v.iter().map(|&x| wrap_phase(x)).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sort(a), sort(b));
    let n = a.len();
    Ok((0..n)
        .map(|shift| (0..n).map(|i| wrap_phase(a[i] - b[(i + shift) % n]).abs()).fold(0.0, f64::max))
        .fold(PI, f64::min))
}

pub fn holonomy_invariants(results: &[TransportResult]) -> Result<HolonomyComparison> {
    if results.is_empty() {
        return Err(Error::Invalid("no transport results to compare".into()));
    }
    let phases: Vec<Vec<f64>> = results.iter().map(|r| r.eigenphases.clone()).collect();
    let mut max_distance: f64 = 0.0;
    for i in 0..phases.len() {
        for j in i + 1..phases.len() {
            max_distance = max_distance.max(phase_multiset_distance(&phases[i], &phases[j])?);
        }
    }
    Ok(HolonomyComparison { phases, max_distance })
}

/// max_k ‖U(t_k)·frame(0) − frame(t_k)·u(t_k)‖_F.
pub fn frame_reconstruction_check(frame: &FrameTrace, u: &TransportResult, trace: &PropagatorTrace) -> Result<f64> {
    if !frame.grid.same_as(&trace.grid) || u.u.len() != frame.frames.len() {
        return Err(Error::InvalidGrid("frame, transport and propagator grids differ".into()));
    }
    let f0 = &frame.frames[0];
    Ok(max_over(frame.frames.len(), |k| {
        frob(&(trace.samples[k].matrix() * f0 - &frame.frames[k] * &u.u[k]))
    }))
}

/// Phases of one nondegenerate cyclic state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatePhases {
    pub mu: f64,
    pub alpha: f64,
    pub alpha_reduced: f64,
    pub delta: f64,
    pub gamma: f64,
    /// |α − δ − γ| mod 2π.
    pub closure: f64,
}

/// δ, γ and the closure residual for every cyclic state of M, with
/// |ψ(t)⟩ = U(t)|μ⟩ and single-valued |φ(t)⟩ = Z(t)|μ⟩.
pub fn cyclic_state_phases(
    fd: &FloquetDecomposition,
    trace: &PropagatorTrace,
    h: &PeriodicHamiltonian,
) -> Result<Vec<StatePhases>> {
    let n = trace.grid.steps();
    cyclic_states(fd)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let psi = trace.evolve_state(&s.vector);
            let delta = dynamical_phase(&psi, h, &trace.grid)?;
            let mut phi: Vec<CVector> = fd.z.iter().map(|z| z.matrix() * &s.vector).collect();
            phi[n] = phi[0].clone();
            let gamma = geometric_phase(&phi)?;
            let closure = total_phase_check(fd, delta, gamma, i)?;
            Ok(StatePhases { mu: s.mu, alpha: s.alpha, alpha_reduced: s.alpha_reduced, delta, gamma, closure })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::{invariant_from_floquet, invariant_from_initial, transport_eigenframes, InvariantSpec};
    use crate::linalg::{unitary_exp, HermitianOperator};
    use crate::propagator::{floquet_decompose, propagate};
    use crate::spin::{precessing_model, spin_generators, PrecessingFieldParams, PrecessingModel};

    const W: f64 = 0.4;
    const BIG: f64 = 1.0;

    struct Setup {
        model: PrecessingModel,
        trace: PropagatorTrace,
        fd: FloquetDecomposition,
    }

    fn setup(steps: usize) -> Setup {
        let model = precessing_model(PrecessingFieldParams { j: 1.0, larmor: W, precession: BIG }).unwrap();
        let grid = TimeGrid::new(model.period(), steps).unwrap();
        let trace = propagate(&model.hamiltonian, &grid, Method::Magnus4).unwrap();
        let fd = floquet_decompose(&trace).unwrap();
        Setup { model, trace, fd }
    }

    fn doublet() -> InvariantSpec {
        let id = CMatrix::identity(3, 3);
        InvariantSpec::Spectral {
            blocks: vec![
                (1.0, CMatrix::from_columns(&[id.column(0).into_owned(), id.column(1).into_owned()])),
                (-1.0, CMatrix::from_columns(&[id.column(2).into_owned()])),
            ],
        }
    }

    fn mixing_frame(xi: C64, zeta: C64) -> CMatrix {
        let z = c64(0., 0.);
        CMatrix::from_row_slice(3, 2, &[xi, zeta.conj(), zeta, -xi.conj(), z, z])
    }

    /// Δ of the closed form, −ω[[|ξ|², ξ*ζ*], [ξζ, |ζ|²]].
    fn delta_closed(xi: C64, zeta: C64) -> CMatrix {
        CMatrix::from_row_slice(
            2,
            2,
            &[c64(xi.norm_sqr(), 0.), xi.conj() * zeta.conj(), xi * zeta, c64(zeta.norm_sqr(), 0.)],
        ) * c64(-W, 0.)
    }

    #[test]
    fn dynamical_phase_examples() {
        let s = setup(256);
        let grid = s.trace.grid;
        let plus = CMatrix::identity(3, 3).column(0).into_owned();
        let zero = CMatrix::identity(3, 3).column(1).into_owned();
        let d = dynamical_phase(&s.trace.evolve_state(&plus), &s.model.hamiltonian, &grid).unwrap();
        assert!((d - W * 2.0 * PI).abs() < 1e-8, "{d}");
        let d0 = dynamical_phase(&s.trace.evolve_state(&zero), &s.model.hamiltonian, &grid).unwrap();
        assert!(d0.abs() < 1e-8);

        // eigenstate of a constant H
        let g = spin_generators(1.0).unwrap();
        let h = PeriodicHamiltonian::constant(g.j3.scale(0.7), 2.0).unwrap();
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let trace = propagate(&h, &grid, Method::Magnus4).unwrap();
        let d = dynamical_phase(&trace.evolve_state(&plus), &h, &grid).unwrap();
        assert!((d + 0.7 * 2.0).abs() < 1e-13);
        let odd = TimeGrid::new(2.0, 15).unwrap();
        assert!(dynamical_phase(&trace.evolve_state(&plus)[..16], &h, &odd).is_err());
    }

    #[test]
    fn geometric_phase_examples() {
        let v = CMatrix::identity(3, 3).column(0).into_owned();
        assert_eq!(geometric_phase(&vec![v.clone(); 9]).unwrap(), 0.0);

        let s = setup(256);
        for st in cyclic_states(&s.fd) {
            let mut phi: Vec<CVector> = s.fd.z.iter().map(|z| z.matrix() * &st.vector).collect();
            phi[256] = phi[0].clone();
            let g = geometric_phase(&phi).unwrap();
            assert!(g.abs() < 1e-7, "{g}");
        }

        // e^{iΩtJ₃}(cosθ|+⟩ + sinθ|0⟩): γ = −2π cos²θ, converging as h²
        let theta: f64 = 0.3;
        let g = spin_generators(1.0).unwrap();
        let want = wrap_phase(-2.0 * PI * theta.cos().powi(2));
        let mut errs = Vec::new();
        for n in [256usize, 512] {
            let grid = TimeGrid::new(2.0 * PI, n).unwrap();
            let v0 = CVector::from_vec(vec![c64(theta.cos(), 0.), c64(theta.sin(), 0.), c64(0., 0.)]);
            let mut phi: Vec<CVector> = grid.nodes().iter().map(|&t| unitary_exp(&g.j3, t).matrix() * &v0).collect();
            phi[n] = v0;
            errs.push(wrap_phase(geometric_phase(&phi).unwrap() - want).abs());
        }
        assert!(errs[1] < 1e-4, "{errs:?}");
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.2, "{errs:?}");

        let coarse: Vec<CVector> = (0..=4)
            .map(|k| CVector::from_vec(vec![c64((k as f64 * PI / 2.0).cos(), 0.), c64((k as f64 * PI / 2.0).sin(), 0.)]))
            .collect();
        assert!(matches!(geometric_phase(&coarse), Err(Error::CoarseGrid(_))));
    }

    #[test]
    fn phase_closure_for_cyclic_states() {
        let s = setup(256);
        let phases = cyclic_state_phases(&s.fd, &s.trace, &s.model.hamiltonian).unwrap();
        assert_eq!(phases.len(), 3);
        for p in &phases {
            assert!(p.closure < 1e-8, "{p:?}");
        }
        assert!((phases[0].delta - 0.8 * PI).abs() < 1e-8);

        let h = PeriodicHamiltonian::constant(HermitianOperator::zeros(2), 1.0).unwrap();
        let trace = propagate(&h, &TimeGrid::new(1.0, 8).unwrap(), Method::Magnus4).unwrap();
        let fd = floquet_decompose(&trace).unwrap();
        for p in cyclic_state_phases(&fd, &trace, &h).unwrap() {
            assert_eq!(p.closure, 0.0);
        }
    }

    #[test]
    fn closed_form_connection_for_basis_frame() {
        let s = setup(512);
        let inv = invariant_from_initial(&doublet(), &s.trace).unwrap();
        let f0 = mixing_frame(c64(1., 0.), c64(0., 0.));
        let fr = transport_eigenframes(&inv, 1.0, Gauge::Floquet, Some(&s.fd), Some(&f0)).unwrap();
        let conn = connection_matrices(&fr, &s.model.hamiltonian).unwrap();
        let r = BIG / 2f64.sqrt();
        let e = CMatrix::from_row_slice(2, 2, &[c64(-W, 0.), c64(r, 0.), c64(r, 0.), c64(0., 0.)]);
        let a = CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(r, 0.), c64(r, 0.), c64(0., 0.)]);
        for k in 0..conn.grid.len() {
            assert!(frob(&(&conn.e[k] - &e)) < 1e-6);
            assert!(frob(&(&conn.a[k] - &a)) < 1e-6, "k={k}: {}", frob(&(&conn.a[k] - &a)));
            assert!(frob(&(&conn.delta[k] - delta_closed(c64(1., 0.), c64(0., 0.)))) < 1e-6);
        }
        assert!(conn.delta_variation() < 1e-6);

        let t = transport_unitary(&conn).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::from_polar(1.0, 0.8 * PI), c64(1., 0.)]));
        assert!(frob(&(&t.holonomy - want)) < 1e-6);
        assert!(frame_reconstruction_check(&fr, &t, &s.trace).unwrap() < 1e-6);
        assert!(matches!(factorized_transport(&conn, 1e-8).unwrap(), Factorization::NotApplicable { .. }));
    }

    #[test]
    fn nonabelian_holonomy_agrees_across_gauges() {
        let s = setup(512);
        let inv = invariant_from_initial(&doublet(), &s.trace).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let (xi, zeta) = (c64(h, 0.), c64(h, 0.));
        let f0 = mixing_frame(xi, zeta);
        let mut results = Vec::new();
        for gauge in [Gauge::Floquet, Gauge::Aligned] {
            let fd = (gauge == Gauge::Floquet).then_some(&s.fd);
            let fr = transport_eigenframes(&inv, 1.0, gauge, fd, Some(&f0)).unwrap();
            let conn = connection_matrices(&fr, &s.model.hamiltonian).unwrap();
            let t = transport_unitary(&conn).unwrap();
            assert!(frame_reconstruction_check(&fr, &t, &s.trace).unwrap() < 1e-6, "{gauge}");
            results.push(t);
        }
        // 1 + (e^{iωT} − 1)P with P = ½[[1,1],[1,1]]
        let p = CMatrix::from_element(2, 2, c64(0.5, 0.));
        let want = CMatrix::identity(2, 2) + p * (C64::from_polar(1.0, 0.8 * PI) - 1.0);
        for r in &results {
            assert!(frob(&(&r.holonomy - &want)) < 1e-6, "{:?}: {}", r.gauge, frob(&(&r.holonomy - &want)));
        }
        let cmp = holonomy_invariants(&results).unwrap();
        assert!(cmp.max_distance < 1e-7, "{}", cmp.max_distance);
        assert!(phase_multiset_distance(&cmp.phases[0], &[0.0, 0.8 * PI]).unwrap() < 1e-7);
    }

    #[test]
    fn abelian_consistency_for_nondegenerate_states() {
        let s = setup(256);
        let inv = invariant_from_floquet(&s.fd).unwrap();
        let phases = cyclic_state_phases(&s.fd, &s.trace, &s.model.hamiltonian).unwrap();
        for (c, p) in inv.spectrum.clusters.iter().zip(&phases) {
            let fr = transport_eigenframes(&inv, c.value, Gauge::Floquet, Some(&s.fd), None).unwrap();
            let t = transport_unitary(&connection_matrices(&fr, &s.model.hamiltonian).unwrap()).unwrap();
            let phase = t.holonomy[(0, 0)].arg();
            assert!(wrap_phase(phase - p.delta - p.gamma).abs() < 1e-6);
            let flipped = transport_with_sign(&connection_matrices(&fr, &s.model.hamiltonian).unwrap(), -1.0).unwrap();
            if p.mu.abs() > 0.1 {
                assert!(wrap_phase(flipped.holonomy[(0, 0)].arg() - p.delta - p.gamma).abs() > 0.1);
            }
        }
    }

    #[test]
    fn commuting_family_factorizes() {
        let grid = TimeGrid::new(2.0 * PI, 256).unwrap();
        let x = spin_generators(0.5).unwrap().j1.matrix() * c64(2.0, 0.0);
        let f = |t: f64| 1.0 + 0.5 * t.cos();
        let g = |t: f64| 0.3 * t.sin() + 0.2;
        let e: Vec<CMatrix> = grid.nodes().iter().map(|&t| &x * c64(f(t), 0.)).collect();
        let a: Vec<CMatrix> = grid.nodes().iter().map(|&t| &x * c64(g(t), 0.)).collect();
        let conn = ConnectionTrace::from_samples(0.0, grid, e, a).unwrap();
        let direct = transport_unitary(&conn).unwrap();
        let Factorization::Applicable(fac) = factorized_transport(&conn, 1e-10).unwrap() else {
            panic!("commuting family must factorize");
        };
        assert!(frob(&(&fac.result.holonomy - &direct.holonomy)) < 1e-8);
        // ∫f − ∫g = 2π − 0.4π
        let want = unitary_exp(&HermitianOperator::new(x).unwrap(), -(2.0 * PI - 0.4 * PI));
        assert!(frob(&(&direct.holonomy - want.matrix())) < 1e-8);

        // E ≡ A
        let same: Vec<CMatrix> = conn.e.clone();
        let conn = ConnectionTrace::from_samples(0.0, grid, same.clone(), same).unwrap();
        assert!(frob(&(transport_unitary(&conn).unwrap().holonomy - CMatrix::identity(2, 2))) < 1e-14);
        let Factorization::Applicable(fac) = factorized_transport(&conn, 1e-10).unwrap() else { panic!() };
        assert!(frob(&(&fac.result.holonomy - CMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn holonomy_phase_examples() {
        let u = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::from_polar(1.0, 0.3), C64::from_polar(1.0, -2.0)]));
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let mk = |m: CMatrix| finish_transport(
            &ConnectionTrace::from_samples(0.0, grid, vec![CMatrix::zeros(2, 2); 9], vec![CMatrix::zeros(2, 2); 9]).unwrap(),
            vec![m],
        )
        .unwrap();
        let r = mk(u.clone());
        assert!(phase_multiset_distance(&r.eigenphases, &[0.3, -2.0]).unwrap() < 1e-14);
        let w = unitary_exp(&spin_generators(0.5).unwrap().j2, 0.77);
        let conj = w.matrix().adjoint() * &u * w.matrix();
        let cmp = holonomy_invariants(&[r, mk(conj)]).unwrap();
        assert!(cmp.max_distance < 1e-12);
        // wrap-around matching
        assert!(phase_multiset_distance(&[PI - 1e-9, 0.0], &[-PI + 1e-9, 0.0]).unwrap() < 1e-8);
    }

    #[test]
    fn coarse_connection_rejected() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        assert!(ConnectionTrace::from_samples(
            0.0,
            grid,
            vec![CMatrix::from_element(1, 1, c64(0., 1.)); 9],
            vec![CMatrix::zeros(1, 1); 9]
        )
        .is_err());
    }
}
