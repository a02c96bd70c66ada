//! Time-ordered evolution on a uniform grid and the Floquet factorization
//! U(t) = Z(t)·e^{iMt}.
//!
//! Steps use Magnus integrators. Per-step factors are independent of one
//! another and are evaluated in parallel; only their ordered product is
//! sequential.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    asymmetry, c64, commutator, default_cluster_tol, frob, herm_eig, polar_unitary, unitary_exp,
    unitary_log_with_tol, wrap_phase, CMatrix, CVector, HermitianOperator, SpectralDecomposition, UnitaryOperator,
    DEFAULT_RESONANCE_TOL,
};
use crate::parallel::{max_over, try_map_indices};
use crate::spin::PeriodicHamiltonian;

/// Uniform nodes t_k = kT/N, k = 0..=N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    period: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(period: f64, steps: usize) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidGrid(format!("period must be positive and finite, got {period}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("grid needs at least one step".into()));
        }
        Ok(TimeGrid { period, steps })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.period / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.period
        } else {
            k as f64 * self.period / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    pub(crate) fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.period - other.period).abs() <= 1e-12 * self.period
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exponential midpoint rule, global order 2.
    Magnus2,
    /// Two-point Gauss–Legendre Magnus rule with the commutator term, global order 4.
    #[default]
    Magnus4,
}

impl Method {
    pub fn order(&self) -> u32 {
        match self {
            Method::Magnus2 => 2,
            Method::Magnus4 => 4,
        }
    }
}

/// Generator K_k of one step, V_{k+1} = e^{−iK_k}·V_k, for i·dV/dt = G(t)·V.
fn step_generator<F>(generator: &F, t0: f64, h: f64, method: Method) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    match method {
        Method::Magnus2 => Ok(generator(t0 + 0.5 * h)? * c64(h, 0.0)),
        Method::Magnus4 => {
            let d = 3f64.sqrt() / 6.0;
            let g1 = generator(t0 + (0.5 - d) * h)?;
            let g2 = generator(t0 + (0.5 + d) * h)?;
            let c = commutator(&g2, &g1);
            Ok((&g1 + &g2) * c64(0.5 * h, 0.0) - c * c64(0.0, 3f64.sqrt() / 12.0 * h * h))
        }
    }
}

/// Step factors e^{−iK_k} (re-unitarized) and the summed non-Hermitian part
/// of the generators, which bounds the unitarity drift an exact solver would
/// have produced.
fn step_factors<F>(generator: &F, grid: &TimeGrid, method: Method) -> Result<(Vec<UnitaryOperator>, f64)>
where
    F: Fn(f64) -> Result<CMatrix> + Sync + Send,
{
    let h = grid.step();
    let raw = try_map_indices(grid.steps(), |k| {
        let kmat = step_generator(generator, grid.node(k), h, method)?;
        let drift = asymmetry(&kmat);
        let herm = HermitianOperator::hermitize(kmat)?;
        let factor = polar_unitary(unitary_exp(&herm, -1.0).matrix())?;
        Ok((factor, drift))
    })?;
    let drift = raw.iter().map(|(_, d)| d).sum();
    Ok((raw.into_iter().map(|(f, _)| f).collect(), drift))
}

fn accumulate(factors: &[UnitaryOperator], dim: usize) -> Vec<UnitaryOperator> {
    let mut out = Vec::with_capacity(factors.len() + 1);
    out.push(UnitaryOperator::identity(dim));
    for f in factors {
        let next = f.compose(out.last().unwrap());
        out.push(next);
    }
    out
}

/// Samples U(t_k) of the evolution operator, U(0) = 1.
#[derive(Clone, Debug)]
pub struct PropagatorTrace {
    pub grid: TimeGrid,
    pub method: Method,
    pub samples: Vec<UnitaryOperator>,
    /// Per-step factors; samples[k+1] = factors[k]·samples[k].
    pub factors: Vec<UnitaryOperator>,
}

impl PropagatorTrace {
    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    /// U(T).
    pub fn monodromy(&self) -> &UnitaryOperator {
        self.samples.last().expect("trace is never empty")
    }

    /// |ψ(t_k)⟩ = U(t_k)|ψ(0)⟩.
    pub fn evolve_state(&self, psi0: &CVector) -> Vec<CVector> {
        self.samples.iter().map(|u| u.matrix() * psi0).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mats: Vec<&CMatrix> = self.samples.iter().map(|u| u.matrix()).collect();
        write_trace_csv(out, &self.grid, &mats)
    }
}

/// Integrate i·dU/dt = H(t)·U on `grid`.
pub fn propagate(h: &PeriodicHamiltonian, grid: &TimeGrid, method: Method) -> Result<PropagatorTrace> {
    if (grid.period() - h.period()).abs() > 1e-12 * h.period() {
        return Err(Error::InvalidGrid(format!(
            "grid period {} differs from Hamiltonian period {}",
            grid.period(),
            h.period()
        )));
    }
    if grid.steps() < 8 {
        return Err(Error::InvalidGrid(format!("propagation needs N ≥ 8 steps, got {}", grid.steps())));
    }
    let sample = |t: f64| h.sample(t).map(HermitianOperator::into_matrix);
    let (factors, _) = step_factors(&sample, grid, method)?;
    let samples = accumulate(&factors, h.dim());
    Ok(PropagatorTrace { grid: *grid, method, samples, factors })
}

/// V(t_k) = 𝒯exp(−i∫₀^{t_k} F), i.e. the solution of i·dV/dt = F(t)·V with V(0) = 1.
///
/// F should be Hermitian-valued. A non-Hermitian F is integrated through its
/// Hermitian part; if the discarded part would have moved V off the unitary
/// group by more than 1e-8 the call fails instead.
pub fn time_ordered_exp<F>(f: F, dim: usize, grid: &TimeGrid, method: Method) -> Result<Vec<UnitaryOperator>>
where
    F: Fn(f64) -> Result<CMatrix> + Sync + Send,
{
    let checked = |t: f64| {
        let m = f(t)?;
        if m.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: m.nrows() });
        }
        Ok(m)
    };
    let (factors, drift) = step_factors(&checked, grid, method)?;
    if drift > 1e-8 {
        return Err(Error::UnitarityDrift { drift, bound: 1e-8 });
    }
    Ok(accumulate(&factors, dim))
}

/// Floquet factorization U(t_k) = Z(t_k)·e^{iMt_k} on the trace grid.
#[derive(Clone, Debug)]
pub struct FloquetDecomposition {
    pub grid: TimeGrid,
    /// The Floquet exponent, eigenphases in (−π/T, π/T].
    pub m: HermitianOperator,
    /// Clustered eigenphases μ_n with multiplicities and eigenvector blocks.
    pub spectrum: SpectralDecomposition,
    /// Periodic factor at every node.
    pub z: Vec<UnitaryOperator>,
    /// Quasienergies that nearly coincide modulo 2π/T.
    pub warnings: Vec<String>,
}

impl FloquetDecomposition {
    pub fn period(&self) -> f64 {
        self.grid.period()
    }

    /// max(‖Z(t_0) − 1‖_F, ‖Z(t_N) − 1‖_F).
    pub fn periodicity_defect(&self) -> f64 {
        let n = self.m.dim();
        let id = CMatrix::identity(n, n);
        let first = frob(&(self.z[0].matrix() - &id));
        let last = frob(&(self.z.last().unwrap().matrix() - &id));
        first.max(last)
    }

    /// max_k ‖U(t_k) − Z(t_k)·e^{iMt_k}‖_F.
    pub fn reconstruction_residual(&self, trace: &PropagatorTrace) -> Result<f64> {
        if !self.grid.same_as(&trace.grid) {
            return Err(Error::InvalidGrid("trace and decomposition use different grids".into()));
        }
        Ok(max_over(self.z.len(), |k| {
            let rebuilt = self.z[k].matrix() * unitary_exp(&self.m, self.grid.node(k)).matrix();
            frob(&(trace.samples[k].matrix() - rebuilt))
        }))
    }

    pub fn write_z_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mats: Vec<&CMatrix> = self.z.iter().map(|u| u.matrix()).collect();
        write_trace_csv(out, &self.grid, &mats)
    }
}

pub fn floquet_decompose(trace: &PropagatorTrace) -> Result<FloquetDecomposition> {
    floquet_decompose_with_tol(trace, DEFAULT_RESONANCE_TOL)
}

/// M := K/T with K the principal logarithm of U(T); Z(t_k) := U(t_k)·e^{−iMt_k}.
pub fn floquet_decompose_with_tol(trace: &PropagatorTrace, resonance_tol: f64) -> Result<FloquetDecomposition> {
    let period = trace.grid.period();
    let k = unitary_log_with_tol(trace.monodromy(), resonance_tol)?;
    let m = k.scale(1.0 / period);
    let spectrum = herm_eig(&m, default_cluster_tol(m.matrix()))?;
    let z = try_map_indices(trace.samples.len(), |i| {
        let t = trace.grid.node(i);
        Ok(UnitaryOperator::from_trusted(trace.samples[i].matrix() * unitary_exp(&m, -t).matrix()))
    })?;

    let mut warnings = Vec::new();
    let values = spectrum.values();
    let near = 100.0 * resonance_tol;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let folded = wrap_phase((a - b) * period).abs();
            if folded < near && (a - b).abs() * period > near {
                let msg = format!(
                    "quasienergies {a:.12} and {b:.12} coincide modulo 2π/T to {folded:.3e} rad; \
                     eigenvectors of U(T) in that sector are not eigenvectors of M"
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    Ok(FloquetDecomposition { grid: trace.grid, m, spectrum, z, warnings })
}

/// A cyclic state |μ_n, a⟩ and its total phase α_n = μ_n·T.
#[derive(Clone, Debug)]
pub struct CyclicState {
    pub mu: f64,
    pub cluster: usize,
    pub index: usize,
    pub vector: CVector,
    pub alpha: f64,
    /// α_n reduced to (−π, π].
    pub alpha_reduced: f64,
}

/// Eigenvectors of M, in cluster order.
pub fn cyclic_states(fd: &FloquetDecomposition) -> Vec<CyclicState> {
    let period = fd.period();
    fd.spectrum
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(n, c)| {
            c.basis.column_iter().enumerate().map(move |(a, v)| CyclicState {
                mu: c.value,
                cluster: n,
                index: a,
                vector: v.into_owned(),
                alpha: c.value * period,
                alpha_reduced: wrap_phase(c.value * period),
            })
        })
        .collect()
}

/// Rows `k, t, re_i_j, im_i_j, …` with entries in row-major order.
pub fn write_trace_csv<W: Write>(mut out: W, grid: &TimeGrid, mats: &[&CMatrix]) -> std::io::Result<()> {
    let Some(first) = mats.first() else {
        return Ok(());
    };
    let (r, c) = first.shape();
    let mut header = String::from("k,t");
    for i in 0..r {
        for j in 0..c {
            header.push_str(&format!(",re_{i}_{j},im_{i}_{j}"));
        }
    }
    writeln!(out, "{header}")?;
    for (k, m) in mats.iter().enumerate() {
        let mut line = format!("{k},{}", grid.node(k));
        for i in 0..r {
            for j in 0..c {
                let z = m[(i, j)];
                line.push_str(&format!(",{},{}", z.re, z.im));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
