//! Spin-j angular momentum generators and field-driven periodic Hamiltonians.
//!
//! Units: ħ = 1, time in arbitrary units, frequencies reciprocal.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, frob, unitary_exp, CMatrix, HermitianOperator, UnitaryOperator};

/// Largest supported 2j (dimension 201).
pub const MAX_TWICE_J: u32 = 200;

/// A spin quantum number, stored as 2j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Spin {
    twice: u32,
}

impl Spin {
    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !twice.is_finite() || twice < 1.0 || (twice - twice.round()).abs() > 1e-12 || twice.round() > MAX_TWICE_J as f64 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Spin { twice: twice.round() as u32 })
    }

    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 || twice > MAX_TWICE_J {
            return Err(Error::InvalidSpin(twice as f64 / 2.0));
        }
        Ok(Spin { twice })
    }

    pub fn j(&self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.twice as usize + 1
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice.is_multiple_of(2) {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// J₁, J₂, J₃ in the basis |j⟩, |j−1⟩, …, |−j⟩ (Condon–Shortley phases).
#[derive(Clone, Debug)]
pub struct SpinGenerators {
    pub spin: Spin,
    pub j1: HermitianOperator,
    pub j2: HermitianOperator,
    pub j3: HermitianOperator,
}

impl SpinGenerators {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    /// R₁J₁ + R₂J₂ + R₃J₃.
    pub fn dot(&self, r: [f64; 3]) -> CMatrix {
        self.j1.matrix() * c64(r[0], 0.0) + self.j2.matrix() * c64(r[1], 0.0) + self.j3.matrix() * c64(r[2], 0.0)
    }

    fn build(spin: Spin) -> Self {
        let j = spin.j();
        let n = spin.dim();
        let m = |i: usize| j - i as f64;
        // J₊|m⟩ = √(j(j+1) − m(m+1)) |m+1⟩; index i−1 holds m+1.
        let mut raise = CMatrix::zeros(n, n);
        for i in 1..n {
            let mi = m(i);
            raise[(i - 1, i)] = c64((j * (j + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0);
        }
        let lower = raise.adjoint();
        let j1 = (&raise + &lower) * c64(0.5, 0.0);
        let j2 = (&raise - &lower) * c64(0.0, -0.5);
        let j3 = HermitianOperator::diagonal(&(0..n).map(m).collect::<Vec<_>>());
        SpinGenerators {
            spin,
            j1: HermitianOperator::new(j1).expect("J1 is Hermitian by construction"),
            j2: HermitianOperator::new(j2).expect("J2 is Hermitian by construction"),
            j3,
        }
    }
}

/// Generators for spin `j`, built once per j and shared.
pub fn spin_generators(j: f64) -> Result<Arc<SpinGenerators>> {
    let spin = Spin::new(j)?;
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<SpinGenerators>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
    Ok(guard
        .entry(spin.twice)
        .or_insert_with(|| Arc::new(SpinGenerators::build(spin)))
        .clone())
}

type Sampler = dyn Fn(f64) -> Result<HermitianOperator> + Send + Sync;

/// A T-periodic Hermitian operator-valued function of time.
#[derive(Clone)]
pub struct PeriodicHamiltonian {
    dim: usize,
    period: f64,
    sampler: Arc<Sampler>,
}

impl fmt::Debug for PeriodicHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicHamiltonian")
            .field("dim", &self.dim)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

impl PeriodicHamiltonian {
    /// Wrap `sampler`, checking dimension and H(0) = H(T).
    pub fn new<F>(dim: usize, period: f64, sampler: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<HermitianOperator> + Send + Sync + 'static,
    {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("period must be positive and finite, got {period}")));
        }
        let h0 = sampler(0.0)?;
        let ht = sampler(period)?;
        for h in [&h0, &ht] {
            if h.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: h.dim() });
            }
        }
        let mismatch = frob(&(h0.matrix() - ht.matrix()));
        if mismatch > 1e-10 * frob(h0.matrix()).max(1.0) {
            return Err(Error::NotPeriodic { mismatch });
        }
        Ok(PeriodicHamiltonian { dim, period, sampler: Arc::new(sampler) })
    }

    /// Time-independent Hamiltonian, periodic with any period.
    pub fn constant(h: HermitianOperator, period: f64) -> Result<Self> {
        let dim = h.dim();
        Self::new(dim, period, move |_| Ok(h.clone()))
    }

    pub fn sample(&self, t: f64) -> Result<HermitianOperator> {
        (self.sampler)(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

/// A closed curve t ↦ R(t) ∈ ℝ³ describing the applied field.
pub trait FieldPath: Send + Sync {
    fn eval(&self, t: f64) -> [f64; 3];
}

impl<F> FieldPath for F
where
    F: Fn(f64) -> [f64; 3] + Send + Sync,
{
    fn eval(&self, t: f64) -> [f64; 3] {
        self(t)
    }
}

/// R(t) = c + Σₙ aₙ cos(nΩt) + bₙ sin(nΩt), n = 1, 2, …
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicPath {
    pub constant: [f64; 3],
    pub cos: Vec<[f64; 3]>,
    pub sin: Vec<[f64; 3]>,
    pub angular_frequency: f64,
}

impl FieldPath for HarmonicPath {
    fn eval(&self, t: f64) -> [f64; 3] {
        let mut r = self.constant;
        for (n, a) in self.cos.iter().enumerate() {
            let c = ((n + 1) as f64 * self.angular_frequency * t).cos();
            for i in 0..3 {
                r[i] += a[i] * c;
            }
        }
        for (n, b) in self.sin.iter().enumerate() {
            let s = ((n + 1) as f64 * self.angular_frequency * t).sin();
            for i in 0..3 {
                r[i] += b[i] * s;
            }
        }
        r
    }
}

/// Uniform samples of R over one period [0, T), linearly interpolated and
/// wrapped periodically.
///
/// Linear interpolation has a kink at every sample, so the propagator loses
/// its nominal order on such a field unless the grid nodes coincide with the
/// samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedPath {
    samples: Vec<[f64; 3]>,
    period: f64,
}

impl TabulatedPath {
    pub fn new(samples: Vec<[f64; 3]>, period: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("a tabulated field path needs at least two samples".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("period must be positive and finite, got {period}")));
        }
        log::warn!(
            "tabulated field path with {} samples is interpolated linearly; integrator order drops to 2 between samples",
            samples.len()
        );
        Ok(TabulatedPath { samples, period })
    }
}

impl FieldPath for TabulatedPath {
    fn eval(&self, t: f64) -> [f64; 3] {
        let n = self.samples.len();
        let x = (t / self.period).rem_euclid(1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        let w = x - k as f64;
        let (a, b) = (self.samples[k], self.samples[(k + 1) % n]);
        [0, 1, 2].map(|i| (1.0 - w) * a[i] + w * b[i])
    }
}

fn norm3(r: [f64; 3]) -> f64 {
    (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt()
}

const FIELD_PROBES: usize = 4096;
const FIELD_ZERO_RTOL: f64 = 1e-9;

/// Scan |R(t)| over one period and locate its smallest value by refining
/// every sampled local minimum with a golden-section search.
fn field_minimum(path: &dyn FieldPath, period: f64) -> (f64, f64, f64) {
    let h = period / FIELD_PROBES as f64;
    let mags: Vec<f64> = (0..=FIELD_PROBES).map(|k| norm3(path.eval(k as f64 * h))).collect();
    let scale = mags.iter().cloned().fold(0.0, f64::max);
    let mut best = (mags[0], 0.0);
    for k in 0..=FIELD_PROBES {
        let left = if k == 0 { mags[FIELD_PROBES - 1] } else { mags[k - 1] };
        let right = if k == FIELD_PROBES { mags[1] } else { mags[k + 1] };
        if mags[k] > left || mags[k] > right {
            continue;
        }
        let (mut a, mut b) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if norm3(path.eval(c)) < norm3(path.eval(d)) {
                b = d;
            } else {
                a = c;
            }
        }
        let t = 0.5 * (a + b);
        let v = norm3(path.eval(t)).min(mags[k]);
        if v < best.0 {
            best = (v, t.rem_euclid(period));
        }
    }
    (best.0, best.1, scale)
}

/// H(t) = b·R(t)·J for a closed field path.
///
/// The eigenvalues of H(t) are b|R(t)|k, k = −j..j, so a vanishing field is a
/// level crossing; it is rejected here rather than at propagation time.
pub fn field_hamiltonian<P>(b: f64, path: P, gens: Arc<SpinGenerators>, period: f64) -> Result<PeriodicHamiltonian>
where
    P: FieldPath + 'static,
{
    if !(b.is_finite() && b != 0.0) {
        return Err(Error::Config(format!("coupling b must be finite and nonzero, got {b}")));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Config(format!("period must be positive and finite, got {period}")));
    }
    let (r0, rt) = (path.eval(0.0), path.eval(period));
    let gap = norm3([r0[0] - rt[0], r0[1] - rt[1], r0[2] - rt[2]]);
    if gap > 1e-10 * norm3(r0).max(1.0) {
        return Err(Error::NotPeriodic { mismatch: gap });
    }
    let (rmin, tmin, scale) = field_minimum(&path, period);
    if scale.is_nan() || scale <= 0.0 || rmin <= FIELD_ZERO_RTOL * scale {
        return Err(Error::LevelCrossing(format!(
            "field magnitude drops to {rmin:.3e} near t = {tmin:.6} (max {scale:.3e}); all levels of H = bR·J cross"
        )));
    }
    let dim = gens.dim();
    PeriodicHamiltonian::new(dim, period, move |t| {
        let r = path.eval(t);
        if norm3(r) <= FIELD_ZERO_RTOL * scale {
            return Err(Error::LevelCrossing(format!("field vanishes at t = {t}")));
        }
        HermitianOperator::new(gens.dot(r) * c64(b, 0.0))
    })
}

/// Parameters of the precessing-field model: ω (field strength, Larmor) and
/// Ω = 2π/T (precession).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecessingFieldParams {
    pub j: f64,
    pub larmor: f64,
    pub precession: f64,
}

impl PrecessingFieldParams {
    pub fn validate(&self) -> Result<Spin> {
        let spin = Spin::new(self.j)?;
        for (name, v) in [("omega", self.larmor), ("Omega", self.precession)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(spin)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.precession
    }
}

/// H(t) = −[ΩJ₁ + ω sin(Ωt)J₂ + ω cos(Ωt)J₃] together with its closed-form
/// Floquet pair Z(t) = e^{iΩtJ₁}, M = ωJ₃.
#[derive(Clone, Debug)]
pub struct PrecessingModel {
    pub params: PrecessingFieldParams,
    pub generators: Arc<SpinGenerators>,
    pub hamiltonian: PeriodicHamiltonian,
}

impl PrecessingModel {
    pub fn floquet_z(&self, t: f64) -> UnitaryOperator {
        unitary_exp(&self.generators.j1, self.params.precession * t)
    }

    pub fn floquet_m(&self) -> HermitianOperator {
        self.generators.j3.scale(self.params.larmor)
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }
}

pub fn precessing_model(params: PrecessingFieldParams) -> Result<PrecessingModel> {
    let spin = params.validate()?;
    let generators = spin_generators(spin.j())?;
    let (w, big) = (params.larmor, params.precession);
    let path = move |t: f64| [-big, -w * (big * t).sin(), -w * (big * t).cos()];
    let hamiltonian = field_hamiltonian(1.0, path, generators.clone(), params.period())?;
    Ok(PrecessingModel { params, generators, hamiltonian })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, herm_eig};

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frob(&(a - b)) <= tol
    }

    #[test]
    fn spin_half_is_half_pauli() {
        let g = spin_generators(0.5).unwrap();
        let sx = CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0.5, 0.), c64(0.5, 0.), c64(0., 0.)]);
        let sy = CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -0.5), c64(0., 0.5), c64(0., 0.)]);
        let sz = HermitianOperator::diagonal(&[0.5, -0.5]);
        assert!(close(g.j1.matrix(), &sx, 1e-15));
        assert!(close(g.j2.matrix(), &sy, 1e-15));
        assert!(close(g.j3.matrix(), sz.matrix(), 1e-15));
    }

    #[test]
    fn spin_one_standard_form() {
        let g = spin_generators(1.0).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(close(g.j3.matrix(), HermitianOperator::diagonal(&[1.0, 0.0, -1.0]).matrix(), 0.0));
        for (i, j, v) in [(0, 1, s), (1, 0, s), (1, 2, s), (2, 1, s), (0, 0, 0.0), (0, 2, 0.0)] {
            assert!((g.j1[(i, j)] - c64(v, 0.0)).norm() < 1e-15, "J1[{i},{j}]");
        }
        let casimir = g.j1.matrix() * g.j1.matrix() + g.j2.matrix() * g.j2.matrix() + g.j3.matrix() * g.j3.matrix();
        assert!(close(&casimir, &(CMatrix::identity(3, 3) * c64(2.0, 0.0)), 1e-14));
    }

    #[test]
    fn algebra_holds_for_many_spins() {
        for twice in 1..=12u32 {
            let g = spin_generators(twice as f64 / 2.0).unwrap();
            let (x, y, z) = (g.j1.matrix(), g.j2.matrix(), g.j3.matrix());
            let i = c64(0.0, 1.0);
            assert!(close(&commutator(x, y), &(z * i), 1e-12));
            assert!(close(&commutator(y, z), &(x * i), 1e-12));
            assert!(close(&commutator(z, x), &(y * i), 1e-12));
            let j = g.spin.j();
            let cas = x * x + y * y + z * z;
            let n = g.dim();
            assert!(close(&cas, &(CMatrix::identity(n, n) * c64(j * (j + 1.0), 0.0)), 1e-12));
        }
    }

    #[test]
    fn invalid_spins() {
        assert!(matches!(Spin::new(0.0), Err(Error::InvalidSpin(_))));
        assert!(matches!(Spin::new(0.3), Err(Error::InvalidSpin(_))));
        assert!(matches!(Spin::new(100.5), Err(Error::InvalidSpin(_))));
        assert_eq!(Spin::new(100.0).unwrap().dim(), 201);
        assert_eq!(Spin::new(1.5).unwrap().to_string(), "3/2");
    }

    #[test]
    fn field_hamiltonian_examples() {
        let g1 = spin_generators(1.0).unwrap();
        let h = field_hamiltonian(1.0, |_| [0.0, 0.0, 1.0], g1.clone(), 1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert!(close(h.sample(t).unwrap().matrix(), g1.j3.matrix(), 0.0));
        }
        let gh = spin_generators(0.5).unwrap();
        let h = field_hamiltonian(2.0, |_| [1.0, 0.0, 0.0], gh, 1.0).unwrap();
        let px = CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)]);
        assert!(close(h.sample(0.7).unwrap().matrix(), &px, 1e-15));
    }

    #[test]
    fn field_path_reproduces_precessing_hamiltonian() {
        let (w, big) = (0.4, 1.0);
        let model = precessing_model(PrecessingFieldParams { j: 1.0, larmor: w, precession: big }).unwrap();
        let g = model.generators.clone();
        for t in [0.0, 0.4, 1.7, 5.0] {
            // coefficient matching: −[ΩJ₁ + ω sin(Ωt)J₂ + ω cos(Ωt)J₃]
            let want = -(g.j1.matrix() * c64(big, 0.0)
                + g.j2.matrix() * c64(w * (big * t).sin(), 0.0)
                + g.j3.matrix() * c64(w * (big * t).cos(), 0.0));
            assert!(close(model.hamiltonian.sample(t).unwrap().matrix(), &want, 1e-15));
        }
        let h0 = model.hamiltonian.sample(0.0).unwrap();
        let want0 = -(g.j1.matrix() + g.j3.matrix() * c64(0.4, 0.0));
        assert!(close(h0.matrix(), &want0, 1e-15));
    }

    #[test]
    fn precessing_pair_solves_schrodinger() {
        let model = precessing_model(PrecessingFieldParams { j: 1.0, larmor: 0.4, precession: 1.0 }).unwrap();
        let t_end = model.period();
        assert!(close(model.floquet_z(t_end).matrix(), &CMatrix::identity(3, 3), 1e-13));
        assert!(close(model.floquet_m().matrix(), HermitianOperator::diagonal(&[0.4, 0.0, -0.4]).matrix(), 0.0));
        let g = &model.generators;
        let m = model.floquet_m();
        let u = |t: f64| model.floquet_z(t).matrix() * unitary_exp(&m, t).matrix();
        let eps = 1e-5;
        for k in 0..=16 {
            let t = k as f64 * t_end / 16.0;
            let z = model.floquet_z(t);
            let h = model.hamiltonian.sample(t).unwrap();
            // rotation identity: H = −ΩJ₁ − ω Z J₃ Z†
            let rot = -(g.j1.matrix() + z.matrix() * g.j3.matrix() * z.matrix().adjoint() * c64(0.4, 0.0));
            assert!(close(h.matrix(), &rot, 1e-10));
            // i dU/dt = H U by centered differences
            let du = (u(t + eps) - u(t - eps)) * c64(0.0, 1.0 / (2.0 * eps));
            assert!(close(&du, &(h.matrix() * u(t)), 1e-8));
        }
    }

    #[test]
    fn precessing_spectrum_is_time_independent() {
        let model = precessing_model(PrecessingFieldParams { j: 1.0, larmor: 0.4, precession: 1.0 }).unwrap();
        let r = (1.0f64 + 0.16).sqrt();
        for t in [0.0, 1.1, 2.9, 4.4] {
            let spec = herm_eig(&model.hamiltonian.sample(t).unwrap(), 1e-8).unwrap();
            let v = spec.values();
            for (got, want) in v.iter().zip([r, 0.0, -r]) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_field_is_a_level_crossing() {
        let g = spin_generators(1.0).unwrap();
        let period = 2.0 * PI;
        let err = field_hamiltonian(1.0, |t: f64| [t.cos(), 0.0, 0.0], g.clone(), period).unwrap_err();
        assert!(matches!(err, Error::LevelCrossing(_)), "{err}");
        // zero between probe points
        let err = field_hamiltonian(1.0, |t: f64| [(t - 0.1234567).sin(), 1.0 - (t - 0.1234567).cos(), 0.0], g.clone(), period)
            .unwrap_err();
        assert!(matches!(err, Error::LevelCrossing(_)), "{err}");
        let err = field_hamiltonian(1.0, |t: f64| [t, 0.0, 1.0], g, period).unwrap_err();
        assert!(matches!(err, Error::NotPeriodic { .. }));
    }

    #[test]
    fn tabulated_path_interpolates_and_wraps() {
        let p = TabulatedPath::new(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]], 2.0).unwrap();
        assert_eq!(p.eval(0.5), [0.5, 0.0, 1.0]);
        assert_eq!(p.eval(1.5), [0.5, 0.0, 1.0]);
        assert_eq!(p.eval(2.0), [0.0, 0.0, 1.0]);
    }
}
