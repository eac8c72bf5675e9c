//! Pauli-sum Hamiltonians and the dense exact-evolution oracle.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{dot, StateVector};
use crate::{QteError, Result, C64};

/// Largest register for which dense matrices and exact extremes are built.
pub const MAX_DENSE_QUBITS: usize = 14;

/// Registers up to this size use a full eigendecomposition for exact
/// evolution; larger ones use a Taylor propagator on the Pauli sum.
const EIGEN_QUBITS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// A weighted tensor product of single-qubit Paulis. `letters[q]` acts on qubit `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliString {
    letters: Vec<Pauli>,
    coeff: f64,
    flip: usize,
    phase_mask: usize,
    n_y: u32,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>, coeff: f64) -> Self {
        let mut flip = 0;
        let mut phase_mask = 0;
        let mut n_y = 0;
        for (q, l) in letters.iter().enumerate() {
            match l {
                Pauli::I => {}
                Pauli::X => flip |= 1 << q,
                Pauli::Y => {
                    flip |= 1 << q;
                    phase_mask |= 1 << q;
                    n_y += 1;
                }
                Pauli::Z => phase_mask |= 1 << q,
            }
        }
        Self { letters, coeff, flip, phase_mask, n_y }
    }

    /// Parses a letter string such as `"XZI"`; the first character acts on qubit 0.
    pub fn parse(text: &str, coeff: f64) -> Result<Self> {
        let letters = text
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(QteError::InvalidArgument(format!("unknown Pauli letter {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(letters, coeff))
    }

    /// Single-letter operator `letter` on qubit `q` of an `n`-qubit register.
    pub fn single(n: usize, q: usize, letter: Pauli, coeff: f64) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[q] = letter;
        Self::new(letters, coeff)
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn is_identity(&self) -> bool {
        self.flip == 0 && self.phase_mask == 0
    }

    /// True when the operator has only real matrix elements.
    pub fn is_real(&self) -> bool {
        self.n_y.is_multiple_of(2)
    }

    /// Unweighted `P|idx⟩ = phase · |idx ^ flip⟩`.
    #[inline]
    fn phase(&self, idx: usize) -> C64 {
        let sign = if (idx & self.phase_mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        match self.n_y % 4 {
            0 => C64::new(sign, 0.0),
            1 => C64::new(0.0, sign),
            2 => C64::new(-sign, 0.0),
            _ => C64::new(0.0, -sign),
        }
    }

    /// `out += scale · P |amps⟩` (coefficient not applied).
    pub(crate) fn accumulate(&self, amps: &[C64], scale: C64, out: &mut [C64]) {
        for (idx, a) in amps.iter().enumerate() {
            out[idx ^ self.flip] += scale * self.phase(idx) * a;
        }
    }

    /// Unweighted `⟨ψ|P|ψ⟩`, real for Hermitian `P`.
    pub fn expectation_unweighted(&self, amps: &[C64]) -> f64 {
        self.matrix_element(amps, amps).re
    }

    /// Unweighted `⟨bra|P|ket⟩`.
    pub fn matrix_element(&self, bra: &[C64], ket: &[C64]) -> C64 {
        ket.iter()
            .enumerate()
            .map(|(idx, a)| bra[idx ^ self.flip].conj() * self.phase(idx) * a)
            .sum()
    }
}

/// Real-weighted sum of Pauli strings on a common register.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<PauliString>,
}

impl PauliSum {
    pub fn new(n_qubits: usize, terms: Vec<PauliString>) -> Result<Self> {
        if terms.is_empty() {
            return Err(QteError::InvalidArgument("a Pauli sum needs at least one term".into()));
        }
        if let Some(bad) = terms.iter().find(|t| t.n_qubits() != n_qubits) {
            return Err(QteError::DimensionMismatch { expected: n_qubits, got: bad.n_qubits() });
        }
        if n_qubits == 0 || n_qubits > crate::sim::MAX_QUBITS {
            return Err(QteError::TooManyQubits { n: n_qubits, max: crate::sim::MAX_QUBITS });
        }
        Ok(Self { n_qubits, terms })
    }

    /// Builds a sum from `(letters, coefficient)` pairs, e.g. `[("ZI", 1.0)]`.
    pub fn from_labels(labels: &[(&str, f64)]) -> Result<Self> {
        let terms = labels
            .iter()
            .map(|(l, c)| PauliString::parse(l, *c))
            .collect::<Result<Vec<_>>>()?;
        let n = terms.first().map_or(0, |t| t.n_qubits());
        Self::new(n, terms)
    }

    /// `coeff · Σ_q P_q` for a single letter.
    pub fn uniform_field(n: usize, letter: Pauli, coeff: f64) -> Result<Self> {
        Self::new(n, (0..n).map(|q| PauliString::single(n, q, letter, coeff)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    /// Number of Pauli terms.
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms other than multiples of the identity; these are the ones that
    /// need a measurement circuit.
    pub fn n_measured_terms(&self) -> usize {
        self.terms.iter().filter(|t| !t.is_identity()).count()
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(PauliString::is_real)
    }

    /// `Σ|c_i|`, an upper bound on the spectral radius.
    pub fn coefficient_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| PauliString::new(t.letters.clone(), t.coeff * factor))
            .collect();
        Self { n_qubits: self.n_qubits, terms }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        let dim = 1usize << self.n_qubits;
        if len != dim {
            return Err(QteError::DimensionMismatch { expected: dim, got: len });
        }
        Ok(())
    }

    /// `H|ψ⟩` on raw amplitudes.
    pub fn apply(&self, amps: &[C64]) -> Result<Vec<C64>> {
        self.check_dim(amps.len())?;
        let mut out = vec![C64::new(0.0, 0.0); amps.len()];
        for t in &self.terms {
            t.accumulate(amps, C64::new(t.coeff, 0.0), &mut out);
        }
        Ok(out)
    }

    /// Dense `2^n × 2^n` matrix.
    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(QteError::TooManyQubits { n: self.n_qubits, max: MAX_DENSE_QUBITS });
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for t in &self.terms {
            for col in 0..dim {
                m[(col ^ t.flip, col)] += t.phase(col) * t.coeff;
            }
        }
        Ok(m)
    }

    fn to_dense_real(&self) -> Result<DMatrix<f64>> {
        debug_assert!(self.is_real());
        Ok(self.to_dense()?.map(|z| z.re))
    }

    /// Sorted eigenvalues of the dense matrix.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut vals: Vec<f64> = if self.is_real() {
            SymmetricEigen::new(self.to_dense_real()?).eigenvalues.iter().copied().collect()
        } else {
            SymmetricEigen::new(self.to_dense()?).eigenvalues.iter().copied().collect()
        };
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}

/// Real `⟨ψ|H|ψ⟩`.
pub fn expectation(h: &PauliSum, psi: &StateVector) -> Result<f64> {
    expectation_amps(h, psi.amplitudes())
}

pub(crate) fn expectation_amps(h: &PauliSum, amps: &[C64]) -> Result<f64> {
    h.check_dim(amps.len())?;
    let z: C64 = h.terms.iter().map(|t| t.matrix_element(amps, amps) * t.coeff).sum();
    debug_assert!(z.im.abs() < 1e-10 * (1.0 + z.re.abs()), "non-real energy {z}");
    Ok(z.re)
}

/// `⟨H²⟩ − ⟨H⟩²`, clamped at zero.
pub fn variance(h: &PauliSum, psi: &StateVector) -> Result<f64> {
    let hpsi = h.apply(psi.amplitudes())?;
    let e = dot(psi.amplitudes(), &hpsi).re;
    let h2 = dot(&hpsi, &hpsi).re;
    Ok((h2 - e * e).max(0.0))
}

/// How [`energy_extremes`] obtains its values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremesMode {
    /// Exact eigenvalues for registers up to 14 qubits, coefficient bound above.
    Auto,
    /// `±Σ|c_i|`.
    Bound,
}

/// `(E_min, E_max)`.
pub fn energy_extremes(h: &PauliSum, mode: ExtremesMode) -> (f64, f64) {
    match mode {
        ExtremesMode::Bound => {
            let b = h.coefficient_norm();
            (-b, b)
        }
        ExtremesMode::Auto if h.n_qubits <= 8 => {
            let vals = h.eigenvalues().expect("dense size checked");
            (vals[0], vals[vals.len() - 1])
        }
        ExtremesMode::Auto if h.n_qubits <= MAX_DENSE_QUBITS => lanczos_extremes(h),
        ExtremesMode::Auto => energy_extremes(h, ExtremesMode::Bound),
    }
}

/// Extremal eigenvalues by Lanczos with full reorthogonalization.
fn lanczos_extremes(h: &PauliSum) -> (f64, f64) {
    let dim = 1usize << h.n_qubits;
    let max_iter = dim.min(300);
    // deterministic, generic start vector
    let mut v: Vec<C64> = (0..dim)
        .map(|k| {
            let x = ((k as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5;
            let y = ((k as f64 + 1.0) * 0.414_213_562_373_095).fract() - 0.5;
            C64::new(x, y)
        })
        .collect();
    let norm = dot(&v, &v).re.sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    let mut basis: Vec<Vec<C64>> = vec![v];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last = (f64::NAN, f64::NAN);
    for k in 0..max_iter {
        let mut w = h.apply(&basis[k]).expect("dimension fixed");
        alpha.push(dot(&basis[k], &w).re);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let t = tridiagonal_extremes(&alpha, &beta);
        let converged = (t.0 - last.0).abs() < 1e-13 && (t.1 - last.1).abs() < 1e-13;
        last = t;
        let bnorm = dot(&w, &w).re.sqrt();
        if converged || bnorm < 1e-12 || k + 1 == max_iter {
            break;
        }
        w.iter_mut().for_each(|a| *a /= bnorm);
        beta.push(bnorm);
        basis.push(w);
    }
    last
}

fn tridiagonal_extremes(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let vals = SymmetricEigen::new(t).eigenvalues;
    (vals.min(), vals.max())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Periodic boundary: edges (i, i+1 mod n). For n = 2 the two edges
    /// coincide and are kept once.
    Circle,
    Chain,
}

/// Nearest-neighbour Heisenberg model with a Z field:
/// `J Σ_edges (XX + YY + ZZ) + g_field Σ_i Z_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeisenbergSpec {
    pub n: usize,
    pub topology: Topology,
    #[serde(rename = "J")]
    pub j: f64,
    pub g_field: f64,
}

impl HeisenbergSpec {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        match self.topology {
            Topology::Chain => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            Topology::Circle if n == 2 => vec![(0, 1)],
            Topology::Circle => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        }
    }
}

pub fn heisenberg(spec: &HeisenbergSpec) -> Result<PauliSum> {
    let n = spec.n;
    if n < 2 {
        return Err(QteError::InvalidArgument(format!("Heisenberg model needs n >= 2, got {n}")));
    }
    let mut terms = Vec::new();
    for (a, b) in spec.edges() {
        for letter in [Pauli::X, Pauli::Y, Pauli::Z] {
            let mut letters = vec![Pauli::I; n];
            letters[a] = letter;
            letters[b] = letter;
            terms.push(PauliString::new(letters, spec.j));
        }
    }
    for q in 0..n {
        terms.push(PauliString::single(n, q, Pauli::Z, spec.g_field));
    }
    PauliSum::new(n, terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Real,
    Imaginary,
}

enum Backend {
    RealEigen { values: Vec<f64>, vectors: DMatrix<f64> },
    ComplexEigen { values: Vec<f64>, vectors: DMatrix<C64> },
    Taylor { h: PauliSum, norm_bound: f64 },
}

/// Exact `e^{-itH}` / normalized `e^{-tH}` propagation. The eigendecomposition
/// is computed once and reused for every query time.
pub struct ExactEvolver {
    n_qubits: usize,
    backend: Backend,
}

impl ExactEvolver {
    pub fn new(h: &PauliSum) -> Result<Self> {
        let n = h.n_qubits;
        if n > MAX_DENSE_QUBITS {
            return Err(QteError::TooManyQubits { n, max: MAX_DENSE_QUBITS });
        }
        let backend = if n > EIGEN_QUBITS {
            Backend::Taylor { h: h.clone(), norm_bound: h.coefficient_norm() }
        } else if h.is_real() {
            let eig = SymmetricEigen::new(h.to_dense_real()?);
            Backend::RealEigen { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
        } else {
            let eig = SymmetricEigen::new(h.to_dense()?);
            Backend::ComplexEigen { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
        };
        Ok(Self { n_qubits: n, backend })
    }

    pub fn evolve(&self, psi0: &StateVector, t: f64, mode: TimeMode) -> Result<StateVector> {
        if psi0.n_qubits() != self.n_qubits {
            return Err(QteError::DimensionMismatch { expected: 1 << self.n_qubits, got: psi0.dim() });
        }
        if mode == TimeMode::Imaginary && t < 0.0 {
            return Err(QteError::InvalidArgument("imaginary time must be non-negative".into()));
        }
        if t == 0.0 {
            return Ok(psi0.clone());
        }
        let amps = match &self.backend {
            Backend::RealEigen { values, vectors } => {
                let re = DVector::from_iterator(psi0.dim(), psi0.amplitudes().iter().map(|a| a.re));
                let im = DVector::from_iterator(psi0.dim(), psi0.amplitudes().iter().map(|a| a.im));
                let cr = vectors.tr_mul(&re);
                let ci = vectors.tr_mul(&im);
                let coeffs: Vec<C64> = cr.iter().zip(ci.iter()).map(|(r, i)| C64::new(*r, *i)).collect();
                let scaled = propagate_coefficients(values, coeffs, t, mode);
                let sr = DVector::from_iterator(scaled.len(), scaled.iter().map(|z| z.re));
                let si = DVector::from_iterator(scaled.len(), scaled.iter().map(|z| z.im));
                let (or, oi) = (vectors * sr, vectors * si);
                or.iter().zip(oi.iter()).map(|(r, i)| C64::new(*r, *i)).collect()
            }
            Backend::ComplexEigen { values, vectors } => {
                let psi = DVector::from_column_slice(psi0.amplitudes());
                let coeffs: Vec<C64> = vectors.ad_mul(&psi).iter().copied().collect();
                let scaled = propagate_coefficients(values, coeffs, t, mode);
                (vectors * DVector::from_vec(scaled)).iter().copied().collect()
            }
            Backend::Taylor { h, norm_bound } => taylor_propagate(h, *norm_bound, psi0.amplitudes(), t, mode)?,
        };
        StateVector::from_amplitudes(self.n_qubits, amps)
    }

    /// States at every time in `times` (any order). The Taylor backend
    /// propagates incrementally between sorted times.
    pub fn evolve_grid(&self, psi0: &StateVector, times: &[f64], mode: TimeMode) -> Result<Vec<StateVector>> {
        let Backend::Taylor { h, norm_bound } = &self.backend else {
            return times.par_iter().map(|&t| self.evolve(psi0, t, mode)).collect();
        };
        if psi0.n_qubits() != self.n_qubits {
            return Err(QteError::DimensionMismatch { expected: 1 << self.n_qubits, got: psi0.dim() });
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        if mode == TimeMode::Imaginary && order.first().is_some_and(|&k| times[k] < 0.0) {
            return Err(QteError::InvalidArgument("imaginary time must be non-negative".into()));
        }
        let mut out = vec![None; times.len()];
        let (mut t_prev, mut amps) = (0.0, psi0.amplitudes().to_vec());
        for k in order {
            if times[k] != t_prev {
                amps = taylor_propagate(h, *norm_bound, &amps, times[k] - t_prev, mode)?;
                t_prev = times[k];
            }
            out[k] = Some(StateVector::from_amplitudes(self.n_qubits, amps.clone())?);
        }
        Ok(out.into_iter().map(|s| s.expect("every time visited")).collect())
    }
}

fn propagate_coefficients(values: &[f64], mut coeffs: Vec<C64>, t: f64, mode: TimeMode) -> Vec<C64> {
    let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
    for (c, &e) in coeffs.iter_mut().zip(values) {
        *c *= match mode {
            TimeMode::Real => C64::from_polar(1.0, -e * t),
            // shifted by E_min so the dominant factors stay O(1)
            TimeMode::Imaginary => C64::new((-(e - shift) * t).exp(), 0.0),
        };
    }
    coeffs
}

fn taylor_propagate(h: &PauliSum, norm_bound: f64, psi0: &[C64], t: f64, mode: TimeMode) -> Result<Vec<C64>> {
    let steps = ((norm_bound * t.abs()) / 0.5).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    // each Taylor term multiplies by (-i dt H) or (-dt H)
    let factor = match mode {
        TimeMode::Real => C64::new(0.0, -dt),
        TimeMode::Imaginary => C64::new(-dt, 0.0),
    };
    let mut psi = psi0.to_vec();
    for _ in 0..steps {
        let mut term = psi.clone();
        let mut acc = psi.clone();
        for k in 1..60 {
            let hterm = h.apply(&term)?;
            let scale = factor / k as f64;
            term = hterm.into_iter().map(|a| a * scale).collect();
            let tn = dot(&term, &term).re.sqrt();
            acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
            if tn < 1e-17 {
                break;
            }
        }
        if mode == TimeMode::Imaginary {
            let n = dot(&acc, &acc).re.sqrt();
            acc.iter_mut().for_each(|a| *a /= n);
        }
        psi = acc;
    }
    Ok(psi)
}

/// Convenience wrapper around [`ExactEvolver`] for a single query.
pub fn exact_evolve(h: &PauliSum, psi0: &StateVector, t: f64, mode: TimeMode) -> Result<StateVector> {
    ExactEvolver::new(h)?.evolve(psi0, t, mode)
}

/// `Tr(e^{-βH} A) / Tr(e^{-βH})` from the dense spectrum of `h`.
pub fn gibbs_expectation(h: &PauliSum, observable: &PauliSum, beta: f64) -> Result<f64> {
    let hd = h.to_dense()?;
    let ad = observable.to_dense()?;
    let eig = SymmetricEigen::new(hd);
    let emin = eig.eigenvalues.min();
    let mut z = 0.0;
    let mut acc = 0.0;
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        let w = (-beta * (e - emin)).exp();
        let v = eig.eigenvectors.column(k);
        let av = &ad * v;
        acc += w * v.dotc(&av).re;
        z += w;
    }
    Ok(acc / z)
}
