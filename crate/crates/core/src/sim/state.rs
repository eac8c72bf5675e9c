use crate::{QteError, Result, C64};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 20;

const NORM_TOL: f64 = 1e-10;

/// Dense little-endian statevector: qubit `q` is bit `q` of the amplitude index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// The all-zeros computational basis state.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(QteError::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes and normalizes them.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if amps.len() != dim {
            return Err(QteError::DimensionMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        let mut state = Self { n_qubits, amps };
        let norm = state.norm_sqr().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(QteError::InvalidArgument(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        state.scale(1.0 / norm);
        Ok(state)
    }

    /// Tensor product of single-qubit states, `factors[q]` for qubit `q`.
    pub fn product(factors: &[[C64; 2]]) -> Result<Self> {
        let n = factors.len();
        check_qubits(n)?;
        let dim = 1usize << n;
        let amps = (0..dim)
            .map(|idx| {
                factors
                    .iter()
                    .enumerate()
                    .fold(C64::new(1.0, 0.0), |acc, (q, f)| acc * f[(idx >> q) & 1])
            })
            .collect();
        Self::from_amplitudes(n, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(QteError::InvalidArgument(
                "cannot normalize a zero or non-finite vector".into(),
            ));
        }
        self.scale(1.0 / norm);
        Ok(())
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    fn scale(&mut self, factor: f64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        inner_product(self, other)
    }

    /// Probability of each computational basis outcome.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

pub(crate) fn check_qubits(n: usize) -> Result<()> {
    if n == 0 {
        return Err(QteError::InvalidArgument("register needs at least one qubit".into()));
    }
    if n > MAX_QUBITS {
        return Err(QteError::TooManyQubits { n, max: MAX_QUBITS });
    }
    Ok(())
}

/// ⟨a|b⟩ for two states on the same register.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    if a.n_qubits != b.n_qubits {
        return Err(QteError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot(&a.amps, &b.amps))
}

/// Conjugate-linear in the first argument.
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
