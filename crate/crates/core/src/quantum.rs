//! Finite-dimensional pure states and the Born rule for a non-degenerate
//! observable.
//!
//! A state is kept in polar form: component `i` is `sqrt(x_i) e^{i alpha_i}`
//! on the eigenvector of outcome `i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{BarycentricState, SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplitude {
    pub modulus_squared: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    amplitudes: Vec<Amplitude>,
    /// Optional eigenvalue attached to each outcome. Carried as metadata only.
    eigenvalues: Option<Vec<f64>>,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Amplitude>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState("a measured observable needs at least 2 outcomes".into()));
        }
        if amplitudes
            .iter()
            .any(|a| !(a.modulus_squared.is_finite() && a.modulus_squared >= 0.0 && a.phase.is_finite()))
        {
            return Err(Error::InvalidState("moduli must be finite and non-negative".into()));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.modulus_squared).sum();
        if (norm - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidState(format!("state has squared norm {norm}, not 1")));
        }
        Ok(Self { amplitudes, eigenvalues: None })
    }

    /// Builds a state from squared moduli and phases given separately.
    pub fn from_polar(moduli_squared: &[f64], phases: &[f64]) -> Result<Self> {
        if moduli_squared.len() != phases.len() {
            return Err(Error::DimensionMismatch { expected: moduli_squared.len(), actual: phases.len() });
        }
        Self::new(
            moduli_squared
                .iter()
                .zip(phases)
                .map(|(&modulus_squared, &phase)| Amplitude { modulus_squared, phase })
                .collect(),
        )
    }

    pub fn with_eigenvalues(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != self.amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: self.amplitudes.len(), actual: eigenvalues.len() });
        }
        self.eigenvalues = Some(eigenvalues);
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amplitudes
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// Rectangular form `(re, im)` of amplitude `i`.
    pub fn component(&self, i: usize) -> (f64, f64) {
        let a = self.amplitudes[i];
        let r = a.modulus_squared.sqrt();
        (r * a.phase.cos(), r * a.phase.sin())
    }
}

/// `P(psi -> a_i) = |<a_i|psi>|^2 = x_i`. Phases drop out.
pub fn born_probabilities(psi: &QuantumState) -> Vec<f64> {
    psi.amplitudes.iter().map(|a| a.modulus_squared).collect()
}

/// The simplex point whose weights are the Born probabilities of `psi`.
pub fn to_simplex_state(psi: &QuantumState) -> Result<BarycentricState> {
    BarycentricState::new(born_probabilities(psi))
}
