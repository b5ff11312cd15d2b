//! Time-development providers.
//!
//! `propagator(t_from, t_to)` maps states at `t_from` to states at `t_to`.
//! Backward propagation is the adjoint of the forward one.

use thiserror::Error;

use crate::linalg::{ComplexMatrix, HermitianSpectrum, LinalgError, Unitary, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("time {time} lies outside the covered range [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },
    #[error("time {time} is not a breakpoint of the unitary table")]
    Misaligned { time: f64 },
    #[error("breakpoints must be strictly increasing and number one more than the unitaries")]
    InvalidBreakpoints,
    #[error("propagator has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Supplies the unitary time-development operators of a closed system.
pub trait EvolutionProvider {
    /// Hilbert-space dimension the propagators act on.
    fn dim(&self) -> usize;

    /// The operator taking states at `t_from` to states at `t_to`.
    fn propagator(&self, t_from: f64, t_to: f64) -> Result<Unitary, DynamicsError>;

    /// Whether propagators to and from `time` are available. Families check
    /// every moment time against this before computing chains.
    fn supports_time(&self, _time: f64) -> Result<(), DynamicsError> {
        Ok(())
    }
}

/// The three built-in kinds of dynamics.
#[derive(Debug, Clone, PartialEq)]
pub enum Evolution {
    /// Identity dynamics.
    Trivial {
        dim: usize,
    },
    PiecewiseUnitary(PiecewiseUnitary),
    ConstantHamiltonian(ConstantHamiltonian),
}

impl Evolution {
    pub fn trivial(dim: usize) -> Self {
        Evolution::Trivial { dim }
    }

    pub fn hamiltonian(h: ComplexMatrix) -> Result<Self, DynamicsError> {
        Ok(Evolution::ConstantHamiltonian(ConstantHamiltonian::new(h)?))
    }

    pub fn unitary_table(breakpoints: Vec<f64>, unitaries: Vec<Unitary>) -> Result<Self, DynamicsError> {
        Ok(Evolution::PiecewiseUnitary(PiecewiseUnitary::new(
            breakpoints,
            unitaries,
        )?))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Evolution::Trivial { .. } => "trivial",
            Evolution::PiecewiseUnitary(_) => "unitary_table",
            Evolution::ConstantHamiltonian(_) => "hamiltonian",
        }
    }
}

impl EvolutionProvider for Evolution {
    fn dim(&self) -> usize {
        match self {
            Evolution::Trivial { dim } => *dim,
            Evolution::PiecewiseUnitary(p) => p.dim(),
            Evolution::ConstantHamiltonian(h) => h.dim(),
        }
    }

    fn propagator(&self, t_from: f64, t_to: f64) -> Result<Unitary, DynamicsError> {
        match self {
            Evolution::Trivial { dim } => Ok(Unitary::identity(*dim)),
            Evolution::PiecewiseUnitary(p) => p.propagator(t_from, t_to),
            Evolution::ConstantHamiltonian(h) => Ok(h.propagator(t_from, t_to)),
        }
    }

    fn supports_time(&self, time: f64) -> Result<(), DynamicsError> {
        match self {
            Evolution::PiecewiseUnitary(p) => p.breakpoint_index(time).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// `exp(-i·H·(t_to - t_from))` for a fixed Hermitian `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHamiltonian {
    hamiltonian: ComplexMatrix,
    spectrum: HermitianSpectrum,
}

impl ConstantHamiltonian {
    pub fn new(hamiltonian: ComplexMatrix) -> Result<Self, DynamicsError> {
        let spectrum = HermitianSpectrum::new(&hamiltonian, DEFAULT_TOL)?;
        Ok(Self { hamiltonian, spectrum })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn propagator(&self, t_from: f64, t_to: f64) -> Unitary {
        if t_from == t_to {
            return Unitary::identity(self.dim());
        }
        self.spectrum.evolve(t_to - t_from)
    }
}

/// Interval unitaries between fixed breakpoints `t_0 < t_1 < … < t_k`;
/// `unitaries[j]` evolves from `t_j` to `t_{j+1}`. Propagation is only
/// defined between breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseUnitary {
    breakpoints: Vec<f64>,
    unitaries: Vec<Unitary>,
}

impl PiecewiseUnitary {
    pub fn new(breakpoints: Vec<f64>, unitaries: Vec<Unitary>) -> Result<Self, DynamicsError> {
        if unitaries.is_empty()
            || breakpoints.len() != unitaries.len() + 1
            || breakpoints.iter().any(|t| !t.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(DynamicsError::InvalidBreakpoints);
        }
        let dim = unitaries[0].dim();
        if let Some(u) = unitaries.iter().find(|u| u.dim() != dim) {
            return Err(DynamicsError::DimensionMismatch {
                expected: dim,
                found: u.dim(),
            });
        }
        Ok(Self { breakpoints, unitaries })
    }

    pub fn dim(&self) -> usize {
        self.unitaries[0].dim()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn unitaries(&self) -> &[Unitary] {
        &self.unitaries
    }

    fn breakpoint_index(&self, time: f64) -> Result<usize, DynamicsError> {
        let start = self.breakpoints[0];
        let end = *self.breakpoints.last().expect("nonempty");
        let slack = |t: f64| 1e-12 * t.abs().max(1.0);
        if time < start - slack(start) || time > end + slack(end) || time.is_nan() {
            return Err(DynamicsError::OutOfRange { time, start, end });
        }
        self.breakpoints
            .iter()
            .position(|&b| (b - time).abs() <= slack(b))
            .ok_or(DynamicsError::Misaligned { time })
    }

    pub fn propagator(&self, t_from: f64, t_to: f64) -> Result<Unitary, DynamicsError> {
        let from = self.breakpoint_index(t_from)?;
        let to = self.breakpoint_index(t_to)?;
        let (lo, hi) = (from.min(to), from.max(to));
        let mut acc = Unitary::identity(self.dim());
        for u in &self.unitaries[lo..hi] {
            acc = acc.compose(u);
        }
        Ok(if from <= to { acc } else { acc.adjoint() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use std::f64::consts::PI;

    fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap()
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn trivial_is_identity() {
        let e = Evolution::trivial(3);
        assert_eq!(e.propagator(-2.0, 7.5).unwrap(), Unitary::identity(3));
    }

    #[test]
    fn hamiltonian_examples() {
        let e = Evolution::hamiltonian(sigma_z()).unwrap();
        let minus_identity = ComplexMatrix::identity(2).scale(C64::new(-1.0, 0.0));
        assert!(e
            .propagator(0.0, PI)
            .unwrap()
            .matrix()
            .approx_eq(&minus_identity, 1e-12));
        assert_eq!(e.propagator(5.0, 5.0).unwrap(), Unitary::identity(2));
    }

    #[test]
    fn hamiltonian_direction_and_reversal() {
        let e = Evolution::hamiltonian(sigma_x()).unwrap();
        let fwd = e.propagator(0.3, 1.1).unwrap();
        let back = e.propagator(1.1, 0.3).unwrap();
        assert!(back.matrix().approx_eq(fwd.adjoint().matrix(), 1e-12));
        // exp(-i sx dt) = cos(dt) I - i sin(dt) sx
        let dt: f64 = 0.8;
        let oracle =
            &ComplexMatrix::identity(2).scale(C64::new(dt.cos(), 0.0)) + &sigma_x().scale(C64::new(0.0, -dt.sin()));
        assert!(fwd.matrix().approx_eq(&oracle, 1e-12));
    }

    #[test]
    fn piecewise_composes_in_time_order() {
        let a = Unitary::hadamard();
        let b = Evolution::hamiltonian(sigma_x()).unwrap().propagator(0.0, 0.4).unwrap();
        let e = Evolution::unitary_table(vec![0.0, 1.0, 2.0], vec![a.clone(), b.clone()]).unwrap();
        let full = e.propagator(0.0, 2.0).unwrap();
        assert!(full.matrix().approx_eq(&(b.matrix() * a.matrix()), 1e-14));
        let back = e.propagator(2.0, 0.0).unwrap();
        assert!(back.matrix().approx_eq(full.adjoint().matrix(), 1e-14));
        assert_eq!(e.propagator(1.0, 1.0).unwrap(), Unitary::identity(2));
    }

    #[test]
    fn piecewise_range_and_alignment_errors() {
        let e = Evolution::unitary_table(vec![0.0, 1.0], vec![Unitary::hadamard()]).unwrap();
        assert!(matches!(e.propagator(0.0, 1.5), Err(DynamicsError::OutOfRange { .. })));
        assert!(matches!(e.propagator(0.0, 0.5), Err(DynamicsError::Misaligned { .. })));
        assert!(e.supports_time(0.5).is_err());
        assert!(e.supports_time(1.0).is_ok());
        assert_eq!(
            Evolution::unitary_table(vec![1.0, 0.0], vec![Unitary::hadamard()]),
            Err(DynamicsError::InvalidBreakpoints)
        );
        assert_eq!(
            Evolution::unitary_table(vec![0.0, 1.0, 2.0], vec![Unitary::hadamard()]),
            Err(DynamicsError::InvalidBreakpoints)
        );
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let m = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            Evolution::hamiltonian(m),
            Err(DynamicsError::Linalg(LinalgError::NotHermitian(_)))
        ));
    }
}
