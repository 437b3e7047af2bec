//! The continuous problem, its forcing, the quantity of interest and the
//! splitting of the coupling matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One additive term of a forcing component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalTerm {
    /// `value`
    Constant { value: f64 },
    /// `amplitude * sin(frequency * t)`
    Sin { amplitude: f64, frequency: f64 },
    /// `amplitude * cos(frequency * t)`
    Cos { amplitude: f64, frequency: f64 },
    /// `amplitude * t^exponent`
    Power { amplitude: f64, exponent: u32 },
}

impl SignalTerm {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SignalTerm::Constant { value } => value,
            SignalTerm::Sin {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).sin(),
            SignalTerm::Cos {
                amplitude,
                frequency,
            } => amplitude * (frequency * t).cos(),
            SignalTerm::Power {
                amplitude,
                exponent,
            } => amplitude * t.powi(exponent as i32),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            SignalTerm::Constant { value } => value.is_finite(),
            SignalTerm::Sin {
                amplitude,
                frequency,
            }
            | SignalTerm::Cos {
                amplitude,
                frequency,
            } => amplitude.is_finite() && frequency.is_finite(),
            SignalTerm::Power { amplitude, .. } => amplitude.is_finite(),
        }
    }
}

/// Vector-valued forcing `Y(t)`, given per component as a sum of terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signal {
    components: Vec<Vec<SignalTerm>>,
}

impl Signal {
    pub fn new(components: Vec<Vec<SignalTerm>>) -> Self {
        Self { components }
    }

    /// The zero forcing of dimension `m`.
    pub fn zero(m: usize) -> Self {
        Self {
            components: vec![Vec::new(); m],
        }
    }

    /// The same constant in every component.
    pub fn constant(values: &[f64]) -> Self {
        Self {
            components: values
                .iter()
                .map(|&value| vec![SignalTerm::Constant { value }])
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<SignalTerm>] {
        &self.components
    }

    #[inline]
    pub fn eval_component(&self, i: usize, t: f64) -> f64 {
        self.components[i].iter().map(|term| term.eval(t)).sum()
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.eval_component(i, t)),
        )
    }
}

/// Evaluates the forcing at `t`.
pub fn evaluate_signal(signal: &Signal, t: f64) -> DVector<f64> {
    signal.eval(t)
}

/// Linear initial value problem `U' + B U = Y` on `[t0, tn]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    matrix: DMatrix<f64>,
    forcing: Signal,
    initial: DVector<f64>,
    t0: f64,
    tn: f64,
}

impl Problem {
    pub fn new(
        matrix: DMatrix<f64>,
        forcing: Signal,
        initial: DVector<f64>,
        interval: (f64, f64),
    ) -> Result<Self> {
        let (t0, tn) = interval;
        if !(t0.is_finite() && tn.is_finite()) {
            return Err(Error::NonFinite("interval"));
        }
        if tn <= t0 {
            return Err(Error::InvalidProblem(format!(
                "interval end {tn} must exceed start {t0}"
            )));
        }
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let m = matrix.nrows();
        if m == 0 {
            return Err(Error::InvalidProblem("dimension must be positive".into()));
        }
        if forcing.dim() != m {
            return Err(Error::DimensionMismatch {
                what: "forcing",
                expected: m,
                found: forcing.dim(),
            });
        }
        if initial.len() != m {
            return Err(Error::DimensionMismatch {
                what: "initial value",
                expected: m,
                found: initial.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coupling matrix"));
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial value"));
        }
        if forcing
            .components()
            .iter()
            .flatten()
            .any(|term| !term.is_finite())
        {
            return Err(Error::NonFinite("forcing"));
        }
        Ok(Self {
            matrix,
            forcing,
            initial,
            t0,
            tn,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn forcing(&self) -> &Signal {
        &self.forcing
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tn(&self) -> f64 {
        self.tn
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t0, self.tn)
    }

    /// Right-hand side `Y(t) - B u` of the first-order form.
    pub fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        self.forcing.eval(t) - &self.matrix * u
    }
}

/// One point evaluation `J_r . U(tau_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QoiTerm {
    pub time: f64,
    pub weights: DVector<f64>,
}

/// Discrete quantity of interest `J(U) = sum_r J_r . U(tau_r)`.
///
/// Times are strictly increasing and the last one is always the interval
/// end; a zero-weight term is appended when the user did not ask for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Qoi {
    terms: Vec<QoiTerm>,
}

impl Qoi {
    pub fn new(mut terms: Vec<QoiTerm>, problem: &Problem) -> Result<Self> {
        let (t0, tn) = problem.interval();
        let m = problem.dim();
        if terms.is_empty() {
            return Err(Error::InvalidQoi("at least one term is required".into()));
        }
        for term in &terms {
            if !term.time.is_finite() {
                return Err(Error::NonFinite("qoi time"));
            }
            if term.time < t0 || term.time > tn {
                return Err(Error::OutsideInterval {
                    time: term.time,
                    t0,
                    tn,
                });
            }
            if term.weights.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "qoi weights",
                    expected: m,
                    found: term.weights.len(),
                });
            }
            if term.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite("qoi weights"));
            }
        }
        for pair in terms.windows(2) {
            if pair[1].time <= pair[0].time {
                return Err(Error::InvalidQoi(format!(
                    "times must be strictly increasing, got {} after {}",
                    pair[1].time, pair[0].time
                )));
            }
        }
        if terms.last().map(|term| term.time) != Some(tn) {
            terms.push(QoiTerm {
                time: tn,
                weights: DVector::zeros(m),
            });
        }
        Ok(Self { terms })
    }

    /// Convenience constructor from `(time, weights)` pairs.
    pub fn from_pairs(pairs: &[(f64, &[f64])], problem: &Problem) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(time, weights)| QoiTerm {
                    time: *time,
                    weights: DVector::from_column_slice(weights),
                })
                .collect(),
            problem,
        )
    }

    pub fn terms(&self) -> &[QoiTerm] {
        &self.terms
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(|term| term.time)
    }

    pub fn dim(&self) -> usize {
        self.terms[0].weights.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|term| term.weights.iter().all(|&w| w == 0.0))
    }
}

/// Which one-sided limit to take when a function jumps at the evaluation
/// point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Anything that can be evaluated componentwise in time.
pub trait Waveform {
    fn dim(&self) -> usize;

    fn eval_component(&self, i: usize, t: f64, side: Side) -> f64;

    fn eval(&self, t: f64, side: Side) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| self.eval_component(i, t, side)),
        )
    }
}

/// Evaluates `J(U) = sum_r J_r . U(tau_r)` using the given one-sided limit.
pub fn evaluate_qoi<W: Waveform + ?Sized>(qoi: &Qoi, u: &W, side: Side) -> f64 {
    qoi.terms
        .iter()
        .map(|term| {
            term.weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| w * u.eval_component(i, term.time, side))
                .sum::<f64>()
        })
        .sum()
}

/// Like [`evaluate_qoi`] but rejects terms outside `[t0, tn]`.
pub fn evaluate_qoi_checked<W: Waveform + ?Sized>(
    qoi: &Qoi,
    u: &W,
    side: Side,
    interval: (f64, f64),
) -> Result<f64> {
    let (t0, tn) = interval;
    if let Some(term) = qoi.terms.iter().find(|t| t.time < t0 || t.time > tn) {
        return Err(Error::OutsideInterval {
            time: term.time,
            t0,
            tn,
        });
    }
    Ok(evaluate_qoi(qoi, u, side))
}

/// How the coupling matrix is split into an implicit and a lagged part.
#[derive(Debug, Clone, PartialEq)]
pub enum SplittingScheme {
    /// `S = I`: every coupling is lagged.
    Jacobi,
    /// `S` lower triangular including the diagonal.
    GaussSeidel,
    /// `S` all ones: no splitting at all.
    Full,
    /// A user mask with entries in `{0, 1}`.
    Custom(DMatrix<f64>),
}

/// The pair `(B_hat, B_check)` with `B_hat = S * B` (elementwise) and the
/// constants of the a-priori splitting bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub mask: DMatrix<bool>,
    pub b_hat: DMatrix<f64>,
    pub b_check: DMatrix<f64>,
    /// Logarithmic norm of `-B_hat`; negative for dissipative splittings.
    pub l1: f64,
    /// Spectral norm of `B_check`.
    pub l2: f64,
}

impl Splitting {
    pub fn dim(&self) -> usize {
        self.b_hat.nrows()
    }

    /// Contraction ratio `L2 / |L1|` when the implicit part is dissipative.
    pub fn ratio(&self) -> Option<f64> {
        (self.l1 < 0.0).then(|| self.l2 / -self.l1)
    }
}

pub fn build_splitting(b: &DMatrix<f64>, scheme: &SplittingScheme) -> Result<Splitting> {
    if !b.is_square() {
        return Err(Error::NotSquare {
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    let m = b.nrows();
    let mask = match scheme {
        SplittingScheme::Jacobi => DMatrix::from_fn(m, m, |r, c| r == c),
        SplittingScheme::GaussSeidel => DMatrix::from_fn(m, m, |r, c| c <= r),
        SplittingScheme::Full => DMatrix::from_element(m, m, true),
        SplittingScheme::Custom(s) => {
            if s.shape() != b.shape() {
                return Err(Error::DimensionMismatch {
                    what: "splitting mask",
                    expected: m,
                    found: if s.nrows() != m { s.nrows() } else { s.ncols() },
                });
            }
            let mut mask = DMatrix::from_element(m, m, false);
            for r in 0..m {
                for c in 0..m {
                    let value = s[(r, c)];
                    if value == 1.0 {
                        mask[(r, c)] = true;
                    } else if value != 0.0 {
                        return Err(Error::InvalidMask {
                            row: r,
                            col: c,
                            value,
                        });
                    }
                }
            }
            mask
        }
    };
    let b_hat = DMatrix::from_fn(m, m, |r, c| if mask[(r, c)] { b[(r, c)] } else { 0.0 });
    let b_check = DMatrix::from_fn(m, m, |r, c| if mask[(r, c)] { 0.0 } else { b[(r, c)] });
    let (l1, l2) = lipschitz_constants(&b_hat, &b_check)?;
    Ok(Splitting {
        mask,
        b_hat,
        b_check,
        l1,
        l2,
    })
}

/// `L1 = lambda_max(-(B_hat + B_hat^T) / 2)` and `L2 = sigma_max(B_check)`.
pub fn lipschitz_constants(b_hat: &DMatrix<f64>, b_check: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !b_hat.is_square() {
        return Err(Error::NotSquare {
            rows: b_hat.nrows(),
            cols: b_hat.ncols(),
        });
    }
    if b_check.shape() != b_hat.shape() {
        return Err(Error::DimensionMismatch {
            what: "B_check",
            expected: b_hat.nrows(),
            found: b_check.nrows(),
        });
    }
    if b_hat.iter().chain(b_check.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("splitting matrices"));
    }
    let sym = -(b_hat + b_hat.transpose()) * 0.5;
    let l1 = SymmetricEigen::new(sym).eigenvalues.max();
    let l2 = if b_check.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        b_check.clone().svd(false, false).singular_values.max()
    };
    Ok((l1, l2))
}
