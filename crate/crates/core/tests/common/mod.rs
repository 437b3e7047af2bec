#![allow(dead_code)]

use godi_core::model::{Problem, Qoi, Signal, SignalTerm};
use nalgebra::{DMatrix, DVector};

fn sin(amplitude: f64, frequency: f64) -> SignalTerm {
    SignalTerm::Sin {
        amplitude,
        frequency,
    }
}

pub fn exp1() -> (Problem, Qoi) {
    let b = DMatrix::from_row_slice(2, 2, &[10.0, -1.0, 1.0, 10.0]);
    let y = Signal::new(vec![vec![sin(10.0, 1.0)], vec![sin(1.0, 10.0)]]);
    let p = Problem::new(b, y, DVector::from_vec(vec![-0.1, 0.1]), (0.0, 3.0)).unwrap();
    let q = Qoi::from_pairs(&[(2.0, &[1.0, 0.0]), (3.0, &[1.0, 2.0])], &p).unwrap();
    (p, q)
}

pub fn exp2() -> (Problem, Qoi) {
    let b = DMatrix::from_row_slice(
        4,
        4,
        &[
            5.0, 0.0, 0.0, 0.0, 2.0, 5.0, 1.0, 0.0, 2.0, 0.0, 5.0, 1.0, 0.0, 0.0, -1.0, 5.0,
        ],
    );
    let y = Signal::new(vec![
        vec![sin(10.0, 1.0)],
        vec![sin(-10.0, 1.0)],
        vec![sin(1.0, 10.0)],
        vec![sin(-1.0, 1.0)],
    ]);
    let p = Problem::new(
        b,
        y,
        DVector::from_vec(vec![-0.4, -0.2, 0.2, 0.4]),
        (0.0, 2.5),
    )
    .unwrap();
    let q = Qoi::from_pairs(
        &[(0.5, &[0.0, 1.0, 0.0, 0.0]), (2.5, &[0.0, 0.0, 1.0, 0.0])],
        &p,
    )
    .unwrap();
    (p, q)
}

/// A random diagonally dominant problem with `m` components on `[0, tn]`.
pub fn random_problem(rng: &mut impl rand::Rng, m: usize, tn: f64) -> Problem {
    let b = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            rng.random_range(1.0..4.0)
        } else {
            rng.random_range(-0.8..0.8)
        }
    });
    let forcing = (0..m)
        .map(|_| {
            vec![
                SignalTerm::Constant {
                    value: rng.random_range(-1.0..1.0),
                },
                SignalTerm::Sin {
                    amplitude: rng.random_range(-2.0..2.0),
                    frequency: rng.random_range(0.5..5.0),
                },
                SignalTerm::Cos {
                    amplitude: rng.random_range(-1.0..1.0),
                    frequency: rng.random_range(0.5..3.0),
                },
                SignalTerm::Power {
                    amplitude: rng.random_range(-0.5..0.5),
                    exponent: rng.random_range(0..3),
                },
            ]
        })
        .collect();
    let u0 = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    Problem::new(b, Signal::new(forcing), u0, (0.0, tn)).unwrap()
}

/// Textbook explicit Euler, `u_j = u_{j-1} + h (y(t_{j-1}) - B u_{j-1})`.
pub fn classical_euler(p: &Problem, n: usize) -> Vec<DVector<f64>> {
    let h = (p.tn() - p.t0()) / n as f64;
    let mut out = vec![p.initial().clone()];
    for j in 1..=n {
        let t = p.t0() + (j - 1) as f64 * h;
        let u = &out[j - 1];
        let next = u + h * (p.forcing().eval(t) - p.matrix() * u);
        out.push(next);
    }
    out
}

/// Textbook Crank-Nicolson with trapezoidal forcing.
pub fn classical_cn(p: &Problem, n: usize) -> Vec<DVector<f64>> {
    let m = p.dim();
    let h = (p.tn() - p.t0()) / n as f64;
    let id = DMatrix::<f64>::identity(m, m);
    let lhs = (&id + p.matrix() * (0.5 * h)).lu();
    let rhs_m = &id - p.matrix() * (0.5 * h);
    let mut out = vec![p.initial().clone()];
    for j in 1..=n {
        let (a, b) = (p.t0() + (j - 1) as f64 * h, p.t0() + j as f64 * h);
        let rhs = &rhs_m * &out[j - 1] + (p.forcing().eval(a) + p.forcing().eval(b)) * (0.5 * h);
        out.push(lhs.solve(&rhs).unwrap());
    }
    out
}
