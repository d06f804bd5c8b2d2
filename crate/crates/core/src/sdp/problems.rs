//! Small problems with known answers, shared by tests and examples.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lmi::{AffineMatrixExpr, LinMat, LmiProblem, VariableRegistry};

/// `min t` s.t. `diag(1, −3) + t·I ⪰ 0`; the optimum is `t = 3`.
pub fn eigenvalue_shift() -> LmiProblem {
    let mut reg = VariableRegistry::new();
    let t = reg.add_symmetric("t", 1);
    let a = DMatrix::from_diagonal(&nalgebra::dvector![1.0, -3.0]);
    let mut lm = LinMat::constant(a);
    for k in 0..2 {
        lm.add_block(k, k, &t.lin());
    }
    let expr = AffineMatrixExpr::from_linmat(&lm.scale(-1.0)).unwrap();
    let mut p = LmiProblem::new(reg, 0.0);
    p.negative("shifted", expr);
    p.objective.push((t.id(0, 0), 1.0));
    p
}

/// `min t` s.t. `A0_k + Σ x_i A_ik + t·I ⪰ 0` for `k < count`, `|x_i| ≤ 1`.
/// The same seed with a larger `count` adds constraints to the smaller
/// problem, so its optimum can only rise.
pub fn random_nested(seed: u64, count: usize) -> LmiProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reg = VariableRegistry::new();
    let xs: Vec<_> = (0..3).map(|i| reg.add_symmetric(format!("x{i}"), 1)).collect();
    let t = reg.add_symmetric("t", 1);
    let mut p = LmiProblem::new(reg, 0.0);
    let dim = 4;
    let rsym = |rng: &mut ChaCha8Rng| {
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        (&m + m.transpose()) * 0.5
    };
    let mats: Vec<Vec<DMatrix<f64>>> = (0..count).map(|_| (0..4).map(|_| rsym(&mut rng)).collect()).collect();
    for (k, ms) in mats.iter().enumerate() {
        let mut lm = LinMat::constant(ms[0].clone());
        for (i, x) in xs.iter().enumerate() {
            lm = &lm + &x.lin().scalar_times(&ms[i + 1]);
        }
        for r in 0..dim {
            lm.add_block(r, r, &t.lin());
        }
        p.positive_semidefinite(format!("F{k}"), AffineMatrixExpr::from_linmat(&lm).unwrap());
    }
    for x in &xs {
        let mut lm = LinMat::identity(2);
        lm.add_block(0, 1, &x.lin());
        lm.add_block(1, 0, &x.lin());
        p.positive_semidefinite(format!("box {}", x.name), AffineMatrixExpr::from_linmat(&lm).unwrap());
    }
    p.objective.push((t.id(0, 0), 1.0));
    p
}

