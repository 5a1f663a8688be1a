use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{AdmittanceState, Network};
use crate::linalg::{CMatrix, RMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Signed incidence operator with a self-edge at every bus:
/// `(m + n) x n`, branch rows (`+1` at `from`, `-1` at `to`) on top of the
/// `n x n` identity.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceOperator {
    n: usize,
    ends: Vec<(usize, usize)>,
}

impl IncidenceOperator {
    pub fn new(net: &Network) -> Self {
        Self { n: net.n(), ends: net.branches().iter().map(|b| (b.from, b.to)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.ends.len()
    }

    pub fn rows(&self) -> usize {
        self.m() + self.n
    }

    pub fn ends(&self) -> &[(usize, usize)] {
        &self.ends
    }

    pub fn dense(&self) -> RMatrix {
        let mut a = RMatrix::zeros(self.rows(), self.n);
        for (e, &(f, t)) in self.ends.iter().enumerate() {
            a[(e, f)] = 1.0;
            a[(e, t)] = -1.0;
        }
        for i in 0..self.n {
            a[(self.m() + i, i)] = 1.0;
        }
        a
    }

    /// `A x`: voltage differences across branches followed by the bus voltages.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.ends.iter().map(|&(f, t)| x[f] - x[t]).chain(x.iter().copied()).collect()
    }

    /// Flow-side operator `(2m + n) x n`: from-end rows, the identity for
    /// shunts, then to-end rows.
    pub fn flow_dense(&self) -> RMatrix {
        let m = self.m();
        let mut c = RMatrix::zeros(2 * m + self.n, self.n);
        for (e, &(f, t)) in self.ends.iter().enumerate() {
            c[(e, f)] = 1.0;
            c[(m + self.n + e, t)] = 1.0;
        }
        for i in 0..self.n {
            c[(m + i, i)] = 1.0;
        }
        c
    }

    /// `C x`: the bus voltage seen at each flow measurement point.
    pub fn flow_apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let from = self.ends.iter().map(|&(f, _)| x[f]);
        let to = self.ends.iter().map(|&(_, t)| x[t]);
        from.chain(x.iter().copied()).chain(to).collect()
    }

    /// Index of the bus read by flow row `row`.
    pub fn flow_bus(&self, row: usize) -> usize {
        let m = self.m();
        if row < m {
            self.ends[row].0
        } else if row < m + self.n {
            row - m
        } else {
            self.ends[row - m - self.n].1
        }
    }
}

/// Nodal admittance matrix `Y = A^T diag(w) A`, assembled by stamping.
pub fn assemble_y(net: &Network, ast: &AdmittanceState) -> CMatrix {
    let n = net.n();
    let mut y = DMatrix::from_element(n, n, ZERO);
    for (br, &w) in net.branches().iter().zip(&ast.w_branch) {
        y[(br.from, br.from)] += w;
        y[(br.to, br.to)] += w;
        y[(br.from, br.to)] -= w;
        y[(br.to, br.from)] -= w;
    }
    for (i, &w) in ast.w_shunt.iter().enumerate() {
        y[(i, i)] += w;
    }
    y
}

/// `F(x) = diag(conj(x)) A^T diag(A x)`, so that `conj(s) = F(x) w`.
///
/// Column `e` of a branch `(f, t)` has `conj(x_f)(x_f - x_t)` in row `f`
/// and `-conj(x_t)(x_f - x_t)` in row `t`; shunt column `i` has `|x_i|^2`.
pub fn build_f(x: &[Complex64], a: &IncidenceOperator) -> CMatrix {
    let (n, m) = (a.n(), a.m());
    let mut f = DMatrix::from_element(n, m + n, ZERO);
    for (e, &(fr, to)) in a.ends().iter().enumerate() {
        let d = x[fr] - x[to];
        f[(fr, e)] = x[fr].conj() * d;
        f[(to, e)] = -x[to].conj() * d;
    }
    for i in 0..n {
        f[(i, m + i)] = Complex64::new(x[i].norm_sqr(), 0.0);
    }
    f
}
