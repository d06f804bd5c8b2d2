//! Scalar decision variables, affine matrix expressions, and LMI problems.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Index of one scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// A matrix of scalar decision variables. Symmetric matrices own only
/// their lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub symmetric: bool,
    offset: usize,
}

impl MatrixVar {
    pub fn scalar_count(&self) -> usize {
        if self.symmetric {
            self.rows * (self.rows + 1) / 2
        } else {
            self.rows * self.cols
        }
    }

    /// Scalar owning entry `(i, j)`.
    pub fn id(&self, i: usize, j: usize) -> VarId {
        debug_assert!(i < self.rows && j < self.cols);
        if self.symmetric {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            VarId(self.offset + r * (r + 1) / 2 + c)
        } else {
            VarId(self.offset + i * self.cols + j)
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        let n = self.scalar_count();
        (0..n).map(move |k| VarId(self.offset + k))
    }

    /// Inverse of [`MatrixVar::id`] for ids owned by this matrix.
    fn position(&self, id: VarId) -> (usize, usize) {
        let k = id.0 - self.offset;
        if self.symmetric {
            let mut r = 0;
            while (r + 1) * (r + 2) / 2 <= k {
                r += 1;
            }
            (r, k - r * (r + 1) / 2)
        } else {
            (k / self.cols, k % self.cols)
        }
    }

    /// The variable as an affine expression of itself.
    pub fn lin(&self) -> LinMat {
        let mut out = LinMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.coeff_mut(self.id(i, j))[(i, j)] += 1.0;
            }
        }
        out
    }

    /// Numeric value under an assignment.
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| x[self.id(i, j).0])
    }

    /// Write a numeric value into an assignment (symmetric part for symmetric vars).
    pub fn store(&self, value: &DMatrix<f64>, x: &mut [f64]) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.symmetric || i >= j {
                    let v = if self.symmetric {
                        0.5 * (value[(i, j)] + value[(j, i)])
                    } else {
                        value[(i, j)]
                    };
                    x[self.id(i, j).0] = v;
                }
            }
        }
    }
}

/// Registry of matrix variables; each scalar has exactly one owner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableRegistry {
    vars: Vec<MatrixVar>,
    len: usize,
}

impl VariableRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, symmetric: bool) -> MatrixVar {
        let var = MatrixVar {
            name: name.into(),
            rows,
            cols,
            symmetric,
            offset: self.len,
        };
        self.len += var.scalar_count();
        self.vars.push(var.clone());
        var
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, n: usize) -> MatrixVar {
        self.push(name, n, n, true)
    }

    pub fn add_full(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> MatrixVar {
        self.push(name, rows, cols, false)
    }

    /// Number of scalar decision variables.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn matrices(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&MatrixVar> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn owner(&self, id: VarId) -> Option<&MatrixVar> {
        let k = self.vars.partition_point(|v| v.offset <= id.0);
        self.vars.get(k.checked_sub(1)?).filter(|v| id.0 < v.offset + v.scalar_count())
    }

    /// Human-readable name such as `N_1[2,0]`.
    pub fn describe(&self, id: VarId) -> String {
        match self.owner(id) {
            Some(v) => {
                let (i, j) = v.position(id);
                format!("{}[{},{}]", v.name, i, j)
            }
            None => format!("x{}", id.0),
        }
    }

    /// Named matrices of an assignment, in registration order.
    pub fn unpack(&self, x: &[f64]) -> Result<BTreeMap<String, DMatrix<f64>>> {
        if x.len() != self.len {
            return Err(Error::MissingVariable(format!(
                "assignment has {} scalars, registry has {}",
                x.len(),
                self.len
            )));
        }
        Ok(self.vars.iter().map(|v| (v.name.clone(), v.value(x))).collect())
    }

    /// Rebuild an assignment from named matrices.
    pub fn pack(&self, named: &BTreeMap<String, DMatrix<f64>>) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.len];
        for v in &self.vars {
            let m = named
                .get(&v.name)
                .ok_or_else(|| Error::MissingVariable(v.name.clone()))?;
            if m.shape() != (v.rows, v.cols) {
                return Err(Error::Dimension(format!(
                    "{} is {}x{}, expected {}x{}",
                    v.name,
                    m.nrows(),
                    m.ncols(),
                    v.rows,
                    v.cols
                )));
            }
            v.store(m, &mut x);
        }
        Ok(x)
    }
}

/// A (possibly rectangular) matrix affine in the decision variables, with
/// dense coefficients. Used to assemble blocks before symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct LinMat {
    rows: usize,
    cols: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<VarId, DMatrix<f64>>,
}

impl LinMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: DMatrix::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn coeff_mut(&mut self, id: VarId) -> &mut DMatrix<f64> {
        let (r, c) = (self.rows, self.cols);
        self.terms.entry(id).or_insert_with(|| DMatrix::zeros(r, c))
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self.terms.iter().map(|(k, v)| (*k, v.transpose())).collect(),
        }
    }

    /// `self + selfᵀ`.
    pub fn sym(&self) -> Self {
        self + &self.transpose()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(k, v)| (*k, v * s)).collect(),
        }
    }

    /// `self · m`.
    pub fn mul_right(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, m.nrows(), "LinMat::mul_right shape");
        Self {
            rows: self.rows,
            cols: m.ncols(),
            constant: &self.constant * m,
            terms: self.terms.iter().map(|(k, v)| (*k, v * m)).collect(),
        }
    }

    /// `m · self`.
    pub fn mul_left(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows, "LinMat::mul_left shape");
        Self {
            rows: m.nrows(),
            cols: self.cols,
            constant: m * &self.constant,
            terms: self.terms.iter().map(|(k, v)| (*k, m * v)).collect(),
        }
    }

    /// `self · m` for a 1×1 expression, giving an expression shaped like `m`.
    pub fn scalar_times(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.shape(), (1, 1), "LinMat::scalar_times needs a 1x1 expression");
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m * self.constant[(0, 0)],
            terms: self.terms.iter().map(|(k, v)| (*k, m * v[(0, 0)])).collect(),
        }
    }

    /// Add `block` into the sub-matrix starting at `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, block: &LinMat) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        let mut view = self.constant.view_mut((r0, c0), (block.rows, block.cols));
        view += &block.constant;
        for (id, v) in &block.terms {
            let dst = self.coeff_mut(*id);
            let mut view = dst.view_mut((r0, c0), (block.rows, block.cols));
            view += v;
        }
    }

    /// Assemble from a grid of optional blocks with the given block sizes.
    pub fn from_blocks(row_sizes: &[usize], col_sizes: &[usize], blocks: &[Vec<Option<LinMat>>]) -> Self {
        let mut out = LinMat::zeros(row_sizes.iter().sum(), col_sizes.iter().sum());
        let mut r0 = 0;
        for (bi, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    assert_eq!(b.shape(), (row_sizes[bi], col_sizes[bj]), "block ({bi},{bj}) shape");
                    out.add_block(r0, c0, b);
                }
                c0 += col_sizes[bj];
            }
            r0 += row_sizes[bi];
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (id, v) in &self.terms {
            out += v * x[id.0];
        }
        out
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }
}

impl Add for &LinMat {
    type Output = LinMat;

    fn add(self, rhs: &LinMat) -> LinMat {
        assert_eq!(self.shape(), rhs.shape(), "LinMat add shape");
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (id, v) in &rhs.terms {
            *out.coeff_mut(*id) += v;
        }
        out
    }
}

impl Sub for &LinMat {
    type Output = LinMat;

    fn sub(self, rhs: &LinMat) -> LinMat {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &LinMat {
    type Output = LinMat;

    fn neg(self) -> LinMat {
        self.scale(-1.0)
    }
}

impl Mul<&DMatrix<f64>> for &LinMat {
    type Output = LinMat;

    fn mul(self, rhs: &DMatrix<f64>) -> LinMat {
        self.mul_right(rhs)
    }
}

/// Symmetric coefficient stored by its upper triangle: an entry `(r, c, v)`
/// with `r < c` stands for `v` at both `(r, c)` and `(c, r)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..=c {
                if m[(r, c)] != 0.0 {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self { entries }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, n);
        self.add_to(&mut out, 1.0);
        out
    }

    pub fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += s * v;
            if r != c {
                m[(c, r)] += s * v;
            }
        }
    }

    /// `⟨self, b⟩ = Σ_ab self[a,b]·b[a,b]`, with `b` not necessarily symmetric.
    pub fn inner(&self, b: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * b[(r, r)] } else { v * (b[(r, c)] + b[(c, r)]) })
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| if r == c { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }
}

/// Square symmetric matrix affine in the scalar variables:
/// `constant + Σ_v x_v · coefficient_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    dim: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<VarId, SparseSym>,
}

impl AffineMatrixExpr {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    /// Convert an assembled square [`LinMat`], rejecting asymmetric parts.
    pub fn from_linmat(m: &LinMat) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c {
            return Err(Error::Dimension(format!("LMI block is {r}x{c}, not square")));
        }
        let asym = |a: &DMatrix<f64>| -> bool {
            let scale = a.amax().max(1.0);
            (a - a.transpose()).amax() > 1e-12 * scale
        };
        if asym(&m.constant) {
            return Err(Error::Solver("non-symmetric constant term".into()));
        }
        let mut terms = BTreeMap::new();
        for (id, v) in &m.terms {
            if asym(v) {
                return Err(Error::Solver(format!("non-symmetric coefficient for variable {}", id.0)));
            }
            let s = SparseSym::from_dense(v);
            if s.nnz() > 0 {
                terms.insert(*id, s);
            }
        }
        Ok(Self {
            dim: r,
            constant: 0.5 * (&m.constant + m.constant.transpose()),
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<VarId, SparseSym> {
        &self.terms
    }

    pub fn coefficient(&self, id: VarId) -> Option<&SparseSym> {
        self.terms.get(&id)
    }

    /// Add `s · var` for a symmetric matrix variable of this dimension.
    pub fn add_symmetric_var(&mut self, var: &MatrixVar, s: f64) {
        assert!(var.symmetric && var.rows == self.dim, "slack shape");
        if s == 0.0 {
            return;
        }
        for c in 0..self.dim {
            for r in 0..=c {
                let e = self.terms.entry(var.id(r, c)).or_default();
                match e.entries.iter_mut().find(|(a, b, _)| (*a, *b) == (r, c)) {
                    Some(entry) => entry.2 += s,
                    None => e.entries.push((r, c, s)),
                }
            }
        }
    }

    pub fn add_constant(&mut self, m: &DMatrix<f64>) {
        self.constant += m;
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            constant: &self.constant * s,
            terms: self
                .terms
                .iter()
                .map(|(k, v)| {
                    (
                        *k,
                        SparseSym {
                            entries: v.entries.iter().map(|&(r, c, a)| (r, c, a * s)).collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = self.constant.clone();
        for (id, coef) in &self.terms {
            let v = x
                .get(id.0)
                .ok_or_else(|| Error::MissingVariable(format!("x{}", id.0)))?;
            coef.add_to(&mut out, *v);
        }
        Ok(out)
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }

    /// Text listing of the constant term and each coefficient block,
    /// one `row col value` triple per upper-triangle nonzero (1-based).
    pub fn dump(&self, registry: &VariableRegistry) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "% affine matrix expression, dimension {}", self.dim);
        let _ = writeln!(s, "constant");
        for c in 0..self.dim {
            for r in 0..=c {
                let v = self.constant[(r, c)];
                if v != 0.0 {
                    let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
                }
            }
        }
        for (id, coef) in &self.terms {
            let _ = writeln!(s, "variable {}", registry.describe(*id));
            let mut entries = coef.entries.clone();
            entries.sort_by_key(|&(r, c, _)| (c, r));
            for (r, c, v) in entries {
                let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
            }
        }
        s
    }
}

/// Direction of a semidefinite constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `expr ⪯ −margin·I`
    NegativeDefinite,
    /// `expr ⪰ margin·I`
    PositiveDefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub label: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
    /// Strictness margin; zero for non-strict constraints.
    pub margin: f64,
}

impl LmiConstraint {
    /// `expr` oriented so that feasibility means `slack ⪰ 0`:
    /// `−expr − margin·I` or `expr − margin·I`.
    pub fn slack_expr(&self) -> AffineMatrixExpr {
        let n = self.expr.dim();
        let mut e = match self.sense {
            Sense::NegativeDefinite => self.expr.scale(-1.0),
            Sense::PositiveDefinite => self.expr.clone(),
        };
        e.add_constant(&(DMatrix::identity(n, n) * -self.margin));
        e
    }
}

/// A set of LMIs over a variable registry with a linear objective to minimize.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub registry: VariableRegistry,
    pub constraints: Vec<LmiConstraint>,
    pub objective: Vec<(VarId, f64)>,
    pub eps_strict: f64,
}

impl LmiProblem {
    pub fn new(registry: VariableRegistry, eps_strict: f64) -> Self {
        Self {
            registry,
            constraints: Vec::new(),
            objective: Vec::new(),
            eps_strict,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.registry.len()
    }

    /// `expr ≺ 0`, realized as `expr ⪯ −eps_strict·I`.
    pub fn negative(&mut self, label: impl Into<String>, expr: AffineMatrixExpr) {
        self.constraints.push(LmiConstraint {
            label: label.into(),
            expr,
            sense: Sense::NegativeDefinite,
            margin: self.eps_strict,
        });
    }

    /// `expr ≻ 0`, realized as `expr ⪰ eps_strict·I`.
    pub fn positive(&mut self, label: impl Into<String>, expr: AffineMatrixExpr) {
        self.constraints.push(LmiConstraint {
            label: label.into(),
            expr,
            sense: Sense::PositiveDefinite,
            margin: self.eps_strict,
        });
    }

    /// `expr ⪰ 0`.
    pub fn positive_semidefinite(&mut self, label: impl Into<String>, expr: AffineMatrixExpr) {
        self.constraints.push(LmiConstraint {
            label: label.into(),
            expr,
            sense: Sense::PositiveDefinite,
            margin: 0.0,
        });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|(id, c)| c * x[id.0]).sum()
    }

    /// Every referenced variable must be registered.
    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        for c in &self.constraints {
            if let Some(id) = c.expr.variables().find(|id| id.0 >= n) {
                return Err(Error::MissingVariable(format!(
                    "constraint {} references unregistered x{}",
                    c.label, id.0
                )));
            }
        }
        if let Some((id, _)) = self.objective.iter().find(|(id, _)| id.0 >= n) {
            return Err(Error::MissingVariable(format!(
                "objective references unregistered x{}",
                id.0
            )));
        }
        Ok(())
    }
}
