//! Matrix-valued affine expressions in a vector of scalar decision
//! variables, used to write LMIs the way they are written by hand.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `F₀ + Σ yᵢ Fᵢ` with every `Fᵢ` of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        AffineExpr {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    fn add_term(&mut self, var: usize, coeff: DMatrix<f64>) {
        match self.terms.get_mut(&var) {
            Some(existing) => *existing += coeff,
            None => {
                self.terms.insert(var, coeff);
            }
        }
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        AffineExpr {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&k, v)| (k, f(v))).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `L · self`.
    pub fn left_mul(&self, l: &DMatrix<f64>) -> Self {
        self.map(|m| l * m)
    }

    /// `self · R`.
    pub fn right_mul(&self, r: &DMatrix<f64>) -> Self {
        self.map(|m| m * r)
    }

    /// `self + selfᵀ`.
    pub fn sym(&self) -> Self {
        self.map(|m| m + m.transpose())
    }

    /// 1×1 expression holding the trace.
    pub fn trace(&self) -> Self {
        self.map(|m| DMatrix::from_element(1, 1, m.trace()))
    }

    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&i, m) in &self.terms {
            out += m * y[i];
        }
        out
    }

    /// Largest entrywise magnitude over the constant and all coefficients.
    pub fn scale_estimate(&self) -> f64 {
        self.terms
            .values()
            .chain(std::iter::once(&self.constant))
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }

    /// Assembles a block matrix. Every row of blocks must agree in height and
    /// every column in width.
    pub fn block(rows: &[Vec<AffineExpr>]) -> Result<Self> {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].shape().0).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.shape().1).collect();
        for row in rows {
            if row.len() != widths.len() {
                return Err(Error::Dimension("ragged block matrix".into()));
            }
        }
        let (nr, nc) = (heights.iter().sum(), widths.iter().sum());
        let mut out = AffineExpr::zeros(nr, nc);
        let mut r0 = 0;
        for (bi, row) in rows.iter().enumerate() {
            let mut c0 = 0;
            for (bj, blk) in row.iter().enumerate() {
                if blk.shape() != (heights[bi], widths[bj]) {
                    return Err(Error::Dimension(format!(
                        "block ({bi},{bj}) is {:?}, expected {:?}",
                        blk.shape(),
                        (heights[bi], widths[bj])
                    )));
                }
                let place = |m: &DMatrix<f64>| {
                    let mut full = DMatrix::zeros(nr, nc);
                    full.view_mut((r0, c0), m.shape()).copy_from(m);
                    full
                };
                out.constant.view_mut((r0, c0), blk.shape()).copy_from(&blk.constant);
                for (&k, m) in &blk.terms {
                    match out.terms.get_mut(&k) {
                        Some(existing) => {
                            let mut v = existing.view_mut((r0, c0), m.shape());
                            v += m;
                        }
                        None => {
                            out.terms.insert(k, place(m));
                        }
                    }
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "affine expression shape mismatch");
    }
}

impl Add for &AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: &AffineExpr) -> AffineExpr {
        self.check_same_shape(rhs);
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (&k, m) in &rhs.terms {
            out.add_term(k, m.clone());
        }
        out
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: AffineExpr) -> AffineExpr {
        &self + &rhs
    }
}

impl Neg for &AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self.scale(-1.0)
    }
}

impl Sub for &AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: &AffineExpr) -> AffineExpr {
        self + &(-rhs)
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        &self - &rhs
    }
}

impl Mul<&AffineExpr> for &DMatrix<f64> {
    type Output = AffineExpr;
    fn mul(self, rhs: &AffineExpr) -> AffineExpr {
        rhs.left_mul(self)
    }
}

impl Mul<&DMatrix<f64>> for &AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: &DMatrix<f64>) -> AffineExpr {
        self.right_mul(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarShape {
    Symmetric(usize),
    Full(usize, usize),
}

/// A matrix of decision variables occupying a contiguous range of the
/// scalar variable vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixVar {
    pub name: String,
    pub offset: usize,
    pub shape: VarShape,
}

impl MatrixVar {
    pub fn len(&self) -> usize {
        match self.shape {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.shape {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }

    /// Entries `(row, col)` each scalar variable controls, in order.
    fn slots(&self) -> Vec<(usize, usize)> {
        match self.shape {
            VarShape::Symmetric(n) => (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect(),
            VarShape::Full(r, c) => (0..c).flat_map(|j| (0..r).map(move |i| (i, j))).collect(),
        }
    }

    pub fn expr(&self) -> AffineExpr {
        let (r, c) = self.dims();
        let mut e = AffineExpr::zeros(r, c);
        for (k, (i, j)) in self.slots().into_iter().enumerate() {
            let mut m = DMatrix::zeros(r, c);
            m[(i, j)] = 1.0;
            if matches!(self.shape, VarShape::Symmetric(_)) {
                m[(j, i)] = 1.0;
            }
            e.terms.insert(self.offset + k, m);
        }
        e
    }

    pub fn value(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let (r, c) = self.dims();
        let mut m = DMatrix::zeros(r, c);
        let symmetric = matches!(self.shape, VarShape::Symmetric(_));
        for (k, (i, j)) in self.slots().into_iter().enumerate() {
            m[(i, j)] = y[self.offset + k];
            if symmetric {
                m[(j, i)] = y[self.offset + k];
            }
        }
        m
    }

    /// Writes a matrix value into the scalar variable vector.
    pub fn store(&self, value: &DMatrix<f64>, y: &mut DVector<f64>) {
        for (k, (i, j)) in self.slots().into_iter().enumerate() {
            y[self.offset + k] = value[(i, j)];
        }
    }
}

/// Allocates decision variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarTable {
    pub vars: Vec<MatrixVar>,
    pub count: usize,
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: &str, shape: VarShape) -> MatrixVar {
        let v = MatrixVar {
            name: name.to_string(),
            offset: self.count,
            shape,
        };
        self.count += v.len();
        self.vars.push(v.clone());
        v
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> MatrixVar {
        self.push(name, VarShape::Symmetric(n))
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> MatrixVar {
        self.push(name, VarShape::Full(rows, cols))
    }

    pub fn scalar(&mut self, name: &str) -> MatrixVar {
        self.push(name, VarShape::Full(1, 1))
    }

    pub fn get(&self, name: &str) -> Option<&MatrixVar> {
        self.vars.iter().find(|v| v.name == name)
    }
}
