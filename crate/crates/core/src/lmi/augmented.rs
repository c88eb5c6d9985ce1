use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::LinearPlant;
use crate::error::{Error, Result};

/// The plant stacked with a chain of `r` integrators that models the lumped
/// fault as a signal whose `r`-th derivative is an unknown input.
///
/// State `z = (x, ξ, ξ', …, ξ^(r-1))`, disturbance `(ω, ξ^(r))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPlant {
    #[serde(with = "crate::dense")]
    pub aa: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub ba: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub da: DMatrix<f64>,
    #[serde(with = "crate::dense")]
    pub ca: DMatrix<f64>,
    /// Picks the fault estimate `ξ` out of `z`.
    #[serde(with = "crate::dense")]
    pub cbar: DMatrix<f64>,
    /// Picks the plant state `x` out of `z`.
    #[serde(with = "crate::dense")]
    pub va: DMatrix<f64>,
    /// `[V_a; C̄]`, the performance output of the estimation error.
    #[serde(with = "crate::dense")]
    pub cbar_a: DMatrix<f64>,
    pub order: usize,
    pub n_states: usize,
    pub n_fault: usize,
}

impl AugmentedPlant {
    /// Builds the augmented plant from generic state-space pieces:
    /// `ẋ = A x + B u + S ξ + D_w ω`, `y = C x`.
    pub fn from_parts(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        s: &DMatrix<f64>,
        d_w: &DMatrix<f64>,
        order: usize,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("r", "Taylor order must be at least 1"));
        }
        let n = a.nrows();
        let ng = s.ncols();
        let nw = d_w.ncols();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || s.nrows() != n || d_w.nrows() != n {
            return Err(Error::Dimension("inconsistent plant matrices".into()));
        }
        let nz = n + order * ng;
        let mut aa = DMatrix::zeros(nz, nz);
        aa.view_mut((0, 0), (n, n)).copy_from(a);
        aa.view_mut((0, n), (n, ng)).copy_from(s);
        for i in 0..order - 1 {
            aa.view_mut((n + i * ng, n + (i + 1) * ng), (ng, ng))
                .fill_with_identity();
        }
        let mut ba = DMatrix::zeros(nz, b.ncols());
        ba.view_mut((0, 0), (n, b.ncols())).copy_from(b);
        let mut da = DMatrix::zeros(nz, nw + ng);
        da.view_mut((0, 0), (n, nw)).copy_from(d_w);
        da.view_mut((nz - ng, nw), (ng, ng)).fill_with_identity();
        let mut ca = DMatrix::zeros(c.nrows(), nz);
        ca.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        let mut cbar = DMatrix::zeros(ng, nz);
        cbar.view_mut((0, n), (ng, ng)).fill_with_identity();
        let mut va = DMatrix::zeros(n, nz);
        va.view_mut((0, 0), (n, n)).fill_with_identity();
        let mut cbar_a = DMatrix::zeros(n + ng, nz);
        cbar_a.view_mut((0, 0), (n, nz)).copy_from(&va);
        cbar_a.view_mut((n, 0), (ng, nz)).copy_from(&cbar);
        Ok(AugmentedPlant {
            aa,
            ba,
            da,
            ca,
            cbar,
            va,
            cbar_a,
            order,
            n_states: n,
            n_fault: ng,
        })
    }

    pub fn n_z(&self) -> usize {
        self.aa.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.ca.nrows()
    }
}

/// Augments the healthy linear plant with an order-`r` fault model.
pub fn build_augmented(plant: &LinearPlant, order: usize) -> Result<AugmentedPlant> {
    fn dense<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
        DMatrix::from_column_slice(R, C, m.as_slice())
    }
    AugmentedPlant::from_parts(
        &dense(&plant.a),
        &dense(&plant.b),
        &dense(&plant.c),
        &dense(&plant.s),
        &dense(&plant.d_w),
        order,
    )
}
