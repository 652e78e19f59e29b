//! Sampled light-cone lifts of submanifolds of S^n and their first-order
//! induced data.

use nalgebra::{DMatrix, DVector};

use crate::chart::{Chart, GridField, StencilOrder};
use crate::error::{Error, Result};
use crate::minkowski::{LorentzVec, MinkowskiSpace, SpaceformGauge};

/// A sampled map from a chart into the positive light cone: an immersion of
/// the chart into S^n together with a gauge (scale) choice.
#[derive(Debug, Clone)]
pub struct LightConeLift {
    pub space: MinkowskiSpace,
    pub chart: Chart,
    pub sigma: GridField<LorentzVec>,
}

/// Nodewise Gram matrices g_ij = <d_i sigma, d_j sigma>.
#[derive(Debug, Clone)]
pub struct InducedMetric {
    pub g: GridField<DMatrix<f64>>,
    /// Which normalization of sigma produced this metric.
    pub gauge_note: String,
}

/// Gauge normalizations of a lift.
#[derive(Debug, Clone)]
pub enum GaugeMode {
    /// m = 2, conformal chart required: rescale so g = identity.
    Isothermal,
    /// m = 1: rescale so g = 1.
    Arclength,
    /// Rescale so <v_inf, sigma> = -1.
    Spaceform(SpaceformGauge),
}

impl LightConeLift {
    pub fn new(space: MinkowskiSpace, chart: Chart, sigma: GridField<LorentzVec>) -> Self {
        assert_eq!(chart.len(), sigma.values.len());
        LightConeLift {
            space,
            chart,
            sigma,
        }
    }

    pub fn from_fn(
        space: MinkowskiSpace,
        chart: Chart,
        mut f: impl FnMut(&[f64]) -> LorentzVec,
    ) -> Self {
        let sigma = GridField::from_fn(&chart, |_, x| f(x));
        LightConeLift::new(space, chart, sigma)
    }

    pub fn m(&self) -> usize {
        self.chart.dim()
    }

    /// Check the lift invariants: null, positive cone, immersive.
    ///
    /// The immersive test requires every eigenvalue of the Gram matrix to
    /// exceed 1e-8 times its trace at interior nodes.
    pub fn validate(&self, order: StencilOrder) -> Result<()> {
        let sp = &self.space;
        for (lin, s) in self.sigma.values.iter().enumerate() {
            let sq = sp.inner(s, s).abs();
            if sq > 1e-10 * s.norm_squared() {
                return Err(Error::NotImmersed {
                    node: lin,
                    detail: format!("lift is not null: <s,s> = {sq:.3e}"),
                });
            }
            if s[0] <= 0.0 {
                return Err(Error::NotImmersed {
                    node: lin,
                    detail: "lift leaves the positive cone".into(),
                });
            }
        }
        let metric = self.induced_metric(order)?;
        for &lin in metric.g.valid_indices().iter() {
            let g = &metric.g.values[lin];
            let tr = g.trace();
            let eig = g.clone().symmetric_eigen().eigenvalues;
            if eig.iter().any(|&l| l <= 1e-8 * tr) {
                return Err(Error::NotImmersed {
                    node: lin,
                    detail: format!("degenerate Gram matrix, eigenvalues {:?}", eig.as_slice()),
                });
            }
        }
        Ok(())
    }

    /// First coordinate derivatives of sigma.
    pub fn first_jets(&self, order: StencilOrder) -> Result<Vec<GridField<LorentzVec>>> {
        (0..self.m())
            .map(|a| self.sigma.partial(a, order))
            .collect()
    }

    /// First and symmetrized second coordinate derivatives.
    ///
    /// Second derivatives come back in the order (0,0), (0,1), ..., i<=j
    /// row-major over the upper triangle.
    pub fn jets(
        &self,
        order: StencilOrder,
    ) -> Result<(Vec<GridField<LorentzVec>>, Vec<GridField<LorentzVec>>)> {
        let first = self.first_jets(order)?;
        let mut second = Vec::new();
        for i in 0..self.m() {
            for j in i..self.m() {
                second.push(first[i].partial(j, order)?);
            }
        }
        Ok((first, second))
    }

    /// Index of the (i,j) second jet in the upper-triangle layout.
    pub fn jet2_index(&self, i: usize, j: usize) -> usize {
        let m = self.m();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // offset of row i in the packed upper triangle
        i * m - i * (i + 1) / 2 + j
    }

    /// Nodewise induced metric g_ij = <d_i sigma, d_j sigma>; errors with
    /// the offending node when the Gram matrix degenerates in the interior.
    pub fn induced_metric(&self, order: StencilOrder) -> Result<InducedMetric> {
        let first = self.first_jets(order)?;
        let m = self.m();
        let sp = self.space.clone();
        let chart = self.chart.clone();
        let margin = first.iter().map(|f| f.valid_margin).max().unwrap_or(0);
        let values: Vec<DMatrix<f64>> = (0..chart.len())
            .map(|lin| {
                DMatrix::from_fn(m, m, |i, j| {
                    sp.inner(&first[i].values[lin], &first[j].values[lin])
                })
            })
            .collect();
        for (lin, gm) in values.iter().enumerate() {
            let idx = chart.multi_index(lin);
            if !chart.in_valid_region(&idx, margin) {
                continue;
            }
            let tr = gm.trace() / m as f64;
            if !(gm.determinant() > (1e-8 * tr.abs()).powi(m as i32)) {
                return Err(Error::NotImmersed {
                    node: lin,
                    detail: format!("degenerate Gram matrix {gm}"),
                });
            }
        }
        let g = GridField::new(chart, values).with_margin(margin);
        Ok(InducedMetric {
            g,
            gauge_note: "as-sampled".into(),
        })
    }

    /// Apply a constant Lorentz matrix to every node.
    pub fn transformed(&self, t: &DMatrix<f64>) -> LightConeLift {
        LightConeLift {
            space: self.space.clone(),
            chart: self.chart.clone(),
            sigma: self.sigma.map(|s| t * s),
        }
    }

    /// Rescale the lift nodewise by e^{u}.
    pub fn rescaled(&self, u: &GridField<f64>) -> LightConeLift {
        LightConeLift {
            space: self.space.clone(),
            chart: self.chart.clone(),
            sigma: self.sigma.zip(u, |s, &w| s * w.exp()),
        }
    }

    /// Normalize the gauge per `mode`; idempotent on already-normalized input.
    pub fn normalize_gauge(&self, mode: &GaugeMode, order: StencilOrder) -> Result<LightConeLift> {
        match mode {
            GaugeMode::Spaceform(gauge) => {
                let sp = &self.space;
                let values = self
                    .sigma
                    .values
                    .iter()
                    .map(|s| sp.spaceform_normalize(s, gauge))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LightConeLift {
                    space: self.space.clone(),
                    chart: self.chart.clone(),
                    sigma: GridField::new(self.chart.clone(), values),
                })
            }
            GaugeMode::Arclength => {
                if self.m() != 1 {
                    return Err(Error::Gauge("arclength mode requires m = 1".into()));
                }
                let metric = self.induced_metric(order)?;
                // e^{2u} g11 = 1
                let u = metric.g.map(|g| -0.5 * g[(0, 0)].ln());
                Ok(self.rescaled(&u))
            }
            GaugeMode::Isothermal => {
                if self.m() != 2 {
                    return Err(Error::Gauge("isothermal mode requires m = 2".into()));
                }
                let metric = self.induced_metric(order)?;
                // rescale by (det g)^{-1/4}
                let u = metric.g.map(|g| {
                    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
                    -0.25 * det.ln()
                });
                let rescaled = self.rescaled(&u);
                // conformality check after the rescale attempt; the
                // threshold scales with h (finite differences cannot verify
                // conformality beyond stencil accuracy) but is capped so
                // genuinely anisotropic charts always fail
                let g2 = rescaled.induced_metric(order)?;
                let h: f64 = self.chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
                let tol = (30.0 * h * h).max(1e-6);
                let mut max_dev: f64 = 0.0;
                for &lin in g2.g.valid_indices().iter() {
                    let g = &g2.g.values[lin];
                    let scale = g[(0, 0)].abs().max(1e-300);
                    let dev = ((g[(0, 0)] - g[(1, 1)]).abs() / scale)
                        .max(g[(0, 1)].abs() / scale);
                    max_dev = max_dev.max(dev);
                }
                if max_dev > tol {
                    return Err(Error::NotIsothermal { max_dev });
                }
                Ok(rescaled)
            }
        }
    }
}

/// Pair a Lorentz-vector field with another nodewise under the ambient form.
pub fn inner_field(
    space: &MinkowskiSpace,
    a: &GridField<LorentzVec>,
    b: &GridField<LorentzVec>,
) -> GridField<f64> {
    a.zip(b, |u, v| space.inner(u, v))
}

/// Lift of a euclidean chart map x -> c(x) in R^n via stereoprojection.
pub fn stereo_lift_of_map(
    space: &MinkowskiSpace,
    chart: &Chart,
    mut c: impl FnMut(&[f64]) -> DVector<f64>,
) -> LightConeLift {
    let sp = space.clone();
    let sigma = GridField::from_fn(chart, |_, x| sp.stereo_lift(&c(x)));
    LightConeLift::new(space.clone(), chart.clone(), sigma)
}
