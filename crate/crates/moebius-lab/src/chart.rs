//! Structured grids over parameter domains and finite-difference calculus.
//!
//! Non-periodic boundaries use margin exclusion rather than one-sided
//! stencils: every derivative grows the excluded band by order/2, so reported
//! residuals are pure interior quantities and convergence orders stay clean.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A structured grid over an m-dimensional parameter box, m in {1,2,3}.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Chart {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub periodic: Vec<bool>,
    pub origin: Vec<f64>,
}

impl Chart {
    pub fn new(shape: &[usize], spacing: &[f64], periodic: &[bool], origin: &[f64]) -> Result<Self> {
        let m = shape.len();
        if m == 0 || m > 3 {
            return Err(Error::InvalidArgument(format!(
                "chart dimension must be 1..=3, got {m}"
            )));
        }
        if spacing.len() != m || periodic.len() != m || origin.len() != m {
            return Err(Error::DimensionMismatch("chart field lengths differ".into()));
        }
        for a in 0..m {
            let min = if periodic[a] { 4 } else { 5 };
            if shape[a] < min {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} needs at least {min} samples, got {}",
                    shape[a]
                )));
            }
            if spacing[a] <= 0.0 {
                return Err(Error::InvalidArgument("spacing must be positive".into()));
            }
        }
        Ok(Chart {
            shape: shape.to_vec(),
            spacing: spacing.to_vec(),
            periodic: periodic.to_vec(),
            origin: origin.to_vec(),
        })
    }

    /// Uniform periodic chart over [0, 2*pi)^m.
    pub fn periodic_square(m: usize, samples: usize) -> Self {
        let h = 2.0 * std::f64::consts::PI / samples as f64;
        Chart::new(
            &vec![samples; m],
            &vec![h; m],
            &vec![true; m],
            &vec![0.0; m],
        )
        .expect("valid periodic chart")
    }

    /// Uniform non-periodic chart over [lo, hi]^m with `samples` nodes per axis.
    pub fn box_chart(m: usize, lo: f64, hi: f64, samples: usize) -> Self {
        let h = (hi - lo) / (samples - 1) as f64;
        Chart::new(
            &vec![samples; m],
            &vec![h; m],
            &vec![false; m],
            &vec![lo; m],
        )
        .expect("valid box chart")
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linear index of a multi-index.
    pub fn index(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        for a in 0..self.dim() {
            lin = lin * self.shape[a] + idx[a];
        }
        lin
    }

    /// Multi-index of a linear index.
    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let m = self.dim();
        let mut idx = vec![0; m];
        for a in (0..m).rev() {
            idx[a] = lin % self.shape[a];
            lin /= self.shape[a];
        }
        idx
    }

    /// Coordinates of a node.
    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.origin[a] + self.spacing[a] * idx[a] as f64)
            .collect()
    }

    /// Step the multi-index along `axis` by `offset` nodes, wrapping on
    /// periodic axes. Returns None when a non-periodic boundary is crossed.
    pub fn neighbor(&self, idx: &[usize], axis: usize, offset: isize) -> Option<Vec<usize>> {
        let mut out = idx.to_vec();
        let n = self.shape[axis] as isize;
        let raw = idx[axis] as isize + offset;
        if self.periodic[axis] {
            out[axis] = raw.rem_euclid(n) as usize;
        } else if raw < 0 || raw >= n {
            return None;
        } else {
            out[axis] = raw as usize;
        }
        Some(out)
    }

    /// True when a node lies at least `margin` nodes away from every
    /// non-periodic boundary.
    pub fn in_valid_region(&self, idx: &[usize], margin: usize) -> bool {
        for a in 0..self.dim() {
            if !self.periodic[a] {
                if idx[a] < margin || idx[a] + margin >= self.shape[a] {
                    return false;
                }
            }
        }
        true
    }

    pub fn node_indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(move |lin| self.multi_index(lin))
    }
}

/// Value kinds usable in a [`GridField`].
pub trait FieldValue: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// Entrywise max-norm.
    fn max_norm(&self) -> f64;
}

impl FieldValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn max_norm(&self) -> f64 {
        self.abs()
    }
}

impl FieldValue for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn max_norm(&self) -> f64 {
        self.norm()
    }
}

impl FieldValue for nalgebra::DVector<f64> {
    fn zero_like(&self) -> Self {
        nalgebra::DVector::zeros(self.len())
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn max_norm(&self) -> f64 {
        self.amax()
    }
}

impl FieldValue for nalgebra::DMatrix<f64> {
    fn zero_like(&self) -> Self {
        nalgebra::DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn max_norm(&self) -> f64 {
        self.amax()
    }
}

/// One value per grid node, with a validity margin excluded near non-periodic
/// boundaries. Immutable in spirit: operations return new fields.
#[derive(Debug, Clone)]
pub struct GridField<T: FieldValue> {
    pub chart: Chart,
    pub values: Vec<T>,
    pub valid_margin: usize,
}

impl<T: FieldValue> GridField<T> {
    pub fn new(chart: Chart, values: Vec<T>) -> Self {
        assert_eq!(values.len(), chart.len(), "one value per node");
        GridField {
            chart,
            values,
            valid_margin: 0,
        }
    }

    pub fn from_fn(chart: &Chart, mut f: impl FnMut(&[usize], &[f64]) -> T) -> Self {
        let values = (0..chart.len())
            .map(|lin| {
                let idx = chart.multi_index(lin);
                let x = chart.coords(&idx);
                f(&idx, &x)
            })
            .collect();
        GridField::new(chart.clone(), values)
    }

    pub fn constant(chart: &Chart, v: T) -> Self {
        GridField::new(chart.clone(), vec![v; chart.len()])
    }

    pub fn at(&self, idx: &[usize]) -> &T {
        &self.values[self.chart.index(idx)]
    }

    pub fn at_lin(&self, lin: usize) -> &T {
        &self.values[lin]
    }

    pub fn map<U: FieldValue>(&self, f: impl Fn(&T) -> U + Sync) -> GridField<U> {
        GridField {
            chart: self.chart.clone(),
            values: self.values.iter().map(&f).collect(),
            valid_margin: self.valid_margin,
        }
    }

    pub fn zip<U: FieldValue, V: FieldValue>(
        &self,
        other: &GridField<U>,
        f: impl Fn(&T, &U) -> V + Sync,
    ) -> GridField<V> {
        assert_eq!(self.chart.shape, other.chart.shape, "fields on different grids");
        assert_eq!(self.chart.spacing, other.chart.spacing, "fields on different grids");
        // periodicity may differ when one side came off a universal-cover
        // reconstruction; the intersection of valid regions wins
        let periodic: Vec<bool> = self
            .chart
            .periodic
            .iter()
            .zip(&other.chart.periodic)
            .map(|(&a, &b)| a && b)
            .collect();
        let chart = Chart {
            shape: self.chart.shape.clone(),
            spacing: self.chart.spacing.clone(),
            periodic,
            origin: self.chart.origin.clone(),
        };
        GridField {
            chart,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
            valid_margin: self.valid_margin.max(other.valid_margin),
        }
    }

    pub fn linear_combination(&self, a: f64, other: &GridField<T>, b: f64) -> GridField<T> {
        self.zip(other, |x, y| x.scale(a).add(&y.scale(b)))
    }

    /// Central finite difference along `axis` of the requested stencil order.
    ///
    /// On non-periodic axes the valid margin grows by order/2; values in the
    /// excluded band are filled with one-sided copies of the nearest interior
    /// stencil but carry no accuracy guarantee.
    pub fn partial(&self, axis: usize, order: StencilOrder) -> Result<GridField<T>> {
        let chart = &self.chart;
        if axis >= chart.dim() {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} out of range for dimension {}",
                chart.dim()
            )));
        }
        let reach = order.reach();
        if chart.shape[axis] < 2 * reach + 1 {
            return Err(Error::InvalidArgument(
                "axis too short for the requested stencil".into(),
            ));
        }
        let h = chart.spacing[axis];
        let mut values = Vec::with_capacity(chart.len());
        for lin in 0..chart.len() {
            let idx = chart.multi_index(lin);
            let sample = |off: isize| -> &T {
                // clamp into range on non-periodic axes; margin bookkeeping
                // marks these nodes invalid anyway
                let nb = match chart.neighbor(&idx, axis, off) {
                    Some(nb) => nb,
                    None => {
                        let mut nb = idx.clone();
                        let n = chart.shape[axis] as isize;
                        nb[axis] = (idx[axis] as isize + off).clamp(0, n - 1) as usize;
                        nb
                    }
                };
                self.at(&nb)
            };
            let v = match order {
                StencilOrder::Two => sample(1).sub(sample(-1)).scale(1.0 / (2.0 * h)),
                StencilOrder::Four => {
                    let a = sample(-2).sub(sample(2));
                    let b = sample(1).sub(sample(-1));
                    a.add(&b.scale(8.0)).scale(1.0 / (12.0 * h))
                }
            };
            values.push(v);
        }
        let mut out = GridField::new(chart.clone(), values);
        out.valid_margin = self.valid_margin + if chart.periodic[axis] { 0 } else { reach };
        // margin growth applies to all non-periodic axes uniformly: keep the
        // single-band bookkeeping conservative
        if !chart.periodic[axis] {
            out.valid_margin = out.valid_margin.max(self.valid_margin + reach);
        }
        Ok(out)
    }

    /// Max-norm over the valid region only.
    pub fn residual_norm(&self) -> Result<f64> {
        let mut best: Option<f64> = None;
        for lin in 0..self.chart.len() {
            let idx = self.chart.multi_index(lin);
            if self.chart.in_valid_region(&idx, self.valid_margin) {
                let v = self.values[lin].max_norm();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best.ok_or_else(|| Error::InvalidArgument("empty valid region".into()))
    }

    /// Iterate linear indices of the valid region.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.chart.len())
            .filter(|&lin| {
                let idx = self.chart.multi_index(lin);
                self.chart.in_valid_region(&idx, self.valid_margin)
            })
            .collect()
    }

    pub fn with_margin(mut self, margin: usize) -> Self {
        self.valid_margin = margin;
        self
    }
}

/// Supported central-difference stencil orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Two,
    Four,
}

impl StencilOrder {
    pub fn reach(self) -> usize {
        match self {
            StencilOrder::Two => 1,
            StencilOrder::Four => 2,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            StencilOrder::Two => 2.0,
            StencilOrder::Four => 4.0,
        }
    }

    pub fn from_int(order: usize) -> Result<Self> {
        match order {
            2 => Ok(StencilOrder::Two),
            4 => Ok(StencilOrder::Four),
            _ => Err(Error::InvalidArgument(format!(
                "stencil order must be 2 or 4, got {order}"
            ))),
        }
    }
}

/// d/dz = (d/dx - i d/dy)/2 of a complex field on a 2-chart.
pub fn partial_z(f: &GridField<Complex64>, order: StencilOrder) -> Result<GridField<Complex64>> {
    let fx = f.partial(0, order)?;
    let fy = f.partial(1, order)?;
    Ok(fx.zip(&fy, |a, b| 0.5 * (a - Complex64::i() * b)))
}

/// d/dzbar = (d/dx + i d/dy)/2 of a complex field on a 2-chart.
pub fn partial_zbar(f: &GridField<Complex64>, order: StencilOrder) -> Result<GridField<Complex64>> {
    let fx = f.partial(0, order)?;
    let fy = f.partial(1, order)?;
    Ok(fx.zip(&fy, |a, b| 0.5 * (a + Complex64::i() * b)))
}

/// Least-squares slope of log r against log h.
///
/// Pairs must come with strictly decreasing h; any r = 0 reports the +inf
/// sentinel (the residual hit machine zero, i.e. converged faster than any
/// power).
pub fn convergence_order(residuals: &[(f64, f64)]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two (h, r) pairs".into(),
        ));
    }
    for w in residuals.windows(2) {
        if w[1].0 >= w[0].0 {
            return Err(Error::InvalidArgument("h must be strictly decreasing".into()));
        }
    }
    if residuals.iter().any(|&(_, r)| r == 0.0) {
        return Ok(f64::INFINITY);
    }
    let n = residuals.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(h, r) in residuals {
        let (x, y) = (h.ln(), r.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Ok((n * sxy - sx * sy) / (n * sxx - sx * sx))
}
