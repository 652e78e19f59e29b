//! The primitive Gauss-Codazzi-Ricci data of an immersion, assembly of the
//! flat so(n+1,1)-valued connection it induces, and the residuals of the GCR
//! equations.
//!
//! The connection matrices act on components in the abstract adapted frame
//! (sigma, Y_1..Y_m, Zhat, xi_1..xi_k); a parallel frame F satisfies
//! dF = F omega, and flatness is d_i omega_j - d_j omega_i + [omega_i,
//! omega_j] = 0.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chart::{partial_z, partial_zbar, Chart, GridField, StencilOrder};
use crate::congruence::{central_sphere_congruence, split_connection};
use crate::error::{Error, Result};
use crate::immersion::LightConeLift;
use crate::mobius_structure::{
    mobius_structure_from_congruence, MobiusStructureField, QuadraticDifferential,
};
use crate::riemann;

/// Representative-metric data per dimension.
#[derive(Debug, Clone)]
pub enum MetricData {
    /// m = 1: arclength gauge, nothing stored.
    Arclength,
    /// m = 2: conformal factor u of e^{2u}|dz|^2; canonical form u = 0.
    Isothermal { u: GridField<f64> },
    /// m = 3: full symmetric metric field.
    General { g: GridField<DMatrix<f64>> },
}

/// Second-fundamental-form data per dimension.
#[derive(Debug, Clone)]
pub enum SffData {
    /// m = 1: conormal acceleration components A_a in the adapted frame
    /// (one k-vector per node).
    Curve { a: GridField<DVector<f64>> },
    /// m = 2: kappa^a = <d_z^2 sigma, xi_a>, the (2,0)-components of -II0.
    Surface { kappa: Vec<GridField<Complex64>> },
    /// m = 3: coordinate components of the tracefree second fundamental
    /// form, one symmetric 3x3 field per normal index.
    ThreeManifold { ii0: Vec<GridField<DMatrix<f64>>> },
}

/// The primitive data of an immersion on a chart: conformal metric / gauge,
/// Möbius structure, normal connection, tracefree second fundamental form
/// (conformal acceleration for curves), optional congruence selector H and
/// optional quadratic differential q.
#[derive(Debug, Clone)]
pub struct GcrData {
    pub m: usize,
    pub n: usize,
    pub chart: Chart,
    pub metric: MetricData,
    pub mobius: MobiusStructureField,
    pub sff: SffData,
    /// Normal connection 1-forms beta_i^{ab}, antisymmetric in (a,b).
    pub beta: Vec<GridField<DMatrix<f64>>>,
    /// Enveloped-congruence selector; None or zero means central.
    pub h: Option<GridField<DVector<f64>>>,
    /// Isothermic / constrained-Willmore / Möbius-flat quadratic differential.
    pub q: Option<QuadraticDifferential>,
}

impl GcrData {
    pub fn k(&self) -> usize {
        self.n - self.m
    }

    /// kappa fields for m = 2 (panics otherwise).
    pub fn kappa(&self) -> &[GridField<Complex64>] {
        match &self.sff {
            SffData::Surface { kappa } => kappa,
            _ => panic!("kappa only exists for m = 2 data"),
        }
    }

    /// Full contraction |II0|^2 at a node (8 sum_a |kappa^a|^2 for m = 2).
    pub fn ii0_norm_sq(&self, lin: usize) -> f64 {
        match &self.sff {
            SffData::Curve { .. } => 0.0,
            SffData::Surface { kappa } => {
                8.0 * kappa.iter().map(|k| k.values[lin].norm_sqr()).sum::<f64>()
            }
            SffData::ThreeManifold { ii0 } => {
                // needs the metric to raise indices
                match &self.metric {
                    MetricData::General { g } => {
                        let ginv = g.values[lin].clone().try_inverse().expect("metric invertible");
                        ii0.iter()
                            .map(|f| {
                                let s = &f.values[lin];
                                (&ginv * s * &ginv * s).trace()
                            })
                            .sum()
                    }
                    _ => unreachable!("m = 3 data carries a general metric"),
                }
            }
        }
    }

    /// Verify structural invariants: consistent shapes, antisymmetric beta,
    /// canonical gauge.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.chart.dim() != self.m {
            return Err(Error::DimensionMismatch("chart dimension vs m".into()));
        }
        if self.mobius.m() != self.m {
            return Err(Error::DimensionMismatch("Möbius structure vs m".into()));
        }
        if self.beta.len() != self.m {
            return Err(Error::DimensionMismatch(
                "one normal-connection 1-form per axis expected".into(),
            ));
        }
        match &self.sff {
            SffData::Curve { a } => {
                if self.m != 1 || a.values[0].len() != k {
                    return Err(Error::DimensionMismatch("curve A field shape".into()));
                }
            }
            SffData::Surface { kappa } => {
                if self.m != 2 || kappa.len() != k {
                    return Err(Error::DimensionMismatch("kappa field count vs k".into()));
                }
            }
            SffData::ThreeManifold { ii0 } => {
                if self.m != 3 || ii0.len() != k {
                    return Err(Error::DimensionMismatch("II0 field count vs k".into()));
                }
            }
        }
        if let Some(h) = &self.h {
            if h.values[0].len() != k {
                return Err(Error::DimensionMismatch("H must have k components".into()));
            }
        }
        for b in &self.beta {
            if b.values[0].nrows() != k {
                return Err(Error::DimensionMismatch("beta must be k x k".into()));
            }
            for v in b.values.iter() {
                if (v + v.transpose()).amax() > 1e-12 {
                    return Err(Error::InvalidArgument(
                        "normal connection must be antisymmetric".into(),
                    ));
                }
            }
        }
        if let MetricData::Isothermal { u } = &self.metric {
            if u.map(|v| v.abs()).residual_norm().unwrap_or(0.0) > 1e-12 {
                return Err(Error::Gauge(
                    "m = 2 data must be in the canonical gauge u = 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// The largest grid spacing, the natural h for tolerance scaling.
    pub fn h(&self) -> f64 {
        self.chart.spacing.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Grid of so(n+1,1)-valued coordinate 1-forms in the abstract frame.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    pub omega: Vec<GridField<DMatrix<f64>>>,
    /// Constant Gram matrix of the abstract frame.
    pub gram: DMatrix<f64>,
}

impl ConnectionField {
    pub fn chart(&self) -> &Chart {
        &self.omega[0].chart
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// Max violation of omega^T Gf + Gf omega = 0 (should be exactly zero).
    pub fn skewness_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in &self.omega {
            for v in w.values.iter() {
                worst = worst.max((v.transpose() * &self.gram + &self.gram * v).amax());
            }
        }
        worst
    }
}

/// A named residual and its max-norm over the valid region.
#[derive(Debug, Clone)]
pub struct ResidualEntry {
    pub name: String,
    pub value: f64,
}

/// Report of residual max-norms, one entry per verified equation.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push(ResidualEntry {
            name: name.into(),
            value,
        });
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.value).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.value)
    }
}

/// Enforce exact Lorentz skewness in the frame Gram metric: the
/// Gf-antisymmetric part of w.
fn skew_project(w: &DMatrix<f64>, gf: &DMatrix<f64>, gf_inv: &DMatrix<f64>) -> DMatrix<f64> {
    (w - gf_inv * w.transpose() * gf) * 0.5
}

/// Assemble the flat connection d = Dhat + Q + S of the data in the abstract
/// frame, blockwise: soldering, Möbius (schwarzian + trace) block, normal
/// connection, second-fundamental-form block and its divergence (conformal
/// acceleration) block; an enveloped-congruence selector H conjugates the
/// central connection by exp of the nilpotent H-action. The result is made
/// exactly Gf-skew by projection.
pub fn assemble_connection(data: &GcrData) -> Result<ConnectionField> {
    assemble_connection_with(data, StencilOrder::Two)
}

/// [`assemble_connection`] with an explicit stencil order for the internal
/// finite differences (the conformal-acceleration block differentiates the
/// stored second-fundamental-form fields).
pub fn assemble_connection_with(data: &GcrData, order: StencilOrder) -> Result<ConnectionField> {
    data.validate()?;
    let m = data.m;
    let k = data.k();
    let d = m + 2 + k;
    let chart = &data.chart;
    let gf = crate::congruence::SphereCongruence::full_gram(m, k);
    let gf_inv = gf.clone().try_inverse().unwrap();

    // frame-component second fundamental form Pi_{ij,a} and its data margin
    let (pi, pi_margin): (Vec<GridField<DMatrix<f64>>>, usize) = match &data.sff {
        SffData::Curve { .. } => (vec![], 0),
        SffData::Surface { kappa } => {
            let fields: Vec<GridField<DMatrix<f64>>> = kappa
                .iter()
                .map(|kf| {
                    kf.map(|c| {
                        DMatrix::from_row_slice(
                            2,
                            2,
                            &[2.0 * c.re, -2.0 * c.im, -2.0 * c.im, -2.0 * c.re],
                        )
                    })
                })
                .collect();
            let margin = fields.iter().map(|f| f.valid_margin).max().unwrap_or(0);
            (fields, margin)
        }
        SffData::ThreeManifold { ii0 } => {
            // convert coordinate components to frame components E S E^T
            let g = match &data.metric {
                MetricData::General { g } => g,
                _ => unreachable!(),
            };
            let e_field = g.map(crate::congruence::safe_chol_inv);
            let fields: Vec<GridField<DMatrix<f64>>> = ii0
                .iter()
                .map(|f| f.zip(&e_field, |s, e| e * s * e.transpose()))
                .collect();
            let margin = fields.iter().map(|f| f.valid_margin).max().unwrap_or(0);
            (fields, margin)
        }
    };

    // t-block: sigma-row over Y-columns, -(nr + Q) in frame components
    let t_block: GridField<DMatrix<f64>> = match (&data.mobius, &data.metric) {
        (MobiusStructureField::Curve { ns }, _) => ns.map(|&v| DMatrix::from_element(1, 1, -v)),
        (MobiusStructureField::Surface { q_m, ns }, _) => {
            let chart = chart.clone();
            let values: Vec<DMatrix<f64>> = (0..chart.len())
                .map(|lin| {
                    let q = q_m.values[lin];
                    let trace_part = 0.5 * (ns.values[lin] + 0.5 * data.ii0_norm_sq(lin));
                    DMatrix::from_row_slice(
                        2,
                        2,
                        &[
                            -2.0 * q.re - trace_part,
                            2.0 * q.im,
                            2.0 * q.im,
                            2.0 * q.re - trace_part,
                        ],
                    )
                })
                .collect();
            GridField::new(chart, values).with_margin(q_m.valid_margin)
        }
        (MobiusStructureField::ThreeManifold { schouten }, MetricData::General { g }) => {
            let qt = {
                let ii0 = match &data.sff {
                    SffData::ThreeManifold { ii0 } => ii0,
                    _ => unreachable!(),
                };
                // Cartan tensor in coordinate components
                let chartc = chart.clone();
                let values: Vec<DMatrix<f64>> = (0..chartc.len())
                    .map(|lin| {
                        let gv = &g.values[lin];
                        let ginv = gv.clone().try_inverse().unwrap();
                        let mut q = DMatrix::zeros(3, 3);
                        let mut norm_sq = 0.0;
                        for f in ii0 {
                            let s = &f.values[lin];
                            q += s * &ginv * s;
                            norm_sq += (&ginv * s * &ginv * s).trace();
                        }
                        q -= gv * (norm_sq / (2.0 * 2.0));
                        q / 1.0
                    })
                    .collect();
                GridField::new(chartc, values).with_margin(pi_margin)
            };
            let e_field = g.map(crate::congruence::safe_chol_inv);
            schouten.zip(&qt, |p, q| p + q).zip(&e_field, |s, e| -(e * s * e.transpose()))
        }
        _ => return Err(Error::InvalidArgument("mobius/metric dimension mismatch".into())),
    };

    // soldering block s_{ij} = g(d_i, E_j) and the Y-Y Christoffel block
    let (sold, yy_block, gamma_margin): (
        GridField<DMatrix<f64>>,
        Option<Vec<GridField<DMatrix<f64>>>>,
        usize,
    ) = match &data.metric {
        MetricData::General { g } => {
            let e_field = g.map(crate::congruence::safe_chol_inv);
            let de: Vec<GridField<DMatrix<f64>>> = (0..m)
                .map(|axis| e_field.partial(axis, order))
                .collect::<Result<Vec<_>>>()?;
            let dg: Vec<GridField<DMatrix<f64>>> = (0..m)
                .map(|axis| g.partial(axis, order))
                .collect::<Result<Vec<_>>>()?;
            let margin = de.iter().chain(dg.iter()).map(|f| f.valid_margin).max().unwrap();
            // soldering: s_i[j] = <d_i sigma, Y_j> = sum_q E_{jq} g_{iq}
            let sold = g.zip(&e_field, |gv, e| (e * gv).transpose());
            // Y-Y: <d_i Y_j, Y_l> = sum_p dE_i[j,p] (E g)_{lp}
            //      + sum_{pq} E_{jp} E_{lq} Gamma_{ip,q}
            let chartc = chart.clone();
            let mut blocks = Vec::with_capacity(m);
            for i in 0..m {
                let vals: Vec<DMatrix<f64>> = (0..chartc.len())
                    .map(|lin| {
                        let e = &e_field.values[lin];
                        let gv = &g.values[lin];
                        let eg = e * gv;
                        let dei = &de[i].values[lin];
                        DMatrix::from_fn(m, m, |l, j| {
                            let mut s = 0.0;
                            for p in 0..m {
                                s += dei[(j, p)] * eg[(l, p)];
                                for q in 0..m {
                                    let gamma1 = 0.5
                                        * (dg[i].values[lin][(p, q)]
                                            + dg[p].values[lin][(i, q)]
                                            - dg[q].values[lin][(i, p)]);
                                    s += e[(j, p)] * e[(l, q)] * gamma1;
                                }
                            }
                            s
                        })
                    })
                    .collect();
                blocks.push(GridField::new(chartc.clone(), vals).with_margin(margin));
            }
            (sold, Some(blocks), margin)
        }
        _ => (
            GridField::constant(chart, DMatrix::identity(m, m)),
            None,
            0,
        ),
    };

    // phi block: covariant divergence of Pi in frame components (zero for
    // curves, where A is stored directly)
    let phi: GridField<DMatrix<f64>> = match &data.sff {
        SffData::Curve { a } => a.map(|v| {
            let mut mat = DMatrix::zeros(1, v.len());
            for (idx, &x) in v.iter().enumerate() {
                mat[(0, idx)] = x;
            }
            mat
        }),
        _ => {
            // d Pi + beta coupling + (for m = 3) Christoffel terms via the
            // rotation coefficients of the orthonormal frame
            let dpi: Vec<Vec<GridField<DMatrix<f64>>>> = (0..k)
                .map(|a| {
                    (0..m)
                        .map(|axis| pi[a].partial(axis, order))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let margin = dpi
                .iter()
                .flat_map(|v| v.iter().map(|f| f.valid_margin))
                .max()
                .unwrap_or(0)
                .max(gamma_margin);
            let chartc = chart.clone();
            let yy = yy_block.as_ref();
            let values: Vec<DMatrix<f64>> = (0..chartc.len())
                .map(|lin| {
                    DMatrix::from_fn(m, k, |i, a| {
                        let mut s = 0.0;
                        for j in 0..m {
                            s += dpi[a][j].values[lin][(j, i)];
                            for b in 0..k {
                                s += data.beta[j].values[lin][(a, b)] * pi[b].values[lin][(j, i)];
                            }
                            if let Some(yy) = yy {
                                // frame rotation coefficients w_j[(l,p)] = <d_j Y_p, Y_l>
                                let w = &yy[j].values[lin];
                                for p in 0..m {
                                    // (nabla_j Pi)(Y_j, Y_i): correct both slots
                                    s -= w[(p, j)] * pi[a].values[lin][(p, i)];
                                    s -= w[(p, i)] * pi[a].values[lin][(j, p)];
                                }
                            }
                        }
                        s
                    })
                })
                .collect();
            GridField::new(chartc, values).with_margin(margin)
        }
    };

    // assemble omega axis by axis
    let mut omegas = Vec::with_capacity(m);
    let margin = [
        t_block.valid_margin,
        phi.valid_margin,
        sold.valid_margin,
        pi_margin,
    ]
    .into_iter()
    .max()
    .unwrap();
    for i in 0..m {
        let values: Vec<DMatrix<f64>> = (0..chart.len())
            .map(|lin| {
                let mut w = DMatrix::zeros(d, d);
                let s = &sold.values[lin];
                let t = &t_block.values[lin];
                // column sigma: d_i sigma = sum_j s_{ij} Y_j
                for j in 0..m {
                    w[(1 + j, 0)] = s[(i, j)];
                }
                // column Y_j
                for j in 0..m {
                    w[(0, 1 + j)] = t[(i, j)];
                    w[(m + 1, 1 + j)] = s[(i, j)];
                    if let Some(yy) = &yy_block {
                        for l in 0..m {
                            w[(1 + l, 1 + j)] = yy[i].values[lin][(l, j)];
                        }
                    }
                    for a in 0..k {
                        if !pi.is_empty() {
                            w[(m + 2 + a, 1 + j)] = pi[a].values[lin][(i, j)];
                        }
                    }
                }
                // column Zhat
                for j in 0..m {
                    w[(1 + j, m + 1)] = t[(i, j)];
                }
                for a in 0..k {
                    w[(m + 2 + a, m + 1)] = phi.values[lin][(i, a)];
                }
                // column xi_b
                for b in 0..k {
                    w[(0, m + 2 + b)] = phi.values[lin][(i, b)];
                    for j in 0..m {
                        if !pi.is_empty() {
                            w[(1 + j, m + 2 + b)] = -pi[b].values[lin][(i, j)];
                        }
                    }
                    for a in 0..k {
                        w[(m + 2 + a, m + 2 + b)] = data.beta[i].values[lin][(a, b)];
                    }
                }
                skew_project(&w, &gf, &gf_inv)
            })
            .collect();
        omegas.push(GridField::new(chart.clone(), values).with_margin(margin));
    }

    // enveloped-congruence conjugation
    if let Some(h) = &data.h {
        let eh = h.map(|hv| h_gauge_matrix(m, k, hv, 1.0));
        let eh_inv = h.map(|hv| h_gauge_matrix(m, k, hv, -1.0));
        let mut conjugated = Vec::with_capacity(m);
        for (i, w) in omegas.iter().enumerate() {
            let deh = eh.partial(i, order)?;
            let vals: Vec<DMatrix<f64>> = (0..chart.len())
                .map(|lin| {
                    let e = &eh.values[lin];
                    let einv = &eh_inv.values[lin];
                    let core = einv * &w.values[lin] * e + einv * &deh.values[lin];
                    skew_project(&core, &gf, &gf_inv)
                })
                .collect();
            conjugated
                .push(GridField::new(chart.clone(), vals).with_margin(margin.max(deh.valid_margin)));
        }
        omegas = conjugated;
    }

    Ok(ConnectionField {
        omega: omegas,
        gram: gf,
    })
}

/// exp of the nilpotent H-action in frame coordinates: xi_a -> xi_a - s H^a
/// sigma, Zhat -> Zhat - s H^a xi_a + s^2 |H|^2/2 sigma.
pub(crate) fn h_gauge_matrix(m: usize, k: usize, h: &DVector<f64>, s: f64) -> DMatrix<f64> {
    let d = m + 2 + k;
    let mut e = DMatrix::identity(d, d);
    for a in 0..k {
        e[(0, m + 2 + a)] = -s * h[a];
        e[(m + 2 + a, m + 1)] = -s * h[a];
    }
    e[(0, m + 1)] = 0.5 * s * s * h.norm_squared();
    e
}

/// Coordinate-pair curvature components R_{ij} = d_i w_j - d_j w_i +
/// [w_i, w_j], returned in the order (0,1), (0,2), (1,2).
pub fn curvature(
    conn: &ConnectionField,
    order: StencilOrder,
) -> Result<Vec<GridField<DMatrix<f64>>>> {
    let m = conn.omega.len();
    let mut out = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let dwj = conn.omega[j].partial(i, order)?;
            let dwi = conn.omega[i].partial(j, order)?;
            let r = dwj.zip(&dwi, |a, b| a - b).zip(
                &conn.omega[i].zip(&conn.omega[j], |a, b| a * b - b * a),
                |ab, comm| ab + comm,
            );
            out.push(r);
        }
    }
    Ok(out)
}

/// Max curvature norm over the valid region.
pub fn curvature_residual(conn: &ConnectionField, order: StencilOrder) -> Result<f64> {
    let parts = curvature(conn, order)?;
    let mut worst: f64 = 0.0;
    for p in parts {
        worst = worst.max(p.map(|mat| mat.amax()).residual_norm()?);
    }
    Ok(worst)
}

/// Residuals of the homological GCR equations plus, for m = 2, the conformal
/// coordinate system in kappa and q. For m = 1 the equations are vacuous and
/// the report is empty.
pub fn gcr_residuals(data: &GcrData, order: StencilOrder) -> Result<ResidualReport> {
    gcr_residuals_within(data, order, 0)
}

/// [`gcr_residuals`] measured with `extra` additional nodes excluded at
/// every boundary, so convergence orders can be estimated over a fixed
/// physical subdomain.
pub fn gcr_residuals_within(
    data: &GcrData,
    order: StencilOrder,
    extra: usize,
) -> Result<ResidualReport> {
    data.validate()?;
    let mut report = ResidualReport::default();
    match data.m {
        1 => Ok(report),
        2 => {
            surface_residuals(data, order, extra, &mut report)?;
            Ok(report)
        }
        3 => {
            three_manifold_residuals(data, order, extra, &mut report)?;
            Ok(report)
        }
        m => Err(Error::InvalidArgument(format!("unsupported dimension {m}"))),
    }
}

fn beta_z(data: &GcrData, lin: usize) -> DMatrix<Complex64> {
    let k = data.k();
    DMatrix::from_fn(k, k, |a, b| {
        0.5 * Complex64::new(
            data.beta[0].values[lin][(a, b)],
            -data.beta[1].values[lin][(a, b)],
        )
    })
}

fn surface_residuals(
    data: &GcrData,
    order: StencilOrder,
    extra: usize,
    report: &mut ResidualReport,
) -> Result<()> {
    let k = data.k();
    let chart = &data.chart;
    let kappa = data.kappa();
    let (q_m, ns) = match &data.mobius {
        MobiusStructureField::Surface { q_m, ns } => (q_m, ns),
        _ => return Err(Error::InvalidArgument("m = 2 data needs a surface structure".into())),
    };

    // nabla_z kappa, nabla_zbar kappa with the beta coupling
    let dz_kappa: Vec<GridField<Complex64>> = kappa
        .iter()
        .map(|f| partial_z(f, order))
        .collect::<Result<Vec<_>>>()?;
    let dzb_kappa: Vec<GridField<Complex64>> = kappa
        .iter()
        .map(|f| partial_zbar(f, order))
        .collect::<Result<Vec<_>>>()?;
    let margin = dz_kappa
        .iter()
        .chain(dzb_kappa.iter())
        .map(|f| f.valid_margin)
        .max()
        .unwrap();

    let nabla_z = |lin: usize| -> Vec<Complex64> {
        let bz = beta_z(data, lin);
        (0..k)
            .map(|a| {
                let mut v = dz_kappa[a].values[lin];
                for b in 0..k {
                    v += bz[(a, b)] * kappa[b].values[lin];
                }
                v
            })
            .collect()
    };
    let nabla_zb = |lin: usize| -> Vec<Complex64> {
        let bz = beta_z(data, lin);
        (0..k)
            .map(|a| {
                let mut v = dzb_kappa[a].values[lin];
                for b in 0..k {
                    // beta_zbar = conj(beta_z) entrywise for real beta
                    v += bz[(a, b)].conj() * kappa[b].values[lin];
                }
                v
            })
            .collect()
    };

    // (1) d_zbar q = 3 <nabla_z conj(kappa), kappa> + <conj(kappa), nabla_z kappa>,
    // with nabla_z conj(kappa) = conj(nabla_zbar kappa)
    let dq = partial_zbar(q_m, order)?;
    let mut worst1: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin.max(dq.valid_margin).max(extra)) {
            continue;
        }
        let nz = nabla_z(lin);
        let nzb = nabla_zb(lin);
        let mut rhs = Complex64::new(0.0, 0.0);
        for a in 0..k {
            let kap = kappa[a].values[lin];
            rhs += 3.0 * nzb[a].conj() * kap + kap.conj() * nz[a];
        }
        worst1 = worst1.max((dq.values[lin] - rhs).norm());
    }
    report.push("cc_dzbar_q", worst1);

    // (2) Im(nabla_zbar nabla_zbar kappa + conj(q) kappa) = 0
    // build nabla_zbar kappa as fields, then differentiate again
    let nzb_fields: Vec<GridField<Complex64>> = (0..k)
        .map(|a| {
            let vals: Vec<Complex64> = (0..chart.len()).map(|lin| nabla_zb(lin)[a]).collect();
            GridField::new(chart.clone(), vals).with_margin(margin)
        })
        .collect();
    let dzb_nzb: Vec<GridField<Complex64>> = nzb_fields
        .iter()
        .map(|f| partial_zbar(f, order))
        .collect::<Result<Vec<_>>>()?;
    let margin2 = dzb_nzb.iter().map(|f| f.valid_margin).max().unwrap();
    let mut worst2: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin2.max(extra)) {
            continue;
        }
        let bz = beta_z(data, lin);
        for a in 0..k {
            let mut v = dzb_nzb[a].values[lin];
            for b in 0..k {
                v += bz[(a, b)].conj() * nzb_fields[b].values[lin];
            }
            v += q_m.values[lin].conj() * kappa[a].values[lin];
            worst2 = worst2.max(v.im.abs());
        }
    }
    report.push("cc_codazzi_kappa", worst2);

    // (3) R^nabla_{zbar,z} xi = 2<kappa,xi> conj(kappa) - 2<conj(kappa),xi> kappa
    if k >= 2 {
        let db1 = data.beta[1].partial(0, order)?;
        let db0 = data.beta[0].partial(1, order)?;
        let margin3 = db1.valid_margin.max(db0.valid_margin);
        let mut worst3: f64 = 0.0;
        for lin in 0..chart.len() {
            let idx = chart.multi_index(lin);
            if !chart.in_valid_region(&idx, margin3.max(extra)) {
                continue;
            }
            let r12 = &db1.values[lin] - &db0.values[lin]
                + &data.beta[0].values[lin] * &data.beta[1].values[lin]
                - &data.beta[1].values[lin] * &data.beta[0].values[lin];
            for b in 0..k {
                for a in 0..k {
                    let lhs = Complex64::new(0.0, -0.5) * r12[(a, b)];
                    let rhs = 2.0
                        * (kappa[b].values[lin] * kappa[a].values[lin].conj()
                            - kappa[b].values[lin].conj() * kappa[a].values[lin]);
                    worst3 = worst3.max((lhs - rhs).norm());
                }
            }
        }
        report.push("cc_ricci", worst3);
    } else {
        report.push("cc_ricci", 0.0);
    }

    // homological forms: hG2 and hC2 in real components
    let pi: Vec<GridField<DMatrix<f64>>> = kappa
        .iter()
        .map(|kf| {
            kf.map(|c| {
                DMatrix::from_row_slice(2, 2, &[2.0 * c.re, -2.0 * c.im, -2.0 * c.im, -2.0 * c.re])
            })
        })
        .collect();
    let dpi: Vec<Vec<GridField<DMatrix<f64>>>> = pi
        .iter()
        .map(|f| {
            (0..2)
                .map(|axis| f.partial(axis, order))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let nabla_pi = |lin: usize, i: usize, a: usize| -> DMatrix<f64> {
        let mut v = dpi[a][i].values[lin].clone();
        for b in 0..k {
            v += &pi[b].values[lin] * data.beta[i].values[lin][(a, b)];
        }
        v
    };

    // hG2: C + dQ + <II0, d^nabla II0> = 0, with C the Cotton-York of the
    // structure relative to the flat gauge
    let nr = |lin: usize| -> DMatrix<f64> {
        let q = q_m.values[lin];
        let t = ns.values[lin];
        DMatrix::from_row_slice(
            2,
            2,
            &[2.0 * q.re + t, -2.0 * q.im, -2.0 * q.im, -2.0 * q.re + t],
        )
    };
    let nr_field = GridField::new(
        chart.clone(),
        (0..chart.len()).map(nr).collect::<Vec<_>>(),
    )
    .with_margin(q_m.valid_margin.max(ns.valid_margin));
    let dnr: Vec<GridField<DMatrix<f64>>> = (0..2)
        .map(|axis| nr_field.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let q_trace = GridField::new(
        chart.clone(),
        (0..chart.len())
            .map(|lin| DMatrix::<f64>::identity(2, 2) * (0.25 * data.ii0_norm_sq(lin)))
            .collect::<Vec<_>>(),
    )
    .with_margin(nr_field.valid_margin);
    let dq_tr: Vec<GridField<DMatrix<f64>>> = (0..2)
        .map(|axis| q_trace.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let margin_g2 = dnr
        .iter()
        .chain(dq_tr.iter())
        .map(|f| f.valid_margin)
        .max()
        .unwrap()
        .max(margin);
    let mut worst_g2: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin_g2.max(extra)) {
            continue;
        }
        for l in 0..2 {
            let cotton = dnr[0].values[lin][(1, l)] - dnr[1].values[lin][(0, l)];
            let dq_term = dq_tr[0].values[lin][(1, l)] - dq_tr[1].values[lin][(0, l)];
            let mut quad = 0.0;
            for a in 0..k {
                let s = &pi[a].values[lin];
                let n1 = nabla_pi(lin, 0, a);
                let n2 = nabla_pi(lin, 1, a);
                for w in 0..2 {
                    quad += s[(l, w)] * (n1[(1, w)] - n2[(0, w)]);
                }
            }
            worst_g2 = worst_g2.max((cotton + dq_term + quad).abs());
        }
    }
    report.push("hG2", worst_g2);

    // hC2: (Mh^nabla)^*(J II0) = div^nabla div^nabla (J II0) + <nr_0, J II0> = 0
    let j_pi: Vec<GridField<DMatrix<f64>>> = pi
        .iter()
        .map(|f| {
            f.map(|s| {
                // J on tracefree symmetric forms: the (2,0)-coefficient
                // multiplied by i
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[s[(0, 1)], -s[(0, 0)], -s[(0, 0)], -s[(0, 1)]],
                )
            })
        })
        .collect();
    // first covariant divergence, one covector field per normal index
    let mut div1: Vec<GridField<DVector<f64>>> = Vec::with_capacity(k);
    for a in 0..k {
        let d_jt: Vec<GridField<DMatrix<f64>>> = (0..2)
            .map(|axis| j_pi[a].partial(axis, order))
            .collect::<Result<Vec<_>>>()?;
        let marg = d_jt.iter().map(|f| f.valid_margin).max().unwrap();
        div1.push(
            GridField::new(
                chart.clone(),
                (0..chart.len())
                    .map(|lin| {
                        DVector::from_fn(2, |i, _| {
                            let mut s = 0.0;
                            for j in 0..2 {
                                s += d_jt[j].values[lin][(j, i)];
                                for b in 0..k {
                                    s += data.beta[j].values[lin][(a, b)]
                                        * j_pi[b].values[lin][(j, i)];
                                }
                            }
                            s
                        })
                    })
                    .collect::<Vec<_>>(),
            )
            .with_margin(marg),
        );
    }
    let mut worst_c2: f64 = 0.0;
    for a in 0..k {
        let ddiv: Vec<GridField<DVector<f64>>> = (0..2)
            .map(|axis| div1[a].partial(axis, order))
            .collect::<Result<Vec<_>>>()?;
        let marg = ddiv.iter().map(|f| f.valid_margin).max().unwrap();
        for lin in 0..chart.len() {
            let idx = chart.multi_index(lin);
            if !chart.in_valid_region(&idx, marg.max(extra)) {
                continue;
            }
            let mut v = 0.0;
            for i in 0..2 {
                v += ddiv[i].values[lin][i];
                for b in 0..k {
                    v += data.beta[i].values[lin][(a, b)] * div1[b].values[lin][i];
                }
            }
            // nr_0 pairing
            let q = q_m.values[lin];
            let nr0 = DMatrix::from_row_slice(
                2,
                2,
                &[2.0 * q.re, -2.0 * q.im, -2.0 * q.im, -2.0 * q.re],
            );
            let jt = &j_pi[a].values[lin];
            let mut pair = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    pair += nr0[(i, j)] * jt[(i, j)];
                }
            }
            worst_c2 = worst_c2.max((v + pair).abs());
        }
    }
    report.push("hC2", worst_c2);

    // hR: R^nabla = II0 ^ Sh0
    let db1 = data.beta[1].partial(0, order)?;
    let db0 = data.beta[0].partial(1, order)?;
    let margin_r = db1.valid_margin.max(db0.valid_margin).max(margin);
    let mut worst_r: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin_r.max(extra)) {
            continue;
        }
        let r12 = &db1.values[lin] - &db0.values[lin]
            + &data.beta[0].values[lin] * &data.beta[1].values[lin]
            - &data.beta[1].values[lin] * &data.beta[0].values[lin];
        for a in 0..k {
            for b in 0..k {
                let mut wedge = 0.0;
                for j in 0..2 {
                    wedge += pi[a].values[lin][(0, j)] * pi[b].values[lin][(1, j)]
                        - pi[a].values[lin][(1, j)] * pi[b].values[lin][(0, j)];
                }
                worst_r = worst_r.max((r12[(a, b)] - wedge).abs());
            }
        }
    }
    report.push("hR", worst_r);
    Ok(())
}

fn three_manifold_residuals(
    data: &GcrData,
    order: StencilOrder,
    extra: usize,
    report: &mut ResidualReport,
) -> Result<()> {
    let m = 3usize;
    let k = data.k();
    let chart = &data.chart;
    let g = match &data.metric {
        MetricData::General { g } => g,
        _ => return Err(Error::InvalidArgument("m = 3 data needs a metric field".into())),
    };
    let ii0 = match &data.sff {
        SffData::ThreeManifold { ii0 } => ii0,
        _ => unreachable!(),
    };
    let gamma = riemann::christoffels(g, order)?;
    let dii: Vec<Vec<GridField<DMatrix<f64>>>> = ii0
        .iter()
        .map(|f| {
            (0..m)
                .map(|axis| f.partial(axis, order))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let margin = dii
        .iter()
        .flat_map(|v| v.iter().map(|f| f.valid_margin))
        .max()
        .unwrap()
        .max(gamma.valid_margin);

    // covariant derivative of a symmetric normal-valued 2-tensor
    let nabla = |lin: usize, i: usize, a: usize| -> DMatrix<f64> {
        let gm = &gamma.values[lin];
        let at = |l: usize, p: usize, q: usize| gm[(l, p * m + q)];
        let s = &ii0[a].values[lin];
        let mut v = dii[a][i].values[lin].clone();
        for j in 0..m {
            for l_ in 0..m {
                for p in 0..m {
                    // subtract Gamma on both tensor slots
                    v[(j, l_)] -= at(p, i, j) * s[(p, l_)] + at(p, i, l_) * s[(j, p)];
                }
            }
        }
        for b in 0..k {
            v += &ii0[b].values[lin] * data.beta[i].values[lin][(a, b)];
        }
        v
    };

    // hC1: conformal Codazzi
    let mut worst_c1: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin.max(extra)) {
            continue;
        }
        let ginv = g.values[lin].clone().try_inverse().unwrap();
        for a in 0..k {
            let nabs: Vec<DMatrix<f64>> = (0..m).map(|i| nabla(lin, i, a)).collect();
            // div_l = g^{ij} (nabla_i II0)_{jl}
            let div = DVector::from_fn(m, |l, _| {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += ginv[(i, j)] * nabs[i][(j, l)];
                    }
                }
                s
            });
            for i in 0..m {
                for j in 0..m {
                    for l in 0..m {
                        let d_term = nabs[i][(j, l)] - nabs[j][(i, l)];
                        let trace_term = (g.values[lin][(j, l)] * div[i]
                            - g.values[lin][(i, l)] * div[j])
                            / (m as f64 - 1.0);
                        worst_c1 = worst_c1.max((d_term + trace_term).abs());
                    }
                }
            }
        }
    }
    report.push("hC1", worst_c1);

    // hG2: C + d^D Q + <II0, d^nabla II0> = 0 with Q the Cartan tensor
    let cotton = riemann::cotton(g, order)?;
    let q_cartan = GridField::new(
        chart.clone(),
        (0..chart.len())
            .map(|lin| {
                let gv = &g.values[lin];
                let ginv = gv.clone().try_inverse().unwrap();
                let mut q = DMatrix::zeros(3, 3);
                let mut norm_sq = 0.0;
                for f in ii0 {
                    let s = &f.values[lin];
                    q += s * &ginv * s;
                    norm_sq += (&ginv * s * &ginv * s).trace();
                }
                q - gv * (norm_sq / 4.0)
            })
            .collect::<Vec<_>>(),
    )
    .with_margin(margin);
    let dqc: Vec<GridField<DMatrix<f64>>> = (0..m)
        .map(|axis| q_cartan.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let margin_g2 = dqc
        .iter()
        .map(|f| f.valid_margin)
        .max()
        .unwrap()
        .max(cotton.valid_margin)
        .max(margin);
    let nabla_q = |lin: usize, i: usize| -> DMatrix<f64> {
        let gm = &gamma.values[lin];
        let at = |l: usize, p: usize, q: usize| gm[(l, p * m + q)];
        let s = &q_cartan.values[lin];
        let mut v = dqc[i].values[lin].clone();
        for j in 0..m {
            for l_ in 0..m {
                for p in 0..m {
                    v[(j, l_)] -= at(p, i, j) * s[(p, l_)] + at(p, i, l_) * s[(j, p)];
                }
            }
        }
        v
    };
    let mut worst_g2: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin_g2.max(extra)) {
            continue;
        }
        let ginv = g.values[lin].clone().try_inverse().unwrap();
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let c_term = cotton.values[lin][(l, i * m + j)];
                    let dq_term = nabla_q(lin, i)[(j, l)] - nabla_q(lin, j)[(i, l)];
                    let mut quad = 0.0;
                    for a in 0..k {
                        let s = &(&ginv * &ii0[a].values[lin]);
                        let ni = nabla(lin, i, a);
                        let nj = nabla(lin, j, a);
                        for w in 0..m {
                            // <II0_l., (d II0)_{ij} .> with one index raised
                            quad += s[(l, w)] * (ni[(j, w)] - nj[(i, w)]);
                        }
                    }
                    worst_g2 = worst_g2.max((c_term + dq_term + quad).abs());
                }
            }
        }
    }
    report.push("hG2", worst_g2);

    // hR: R^nabla = II0 ^ Sh0 (vacuous in codimension one)
    let mut worst_r: f64 = 0.0;
    if k >= 2 {
        for i in 0..m {
            for j in (i + 1)..m {
                let dbj = data.beta[j].partial(i, order)?;
                let dbi = data.beta[i].partial(j, order)?;
                let marg = dbj.valid_margin.max(dbi.valid_margin).max(margin);
                for lin in 0..chart.len() {
                    let idx = chart.multi_index(lin);
                    if !chart.in_valid_region(&idx, marg.max(extra)) {
                        continue;
                    }
                    let r = &dbj.values[lin] - &dbi.values[lin]
                        + &data.beta[i].values[lin] * &data.beta[j].values[lin]
                        - &data.beta[j].values[lin] * &data.beta[i].values[lin];
                    let ginv = g.values[lin].clone().try_inverse().unwrap();
                    for a in 0..k {
                        for b in 0..k {
                            // (II0 ^ Sh0)_{ij}^{ab} = sum_w II0_{iw}^a Sh0_j{}^w{}^b
                            // - (i <-> j), with Sh0 the fully g-raised form
                            let sh_b = &ginv * &ii0[b].values[lin] * &ginv;
                            let mut wedge = 0.0;
                            for w in 0..m {
                                wedge += ii0[a].values[lin][(i, w)] * sh_b[(j, w)]
                                    - ii0[a].values[lin][(j, w)] * sh_b[(i, w)];
                            }
                            worst_r = worst_r.max((r[(a, b)] - wedge).abs());
                        }
                    }
                }
            }
        }
    }
    report.push("hR", worst_r);
    Ok(())
}

/// The m >= 4 pointwise Möbius-flatness predicate on conormal eigenvalue
/// vectors: <nu_i - nu_j, nu_k - nu_l> = 0 for pairwise distinct indices.
pub fn hg1_predicate(nus: &[DVector<f64>], tol: f64) -> bool {
    let m = nus.len();
    for i in 0..m {
        for j in 0..m {
            for kk in 0..m {
                for l in 0..m {
                    let distinct = i != j
                        && i != kk
                        && i != l
                        && j != kk
                        && j != l
                        && kk != l;
                    if distinct {
                        let d1 = &nus[i] - &nus[j];
                        let d2 = &nus[kk] - &nus[l];
                        if d1.dot(&d2).abs() > tol {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

/// Extract the full GCR data record of a lift (isothermal / arclength gauge
/// for m = 2 / m = 1, any gauge for m = 3).
pub fn extract_gcr(lift: &LightConeLift, order: StencilOrder) -> Result<GcrData> {
    let m = lift.m();
    let n = lift.space.n;
    let k = n - m;
    let chart = lift.chart.clone();
    let v = central_sphere_congruence(lift, order)?;
    let forms = split_connection(&v, order)?;

    match m {
        1 => {
            let ms = mobius_structure_from_congruence(&v, &forms, order)?;
            // conformal acceleration components <d Zhat, xi_a>
            let zhat = GridField::new(
                chart.clone(),
                (0..chart.len()).map(|lin| v.zhat_col(lin)).collect::<Vec<_>>(),
            )
            .with_margin(v.valid_margin);
            let dz = zhat.partial(0, order)?;
            let sp = lift.space.clone();
            let a = GridField::new(
                chart.clone(),
                (0..chart.len())
                    .map(|lin| {
                        DVector::from_fn(k, |aa, _| {
                            sp.inner(&dz.values[lin], &v.xi_col(lin, aa))
                        })
                    })
                    .collect::<Vec<_>>(),
            )
            .with_margin(dz.valid_margin);
            Ok(GcrData {
                m,
                n,
                chart,
                metric: MetricData::Arclength,
                mobius: ms,
                sff: SffData::Curve { a },
                beta: forms.beta,
                h: None,
                q: None,
            })
        }
        2 => {
            let ms = mobius_structure_from_congruence(&v, &forms, order)?;
            let kappa: Vec<GridField<Complex64>> = (0..k)
                .map(|a| {
                    let f = &forms.ii0[a];
                    f.map(|s| 0.5 * Complex64::new(s[(0, 0)], -s[(0, 1)]))
                })
                .collect();
            Ok(GcrData {
                m,
                n,
                chart: chart.clone(),
                metric: MetricData::Isothermal {
                    u: GridField::constant(&chart, 0.0),
                },
                mobius: ms,
                sff: SffData::Surface { kappa },
                beta: forms.beta,
                h: None,
                q: None,
            })
        }
        3 => {
            let metric = lift.induced_metric(order)?;
            let schouten = riemann::schouten(&metric.g, order)?;
            // coordinate components of II0 from the raw second-jet pairings
            let (_, second) = lift.jets(order)?;
            let sp = lift.space.clone();
            let mut ii0 = Vec::with_capacity(k);
            for a in 0..k {
                let vals: Vec<DMatrix<f64>> = (0..chart.len())
                    .map(|lin| {
                        let xi = v.xi_col(lin, a);
                        let mut mat = DMatrix::zeros(3, 3);
                        for p in 0..3 {
                            for q in p..3 {
                                let val =
                                    sp.inner(&second[lift.jet2_index(p, q)].values[lin], &xi);
                                mat[(p, q)] = val;
                                mat[(q, p)] = val;
                            }
                        }
                        // remove the g-trace
                        let gv = &metric.g.values[lin];
                        let ginv = gv.clone().try_inverse().unwrap();
                        let tr = (&ginv * &mat).trace() / 3.0;
                        mat - gv * tr
                    })
                    .collect();
                ii0.push(
                    GridField::new(chart.clone(), vals)
                        .with_margin(second.iter().map(|f| f.valid_margin).max().unwrap()),
                );
            }
            Ok(GcrData {
                m,
                n,
                chart,
                metric: MetricData::General { g: metric.g },
                mobius: MobiusStructureField::ThreeManifold { schouten },
                sff: SffData::ThreeManifold { ii0 },
                beta: forms.beta,
                h: None,
                q: None,
            })
        }
        m => Err(Error::InvalidArgument(format!("unsupported dimension {m}"))),
    }
}
