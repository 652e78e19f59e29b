//! Tensor calculus of a sampled Riemannian metric on a chart: Christoffel
//! symbols, curvature, Schouten and Cotton tensors. Used by the m = 3
//! pipelines; everything is computed by finite differences of the metric
//! field.

use nalgebra::DMatrix;

use crate::chart::{GridField, StencilOrder};
use crate::error::Result;

/// Christoffel symbols of the second kind, stored per node as the m x m^2
/// matrix Gamma[(l, i*m+j)] = Gamma^l_{ij}.
pub fn christoffels(
    g: &GridField<DMatrix<f64>>,
    order: StencilOrder,
) -> Result<GridField<DMatrix<f64>>> {
    let m = g.chart.dim();
    let dg: Vec<GridField<DMatrix<f64>>> = (0..m)
        .map(|axis| g.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let margin = dg.iter().map(|d| d.valid_margin).max().unwrap_or(0);
    let chart = g.chart.clone();
    let values: Vec<DMatrix<f64>> = (0..chart.len())
        .map(|lin| {
            let ginv = g.values[lin]
                .clone()
                .try_inverse()
                .unwrap_or_else(|| DMatrix::identity(m, m));
            let mut gamma = DMatrix::zeros(m, m * m);
            for i in 0..m {
                for j in 0..m {
                    for l in 0..m {
                        let mut s = 0.0;
                        for kk in 0..m {
                            let first = 0.5
                                * (dg[i].values[lin][(j, kk)] + dg[j].values[lin][(i, kk)]
                                    - dg[kk].values[lin][(i, j)]);
                            s += ginv[(l, kk)] * first;
                        }
                        gamma[(l, i * m + j)] = s;
                    }
                }
            }
            gamma
        })
        .collect();
    Ok(GridField::new(chart, values).with_margin(margin))
}

/// Ricci tensor by contraction of the coordinate Riemann tensor.
pub fn ricci(
    g: &GridField<DMatrix<f64>>,
    order: StencilOrder,
) -> Result<GridField<DMatrix<f64>>> {
    let m = g.chart.dim();
    let gamma = christoffels(g, order)?;
    let dgamma: Vec<GridField<DMatrix<f64>>> = (0..m)
        .map(|axis| gamma.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let margin = dgamma.iter().map(|d| d.valid_margin).max().unwrap_or(0);
    let chart = g.chart.clone();
    let values: Vec<DMatrix<f64>> = (0..chart.len())
        .map(|lin| {
            let gm = &gamma.values[lin];
            let at = |l: usize, i: usize, j: usize| gm[(l, i * m + j)];
            let dat = |axis: usize, l: usize, i: usize, j: usize| {
                dgamma[axis].values[lin][(l, i * m + j)]
            };
            // Ric_{jk} = R^i_{jik} = d_i G^i_{jk} - d_j G^i_{ik} + G^i_{ip} G^p_{jk} - G^i_{jp} G^p_{ik}
            DMatrix::from_fn(m, m, |j, k| {
                let mut s = 0.0;
                for i in 0..m {
                    s += dat(i, i, j, k) - dat(j, i, i, k);
                    for p in 0..m {
                        s += at(i, i, p) * at(p, j, k) - at(i, j, p) * at(p, i, k);
                    }
                }
                s
            })
        })
        .collect();
    Ok(GridField::new(chart, values).with_margin(margin))
}

/// Schouten tensor P = (Ric - scal g / (2(m-1))) / (m-2), m >= 3.
pub fn schouten(
    g: &GridField<DMatrix<f64>>,
    order: StencilOrder,
) -> Result<GridField<DMatrix<f64>>> {
    let m = g.chart.dim();
    assert!(m >= 3, "Schouten tensor needs m >= 3");
    let ric = ricci(g, order)?;
    Ok(g.zip(&ric, move |gv, rv| {
        let ginv = gv
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(gv.nrows(), gv.ncols()));
        let scal = (&ginv * rv).trace();
        (rv - gv * (scal / (2.0 * (m as f64 - 1.0)))) / (m as f64 - 2.0)
    }))
}

/// Cotton tensor C_{ijk} = nabla_i P_{jk} - nabla_j P_{ik}, stored per node
/// as the m x m^2 matrix C[(k, i*m+j)] (antisymmetric in i,j).
pub fn cotton(
    g: &GridField<DMatrix<f64>>,
    order: StencilOrder,
) -> Result<GridField<DMatrix<f64>>> {
    let m = g.chart.dim();
    let p = schouten(g, order)?;
    let dp: Vec<GridField<DMatrix<f64>>> = (0..m)
        .map(|axis| p.partial(axis, order))
        .collect::<Result<Vec<_>>>()?;
    let gamma = christoffels(g, order)?;
    let margin = dp
        .iter()
        .map(|d| d.valid_margin)
        .max()
        .unwrap_or(0)
        .max(gamma.valid_margin);
    let chart = g.chart.clone();
    let values: Vec<DMatrix<f64>> = (0..chart.len())
        .map(|lin| {
            let gm = &gamma.values[lin];
            let at = |l: usize, i: usize, j: usize| gm[(l, i * m + j)];
            let pv = &p.values[lin];
            // covariant derivative of a symmetric 2-tensor
            let nabla = |i: usize, j: usize, k: usize| {
                let mut s = dp[i].values[lin][(j, k)];
                for l in 0..m {
                    s -= at(l, i, j) * pv[(l, k)] + at(l, i, k) * pv[(j, l)];
                }
                s
            };
            let mut c = DMatrix::zeros(m, m * m);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        c[(k, i * m + j)] = nabla(i, j, k) - nabla(j, i, k);
                    }
                }
            }
            c
        })
        .collect();
    Ok(GridField::new(chart, values).with_margin(margin))
}
