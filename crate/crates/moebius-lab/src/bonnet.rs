//! The conformal Bonnet theorem as an algorithm: integrate a flat connection
//! to a parallel frame field, read off the immersion as the first frame
//! column, and align reconstructions by a Möbius transformation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chart::{Chart, GridField, StencilOrder};
use crate::congruence::{central_sphere_congruence, SphereCongruence};
use crate::error::{Error, Result};
use crate::gcr::{curvature_residual, ConnectionField, GcrData};
use crate::immersion::LightConeLift;
use crate::minkowski::{expm_pade6, reproject_frame, MinkowskiSpace, MobiusTransform};

/// A grid of (n+2) x (n+2) matrices mapping the abstract frame to
/// R^{n+1,1}: F^T G F = Gf at every node.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub f: GridField<DMatrix<f64>>,
    pub base: Vec<usize>,
    pub base_frame: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

/// Transport integrator choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// Classical RK4 on cubically interpolated connection samples.
    Rk4,
    /// Second-order Magnus: exponential of the midpoint sample. Preserves
    /// the group structure better on coarse grids.
    Magnus2,
}

/// Options for [`integrate_frame`].
#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Refuse to integrate when the curvature residual exceeds this.
    pub flatness_threshold: f64,
    pub transport: Transport,
    pub order: StencilOrder,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            flatness_threshold: 1e-4,
            transport: Transport::Rk4,
            order: StencilOrder::Two,
        }
    }
}

/// Sample the connection along the edge from `idx` in direction `axis`
/// (toward idx + step) at parameter s in [0,1], by cubic interpolation of
/// the node values. The wide stencil degrades to linear interpolation when
/// it would leave the valid region: the excluded band carries extrapolated
/// entries that must never leak into a transport path.
fn omega_on_edge(
    w: &GridField<DMatrix<f64>>,
    idx: &[usize],
    axis: usize,
    step: isize,
    s: f64,
) -> DMatrix<f64> {
    let chart = &w.chart;
    let margin = w.valid_margin;
    let node = |off: isize| -> Option<Vec<usize>> {
        let nb = chart.neighbor(idx, axis, step * off)?;
        if chart.in_valid_region(&nb, margin) {
            Some(nb)
        } else {
            None
        }
    };
    // centered quintic stencil in the interior, centered cubic when one ring
    // is missing, linear at the boundary: one-sided stencils are avoided
    // because their large alternating weights amplify field noise
    let offs6: [isize; 6] = [-2, -1, 0, 1, 2, 3];
    let nodes6: Vec<Option<Vec<usize>>> = offs6.iter().map(|&o| node(o)).collect();
    if nodes6.iter().all(|n| n.is_some()) {
        let mut out: Option<DMatrix<f64>> = None;
        for (i, nb) in nodes6.iter().enumerate() {
            let xi = offs6[i] as f64;
            let mut weight = 1.0;
            for (j, &xj) in offs6.iter().enumerate() {
                if i != j {
                    weight *= (s - xj as f64) / (xi - xj as f64);
                }
            }
            let term = w.at(nb.as_ref().unwrap()) * weight;
            out = Some(match out {
                Some(acc) => acc + term,
                None => term,
            });
        }
        return out.unwrap();
    }
    match (node(-1), node(0), node(1), node(2)) {
        (Some(a), Some(b), Some(c), Some(d)) => {
            let l_m1 = -s * (s - 1.0) * (s - 2.0) / 6.0;
            let l_0 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
            let l_1 = -(s + 1.0) * s * (s - 2.0) / 2.0;
            let l_2 = (s + 1.0) * s * (s - 1.0) / 6.0;
            w.at(&a) * l_m1 + w.at(&b) * l_0 + w.at(&c) * l_1 + w.at(&d) * l_2
        }
        _ => {
            // linear between the edge endpoints (clamped at the boundary)
            let b = chart
                .neighbor(idx, axis, 0)
                .unwrap_or_else(|| idx.to_vec());
            let c = chart.neighbor(idx, axis, step).unwrap_or_else(|| b.clone());
            w.at(&b) * (1.0 - s) + w.at(&c) * s
        }
    }
}

/// Transport a frame along one grid edge: solves dF/ds = F omega(s) with
/// s the signed arclength of the edge.
fn transport_edge(
    f: &DMatrix<f64>,
    w: &GridField<DMatrix<f64>>,
    idx: &[usize],
    axis: usize,
    step: isize,
    opts: &IntegrateOptions,
    g: &DMatrix<f64>,
    gf: &DMatrix<f64>,
    gf_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let h_edge = w.chart.spacing[axis] * step as f64;
    let out = match opts.transport {
        Transport::Rk4 => {
            // two RK4 substeps per edge on the interpolated connection
            let substeps = 4usize;
            let h = h_edge / substeps as f64;
            let mut cur = f.clone();
            for i in 0..substeps {
                let s0 = i as f64 / substeps as f64;
                let s1 = (i as f64 + 0.5) / substeps as f64;
                let s2 = (i as f64 + 1.0) / substeps as f64;
                let w0 = omega_on_edge(w, idx, axis, step, s0);
                let wh = omega_on_edge(w, idx, axis, step, s1);
                let w1 = omega_on_edge(w, idx, axis, step, s2);
                let k1 = &cur * &w0;
                let k2 = (&cur + &k1 * (0.5 * h)) * &wh;
                let k3 = (&cur + &k2 * (0.5 * h)) * &wh;
                let k4 = (&cur + &k3 * h) * &w1;
                cur += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
            cur
        }
        Transport::Magnus2 => {
            let wh = omega_on_edge(w, idx, axis, step, 0.5);
            f * expm_pade6(&(wh * h_edge))
        }
    };
    reproject_frame(&out, g, gf, gf_inv)
}

/// Integrate the flat connection to a frame field: transport along axis 0
/// from the base node, then fill the remaining axes line by line. Refuses
/// non-integrable data (curvature residual above the threshold).
pub fn integrate_frame(
    conn: &ConnectionField,
    f0: &DMatrix<f64>,
    base: &[usize],
    opts: &IntegrateOptions,
) -> Result<FrameField> {
    crate::init_threads();
    let chart = conn.chart().clone();
    let m = chart.dim();
    let d = conn.dim();
    let residual = curvature_residual(conn, opts.order)?;
    if residual > opts.flatness_threshold {
        return Err(Error::NotIntegrable {
            residual,
            threshold: opts.flatness_threshold,
        });
    }
    // ambient form: the frame Gram of the abstract frame doubles as the
    // target since F maps frame coordinates to R^{n+1,1} with the standard
    // diag(-1, 1...) metric of matching dimension
    let space = MinkowskiSpace::new(d - 2);
    let g = space.form_matrix();
    let gf = conn.gram.clone();
    let gf_inv = gf.clone().try_inverse().unwrap();
    let defect = (f0.transpose() * &g * f0 - &gf).amax();
    if defect > 1e-8 {
        return Err(Error::DegenerateFrame(format!(
            "base frame is not a Lorentz frame: defect {defect:.3e}"
        )));
    }

    let mut frames: Vec<Option<DMatrix<f64>>> = vec![None; chart.len()];
    frames[chart.index(base)] = Some(f0.clone());

    // axis 0 line through the base
    for dir in [1isize, -1] {
        let mut idx = base.to_vec();
        let mut f = f0.clone();
        loop {
            let next = match step_no_wrap(&chart, &idx, 0, dir) {
                Some(nb) => nb,
                None => break,
            };
            f = transport_edge(&f, &conn.omega[0], &idx, 0, dir, opts, &g, &gf, &gf_inv);
            frames[chart.index(&next)] = Some(f.clone());
            idx = next;
        }
    }

    // remaining axes: fill hyperplanes; lines along an axis are independent
    for axis in 1..m {
        // collect all source nodes already filled; extend along +-axis
        let filled: Vec<Vec<usize>> = (0..chart.len())
            .filter(|&lin| frames[lin].is_some())
            .map(|lin| chart.multi_index(lin))
            .collect();
        let lines: Vec<(Vec<usize>, Vec<(usize, DMatrix<f64>)>)> = filled
            .par_iter()
            .map(|start| {
                let mut out = Vec::new();
                for dir in [1isize, -1] {
                    let mut idx = start.clone();
                    let mut f = frames[chart.index(start)].clone().unwrap();
                    loop {
                        let next = match step_no_wrap(&chart, &idx, axis, dir) {
                            Some(nb) => nb,
                            None => break,
                        };
                        f = transport_edge(
                            &f,
                            &conn.omega[axis],
                            &idx,
                            axis,
                            dir,
                            opts,
                            &g,
                            &gf,
                            &gf_inv,
                        );
                        out.push((chart.index(&next), f.clone()));
                        idx = next;
                    }
                }
                (start.clone(), out)
            })
            .collect();
        for (_, line) in lines {
            for (lin, f) in line {
                frames[lin] = Some(f);
            }
        }
    }

    let values: Vec<DMatrix<f64>> = frames
        .into_iter()
        .map(|f| f.expect("grid fully covered by transport"))
        .collect();
    let margin = conn
        .omega
        .iter()
        .map(|w| w.valid_margin)
        .max()
        .unwrap_or(0)
        + 2; // cubic edge interpolation reaches two nodes past the edge
    Ok(FrameField {
        f: GridField::new(chart, values).with_margin(margin),
        base: base.to_vec(),
        base_frame: f0.clone(),
        gram: gf,
    })
}

/// Step without wrapping: periodic charts are integrated on the universal
/// cover, so the period defect stays visible as holonomy.
fn step_no_wrap(chart: &Chart, idx: &[usize], axis: usize, dir: isize) -> Option<Vec<usize>> {
    let raw = idx[axis] as isize + dir;
    if raw < 0 || raw >= chart.shape[axis] as isize {
        return None;
    }
    let mut out = idx.to_vec();
    out[axis] = raw as usize;
    Some(out)
}

impl FrameField {
    /// Max deviation from the Lorentz-frame property across the grid.
    pub fn lorentz_defect(&self) -> f64 {
        let d = self.f.values[0].nrows();
        let space = MinkowskiSpace::new(d - 2);
        let g = space.form_matrix();
        let mut worst: f64 = 0.0;
        for f in self.f.values.iter() {
            worst = worst.max((f.transpose() * &g * f - &self.gram).amax());
        }
        worst
    }
}

/// sigma(p) = F(p) e_sigma: the reconstructed light-cone lift. The lift
/// inherits the connection margin plus the transport-interpolation reach, so
/// downstream checks skip the boundary band where the connection entries
/// were extrapolated.
pub fn extract_immersion(frame: &FrameField, data: &GcrData) -> LightConeLift {
    let d = frame.f.values[0].nrows();
    let space = MinkowskiSpace::new(d - 2);
    // periodic charts were integrated on the universal cover: the seam
    // carries the period holonomy, so the reconstructed patch is an
    // ordinary box chart and the seam band sits outside the valid region
    let src = &frame.f.chart;
    let cover_chart = Chart::new(
        &src.shape,
        &src.spacing,
        &vec![false; src.dim()],
        &src.origin,
    )
    .expect("cover chart is valid");
    let sigma_vals: Vec<DVector<f64>> = frame
        .f
        .values
        .iter()
        .map(|f| {
            let mut col: DVector<f64> = f.column(0).into();
            if col[0] < 0.0 {
                col = -col;
            }
            col
        })
        .collect();
    // the data argument pins the caller to matching dimensions; nothing
    // beyond the frame is needed to read off sigma
    let _ = data;
    let margin = frame.f.valid_margin;
    LightConeLift::new(
        space,
        cover_chart.clone(),
        GridField::new(cover_chart, sigma_vals).with_margin(margin),
    )
}

/// Max over grid cells of || P_cell - I || where P_cell is the ordered
/// product of the four edge transports around the cell.
pub fn holonomy_residual(conn: &ConnectionField, opts: &IntegrateOptions) -> Result<f64> {
    let chart = conn.chart().clone();
    let m = chart.dim();
    let d = conn.dim();
    // plaquette transports live in frame coordinates: group elements with
    // P^T Gf P = Gf, so the reprojection target is Gf on both sides
    let gf = conn.gram.clone();
    let g = gf.clone();
    let gf_inv = gf.clone().try_inverse().unwrap();
    let id = DMatrix::<f64>::identity(d, d);
    let margin = conn.omega.iter().map(|w| w.valid_margin).max().unwrap_or(0);
    let mut worst: f64 = 0.0;
    for a in 0..m {
        for b in (a + 1)..m {
            for lin in 0..chart.len() {
                let idx = chart.multi_index(lin);
                if !chart.in_valid_region(&idx, margin) {
                    continue;
                }
                // cell corners must exist without wrapping
                let i1 = match step_no_wrap(&chart, &idx, a, 1) {
                    Some(v) => v,
                    None => continue,
                };
                let i2 = match step_no_wrap(&chart, &i1, b, 1) {
                    Some(v) => v,
                    None => continue,
                };
                let i3 = match step_no_wrap(&chart, &idx, b, 1) {
                    Some(v) => v,
                    None => continue,
                };
                if !chart.in_valid_region(&i2, margin) {
                    continue;
                }
                let mut f = id.clone();
                f = transport_edge(&f, &conn.omega[a], &idx, a, 1, opts, &g, &gf, &gf_inv);
                f = transport_edge(&f, &conn.omega[b], &i1, b, 1, opts, &g, &gf, &gf_inv);
                f = transport_edge(&f, &conn.omega[a], &i2, a, -1, opts, &g, &gf, &gf_inv);
                f = transport_edge(&f, &conn.omega[b], &i3, b, -1, opts, &g, &gf, &gf_inv);
                worst = worst.max((&f - &id).amax());
            }
        }
    }
    Ok(worst)
}

/// Output of [`align_mobius`]: the aligning transformation and the max
/// projective distance after alignment.
pub struct Alignment {
    pub transform: MobiusTransform,
    pub max_dist: f64,
}

/// Align two lifts by matching adapted (central-congruence) frames at the
/// base node. The residual normal-frame freedom (an O(k) rotation the frame
/// propagation cannot fix) is resolved by Procrustes over probe nodes.
pub fn align_mobius(
    lift1: &LightConeLift,
    lift2: &LightConeLift,
    order: StencilOrder,
) -> Result<Alignment> {
    // adapted frames need the normalized gauge; renormalizing is projective
    // and does not move the surfaces
    let normalize = |lift: &LightConeLift| -> Result<LightConeLift> {
        match lift.m() {
            1 => lift.normalize_gauge(&crate::immersion::GaugeMode::Arclength, order),
            2 => lift.normalize_gauge(&crate::immersion::GaugeMode::Isothermal, order),
            _ => Ok(lift.clone()),
        }
    };
    let lift1 = normalize(lift1)?;
    let lift2 = normalize(lift2)?;
    let v1 = central_sphere_congruence(&lift1, order)?;
    let v2 = central_sphere_congruence(&lift2, order)?;
    align_with_congruences(&lift1, &lift2, &v1, &v2)
}

/// Alignment variant taking precomputed adapted frames.
pub fn align_with_congruences(
    lift1: &LightConeLift,
    lift2: &LightConeLift,
    v1: &SphereCongruence,
    v2: &SphereCongruence,
) -> Result<Alignment> {
    if lift1.chart.shape != lift2.chart.shape
        || lift1.chart.spacing != lift2.chart.spacing
        || lift1.chart.origin != lift2.chart.origin
    {
        return Err(Error::DimensionMismatch("lifts on different charts".into()));
    }
    let sp = &lift1.space;
    let chart = &lift1.chart;
    let m = chart.dim();
    let k = sp.n - m;
    // adapted frames need the congruence margin; the distance sweep only
    // needs the lifts themselves to be trustworthy
    let frame_margin = v1.valid_margin.max(v2.valid_margin);
    let margin = lift1.sigma.valid_margin.max(lift2.sigma.valid_margin);
    let base_idx: Vec<usize> = chart
        .shape
        .iter()
        .enumerate()
        .map(|(a, &s)| {
            if chart.periodic[a] {
                0
            } else {
                frame_margin.min(s - 1)
            }
        })
        .collect();
    let base = chart.index(&base_idx);
    let f1 = v1.full_frame(base);
    let f2 = v2.full_frame(base);
    let f1_inv = f1.clone().try_inverse().ok_or_else(|| {
        Error::DegenerateFrame("adapted frame at the base node is singular".into())
    })?;
    let f2_inv = f2.clone().try_inverse().ok_or_else(|| {
        Error::DegenerateFrame("adapted frame at the base node is singular".into())
    })?;

    // resolve the normal-frame O(k) ambiguity: D = blockdiag(I_{m+2}, R)
    // with R fitted over probe nodes so that D (F1^-1 sigma1) matches
    // F2^-1 sigma2 in the xi-components.
    let r = if k == 0 {
        DMatrix::identity(0, 0)
    } else {
        let mut corr = DMatrix::zeros(k, k);
        let probes: Vec<usize> = v1
            .frame
            .valid_indices()
            .into_iter()
            .step_by((chart.len() / 64).max(1))
            .collect();
        for &lin in probes.iter() {
            let c1 = &f1_inv * &lift1.sigma.values[lin];
            let c2 = &f2_inv * &lift2.sigma.values[lin];
            // scale out the projective factor using the sigma-slot pairing
            let (s1, s2) = (c1.norm(), c2.norm());
            if s1 < 1e-12 || s2 < 1e-12 {
                continue;
            }
            let x1 = c1.rows(m + 2, k) / s1;
            let x2 = c2.rows(m + 2, k) / s2;
            corr += x2 * x1.transpose();
        }
        let svd = corr.svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => u * vt,
            _ => DMatrix::identity(k, k),
        }
    };
    let mut d_gauge = DMatrix::identity(m + 2 + k, m + 2 + k);
    d_gauge.view_mut((m + 2, m + 2), (k, k)).copy_from(&r);

    let t_raw = &f2 * d_gauge * &f1_inv;
    let t = crate::minkowski::reproject_lorentz(&t_raw, &sp.form_matrix());
    let t = sp.mobius_from_matrix(t).map_err(|_| {
        Error::DegenerateFrame("aligning matrix failed the Möbius invariants".into())
    })?;

    let mut max_dist: f64 = 0.0;
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        if !chart.in_valid_region(&idx, margin) {
            continue;
        }
        let moved = t.apply(&lift1.sigma.values[lin]);
        let dist = sp.projective_distance(&moved, &lift2.sigma.values[lin])?;
        max_dist = max_dist.max(dist);
    }
    Ok(Alignment {
        transform: t,
        max_dist,
    })
}

/// Natural base frame for reconstruction: the identity-permutation Lorentz
/// frame realizing the abstract Gram matrix in R^{n+1,1}: sigma -> v0-like
/// null vector, Y_j -> e_j, Zhat -> v_inf-like, xi_a -> remaining basis.
pub fn standard_base_frame(m: usize, k: usize) -> DMatrix<f64> {
    let d = m + 2 + k;
    let mut f = DMatrix::zeros(d, d);
    // sigma = (e0 - e_{d-1})/2, Zhat = e0 + e_{d-1}
    f[(0, 0)] = 0.5;
    f[(d - 1, 0)] = -0.5;
    f[(0, m + 1)] = 1.0;
    f[(d - 1, m + 1)] = 1.0;
    for j in 0..m {
        f[(1 + j, 1 + j)] = 1.0;
    }
    for a in 0..k {
        f[(m + 1 + a, m + 2 + a)] = 1.0;
    }
    f
}

/// Reconstruct a lift from data: assemble, integrate from the standard (or
/// supplied) base frame at the valid-corner base node, extract.
pub fn reconstruct(
    data: &GcrData,
    f0: Option<&DMatrix<f64>>,
    opts: &IntegrateOptions,
) -> Result<(LightConeLift, FrameField)> {
    let conn = crate::gcr::assemble_connection_with(data, opts.order)?;
    let margin = conn.omega.iter().map(|w| w.valid_margin).max().unwrap_or(0);
    let base: Vec<usize> = data
        .chart
        .shape
        .iter()
        .enumerate()
        .map(|(a, &s)| if data.chart.periodic[a] { 0 } else { (margin + 1).min(s - 1) })
        .collect();
    let standard = standard_base_frame(data.m, data.k());
    let f0 = f0.unwrap_or(&standard);
    let frame = integrate_frame(&conn, f0, &base, opts)?;
    let lift = extract_immersion(&frame, data);
    Ok((lift, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcr::extract_gcr;
    use crate::zoo;
    use approx::assert_relative_eq;

    fn zero_connection(chart: &Chart, m: usize, k: usize) -> ConnectionField {
        let d = m + 2 + k;
        ConnectionField {
            omega: (0..chart.dim())
                .map(|_| GridField::constant(chart, DMatrix::zeros(d, d)))
                .collect(),
            gram: crate::congruence::SphereCongruence::full_gram(m, k),
        }
    }

    #[test]
    fn zero_connection_transports_identity() {
        let chart = Chart::periodic_square(2, 12);
        let conn = zero_connection(&chart, 2, 1);
        let f0 = standard_base_frame(2, 1);
        let frame = integrate_frame(&conn, &f0, &[0, 0], &IntegrateOptions::default()).unwrap();
        let dev = frame
            .f
            .map(|f| (f - &f0).amax())
            .residual_norm()
            .unwrap();
        assert_relative_eq!(dev, 0.0, epsilon = 1e-13);
        assert!(holonomy_residual(&conn, &IntegrateOptions::default()).unwrap() < 1e-15);
    }

    #[test]
    fn commuting_constant_connection_matches_exponential() {
        // commuting Gf-skew generators: soldering-type in orthogonal slots
        let chart = Chart::box_chart(2, 0.0, 1.0, 9);
        let gf = crate::congruence::SphereCongruence::full_gram(2, 1);
        let d = 5;
        let mut w1 = DMatrix::zeros(d, d);
        // nilpotent T*-type generator in axis 1 slot
        w1[(0, 1)] = 0.3;
        w1[(1, 3)] = 0.3;
        let mut w2 = DMatrix::zeros(d, d);
        w2[(0, 2)] = -0.2;
        w2[(2, 3)] = -0.2;
        assert!((w1.transpose() * &gf + &gf * &w1).amax() < 1e-14);
        assert!((&w1 * &w2 - &w2 * &w1).amax() < 1e-14, "generators commute");
        let conn = ConnectionField {
            omega: vec![
                GridField::constant(&chart, w1.clone()),
                GridField::constant(&chart, w2.clone()),
            ],
            gram: gf,
        };
        let f0 = standard_base_frame(2, 1);
        let frame = integrate_frame(&conn, &f0, &[0, 0], &IntegrateOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for lin in 0..chart.len() {
            let idx = chart.multi_index(lin);
            let x = chart.coords(&idx);
            let expected = &f0 * expm_pade6(&(&w1 * x[0] + &w2 * x[1]));
            worst = worst.max((&frame.f.values[lin] - expected).amax());
        }
        assert!(worst < 1e-10, "constant-connection transport error {worst:.3e}");
    }

    #[test]
    fn sphere_round_trip_converges_at_order_four() {
        let sp = MinkowskiSpace::new(3);
        let mut pairs = Vec::new();
        for samples in [17usize, 33] {
            let lift = zoo::sphere_lift(&sp, samples, 1.0);
            let h = lift.chart.spacing[0];
            let data = extract_gcr(&lift, StencilOrder::Four).unwrap();
            let opts = IntegrateOptions {
                order: StencilOrder::Four,
                ..Default::default()
            };
            let (rec, _) = reconstruct(&data, None, &opts).unwrap();
            let align = align_mobius(&rec, &lift, StencilOrder::Four).unwrap();
            pairs.push((h, align.max_dist.max(1e-16)));
        }
        let p = crate::chart::convergence_order(&pairs).unwrap();
        assert!(
            p >= 3.5 || pairs[1].1 < 1e-12,
            "round-trip order {p}, distances {pairs:?}"
        );
    }

    #[test]
    fn base_frame_independence() {
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 24, 1.0);
        let h = lift.chart.spacing[0];
        let data = extract_gcr(&lift, StencilOrder::Two).unwrap();
        let opts = IntegrateOptions {
            flatness_threshold: 1.0,
            ..Default::default()
        };
        let (rec1, _) = reconstruct(&data, None, &opts).unwrap();
        // random Lorentz rotation of the base frame
        let t = sp.random_mobius(11, 0.5);
        let f0 = t.matrix() * standard_base_frame(2, 1);
        let (rec2, _) = reconstruct(&data, Some(&f0), &opts).unwrap();
        let align = align_mobius(&rec1, &rec2, StencilOrder::Two).unwrap();
        assert!(
            align.max_dist < 1e-8 + 10.0 * h * h,
            "base-frame dependence {:.3e}",
            align.max_dist
        );
    }

    #[test]
    fn alignment_recovers_exact_conjugation() {
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 24, 1.0);
        let t0 = sp.random_mobius(3, 0.4);
        let moved = lift.transformed(t0.matrix());
        let align = align_mobius(&lift, &moved, StencilOrder::Two).unwrap();
        assert!(align.max_dist < 1e-9, "exact conjugation {:.3e}", align.max_dist);

        // negative control: genuinely different surfaces stay apart
        let sphere = zoo::sphere_lift(&sp, 24, 1.0);
        let cyl_box = {
            // re-sample the cylinder on the same chart as the sphere
            let chart = sphere.chart.clone();
            crate::immersion::stereo_lift_of_map(&sp, &chart, |x| {
                DVector::from_vec(vec![x[0].cos(), x[0].sin(), x[1]])
            })
        };
        let align = align_mobius(&sphere, &cyl_box, StencilOrder::Two);
        if let Ok(a) = align {
            assert!(a.max_dist > 1e-2, "different surfaces must not align");
        }
    }

    #[test]
    fn non_integrable_data_is_refused() {
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 24, 1.0);
        let mut data = extract_gcr(&lift, StencilOrder::Two).unwrap();
        if let crate::gcr::SffData::Surface { kappa } = &mut data.sff {
            let chart = kappa[0].chart.clone();
            kappa[0] = GridField::from_fn(&chart, |_, x| {
                num_complex::Complex64::new(0.5 * (3.0 * x[0]).sin(), 0.4 * (2.0 * x[1]).cos())
            });
        }
        let opts = IntegrateOptions {
            flatness_threshold: 1e-4,
            ..Default::default()
        };
        assert!(matches!(
            reconstruct(&data, None, &opts),
            Err(Error::NotIntegrable { .. })
        ));
    }

    #[test]
    fn holonomy_scales_with_curvature() {
        // curvature-carrying connection: so(2)-type rotation block
        let chart = Chart::box_chart(2, 0.0, 1.0, 17);
        let h = chart.spacing[0];
        let gf = crate::congruence::SphereCongruence::full_gram(2, 1);
        let d = 5;
        // omega_1 = A x_2-dependent to create curvature R = dA
        let mut a_mat = DMatrix::zeros(d, d);
        a_mat[(1, 2)] = 1.0;
        a_mat[(2, 1)] = -1.0;
        let w1 = GridField::from_fn(&chart, |_, x| &a_mat * x[1]);
        let w2 = GridField::constant(&chart, DMatrix::zeros(d, d));
        let conn = ConnectionField {
            omega: vec![w1, w2],
            gram: gf,
        };
        let hol = holonomy_residual(&conn, &IntegrateOptions::default()).unwrap();
        // R_12 = -d2 w1 = -A: |R| = 1, cell area h^2
        assert!(
            (hol - h * h).abs() < 0.5 * h * h,
            "holonomy {hol:.3e} vs cell curvature {:.3e}",
            h * h
        );
    }

    #[test]
    fn curve_round_trip() {
        // circles carry arbitrary conformal acceleration data; the Bonnet
        // integration reproduces them (the GCR equations are vacuous)
        let sp = MinkowskiSpace::new(2);
        let mut pairs = Vec::new();
        for samples in [48usize, 96] {
            let lift = zoo::circle_lift(&sp, 1.0, samples);
            let h = lift.chart.spacing[0];
            let data = extract_gcr(&lift, StencilOrder::Two).unwrap();
            let opts = IntegrateOptions {
                flatness_threshold: f64::INFINITY,
                ..Default::default()
            };
            let (rec, _) = reconstruct(&data, None, &opts).unwrap();
            let align = align_mobius(&rec, &lift, StencilOrder::Two).unwrap();
            pairs.push((h, align.max_dist.max(1e-16)));
        }
        let p = crate::chart::convergence_order(&pairs).unwrap();
        assert!(
            p > 1.5 || pairs[1].1 < 1e-9,
            "curve round trip order {p}: {pairs:?}"
        );
    }

    #[test]
    fn enveloped_selector_reconstructs_the_same_surface() {
        // assemble with H and with H = 0: conjugate holonomies, so the two
        // reconstructions agree up to a Möbius transformation
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 32, 1.0);
        let h = lift.chart.spacing[0];
        let mut data = extract_gcr(&lift, StencilOrder::Two).unwrap();
        let opts = IntegrateOptions {
            flatness_threshold: f64::INFINITY,
            ..Default::default()
        };
        let (rec0, _) = reconstruct(&data, None, &opts).unwrap();
        data.h = Some(GridField::from_fn(&data.chart, |_, x| {
            DVector::from_vec(vec![0.2 + 0.1 * x[0].cos()])
        }));
        let (rec1, _) = reconstruct(&data, None, &opts).unwrap();
        let align = align_mobius(&rec0, &rec1, StencilOrder::Two).unwrap();
        assert!(
            align.max_dist < 100.0 * h * h,
            "H-selector changed the surface: {:.3e}",
            align.max_dist
        );
    }

    #[test]
    fn magnus_transport_matches_rk4() {
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 24, 1.0);
        let h = lift.chart.spacing[0];
        let data = extract_gcr(&lift, StencilOrder::Two).unwrap();
        let rk4 = IntegrateOptions {
            flatness_threshold: f64::INFINITY,
            transport: Transport::Rk4,
            order: StencilOrder::Two,
        };
        let magnus = IntegrateOptions {
            transport: Transport::Magnus2,
            ..rk4.clone()
        };
        let (rec_a, _) = reconstruct(&data, None, &rk4).unwrap();
        let (rec_b, frame_b) = reconstruct(&data, None, &magnus).unwrap();
        // Magnus is exactly on the group before reprojection
        assert!(frame_b.lorentz_defect() < 1e-9);
        let dev = rec_a
            .sigma
            .zip(&rec_b.sigma, |a, b| {
                sp.projective_distance(a, b).unwrap_or(f64::NAN)
            })
            .residual_norm()
            .unwrap();
        assert!(dev < 100.0 * h * h, "integrators disagree: {dev:.3e}");
    }

    #[test]
    fn frame_defect_stays_small_over_many_steps() {
        let sp = MinkowskiSpace::new(3);
        let lift = zoo::cylinder_lift(&sp, 1.0, 104, 1.0); // > 10^4 nodes
        let data = extract_gcr(&lift, StencilOrder::Two).unwrap();
        let opts = IntegrateOptions {
            flatness_threshold: 1.0,
            ..Default::default()
        };
        let (_, frame) = reconstruct(&data, None, &opts).unwrap();
        assert!(
            frame.lorentz_defect() < 1e-8,
            "Lorentz defect {:.3e}",
            frame.lorentz_defect()
        );
    }
}
