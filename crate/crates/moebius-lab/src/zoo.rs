//! Closed-form generators of test surfaces and curves with known conformal
//! invariants, plus the classical structure checks (Dupin's theorem,
//! Möbius-flat fundamental forms). The zoo doubles as the integration-test
//! corpus: every generator's output passes the module invariants and the GCR
//! residuals at discretization order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::chart::{Chart, GridField, StencilOrder};
use crate::error::{Error, Result};
use crate::gcr::{GcrData, MetricData, SffData};
use crate::immersion::{stereo_lift_of_map, LightConeLift};
use crate::minkowski::{skew_pair, LorentzVec, MinkowskiSpace, SpaceformGauge};
use crate::mobius_structure::{MobiusStructureField, QuadraticDifferential};
use crate::riemann;

/// Totally geodesic 2-sphere in S^3: stereo lift of a plane patch.
pub fn sphere_lift(space: &MinkowskiSpace, samples: usize, half_width: f64) -> LightConeLift {
    let chart = Chart::box_chart(2, -half_width, half_width, samples);
    stereo_lift_of_map(space, &chart, |x| DVector::from_vec(vec![x[0], x[1], 0.0]))
}

/// Circular cylinder of radius r in R^3, in conformal coordinates
/// (arclength along the circle and the ruling).
pub fn cylinder_lift(
    space: &MinkowskiSpace,
    r: f64,
    samples: usize,
    half_height: f64,
) -> LightConeLift {
    let hx = 2.0 * PI * r / samples as f64;
    let hy = 2.0 * half_height / (samples - 1) as f64;
    let chart = Chart::new(
        &[samples, samples],
        &[hx, hy],
        &[true, false],
        &[0.0, -half_height],
    )
    .expect("valid cylinder chart");
    stereo_lift_of_map(space, &chart, move |x| {
        let t = x[0] / r;
        DVector::from_vec(vec![r * t.cos(), r * t.sin(), x[1]])
    })
}

/// The Clifford-type torus as a product of unit-speed circles: a circle in
/// H^2 (hyperboloid of R^{2,1}) plus a unit circle in the orthogonal R^2.
pub fn clifford_torus_lift(samples: usize) -> LightConeLift {
    let space = MinkowskiSpace::new(3);
    let chart = Chart::periodic_square(2, samples);
    LightConeLift::from_fn(space, chart, |x| {
        DVector::from_vec(vec![
            2f64.sqrt(),
            x[0].cos(),
            x[0].sin(),
            x[1].cos(),
            x[1].sin(),
        ])
    })
}

/// Catenoid in conformal (Weierstrass) coordinates:
/// (cosh v cos u, cosh v sin u, v).
pub fn catenoid_lift(space: &MinkowskiSpace, samples: usize) -> LightConeLift {
    let half = 0.8;
    let hx = 2.0 * PI / samples as f64;
    let hy = 2.0 * half / (samples - 1) as f64;
    let chart = Chart::new(&[samples, samples], &[hx, hy], &[true, false], &[0.0, -half])
        .expect("valid catenoid chart");
    let sp = space.clone();
    LightConeLift::from_fn(space.clone(), chart, move |x| {
        let c = DVector::from_vec(vec![
            x[1].cosh() * x[0].cos(),
            x[1].cosh() * x[0].sin(),
            x[1],
        ]);
        // Weierstrass coordinates are conformal with factor cosh^2 v;
        // rescale to the unit isothermal gauge
        sp.stereo_lift(&c) / x[1].cosh()
    })
}

/// Torus of revolution with radii (R, r), R/r = ratio, in closed-form
/// conformal coordinates. Willmore only at ratio = sqrt(2); larger ratios
/// serve as non-Willmore, non-minimal controls.
pub fn revolution_torus_lift(samples: usize, ratio: f64) -> LightConeLift {
    let space = MinkowskiSpace::new(3);
    let r = 1.0;
    let big_r = ratio * r;
    let root = (big_r * big_r - r * r).sqrt();
    // conformal latitude w with dw = r dphi / (R + r cos phi); period W
    let period_w = 2.0 * PI * r / root;
    let hx = 2.0 * PI / samples as f64;
    let hw = period_w / samples as f64;
    let chart = Chart::new(&[samples, samples], &[hx, hw], &[true, true], &[0.0, 0.0])
        .expect("valid torus chart");
    let phi_of_w = move |w: f64| -> f64 {
        let a = root * w / (2.0 * r);
        2.0 * ((big_r + r).sqrt() * a.sin()).atan2((big_r - r).sqrt() * a.cos())
    };
    let sp = space.clone();
    LightConeLift::from_fn(space, chart, move |x| {
        let phi = phi_of_w(x[1]);
        let rho = big_r + r * phi.cos();
        let c = DVector::from_vec(vec![rho * x[0].cos(), rho * x[0].sin(), r * phi.sin()]);
        sp.stereo_lift(&c) / rho
    })
}

/// Unit-speed circle of radius r in R^2, arclength chart.
pub fn circle_lift(space: &MinkowskiSpace, r: f64, samples: usize) -> LightConeLift {
    let h = 2.0 * PI * r / samples as f64;
    let chart = Chart::new(&[samples], &[h], &[true], &[0.0]).expect("valid circle chart");
    let sp = space.clone();
    LightConeLift::from_fn(space.clone(), chart, move |x| {
        let t = x[0] / r;
        sp.stereo_lift(&DVector::from_vec(vec![r * t.cos(), r * t.sin()]))
    })
}

/// Helix (a cos t, a sin t, b t) in arclength parametrization.
pub fn helix_lift(space: &MinkowskiSpace, a: f64, b: f64, samples: usize) -> LightConeLift {
    let speed = (a * a + b * b).sqrt();
    // the helix does not close up, so the chart is a box
    let h = 2.0 * PI * speed / (samples - 1) as f64;
    let chart = Chart::new(&[samples], &[h], &[false], &[0.0]).expect("valid helix chart");
    let sp = space.clone();
    LightConeLift::from_fn(space.clone(), chart, move |x| {
        let t = x[0] / speed;
        sp.stereo_lift(&DVector::from_vec(vec![a * t.cos(), a * t.sin(), b * t]))
    })
}

/// Product of arclength curves gamma_1 in H^k (hyperboloid of R^{k,1}) and
/// gamma_2 in S^{n-k} (unit sphere of R^{n-k+1}): the lift
/// sigma = gamma_1 + gamma_2 together with the closed isothermic form
/// eta = sigma skew (d gamma_1 - d gamma_2), one ambient matrix per axis.
pub struct CurveProduct {
    pub lift: LightConeLift,
    pub eta: Vec<GridField<DMatrix<f64>>>,
}

pub fn product_of_curves(
    space: &MinkowskiSpace,
    chart: &Chart,
    k_split: usize,
    gamma1: impl Fn(f64) -> DVector<f64>,
    gamma2: impl Fn(f64) -> DVector<f64>,
) -> Result<CurveProduct> {
    let n = space.n;
    let d = space.dim();
    let embed1 = |v: &DVector<f64>| -> LorentzVec {
        assert_eq!(v.len(), k_split + 1, "gamma1 lives in R^{{k,1}}");
        let mut out = DVector::zeros(d);
        for i in 0..=k_split {
            out[i] = v[i];
        }
        out
    };
    let embed2 = |v: &DVector<f64>| -> LorentzVec {
        assert_eq!(v.len(), n - k_split + 1, "gamma2 lives in R^{{n-k+1}}");
        let mut out = DVector::zeros(d);
        for i in 0..v.len() {
            out[k_split + 1 + i] = v[i];
        }
        out
    };

    let sigma = GridField::from_fn(chart, |_, x| {
        embed1(&gamma1(x[0])) + embed2(&gamma2(x[1]))
    });
    let lift = LightConeLift::new(space.clone(), chart.clone(), sigma);

    // numerical unit-speed precondition (both factors)
    let order = StencilOrder::Two;
    let g = lift.induced_metric(order)?;
    let h: f64 = chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
    let tol = (50.0 * h * h).clamp(1e-6, 0.05);
    for &lin in g.g.valid_indices().iter() {
        let gm = &g.g.values[lin];
        if (gm[(0, 0)] - 1.0).abs() > tol || (gm[(1, 1)] - 1.0).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "product curves must be arclength-parametrized; metric {gm}"
            )));
        }
    }

    // eta = sigma skew (d gamma_1 - d gamma_2)
    let d1 = lift.sigma.partial(0, order)?; // = gamma_1'
    let d2 = lift.sigma.partial(1, order)?; // = gamma_2'
    let sp = space.clone();
    let eta_s = lift
        .sigma
        .zip(&d1, |s, g1p| skew_pair(&sp, s, g1p));
    let sp = space.clone();
    let eta_t = lift
        .sigma
        .zip(&d2, |s, g2p| skew_pair(&sp, s, g2p).map(|v| -v));
    Ok(CurveProduct {
        lift,
        eta: vec![eta_s, eta_t],
    })
}

/// The standard Clifford-type product fixture with its eta.
pub fn clifford_product(samples: usize) -> CurveProduct {
    let space = MinkowskiSpace::new(3);
    let chart = Chart::periodic_square(2, samples);
    product_of_curves(
        &space,
        &chart,
        2,
        |s| DVector::from_vec(vec![2f64.sqrt(), s.cos(), s.sin()]),
        |t| DVector::from_vec(vec![t.cos(), t.sin()]),
    )
    .expect("clifford product is valid")
}

/// Cone-type isothermic surface: hyperbolic geodesic times circle.
pub fn geodesic_circle_product(samples: usize) -> CurveProduct {
    let space = MinkowskiSpace::new(3);
    let hx = 1.6 / (samples - 1) as f64;
    let hy = 2.0 * PI / samples as f64;
    let chart = Chart::new(
        &[samples, samples],
        &[hx, hy],
        &[false, true],
        &[-0.8, 0.0],
    )
    .expect("valid product chart");
    product_of_curves(
        &space,
        &chart,
        2,
        |s| DVector::from_vec(vec![s.cosh(), s.sinh(), 0.0]),
        |t| DVector::from_vec(vec![t.cos(), t.sin()]),
    )
    .expect("geodesic product is valid")
}

/// Confocal-quadric data: eigenvalues a_0 < ... < a_4 of the pencil and the
/// curvature-line parameters u_i in the separating intervals.
#[derive(Debug, Clone)]
pub struct QuadricSpec {
    pub a: [f64; 5],
    pub u3: f64,
    pub u1_range: (f64, f64),
    pub u2_range: (f64, f64),
    pub samples: usize,
}

impl Default for QuadricSpec {
    fn default() -> Self {
        QuadricSpec {
            a: [0.0, 1.0, 2.0, 3.0, 4.0],
            u3: 3.5,
            u1_range: (1.25, 1.75),
            u2_range: (2.25, 2.75),
            samples: 33,
        }
    }
}

fn quadric_char(a: &[f64; 5], u: f64) -> f64 {
    a.iter().map(|ai| u - ai).product()
}

fn quadric_coords(a: &[f64; 5], u: &[f64; 3]) -> Result<DVector<f64>> {
    // x_i^2 = c prod_j (u_j - a_i) / f'(a_i); timelike component gets -c
    let mut fprime = [0.0; 5];
    for i in 0..5 {
        fprime[i] = (0..5)
            .filter(|&j| j != i)
            .map(|j| a[i] - a[j])
            .product();
    }
    let raw: Vec<f64> = (0..5)
        .map(|i| u.iter().map(|&uj| uj - a[i]).product::<f64>() / fprime[i])
        .collect();
    // choose the overall scale sign so the timelike square is positive
    let c = if -raw[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut x = DVector::zeros(5);
    for i in 0..5 {
        let sq = if i == 0 { -c * raw[i] } else { c * raw[i] };
        if sq < 0.0 {
            return Err(Error::Domain(format!(
                "sign-infeasible quadric parameters: x_{i}^2 = {sq:.3e}"
            )));
        }
        x[i] = sq.sqrt();
    }
    Ok(x)
}

/// A quadric patch in S^3 on its conformal curvature-line chart, produced by
/// reparametrizing (u_1, u_2) along each axis so the closed-form metric
/// becomes conformal. Returns the lift and the sampled u_i(w_i) tables.
pub struct QuadricPatch {
    pub lift: LightConeLift,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub spec: QuadricSpec,
}

pub fn quadric(spec: &QuadricSpec) -> Result<QuadricPatch> {
    let a = &spec.a;
    for w in a.windows(2) {
        if w[1] - w[0] < 1e-6 {
            return Err(Error::Domain("quadric eigenvalues must be distinct".into()));
        }
    }
    let n = spec.samples;
    // conformal reparametrization du/dw = 1/sqrt(s_i(u)) with
    // s_1 = (u3-u)/f(u) on (a0,a1), s_2 = -(u3-u)/f(u) on (a1,a2)
    let integrand = |axis: usize, u: f64| -> f64 {
        let f = quadric_char(a, u);
        // on the feasible branch (u1, u2, u3 in the last three root gaps)
        // the metric coefficient is -(u3-u)/f on the first axis and
        // +(u3-u)/f on the second
        let v = (spec.u3 - u) / f;
        let v = if axis == 0 { -v } else { v };
        v.max(1e-12).sqrt()
    };
    // two passes per axis: Simpson for the total conformal length, then an
    // RK4 solve of du/dw = 1/sqrt(s(u)) on the uniform w-grid (smooth
    // reparametrizations keep the downstream finite differences clean)
    let sample_axis = |axis: usize, lo: f64, hi: f64| -> (Vec<f64>, f64) {
        let dense = 4096;
        let du = (hi - lo) / dense as f64;
        let mut total = 0.0;
        for i in 0..dense {
            let u0 = lo + i as f64 * du;
            let s0 = integrand(axis, u0);
            let sm = integrand(axis, u0 + 0.5 * du);
            let s1 = integrand(axis, u0 + du);
            total += du * (s0 + 4.0 * sm + s1) / 6.0;
        }
        let hw = total / (n - 1) as f64;
        let substeps = 32;
        let dw = hw / substeps as f64;
        let f = |u: f64| 1.0 / integrand(axis, u.clamp(lo, hi));
        let mut us = Vec::with_capacity(n);
        let mut u = lo;
        us.push(u);
        for _ in 1..n {
            for _ in 0..substeps {
                let k1 = f(u);
                let k2 = f(u + 0.5 * dw * k1);
                let k3 = f(u + 0.5 * dw * k2);
                let k4 = f(u + dw * k3);
                u += dw * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            }
            us.push(u.min(hi));
        }
        (us, total)
    };
    let (u1, w1_total) = sample_axis(0, spec.u1_range.0, spec.u1_range.1);
    let (u2, w2_total) = sample_axis(1, spec.u2_range.0, spec.u2_range.1);
    let chart = Chart::new(
        &[n, n],
        &[
            w1_total / (n - 1) as f64,
            w2_total / (n - 1) as f64,
        ],
        &[false, false],
        &[0.0, 0.0],
    )?;
    let mut values = Vec::with_capacity(chart.len());
    for lin in 0..chart.len() {
        let idx = chart.multi_index(lin);
        let x = quadric_coords(a, &[u1[idx[0]], u2[idx[1]], spec.u3])?;
        values.push(x);
    }
    let space = MinkowskiSpace::new(3);
    Ok(QuadricPatch {
        lift: LightConeLift::new(space, chart.clone(), GridField::new(chart, values)),
        u1,
        u2,
        spec: spec.clone(),
    })
}

/// Closed-form coefficients of the induced S^3 metric of the confocal system
/// at (u1, u2, u3): (g11, g22) of the quadric patch in the u-coordinates.
pub fn quadric_metric_coefficients(a: &[f64; 5], u: &[f64; 3]) -> (f64, f64) {
    let g11 = (u[1] - u[0]) * (u[2] - u[0]) / quadric_char(a, u[0]);
    let g22 = (u[2] - u[1]) * (u[0] - u[1]) / quadric_char(a, u[1]);
    (g11, g22)
}

/// Confocal coordinates as an m = 3 lift for Dupin's theorem.
pub fn confocal_lift(a: &[f64; 5], samples: usize) -> Result<LightConeLift> {
    let ranges = [(1.25, 1.75), (2.25, 2.75), (3.25, 3.75)];
    let spacings: Vec<f64> = ranges
        .iter()
        .map(|r| (r.1 - r.0) / (samples - 1) as f64)
        .collect();
    let chart = Chart::new(
        &[samples, samples, samples],
        &spacings,
        &[false, false, false],
        &[ranges[0].0, ranges[1].0, ranges[2].0],
    )?;
    let mut values = Vec::with_capacity(chart.len());
    for lin in 0..chart.len() {
        let x = chart.coords(&chart.multi_index(lin));
        values.push(quadric_coords(a, &[x[0], x[1], x[2]])?);
    }
    let space = MinkowskiSpace::new(3);
    Ok(LightConeLift::new(
        space,
        chart.clone(),
        GridField::new(chart, values),
    ))
}

/// Max residual of Dupin's orthogonality pairing <d_j d_k sigma, u_i> over
/// interior nodes, for i not in {j,k}; errors when the coordinate system is
/// not orthogonal.
pub fn dupin_orthogonal_check(lift: &LightConeLift, order: StencilOrder) -> Result<f64> {
    dupin_orthogonal_check_within(lift, order, 0)
}

/// [`dupin_orthogonal_check`] measured away from the boundary by `extra`
/// additional nodes (fixed-region convergence estimates).
pub fn dupin_orthogonal_check_within(
    lift: &LightConeLift,
    order: StencilOrder,
    extra: usize,
) -> Result<f64> {
    if lift.m() != 3 {
        return Err(Error::InvalidArgument("dupin check requires m = 3".into()));
    }
    let sp = &lift.space;
    let metric = lift.induced_metric(order)?;
    let h: f64 = lift.chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
    let mut ortho_dev: f64 = 0.0;
    for &lin in metric.g.valid_indices().iter() {
        let g = &metric.g.values[lin];
        let scale = g.diagonal().amax();
        for i in 0..3 {
            for j in (i + 1)..3 {
                ortho_dev = ortho_dev.max(g[(i, j)].abs() / scale);
            }
        }
    }
    if ortho_dev > (100.0 * h * h).clamp(1e-6, 0.05) {
        return Err(Error::NonOrthogonal(ortho_dev));
    }
    let (first, second) = lift.jets(order)?;
    let mut worst: f64 = 0.0;
    let margin = second.iter().map(|f| f.valid_margin).max().unwrap().max(extra);
    for lin in 0..lift.chart.len() {
        let idx = lift.chart.multi_index(lin);
        if !lift.chart.in_valid_region(&idx, margin) {
            continue;
        }
        for j in 0..3 {
            for k in 0..3 {
                if j == k {
                    continue;
                }
                for i in 0..3 {
                    if i == j || i == k {
                        continue;
                    }
                    let u = &first[i].values[lin];
                    let norm = sp.inner(u, u).sqrt();
                    let pairing =
                        sp.inner(&second[lift.jet2_index(j, k)].values[lin], u) / norm;
                    worst = worst.max(pairing.abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Strictly Möbius-flat surface data (Dupin cyclide) in the flat gauge
/// lambda = 1: conformal metric dx^2 + dy^2, II0 = (dx^2 - dy^2) nu, Möbius
/// structure sym0 (D^g)^2 + t/2 (dx^2 - dy^2), CCYP q = 0, isothermic
/// differential q0 = dx^2 - dy^2.
pub struct DupinCyclide {
    pub data: GcrData,
    /// Constant so(4,1) sections theta_1, theta_2 in frame coordinates (the
    /// differential lifts of the coordinate symmetries).
    pub theta: [DMatrix<f64>; 2],
}

pub fn dupin_cyclide(t: f64, samples: usize) -> DupinCyclide {
    let chart = Chart::periodic_square(2, samples);
    let q_m = GridField::constant(&chart, Complex64::new(t / 4.0, 0.0));
    let ns = GridField::constant(&chart, 0.0f64);
    let kappa = vec![GridField::constant(&chart, Complex64::new(0.5, 0.0))];
    let beta = vec![
        GridField::constant(&chart, DMatrix::zeros(1, 1)),
        GridField::constant(&chart, DMatrix::zeros(1, 1)),
    ];
    let data = GcrData {
        m: 2,
        n: 3,
        chart: chart.clone(),
        metric: MetricData::Isothermal {
            u: GridField::constant(&chart, 0.0),
        },
        mobius: MobiusStructureField::Surface { q_m, ns },
        sff: SffData::Surface { kappa },
        beta,
        h: None,
        q: Some(QuadraticDifferential {
            q20: GridField::constant(&chart, Complex64::new(0.5, 0.0)),
        }),
    };
    // theta_i coincide with the (constant) connection matrices of the data
    let conn = crate::gcr::assemble_connection(&data).expect("cyclide data assembles");
    let theta = [
        conn.omega[0].values[0].clone(),
        conn.omega[1].values[0].clone(),
    ];
    DupinCyclide { data, theta }
}

/// Exact Dupin-cyclide lift: the data connection is constant and its two
/// coordinate matrices commute, so the parallel frame is the one-parameter
/// group F(x) = F0 exp(x1 w1 + x2 w2) and the lift is its first column --
/// machine-precision, no transport involved.
pub fn dupin_cyclide_lift(t: f64, samples: usize) -> LightConeLift {
    let cyclide = dupin_cyclide(t, samples);
    let f0 = crate::bonnet::standard_base_frame(2, 1);
    let space = MinkowskiSpace::new(3);
    // the orbit closes only at the surface's own periods, so the sampled
    // patch lives on a box chart rather than the data's periodic square
    let chart = Chart::box_chart(2, 0.0, 2.0 * PI, samples);
    let w1 = cyclide.theta[0].clone();
    let w2 = cyclide.theta[1].clone();
    LightConeLift::from_fn(space, chart, move |x| {
        let f = &f0 * crate::minkowski::expm_pade6(&(&w1 * x[0] + &w2 * x[1]));
        let mut col: DVector<f64> = f.column(0).into();
        if col[0] < 0.0 {
            col = -col;
        }
        col
    })
}

/// Lamé-function fields with a sign pattern epsilon: the Guichard condition
/// is sum_i eps_i / lambda_i^2 = 0; the middle (negative) slot is the
/// imaginary curvature-line branch, bookkept by the sign rather than a
/// complex coordinate.
pub struct GuichardSpec {
    pub lambda: [GridField<f64>; 3],
    pub signs: [f64; 3],
}

/// Separable fixture 1/l1 = cos(theta), 1/l2 = 1, 1/l3 = sin(theta) with
/// theta a function of x3; satisfies the signed Guichard condition exactly.
pub fn guichard_separable(samples: usize) -> (Chart, GuichardSpec) {
    let chart = Chart::box_chart(3, -0.4, 0.4, samples);
    let theta = |x3: f64| 0.75 + 0.4 * x3;
    let l1 = GridField::from_fn(&chart, |_, x| 1.0 / theta(x[2]).cos());
    let l2 = GridField::constant(&chart, 1.0f64);
    let l3 = GridField::from_fn(&chart, |_, x| 1.0 / theta(x[2]).sin());
    (
        chart,
        GuichardSpec {
            lambda: [l1, l2, l3],
            signs: [1.0, -1.0, 1.0],
        },
    )
}

/// Conformally-flat hypersurface data in S^4 from a Guichard net:
/// g = sum (dx_i / lambda_i)^2 and II0 = sum nu_i (dx_i / lambda_i)^2 with
/// 3 nu_1 = l1 l2 / l3 + l1 l3 / l2 (and signed cyclic variants).
pub fn guichard_net(chart: &Chart, spec: &GuichardSpec, order: StencilOrder) -> Result<GcrData> {
    if chart.dim() != 3 {
        return Err(Error::InvalidArgument("guichard_net requires an m = 3 chart".into()));
    }
    // Guichard condition, with signs
    let mut worst: f64 = 0.0;
    for lin in 0..chart.len() {
        let s: f64 = (0..3)
            .map(|i| spec.signs[i] / spec.lambda[i].values[lin].powi(2))
            .sum();
        worst = worst.max(s.abs());
    }
    if worst > 1e-8 {
        return Err(Error::GuichardViolated(worst));
    }
    if spec.signs != [1.0, -1.0, 1.0] {
        return Err(Error::InvalidArgument(
            "sign pattern (+,-,+) expected: the middle slot is the imaginary branch".into(),
        ));
    }

    let g = GridField::new(
        chart.clone(),
        (0..chart.len())
            .map(|lin| {
                DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| {
                    1.0 / spec.lambda[i].values[lin].powi(2)
                }))
            })
            .collect::<Vec<_>>(),
    );
    let schouten = riemann::schouten(&g, order)?;
    // branch-resolved eigenvalues of II0
    let nus = |lin: usize| -> [f64; 3] {
        let l1 = spec.lambda[0].values[lin];
        let l2 = spec.lambda[1].values[lin];
        let l3 = spec.lambda[2].values[lin];
        [
            (l1 * l2 / l3 + l1 * l3 / l2) / 3.0,
            (l2 * l3 / l1 - l2 * l1 / l3) / 3.0,
            -(l3 * l1 / l2 + l3 * l2 / l1) / 3.0,
        ]
    };
    let ii0 = vec![GridField::new(
        chart.clone(),
        (0..chart.len())
            .map(|lin| {
                let nu = nus(lin);
                DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| {
                    nu[i] / spec.lambda[i].values[lin].powi(2)
                }))
            })
            .collect::<Vec<_>>(),
    )];
    let beta: Vec<GridField<DMatrix<f64>>> = (0..3)
        .map(|_| GridField::constant(chart, DMatrix::zeros(1, 1)))
        .collect();
    Ok(GcrData {
        m: 3,
        n: 4,
        chart: chart.clone(),
        metric: MetricData::General { g },
        mobius: MobiusStructureField::ThreeManifold { schouten },
        sff: SffData::ThreeManifold { ii0 },
        beta,
        h: None,
        q: None,
    })
}

/// The differentiation identity d(l_j l_k / l_i) = -l_i (d l_j / l_k +
/// d l_k / l_j), in its real form for the (+,-,+) sign pattern (the middle
/// slot being the imaginary branch): a cross-check that the input fields
/// really satisfy the Guichard condition. Returns the max identity residual.
pub fn guichard_identity_residual(
    chart: &Chart,
    spec: &GuichardSpec,
    order: StencilOrder,
) -> Result<f64> {
    if spec.signs != [1.0, -1.0, 1.0] {
        return Err(Error::InvalidArgument("sign pattern (+,-,+) expected".into()));
    }
    let l = &spec.lambda;
    let dl: Vec<Vec<GridField<f64>>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|axis| l[i].partial(axis, order))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    // real identities with the imaginary middle slot:
    // d(l2 l3 / l1) = -l1 ( d l2 / l3 - d l3 / l2)
    // d(l3 l1 / l2) = +l2 ( d l3 / l1 + d l1 / l3)
    // d(l1 l2 / l3) = -l3 ( d l2 / l1 - d l1 / l2)
    let combos: [(usize, usize, usize, f64, f64, f64); 3] = [
        (0, 1, 2, -1.0, 1.0, -1.0),
        (1, 2, 0, 1.0, 1.0, 1.0),
        (2, 0, 1, -1.0, -1.0, 1.0),
    ];
    let mut worst: f64 = 0.0;
    for (i, j, k, front, cj, ck) in combos {
        let prod = l[j].zip(&l[k], |a, b| a * b).zip(&l[i], |ab, c| ab / c);
        for axis in 0..3 {
            let dprod = prod.partial(axis, order)?;
            let margin = dprod.valid_margin;
            for lin in 0..chart.len() {
                let idx = chart.multi_index(lin);
                if !chart.in_valid_region(&idx, margin) {
                    continue;
                }
                let rhs = front
                    * l[i].values[lin]
                    * (cj * dl[j][axis].values[lin] / l[k].values[lin]
                        + ck * dl[k][axis].values[lin] / l[j].values[lin]);
                worst = worst.max((dprod.values[lin] - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// eta = sigma skew d(xi) for a generalized H-surface, with the conserved
/// quantity residual max_r ||(d + r eta)(v_inf + r xi)||.
pub struct GeneralizedH {
    pub eta: Vec<GridField<DMatrix<f64>>>,
    pub d_eta_residual: f64,
    pub conserved_residual: f64,
}

pub fn cmc_and_generalized_h(
    lift: &LightConeLift,
    gauge: &SpaceformGauge,
    xi: &GridField<LorentzVec>,
    rs: &[f64],
    order: StencilOrder,
) -> Result<GeneralizedH> {
    let sp = &lift.space;
    let chart = &lift.chart;
    // spaceform normalization of the lift
    let sigma = GridField::new(
        chart.clone(),
        lift.sigma
            .values
            .iter()
            .map(|s| sp.spaceform_normalize(s, gauge))
            .collect::<Result<Vec<_>>>()?,
    );
    // xi must be a parallel unit section of the weightless normal bundle:
    // unit length, and its derivative has no normal component besides xi
    for v in xi.values.iter() {
        if (sp.inner(v, v) - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument("xi must be a unit field".into()));
        }
    }
    {
        let vc = crate::congruence::central_sphere_congruence(lift, order)?;
        let h: f64 = chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
        let mut worst: f64 = 0.0;
        for axis in 0..chart.dim() {
            let dxi = xi.partial(axis, order)?;
            for &lin in dxi.valid_indices().iter() {
                for a in 0..vc.k() {
                    let other = vc.xi_col(lin, a);
                    let along = sp.inner(&xi.values[lin], &other);
                    let pairing = sp.inner(&dxi.values[lin], &other)
                        - along * sp.inner(&dxi.values[lin], &xi.values[lin]);
                    // orthogonal normal directions only
                    if along.abs() < 0.9 {
                        worst = worst.max(pairing.abs());
                    }
                }
            }
        }
        if worst > (100.0 * h * h).max(1e-6) {
            return Err(Error::InvalidArgument(format!(
                "xi is not parallel for the normal connection: residual {worst:.3e}"
            )));
        }
    }
    let eta: Vec<GridField<DMatrix<f64>>> = (0..chart.dim())
        .map(|axis| {
            let dxi = xi.partial(axis, order)?;
            Ok(sigma.zip(&dxi, |s, dv| skew_pair(sp, s, dv)))
        })
        .collect::<Result<Vec<_>>>()?;
    // d eta residual (the bracket term vanishes in the abelian nilradical)
    let de = {
        let d01 = eta[1].partial(0, order)?;
        let d10 = eta[0].partial(1, order)?;
        d01.zip(&d10, |a, b| a - b)
    };
    let d_eta_residual = de.map(|m| m.amax()).residual_norm()?;

    // conserved quantity v_inf + r xi
    let vinf = GridField::constant(chart, gauge.v_inf.clone());
    let mut conserved: f64 = 0.0;
    for &r in rs {
        let field = vinf.zip(xi, |v, x| v + x * r);
        for axis in 0..chart.dim() {
            let dfield = field.partial(axis, order)?;
            let res = dfield.zip(&eta[axis].zip(&field, |e, f| e * f), |df, ef| {
                (df + ef * r).amax()
            });
            conserved = conserved.max(res.residual_norm()?);
        }
    }
    Ok(GeneralizedH {
        eta,
        d_eta_residual,
        conserved_residual: conserved,
    })
}

/// Conformal fundamental 1-forms of a Möbius-flat submanifold and their
/// closedness residuals. Components are coordinate components; imaginary
/// branches (negative squared factors) are handled by taking |.|^{1/2} of the
/// squared form, which is closed iff the complex form is.
pub struct MobiusFlatForms {
    pub alpha: Vec<GridField<DVector<f64>>>,
    pub d_alpha_residuals: Vec<f64>,
    /// Sign of each squared factor (negative marks an imaginary branch).
    pub branch_signs: Vec<f64>,
}

fn fix_sign(v: &mut DVector<f64>) {
    // sign off the dominant component: the "first nonzero entry" read
    // robustly, so finite-difference noise in tiny components cannot flip
    // the field from node to node
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -v.clone();
    }
}

pub fn mobius_flat_forms(data: &GcrData, order: StencilOrder) -> Result<MobiusFlatForms> {
    let chart = &data.chart;
    let m = data.m;
    match (&data.sff, &data.metric) {
        (SffData::Surface { kappa }, _) => {
            if kappa.len() != 1 {
                return Err(Error::InvalidArgument(
                    "mobius_flat_forms for m = 2 expects codimension one".into(),
                ));
            }
            // eigen decomposition of Pi = diag-izable tracefree 2x2; nu = |pi|
            // in its eigenframe; mu^2 from the quadratic differential
            let q = data
                .q
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("m = 2 forms need the CCYP q".into()))?;
            let mut alpha1 = Vec::with_capacity(chart.len());
            let mut alpha2 = Vec::with_capacity(chart.len());
            let mut sign1: f64 = 1.0;
            let mut sign2: f64 = 1.0;
            for lin in 0..chart.len() {
                let kap = kappa[0].values[lin];
                let pi = DMatrix::from_row_slice(
                    2,
                    2,
                    &[2.0 * kap.re, -2.0 * kap.im, -2.0 * kap.im, -2.0 * kap.re],
                );
                let eig = pi.symmetric_eigen();
                // order: positive eigenvalue first
                let (i_pos, i_neg) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
                    (0, 1)
                } else {
                    (1, 0)
                };
                let nu = eig.eigenvalues[i_pos];
                let mut e1: DVector<f64> = eig.eigenvectors.column(i_pos).into();
                let mut e2: DVector<f64> = eig.eigenvectors.column(i_neg).into();
                fix_sign(&mut e1);
                fix_sign(&mut e2);
                let qc = q.components(lin);
                let mu_sq = (e1.transpose() * &qc * &e1)[(0, 0)];
                let f1_sq = nu * nu + mu_sq;
                let f2_sq = nu * nu - mu_sq;
                sign1 = sign1.min(f1_sq.signum());
                sign2 = sign2.min(f2_sq.signum());
                alpha1.push(&e1 * f1_sq.abs().sqrt());
                alpha2.push(&e2 * f2_sq.abs().sqrt());
            }
            let alpha = vec![
                GridField::new(chart.clone(), alpha1).with_margin(kappa[0].valid_margin),
                GridField::new(chart.clone(), alpha2).with_margin(kappa[0].valid_margin),
            ];
            let residuals = closedness_residuals(&alpha, order)?;
            Ok(MobiusFlatForms {
                alpha,
                d_alpha_residuals: residuals,
                branch_signs: vec![sign1, sign2],
            })
        }
        (SffData::ThreeManifold { ii0 }, MetricData::General { g }) => {
            if ii0.len() != 1 {
                return Err(Error::InvalidArgument(
                    "mobius_flat_forms for m = 3 expects codimension one".into(),
                ));
            }
            // eigen data in the orthonormal frame E
            let mut alphas: Vec<Vec<DVector<f64>>> = vec![Vec::new(); 3];
            let mut signs = [1.0f64; 3];
            for lin in 0..chart.len() {
                let gv = &g.values[lin];
                let e = crate::congruence::safe_chol_inv(gv);
                let framed = &e * &ii0[0].values[lin] * e.transpose();
                let eig = framed.symmetric_eigen();
                let mut order_idx: Vec<usize> = (0..3).collect();
                order_idx.sort_by(|&a, &b| {
                    eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap()
                });
                let nu: Vec<f64> = order_idx.iter().map(|&i| eig.eigenvalues[i]).collect();
                for slot in 0..3 {
                    let (j, k) = match slot {
                        0 => (1, 2),
                        1 => (2, 0),
                        _ => (0, 1),
                    };
                    let lam_sq = (nu[j] - nu[slot]) * (nu[k] - nu[slot]);
                    signs[slot] = signs[slot].min(lam_sq.signum());
                    let mut dir: DVector<f64> = eig.eigenvectors.column(order_idx[slot]).into();
                    fix_sign(&mut dir);
                    // tangent vector in coordinates X = E^T dir, covector g X
                    let x_coord = e.transpose() * &dir;
                    let eps = gv * x_coord;
                    alphas[slot].push(eps * lam_sq.abs().sqrt());
                }
            }
            let alpha: Vec<GridField<DVector<f64>>> = alphas
                .into_iter()
                .map(|v| GridField::new(chart.clone(), v).with_margin(ii0[0].valid_margin))
                .collect();
            let residuals = closedness_residuals(&alpha, order)?;
            Ok(MobiusFlatForms {
                alpha,
                d_alpha_residuals: residuals,
                branch_signs: signs.to_vec(),
            })
        }
        _ => Err(Error::InvalidArgument(format!(
            "mobius_flat_forms supports m = 2, 3, got m = {m}"
        ))),
    }
}

fn closedness_residuals(
    alpha: &[GridField<DVector<f64>>],
    order: StencilOrder,
) -> Result<Vec<f64>> {
    closedness_residuals_within(alpha, order, 0)
}

/// Closedness residuals of 1-form fields, measured `extra` nodes inside the
/// valid region.
pub fn closedness_residuals_within(
    alpha: &[GridField<DVector<f64>>],
    order: StencilOrder,
    extra: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(alpha.len());
    let m = alpha[0].chart.dim();
    for a in alpha {
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let di = a.partial(i, order)?;
                let dj = a.partial(j, order)?;
                let curl = di
                    .zip(&dj, move |x, y| (x[j] - y[i]).abs())
                    .with_margin(di.valid_margin.max(dj.valid_margin).max(extra));
                worst = worst.max(curl.residual_norm()?);
            }
        }
        out.push(worst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congruence::{central_sphere_congruence, split_connection};
    use crate::gcr::{assemble_connection, curvature_residual, gcr_residuals};

    #[test]
    fn clifford_product_eta_is_closed() {
        let prod = clifford_product(32);
        let h = prod.lift.chart.spacing[0];
        prod.lift.validate(StencilOrder::Two).unwrap();
        let d01 = prod.eta[1].partial(0, StencilOrder::Two).unwrap();
        let d10 = prod.eta[0].partial(1, StencilOrder::Two).unwrap();
        let res = d01
            .zip(&d10, |a, b| (a - b).amax())
            .residual_norm()
            .unwrap();
        assert!(res < 20.0 * h * h, "d eta residual {res:.3e}");
    }

    #[test]
    fn degenerate_product_is_rejected() {
        // circle x point: second factor constant, not an immersion
        let space = MinkowskiSpace::new(3);
        let chart = Chart::periodic_square(2, 16);
        let result = product_of_curves(
            &space,
            &chart,
            2,
            |s| DVector::from_vec(vec![2f64.sqrt(), s.cos(), s.sin()]),
            |_| DVector::from_vec(vec![1.0, 0.0]),
        );
        assert!(result.is_err());
    }

    #[test]
    fn geodesic_circle_product_is_isothermic() {
        let prod = geodesic_circle_product(24);
        let h = prod.lift.chart.spacing[1];
        let d01 = prod.eta[1].partial(0, StencilOrder::Two).unwrap();
        let d10 = prod.eta[0].partial(1, StencilOrder::Two).unwrap();
        let res = d01
            .zip(&d10, |a, b| (a - b).amax())
            .residual_norm()
            .unwrap();
        assert!(res < 30.0 * h * h, "cone d eta residual {res:.3e}");
    }

    #[test]
    fn quadric_metric_matches_closed_form() {
        let patch = quadric(&QuadricSpec::default()).unwrap();
        let lift = &patch.lift;
        let h = lift.chart.spacing[0].max(lift.chart.spacing[1]);
        lift.validate(StencilOrder::Two).unwrap();
        let metric = lift.induced_metric(StencilOrder::Two).unwrap();
        // compare against the closed form via the chain rule: in the w-chart
        // the metric must be conformal with factor (u2 - u1)
        // the lift built from the square roots of the x_i^2 formulas carries
        // one quarter of the closed-form representative (d(x) = d(x^2)/(2x))
        let mut worst: f64 = 0.0;
        for &lin in metric.g.valid_indices().iter() {
            let idx = lift.chart.multi_index(lin);
            let factor = 0.25 * (patch.u2[idx[1]] - patch.u1[idx[0]]);
            let g = &metric.g.values[lin];
            worst = worst
                .max((g[(0, 0)] - factor).abs())
                .max((g[(1, 1)] - factor).abs())
                .max(g[(0, 1)].abs());
        }
        assert!(worst < 100.0 * h * h, "quadric metric deviation {worst:.3e}");

        // closed-form coefficient cross-check at a sample node: the w-chart
        // metric is the u-chart metric times the reparametrization weights
        let (g11, g22) = quadric_metric_coefficients(
            &patch.spec.a,
            &[patch.u1[16], patch.u2[16], patch.spec.u3],
        );
        let s1 = -(patch.spec.u3 - patch.u1[16]) / quadric_char(&patch.spec.a, patch.u1[16]);
        let s2 = (patch.spec.u3 - patch.u2[16]) / quadric_char(&patch.spec.a, patch.u2[16]);
        let mid = lift.chart.index(&[16, 16]);
        let g = &metric.g.values[mid];
        assert!(
            (g[(0, 0)] - 0.25 * (-g11) / s1).abs() < 100.0 * h * h,
            "g11 chain rule"
        );
        assert!(
            (g[(1, 1)] - 0.25 * (-g22) / s2).abs() < 100.0 * h * h,
            "g22 chain rule"
        );

        // degenerate eigenvalues are rejected
        let mut bad = QuadricSpec::default();
        bad.a = [0.0, 1.0, 1.0, 3.0, 4.0];
        assert!(quadric(&bad).is_err());
    }

    #[test]
    fn quadric_ii0_is_diagonal_in_curvature_line_coordinates() {
        let patch = quadric(&QuadricSpec::default()).unwrap();
        let lift = patch
            .lift
            .normalize_gauge(&crate::immersion::GaugeMode::Isothermal, StencilOrder::Two)
            .unwrap();
        let h = lift.chart.spacing[0].max(lift.chart.spacing[1]);
        let v = central_sphere_congruence(&lift, StencilOrder::Two).unwrap();
        let forms = split_connection(&v, StencilOrder::Two).unwrap();
        // off-diagonal component of II0 vanishes: curvature-line coordinates
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for &lin in forms.ii0[0].valid_indices().iter() {
            worst = worst.max(forms.ii0[0].values[lin][(0, 1)].abs());
            scale = scale.max(forms.ii0[0].values[lin].amax());
        }
        assert!(
            worst < (100.0 * h * h * scale.max(1.0)).max(1e-8),
            "II0 off-diagonal {worst:.3e} (scale {scale:.3e})"
        );
    }

    #[test]
    fn cyclide_data_satisfies_gcr() {
        for t in [0.0, 0.5, 3.0] {
            let cyclide = dupin_cyclide(t, 24);
            let rep = gcr_residuals(&cyclide.data, StencilOrder::Two).unwrap();
            assert!(
                rep.max() < 1e-10,
                "cyclide t={t}: residuals {:?}",
                rep.entries
            );
            let conn = assemble_connection(&cyclide.data).unwrap();
            let r = curvature_residual(&conn, StencilOrder::Two).unwrap();
            assert!(r < 1e-10, "cyclide t={t} curvature {r:.3e}");
            // constant commuting connection: theta constancy
            let comm = (&cyclide.theta[0] * &cyclide.theta[1]
                - &cyclide.theta[1] * &cyclide.theta[0])
                .amax();
            assert!(comm < 1e-10, "theta commutator {comm:.3e}");
        }
    }

    #[test]
    fn cyclide_willmore_iff_t_zero() {
        // (Mh^nabla)^*(II0) = <t/2 q0, II0>: zero iff t = 0. In the flat
        // gauge with constant fields the operator reduces to the nr0 pairing.
        let w_res = |t: f64| -> f64 {
            let cyclide = dupin_cyclide(t, 16);
            let (q_m, kappa) = match (&cyclide.data.mobius, &cyclide.data.sff) {
                (MobiusStructureField::Surface { q_m, .. }, SffData::Surface { kappa }) => {
                    (q_m, kappa)
                }
                _ => unreachable!(),
            };
            // constant fields: divergence terms vanish; residual is
            // <nr0, II0> = 8 Re(qM conj(kappa)) per the component pairing
            let q = q_m.values[0];
            let k = kappa[0].values[0];
            8.0 * (q * k.conj()).re.abs()
        };
        assert!(w_res(0.0) < 1e-14);
        assert!(w_res(1.0) > 0.5);
    }

    #[test]
    fn cyclide_theta_plane_signature_classifies_t() {
        // Gram determinant of the theta_2 plane: positive (spacelike) for
        // |t| < 2, near zero at |t| = 2, negative (timelike) for |t| > 2
        let gram_det = |t: f64| -> f64 {
            let cyclide = dupin_cyclide(t, 16);
            let theta = &cyclide.theta[1];
            // column space of the rank-2 generator
            let svd = theta.clone().svd(true, false);
            let u = svd.u.unwrap();
            let gf = crate::congruence::SphereCongruence::full_gram(2, 1);
            let b1: DVector<f64> = u.column(0).into();
            let b2: DVector<f64> = u.column(1).into();
            let g11 = (b1.transpose() * &gf * &b1)[(0, 0)];
            let g12 = (b1.transpose() * &gf * &b2)[(0, 0)];
            let g22 = (b2.transpose() * &gf * &b2)[(0, 0)];
            g11 * g22 - g12 * g12
        };
        assert!(gram_det(0.5) > 1e-6, "torus branch");
        assert!(gram_det(2.0).abs() < 1e-6, "cylinder branch");
        assert!(gram_det(3.0) < -1e-6, "cone branch");
    }

    #[test]
    fn guichard_fixture_satisfies_gcr() {
        let (chart, spec) = guichard_separable(17);
        let data = guichard_net(&chart, &spec, StencilOrder::Two).unwrap();
        let h = chart.spacing[0];
        let rep = gcr_residuals(&data, StencilOrder::Two).unwrap();
        for e in &rep.entries {
            assert!(
                e.value < 300.0 * h * h,
                "guichard {}: {:.3e} (h^2 = {:.3e})",
                e.name,
                e.value,
                h * h
            );
        }
        // violating input -> precondition error
        let mut bad = GuichardSpec {
            lambda: spec.lambda.clone(),
            signs: spec.signs,
        };
        bad.lambda[0] = GridField::constant(&chart, 2.0f64);
        assert!(matches!(
            guichard_net(&chart, &bad, StencilOrder::Two),
            Err(Error::GuichardViolated(_))
        ));
    }

    #[test]
    fn dupin_orthogonality_on_confocal_coordinates() {
        let a = [0.0, 1.0, 2.0, 3.0, 4.0];
        let lift = confocal_lift(&a, 13).unwrap();
        let h = lift.chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
        let res = dupin_orthogonal_check(&lift, StencilOrder::Two).unwrap();
        assert!(res < 200.0 * h * h, "dupin residual {res:.3e}");

        // cartesian coordinates of flat R^3: planes, residual at roundoff
        let sp = MinkowskiSpace::new(3);
        let chart = Chart::box_chart(3, -0.5, 0.5, 9);
        let flat = stereo_lift_of_map(&sp, &chart, |x| DVector::from_vec(x.to_vec()));
        let res = dupin_orthogonal_check(&flat, StencilOrder::Two).unwrap();
        assert!(res < 1e-10, "flat residual {res:.3e}");

        // sheared coordinates are rejected
        let sheared = stereo_lift_of_map(&sp, &chart, |x| {
            DVector::from_vec(vec![x[0] + 0.5 * x[1], x[1], x[2]])
        });
        assert!(matches!(
            dupin_orthogonal_check(&sheared, StencilOrder::Two),
            Err(Error::NonOrthogonal(_))
        ));
    }

    #[test]
    fn cmc_cylinder_eta_and_conserved_quantity() {
        let sp = MinkowskiSpace::new(3);
        let lift = cylinder_lift(&sp, 1.0, 32, 1.0);
        let h = lift.chart.spacing[0];
        let v = central_sphere_congruence(&lift, StencilOrder::Two).unwrap();
        let xi = GridField::new(
            lift.chart.clone(),
            (0..lift.chart.len()).map(|lin| v.xi_col(lin, 0)).collect::<Vec<_>>(),
        )
        .with_margin(v.valid_margin);
        let gauge = SpaceformGauge::euclidean(&sp);
        let gen_h =
            cmc_and_generalized_h(&lift, &gauge, &xi, &[1.0, -1.0], StencilOrder::Two).unwrap();
        assert!(
            gen_h.d_eta_residual < 30.0 * h * h,
            "cylinder d eta {:.3e}",
            gen_h.d_eta_residual
        );
        assert!(
            gen_h.conserved_residual < 50.0 * h * h,
            "conserved quantity residual {:.3e}",
            gen_h.conserved_residual
        );

        // catenoid (H = 0) also passes
        let cat = catenoid_lift(&sp, 32);
        let hc = cat.chart.spacing[0];
        let vc = central_sphere_congruence(&cat, StencilOrder::Two).unwrap();
        let xic = GridField::new(
            cat.chart.clone(),
            (0..cat.chart.len()).map(|lin| vc.xi_col(lin, 0)).collect::<Vec<_>>(),
        )
        .with_margin(vc.valid_margin);
        let gen_c =
            cmc_and_generalized_h(&cat, &gauge, &xic, &[0.5], StencilOrder::Two).unwrap();
        assert!(gen_c.d_eta_residual < 50.0 * hc * hc);

        // negative control: a torus of revolution is not CMC, so its
        // generalized-H form is not closed
        let torus = revolution_torus_lift(32, 2.0);
        let vt = central_sphere_congruence(&torus, StencilOrder::Two).unwrap();
        let xit = GridField::new(
            torus.chart.clone(),
            (0..torus.chart.len()).map(|lin| vt.xi_col(lin, 0)).collect::<Vec<_>>(),
        )
        .with_margin(vt.valid_margin);
        let gen_t =
            cmc_and_generalized_h(&torus, &gauge, &xit, &[1.0], StencilOrder::Two).unwrap();
        assert!(
            gen_t.d_eta_residual > 1e-2,
            "non-CMC torus must fail closedness: {:.3e}",
            gen_t.d_eta_residual
        );
    }

    #[test]
    fn cmc_fixtures_satisfy_the_spaceform_willmore_equation() {
        // with q = H^g(II0) the constrained Willmore equation reduces to
        // Delta H^g = 0; H^g is read off the frame as -<v_inf, xi>
        let sp = MinkowskiSpace::new(3);
        for (name, lift) in [
            ("cylinder", cylinder_lift(&sp, 1.0, 32, 1.0)),
            ("catenoid", catenoid_lift(&sp, 32)),
        ] {
            let h = lift.chart.spacing[0];
            let gauge = SpaceformGauge::euclidean(&sp);
            let normalized = lift
                .normalize_gauge(&crate::immersion::GaugeMode::Spaceform(gauge.clone()), StencilOrder::Two)
                .unwrap();
            let v = central_sphere_congruence(&lift, StencilOrder::Two).unwrap();
            // H^g in the central frame, using the spaceform-normalized lift
            // to fix the scale of sigma
            let scale = normalized
                .sigma
                .zip(&lift.sigma, |a, b| a.norm() / b.norm());
            let hg = GridField::new(
                lift.chart.clone(),
                (0..lift.chart.len())
                    .map(|lin| {
                        // xi rescales with 1/s when sigma rescales with s
                        -sp.inner(&gauge.v_inf, &v.xi_col(lin, 0)) / scale.values[lin]
                    })
                    .collect::<Vec<_>>(),
            )
            .with_margin(v.valid_margin);
            let lap = hg
                .partial(0, StencilOrder::Two)
                .unwrap()
                .partial(0, StencilOrder::Two)
                .unwrap()
                .zip(
                    &hg.partial(1, StencilOrder::Two)
                        .unwrap()
                        .partial(1, StencilOrder::Two)
                        .unwrap(),
                    |a, b| a + b,
                );
            let r = lap.residual_norm().unwrap();
            assert!(r < 100.0 * h * h, "{name}: Delta H^g = {r:.3e}");
        }
    }

    #[test]
    fn mobius_flat_forms_on_fixtures() {
        // cyclide: closed forms
        let cyclide = dupin_cyclide(0.5, 24);
        let forms = mobius_flat_forms(&cyclide.data, StencilOrder::Two).unwrap();
        for r in &forms.d_alpha_residuals {
            assert!(*r < 1e-10, "cyclide d alpha {r:.3e}");
        }

        // guichard: closed forms and the Lamé cross-check
        let (chart, spec) = guichard_separable(17);
        let h = chart.spacing[0];
        let data = guichard_net(&chart, &spec, StencilOrder::Two).unwrap();
        let forms = mobius_flat_forms(&data, StencilOrder::Two).unwrap();
        for r in &forms.d_alpha_residuals {
            assert!(*r < 500.0 * h * h, "guichard d alpha {r:.3e}");
        }
        let ident = guichard_identity_residual(&chart, &spec, StencilOrder::Two).unwrap();
        assert!(ident < 100.0 * h * h, "guichard identity residual {ident:.3e}");

        // non-Möbius-flat control: perturb the guichard II0
        let mut bad = data.clone();
        if let SffData::ThreeManifold { ii0 } = &mut bad.sff {
            ii0[0] = GridField::from_fn(&chart, |_, x| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![
                    1.0 + 0.3 * (3.0 * x[0]).sin(),
                    -0.5,
                    -0.5 - 0.3 * (3.0 * x[0]).sin(),
                ]))
            });
        }
        let forms = mobius_flat_forms(&bad, StencilOrder::Two).unwrap();
        assert!(
            forms.d_alpha_residuals.iter().cloned().fold(0.0, f64::max) > 1e-2,
            "corrupted fixture must fail closedness"
        );
    }
}
