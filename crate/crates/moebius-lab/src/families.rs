//! The three spectral deformations (isothermic T-transforms, constrained
//! Willmore, Möbius-flat) acting on GCR data, the associated flat connection
//! pencils, and the closed-form isothermic detection criterion.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chart::{partial_zbar, GridField, StencilOrder};
use crate::congruence::central_sphere_congruence;
use crate::error::{Error, Result};
use crate::gcr::{assemble_connection, curvature_residual, ConnectionField, GcrData, SffData};
use crate::immersion::LightConeLift;
use crate::minkowski::skew_pair;
use crate::mobius_structure::{MobiusStructureField, QuadraticDifferential};

/// Which spectral family a pencil realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PencilKind {
    Isothermic,
    Willmore,
    MobiusFlat,
}

/// A one-parameter pencil of connections: the base flat connection of the
/// data plus parameter-dependent nilpotent / off-diagonal pieces.
pub struct PencilSpec {
    pub kind: PencilKind,
    pub parameters: Vec<f64>,
    /// Ambient-trivialization matrices of the nilpotent 1-form (eta for the
    /// isothermic pencil, chi for the Möbius-flat pencil), one per axis.
    pub forms: Vec<GridField<DMatrix<f64>>>,
}

/// The isothermic T-transform: Ms -> Ms + r q, everything else unchanged.
pub fn t_transform(data: &GcrData, r: f64) -> Result<GcrData> {
    if data.m != 2 {
        return Err(Error::InvalidArgument("t_transform requires m = 2".into()));
    }
    let q = data
        .q
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("t_transform needs the quadratic differential q".into()))?;
    let mut out = data.clone();
    if let MobiusStructureField::Surface { q_m, .. } = &mut out.mobius {
        *q_m = q_m.zip(&q.q20, |a, b| a + r * b);
    }
    Ok(out)
}

/// The constrained-Willmore family: kappa -> e^{it} kappa,
/// qM -> qM + (e^{2it}-1)/2 q. A missing q acts as zero (plain Willmore).
pub fn willmore_family(data: &GcrData, t: f64) -> Result<GcrData> {
    if data.m != 2 {
        return Err(Error::InvalidArgument("willmore_family requires m = 2".into()));
    }
    let phase = Complex64::new(0.0, t).exp();
    let shift = 0.5 * (Complex64::new(0.0, 2.0 * t).exp() - 1.0);
    let mut out = data.clone();
    if let SffData::Surface { kappa } = &mut out.sff {
        for k in kappa.iter_mut() {
            *k = k.map(|c| c * phase);
        }
    }
    if let (MobiusStructureField::Surface { q_m, .. }, Some(q)) = (&mut out.mobius, &data.q) {
        *q_m = q_m.zip(&q.q20, |a, b| a + shift * b);
    }
    Ok(out)
}

/// The Möbius-flat family: Ms -> Ms + (t^2 - 1) q, II0 -> t II0. For m = 3
/// the CCYP is zero and only the second fundamental form scales.
pub fn mobius_flat_family(data: &GcrData, t: f64) -> Result<GcrData> {
    let mut out = data.clone();
    match (&mut out.sff, &mut out.mobius) {
        (SffData::Surface { kappa }, MobiusStructureField::Surface { q_m, .. }) => {
            for k in kappa.iter_mut() {
                *k = k.map(|c| c * t);
            }
            if let Some(q) = &data.q {
                *q_m = q_m.zip(&q.q20, |a, b| a + (t * t - 1.0) * b);
            }
            Ok(out)
        }
        (SffData::ThreeManifold { ii0 }, MobiusStructureField::ThreeManifold { .. }) => {
            if data.q.is_some() {
                return Err(Error::InvalidArgument(
                    "the m = 3 Möbius-flat family requires q = 0".into(),
                ));
            }
            for f in ii0.iter_mut() {
                *f = f.map(|s| s * t);
            }
            Ok(out)
        }
        _ => Err(Error::InvalidArgument(
            "mobius_flat_family requires m in {2, 3}".into(),
        )),
    }
}

/// Ambient-trivialization matrices of the isothermic 1-form:
/// eta_i = sigma skew (sum_j q_{ij} Y_j), realizing eta_X sigma = 0,
/// eta_X (d_Y sigma) = -q(X,Y) sigma, eta_X V in Lambda-perp cap V,
/// eta_X |V-perp = 0.
pub fn build_eta(
    lift: &LightConeLift,
    q: &QuadraticDifferential,
    order: StencilOrder,
) -> Result<PencilSpec> {
    if lift.m() != 2 {
        return Err(Error::InvalidArgument("build_eta requires m = 2".into()));
    }
    let v = central_sphere_congruence(lift, order)?;
    let sp = lift.space.clone();
    let chart = &lift.chart;
    let mut forms = Vec::with_capacity(2);
    for i in 0..2 {
        let vals: Vec<DMatrix<f64>> = (0..chart.len())
            .map(|lin| {
                let qc = q.components(lin);
                let sigma = v.sigma_col(lin);
                let mut w = DVector::zeros(sp.dim());
                for j in 0..2 {
                    w += v.y_col(lin, j) * qc[(i, j)];
                }
                skew_pair(&sp, &sigma, &w)
            })
            .collect();
        forms.push(GridField::new(chart.clone(), vals).with_margin(v.valid_margin));
    }
    let spec = PencilSpec {
        kind: PencilKind::Isothermic,
        parameters: vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
        forms,
    };
    check_nilpotency(&spec, &v)?;
    Ok(spec)
}

/// Blockwise nilpotency check of a pencil form against the congruence frame:
/// eta_i sigma = 0 and the pi-block (pairings with the frame) symmetric
/// tracefree, to 1e-12.
pub fn check_nilpotency(spec: &PencilSpec, v: &crate::congruence::SphereCongruence) -> Result<()> {
    let sp = &v.space;
    let chart = &v.chart;
    for lin in (0..chart.len()).step_by((chart.len() / 32).max(1)) {
        let sigma = v.sigma_col(lin);
        for eta in &spec.forms {
            let e = &eta.values[lin];
            if (e * &sigma).amax() > 1e-12 * e.amax().max(1.0) * sigma.amax().max(1.0) {
                return Err(Error::InvalidArgument(
                    "pencil form does not annihilate sigma".into(),
                ));
            }
        }
        // pi-block: M_{ij} = -<eta_i Y_j, Zhat> must be symmetric tracefree
        let zhat = v.zhat_col(lin);
        let mut m = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let y = v.y_col(lin, j);
                m[(i, j)] = -sp.inner(&(&spec.forms[i].values[lin] * y), &zhat);
            }
        }
        let scale = m.amax().max(1e-12);
        if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-10 * scale
            || (m[(0, 0)] + m[(1, 1)]).abs() > 1e-10 * scale
        {
            return Err(Error::InvalidArgument(
                "pencil form is not symmetric tracefree on the tangent block".into(),
            ));
        }
    }
    Ok(())
}

/// Curvature residual of d + r eta in the ambient trivialization, for each
/// pencil parameter: r (curl eta) + r^2 [eta_1, eta_2].
pub fn pencil_residual(spec: &PencilSpec, order: StencilOrder) -> Result<Vec<(f64, f64)>> {
    let d01 = spec.forms[1].partial(0, order)?;
    let d10 = spec.forms[0].partial(1, order)?;
    let curl = d01.zip(&d10, |a, b| a - b);
    let bracket = spec.forms[0].zip(&spec.forms[1], |a, b| a * b - b * a);
    let mut out = Vec::with_capacity(spec.parameters.len());
    for &r in &spec.parameters {
        let res = curl
            .zip(&bracket, |c, br| (c * r + br * (r * r)).amax())
            .residual_norm()?;
        out.push((r, res));
    }
    Ok(out)
}

/// Curvature residuals of the deformed-data connections over a parameter
/// grid (the family route to the same pencils).
pub fn family_pencil_residuals(
    data: &GcrData,
    kind: PencilKind,
    parameters: &[f64],
    order: StencilOrder,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(parameters.len());
    for &t in parameters {
        let deformed = match kind {
            PencilKind::Isothermic => t_transform(data, t)?,
            PencilKind::Willmore => willmore_family(data, t)?,
            PencilKind::MobiusFlat => mobius_flat_family(data, t)?,
        };
        let conn = assemble_connection(&deformed)?;
        out.push((t, curvature_residual(&conn, order)?));
    }
    Ok(out)
}

/// The Möbius-flat pencil Dhat + t S + (t^2 - 1) chi in frame coordinates,
/// with chi the nilpotent lift of a symmetric 2-form (for the Dupin cyclide:
/// the trace blocks (1+t)/2 dx1^2 + (1-t)/2 dx2^2 of the flat-connection
/// decomposition).
pub fn mobius_flat_pencil_residuals(
    data: &GcrData,
    chi_form: &GridField<DMatrix<f64>>,
    parameters: &[f64],
    order: StencilOrder,
) -> Result<Vec<(f64, f64)>> {
    let base = assemble_connection(data)?;
    let m = data.m;
    let k = data.k();
    let d = m + 2 + k;
    // split base into diagonal (Dhat) and off-diagonal (S) parts
    let split = |w: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        let mut diag = w.clone();
        let mut off = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                let is_off = (r < m + 2) != (c < m + 2);
                if is_off {
                    off[(r, c)] = w[(r, c)];
                    diag[(r, c)] = 0.0;
                }
            }
        }
        (diag, off)
    };
    // chi as frame-coordinate nilpotent matrices per axis
    let chi: Vec<GridField<DMatrix<f64>>> = (0..m)
        .map(|i| {
            chi_form.map(|form| {
                let mut w = DMatrix::zeros(d, d);
                for j in 0..m {
                    w[(0, 1 + j)] = -form[(i, j)];
                    w[(1 + j, m + 1)] = -form[(i, j)];
                }
                w
            })
        })
        .collect();
    let mut out = Vec::with_capacity(parameters.len());
    for &t in parameters {
        let omega: Vec<GridField<DMatrix<f64>>> = (0..m)
            .map(|i| {
                base.omega[i].zip(&chi[i], |w, c| {
                    let (diag, off) = split(w);
                    diag + off * t + c * (t * t - 1.0)
                })
            })
            .collect();
        let conn = ConnectionField {
            omega,
            gram: base.gram.clone(),
        };
        out.push((t, curvature_residual(&conn, order)?));
    }
    Ok(out)
}

/// Result of the closed-form isothermic test.
pub struct IsothermicDetection {
    /// Closedness residual of the criterion 1-form (max norm off the mask).
    pub residual: f64,
    /// Candidate quadratic differential where the criterion holds.
    pub candidate_q: Option<QuadraticDifferential>,
    /// Fraction of nodes masked as umbilic.
    pub masked_fraction: f64,
    /// Set when the umbilic mask dominates and nothing can be concluded.
    pub inconclusive: bool,
}

/// Codimension-one isothermic detection from data alone: a surface is
/// isothermic iff q = f Sh0 is holomorphic for a positive function f, i.e.
/// iff the real 1-form -2 Re[(dbar tau / tau) dzbar] is closed for
/// tau = kappa; integrating it yields log f and the candidate q.
pub fn isothermic_detect(data: &GcrData, order: StencilOrder) -> Result<IsothermicDetection> {
    if data.m != 2 || data.k() != 1 {
        return Err(Error::InvalidArgument(
            "isothermic_detect requires m = 2, codimension 1".into(),
        ));
    }
    let kappa = &data.kappa()[0];
    let chart = &data.chart;
    let max_abs = kappa
        .map(|c| c.norm())
        .residual_norm()
        .unwrap_or(0.0);
    let mask: Vec<bool> = kappa
        .values
        .iter()
        .map(|c| c.norm() < 1e-3 * max_abs.max(1e-300))
        .collect();
    let masked = mask.iter().filter(|&&b| b).count();
    let masked_fraction = masked as f64 / chart.len() as f64;
    if masked_fraction > 0.5 || max_abs < 1e-12 {
        return Ok(IsothermicDetection {
            residual: 0.0,
            candidate_q: None,
            masked_fraction,
            inconclusive: true,
        });
    }

    let dzb = partial_zbar(kappa, order)?;
    let w = dzb.zip(kappa, |d, k| {
        if k.norm() < 1e-300 {
            Complex64::new(0.0, 0.0)
        } else {
            d / k
        }
    });
    // mu = -2 Re(w) dx - 2 Im(w) dy; closedness residual off the mask
    let mu_x = w.map(|c| -2.0 * c.re);
    let mu_y = w.map(|c| -2.0 * c.im);
    let curl = mu_y
        .partial(0, order)?
        .zip(&mu_x.partial(1, order)?, |a, b| a - b);
    let mut residual: f64 = 0.0;
    for &lin in curl.valid_indices().iter() {
        if !mask[lin] {
            residual = residual.max(curl.values[lin].abs());
        }
    }

    // integrate mu from the base valid node to get log f, then q = f tau
    let margin = curl.valid_margin;
    let base: Vec<usize> = chart
        .shape
        .iter()
        .enumerate()
        .map(|(a, &s)| if chart.periodic[a] { 0 } else { margin.min(s - 1) })
        .collect();
    let mut logf = vec![0.0f64; chart.len()];
    // integrate along axis 0 through the base row, then axis 1 columns
    let (hx, hy) = (chart.spacing[0], chart.spacing[1]);
    let nx = chart.shape[0];
    let ny = chart.shape[1];
    let at = |i: usize, j: usize| chart.index(&[i, j]);
    let bi = base[0];
    for i in 1..nx {
        let (prev, cur) = (at((bi + i - 1) % nx, base[1]), at((bi + i) % nx, base[1]));
        logf[cur] = logf[prev] + 0.5 * hx * (mu_x.values[prev] + mu_x.values[cur]);
    }
    for i in 0..nx {
        for j in 1..ny {
            let (prev, cur) = (
                at((bi + i) % nx, (base[1] + j - 1) % ny),
                at((bi + i) % nx, (base[1] + j) % ny),
            );
            logf[cur] = logf[prev] + 0.5 * hy * (mu_y.values[prev] + mu_y.values[cur]);
        }
    }
    // normalize the gauge scale: median log f = 0
    let mut sorted = logf.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let q20 = GridField::new(
        chart.clone(),
        (0..chart.len())
            .map(|lin| kappa.values[lin] * (logf[lin] - median).exp())
            .collect::<Vec<_>>(),
    )
    .with_margin(kappa.valid_margin);

    Ok(IsothermicDetection {
        residual,
        candidate_q: Some(QuadraticDifferential { q20 }),
        masked_fraction,
        inconclusive: false,
    })
}
