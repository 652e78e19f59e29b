//! Lorentzian linear algebra over R^{n+1,1}.
//!
//! The ambient space carries the signature-(n+1,1) form
//! G = diag(-1, +1, ..., +1) with the timelike axis first. The conformal
//! n-sphere is the projectivized light cone; we work with the positive cone
//! L+ = { sigma : <sigma,sigma> = 0, sigma != 0, <sigma,e0> < 0 }.
//!
//! Fixed basis conventions used by every module:
//! v_inf = e0 + e_{n+1}, v_0 = (e0 - e_{n+1})/2, so <v_0, v_inf> = -1 and
//! span{e1..en} is the euclidean R^n of the stereographic chart.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point or direction of R^{n+1,1}; index 0 is the timelike axis.
pub type LorentzVec = DVector<f64>;

/// Ambient Minkowski space R^{n+1,1} for the conformal n-sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct MinkowskiSpace {
    /// Sphere dimension n >= 1; vectors have n+2 components.
    pub n: usize,
}

impl MinkowskiSpace {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "sphere dimension must be >= 1");
        MinkowskiSpace { n }
    }

    /// Number of vector components, n+2.
    pub fn dim(&self) -> usize {
        self.n + 2
    }

    /// The form matrix G = diag(-1, +1, ..., +1).
    pub fn form_matrix(&self) -> DMatrix<f64> {
        let mut g = DMatrix::identity(self.dim(), self.dim());
        g[(0, 0)] = -1.0;
        g
    }

    /// Signature-(n+1,1) inner product u^T G v.
    pub fn inner(&self, u: &LorentzVec, v: &LorentzVec) -> f64 {
        debug_assert_eq!(u.len(), self.dim());
        debug_assert_eq!(v.len(), self.dim());
        let mut s = -u[0] * v[0];
        for i in 1..self.dim() {
            s += u[i] * v[i];
        }
        s
    }

    /// Checked variant of [`inner`](Self::inner) for public API boundaries.
    pub fn try_inner(&self, u: &LorentzVec, v: &LorentzVec) -> Result<f64> {
        if u.len() != self.dim() || v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} components, got {} and {}",
                self.dim(),
                u.len(),
                v.len()
            )));
        }
        Ok(self.inner(u, v))
    }

    /// Scale-aware null test: |<v,v>| < 1e-12 * ||v||^2.
    pub fn is_null(&self, v: &LorentzVec) -> bool {
        self.inner(v, v).abs() < 1e-12 * v.norm_squared().max(f64::MIN_POSITIVE)
    }

    /// Membership in the positive cone L+.
    pub fn in_positive_cone(&self, v: &LorentzVec) -> bool {
        self.is_null(v) && v.norm_squared() > 0.0 && v[0] > 0.0
    }

    /// Basis vector e_i.
    pub fn basis(&self, i: usize) -> LorentzVec {
        let mut v = DVector::zeros(self.dim());
        v[i] = 1.0;
        v
    }

    /// v_inf = e0 + e_{n+1}, the point at infinity of the euclidean chart.
    pub fn v_inf(&self) -> LorentzVec {
        let mut v = DVector::zeros(self.dim());
        v[0] = 1.0;
        v[self.n + 1] = 1.0;
        v
    }

    /// v_0 = (e0 - e_{n+1})/2, the lift of the chart origin; <v_0,v_inf> = -1.
    pub fn v_0(&self) -> LorentzVec {
        let mut v = DVector::zeros(self.dim());
        v[0] = 0.5;
        v[self.n + 1] = -0.5;
        v
    }

    /// Stereographic lift sigma = v + v_0 + 1/2 <v,v> v_inf of x in R^n.
    ///
    /// The image is null with <sigma, v_inf> = -1.
    pub fn stereo_lift(&self, x: &DVector<f64>) -> LorentzVec {
        assert_eq!(x.len(), self.n, "chart point must have n components");
        let mut s = self.v_0();
        let half_sq = 0.5 * x.norm_squared();
        for i in 0..self.n {
            s[i + 1] = x[i];
        }
        // v_inf contributes to components 0 and n+1
        s[0] += half_sq;
        s[self.n + 1] += half_sq;
        s
    }

    /// Inverse of [`stereo_lift`](Self::stereo_lift) on null lines not through
    /// v_inf: scale sigma so <sigma, v_inf> = -1 and read off the R^n part.
    pub fn stereo_project(&self, sigma: &LorentzVec) -> Result<DVector<f64>> {
        let vinf = self.v_inf();
        let pairing = self.inner(sigma, &vinf);
        if pairing.abs() < 1e-12 * sigma.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::PointAtInfinity);
        }
        let s = sigma * (-1.0 / pairing);
        Ok(DVector::from_fn(self.n, |i, _| s[i + 1]))
    }

    /// Chordal distance between the null lines of two positive-cone vectors:
    /// normalize each so <sigma, e0> = -1 and take the euclidean norm of the
    /// difference. Zero iff the lines coincide.
    pub fn projective_distance(&self, s1: &LorentzVec, s2: &LorentzVec) -> Result<f64> {
        for s in [s1, s2] {
            if !self.in_positive_cone(s) {
                return Err(Error::InvalidArgument(
                    "projective_distance requires positive-cone null vectors".into(),
                ));
            }
        }
        // <s, e0> = -s[0], so <s,e0> = -1 means s[0] = 1.
        let a = s1 / s1[0];
        let b = s2 / s2[0];
        Ok((a - b).norm())
    }

    /// Rescale sigma so that <gauge.v_inf, sigma> = -1.
    pub fn spaceform_normalize(&self, sigma: &LorentzVec, g: &SpaceformGauge) -> Result<LorentzVec> {
        let pairing = self.inner(sigma, &g.v_inf);
        if pairing.abs() < 1e-12 * sigma.norm().max(f64::MIN_POSITIVE) * g.v_inf.norm() {
            return Err(Error::PointAtInfinity);
        }
        Ok(sigma * (-1.0 / pairing))
    }

    /// Pseudo-random Möbius transformation exp(A), with A a G-antisymmetric
    /// matrix whose entries are bounded by `scale`. Deterministic in `seed`.
    pub fn random_mobius(&self, seed: u64, scale: f64) -> MobiusTransform {
        assert!(scale >= 0.0, "scale must be nonnegative");
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // A = G K with K skew-symmetric gives A^T G + G A = 0.
        let mut k = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = if scale == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-scale..=scale)
                };
                k[(i, j)] = v;
                k[(j, i)] = -v;
            }
        }
        let g = self.form_matrix();
        let a = &g * k;
        let t = reproject_lorentz(&expm_pade6(&a), &g);
        MobiusTransform { matrix: t }
    }

    /// Wrap a matrix as a Möbius transformation, checking the invariants:
    /// T^T G T = G to 1e-12 entrywise and time-orientation <T e0, e0> < 0.
    pub fn mobius_from_matrix(&self, t: DMatrix<f64>) -> Result<MobiusTransform> {
        let g = self.form_matrix();
        if t.nrows() != self.dim() || t.ncols() != self.dim() {
            return Err(Error::DimensionMismatch("Möbius matrix size".into()));
        }
        let defect = (t.transpose() * &g * &t - &g).amax();
        if defect > 1e-12 * t.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not G-orthogonal: defect {defect:.3e}"
            )));
        }
        // <T e0, e0> = -(T e0)[0]
        if t[(0, 0)] <= 0.0 {
            return Err(Error::InvalidArgument(
                "matrix does not preserve time orientation".into(),
            ));
        }
        Ok(MobiusTransform { matrix: t })
    }
}

/// A time-orientation-preserving Lorentz transformation of R^{n+1,1},
/// acting conformally on S^n.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusTransform {
    matrix: DMatrix<f64>,
}

impl MobiusTransform {
    pub fn identity(space: &MinkowskiSpace) -> Self {
        MobiusTransform {
            matrix: DMatrix::identity(space.dim(), space.dim()),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &LorentzVec) -> LorentzVec {
        &self.matrix * v
    }

    /// Composition self ∘ other (matrix product), re-projected so long chains
    /// stay machine-tight on the group.
    pub fn compose(&self, other: &MobiusTransform, space: &MinkowskiSpace) -> MobiusTransform {
        let g = space.form_matrix();
        MobiusTransform {
            matrix: reproject_lorentz(&(&self.matrix * &other.matrix), &g),
        }
    }

    pub fn inverse(&self, space: &MinkowskiSpace) -> MobiusTransform {
        // T^-1 = G T^T G for G-orthogonal T.
        let g = space.form_matrix();
        MobiusTransform {
            matrix: &g * self.matrix.transpose() * &g,
        }
    }

    /// Principal matrix logarithm; recovers the generator of exp.
    pub fn log(&self) -> DMatrix<f64> {
        logm(&self.matrix)
    }
}

/// Space-form gauge vector and its causal type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceformKind {
    /// <v_inf, v_inf> < 0: spherical geometry.
    Spherical,
    /// <v_inf, v_inf> = 0: euclidean geometry.
    Euclidean,
    /// <v_inf, v_inf> > 0: hyperbolic geometry.
    Hyperbolic,
}

/// A constant vector v_inf selecting a constant-curvature metric on (part of)
/// S^n via the conic section { sigma : <v_inf, sigma> = -1 }.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceformGauge {
    pub v_inf: LorentzVec,
    pub kind: SpaceformKind,
}

impl SpaceformGauge {
    /// Classify v_inf by the sign of <v_inf, v_inf> with null threshold
    /// 1e-12 ||v||^2.
    pub fn new(space: &MinkowskiSpace, v_inf: LorentzVec) -> Self {
        let sq = space.inner(&v_inf, &v_inf);
        let kind = if sq.abs() < 1e-12 * v_inf.norm_squared() {
            SpaceformKind::Euclidean
        } else if sq < 0.0 {
            SpaceformKind::Spherical
        } else {
            SpaceformKind::Hyperbolic
        };
        SpaceformGauge { v_inf, kind }
    }

    /// The flat gauge of the standard stereographic chart.
    pub fn euclidean(space: &MinkowskiSpace) -> Self {
        Self::new(space, space.v_inf())
    }
}

/// Matrix exponential by scaling-and-squaring with a degree-6 Padé
/// approximant.
pub fn expm_pade6(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let norm = a.amax() * d as f64;
    let mut s = 0u32;
    let mut scaled = a.clone();
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as u32;
        scaled /= 2f64.powi(s as i32);
    }
    // Padé(6,6) coefficients of exp.
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665_280.0,
    ];
    let id = DMatrix::identity(d, d);
    let mut pow = id.clone();
    let mut num = id.clone();
    let mut den = id.clone();
    for (j, &c) in C.iter().enumerate().skip(1) {
        pow = &pow * &scaled;
        num += &pow * c;
        if j % 2 == 0 {
            den += &pow * c;
        } else {
            den -= &pow * c;
        }
    }
    let mut e = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is invertible for scaled input");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Principal matrix logarithm by inverse scaling-and-squaring: repeated
/// Denman-Beavers square roots, then the Mercator series.
pub fn logm(t: &DMatrix<f64>) -> DMatrix<f64> {
    let d = t.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let mut a = t.clone();
    let mut k = 0u32;
    while (&a - &id).amax() > 0.25 && k < 60 {
        a = sqrtm_db(&a);
        k += 1;
    }
    let e = &a - &id;
    // log(I+E) = sum (-1)^{j+1} E^j / j
    let mut term = e.clone();
    let mut log = e.clone();
    for j in 2..200 {
        term = &term * &e;
        let contrib = &term * (if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64);
        log += &contrib;
        if term.amax() / (j as f64) < 1e-18 {
            break;
        }
    }
    log * 2f64.powi(k as i32)
}

fn sqrtm_db(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let mut y = a.clone();
    let mut z = id.clone();
    for _ in 0..60 {
        let yi = y.clone().try_inverse().expect("DB iterate invertible");
        let zi = z.clone().try_inverse().expect("DB iterate invertible");
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).amax();
        y = y_next;
        z = z_next;
        if delta < 1e-16 * y.amax().max(1.0) {
            break;
        }
    }
    y
}

/// Re-impose T^T G T = G by Newton steps of the polar-type projection in the
/// G-metric: T <- T (I - 1/2 G E) with E = T^T G T - G. Also used to keep
/// transported frames on the group during long integrations.
pub fn reproject_lorentz(t: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = t.clone();
    for _ in 0..4 {
        let e = out.transpose() * g * &out - g;
        if e.amax() < 1e-15 * out.amax().max(1.0) {
            break;
        }
        // G^{-1} = G for G = diag(+-1)
        out = &out * (DMatrix::identity(g.nrows(), g.ncols()) - g * e * 0.5);
    }
    out
}

/// Re-impose F^T G F = Gf for a frame with an arbitrary constant Gram matrix
/// Gf (used by the Bonnet transport where the abstract frame is not
/// G-orthonormal).
pub fn reproject_frame(f: &DMatrix<f64>, g: &DMatrix<f64>, gf: &DMatrix<f64>, gf_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = f.clone();
    for _ in 0..4 {
        let e = out.transpose() * g * &out - gf;
        if e.amax() < 1e-15 * out.amax().max(1.0) {
            break;
        }
        out = &out * (DMatrix::identity(gf.nrows(), gf.ncols()) - gf_inv * e * 0.5);
    }
    out
}

/// The skew pairing u ∆ w in so(n+1,1): (u ∆ w)(v) = <u,v> w - <w,v> u.
///
/// Returns the matrix u <g w>^T - w <g u>^T acting on column vectors, where
/// <g x> = G x.
pub fn skew_pair(space: &MinkowskiSpace, u: &LorentzVec, w: &LorentzVec) -> DMatrix<f64> {
    let g = space.form_matrix();
    let gu = &g * u;
    let gw = &g * w;
    w * gu.transpose() - u * gw.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space3() -> MinkowskiSpace {
        MinkowskiSpace::new(3)
    }

    #[test]
    fn basis_pairings() {
        let sp = space3();
        let e0 = sp.basis(0);
        assert_relative_eq!(sp.inner(&e0, &e0), -1.0);
        assert_relative_eq!(sp.inner(&sp.v_0(), &sp.v_inf()), -1.0);
        assert_relative_eq!(sp.inner(&sp.v_inf(), &sp.v_inf()), 0.0);
        assert_relative_eq!(sp.inner(&sp.v_0(), &sp.v_0()), 0.0);
    }

    #[test]
    fn inner_is_bilinear_and_symmetric() {
        let sp = space3();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u = DVector::from_fn(sp.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(sp.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let w = DVector::from_fn(sp.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            assert_relative_eq!(sp.inner(&u, &v), sp.inner(&v, &u), epsilon = 1e-12);
            assert_relative_eq!(
                sp.inner(&(&u * a + &v * b), &w),
                a * sp.inner(&u, &w) + b * sp.inner(&v, &w),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn stereo_lift_examples() {
        let sp = space3();
        let origin = DVector::zeros(3);
        assert_relative_eq!((sp.stereo_lift(&origin) - sp.v_0()).amax(), 0.0);

        // x = e1 -> e1 + v_0 + 1/2 v_inf
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let expected = sp.basis(1) + sp.v_0() + sp.v_inf() * 0.5;
        assert_relative_eq!((sp.stereo_lift(&x) - expected).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn stereo_round_trip_and_lift_invariants() {
        let sp = space3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vinf = sp.v_inf();
        for _ in 0..100 {
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
            let s = sp.stereo_lift(&x);
            // null and <sigma, v_inf> = -1 up to roundoff
            assert!(sp.inner(&s, &s).abs() < 1e-13 * s.norm_squared().max(1.0));
            assert_relative_eq!(sp.inner(&s, &vinf), -1.0, epsilon = 1e-13);
            assert!(sp.in_positive_cone(&s));
            let back = sp.stereo_project(&s).unwrap();
            assert_relative_eq!((back - x).amax(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stereo_project_examples() {
        let sp = space3();
        let z = sp.stereo_project(&sp.v_0()).unwrap();
        assert_relative_eq!(z.amax(), 0.0);
        let z2 = sp.stereo_project(&(sp.v_0() * 2.0)).unwrap();
        assert_relative_eq!(z2.amax(), 0.0);
        let s = sp.basis(1) + sp.v_0() + sp.v_inf() * 0.5;
        let x = sp.stereo_project(&s).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
        assert!(sp.stereo_project(&sp.v_inf()).is_err());
    }

    #[test]
    fn random_mobius_invariants() {
        let sp = space3();
        let g = sp.form_matrix();
        // scale 0 -> identity
        let t0 = sp.random_mobius(3, 0.0);
        assert_relative_eq!(
            (t0.matrix() - DMatrix::<f64>::identity(5, 5)).amax(),
            0.0,
            epsilon = 1e-15
        );
        for seed in 0..20u64 {
            let t = sp.random_mobius(seed, 0.7);
            let defect = (t.matrix().transpose() * &g * t.matrix() - &g).amax();
            assert!(defect < 1e-12, "defect {defect:.3e}");
            assert!(t.matrix()[(0, 0)] > 0.0, "time orientation");
        }
        // determinism
        let a = sp.random_mobius(42, 0.5);
        let b = sp.random_mobius(42, 0.5);
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn mobius_transforms_preserve_cone_and_compose() {
        let sp = space3();
        let g = sp.form_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10u64 {
            let t1 = sp.random_mobius(seed, 0.4);
            let t2 = sp.random_mobius(seed + 100, 0.4);
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let s = sp.stereo_lift(&x);
            let ts = t1.apply(&s);
            assert!(sp.is_null(&ts));
            assert!(sp.in_positive_cone(&ts));
            let t12 = t2.compose(&t1, &sp);
            let defect = (t12.matrix().transpose() * &g * t12.matrix() - &g).amax();
            assert!(defect < 1e-12);
            let inv = t1.inverse(&sp);
            let should_be_id = inv.compose(&t1, &sp);
            assert_relative_eq!(
                (should_be_id.matrix() - DMatrix::<f64>::identity(5, 5)).amax(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn exp_log_consistency_small_scale() {
        let sp = space3();
        let g = sp.form_matrix();
        for seed in 0..10u64 {
            let t = sp.random_mobius(seed, 0.1);
            let a = t.log();
            let t2 = expm_pade6(&a);
            assert!((t.matrix() - t2).amax() < 1e-10);
            // A must be G-antisymmetric
            assert!((a.transpose() * &g + &g * &a).amax() < 1e-10);
        }
        // log recovers a known small generator
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut k = DMatrix::<f64>::zeros(5, 5);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let v = rng.gen_range(-0.1..0.1);
                k[(i, j)] = v;
                k[(j, i)] = -v;
            }
        }
        let a = &g * k;
        let recovered = logm(&expm_pade6(&a));
        assert!((recovered - &a).amax() < 1e-10, "log must invert exp");
    }

    proptest::proptest! {
        #[test]
        fn mobius_group_closure(seed1 in 0u64..500, seed2 in 0u64..500, scale in 0.01f64..0.8) {
            let sp = MinkowskiSpace::new(3);
            let t = sp
                .random_mobius(seed1, scale)
                .compose(&sp.random_mobius(seed2, scale), &sp);
            let g = sp.form_matrix();
            proptest::prop_assert!(
                (t.matrix().transpose() * &g * t.matrix() - &g).amax() < 1e-11
            );
            let s = sp.stereo_lift(&DVector::from_vec(vec![0.3, -1.2, 2.0]));
            proptest::prop_assert!(sp.in_positive_cone(&t.apply(&s)));
        }
    }

    #[test]
    fn projective_distance_properties() {
        let sp = space3();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // same line
        let x = DVector::from_vec(vec![0.3, -0.4, 1.1]);
        let s = sp.stereo_lift(&x);
        assert_relative_eq!(sp.projective_distance(&s, &(&s * 3.0)).unwrap(), 0.0);

        // antipodal points of the unit round sphere have chordal distance 2:
        // the lift of p in S^3 subset R^4 is (1; p).
        let mut p = DVector::zeros(5);
        p[0] = 1.0;
        p[1] = 1.0;
        let mut q = DVector::zeros(5);
        q[0] = 1.0;
        q[1] = -1.0;
        assert_relative_eq!(sp.projective_distance(&p, &q).unwrap(), 2.0, epsilon = 1e-14);

        // triangle inequality on random triples
        for _ in 0..1000 {
            let a = sp.stereo_lift(&DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0)));
            let b = sp.stereo_lift(&DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0)));
            let c = sp.stereo_lift(&DVector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0)));
            let ab = sp.projective_distance(&a, &b).unwrap();
            let bc = sp.projective_distance(&b, &c).unwrap();
            let ac = sp.projective_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }

        // non-null input rejected
        assert!(sp.projective_distance(&sp.basis(1), &p).is_err());
    }

    #[test]
    fn spaceform_normalize_examples() {
        let sp = space3();
        let gauge = SpaceformGauge::euclidean(&sp);
        assert_eq!(gauge.kind, SpaceformKind::Euclidean);
        let n = sp.spaceform_normalize(&(sp.v_0() * 2.0), &gauge).unwrap();
        assert_relative_eq!((n - sp.v_0()).amax(), 0.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let s = sp.stereo_lift(&DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)));
            let ns = sp.spaceform_normalize(&s, &gauge).unwrap();
            assert_relative_eq!(sp.inner(&gauge.v_inf, &ns), -1.0, epsilon = 1e-13);
            // idempotence
            let ns2 = sp.spaceform_normalize(&ns, &gauge).unwrap();
            assert_relative_eq!((&ns2 - &ns).amax(), 0.0, epsilon = 1e-15);
        }

        // spherical and hyperbolic classification
        let sph = SpaceformGauge::new(&sp, sp.basis(0));
        assert_eq!(sph.kind, SpaceformKind::Spherical);
        let hyp = SpaceformGauge::new(&sp, sp.basis(1));
        assert_eq!(hyp.kind, SpaceformKind::Hyperbolic);
    }

    #[test]
    fn skew_pair_is_g_antisymmetric() {
        let sp = space3();
        let g = sp.form_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let u = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let w = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let m = skew_pair(&sp, &u, &w);
            assert!((m.transpose() * &g + &g * &m).amax() < 1e-12);
            // (u ∆ w)(v) = <u,v> w - <w,v> u
            let v = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = &m * &v;
            let rhs = &w * sp.inner(&u, &v) - &u * sp.inner(&w, &v);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
