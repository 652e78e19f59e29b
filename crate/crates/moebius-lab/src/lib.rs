//! Conformal submanifold geometry on the light-cone model of S^n.
//!
//! Points of the conformal n-sphere are null lines in R^{n+1,1}; a sampled
//! immersion is a grid of light-cone lifts. From such a lift the library
//! computes the Möbius-invariant data of the immersion (conformal metric,
//! Möbius structure, normal connection, tracefree second fundamental form),
//! verifies the Gauss-Codazzi-Ricci equations as finite-difference residuals,
//! reconstructs immersions from the data by integrating a flat so(n+1,1)
//! connection, and realizes the spectral deformations of isothermic,
//! constrained Willmore and Möbius-flat submanifolds.
//!
//! Entry points:
//! - [`minkowski`]: Lorentzian linear algebra, Möbius transformations,
//!   stereoprojection and space-form gauges.
//! - [`chart`]: structured grids and finite-difference calculus with
//!   convergence-order estimation.
//! - [`immersion`]: sampled light-cone lifts and first-order induced data.
//! - [`congruence`]: enveloped sphere congruences, fundamental forms, the
//!   central sphere congruence, curvature spheres, Willmore quantities.
//! - [`mobius_structure`]: schwarzians, Hill operators, developing maps,
//!   curve invariants.
//! - [`gcr`]: the primitive data record, connection assembly and residuals.
//! - [`bonnet`]: integration of flat connections to frames and immersions.
//! - [`families`]: isothermic / constrained Willmore / Möbius-flat
//!   deformations and their flat pencils.
//! - [`zoo`]: closed-form generators of test surfaces and curves.
//! - [`io`]: the GCR JSON file format and OBJ/CSV mesh export.
//! - [`commands`]: drivers behind the `moebius-lab` binary.

pub mod bonnet;
pub mod chart;
pub mod commands;
pub mod congruence;
pub mod error;
pub mod families;
pub mod gcr;
pub mod immersion;
pub mod io;
pub mod minkowski;
pub mod mobius_structure;
pub(crate) mod riemann;
pub mod zoo;

pub use error::{Error, Result};

use once_cell::sync::OnceCell;

static THREAD_POOL_INIT: OnceCell<()> = OnceCell::new();

/// Initialize the global rayon pool, honoring `MOEBIUS_LAB_THREADS`.
///
/// Called lazily by the operations that parallelize over grid nodes; safe to
/// call more than once.
pub fn init_threads() {
    THREAD_POOL_INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("MOEBIUS_LAB_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        }
    });
}
