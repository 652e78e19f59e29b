//! Drivers behind the `moebius-lab` binary: analyze, verify, reconstruct,
//! deform, align. Exit codes: 0 pass, 2 input-invariant failure, 3
//! GCR-residual failure, 4 integrability refusal.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use num_complex::Complex64;

use crate::bonnet::{align_mobius, reconstruct, standard_base_frame, IntegrateOptions, Transport};
use crate::chart::{convergence_order, GridField, StencilOrder};
use crate::error::{Error, Result};
use crate::families::{mobius_flat_family, t_transform, willmore_family};
use crate::gcr::{curvature_residual, extract_gcr, gcr_residuals, GcrData};
use crate::immersion::{GaugeMode, LightConeLift};
use crate::io;
use crate::minkowski::MinkowskiSpace;
use crate::mobius_structure::QuadraticDifferential;
use crate::zoo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_RESIDUAL: i32 = 3;
pub const EXIT_INTEGRABILITY: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "moebius-lab",
    about = "Conformal submanifold geometry on the light cone: invariants, GCR verification, Bonnet reconstruction, spectral deformations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonOpts {
    /// Residual tolerance; defaults to 20 h^order.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Finite-difference stencil order (2 or 4).
    #[arg(long, default_value_t = 2)]
    pub order: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ZooArgs {
    /// Zoo generator name: sphere | cylinder | clifford_torus | catenoid |
    /// revolution_torus | quadric | dupin_cyclide | guichard | circle | helix.
    #[arg(long)]
    pub zoo: Option<String>,
    /// Grid resolution, e.g. 64 or 64x64.
    #[arg(long, default_value = "32")]
    pub grid: String,
    /// Generator radius (cylinder, circle).
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Generator spectral parameter (dupin_cyclide).
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    /// Torus radius ratio R/r (revolution_torus).
    #[arg(long, default_value_t = 2.0)]
    pub ratio: f64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the GCR data of a lift (from a file or a zoo generator) and
    /// report the invariant checks.
    Analyze {
        #[command(flatten)]
        zoo: ZooArgs,
        /// Input lift JSON (alternative to --zoo).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output GCR JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Verify the GCR residuals of a data file (or a zoo fixture across a
    /// resolution ladder with --convergence).
    Verify {
        /// GCR JSON file to check.
        input: Option<PathBuf>,
        #[command(flatten)]
        zoo: ZooArgs,
        /// Comma-separated grid sizes for convergence-order estimates.
        #[arg(long)]
        convergence: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Integrate the flat connection of a data file and export the surface.
    Reconstruct {
        input: PathBuf,
        /// Mesh format: obj | csv.
        #[arg(long, default_value = "obj")]
        export: String,
        #[arg(long)]
        out: PathBuf,
        /// Pre-rotate by a random Möbius transformation: random:SEED.
        #[arg(long)]
        base_frame: Option<String>,
        /// Pre-rotation applied before stereoprojection (avoids the
        /// projection point), random:SEED.
        #[arg(long)]
        frame: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Apply a spectral deformation over a parameter list and verify each
    /// member.
    Deform {
        input: PathBuf,
        /// Family: isothermic | willmore | mobiusflat.
        #[arg(long)]
        family: String,
        /// Comma-separated parameter values.
        #[arg(long, allow_hyphen_values = true)]
        params: String,
        #[arg(long)]
        outdir: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Align two exported meshes by a Möbius transformation and report the
    /// residual distance.
    Align {
        mesh1: PathBuf,
        mesh2: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn parse_grid(s: &str) -> Result<usize> {
    let first = s.split(['x', 'X']).next().unwrap_or(s);
    first
        .parse::<usize>()
        .map_err(|e| Error::InvalidArgument(format!("bad grid '{s}': {e}")))
}

fn stencil(common: &CommonOpts) -> Result<StencilOrder> {
    StencilOrder::from_int(common.order)
}

/// A zoo source: either a lift to analyze or ready-made data.
pub enum ZooSource {
    Lift(LightConeLift),
    Data(GcrData),
}

pub fn zoo_source(args: &ZooArgs) -> Result<ZooSource> {
    let name = args
        .zoo
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no zoo generator named".into()))?;
    let samples = parse_grid(&args.grid)?;
    let sp3 = MinkowskiSpace::new(3);
    Ok(match name {
        "sphere" => ZooSource::Lift(zoo::sphere_lift(&sp3, samples, 1.0)),
        "cylinder" => ZooSource::Lift(zoo::cylinder_lift(&sp3, args.r, samples, 1.0)),
        "clifford_torus" => ZooSource::Lift(zoo::clifford_torus_lift(samples)),
        "catenoid" => ZooSource::Lift(zoo::catenoid_lift(&sp3, samples)),
        "revolution_torus" => ZooSource::Lift(zoo::revolution_torus_lift(samples, args.ratio)),
        "quadric" => {
            let spec = zoo::QuadricSpec {
                samples,
                ..Default::default()
            };
            ZooSource::Lift(
                zoo::quadric(&spec)?
                    .lift
                    .normalize_gauge(&GaugeMode::Isothermal, StencilOrder::Two)?,
            )
        }
        "dupin_cyclide" => ZooSource::Data(zoo::dupin_cyclide(args.t, samples).data),
        "guichard" => {
            let (chart, spec) = zoo::guichard_separable(samples.min(33));
            ZooSource::Data(zoo::guichard_net(&chart, &spec, StencilOrder::Two)?)
        }
        "circle" => ZooSource::Lift(zoo::circle_lift(&MinkowskiSpace::new(2), args.r, samples)),
        "helix" => ZooSource::Lift(zoo::helix_lift(&sp3, args.r, 0.5, samples)),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown zoo generator '{other}'"
            )))
        }
    })
}

fn default_tol(data_h: f64, order: StencilOrder, common: &CommonOpts) -> f64 {
    common.tol.unwrap_or(20.0 * data_h.powf(order.as_f64()))
}

fn print_error_json(err: &Error) {
    println!(
        "{}",
        serde_json::json!({ "status": "error", "message": err.to_string() })
    );
}

/// analyze: lift -> data + invariant report.
pub fn cmd_analyze(
    zoo_args: &ZooArgs,
    input: Option<&Path>,
    out: Option<&Path>,
    common: &CommonOpts,
) -> i32 {
    match analyze_inner(zoo_args, input, out, common) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_RESIDUAL
            }
        }
        Err(e) => {
            print_error_json(&e);
            EXIT_INVARIANT
        }
    }
}

fn analyze_inner(
    zoo_args: &ZooArgs,
    input: Option<&Path>,
    out: Option<&Path>,
    common: &CommonOpts,
) -> Result<bool> {
    let order = stencil(common)?;
    let source = match input {
        Some(path) => ZooSource::Lift(io::load_lift(path)?),
        None => zoo_source(zoo_args)?,
    };
    let (data, checks) = match source {
        ZooSource::Lift(lift) => {
            lift.validate(order)?;
            let lift = match lift.m() {
                1 => lift.normalize_gauge(&GaugeMode::Arclength, order)?,
                2 => lift.normalize_gauge(&GaugeMode::Isothermal, order)?,
                _ => lift,
            };
            let h: f64 = lift.chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
            let tol = default_tol(h, order, common);
            let v = crate::congruence::central_sphere_congruence(&lift, order)?;
            let forms = crate::congruence::split_connection(&v, order)?;
            let mut checks: Vec<(String, f64, f64)> = Vec::new();
            checks.push(("frame_gram_defect".into(), v.gram_defect(), 1e-9));
            checks.push((
                "enveloping_residual".into(),
                v.enveloping_residual(order)?,
                tol,
            ));
            let central_h = forms.h.map(|hv| hv.amax()).residual_norm()?;
            checks.push(("central_mean_curvature".into(), central_h, tol));
            if lift.m() == 2 {
                let mut worst: f64 = 0.0;
                for &lin in forms.ii0[0].valid_indices().iter() {
                    worst = worst.max(forms.ii0_norm_sq(lin).sqrt());
                }
                checks.push(("ii0_max".into(), worst, f64::INFINITY));
            }
            let data = extract_gcr(&lift, order)?;
            (data, checks)
        }
        ZooSource::Data(data) => (data, Vec::new()),
    };
    let h = data.h();
    let tol = default_tol(h, order, common);
    let report = gcr_residuals(&data, order)?;
    let mut pass = true;
    let mut json_checks = Vec::new();
    for (name, value, threshold) in &checks {
        let ok = value <= threshold;
        pass &= ok;
        println!(
            "{:<28} {:>12.4e}  {}",
            name,
            value,
            if ok { "PASS" } else { "FAIL" }
        );
        json_checks.push(serde_json::json!({ "name": name, "value": value, "pass": ok }));
    }
    for e in &report.entries {
        let ok = e.value <= tol;
        pass &= ok;
        println!(
            "{:<28} {:>12.4e}  {}",
            e.name,
            e.value,
            if ok { "PASS" } else { "FAIL" }
        );
        json_checks.push(serde_json::json!({ "name": e.name, "value": e.value, "pass": ok }));
    }
    if let Some(path) = out {
        io::save_gcr(path, &data)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "status": if pass { "pass" } else { "fail" },
            "tol": tol,
            "checks": json_checks,
        })
    );
    Ok(pass)
}

/// verify: residual report of a data file or convergence ladder of a zoo
/// fixture.
pub fn cmd_verify(
    input: Option<&Path>,
    zoo_args: &ZooArgs,
    convergence: Option<&str>,
    common: &CommonOpts,
) -> i32 {
    match verify_inner(input, zoo_args, convergence, common) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_RESIDUAL
            }
        }
        Err(e) => {
            print_error_json(&e);
            EXIT_INVARIANT
        }
    }
}

fn data_for_zoo(zoo_args: &ZooArgs, samples: usize, order: StencilOrder) -> Result<GcrData> {
    let mut args = zoo_args.clone();
    args.grid = samples.to_string();
    match zoo_source(&args)? {
        ZooSource::Lift(lift) => {
            let lift = match lift.m() {
                1 => lift.normalize_gauge(&GaugeMode::Arclength, order)?,
                2 => lift.normalize_gauge(&GaugeMode::Isothermal, order)?,
                _ => lift,
            };
            extract_gcr(&lift, order)
        }
        ZooSource::Data(data) => Ok(data),
    }
}

fn verify_inner(
    input: Option<&Path>,
    zoo_args: &ZooArgs,
    convergence: Option<&str>,
    common: &CommonOpts,
) -> Result<bool> {
    let order = stencil(common)?;
    if let Some(list) = convergence {
        // resolution ladder on a zoo fixture
        let sizes: Vec<usize> = list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidArgument(format!("bad size: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tables: Vec<(f64, crate::gcr::ResidualReport)> = Vec::new();
        for &s in &sizes {
            let data = data_for_zoo(zoo_args, s, order)?;
            let rep = gcr_residuals(&data, order)?;
            tables.push((data.h(), rep));
        }
        println!("residual convergence orders:");
        for e in &tables[0].1.entries {
            let pairs: Vec<(f64, f64)> = tables
                .iter()
                .map(|(h, rep)| (*h, rep.get(&e.name).unwrap_or(0.0).max(1e-300)))
                .collect();
            if pairs.iter().all(|&(_, r)| r < 1e-9) {
                println!("{:<24} identically satisfied (max {:.1e})", e.name, pairs[0].1);
            } else {
                let p = convergence_order(&pairs)?;
                println!("{:<24} order {:>6.2}", e.name, p);
            }
        }
        return Ok(true);
    }
    let data = match input {
        Some(path) => io::load_gcr(path)?,
        None => data_for_zoo(zoo_args, parse_grid(&zoo_args.grid)?, order)?,
    };
    let tol = default_tol(data.h(), order, common);
    let report = gcr_residuals(&data, order)?;
    let conn = crate::gcr::assemble_connection(&data)?;
    let curv = curvature_residual(&conn, order)?;
    let mut pass = true;
    let mut failing = Vec::new();
    for e in report
        .entries
        .iter()
        .chain(std::iter::once(&crate::gcr::ResidualEntry {
            name: "curvature".into(),
            value: curv,
        }))
    {
        let ok = e.value <= tol;
        pass &= ok;
        if !ok {
            failing.push(e.name.clone());
        }
        println!(
            "{:<24} {:>12.4e}  {}",
            e.name,
            e.value,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{}",
        serde_json::json!({
            "status": if pass { "pass" } else { "fail" },
            "tol": tol,
            "failing": failing,
        })
    );
    Ok(pass)
}

fn parse_random_frame(spec: &str, sp: &MinkowskiSpace) -> Result<nalgebra::DMatrix<f64>> {
    let seed = spec
        .strip_prefix("random:")
        .and_then(|s| s.parse::<u64>().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("expected random:SEED, got '{spec}'")))?;
    Ok(sp.random_mobius(seed, 0.5).matrix().clone())
}

/// reconstruct: integrate and export.
pub fn cmd_reconstruct(
    input: &Path,
    export: &str,
    out: &Path,
    base_frame: Option<&str>,
    frame: Option<&str>,
    common: &CommonOpts,
) -> i32 {
    match reconstruct_inner(input, export, out, base_frame, frame, common) {
        Ok(()) => EXIT_OK,
        Err(e @ Error::NotIntegrable { .. }) => {
            print_error_json(&e);
            EXIT_INTEGRABILITY
        }
        Err(e) => {
            print_error_json(&e);
            EXIT_INVARIANT
        }
    }
}

fn reconstruct_inner(
    input: &Path,
    export: &str,
    out: &Path,
    base_frame: Option<&str>,
    frame: Option<&str>,
    common: &CommonOpts,
) -> Result<()> {
    let order = stencil(common)?;
    let data = io::load_gcr(input)?;
    let sp = MinkowskiSpace::new(data.n);
    let opts = IntegrateOptions {
        flatness_threshold: common.tol.unwrap_or(1e-4),
        transport: Transport::Rk4,
        order,
    };
    let f0 = match base_frame {
        Some(spec) => Some(parse_random_frame(spec, &sp)? * standard_base_frame(data.m, data.k())),
        None => None,
    };
    let (mut lift, frame_field) = reconstruct(&data, f0.as_ref(), &opts)?;
    if let Some(spec) = frame {
        let t = parse_random_frame(spec, &sp)?;
        lift = lift.transformed(&t);
    }
    match export {
        "obj" => io::export_obj(out, &lift)?,
        "csv" => io::export_csv(out, &lift)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown export format '{other}'"
            )))
        }
    }
    println!(
        "{}",
        serde_json::json!({
            "status": "ok",
            "out": out.display().to_string(),
            "lorentz_defect": frame_field.lorentz_defect(),
        })
    );
    Ok(())
}

/// deform: write a directory of deformed data files (plus meshes when
/// integrable) and verify each member.
pub fn cmd_deform(
    input: &Path,
    family: &str,
    params: &str,
    outdir: &Path,
    common: &CommonOpts,
) -> i32 {
    match deform_inner(input, family, params, outdir, common) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_RESIDUAL
            }
        }
        Err(e) => {
            print_error_json(&e);
            EXIT_INVARIANT
        }
    }
}

fn deform_inner(
    input: &Path,
    family: &str,
    params: &str,
    outdir: &Path,
    common: &CommonOpts,
) -> Result<bool> {
    let order = stencil(common)?;
    let mut data = io::load_gcr(input)?;
    // isothermic deformations of codimension-one data can recover q on the
    // fly when the file does not carry one
    if data.q.is_none() && family == "isothermic" && data.m == 2 && data.k() == 1 {
        let det = crate::families::isothermic_detect(&data, order)?;
        if let (false, Some(q)) = (det.inconclusive, det.candidate_q) {
            data.q = Some(q);
        }
    }
    let values: Vec<f64> = params
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad parameter: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(outdir)?;
    let tol = default_tol(data.h(), order, common);
    let mut pass = true;
    for &t in &values {
        let deformed = match family {
            "isothermic" => t_transform(&data, t)?,
            "willmore" => willmore_family(&data, t)?,
            "mobiusflat" => mobius_flat_family(&data, t)?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown family '{other}'")))
            }
        };
        let rep = gcr_residuals(&deformed, order)?;
        let ok = rep.max() <= tol;
        pass &= ok;
        let stem = format!("{family}_{t:+.4}");
        io::save_gcr(&outdir.join(format!("{stem}.gcr.json")), &deformed)?;
        let opts = IntegrateOptions {
            flatness_threshold: common.tol.unwrap_or(1e-2).max(10.0 * tol),
            transport: Transport::Rk4,
            order,
        };
        let mesh = match reconstruct(&deformed, None, &opts) {
            Ok((lift, _)) if deformed.m == 2 && deformed.n == 3 => {
                let path = outdir.join(format!("{stem}.obj"));
                io::export_obj(&path, &lift).ok().map(|_| path)
            }
            Ok((lift, _)) => {
                let path = outdir.join(format!("{stem}.csv"));
                io::export_csv(&path, &lift).ok().map(|_| path)
            }
            Err(_) => None,
        };
        println!(
            "{}",
            serde_json::json!({
                "parameter": t,
                "max_residual": rep.max(),
                "pass": ok,
                "mesh": mesh.map(|p| p.display().to_string()),
            })
        );
    }
    Ok(pass)
}

/// align: Möbius-align two exported meshes.
pub fn cmd_align(mesh1: &Path, mesh2: &Path, common: &CommonOpts) -> i32 {
    match align_inner(mesh1, mesh2, common) {
        Ok(pass) => {
            if pass {
                EXIT_OK
            } else {
                EXIT_RESIDUAL
            }
        }
        Err(e) => {
            print_error_json(&e);
            EXIT_INVARIANT
        }
    }
}

fn align_inner(mesh1: &Path, mesh2: &Path, common: &CommonOpts) -> Result<bool> {
    let order = stencil(common)?;
    let lift1 = io::import_mesh(mesh1)?;
    let lift2 = io::import_mesh(mesh2)?;
    let lift1 = lift1.normalize_gauge(&GaugeMode::Isothermal, order)?;
    let lift2 = lift2.normalize_gauge(&GaugeMode::Isothermal, order)?;
    let align = align_mobius(&lift1, &lift2, order)?;
    let h: f64 = lift1.chart.spacing.iter().cloned().fold(f64::MIN, f64::max);
    let tol = common.tol.unwrap_or(100.0 * h * h);
    let pass = align.max_dist <= tol;
    println!(
        "{}",
        serde_json::json!({
            "status": if pass { "pass" } else { "fail" },
            "max_dist": align.max_dist,
            "tol": tol,
            "matrix": align.transform.matrix().iter().cloned().collect::<Vec<f64>>(),
        })
    );
    Ok(pass)
}

/// Entry point shared by the binary.
pub fn run(cli: Cli) -> i32 {
    crate::init_threads();
    match &cli.command {
        Command::Analyze {
            zoo,
            input,
            out,
            common,
        } => cmd_analyze(zoo, input.as_deref(), out.as_deref(), common),
        Command::Verify {
            input,
            zoo,
            convergence,
            common,
        } => cmd_verify(input.as_deref(), zoo, convergence.as_deref(), common),
        Command::Reconstruct {
            input,
            export,
            out,
            base_frame,
            frame,
            common,
        } => cmd_reconstruct(
            input,
            export,
            out,
            base_frame.as_deref(),
            frame.as_deref(),
            common,
        ),
        Command::Deform {
            input,
            family,
            params,
            outdir,
            common,
        } => cmd_deform(input, family, params, outdir, common),
        Command::Align {
            mesh1,
            mesh2,
            common,
        } => cmd_align(mesh1, mesh2, common),
    }
}

/// Helper for tests and examples: cylinder data with the closed-form
/// isothermic differential attached.
pub fn cylinder_data_with_q(samples: usize, order: StencilOrder) -> Result<GcrData> {
    let sp = MinkowskiSpace::new(3);
    let lift = zoo::cylinder_lift(&sp, 1.0, samples, 1.0);
    let mut data = extract_gcr(&lift, order)?;
    data.q = Some(QuadraticDifferential {
        q20: GridField::constant(&data.chart, Complex64::new(0.5, 0.0)),
    });
    Ok(data)
}

/// Helper: channel-type conormal eigenvalue vectors of a cone over a totally
/// umbilic cross-section, for the pointwise m >= 4 predicate.
pub fn cone_eigenvalues(m: usize, a: f64) -> Vec<DVector<f64>> {
    // m-1 coincident eigenvalues plus the balancing one (tracefree)
    let mut nus = vec![DVector::from_vec(vec![a]); m - 1];
    nus.push(DVector::from_vec(vec![-(m as f64 - 1.0) * a]));
    nus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zoo_sources_resolve() {
        for name in [
            "sphere",
            "cylinder",
            "clifford_torus",
            "catenoid",
            "revolution_torus",
            "quadric",
            "dupin_cyclide",
            "guichard",
            "circle",
            "helix",
        ] {
            let args = ZooArgs {
                zoo: Some(name.into()),
                grid: "16".into(),
                r: 1.0,
                t: 0.5,
                ratio: 2.0,
            };
            assert!(zoo_source(&args).is_ok(), "{name} must resolve");
        }
        let bad = ZooArgs {
            zoo: Some("nonsense".into()),
            grid: "16".into(),
            r: 1.0,
            t: 0.5,
            ratio: 2.0,
        };
        assert!(zoo_source(&bad).is_err());
    }

    #[test]
    fn cone_predicate_holds() {
        let nus = cone_eigenvalues(5, 0.7);
        assert!(crate::gcr::hg1_predicate(&nus, 1e-12));
    }
}
