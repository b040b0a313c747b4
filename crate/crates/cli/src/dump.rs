//! CSV dumps of pointwise quantities on regular grids.

use std::io::Write;

use isotm_core::harmonic::{self, energy_density};
use isotm_core::iso::{self, flat_pde_residual, sphere_pde_residual};
use isotm_core::{RiemannianChart, Thresholds};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::scenario::{sampling_half_width, CheckName, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DumpWhat {
    Residual,
    EnergyDensity,
    NijenhuisNorm,
}

/// `g` equally spaced values from `−r` to `r` (the midpoint when `g = 1`).
fn axis(r: f64, g: usize) -> Vec<f64> {
    if g == 1 {
        return vec![0.0];
    }
    (0..g).map(|k| -r + 2.0 * r * k as f64 / (g - 1) as f64).collect()
}

/// All points of the product grid, last coordinate fastest.
fn grid_points(axes: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let mut out = vec![Vec::new()];
    for a in axes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                a.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

fn base_grid(s: &Scenario, chart: &RiemannianChart) -> Vec<DVector<f64>> {
    let a = axis(sampling_half_width(s), s.sampling.grid);
    grid_points(&vec![a; chart.dim()])
        .into_iter()
        .filter(|p| chart.contains(p))
        .collect()
}

fn tm_grid(s: &Scenario, chart: &RiemannianChart) -> Vec<(DVector<f64>, DVector<f64>)> {
    let n = chart.dim();
    let mut axes = vec![axis(sampling_half_width(s), s.sampling.grid); n];
    axes.extend(vec![axis(s.sampling.fiber_radius, s.sampling.grid); n]);
    grid_points(&axes)
        .into_iter()
        .map(|z| (z.rows(0, n).into_owned(), z.rows(n, n).into_owned()))
        .filter(|(x, _)| chart.contains(x))
        .collect()
}

/// Writes one row per grid point: coordinates, then the value.
pub fn dump_field<W: Write>(s: &Scenario, what: DumpWhat, out: W) -> Result<usize> {
    let m = s.metric()?;
    let chart = m.chart();
    let n = chart.dim();
    let mut w = csv::Writer::from_writer(out);
    let base_header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let fiber_header: Vec<String> = (1..=n).map(|i| format!("y{i}")).collect();
    let mut rows = 0;
    let mut write = |w: &mut csv::Writer<W>, coords: Vec<f64>, v: f64| -> Result<()> {
        let mut rec: Vec<String> = coords.iter().map(|c| format!("{c:e}")).collect();
        rec.push(format!("{v:e}"));
        w.write_record(&rec)?;
        rows += 1;
        Ok(())
    };
    let tm_header = || [base_header.clone(), fiber_header.clone(), vec!["value".to_string()]].concat();
    match what {
        DumpWhat::EnergyDensity => {
            let x = s
                .vector_field(chart)?
                .ok_or_else(|| CliError::Config { field: "field".into(), message: "energy_density needs a field".into() })?;
            w.write_record([base_header.clone(), vec!["value".into()]].concat())?;
            for p in base_grid(s, chart) {
                let e = energy_density(&m, &x, &p)?;
                write(&mut w, p.iter().copied().collect(), e)?;
            }
        }
        DumpWhat::NijenhuisNorm => {
            w.write_record(tm_header())?;
            for (x, y) in tm_grid(s, chart) {
                let at = isotm_core::TMPoint::new(x, y);
                let v = iso::nijenhuis_max(m.structure(), chart, &at)?;
                write(&mut w, at.flat().iter().copied().collect(), v)?;
            }
        }
        DumpWhat::Residual => {
            let which = s
                .checks
                .iter()
                .copied()
                .find(|c| matches!(c, CheckName::FlatPde | CheckName::SpherePde | CheckName::HarmonicResidual))
                .ok_or_else(|| CliError::Config {
                    field: "checks".into(),
                    message: "residual dump needs flat_pde, sphere_pde or harmonic_residual".into(),
                })?;
            if which == CheckName::HarmonicResidual {
                let x = s.vector_field(chart)?.expect("validated: harmonic_residual has a field");
                w.write_record([base_header.clone(), vec!["value".into()]].concat())?;
                let t = Thresholds::default();
                for p in base_grid(s, chart) {
                    let r = harmonic::harmonic_unit_residual(&m, &x, &p, &t)?.residual_norm;
                    write(&mut w, p.iter().copied().collect(), r)?;
                }
            } else {
                let zf = s.z_field(chart)?;
                w.write_record(tm_header())?;
                for (x, y) in tm_grid(s, chart) {
                    let r = if which == CheckName::FlatPde {
                        flat_pde_residual(&zf, &x, &y)?.iter().map(|c| c.norm()).fold(0.0, f64::max)
                    } else {
                        (0..n)
                            .map(|s0| sphere_pde_residual(&zf, chart, &x, &y, s0).map(|c| c.norm()))
                            .try_fold(0.0_f64, |a, r| r.map(|r| a.max(r)))?
                    };
                    write(&mut w, x.iter().chain(y.iter()).copied().collect(), r)?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::Io { path: "<csv>".into(), source: e })?;
    Ok(rows)
}
