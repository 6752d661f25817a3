//! Relative errors, inverse-bond-dimension extrapolation and result tables.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

pub use crate::ansatz::parameter_count;

/// `|(E - E_ref) / E_ref|`.
pub fn relative_error(e: f64, e_ref: f64) -> Result<f64> {
    if e_ref == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(((e - e_ref) / e_ref).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    /// `(D, E)` pairs entering the fit, in increasing `D`.
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
    /// `E` at `1/D = 0`.
    pub intercept: f64,
    /// Root of the summed squared fit residuals.
    pub residual: f64,
}

/// Averages duplicate `D` entries (and their errors, if given) and keeps the three largest `D`.
fn select(points: &[(usize, f64, f64)]) -> Result<Vec<(usize, f64, f64)>> {
    let mut by_d: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for &(d, e, s) in points {
        if d == 0 || !e.is_finite() {
            return Err(Error::InvalidDimensions(format!("invalid point (D = {d}, E = {e})")));
        }
        let entry = by_d.entry(d).or_insert((0.0, 0.0, 0));
        entry.0 += e;
        entry.1 += s * s;
        entry.2 += 1;
    }
    if by_d.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: by_d.len(),
        });
    }
    let n = by_d.len();
    Ok(by_d
        .into_iter()
        .skip(n - 3)
        .map(|(d, (e, s2, k))| (d, e / k as f64, s2.sqrt() / k as f64))
        .collect())
}

fn fit(points: &[(usize, f64, f64)], weighted: bool) -> ExtrapolationResult {
    let w: Vec<f64> = points
        .iter()
        .map(|p| if weighted && p.2 > 0.0 { 1.0 / (p.2 * p.2) } else { 1.0 })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.0 as f64).collect();
    let sw: f64 = w.iter().sum();
    let xm = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = points.iter().zip(&w).map(|(p, w)| p.1 * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .zip(&w)
        .map(|((x, p), w)| w * (x - xm) * (p.1 - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residual = xs
        .iter()
        .zip(points)
        .map(|(x, p)| {
            let r = p.1 - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    ExtrapolationResult {
        points: points.iter().map(|p| (p.0, p.1)).collect(),
        slope,
        intercept,
        residual,
    }
}

/// Unweighted least-squares line `E = E_inf + a / D` through the three largest distinct `D`.
pub fn extrapolate_inverse_d(points: &[(usize, f64)]) -> Result<ExtrapolationResult> {
    let p: Vec<(usize, f64, f64)> = points.iter().map(|&(d, e)| (d, e, 0.0)).collect();
    Ok(fit(&select(&p)?, false))
}

/// As [`extrapolate_inverse_d`] with weights `1 / sigma^2` from `(D, E, sigma)` triples.
pub fn extrapolate_inverse_d_weighted(points: &[(usize, f64, f64)]) -> Result<ExtrapolationResult> {
    Ok(fit(&select(points)?, true))
}

/// One row of a bond-dimension scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n_sites: usize,
    pub block_size: usize,
    pub chi: usize,
    pub bond_dim: usize,
    pub parameters: usize,
    /// Total energy.
    pub energy: f64,
    pub std_error: f64,
    pub reference: Option<f64>,
}

impl ResultRow {
    pub fn relative_error(&self) -> Option<f64> {
        self.reference.and_then(|r| relative_error(self.energy, r).ok())
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "N,b,chi,D,parameters,energy,energy_per_site,std_error,reference,relative_error"
    )?;
    for r in rows {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.12e}"));
        writeln!(
            w,
            "{},{},{},{},{},{:.12e},{:.12e},{:.6e},{},{}",
            r.n_sites,
            r.block_size,
            r.chi,
            r.bond_dim,
            r.parameters,
            r.energy,
            r.energy / r.n_sites as f64,
            r.std_error,
            opt(r.reference),
            opt(r.relative_error())
        )?;
    }
    Ok(())
}

/// Plot series `x = 1/D`, `y = E/N`, with the fit line if one is given.
pub fn inverse_d_series(rows: &[ResultRow], fit: Option<&ExtrapolationResult>) -> serde_json::Value {
    let pts: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "x": 1.0 / r.bond_dim as f64,
                "y": r.energy / r.n_sites as f64,
                "yerr": r.std_error / r.n_sites as f64,
                "D": r.bond_dim,
            })
        })
        .collect();
    let n = rows.first().map_or(1, |r| r.n_sites) as f64;
    serde_json::json!({
        "points": pts,
        "fit": fit.map(|f| serde_json::json!({
            "slope_per_site": f.slope / n,
            "intercept_per_site": f.intercept / n,
            "residual": f.residual,
            "used_D": f.points.iter().map(|p| p.0).collect::<Vec<_>>(),
        })),
    })
}
