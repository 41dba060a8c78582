use boselab::condensate::{bogoliubov_dispersion, gamma_star, kernel_positivity, CondensateParams};
use boselab::covariance::Variant;
use boselab::fock::{canonical_correlation, canonical_z_exact, canonical_z_trotter, grand_z_exact};
use boselab::hs::{estimate_zc, estimate_zg, MCEstimate};
use boselab::walks::{z2_transfer_onsite, z_walks_enumerate, z_walks_transfer, z_walks_transfer_identity_only};
use boselab::{Error, InteractionKind};

use crate::config::ExperimentConfig;
use crate::output::{Cell, Report, Table};
use crate::CliError;

/// Least-squares slope of `ln y` against `ln x`, skipping non-positive points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(num / den)
}

pub fn exact(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let z = canonical_z_exact(&e, &v, cfg.n, cfg.beta)?;
    let mut table = Table::new(&["x", "y", "corr_re", "corr_im", "z_exact"]);
    let sites = e.num_sites();
    for x in 0..sites {
        for y in 0..sites {
            let c = canonical_correlation(&e, &v, cfg.n, cfg.beta, x, y)?;
            table.push(vec![x.into(), y.into(), c.re.into(), c.im.into(), z.into()]);
        }
    }
    let mut report = Report::new(table);
    report.summary.push(("z_exact", z.into()));
    Ok(report)
}

pub fn trotter(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let mut table = Table::new(&["ntau", "z_ntau"]);
    for &nt in &cfg.ntau {
        table.push(vec![nt.into(), canonical_z_trotter(&e, &v, cfg.n, cfg.beta, nt)?.into()]);
    }
    Ok(Report::new(table))
}

pub fn converge(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let exact = canonical_z_exact(&e, &v, cfg.n, cfg.beta)?;
    let mut table = Table::new(&["ntau", "z_ntau", "z_exact", "abs_err"]);
    let mut errs = Vec::new();
    for &nt in &cfg.ntau {
        let z = canonical_z_trotter(&e, &v, cfg.n, cfg.beta, nt)?;
        errs.push((z - exact).abs());
        table.push(vec![nt.into(), z.into(), exact.into(), (z - exact).abs().into()]);
    }
    let xs: Vec<f64> = cfg.ntau.iter().map(|&n| n as f64).collect();
    let mut report = Report::new(table);
    report.summary.push(("slope", loglog_slope(&xs, &errs).into()));
    Ok(report)
}

/// Finite-`nτ` expectation of the canonical estimator where one is available,
/// otherwise the `nτ → ∞` value.
fn zc_reference(cfg: &ExperimentConfig, ntau: usize) -> Result<f64, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let onsite = matches!(cfg.model.interaction, Some(InteractionKind::Onsite(_)) | None);
    Ok(match cfg.variant {
        Variant::Q => z_walks_transfer(&e, &v, cfg.n, cfg.beta, ntau)?,
        Variant::Q2 if onsite => z2_transfer_onsite(&e, &v, cfg.n, cfg.beta, ntau, cfg.include_b)?,
        _ => canonical_z_exact(&e, &v, cfg.n, cfg.beta)?,
    })
}

fn mc_cells(ntau: usize, est: &MCEstimate, exact: Option<f64>) -> Vec<Cell> {
    vec![
        ntau.into(),
        est.nsamples.into(),
        est.mean.re.into(),
        est.mean.im.into(),
        est.stderr.into(),
        exact.into(),
        exact.map(|x| est.zscore(x)).into(),
    ]
}

pub fn hs_mc(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    if cfg.variant == Variant::K {
        return Err(CliError::Precondition("hs-mc needs a triangular variant; use `grand` for K".into()));
    }
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let mut table = Table::new(&["ntau", "nsamples", "mean_re", "mean_im", "stderr", "exact", "zscore"]);
    let mut failed = false;
    for &nt in &cfg.ntau {
        match estimate_zc(&e, &v, cfg.n, cfg.beta, nt, cfg.variant, cfg.include_b, &cfg.mc) {
            Ok(est) => match zc_reference(cfg, nt) {
                Ok(x) => table.push(mc_cells(nt, &est, Some(x))),
                Err(err) => table.push_failed(mc_cells(nt, &est, None), err.to_string()),
            },
            Err(err) => {
                failed = true;
                table.push_failed(vec![nt.into()], err.to_string());
            }
        }
    }
    let mut report = Report::new(table);
    report.failed = failed;
    Ok(report)
}

pub fn grand(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let em = cfg.model.kinetic_operator(cfg.model.mu + cfg.grand_mu)?;
    let v = cfg.model.interaction_operator()?;
    let exact = grand_z_exact(&e, &v, cfg.grand_mu, cfg.beta, cfg.ncut)?;
    let mut table =
        Table::new(&["ntau", "nsamples", "mean_re", "mean_im", "stderr", "exact", "zscore", "failures"]);
    let mut failed = false;
    for &nt in &cfg.ntau {
        match estimate_zg(&em, &v, cfg.beta, nt, &cfg.mc) {
            Ok(est) => {
                let mut cells = mc_cells(nt, &est, Some(exact.value));
                cells.push(est.failures.into());
                table.push(cells);
            }
            Err(err) => {
                failed = true;
                table.push_failed(vec![nt.into()], err.to_string());
            }
        }
    }
    let mut report = Report::new(table);
    report.summary.push(("z_exact", exact.value.into()));
    report.summary.push(("tail_estimate", exact.tail_estimate.into()));
    report.failed = failed;
    Ok(report)
}

pub fn walks(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let e = cfg.model.kinetic_operator(cfg.model.mu)?;
    let v = cfg.model.interaction_operator()?;
    let mut table = Table::new(&["ntau", "z_transfer", "z_enumerate", "z_identity_only"]);
    for &nt in &cfg.ntau {
        let transfer = z_walks_transfer(&e, &v, cfg.n, cfg.beta, nt)?;
        let enumerated = match z_walks_enumerate(&e, &v, cfg.n, cfg.beta, nt) {
            Ok(z) => Some(z),
            Err(Error::Scale(_)) => None,
            Err(err) => return Err(err.into()),
        };
        let identity = z_walks_transfer_identity_only(&e, &v, cfg.n, cfg.beta, nt)?;
        table.push(vec![nt.into(), transfer.into(), enumerated.into(), identity.into()]);
    }
    Ok(Report::new(table))
}

pub fn bogoliubov(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let b = &cfg.bogoliubov;
    let gamma = gamma_star(&CondensateParams::new(b.sigma, cfg.beta, b.m, b.v)?)?;
    let mut table = Table::new(&["kind", "w", "t", "p", "value"]);
    let steps = b.points.max(2) - 1;
    for &w in &b.w {
        for k in 0..=steps {
            let p = b.pmax * k as f64 / steps as f64;
            table.push(vec!["dispersion".into(), w.into(), Cell::Missing, p.into(), bogoliubov_dispersion(p, w).into()]);
        }
    }
    for &w in &b.w {
        for &t in &b.t {
            let r = kernel_positivity(w, t, b.d, b.grid, b.box_len)?;
            table.push(vec!["kernel_min".into(), w.into(), t.into(), Cell::Missing, r.min_value.into()]);
            table.push(vec!["kernel_origin".into(), w.into(), t.into(), Cell::Missing, r.origin_value.into()]);
            if let (Some(g), Some(rf)) = (r.poisson_grid, r.poisson_ref) {
                table.push(vec!["poisson_grid".into(), w.into(), t.into(), Cell::Missing, g.into()]);
                table.push(vec!["poisson_ref".into(), w.into(), t.into(), Cell::Missing, rf.into()]);
            }
        }
    }
    let mut report = Report::new(table);
    report.summary.push(("gamma_star", gamma.into()));
    Ok(report)
}
