//! Execution of each subcommand into tables, documents and a summary.

use polyloc_core::cocycle::{cocycle_free_energy, is_coboundary, log_partition, CocycleSpec};
use polyloc_core::deloc::{
    bound_rate, certificate, critical_h_estimate, fit_m, meander_distance, minimal_a, q0, CertificateOptions, HatHOptions,
};
use polyloc_core::env::{h_m, Environment, PeriodicCharges};
use polyloc_core::fluct::{ballot_check, conditioned_llt_error};
use polyloc_core::mc::mc_collect;
use polyloc_core::periodic::{
    build_kernel, critical_curve_point, free_energy, limit_kernel, regime_report, sign_parameters, Kernel, LimitKind,
};
use polyloc_core::stats::{self, delocalization_side_test, law_constant, localization_test, median, Side};
use polyloc_core::transfer;
use polyloc_core::walk::return_law;
use polyloc_core::{Error, Params, PeriodicModel, Regime, Result};
use serde_json::json;

use crate::config::*;
use crate::output::{num, opt_num, Artifacts, Table};

pub fn execute(command: &Command, master_seed: u64) -> Result<Artifacts> {
    match command {
        Command::Walk(a) => walk(a),
        Command::Transfer(a) => transfer(a, master_seed),
        Command::TestLoc(a) => test_loc(a, master_seed),
        Command::ProfileDistance(a) => profile_distance(a, master_seed),
        Command::CriticalCurve(a) => critical_curve(a, master_seed),
        Command::LowerBound(a) => lower_bound(a, master_seed),
        Command::Periodic(a) => periodic(a),
        Command::Cocycle(a) => cocycle(a),
        Command::LltCheck(a) => llt_check(a),
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Internal(e.to_string())
}

fn walk(a: &WalkArgs) -> Result<Artifacts> {
    let spec = a.spec()?;
    let law = return_law(spec, a.n_max)?;
    let mut table = Table::new("return_law.csv", &["n", "probability"]);
    for n in 1..=a.n_max {
        table.push(vec![n.to_string(), num(law.at(n))]);
    }
    let summary = json!({ "partial_sum": law.partial_sum(), "sigma2": spec.sigma2(), "c_k": spec.c_k() });
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary })
}

fn transfer(a: &TransferArgs, seed: u64) -> Result<Artifacts> {
    let params = Params::new(a.lam, a.h);
    let rows = mc_collect(a.samples, |i| {
        let charges = Environment::random(a.law.law(), seed, i).generate(1, a.size.max(1))?;
        let prof = transfer::run(&charges, params, a.size, a.window.window())?;
        Ok((prof.log_z0(), prof.log_z_free()))
    })?;
    let mut table = Table::new("log_z.csv", &["sample", "log_z_pinned", "log_z_free"]);
    for (i, (p, f)) in rows.iter().enumerate() {
        table.push(vec![i.to_string(), num(*p), num(*f)]);
    }
    let mean = rows.iter().map(|r| r.0).sum::<f64>() / rows.len().max(1) as f64;
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary: json!({ "mean_log_z_pinned": mean }) })
}

fn test_loc(a: &TestLocArgs, seed: u64) -> Result<Artifacts> {
    let law = a.law.law();
    let mut art = Artifacts::default();
    let report = match a.u_hat {
        Some(u) => {
            let side = match a.side {
                SideName::Localization => Side::Localization,
                SideName::Delocalization => Side::Delocalization,
            };
            stats::report(a.lam, a.h, a.size, a.samples, u, side, seed, law_constant(&law)?)
        }
        None => {
            let run = match a.side {
                SideName::Localization => localization_test,
                SideName::Delocalization => delocalization_side_test,
            };
            let (report, sample) = run(&law, a.lam, a.h, a.size, a.samples, seed, a.window.window())?;
            let mut table = Table::new("log_z.csv", &["sample", "log_z_pinned"]);
            for (i, v) in sample.iter().enumerate() {
                table.push(vec![i.to_string(), num(*v)]);
            }
            art.tables.push(table);
            report
        }
    };
    art.document("report.json", &report).map_err(io)?;
    art.summary = serde_json::to_value(&report).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(art)
}

fn profile_distance(a: &ProfileDistanceArgs, seed: u64) -> Result<Artifacts> {
    let params = Params::new(a.lam, a.h);
    let mut table = Table::new("meander.csv", &["size", "sample", "distance"]);
    let mut medians = Vec::new();
    for &size in &a.sizes {
        let d = mc_collect(a.samples, |i| {
            meander_distance(
                &Environment::random(polyloc_core::ChargeLaw::BinarySymmetric, seed, i).backward(),
                params,
                size,
                a.window.window(),
            )
        })?;
        for (i, v) in d.iter().enumerate() {
            table.push(vec![size.to_string(), i.to_string(), num(*v)]);
        }
        medians.push(json!({ "size": size, "median": median(&d) }));
    }
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary: json!({ "medians": medians }) })
}

fn critical_curve(a: &CriticalCurveArgs, seed: u64) -> Result<Artifacts> {
    let law = a.law.law();
    let opts = HatHOptions { tol: a.tol, threshold: a.threshold, window: a.window.window(), ..HatHOptions::default() };
    let mut table = Table::new("hat_h.csv", &["lam", "sample", "h_hat", "residual", "iterations", "saturated", "m_hat", "h_upper"]);
    let mut summary = Vec::new();
    for &lam in &a.lams {
        let upper = h_m(&law, 1.0, lam)?;
        let est = mc_collect(a.samples, |i| critical_h_estimate(&Environment::random(law.clone(), seed, i), lam, a.size, opts))?;
        let mut values = Vec::new();
        for (i, e) in est.iter().enumerate() {
            let m = if e.saturated.is_none() { fit_m(&law, lam, e.h).ok() } else { None };
            let saturated = e.saturated.map(|_| "low").unwrap_or_default();
            table.push(vec![
                num(lam),
                i.to_string(),
                num(e.h),
                num(e.residual),
                e.iterations.to_string(),
                saturated.into(),
                opt_num(m),
                num(upper),
            ]);
            values.push(e.h);
        }
        summary.push(json!({ "lam": lam, "median_h_hat": median(&values), "h_upper": upper }));
    }
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary: json!({ "curve": summary }) })
}

fn lower_bound(a: &LowerBoundArgs, seed: u64) -> Result<Artifacts> {
    let law = a.law.law();
    let params = Params::new(a.lam, a.h);
    let q = a.q.unwrap_or_else(|| q0(&law, a.lam));
    let opts = CertificateOptions { a: a.a, eps: a.eps, q: Some(q), cap: a.cap, transfer_cap: a.transfer_cap };
    let certs = mc_collect(a.samples, |i| certificate(&Environment::random(law.clone(), seed, i), params, opts))?;
    let mut table =
        Table::new("certificate.csv", &["sample", "found", "A", "ell", "T", "R", "log_z0_at_t", "z_method", "log_bound", "holds"]);
    let mut holds = 0;
    for (i, c) in certs.iter().enumerate() {
        match c {
            Some(c) => {
                holds += usize::from(c.holds);
                let method = serde_json::to_value(c.z_method).map_err(|e| Error::Internal(e.to_string()))?;
                table.push(vec![
                    i.to_string(),
                    "true".into(),
                    c.a.to_string(),
                    c.ell.to_string(),
                    c.t.to_string(),
                    c.r.to_string(),
                    num(c.log_z0_at_t),
                    method.as_str().unwrap_or_default().into(),
                    num(c.log_bound),
                    c.holds.to_string(),
                ]);
            }
            None => table.push(vec![
                i.to_string(),
                "false".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
            ]),
        }
    }
    let a_used = match a.a {
        Some(v) => v,
        None => minimal_a(&law, params, q, a.eps)?,
    };
    let summary = json!({
        "q": q,
        "bound_rate": bound_rate(&law, params, q)?,
        "A": a_used,
        "found": certs.iter().filter(|c| c.is_some()).count(),
        "holds": holds,
        "samples": a.samples,
    });
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary })
}

fn model(a: &ModelArgs) -> Result<PeriodicModel> {
    let walk = walk_spec(a.walk, a.p)?;
    match (&a.omega, a.beta0) {
        (Some(omega), None) => PeriodicModel::copolymer(omega, a.lam, a.h, walk),
        (None, Some(beta0)) => PeriodicModel::new(PeriodicCharges::pinning(a.period, beta0), walk),
        _ => Err(Error::InvalidArgument("give exactly one of omega (copolymer) and beta0 (pinning)".into())),
    }
}

fn kernel(a: &ModelArgs) -> Result<Kernel> {
    build_kernel(&model(a)?, a.x_cut)
}

fn periodic(action: &PeriodicAction) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match action {
        PeriodicAction::Delta(a) => {
            let m = model(a)?;
            let delta = m.delta()?;
            art.summary = json!({ "delta": delta, "regime": m.classify(delta), "pathological": m.is_pathological(delta) });
        }
        PeriodicAction::FreeEnergy(a) => {
            let fe = free_energy(&kernel(a)?)?;
            art.document("free_energy.json", &fe).map_err(io)?;
            art.summary = json!({ "F": fe.f, "mu": fe.mu });
        }
        PeriodicAction::Constants(a) => {
            let report = regime_report(&kernel(a)?)?;
            let mut table = Table::new("constants.csv", &["eta", "constant"]);
            for (eta, c) in &report.constants {
                table.push(vec![eta.to_string(), num(*c)]);
            }
            art.tables.push(table);
            art.document("regime.json", &report).map_err(io)?;
            art.summary = json!({ "delta": report.delta, "regime": report.regime, "F": report.f });
        }
        PeriodicAction::Kernels(a) => {
            let k = kernel(a)?;
            let delta = k.delta()?;
            let t = k.t();
            let kinds: Vec<LimitKind> = match k.model.classify(delta) {
                Regime::Localized => vec![LimitKind::Localized],
                Regime::Critical => vec![LimitKind::Critical],
                Regime::StrictlyDeloc => {
                    (0..t).flat_map(|eta| [LimitKind::DelocConstrained { eta }, LimitKind::DelocFree { eta }]).collect()
                }
            };
            let mut table = Table::new("kernels.csv", &["kind", "eta", "row", "truncated_mass", "estimated_mass", "exact_mass"]);
            let mut worst = 0.0f64;
            for kind in kinds {
                let lk = limit_kernel(&k, kind)?;
                worst = worst.max(lk.normalization_error());
                let (name, eta) = match kind {
                    LimitKind::Localized => ("localized", String::new()),
                    LimitKind::Critical => ("critical", String::new()),
                    LimitKind::DelocConstrained { eta } => ("deloc_constrained", eta.to_string()),
                    LimitKind::DelocFree { eta } => ("deloc_free", eta.to_string()),
                };
                for row in 0..t {
                    table.push(vec![
                        name.into(),
                        eta.clone(),
                        row.to_string(),
                        num(lk.truncated_mass[row]),
                        num(lk.estimated_mass[row]),
                        num(lk.exact_mass[row]),
                    ]);
                }
            }
            let signs = (0..t).map(|eta| sign_parameters(&k, eta)).collect::<Result<Vec<_>>>()?;
            art.tables.push(table);
            art.document("sign_parameters.json", &signs).map_err(io)?;
            art.summary = json!({ "delta": delta, "max_normalization_error": worst });
        }
        PeriodicAction::Curve(a) => {
            let walk = walk_spec(a.walk, a.p)?;
            let mut table = Table::new("curve.csv", &["lam", "h_c", "delta"]);
            let mut pts = Vec::new();
            for &lam in &a.lams {
                let p = critical_curve_point(&a.omega, walk, lam, a.tol)?;
                table.push(vec![num(p.lam), num(p.h_c), num(p.delta)]);
                pts.push((lam.ln(), p.h_c.ln()));
            }
            art.tables.push(table);
            art.summary = json!({ "log_log_slope": slope(&pts) });
        }
    }
    Ok(art)
}

/// Least-squares slope; `None` with fewer than two distinct abscissas.
fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn cocycle(a: &CocycleArgs) -> Result<Artifacts> {
    let spec = CocycleSpec::new(a.alphabet.clone(), a.nu.clone(), a.k, a.f.clone())?;
    let verdict = is_coboundary(&spec)?;
    let mut fe = Table::new("free_energy.csv", &["beta", "free_energy"]);
    let mut pz = Table::new("partition.csv", &["beta", "n", "log_z"]);
    for &beta in &a.betas {
        fe.push(vec![num(beta), num(cocycle_free_energy(&spec, beta)?)]);
        for n in 1..=a.n_max {
            pz.push(vec![num(beta), n.to_string(), num(log_partition(&spec, beta, n)?)]);
        }
    }
    let mut art = Artifacts { tables: vec![fe, pz], ..Artifacts::default() };
    art.document("verdict.json", &verdict).map_err(io)?;
    art.summary = serde_json::to_value(&verdict).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(art)
}

fn llt_check(a: &LltCheckArgs) -> Result<Artifacts> {
    let mut table = Table::new("llt.csv", &["n", "sup_error"]);
    for &n in &a.sizes {
        table.push(vec![n.to_string(), num(conditioned_llt_error(n)?)]);
    }
    let ballot = ballot_check(a.ballot_n_max)?;
    Ok(Artifacts { tables: vec![table], documents: Vec::new(), summary: json!({ "ballot_max_error": ballot }) })
}
