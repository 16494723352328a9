//! One runner per subcommand. Each computes everything in memory and hands
//! back tables, audit verdicts and a JSON summary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use osgood_core::acm::{make_cells, series_condition, SeriesCondition};
use osgood_core::euler::{
    advance, fit_tied_constant, make_initial_vorticity, stability_bound, stability_experiment, EulerState,
    InitialVorticity, StabilityParams, StabilityRecord,
};
use osgood_core::fields::{random_band_limited, GridField};
use osgood_core::flow::{back_to_label, integrate_flow, separation_audit, transport_solve, SamplingBox, VelocityField};
use osgood_core::interp::interpolation_sides;
use osgood_core::modulus::{Modulus, PropagationContext};
use osgood_core::rng::stream;
use osgood_core::table::{Table, Value};
use osgood_core::Error;

use crate::config::*;

/// Round trip `R⁻¹(R(r)) = r` must hold to this relative accuracy.
pub const FIXED_POINT_TOL: f64 = 1e-8;
/// Relative change of the grid L² norm allowed under transport.
pub const TRANSPORT_L2_TOL: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Audit {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    /// `(file stem, table)`, written as `<stem>.csv`
    pub tables: Vec<(String, Table)>,
    pub audits: Vec<Audit>,
    pub results: Json,
}

pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> osgood_core::Result<Outcome> {
    match sub {
        Subcommand::Modulus => run_modulus(&cfg.modulus),
        Subcommand::Acm => run_acm(&cfg.acm),
        Subcommand::Flow => run_flow(&cfg.flow, cfg.seed),
        Subcommand::Interp => run_interp(&cfg.interp, cfg.seed),
        Subcommand::Euler => run_euler(&cfg.euler),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

// log-spaced radii in [r_min, m/2]
fn radii(r_min: f64, m: f64, points: usize) -> Vec<f64> {
    let (a, b) = (r_min.ln(), (0.5 * m).ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

// Finite JSON numbers only; serde_json would write NaN and ±∞ as null.
fn num(v: f64) -> Json {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn run_modulus(cfg: &ModulusConfig) -> osgood_core::Result<Outcome> {
    let phi = cfg.modulus()?;
    let rs = radii(cfg.r_min, phi.cutoff(), cfg.points);
    let mut out = Outcome::default();
    match cfg.check {
        ModulusCheck::ClosedForm => {
            let cf = phi.closed_form().ok_or_else(|| Error::Parameter(format!("no closed form for {}", phi.label())))?;
            let mut tab = Table::new(&["r", "R_pipeline", "R_closed", "rel_err"]);
            let mut worst: f64 = 0.0;
            for &r in &rs {
                let (a, b) = (phi.r_of(r)?, cf.r(r));
                let e = rel(a, b);
                worst = worst.max(e);
                tab.push(vec![r, a, b, e]);
            }
            let mut prop = Table::new(&["J", "r", "mu_pipeline", "mu_closed", "rel_err"]);
            let mut worst_mu: f64 = 0.0;
            let mut skipped = 0usize;
            for &j in &cfg.js {
                let ctx = PropagationContext::new(j)?;
                for &r in &rs {
                    match phi.propagated(ctx, r) {
                        Ok(a) => {
                            let b = cf.propagated(j, r);
                            let e = rel(a, b);
                            worst_mu = worst_mu.max(e);
                            prop.push(vec![j, r, a, b, e]);
                        }
                        Err(Error::Range(_)) => skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
            out.audits.push(Audit::new(
                "R_closed_form",
                worst <= cfg.tol,
                format!("max rel err {worst:.3e} over {} radii (tol {:.0e})", rs.len(), cfg.tol),
            ));
            out.audits.push(Audit::new(
                "mu_closed_form",
                worst_mu <= cfg.tol,
                format!("max rel err {worst_mu:.3e}; {skipped} (J, r) outside the range of mu_J"),
            ));
            out.results = json!({
                "modulus": phi.label(),
                "max_rel_err_R": num(worst),
                "max_rel_err_mu": num(worst_mu),
                "skipped": skipped,
            });
            out.tables.push(("closed_form".into(), tab));
            out.tables.push(("propagated".into(), prop));
        }
        ModulusCheck::FixedPoint => {
            let mut tab = Table::new(&["r", "R", "R_inv_R", "rel_err"]);
            let mut worst: f64 = 0.0;
            for &r in &rs {
                let y = phi.r_of(r)?;
                let back = phi.r_inverse(y)?;
                let e = rel(back, r);
                worst = worst.max(e);
                tab.push(vec![r, y, back, e]);
            }
            out.audits.push(Audit::new(
                "fixed_point",
                worst <= FIXED_POINT_TOL,
                format!("max |R⁻¹(R(r)) − r|/r = {worst:.3e} (tol {FIXED_POINT_TOL:.0e})"),
            ));
            out.results = json!({ "modulus": phi.label(), "max_rel_err": num(worst) });
            out.tables.push(("fixed_point".into(), tab));
        }
        ModulusCheck::Table => {
            let mut header = vec!["r".to_string(), "phi".into(), "M".into(), "R".into()];
            header.extend(cfg.js.iter().map(|j| format!("mu_J={j}")));
            let mut tab = Table::new(&header);
            let mut prev = 0.0;
            let mut monotone = true;
            for &r in &rs {
                let rr = phi.r_of(r)?;
                monotone &= rr >= prev;
                prev = rr;
                let mut row: Vec<Value> = vec![r.into(), phi.eval(r)?.into(), phi.osgood_m(r)?.into(), rr.into()];
                for &j in &cfg.js {
                    row.push(match phi.propagated(PropagationContext::new(j)?, r) {
                        Ok(v) => v.into(),
                        Err(Error::Range(_)) => "".into(),
                        Err(e) => return Err(e),
                    });
                }
                tab.push_values(row);
            }
            out.audits.push(Audit::new("R_monotone", monotone, format!("R nondecreasing over {} radii", rs.len())));
            out.results = json!({ "modulus": phi.label(), "cutoff": phi.cutoff(), "osgood": phi.is_osgood() });
            out.tables.push(("modulus_table".into(), tab));
        }
    }
    Ok(out)
}

fn run_acm(cfg: &AcmConfig) -> osgood_core::Result<Outcome> {
    let theta = cfg.growth().map_err(Error::Parameter)?;
    let cells = make_cells(&theta, cfg.n_cells, cfg.d, cfg.sigma)?;
    let which = match cfg.condition {
        ConditionChoice::SumLambda => SeriesCondition::SumLambda,
        ConditionChoice::GradLp => SeriesCondition::GradLp { p: cfg.p, constant: cfg.constant },
        ConditionChoice::InitSobolev => SeriesCondition::InitSobolev,
        ConditionChoice::Blowup => SeriesCondition::Blowup { s: cfg.s, t: cfg.t, c: cfg.c },
    };
    let rep = series_condition(&cells, which)?;
    let mut header = vec!["n", "ln_term", "ln_partial_sum", "partial_sum"];
    if rep.display_ln_partial_sums.is_some() {
        header.push("display_ln_partial_sum");
    }
    let mut series = Table::new(&header);
    for k in 0..rep.ln_terms.len() {
        let mut row = vec![(k + 1) as f64, rep.ln_terms[k], rep.ln_partial_sums[k], rep.partial_sums[k]];
        if let Some(d) = &rep.display_ln_partial_sums {
            row.push(d[k]);
        }
        series.push(row);
    }
    let packing = cells.check_packing();
    let mut out = Outcome::default();
    out.audits.push(Audit::new("packing", packing, format!("{} cells disjoint and inside the unit cube: {packing}", cells.len())));
    out.results = json!({
        "condition": rep.condition,
        "verdict": rep.verdict,
        "display_verdict": rep.display_verdict,
        "bound": rep.bound.map(num),
        "diverged_at": rep.diverged_at,
        "ln_total": rep.ln_partial_sums.last().copied().map(num),
    });
    out.tables.push(("cells".into(), cells.table(cfg.p, cfg.s, cfg.t, cfg.c)));
    out.tables.push(("series".into(), series));
    Ok(out)
}

fn flow_field(cfg: &FlowConfig) -> osgood_core::Result<(VelocityField, SamplingBox)> {
    Ok(match cfg.field {
        FieldChoice::Osgood => {
            let phi = cfg.modulus.modulus()?;
            let hi = phi.cutoff();
            (VelocityField::osgood_1d(phi, cfg.amplitude), SamplingBox::new(vec![1e-9], vec![hi])?)
        }
        FieldChoice::Shear => (VelocityField::shear(cfg.amplitude, 1.0), SamplingBox::new(vec![0.0; 2], vec![1.0; 2])?),
        FieldChoice::Rotation => (
            VelocityField::rotation(0.5).with_modulus(Modulus::lipschitz(), 1.0),
            SamplingBox::new(vec![0.1; 2], vec![0.9; 2])?,
        ),
    })
}

fn gaussian_blob(n: usize) -> osgood_core::Result<GridField> {
    let blob = GridField::from_fn(n, 1.0, |x, y| {
        let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
        (-r2 / (2.0 * 0.06f64.powi(2))).exp()
    })?;
    let mean = blob.mean();
    GridField::new(n, 1.0, blob.values().iter().map(|v| v - mean).collect())
}

fn run_flow(cfg: &FlowConfig, seed: u64) -> osgood_core::Result<Outcome> {
    let (u, bx) = flow_field(cfg)?;
    let t = cfg.t_final;
    let starts = cfg.starting_points();
    let traces = starts
        .par_iter()
        .map(|x0| {
            let tr = integrate_flow(&u, x0, t, cfg.tol)?;
            let back = back_to_label(&u, tr.final_position(), t, cfg.tol)?;
            let err = back.iter().zip(x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok((tr, err))
        })
        .collect::<osgood_core::Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let round_trip = traces.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    out.audits.push(Audit::new(
        "round_trip",
        round_trip <= 20.0 * cfg.tol,
        format!("max |φ⁻¹(φ(x)) − x| = {round_trip:.3e} over {} starts (≤ {:.0e})", starts.len(), 20.0 * cfg.tol),
    ));
    let phi = u.modulus.clone().expect("every CLI field declares a modulus");
    let j = u.seminorm_bound.unwrap_or(0.0) * t;
    let sep = separation_audit(&u, &phi, j, t, &bx, cfg.pairs, cfg.tol, &mut stream(seed, 1))?;
    out.audits.push(Audit::new(
        "separation",
        sep.pass,
        format!("{} violations over {} pairs ({} skipped), declared J = {j}", sep.violations, sep.pairs, sep.skipped),
    ));
    let mut summary = json!({
        "field": cfg.field,
        "modulus": phi.label(),
        "declared_j": num(j),
        "empirical_j": num(sep.empirical_j),
        "max_violation": num(sep.max_violation),
        "round_trip": num(round_trip),
        "steps": traces.iter().map(|(tr, _)| tr.steps()).collect::<Vec<_>>(),
    });
    for (k, (tr, _)) in traces.iter().enumerate() {
        out.tables.push((format!("trajectory_{k}"), tr.table()));
    }
    if cfg.dim() == 2 && cfg.transport_n > 0 {
        let theta0 = gaussian_blob(cfg.transport_n)?;
        let theta = transport_solve(&u, &theta0, t, cfg.tol)?;
        let drift = rel(theta.l2_sq().sqrt(), theta0.l2_sq().sqrt());
        out.audits.push(Audit::new(
            "transport_l2",
            drift <= TRANSPORT_L2_TOL,
            format!("relative L² change {drift:.3e} on a {0}x{0} grid (≤ {TRANSPORT_L2_TOL})", cfg.transport_n),
        ));
        summary["transport_l2_drift"] = num(drift);
        out.tables.push(("transported".into(), theta.table()));
    }
    out.results = summary;
    Ok(out)
}

fn run_interp(cfg: &InterpConfig, seed: u64) -> osgood_core::Result<Outcome> {
    let rows = (0..cfg.fields)
        .into_par_iter()
        .map(|k| {
            let f = random_band_limited(cfg.n_grid, 1.0, cfg.kmax, &mut stream(seed, k as u64))?;
            let mut rows = Vec::new();
            for &mu in &cfg.mus {
                for &eps in &cfg.epsilons {
                    rows.push((k, mu, interpolation_sides(&f, |r| mu.eval(r), eps)?));
                }
            }
            Ok(rows)
        })
        .collect::<osgood_core::Result<Vec<_>>>()?;
    let mut tab = Table::new(&["field", "mu", "epsilon", "lhs", "term_besov", "term_log", "implied_c"]);
    let (mut cmin, mut cmax) = (f64::INFINITY, 0.0f64);
    for (k, mu, r) in rows.into_iter().flatten() {
        cmin = cmin.min(r.implied_c);
        cmax = cmax.max(r.implied_c);
        tab.push_values(vec![
            (k as f64).into(),
            mu.label().into(),
            r.epsilon.into(),
            r.lhs.into(),
            r.term_besov.into(),
            r.term_log.into(),
            r.implied_c.into(),
        ]);
    }
    let ratio = cmax / cmin;
    let mut out = Outcome::default();
    out.audits.push(Audit::new(
        "uniform_constant",
        ratio.is_finite() && ratio <= cfg.max_ratio,
        format!("implied C in [{cmin:.4}, {cmax:.4}], ratio {ratio:.3} (≤ {})", cfg.max_ratio),
    ));
    out.results = json!({ "uniform_c": num(cmax), "min_c": num(cmin), "ratio": num(ratio) });
    out.tables.push(("interp".into(), tab));
    Ok(out)
}

/// The same profile moved by `delta` along the first axis.
pub fn shifted(kind: &InitialVorticity, delta: f64) -> InitialVorticity {
    let mut k = kind.clone();
    match &mut k {
        InitialVorticity::SmoothBlob { center, .. }
        | InitialVorticity::PatchMollified { center, .. }
        | InitialVorticity::LogSingular { center, .. } => center[0] += delta,
    }
    k
}

fn run_euler(cfg: &EulerConfig) -> osgood_core::Result<Outcome> {
    match cfg.mode {
        EulerMode::Conservation => euler_conservation(cfg),
        EulerMode::Stability => euler_stability(cfg),
    }
}

fn euler_conservation(cfg: &EulerConfig) -> osgood_core::Result<Outcome> {
    let w0 = make_initial_vorticity(&cfg.initial, cfg.n_grid, 1.0)?;
    let outputs = cfg.params.outputs;
    let per_output = ((cfg.t_end / outputs as f64) / cfg.dt).ceil().max(1.0) as usize;
    let h = cfg.t_end / (per_output * outputs) as f64;
    let mut state = EulerState::new(&w0, h)?;
    let (e0, z0) = (state.energy(), state.enstrophy());
    let mut tab = Table::new(&["t", "energy", "enstrophy", "max_speed"]);
    let (mut de, mut dz) = (0.0f64, 0.0f64);
    for k in 0..=outputs {
        if k > 0 {
            state = advance(&state, per_output)?;
        }
        de = de.max(rel(state.energy(), e0));
        dz = dz.max(rel(state.enstrophy(), z0));
        tab.push(vec![state.t(), state.energy(), state.enstrophy(), state.max_speed()]);
    }
    let mut out = Outcome::default();
    out.audits.push(Audit::new(
        "conservation",
        de <= cfg.drift_tol && dz <= cfg.drift_tol,
        format!("energy drift {de:.3e}, enstrophy drift {dz:.3e} (≤ {:.0e})", cfg.drift_tol),
    ));
    out.results = json!({ "dt": h, "energy_drift": num(de), "enstrophy_drift": num(dz) });
    out.tables.push(("conservation".into(), tab));
    Ok(out)
}

fn euler_stability(cfg: &EulerConfig) -> osgood_core::Result<Outcome> {
    let w1 = make_initial_vorticity(&cfg.initial, cfg.n_grid, 1.0)?;
    let recs = cfg
        .deltas
        .par_iter()
        .map(|&delta| {
            let w2 = make_initial_vorticity(&shifted(&cfg.initial, delta), cfg.n_grid, 1.0)?;
            stability_experiment(&w1, &w2, cfg.t_end, cfg.dt, &cfg.params)
        })
        .collect::<osgood_core::Result<Vec<StabilityRecord>>>()?;
    let fit = fit_tied_constant(&recs, 0, &cfg.params)?;
    let fitted = StabilityParams { c: fit.c, gamma: fit.gamma, ..cfg.params };
    let mut tab = Table::new(&["delta", "d0", "t", "dist_w2", "fitted_bound", "ratio"]);
    let mut worst = f64::NEG_INFINITY;
    let mut per_delta = Vec::new();
    for (r, &delta) in recs.iter().zip(&cfg.deltas) {
        let mut local = f64::NEG_INFINITY;
        for (k, &t) in r.times.iter().enumerate() {
            let b = stability_bound(&fitted, t, r.rate, r.reference_sq, r.initial_velocity_dist_sq)?;
            let w = r.vorticity_dist_sq[k];
            let ratio = if w == 0.0 { 0.0 } else { w / b };
            local = local.max(ratio);
            tab.push(vec![delta, r.initial_velocity_dist_sq, t, w, b, ratio]);
        }
        worst = worst.max(local);
        per_delta.push(json!({
            "delta": delta,
            "initial_velocity_dist_sq": num(r.initial_velocity_dist_sq),
            "rate": num(r.rate),
            "dt": r.dt,
            "max_ratio": num(local),
            "configured_bound_holds": r.bound_holds(),
            "velocity_bound_holds": r.velocity_bound_holds(),
        }));
    }
    let mut out = Outcome::default();
    out.audits.push(Audit::new(
        "fitted_bound",
        worst <= 1.0 + 1e-12,
        format!("C = {:.4}, γ = {:.4} fitted at t = 0; max dist/bound over all outputs {worst:.4}", fit.c, fit.gamma),
    ));
    out.results = json!({
        "fitted_c": num(fit.c),
        "fitted_gamma": num(fit.gamma),
        "max_ratio": num(worst),
        "runs": per_delta,
    });
    for (k, r) in recs.iter().enumerate() {
        out.tables.push((format!("stability_{k}"), r.table()));
    }
    out.tables.push(("fitted_bound".into(), tab));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_span_the_requested_range() {
        let rs = radii(1e-10, 1.0, 5);
        assert_eq!(rs.len(), 5);
        assert!(rel(rs[0], 1e-10) < 1e-14 && rel(rs[4], 0.5) < 1e-14);
        assert!(rs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn shift_moves_only_the_center() {
        let k = InitialVorticity::PatchMollified { center: [0.5, 0.5], radius: 0.1, amplitude: 1.0, edge: 0.01 };
        match shifted(&k, 0.01) {
            InitialVorticity::PatchMollified { center, radius, .. } => {
                assert_eq!(center, [0.51, 0.5]);
                assert_eq!(radius, 0.1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn closed_form_modulus_run_passes() {
        let out = run_modulus(&ModulusConfig::default()).unwrap();
        assert!(out.audits.iter().all(|a| a.pass), "{:?}", out.audits);
        assert_eq!(out.tables[0].1.header, ["r", "R_pipeline", "R_closed", "rel_err"]);
    }

    #[test]
    fn nonfinite_numbers_become_strings() {
        assert_eq!(num(f64::INFINITY), json!("inf"));
        assert_eq!(num(1.5), json!(1.5));
    }
}
