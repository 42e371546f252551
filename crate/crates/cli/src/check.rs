//! The `check` command: identity selection, evaluation and the report table.

use std::fmt::Write;

use genham::dynamics::{vector_field_of, SystemSpec};
use genham::identities::{
    closure_residual, fundamental_identity_residual, jacobi_residual, measure_residual,
    IdentityReport,
};
use genham::sample::PRNG_NAME;
use genham::structure::reduce_k_to_2;
use serde::Serialize;

use crate::Failure;

pub const IDENTITIES: [&str; 5] = ["closure", "jacobi", "fundamental", "measure", "routes"];

pub fn select(requested: Option<&[String]>) -> Result<Vec<&'static str>, Failure> {
    let Some(requested) = requested else {
        return Ok(IDENTITIES.to_vec());
    };
    let mut out = Vec::new();
    for r in requested {
        let name = IDENTITIES.iter().find(|i| **i == r.trim()).ok_or_else(|| {
            Failure::Input(format!(
                "unknown identity `{r}` (known: {})",
                IDENTITIES.join(", ")
            ))
        })?;
        if !out.contains(name) {
            out.push(*name);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub identity: String,
    /// What was checked, e.g. "w" or "reduced J".
    pub target: String,
    pub status: Status,
    pub report: Option<IdentityReport>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub system: String,
    pub samples: usize,
    pub seed: u64,
    pub prng: &'static str,
    pub tolerance: f64,
    pub rows: Vec<Row>,
    pub pass: bool,
}

fn checked(identity: &str, target: &str, report: IdentityReport) -> Row {
    Row {
        identity: identity.into(),
        target: target.into(),
        status: if report.pass {
            Status::Pass
        } else {
            Status::Fail
        },
        report: Some(report),
        note: None,
    }
}

fn skipped(identity: &str, note: &str) -> Row {
    Row {
        identity: identity.into(),
        target: "-".into(),
        status: Status::Skip,
        report: None,
        note: Some(note.into()),
    }
}

/// Agreement of the two routes, or form-route consistency when only the form
/// is present, as an identity report.
fn routes(
    sys: &SystemSpec,
    points: &[Vec<f64>],
    tol: f64,
) -> Result<Option<(String, IdentityReport)>, Failure> {
    let both = sys.form_route().is_some() && sys.tensor_route().is_some();
    if sys.form_route().is_none() {
        return Ok(None);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for p in points {
        let r = match vector_field_of(sys, p) {
            Ok(r) => r,
            Err(genham::Error::Inconsistent { point, residual }) => {
                best = Some((residual, point));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let value = 0.0
            + match r.agreement_residual {
                Some(a) => a,
                None => r.solve.map_or(0.0, |s| s.residual),
            };
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, p.clone()));
        }
    }
    let (max, at) = best.unwrap_or((0.0, Vec::new()));
    let target = if both {
        "sign*X_tensor in HDW(w)"
    } else {
        "HDW(w) solve"
    };
    Ok(Some((
        target.into(),
        IdentityReport {
            identity: "routes".into(),
            max_residual: max,
            signed_value: max,
            argmax_point: at,
            argmax_indices: String::new(),
            detail: None,
            samples: points.len(),
            tolerance: tol,
            pass: max <= tol,
        },
    )))
}

pub fn run(
    sys: &SystemSpec,
    selected: &[&str],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckSummary, Failure> {
    if samples == 0 {
        return Err(Failure::Input("--samples must be positive".into()));
    }
    let points = sys.domain.sample_points(samples, seed);
    let params = &sys.params;
    let mut rows = Vec::new();
    for &identity in selected {
        let row = match identity {
            "closure" => match sys.form() {
                Some(w) => checked(identity, "w", closure_residual(w, &points, params, tol)?),
                None => skipped(identity, "no form route"),
            },
            "jacobi" => match sys.tensor() {
                Some(j) if j.degree() == 2 => {
                    checked(identity, "J", jacobi_residual(j, &points, params, tol)?)
                }
                Some(j) if !sys.casimirs.is_empty() && sys.casimirs.len() + 2 == j.degree() => {
                    let reduced = reduce_k_to_2(j, &sys.casimirs)?;
                    checked(
                        identity,
                        "reduced J",
                        jacobi_residual(&reduced, &points, params, tol)?,
                    )
                }
                Some(_) => skipped(identity, "needs a 2-vector or k-2 Casimirs"),
                None => skipped(identity, "no tensor route"),
            },
            "fundamental" => match sys.tensor() {
                Some(j) if j.degree() == 3 => checked(
                    identity,
                    "J",
                    fundamental_identity_residual(j, &points, params, tol)?,
                ),
                _ => skipped(identity, "needs a 3-vector"),
            },
            "measure" => match (sys.tensor(), &sys.measure_density) {
                (Some(j), Some(g)) => checked(
                    identity,
                    "div(gJ)",
                    measure_residual(j, g, &points, params, tol)?,
                ),
                (None, _) => skipped(identity, "no tensor route"),
                (_, None) => skipped(identity, "no measure density"),
            },
            "routes" => match routes(sys, &points, tol)? {
                Some((target, report)) => checked(identity, &target, report),
                None => skipped(identity, "no form route"),
            },
            _ => unreachable!("selection is validated"),
        };
        rows.push(row);
    }
    let pass = rows.iter().all(|r| !matches!(r.status, Status::Fail));
    Ok(CheckSummary {
        system: sys.name.clone(),
        samples,
        seed,
        prng: PRNG_NAME,
        tolerance: tol,
        rows,
        pass,
    })
}

impl CheckSummary {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:<26} {:<6} {:>12} {:>12}  argmax",
            "identity", "target", "status", "max|res|", "signed"
        );
        for r in &self.rows {
            let status = match r.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            match &r.report {
                Some(rep) => {
                    let point: Vec<String> =
                        rep.argmax_point.iter().map(|v| format!("{v:.6}")).collect();
                    let mut at = format!("x=({})", point.join(", "));
                    if !rep.argmax_indices.is_empty() {
                        at.push_str(&format!(" idx=({})", rep.argmax_indices));
                    }
                    if let Some(d) = &rep.detail {
                        at.push_str(&format!(" {d}"));
                    }
                    let _ = writeln!(
                        out,
                        "{:<12} {:<26} {:<6} {:>12.4e} {:>12.4e}  {at}",
                        r.identity, r.target, status, rep.max_residual, rep.signed_value
                    );
                }
                None => {
                    let note = r.note.as_deref().unwrap_or("");
                    let _ = writeln!(
                        out,
                        "{:<12} {:<26} {:<6} {:>12} {:>12}  {note}",
                        r.identity, r.target, status, "-", "-"
                    );
                }
            }
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}
