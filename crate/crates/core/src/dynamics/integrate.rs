use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use super::{Dynamics, SystemSpec};
use crate::error::{Error, Result};

/// Relative slack on the domain box before a state counts as having left it.
pub const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rk4,
    Rkf45 { rtol: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Rkf45 { .. } => "rkf45",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Truncation {
    pub t: f64,
    pub reason: String,
    /// The rejected state that triggered the stop.
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Hamiltonian values per accepted step, in the primary route's order.
    pub hamiltonians: Vec<Vec<f64>>,
    pub divergence: Vec<f64>,
    /// ‖ι_Xw + σ‖ per step, for systems with a form.
    pub hdw_residual: Option<Vec<f64>>,
    pub truncation: Option<Truncation>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Header `t,x1..xn,H1..Hm,div` followed by one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.hamiltonians.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("H{i}")));
        header.push("div".into());
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[i])];
            row.extend(self.states[i].iter().map(|v| fmt17(*v)));
            row.extend(self.hamiltonians[i].iter().map(|v| fmt17(*v)));
            row.push(fmt17(self.divergence[i]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip an f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integration stopped by an error; `partial` holds the accepted steps, or is
/// `None` when a precondition failed before the first step.
#[derive(Clone, Debug)]
pub struct IntegrationFailure {
    pub error: Error,
    pub partial: Option<Trajectory>,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.partial {
            Some(p) => write!(f, "{} (after {} accepted steps)", self.error, p.len()),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for IntegrationFailure {}

impl From<Error> for IntegrationFailure {
    fn from(error: Error) -> Self {
        IntegrationFailure {
            error,
            partial: None,
        }
    }
}

/// Raw integration output: times, states and an optional stop record.
pub type RawPath = (Vec<f64>, Vec<Vec<f64>>, Option<Truncation>);

/// Integrates ẋ = f(x) from t = 0. Steps whose end state fails `inside` are
/// rejected and recorded as a truncation. On an evaluation error the
/// accepted prefix is returned alongside it.
pub fn integrate_rhs<F, D>(
    f: F,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: Method,
    inside: D,
) -> std::result::Result<RawPath, (Error, RawPath)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    D: Fn(&[f64]) -> bool,
{
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    macro_rules! bail {
        ($e:expr) => {
            return Err(($e, (times, states, None)))
        };
    }
    let stop = |t: f64, state: Vec<f64>| Truncation {
        t,
        reason: "state left the domain box".into(),
        state,
    };
    match method {
        Method::Rk4 => {
            let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
            let mut x = x0.to_vec();
            // Kahan compensation for the state update keeps long runs off the
            // rounding floor.
            let mut carry = vec![0.0; x.len()];
            for i in 0..steps {
                let t0 = i as f64 * dt;
                let t1 = if i + 1 == steps {
                    t_end
                } else {
                    (i + 1) as f64 * dt
                };
                let incr = match rk4_increment(&f, &x, t1 - t0) {
                    Ok(v) => v,
                    Err(e) => bail!(e),
                };
                let mut next = x.clone();
                let mut next_carry = carry.clone();
                for a in 0..x.len() {
                    let y = incr[a] - carry[a];
                    next[a] = x[a] + y;
                    next_carry[a] = (next[a] - x[a]) - y;
                }
                if !inside(&next) {
                    return Ok((times, states, Some(stop(t1, next))));
                }
                x = next;
                carry = next_carry;
                times.push(t1);
                states.push(x.clone());
            }
        }
        Method::Rkf45 { rtol } => {
            let mut t = 0.0;
            let mut h = dt.min(t_end);
            let mut x = x0.to_vec();
            while t < t_end {
                let last = t + h >= t_end;
                let step = if last { t_end - t } else { h };
                let (next, err) = match rkf45_step(&f, &x, step) {
                    Ok(v) => v,
                    Err(e) => bail!(e),
                };
                let scale = |i: usize| rtol + rtol * x[i].abs().max(next[i].abs());
                let ratio = (0..x.len()).map(|i| err[i] / scale(i)).fold(0.0, f64::max);
                if ratio <= 1.0 {
                    if !inside(&next) {
                        // Shrink toward the boundary before giving up.
                        if step > 1e-6 * dt {
                            h = step / 4.0;
                            continue;
                        }
                        let tn = if last { t_end } else { t + step };
                        return Ok((times, states, Some(stop(tn, next))));
                    }
                    t = if last { t_end } else { t + step };
                    x = next;
                    times.push(t);
                    states.push(x.clone());
                }
                let factor = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (step * factor).min(dt);
                if h < 1e-14 * t.abs().max(1.0) {
                    bail!(Error::StepUnderflow { t });
                }
            }
        }
    }
    Ok((times, states, None))
}

fn axpy(x: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..x.len())
        .map(|i| x[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
        .collect()
}

/// x(t+h) − x(t) for one classical RK4 step.
fn rk4_increment<F: Fn(&[f64]) -> Result<Vec<f64>>>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = f(x)?;
    let k2 = f(&axpy(x, h, &[(0.5, &k1)]))?;
    let k3 = f(&axpy(x, h, &[(0.5, &k2)]))?;
    let k4 = f(&axpy(x, h, &[(1.0, &k3)]))?;
    Ok((0..x.len())
        .map(|i| h * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0)
        .collect())
}

/// Fehlberg 4(5); advances with the fifth-order solution.
fn rkf45_step<F: Fn(&[f64]) -> Result<Vec<f64>>>(
    f: &F,
    x: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k1 = f(x)?;
    let k2 = f(&axpy(x, h, &[(0.25, &k1)]))?;
    let k3 = f(&axpy(x, h, &[(3.0 / 32.0, &k1), (9.0 / 32.0, &k2)]))?;
    let k4 = f(&axpy(
        x,
        h,
        &[
            (1932.0 / 2197.0, &k1),
            (-7200.0 / 2197.0, &k2),
            (7296.0 / 2197.0, &k3),
        ],
    ))?;
    let k5 = f(&axpy(
        x,
        h,
        &[
            (439.0 / 216.0, &k1),
            (-8.0, &k2),
            (3680.0 / 513.0, &k3),
            (-845.0 / 4104.0, &k4),
        ],
    ))?;
    let k6 = f(&axpy(
        x,
        h,
        &[
            (-8.0 / 27.0, &k1),
            (2.0, &k2),
            (-3544.0 / 2565.0, &k3),
            (1859.0 / 4104.0, &k4),
            (-11.0 / 40.0, &k5),
        ],
    ))?;
    let fifth = axpy(
        x,
        h,
        &[
            (16.0 / 135.0, &k1),
            (6656.0 / 12825.0, &k3),
            (28561.0 / 56430.0, &k4),
            (-9.0 / 50.0, &k5),
            (2.0 / 55.0, &k6),
        ],
    );
    let fourth = axpy(
        x,
        h,
        &[
            (25.0 / 216.0, &k1),
            (1408.0 / 2565.0, &k3),
            (2197.0 / 4104.0, &k4),
            (-0.2, &k5),
        ],
    );
    let err = fifth
        .iter()
        .zip(&fourth)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok((fifth, err))
}

/// Integrates a system with diagnostics at every accepted step.
pub fn integrate(
    system: &SystemSpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    method: Method,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    if x0.len() != system.n {
        return Err(Error::Invalid(format!(
            "x0 has {} entries, system has n = {}",
            x0.len(),
            system.n
        ))
        .into());
    }
    if !system.domain.contains(x0) {
        return Err(Error::OutsideDomain { point: x0.to_vec() }.into());
    }
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Invalid(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        ))
        .into());
    }
    if let Method::Rkf45 { rtol } = method {
        if !(rtol > 0.0) {
            return Err(Error::Invalid(format!(
                "rkf45 needs a positive relative tolerance, got {rtol}"
            ))
            .into());
        }
    }
    let dynamics = Dynamics::new(system)?;
    let domain = &system.domain;
    let raw = integrate_rhs(
        |x| dynamics.eval(x),
        x0,
        t_end,
        dt,
        method,
        |x| domain.contains_within(x, DOMAIN_SLACK),
    );
    let (path, error) = match raw {
        Ok(p) => (p, None),
        Err((e, p)) => (p, Some(e)),
    };
    let trajectory = match diagnose(system, &dynamics, path) {
        Ok(t) => t,
        Err(e) => {
            return Err(IntegrationFailure {
                error: e,
                partial: None,
            })
        }
    };
    match error {
        None => Ok(trajectory),
        Some(error) => Err(IntegrationFailure {
            error,
            partial: Some(trajectory),
        }),
    }
}

fn diagnose(
    system: &SystemSpec,
    dynamics: &Dynamics,
    (times, states, truncation): RawPath,
) -> Result<Trajectory> {
    let params = &system.params;
    let hams = &system.primary.hamiltonians;
    let hamiltonians = crate::par::try_map(&states, |x| -> Result<Vec<f64>> {
        hams.iter().map(|h| Ok(h.eval(x, params)?)).collect()
    })?;
    let divergence = crate::par::try_map(&states, |x| dynamics.divergence(x))?;
    let hdw_residual = match system.form_route() {
        Some(route) => {
            let super::Structure::Form(w) = &route.structure else {
                unreachable!()
            };
            let sign = if std::ptr::eq(route, &system.primary) {
                1.0
            } else {
                system.route_sign
            };
            let from_tensor = dynamics.route() == "tensor";
            Some(crate::par::try_map(&states, |x| -> Result<f64> {
                let v = dynamics.eval(x)?;
                let v: Vec<f64> = if from_tensor {
                    v.iter().map(|c| sign * c).collect()
                } else {
                    v
                };
                let sigma =
                    crate::hdw::hamiltonian_form_at(&route.hamiltonians, system.n, x, params)?;
                Ok(w.eval(x, params)?.interior(&v)?.try_add(&sigma)?.norm())
            })?)
        }
        None => None,
    };
    Ok(Trajectory {
        times,
        states,
        hamiltonians,
        divergence,
        hdw_residual,
        truncation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Drift {
    pub name: String,
    pub initial: f64,
    /// max over steps of |I(t) − I(0)| / (1 + |I(0)|).
    pub max_relative_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub drifts: Vec<Drift>,
    /// Trapezoidal ∫ div X dt: the log-volume change of a propagated frame.
    pub divergence_integral: f64,
    pub steps: usize,
    pub truncated: bool,
}

impl ConservationReport {
    pub fn max_drift(&self) -> f64 {
        self.drifts
            .iter()
            .map(|d| d.max_relative_drift)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_drift() <= threshold
    }
}

/// Drift of every Hamiltonian and declared invariant, recomputed from states.
pub fn conservation_report(
    trajectory: &Trajectory,
    system: &SystemSpec,
) -> Result<ConservationReport> {
    let params = &system.params;
    let mut named: Vec<(String, &crate::expr::ScalarField)> = system
        .primary
        .hamiltonians
        .iter()
        .enumerate()
        .map(|(i, h)| {
            (
                system
                    .hamiltonian_names
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("H{}", i + 1)),
                h,
            )
        })
        .collect();
    for (name, f) in &system.invariants {
        if !named.iter().any(|(n, _)| n == name) {
            named.push((name.clone(), f));
        }
    }
    let mut drifts = Vec::with_capacity(named.len());
    for (name, f) in named {
        let values = crate::par::try_map(&trajectory.states, |x| -> Result<f64> {
            Ok(f.eval(x, params)?)
        })?;
        let initial = values.first().copied().unwrap_or(0.0);
        let max_relative_drift = values
            .iter()
            .map(|v| (v - initial).abs())
            .fold(0.0, f64::max)
            / (1.0 + initial.abs());
        drifts.push(Drift {
            name,
            initial,
            max_relative_drift,
        });
    }
    let divergence_integral = trajectory
        .times
        .windows(2)
        .zip(trajectory.divergence.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum();
    Ok(ConservationReport {
        drifts,
        divergence_integral,
        steps: trajectory.len().saturating_sub(1),
        truncated: trajectory.truncation.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_exponential_order() {
        let f = |x: &[f64]| Ok(vec![x[0]]);
        let err = |dt: f64| {
            let (_, s, _) = integrate_rhs(f, &[1.0], 1.0, dt, Method::Rk4, |_| true).unwrap();
            (s.last().unwrap()[0] - 1f64.exp()).abs()
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!((order - 4.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn rk4_hits_end_time_exactly() {
        let (t, s, tr) =
            integrate_rhs(|_| Ok(vec![1.0]), &[0.0], 0.25, 0.1, Method::Rk4, |_| true).unwrap();
        assert_eq!(t, vec![0.0, 0.1, 0.2, 0.25]);
        assert!((s[3][0] - 0.25).abs() < 1e-15);
        assert!(tr.is_none());
    }

    #[test]
    fn rkf45_meets_tolerance() {
        let f = |x: &[f64]| Ok(vec![x[1], -x[0]]);
        let (t, s, _) = integrate_rhs(
            f,
            &[0.0, 1.0],
            10.0,
            0.5,
            Method::Rkf45 { rtol: 1e-10 },
            |_| true,
        )
        .unwrap();
        assert_eq!(*t.last().unwrap(), 10.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!((s.last().unwrap()[0] - 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn domain_exit_truncates() {
        let (t, s, tr) = integrate_rhs(
            |_| Ok(vec![-1.0]),
            &[1.0],
            5.0,
            0.1,
            Method::Rk4,
            |x| x[0] > 0.05,
        )
        .unwrap();
        let tr = tr.unwrap();
        assert!(s.iter().all(|x| x[0] > 0.05));
        assert!((tr.t - 1.0).abs() < 1e-12 && *t.last().unwrap() < 1.0);
    }

    #[test]
    fn evaluation_error_keeps_prefix() {
        let f = |x: &[f64]| {
            if x[0] > 0.35 {
                Err(Error::Invalid("blow-up".into()))
            } else {
                Ok(vec![1.0])
            }
        };
        let (e, (t, _, _)) = integrate_rhs(f, &[0.0], 1.0, 0.1, Method::Rk4, |_| true).unwrap_err();
        assert!(matches!(e, Error::Invalid(_)));
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn csv_layout() {
        let tr = Trajectory {
            times: vec![0.0],
            states: vec![vec![1.0, 0.1]],
            hamiltonians: vec![vec![0.5]],
            divergence: vec![0.0],
            hdw_residual: None,
            truncation: None,
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,H1,div"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, 1.0, 0.1, 0.5, 0.0]);
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    }
}
