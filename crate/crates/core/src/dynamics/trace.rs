use serde::{Deserialize, Serialize};

/// Time series recorded along a coupled simulation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub times: Vec<f64>,
    /// Mean over particle indices of the squared distance between the two
    /// coupled systems (positions and velocities for kinetic runs).
    pub mean_sq_dist: Vec<f64>,
    pub second_moment_a: Vec<f64>,
    pub second_moment_b: Vec<f64>,
    /// Mean of `Q(p, v)` over particle differences, kinetic runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_form: Option<Vec<f64>>,
    /// Squared `W₂` between the two clouds (copies and law in
    /// chaos-propagation runs), when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2_sq: Option<Vec<f64>>,
    /// Second moment of the nonlinear law (reference system or exact flow).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law_moment: Option<Vec<f64>>,
}

impl CouplingTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_mean_sq_dist(&self) -> f64 {
        self.mean_sq_dist.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.mean_sq_dist.iter().all(|v| *v == 0.0)
    }
}

/// Replica mean of a set of traces with standard errors of each series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTrace {
    pub mean: CouplingTrace,
    pub se_mean_sq_dist: Vec<f64>,
    pub se_second_moment_a: Vec<f64>,
    pub se_second_moment_b: Vec<f64>,
    pub replicas: usize,
}

fn mean_and_se(series: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let r = series.len();
    let len = series[0].len();
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for k in 0..len {
        let m = series.iter().map(|s| s[k]).sum::<f64>() / r as f64;
        mean[k] = m;
        if r > 1 {
            let var = series.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (r - 1) as f64;
            se[k] = (var / r as f64).sqrt();
        }
    }
    (mean, se)
}

fn mean_of(
    traces: &[CouplingTrace],
    pick: impl Fn(&CouplingTrace) -> Option<&Vec<f64>>,
) -> Option<Vec<f64>> {
    let all: Option<Vec<&[f64]>> = traces
        .iter()
        .map(|t| pick(t).map(|v| v.as_slice()))
        .collect();
    all.map(|s| mean_and_se(&s).0)
}

/// Averages replica traces in the given order. All traces must share times.
pub fn aggregate_traces(traces: &[CouplingTrace]) -> Option<AggregatedTrace> {
    let first = traces.first()?;
    if traces.iter().any(|t| t.times != first.times) {
        return None;
    }
    let series = |f: fn(&CouplingTrace) -> &Vec<f64>| -> Vec<&[f64]> {
        traces.iter().map(|t| f(t).as_slice()).collect()
    };
    let (dist, se_dist) = mean_and_se(&series(|t| &t.mean_sq_dist));
    let (ma, se_a) = mean_and_se(&series(|t| &t.second_moment_a));
    let (mb, se_b) = mean_and_se(&series(|t| &t.second_moment_b));
    Some(AggregatedTrace {
        mean: CouplingTrace {
            times: first.times.clone(),
            mean_sq_dist: dist,
            second_moment_a: ma,
            second_moment_b: mb,
            q_form: mean_of(traces, |t| t.q_form.as_ref()),
            w2_sq: mean_of(traces, |t| t.w2_sq.as_ref()),
            law_moment: mean_of(traces, |t| t.law_moment.as_ref()),
        },
        se_mean_sq_dist: se_dist,
        se_second_moment_a: se_a,
        se_second_moment_b: se_b,
        replicas: traces.len(),
    })
}

/// Ordinary least squares of `ln y` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl LogLinearFit {
    /// Decay rate `−slope`.
    pub fn rate(&self) -> f64 {
        -self.slope
    }
}

/// Fits `ln y = intercept + slope · t` on samples with `t ∈ [lo, hi]` and
/// `y > 0`. Returns `None` with fewer than three usable points.
pub fn fit_log_linear(times: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, y)| **t >= lo && **t <= hi && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LogLinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: pts.len(),
    })
}

/// Gronwall envelope `m₀ e^{βt} + (α/β)(e^{βt} − 1)`, or `m₀ + αt` at `β = 0`.
pub fn moment_bound(m0: f64, alpha: f64, beta: f64, t: f64) -> f64 {
    if beta == 0.0 {
        m0 + alpha * t
    } else {
        let e = (beta * t).exp();
        m0 * e + alpha / beta * (e - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentBoundReport {
    /// `bound(t) − (moment(t) − 3 se(t))` at each recorded time.
    pub margins: Vec<f64>,
    pub holds: bool,
    /// `m₀ − α/β` when `β < 0`.
    pub stationary_bound: Option<f64>,
    pub sup_moment: f64,
    pub stationary_holds: Option<bool>,
}

/// Checks a recorded second-moment series against the Gronwall envelope,
/// allowing three standard errors of Monte-Carlo slack.
pub fn second_moment_bound_check(
    times: &[f64],
    moments: &[f64],
    se: Option<&[f64]>,
    alpha: f64,
    beta: f64,
) -> MomentBoundReport {
    let m0 = moments.first().copied().unwrap_or(0.0);
    let slack = |k: usize| se.map_or(0.0, |s| 3.0 * s[k]);
    let margins: Vec<f64> = times
        .iter()
        .zip(moments)
        .enumerate()
        .map(|(k, (t, m))| moment_bound(m0, alpha, beta, *t) - (m - slack(k)))
        .collect();
    let holds = margins.iter().all(|m| *m >= -1e-12 * m0.abs().max(1.0));
    let sup_moment = moments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let stationary_bound = (beta < 0.0).then(|| m0 - alpha / beta);
    let stationary_holds = stationary_bound.map(|b| {
        moments
            .iter()
            .enumerate()
            .all(|(k, m)| m - slack(k) <= b * (1.0 + 1e-12))
    });
    MomentBoundReport {
        margins,
        holds,
        stationary_bound,
        sup_moment,
        stationary_holds,
    }
}
