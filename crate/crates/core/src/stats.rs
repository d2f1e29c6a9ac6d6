//! Descriptive statistics, Student t and F tests, and the special functions
//! behind their p-values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const MAX_CF_ITER: usize = 300;
const CF_EPS: f64 = 1e-12;
const TINY: f64 = 1e-300;

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_CF_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain(format!("incomplete beta needs a, b > 0 (a={a}, b={b})")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("incomplete beta needs 0 <= x <= 1, got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// Student t CDF.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {df}")));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let x = df / (df + t * t);
    let tail = 0.5 * reg_incomplete_beta(df / 2.0, 0.5, x)?;
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided critical value t* with P(|T| <= t*) = confidence, by bisection.
pub fn t_quantile_two_sided(confidence: f64, df: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let target = 0.5 + confidence / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    while t_cdf(hi, df)? < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numeric("t quantile bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// F distribution survival function P(F' > f).
pub fn f_sf(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::domain("F degrees of freedom must be positive"));
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    reg_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sum_sq_dev(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Like `sum_sq_dev`, but a group whose samples all sit within a few ulp of
/// their mean counts as constant. Replicates that differ only in summation
/// order would otherwise yield t statistics of order 1e14.
fn test_sum_sq_dev(x: &[f64], m: f64) -> f64 {
    let floor = 8.0 * f64::EPSILON * m.abs();
    if x.iter().all(|v| (v - m).abs() <= floor) {
        0.0
    } else {
        sum_sq_dev(x, m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn descriptive(samples: &[f64], confidence: f64) -> Result<DescriptiveStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::domain(format!("descriptive statistics need n >= 2, got {n}")));
    }
    let m = mean(samples);
    let std = (sum_sq_dev(samples, m) / (n - 1) as f64).sqrt();
    let half = t_quantile_two_sided(confidence, (n - 1) as f64)? * std / (n as f64).sqrt();
    Ok(DescriptiveStats {
        n,
        mean: m,
        std,
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ci_low: m - half,
        ci_high: m + half,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

pub const ALPHA: f64 = 0.05;

/// Pooled-variance two-sample t-test (two-sided); mean difference is a − b.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::domain("t-test needs at least two samples per group"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let df = (na + nb - 2) as f64;
    let pooled = (test_sum_sq_dev(a, ma) + test_sum_sq_dev(b, mb)) / df;
    let diff = ma - mb;
    if pooled == 0.0 {
        if diff == 0.0 {
            return Ok(TTestResult {
                mean_difference: 0.0,
                t_statistic: 0.0,
                p_value: 1.0,
                significant: false,
            });
        }
        return Err(Error::DegenerateVariance(
            "zero pooled variance with different means".into(),
        ));
    }
    let se = (pooled * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    let t = diff / se;
    // two-sided tail directly, avoiding 1 - cdf cancellation
    let p = reg_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))?.clamp(0.0, 1.0);
    Ok(TTestResult {
        mean_difference: diff,
        t_statistic: t,
        p_value: p,
        significant: p < ALPHA,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub eta_squared: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way ANOVA.
pub fn anova(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::domain("ANOVA needs at least two groups of at least two samples"));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let ss_between: f64 = groups
        .iter()
        .map(|g| g.len() as f64 * (mean(g) - grand).powi(2))
        .sum();
    let ss_within: f64 = groups.iter().map(|g| test_sum_sq_dev(g, mean(g))).sum();
    let ss_total = ss_between + ss_within;
    let df_b = groups.len() - 1;
    let df_w = all.len() - groups.len();
    if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Ok(AnovaResult {
                f_statistic: 0.0,
                p_value: 1.0,
                eta_squared: 0.0,
                df_between: df_b,
                df_within: df_w,
            });
        }
        return Err(Error::DegenerateVariance(
            "zero within-group variance with different group means".into(),
        ));
    }
    let f = (ss_between / df_b as f64) / (ss_within / df_w as f64);
    Ok(AnovaResult {
        f_statistic: f,
        p_value: f_sf(f, df_b as f64, df_w as f64)?,
        eta_squared: ss_between / ss_total,
        df_between: df_b,
        df_within: df_w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSet {
    pub approach: String,
    pub samples: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Runs `run(seed)` for seeds `base..base+n` and gathers the per-approach
/// composites it returns. A failing run aborts and returns the error along
/// with what was collected before it.
pub fn replicate<F>(
    n: usize,
    base_seed: u64,
    mut run: F,
) -> std::result::Result<BTreeMap<String, ReplicationSet>, (Error, BTreeMap<String, ReplicationSet>)>
where
    F: FnMut(u64) -> Result<Vec<(String, f64)>>,
{
    let mut out: BTreeMap<String, ReplicationSet> = BTreeMap::new();
    for i in 0..n as u64 {
        let seed = base_seed + i;
        match run(seed) {
            Ok(results) => {
                for (approach, composite) in results {
                    let set = out.entry(approach.clone()).or_insert_with(|| ReplicationSet {
                        approach,
                        samples: Vec::new(),
                        seeds: Vec::new(),
                    });
                    set.samples.push(composite);
                    set.seeds.push(seed);
                }
            }
            Err(e) => return Err((e, out)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveRow {
    pub approach: String,
    #[serde(flatten)]
    pub stats: DescriptiveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub approach: String,
    pub baseline: String,
    /// `None` when the comparison has zero variance and different means.
    pub result: Option<TTestResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub descriptive: Vec<DescriptiveRow>,
    pub t_tests: Vec<TTestRow>,
    pub anova: Option<AnovaResult>,
    pub anova_note: Option<String>,
}

/// Splits degenerate-variance failures off into a note.
fn tolerate_degenerate<T>(r: Result<T>) -> Result<(Option<T>, Option<String>)> {
    match r {
        Ok(v) => Ok((Some(v), None)),
        Err(Error::DegenerateVariance(m)) => Ok((None, Some(m))),
        Err(e) => Err(e),
    }
}

/// Descriptive rows per approach, t-tests of every other approach against
/// `baseline` sorted by mean difference, and a one-way ANOVA across all.
pub fn validation_report(sets: &BTreeMap<String, ReplicationSet>, baseline: &str) -> Result<ValidationReport> {
    let base = sets
        .get(baseline)
        .ok_or_else(|| Error::domain(format!("baseline approach {baseline:?} missing")))?;
    let mut descriptive_rows = Vec::new();
    for (name, s) in sets {
        descriptive_rows.push(DescriptiveRow {
            approach: name.clone(),
            stats: descriptive(&s.samples, 0.95)?,
        });
    }
    let mut t_rows = Vec::new();
    for (name, s) in sets {
        if name == baseline {
            continue;
        }
        let (result, note) = tolerate_degenerate(t_test(&s.samples, &base.samples))?;
        t_rows.push(TTestRow {
            approach: name.clone(),
            baseline: baseline.to_string(),
            result,
            note,
        });
    }
    let diff = |r: &TTestRow, sets: &BTreeMap<String, ReplicationSet>| {
        r.result
            .as_ref()
            .map_or_else(|| mean(&sets[&r.approach].samples) - mean(&base.samples), |t| t.mean_difference)
    };
    t_rows.sort_by(|a, b| {
        diff(a, sets)
            .total_cmp(&diff(b, sets))
            .then_with(|| a.approach.cmp(&b.approach))
    });
    let groups: Vec<Vec<f64>> = sets.values().map(|s| s.samples.clone()).collect();
    let (anova, anova_note) = tolerate_degenerate(anova(&groups))?;
    Ok(ValidationReport {
        descriptive: descriptive_rows,
        t_tests: t_rows,
        anova,
        anova_note,
    })
}

impl ValidationReport {
    pub fn descriptive_csv(&self) -> String {
        let mut out = String::from("approach,mean,std,min,max,ci_low,ci_high\n");
        for r in &self.descriptive {
            let s = &r.stats;
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.approach, s.mean, s.std, s.min, s.max, s.ci_low, s.ci_high);
        }
        out
    }

    pub fn t_test_csv(&self) -> String {
        let mut out = String::from("approach,baseline,mean_difference,t_statistic,p_value,significant,note\n");
        for r in &self.t_tests {
            match &r.result {
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},",
                        r.approach, r.baseline, t.mean_difference, t.t_statistic, t.p_value, t.significant
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{},,,,,degenerate variance", r.approach, r.baseline);
                }
            }
        }
        out
    }

    pub fn anova_csv(&self) -> String {
        let mut out = String::from("f_statistic,p_value,eta_squared,df_between,df_within,note\n");
        match &self.anova {
            Some(a) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},",
                    a.f_statistic, a.p_value, a.eta_squared, a.df_between, a.df_within
                );
            }
            None => out.push_str(",,,,,degenerate variance\n"),
        }
        out
    }
}
