//! Score summaries and one-way ANOVA.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub avg: f64,
    /// Sample variance (n - 1 denominator); 0 for a single score.
    pub var: f64,
    /// Set when the variance is undefined and reported as 0.
    pub degenerate: bool,
}

/// Formats a number with at most two decimals, trailing zeros trimmed.
fn compact(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(min - {}, avg - {}, var - {})",
            compact(self.min),
            compact(self.avg),
            compact(self.var)
        )
    }
}

pub fn summarize(scores: &[f64]) -> Result<Summary> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no scores to summarize".into()));
    }
    let n = scores.len() as f64;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = scores.iter().sum::<f64>() / n;
    let (var, degenerate) = if scores.len() < 2 {
        (0.0, true)
    } else {
        (
            scores.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / (n - 1.0),
            false,
        )
    };
    Ok(Summary {
        min,
        avg,
        var,
        degenerate,
    })
}

/// Behaviour id to scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub groups: BTreeMap<u32, Vec<f64>>,
}

impl ScoreTable {
    /// Reads `behaviour_id,score` rows; a leading header row is allowed.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = ScoreTable::default();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != 2 {
                return Err(Error::InvalidRecord(format!(
                    "scores row {}: expected 2 columns, got {}",
                    i + 1,
                    row.len()
                )));
            }
            if i == 0 && &row[0] == "behaviour_id" {
                continue;
            }
            let id: u32 = row[0].parse().map_err(|_| {
                Error::InvalidRecord(format!(
                    "scores row {}: bad behaviour id `{}`",
                    i + 1,
                    &row[0]
                ))
            })?;
            let score: f64 = row[1]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| {
                    Error::InvalidRecord(format!("scores row {}: bad score `{}`", i + 1, &row[1]))
                })?;
            table.groups.entry(id).or_default().push(score);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    /// Within-group variance is zero while group means differ.
    pub infinite_f: bool,
}

pub fn one_way_anova(table: &ScoreTable) -> Result<AnovaResult> {
    let groups: Vec<&Vec<f64>> = table.groups.values().collect();
    if groups.len() < 2 {
        return Err(Error::Degenerate(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some((id, g)) = table.groups.iter().find(|(_, g)| g.len() < 2) {
        return Err(Error::Degenerate(format!(
            "group {id} has {} score(s), ANOVA needs at least 2",
            g.len()
        )));
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in &groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand).powi(2);
        ss_within += g.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Err(Error::Degenerate(
                "all groups are the same constant; F is undefined".into(),
            ));
        }
        return Ok(AnovaResult {
            f_stat: f64::INFINITY,
            df_between,
            df_within,
            p_value: 0.0,
            infinite_f: true,
        });
    }
    let f_stat = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value: f_survival(f_stat, df_between as f64, df_within as f64),
        infinite_f: false,
    })
}

/// Upper tail of the F distribution.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    regularized_beta(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, n = 9) of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
