use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    /// Standard error of the mean.
    pub sem: f64,
    /// Half-width of the two-sided 95% t interval; 0 when n = 1.
    pub ci_halfwidth: f64,
}

impl StatsSummary {
    /// `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Some(StatsSummary {
                n,
                mean,
                std: 0.0,
                sem: 0.0,
                ci_halfwidth: 0.0,
            });
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let sem = std / (n as f64).sqrt();
        let q = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df >= 1")
            .inverse_cdf(0.975);
        Some(StatsSummary {
            n,
            mean,
            std,
            sem,
            ci_halfwidth: q * sem,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: u32,
    /// P(T >= t) under the null: small when `a` exceeds `b`.
    pub p_one_tailed: f64,
    /// Zero pooled variance with unequal means.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("each sample needs at least two values (got {0} and {1})")]
pub struct TooFewSamples(pub usize, pub usize);

/// Upper-tail probability of Student's t with `df` degrees of freedom.
pub fn t_upper_tail(t: f64, df: u32) -> f64 {
    StudentsT::new(0.0, 1.0, f64::from(df)).expect("df >= 1").sf(t)
}

/// Pooled-variance two-sample Student t-test, one-tailed in the direction a > b.
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TTestResult, TooFewSamples> {
    let (n1, n2) = (a.len(), b.len());
    if n1 < 2 || n2 < 2 {
        return Err(TooFewSamples(n1, n2));
    }
    let sa = StatsSummary::of(a).expect("non-empty");
    let sb = StatsSummary::of(b).expect("non-empty");
    let df = (n1 + n2 - 2) as u32;
    let pooled = ((n1 - 1) as f64 * sa.std.powi(2) + (n2 - 1) as f64 * sb.std.powi(2)) / f64::from(df);
    let diff = sa.mean - sb.mean;
    if pooled == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 0.5)
        } else if diff > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(TTestResult {
            t,
            df,
            p_one_tailed: p,
            degenerate: diff != 0.0,
        });
    }
    let se = (pooled * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    let t = diff / se;
    Ok(TTestResult {
        t,
        df,
        p_one_tailed: t_upper_tail(t, df),
        degenerate: false,
    })
}
