//! Paired t-test and Pearson correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_two_tailed: f64,
}

/// Two-tailed p-value of a t statistic with `df` degrees of freedom.
pub fn t_two_tailed_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("paired t-test needs 2 or more pairs, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = m / (var / n as f64).sqrt();
    Ok(TTest {
        t,
        df: n - 1,
        p_two_tailed: t_two_tailed_p(t, (n - 1) as f64),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
}

/// Pearson r with a two-tailed p from t = r·sqrt((n−2)/(1−r²)).
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("correlation needs 3 or more points, got {n}")));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
        t_two_tailed_p(t, (n - 2) as f64)
    };
    Ok(Correlation { r, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(
            paired_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(pearson_correlation(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn perfect_correlation() {
        let xs = [1.0, 2.5, 3.0, 7.0];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(pearson_correlation(&xs, &xs).unwrap().r, 1.0);
        assert_eq!(pearson_correlation(&xs, &neg).unwrap().r, -1.0);
    }

    #[test]
    fn simple_t() {
        let a = [2.0, 4.0, 6.0];
        let b = [1.0, 2.0, 3.0];
        // d = [1,2,3], mean 2, sd 1, t = 2 / (1/sqrt 3)
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
    }
}
