//! Compensated sums and sample moments.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|x| s.add(*x));
    s.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    neumaier_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|x| s.add((x - m) * (x - m)));
    s.value() / (xs.len() as f64 - 1.0)
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    (mean(xs), (variance(xs) / n).sqrt())
}

/// Sample variance and a standard error from the fourth central moment.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let mut s2 = CompensatedSum::default();
    let mut s4 = CompensatedSum::default();
    for x in xs {
        let d = (x - m) * (x - m);
        s2.add(d);
        s4.add(d * d);
    }
    let m2 = s2.value() / n;
    let m4 = s4.value() / n;
    let v = s2.value() / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (v, se)
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut s = CompensatedSum::default();
    xs.iter().zip(ys).for_each(|(x, y)| s.add((x - mx) * (y - my)));
    s.value() / (xs.len() as f64 - 1.0)
}

/// Least-squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Half-width of the two-sided 95% t interval for the slope.
    pub slope_ci_halfwidth: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let k = x.len();
    assert!(k >= 3 && y.len() == k, "line fit needs at least three points");
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let df = (k - 2) as f64;
    let se = (rss / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df).expect("positive df").inverse_cdf(0.975);
    LineFit {
        intercept,
        slope,
        slope_ci_halfwidth: t * se,
    }
}
