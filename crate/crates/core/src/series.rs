//! Scaling series and least-squares slope fits.

use std::fmt;

use crate::{Error, Result};

/// Which quantity the fit uses as abscissa. The ordinate is always `ln value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// `ln value` against the parameter itself (exponential laws).
    SemiLog,
    /// `ln value` against `ln parameter` (power laws).
    LogLog,
}

impl Axis {
    pub fn abscissa(self, parameter: f64) -> f64 {
        match self {
            Axis::SemiLog => parameter,
            Axis::LogLog => parameter.ln(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SemiLog => "semi-log",
            Axis::LogLog => "log-log",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub parameter: f64,
    pub value: f64,
    /// `ln value`, carried separately so exponentially small values survive.
    pub log_value: f64,
}

impl SeriesPoint {
    /// A point whose log is taken from `value`.
    pub fn new(parameter: f64, value: f64) -> Self {
        SeriesPoint {
            parameter,
            value,
            log_value: value.ln(),
        }
    }

    /// A point with an independently accumulated log; `value` may have underflowed.
    pub fn with_log(parameter: f64, log_value: f64) -> Self {
        SeriesPoint {
            parameter,
            value: log_value.exp(),
            log_value,
        }
    }

    fn usable(&self, axis: Axis) -> bool {
        self.log_value.is_finite() && axis.abscissa(self.parameter).is_finite()
    }
}

/// Output of every sweep: sorted points plus the fitted slope of `ln value`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingSeries {
    points: Vec<SeriesPoint>,
    axis: Axis,
    slope: Option<f64>,
    slope_stderr: Option<f64>,
    exact_zero: bool,
}

impl ScalingSeries {
    /// Sorts by parameter and fits when at least two points have finite logs.
    pub fn new(mut points: Vec<SeriesPoint>, axis: Axis) -> Self {
        points.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
        let exact_zero = !points.is_empty()
            && points
                .iter()
                .all(|p| p.value == 0.0 && p.log_value == f64::NEG_INFINITY);
        let fit = fit_log_slope(&points, axis).ok();
        ScalingSeries {
            points,
            axis,
            slope: fit.map(|f| f.0),
            slope_stderr: fit.map(|f| f.1),
            exact_zero,
        }
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn slope(&self) -> Option<f64> {
        self.slope
    }

    pub fn slope_stderr(&self) -> Option<f64> {
        self.slope_stderr
    }

    /// Every value is exactly zero, so no slope exists.
    pub fn is_exact_zero(&self) -> bool {
        self.exact_zero
    }
}

/// Ordinary least squares of `ln value` on the axis abscissa; returns
/// `(slope, stderr)` with the standard error taken from residuals.
pub fn fit_log_slope(points: &[SeriesPoint], axis: Axis) -> Result<(f64, f64)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.usable(axis))
        .map(|p| (axis.abscissa(p.parameter), p.log_value))
        .unzip();
    let line = fit_line(&xs, &ys)?;
    Ok((line.slope, line.slope_stderr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit(format!(
            "{} abscissae for {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Fit(format!("{n} usable points, need at least 2")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}
