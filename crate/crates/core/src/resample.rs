//! Re-sampling actions onto a uniform time grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segment::{MouseAction, Point};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("cubic spline needs at least 4 points, action has {0}")]
    TooShortForSpline(usize),
    #[error("resample frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ResampleMethod {
    #[default]
    None,
    Linear,
    CubicSpline,
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMethod::None => "none",
            ResampleMethod::Linear => "linear",
            ResampleMethod::CubicSpline => "spline",
        })
    }
}

impl FromStr for ResampleMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ResampleMethod::None),
            "linear" => Ok(ResampleMethod::Linear),
            "spline" | "cubic" => Ok(ResampleMethod::CubicSpline),
            other => Err(format!("unknown resample method `{other}` (none|linear|spline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    /// Hz.
    pub frequency: f64,
    pub method: ResampleMethod,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            frequency: 20.0,
            method: ResampleMethod::None,
        }
    }
}

impl ResampleConfig {
    pub fn new(method: ResampleMethod, frequency: f64) -> Result<Self, ResampleError> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(ResampleError::BadFrequency(frequency));
        }
        Ok(Self { frequency, method })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub action: MouseAction,
    /// Set when the grid would hold fewer than 4 points and the input was
    /// passed through untouched.
    pub unchanged: bool,
}

/// Natural cubic spline through `(t[i], y[i])`, `t` strictly increasing.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        assert!(n >= 2 && y.len() == n);
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives (Thomas).
            let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let i = match self.t.partition_point(|&ti| ti <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

fn linear_at(t: &[f64], y: &[f64], x: f64) -> f64 {
    let n = t.len();
    let i = match t.partition_point(|&ti| ti <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let w = (x - t[i]) / (t[i + 1] - t[i]);
    y[i] + w * (y[i + 1] - y[i])
}

/// Grid `t0, t0 + 1/f, ...` up to `t_end`, which is appended when the grid
/// does not land on it.
fn time_grid(t0: f64, t_end: f64, frequency: f64) -> Vec<f64> {
    let step = 1.0 / frequency;
    let tol = 1e-9 * step;
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 * step;
        if t >= t_end - tol {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(t_end);
    grid
}

pub fn resample(action: &MouseAction, cfg: &ResampleConfig) -> Result<Resampled, ResampleError> {
    if !(cfg.frequency.is_finite() && cfg.frequency > 0.0) {
        return Err(ResampleError::BadFrequency(cfg.frequency));
    }
    let n = action.points.len();
    let unchanged = || Resampled {
        action: action.clone(),
        unchanged: true,
    };
    match cfg.method {
        ResampleMethod::None => {
            return Ok(Resampled {
                action: action.clone(),
                unchanged: false,
            })
        }
        ResampleMethod::CubicSpline if n < 4 => return Err(ResampleError::TooShortForSpline(n)),
        _ if n < 2 => return Ok(unchanged()),
        _ => {}
    }
    let t: Vec<f64> = action.points.iter().map(|p| p.t).collect();
    let xs: Vec<f64> = action.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = action.points.iter().map(|p| p.y).collect();
    let grid = time_grid(t[0], t[n - 1], cfg.frequency);
    if grid.len() < 4 {
        return Ok(unchanged());
    }
    let mut points: Vec<Point> = match cfg.method {
        ResampleMethod::Linear => grid
            .iter()
            .map(|&g| Point {
                x: linear_at(&t, &xs, g),
                y: linear_at(&t, &ys, g),
                t: g,
            })
            .collect(),
        _ => {
            let sx = NaturalSpline::new(&t, &xs);
            let sy = NaturalSpline::new(&t, &ys);
            grid.iter()
                .map(|&g| Point {
                    x: sx.eval(g),
                    y: sy.eval(g),
                    t: g,
                })
                .collect()
        }
    };
    // Endpoints are reproduced exactly.
    points[0] = action.points[0];
    *points.last_mut().expect("grid is non-empty") = action.points[n - 1];
    Ok(Resampled {
        action: MouseAction {
            points,
            ..action.clone()
        },
        unchanged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::ActionKind;

    fn action(pts: Vec<Point>) -> MouseAction {
        let n = pts.len();
        MouseAction {
            kind: ActionKind::PC,
            points: pts,
            user_id: 4,
            session_id: "x".into(),
            events: 0..n,
        }
    }

    #[test]
    fn linear_is_exact_for_affine_signals() {
        let ts = [0.0, 0.013, 0.07, 0.11, 0.19, 0.26, 0.33, 0.41];
        let a = action(
            ts.iter()
                .map(|&t| Point {
                    x: 10.0 * t,
                    y: 3.0 - 2.0 * t,
                    t,
                })
                .collect(),
        );
        let cfg = ResampleConfig::new(ResampleMethod::Linear, 20.0).unwrap();
        let r = resample(&a, &cfg).unwrap();
        assert!(!r.unchanged);
        for p in &r.action.points {
            assert!((p.x - 10.0 * p.t).abs() < 1e-12);
            assert!((p.y - (3.0 - 2.0 * p.t)).abs() < 1e-12);
        }
        assert_eq!(r.action.kind, ActionKind::PC);
        assert_eq!(r.action.user_id, 4);
        // 0, .05, ..., .40, then the final .41
        assert_eq!(r.action.points.len(), 10);
    }

    #[test]
    fn none_is_identity() {
        let a = action(
            (0..5)
                .map(|i| Point {
                    x: i as f64,
                    y: 0.0,
                    t: i as f64 * 0.3,
                })
                .collect(),
        );
        let r = resample(&a, &ResampleConfig::default()).unwrap();
        assert_eq!(r.action, a);
    }

    #[test]
    fn spline_reproduces_quadratic() {
        // Irregular sampling near 100 Hz; analytic t^2 is the oracle.
        let mut ts: Vec<f64> = (0..=50).map(|i| i as f64 * 0.01).collect();
        for (i, t) in ts.iter_mut().enumerate().skip(1).take(49) {
            *t += 0.003 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
        }
        let a = action(ts.iter().map(|&t| Point { x: t * t, y: 0.0, t }).collect());
        let cfg = ResampleConfig::new(ResampleMethod::CubicSpline, 20.0).unwrap();
        let r = resample(&a, &cfg).unwrap();
        assert_eq!(r.action.points.len(), 11);
        let worst = r
            .action
            .points
            .iter()
            .map(|p| (p.x - p.t * p.t).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "max error {worst}");
    }

    #[test]
    fn spline_needs_four_points() {
        let a = action(
            (0..3)
                .map(|i| Point {
                    x: i as f64,
                    y: 0.0,
                    t: i as f64,
                })
                .collect(),
        );
        let cfg = ResampleConfig::new(ResampleMethod::CubicSpline, 20.0).unwrap();
        assert_eq!(resample(&a, &cfg), Err(ResampleError::TooShortForSpline(3)));
    }

    #[test]
    fn short_grid_returns_input_flagged() {
        let a = action(
            (0..6)
                .map(|i| Point {
                    x: i as f64,
                    y: 0.0,
                    t: i as f64 * 0.01,
                })
                .collect(),
        );
        let cfg = ResampleConfig::new(ResampleMethod::Linear, 20.0).unwrap();
        let r = resample(&a, &cfg).unwrap();
        assert!(r.unchanged);
        assert_eq!(r.action, a);
    }

    #[test]
    fn bad_frequency() {
        assert!(ResampleConfig::new(ResampleMethod::Linear, 0.0).is_err());
        assert!(ResampleConfig::new(ResampleMethod::Linear, f64::NAN).is_err());
    }
}
