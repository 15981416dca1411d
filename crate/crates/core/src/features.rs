//! Kinematic time series and the 39 per-action features.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::FeatureKind;
use crate::segment::{ActionKind, MouseAction, Point};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("degenerate action: {0}")]
    DegenerateAction(String),
    #[error("features csv: {0}")]
    Csv(String),
}

pub const MIN_POINTS: usize = 4;
pub const DEFAULT_SHARP_THRESHOLD: f64 = 0.0005;

/// Per-point series of an action, all of length `n`. Index 0 holds the
/// padding value where the derivative is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicSeries {
    pub theta: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub jerk: Vec<f64>,
    pub omega: Vec<f64>,
    pub curvature: Vec<f64>,
    /// Cumulative path length, `s[0] = 0`.
    pub s: Vec<f64>,
    pub dt: Vec<f64>,
}

impl KinematicSeries {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

fn validate(points: &[Point]) -> Result<(), FeatureError> {
    if points.len() < MIN_POINTS {
        return Err(FeatureError::DegenerateAction(format!(
            "{} points, need at least {MIN_POINTS}",
            points.len()
        )));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN times are rejected too
    if let Some(i) = points.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(FeatureError::DegenerateAction(format!(
            "time does not increase at point {}",
            i + 2
        )));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(FeatureError::DegenerateAction("non-finite coordinate".into()));
    }
    Ok(())
}

pub fn compute_series(action: &MouseAction) -> Result<KinematicSeries, FeatureError> {
    series_of(&action.points)
}

fn series_of(pts: &[Point]) -> Result<KinematicSeries, FeatureError> {
    validate(pts)?;
    let n = pts.len();
    let mut out = KinematicSeries {
        theta: vec![0.0; n],
        vx: vec![0.0; n],
        vy: vec![0.0; n],
        v: vec![0.0; n],
        a: vec![0.0; n],
        jerk: vec![0.0; n],
        omega: vec![0.0; n],
        curvature: vec![0.0; n],
        s: vec![0.0; n],
        dt: vec![0.0; n],
    };
    for i in 1..n {
        let dx = pts[i].x - pts[i - 1].x;
        let dy = pts[i].y - pts[i - 1].y;
        let dt = pts[i].t - pts[i - 1].t;
        let ds = dx.hypot(dy);
        out.dt[i] = dt;
        out.theta[i] = dy.atan2(dx);
        out.vx[i] = dx / dt;
        out.vy[i] = dy / dt;
        out.v[i] = out.vx[i].hypot(out.vy[i]);
        out.a[i] = (out.v[i] - out.v[i - 1]) / dt;
        out.jerk[i] = (out.a[i] - out.a[i - 1]) / dt;
        let dtheta = out.theta[i] - out.theta[i - 1];
        out.omega[i] = dtheta / dt;
        out.s[i] = out.s[i - 1] + ds;
        out.curvature[i] = if ds == 0.0 { 0.0 } else { dtheta / ds };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SeriesStats {
    /// `values` must be non-empty.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        SeriesStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}

/// Direction sector 1..=8 of the vector from `start` to `end`; sector 1 covers
/// [0°, 45°), sector 2 [45°, 90°) and so on. Identical endpoints give 1.
pub fn quantize_direction(start: (f64, f64), end: (f64, f64)) -> u8 {
    let mut theta = (end.1 - start.1).atan2(end.0 - start.0);
    if theta < 0.0 {
        theta += 2.0 * PI;
    }
    let sector = (theta / (PI / 4.0)).floor() as i64;
    sector.clamp(0, 7) as u8 + 1
}

/// Distance from `p` to the line through `a` and `b` (to `a` itself when the
/// two coincide).
fn distance_to_chord(p: &Point, a: &Point, b: &Point) -> f64 {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (wx, wy) = (p.x - a.x, p.y - a.y);
    let len = ux.hypot(uy);
    if len == 0.0 {
        wx.hypot(wy)
    } else {
        (ux * wy - uy * wx).abs() / len
    }
}

/// Features of a single action, in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFeatures {
    pub vx: SeriesStats,
    pub vy: SeriesStats,
    pub v: SeriesStats,
    pub a: SeriesStats,
    pub jerk: SeriesStats,
    pub omega: SeriesStats,
    pub curvature: SeriesStats,
    pub kind: ActionKind,
    pub elapsed_time: f64,
    pub trajectory_length: f64,
    pub dist_end_to_end: f64,
    pub direction: u8,
    pub straightness: f64,
    pub num_points: usize,
    pub sum_of_angles: f64,
    pub largest_deviation: f64,
    pub sharp_angles: usize,
    pub a_beg_time: f64,
    pub user_id: u32,
    pub session_id: String,
    pub genuine: bool,
}

pub const NUM_FEATURES: usize = 39;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "mean_vx",
    "sd_vx",
    "min_vx",
    "max_vx",
    "mean_vy",
    "sd_vy",
    "min_vy",
    "max_vy",
    "mean_v",
    "sd_v",
    "min_v",
    "max_v",
    "mean_a",
    "sd_a",
    "min_a",
    "max_a",
    "mean_jerk",
    "sd_jerk",
    "min_jerk",
    "max_jerk",
    "mean_omega",
    "sd_omega",
    "min_omega",
    "max_omega",
    "mean_curv",
    "sd_curv",
    "min_curv",
    "max_curv",
    "type_of_action",
    "elapsed_time",
    "travelled_distance_pixel",
    "dist_end_to_end_line",
    "direction_of_movement",
    "straightness",
    "num_points",
    "sum_of_angles",
    "largest_deviation",
    "sharp_angles",
    "a_beg_time",
];

pub const TYPE_INDEX: usize = 28;
pub const DIRECTION_INDEX: usize = 32;

/// Column kinds of [`ActionFeatures::to_vector`]. Categorical columns hold
/// dense codes: action type 0..3 (MM, PC, DD), direction 0..8 (sector - 1).
pub fn feature_kinds() -> Vec<FeatureKind> {
    (0..NUM_FEATURES)
        .map(|i| match i {
            TYPE_INDEX => FeatureKind::Categorical { levels: 3 },
            DIRECTION_INDEX => FeatureKind::Categorical { levels: 8 },
            _ => FeatureKind::Numeric,
        })
        .collect()
}

impl ActionFeatures {
    pub fn to_vector(&self) -> [f64; NUM_FEATURES] {
        let mut v = [0.0; NUM_FEATURES];
        for (k, s) in self.series_stats().iter().enumerate() {
            v[4 * k..4 * k + 4].copy_from_slice(&[s.mean, s.std, s.min, s.max]);
        }
        v[TYPE_INDEX] = self.kind.code() as f64;
        v[29] = self.elapsed_time;
        v[30] = self.trajectory_length;
        v[31] = self.dist_end_to_end;
        v[DIRECTION_INDEX] = f64::from(self.direction - 1);
        v[33] = self.straightness;
        v[34] = self.num_points as f64;
        v[35] = self.sum_of_angles;
        v[36] = self.largest_deviation;
        v[37] = self.sharp_angles as f64;
        v[38] = self.a_beg_time;
        v
    }

    pub fn series_stats(&self) -> [SeriesStats; 7] {
        [self.vx, self.vy, self.v, self.a, self.jerk, self.omega, self.curvature]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Extracts the feature vector of one action. `genuine` defaults to true and
/// is overwritten by the caller when known.
pub fn extract_features(action: &MouseAction, sharp_threshold: f64) -> Result<ActionFeatures, FeatureError> {
    let pts = &action.points;
    let s = series_of(pts)?;
    let n = pts.len();
    let (first, last) = (&pts[0], &pts[n - 1]);

    let trajectory_length = s.s[n - 1];
    let chord = (last.x - first.x).hypot(last.y - first.y);
    // Rounding can push a collinear chord one ulp past the arc.
    let dist_end_to_end = chord.min(trajectory_length);
    let straightness = if trajectory_length == 0.0 {
        0.0
    } else {
        (dist_end_to_end / trajectory_length).min(1.0)
    };

    // Statistics skip the padded leading values of each derivative.
    let a_beg_time = match (2..n).find(|&i| s.a[i] <= 0.0) {
        Some(m) => s.dt[1..m].iter().sum(),
        None => s.dt[1..].iter().sum(),
    };
    let largest_deviation = pts
        .iter()
        .map(|p| distance_to_chord(p, first, last))
        .fold(0.0, f64::max);

    Ok(ActionFeatures {
        vx: SeriesStats::of(&s.vx[1..]),
        vy: SeriesStats::of(&s.vy[1..]),
        v: SeriesStats::of(&s.v[1..]),
        a: SeriesStats::of(&s.a[2..]),
        jerk: SeriesStats::of(&s.jerk[3..]),
        omega: SeriesStats::of(&s.omega[1..]),
        curvature: SeriesStats::of(&s.curvature[1..]),
        kind: action.kind,
        elapsed_time: last.t - first.t,
        trajectory_length,
        dist_end_to_end,
        direction: quantize_direction((first.x, first.y), (last.x, last.y)),
        straightness,
        num_points: n,
        sum_of_angles: s.theta.iter().sum(),
        largest_deviation,
        sharp_angles: s.theta[1..].iter().filter(|t| t.abs() < sharp_threshold).count(),
        a_beg_time,
        user_id: action.user_id,
        session_id: action.session_id.clone(),
        genuine: true,
    })
}

pub const META_COLUMNS: [&str; 3] = ["user_id", "session_id", "genuine"];

/// Writes one header row (39 features then user_id, session_id, genuine) and
/// one row per action. `preamble` lines are written first as `#` comments.
pub fn write_features_csv<W: Write>(out: W, preamble: &[String], rows: &[ActionFeatures]) -> Result<(), FeatureError> {
    let mut out = out;
    for line in preamble {
        writeln!(out, "# {line}").map_err(|e| FeatureError::Csv(e.to_string()))?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| FeatureError::Csv(e.to_string());
    w.write_record(FEATURE_NAMES.iter().chain(META_COLUMNS.iter()))
        .map_err(csv_err)?;
    for f in rows {
        let v = f.to_vector();
        let mut rec: Vec<String> = Vec::with_capacity(NUM_FEATURES + 3);
        for (i, x) in v.iter().enumerate() {
            rec.push(match i {
                TYPE_INDEX => f.kind.to_string(),
                DIRECTION_INDEX => f.direction.to_string(),
                34 => f.num_points.to_string(),
                37 => f.sharp_angles.to_string(),
                _ => x.to_string(),
            });
        }
        rec.push(f.user_id.to_string());
        rec.push(f.session_id.clone());
        rec.push(u8::from(f.genuine).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
    Ok(())
}

pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<ActionFeatures>, FeatureError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = r.headers().map_err(|e| FeatureError::Csv(e.to_string()))?.clone();
    let expected: Vec<&str> = FEATURE_NAMES.iter().chain(META_COLUMNS.iter()).copied().collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Csv("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| FeatureError::Csv(e.to_string()))?;
        let bad = |col: usize| FeatureError::Csv(format!("row {}: bad value in column {}", line + 1, expected[col]));
        let num = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let stats = |k: usize| -> Result<SeriesStats, FeatureError> {
            Ok(SeriesStats {
                mean: num(4 * k)?,
                std: num(4 * k + 1)?,
                min: num(4 * k + 2)?,
                max: num(4 * k + 3)?,
            })
        };
        let direction: u8 = rec[DIRECTION_INDEX].parse().map_err(|_| bad(DIRECTION_INDEX))?;
        if !(1..=8).contains(&direction) {
            return Err(bad(DIRECTION_INDEX));
        }
        rows.push(ActionFeatures {
            vx: stats(0)?,
            vy: stats(1)?,
            v: stats(2)?,
            a: stats(3)?,
            jerk: stats(4)?,
            omega: stats(5)?,
            curvature: stats(6)?,
            kind: rec[TYPE_INDEX].parse().map_err(|_| bad(TYPE_INDEX))?,
            elapsed_time: num(29)?,
            trajectory_length: num(30)?,
            dist_end_to_end: num(31)?,
            direction,
            straightness: num(33)?,
            num_points: rec[34].parse().map_err(|_| bad(34))?,
            sum_of_angles: num(35)?,
            largest_deviation: num(36)?,
            sharp_angles: rec[37].parse().map_err(|_| bad(37))?,
            a_beg_time: num(38)?,
            user_id: rec[39].parse().map_err(|_| bad(39))?,
            session_id: rec[40].to_string(),
            genuine: match &rec[41] {
                "1" => true,
                "0" => false,
                _ => return Err(bad(41)),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn action(pts: &[(f64, f64, f64)]) -> MouseAction {
        MouseAction {
            kind: ActionKind::MM,
            points: pts.iter().map(|&(x, y, t)| Point { x, y, t }).collect(),
            user_id: 1,
            session_id: "s".into(),
            events: 0..pts.len(),
        }
    }

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn straight_horizontal_series() {
        let s = compute_series(&action(&[(0., 0., 0.), (1., 0., 0.1), (2., 0., 0.2), (3., 0., 0.3)])).unwrap();
        close(&s.vx, &[0.0, 10.0, 10.0, 10.0]);
        close(&s.vy, &[0.0; 4]);
        close(&s.theta, &[0.0; 4]);
        close(&s.omega, &[0.0; 4]);
        close(&s.curvature, &[0.0; 4]);
        close(&s.s, &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn vertical_line_angle() {
        let s = compute_series(&action(&[(0., 0., 0.), (0., 1., 0.1), (0., 2., 0.2), (0., 3., 0.3)])).unwrap();
        for t in &s.theta[1..] {
            assert_eq!(*t, PI / 2.0);
        }
    }

    // Expected values from a direct transcription of the series definitions
    // run outside this crate.
    #[test]
    fn l_shaped_path_matches_oracle() {
        let s = compute_series(&action(&[(0., 0., 0.), (1., 0., 0.1), (1., 1., 0.2), (1., 2., 0.3)])).unwrap();
        close(
            &s.theta,
            &[0.0, 0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
        );
        close(&s.v, &[0.0, 10.0, 10.0, 10.000000000000002]);
        close(&s.a, &[0.0, 100.0, 0.0, 1.7763568394002508e-14]);
        close(&s.jerk, &[0.0, 1000.0, -1000.0, 1.7763568394002512e-13]);
        close(&s.omega, &[0.0, 0.0, 15.707963267948966, 0.0]);
        close(&s.curvature, &[0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0]);
        close(&s.s, &[0.0, 1.0, 2.0, 3.0]);
        let f = extract_features(
            &action(&[(0., 0., 0.), (1., 0., 0.1), (1., 1., 0.2), (1., 2., 0.3)]),
            5e-4,
        )
        .unwrap();
        // a_3 = 0 stops the accelerating phase after the first interval.
        assert!((f.a_beg_time - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stationary_interval_has_zero_curvature() {
        let s = compute_series(&action(&[(0., 0., 0.), (0., 0., 0.1), (1., 0., 0.2), (1., 1., 0.3)])).unwrap();
        assert_eq!(s.curvature[1], 0.0);
        assert!(s.curvature.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn too_short_or_unordered_is_degenerate() {
        let err = compute_series(&action(&[(0., 0., 0.), (1., 0., 0.1), (2., 0., 0.2)])).unwrap_err();
        assert!(matches!(err, FeatureError::DegenerateAction(_)));
        let err = compute_series(&action(&[(0., 0., 0.), (1., 0., 0.1), (2., 0., 0.1), (3., 0., 0.2)])).unwrap_err();
        assert!(matches!(err, FeatureError::DegenerateAction(_)));
    }

    #[test]
    fn uniform_straight_features() {
        let f = extract_features(
            &action(&[(0., 0., 0.), (1., 0., 0.1), (2., 0., 0.2), (3., 0., 0.3)]),
            5e-4,
        )
        .unwrap();
        assert!((f.vx.mean - 10.0).abs() < 1e-9);
        assert!(f.vx.std.abs() < 1e-9);
        assert!((f.vx.min - 10.0).abs() < 1e-9 && (f.vx.max - 10.0).abs() < 1e-9);
        assert_eq!(f.straightness, 1.0);
        assert_eq!(f.largest_deviation, 0.0);
        assert_eq!(f.sum_of_angles, 0.0);
        assert_eq!(f.direction, 1);
        assert_eq!(f.num_points, 4);
        assert_eq!(f.sharp_angles, 3);
        assert!((f.elapsed_time - 0.3).abs() < 1e-12);
    }

    #[test]
    fn accelerating_phase_ends_at_first_non_positive_acceleration() {
        // v = (., 10, 20, 10) at dt = 0.1 gives a = (., ., 100, -100).
        let f = extract_features(
            &action(&[(0., 0., 0.), (1., 0., 0.1), (3., 0., 0.2), (4., 0., 0.3)]),
            5e-4,
        )
        .unwrap();
        assert!((f.a_beg_time - 0.2).abs() < 1e-12, "{}", f.a_beg_time);
        assert!((f.a.min + 100.0).abs() < 1e-9 && (f.a.max - 100.0).abs() < 1e-9);
        // Never decelerating: the whole action counts.
        let f = extract_features(
            &action(&[(0., 0., 0.), (1., 0., 0.1), (3., 0., 0.2), (6., 0., 0.3)]),
            5e-4,
        )
        .unwrap();
        assert!((f.a_beg_time - 0.3).abs() < 1e-12);
    }

    #[test]
    fn direction_sectors() {
        assert_eq!(quantize_direction((0., 0.), (10., 1.)), 1);
        assert_eq!(quantize_direction((0., 0.), (0., 10.)), 3);
        assert_eq!(quantize_direction((0., 0.), (-1., 0.)), 5);
        assert_eq!(quantize_direction((0., 0.), (0., 0.)), 1);
        assert_eq!(quantize_direction((0., 0.), (1., -1e-12)), 8);
        assert_eq!(quantize_direction((0., 0.), (0., -1.)), 7);
    }

    #[test]
    fn closed_loop_deviation_uses_start_point() {
        let f = extract_features(
            &action(&[(0., 0., 0.), (3., 0., 0.1), (3., 4., 0.2), (0., 0., 0.3)]),
            5e-4,
        )
        .unwrap();
        assert_eq!(f.dist_end_to_end, 0.0);
        assert_eq!(f.straightness, 0.0);
        assert_eq!(f.largest_deviation, 5.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut f = extract_features(
            &action(&[(0., 0., 0.), (1., 2., 0.1), (3., 3., 0.25), (7., 1., 0.3)]),
            5e-4,
        )
        .unwrap();
        f.genuine = false;
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &["seed=1".into()], std::slice::from_ref(&f)).unwrap();
        let back = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![f]);
    }
}
