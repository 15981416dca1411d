//! Generators and reference oracles shared by the integration tests.
#![allow(dead_code)]

use std::ops::Range;

use mousedyn::eval::ScoreSet;
use mousedyn::ingest::{Button, ButtonState, MouseEvent, Session, SessionRole};
use mousedyn::segment::Point;
use mousedyn::{ActionKind, MouseAction};
use rand::Rng;

/// Time tick: every timestamp is a multiple of 1/1024 s, so shifts by whole
/// ticks are exact in binary floating point.
pub const TICK: f64 = 1.0 / 1024.0;

/// A valid action with integer coordinates and dyadic timestamps.
pub fn random_action<R: Rng>(rng: &mut R, max_points: usize) -> MouseAction {
    let n = rng.gen_range(4..=max_points.max(4));
    let mut x: i64 = rng.gen_range(0..3000);
    let mut y: i64 = rng.gen_range(0..2000);
    let mut tick: i64 = rng.gen_range(0..1_000_000);
    let step = rng.gen_range(1..60);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            // Occasionally stand still, as real recordings do.
            if !rng.gen_bool(0.1) {
                x += rng.gen_range(-step..=step);
                y += rng.gen_range(-step..=step);
            }
            tick += rng.gen_range(1..64);
        }
        points.push(Point {
            x: x as f64,
            y: y as f64,
            t: tick as f64 * TICK,
        });
    }
    let kind = ActionKind::ALL[rng.gen_range(0..3)];
    MouseAction {
        kind,
        points,
        user_id: 1,
        session_id: "s".into(),
        events: 0..n,
    }
}

pub fn map_points(a: &MouseAction, f: impl Fn(&Point) -> Point) -> MouseAction {
    MouseAction {
        points: a.points.iter().map(f).collect(),
        ..a.clone()
    }
}

fn ev(t: f64, button: Button, state: ButtonState, x: u32, y: u32) -> MouseEvent {
    MouseEvent {
        rtime: t,
        ctime: t,
        button,
        state,
        x,
        y,
    }
}

/// Random event stream mixing moves, clicks of every button, drags, long
/// pauses, stray releases, dangling presses and time glitches.
pub fn random_stream<R: Rng>(rng: &mut R) -> Session {
    let mut events = Vec::new();
    let mut t = 0.0;
    let (mut x, mut y) = (500u32, 500u32);
    let blocks = rng.gen_range(1..25);
    for _ in 0..blocks {
        let moves = rng.gen_range(0..9);
        let mut step = |events: &mut Vec<MouseEvent>, b: Button, s: ButtonState, rng: &mut R| {
            let r: f64 = rng.gen();
            t += if r < 0.05 {
                rng.gen_range(10.5..30.0)
            } else if r < 0.08 {
                0.0
            } else if r < 0.1 {
                -0.05
            } else if r < 0.12 {
                10.0
            } else {
                rng.gen_range(0.005..0.2)
            };
            x = (x as i64 + rng.gen_range(-20..=20)).clamp(0, 4000) as u32;
            y = (y as i64 + rng.gen_range(-20..=20)).clamp(0, 4000) as u32;
            events.push(ev(t, b, s, x, y));
        };
        for _ in 0..moves {
            step(&mut events, Button::None, ButtonState::Move, rng);
        }
        let button = [Button::Left, Button::Left, Button::Right, Button::Middle][rng.gen_range(0..4)];
        match rng.gen_range(0..7) {
            0 | 1 => {
                step(&mut events, button, ButtonState::Pressed, rng);
                step(&mut events, button, ButtonState::Released, rng);
            }
            2 | 3 => {
                step(&mut events, button, ButtonState::Pressed, rng);
                for _ in 0..rng.gen_range(0..7) {
                    step(&mut events, Button::None, ButtonState::Drag, rng);
                }
                step(&mut events, button, ButtonState::Released, rng);
            }
            4 => step(&mut events, button, ButtonState::Released, rng),
            5 => step(&mut events, button, ButtonState::Pressed, rng),
            _ => step(
                &mut events,
                Button::None,
                [ButtonState::Down, ButtonState::Up][rng.gen_range(0..2)],
                rng,
            ),
        }
    }
    Session {
        user_id: 3,
        session_id: "stream".into(),
        role: SessionRole::Training,
        events,
    }
}

/// Segments as (kind, event range) pairs.
pub type Labeled = Vec<(ActionKind, Range<usize>)>;

/// Straightforward reference segmentation, written from the rules rather
/// than from the library code. Returns (kind, event range) per action.
pub fn oracle_segment(events: &[MouseEvent], gap: f64, min_events: usize) -> Labeled {
    let code: String = events
        .iter()
        .map(|e| match e.state {
            ButtonState::Pressed => 'P',
            ButtonState::Released => 'R',
            ButtonState::Drag => 'D',
            _ => 'm',
        })
        .collect();
    let split_between = |a: usize, b: usize| {
        let dt = events[b].ctime - events[a].ctime;
        !(dt > 0.0 && dt <= gap)
    };
    let increasing = |r: &Range<usize>| (r.start + 1..r.end).all(|i| events[i].ctime > events[i - 1].ctime);
    let mut out = Vec::new();
    let mut keep = |kind: ActionKind, r: Range<usize>, out: &mut Labeled| {
        if r.len() >= min_events && increasing(&r) {
            out.push((kind, r));
        }
    };
    let moves = |r: Range<usize>, out: &mut Labeled, keep: &mut dyn FnMut(ActionKind, Range<usize>, &mut Labeled)| {
        let mut cuts = vec![r.start];
        cuts.extend((r.start + 1..r.end).filter(|&i| split_between(i - 1, i)));
        cuts.push(r.end);
        for w in cuts.windows(2) {
            keep(ActionKind::MM, w[0]..w[1], out);
        }
    };

    let mut chunk_start = 0;
    for (r, _) in code.match_indices('R') {
        let chunk = &code[chunk_start..=r];
        if chunk.ends_with("PR") {
            let press = r - 1;
            let mut start = press;
            while start > chunk_start && !split_between(start - 1, start) {
                start -= 1;
            }
            moves(chunk_start..start, &mut out, &mut keep);
            keep(ActionKind::PC, start..r + 1, &mut out);
        } else {
            let inner = &chunk[..chunk.len() - 1];
            match inner.rfind('P') {
                Some(p) if events[chunk_start + p].button == Button::Left && inner[p..].contains('D') => {
                    moves(chunk_start..chunk_start + p, &mut out, &mut keep);
                    keep(ActionKind::DD, chunk_start + p..r + 1, &mut out);
                }
                _ => moves(chunk_start..r + 1, &mut out, &mut keep),
            }
        }
        chunk_start = r + 1;
    }
    moves(chunk_start..events.len(), &mut out, &mut keep);
    out
}

/// Random score set; half the time scores come from a coarse grid so ties
/// within and across classes are common.
pub fn random_scores<R: Rng>(rng: &mut R) -> ScoreSet {
    let coarse = rng.gen_bool(0.5);
    let levels = rng.gen_range(2..12);
    let shift: f64 = rng.gen_range(-0.3..0.3);
    let draw = |bias: f64, rng: &mut R| -> f64 {
        if coarse {
            rng.gen_range(0..=levels) as f64 / levels as f64
        } else {
            (rng.gen::<f64>() + bias).clamp(0.0, 1.0)
        }
    };
    let np = rng.gen_range(1..60);
    let nn = rng.gen_range(1..60);
    let positives = (0..np).map(|_| draw(shift, rng)).collect();
    let negatives = (0..nn).map(|_| draw(0.0, rng)).collect();
    ScoreSet { positives, negatives }
}

/// Pairwise AUC: ordered pairs count one, ties one half.
pub fn pairwise_auc(s: &ScoreSet) -> f64 {
    let mut acc = 0.0;
    for &p in &s.positives {
        for &n in &s.negatives {
            acc += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (s.positives.len() * s.negatives.len()) as f64
}

/// (FPR, FNR) when scores `>= t` are accepted.
pub fn rates(s: &ScoreSet, t: f64) -> (f64, f64) {
    let fp = s.negatives.iter().filter(|&&v| v >= t).count() as f64 / s.negatives.len() as f64;
    let fnr = s.positives.iter().filter(|&&v| v < t).count() as f64 / s.positives.len() as f64;
    (fp, fnr)
}

/// Brute-force EER oracle: every distinct score plus a reject-all threshold
/// is tried; returns the best max(FPR, FNR) and min(FPR, FNR) at the
/// threshold where the two rates are closest, and the largest single-step
/// change of either rate between adjacent thresholds around it.
pub struct EerOracle {
    pub at_best: (f64, f64),
    pub step: f64,
}

pub fn brute_force_eer(s: &ScoreSet) -> EerOracle {
    let mut ts: Vec<f64> = s.positives.iter().chain(&s.negatives).copied().collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    let pts: Vec<(f64, f64)> = ts.iter().map(|&t| rates(s, t)).collect();
    let best = (0..pts.len())
        .min_by(|&a, &b| {
            let da = (pts[a].0 - pts[a].1).abs();
            let db = (pts[b].0 - pts[b].1).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    let mut step: f64 = 0.0;
    for j in [best.saturating_sub(1), best + 1] {
        if j < pts.len() && j != best {
            step = step
                .max((pts[j].0 - pts[best].0).abs())
                .max((pts[j].1 - pts[best].1).abs());
        }
    }
    EerOracle {
        at_best: pts[best],
        step,
    }
}

/// Feature vectors compared entry by entry; `scaled(i)` gives the power of
/// the spatial factor each entry should pick up.
fn vector_mismatch(
    base: &[f64],
    other: &[f64],
    k: f64,
    rel_tol: f64,
    check_exact: &[usize],
    power: impl Fn(usize) -> i32,
    floor: &[f64],
) -> Option<String> {
    use mousedyn::features::FEATURE_NAMES;
    for i in 0..base.len() {
        let want = base[i] * k.powi(power(i));
        let got = other[i];
        let ok = if rel_tol == 0.0 || check_exact.contains(&i) {
            got == want
        } else {
            // Entries of one series share a magnitude; `floor` covers values
            // that vanish in the base action but carry rounding noise.
            let series = if i < 28 {
                &base[i / 4 * 4..i / 4 * 4 + 4]
            } else {
                &base[i..=i]
            };
            let mag = series.iter().fold(0.0f64, |m, v| m.max(v.abs())) * k.powi(power(i)).abs();
            (got - want).abs() <= rel_tol * mag.max(floor.get(i).copied().unwrap_or(0.0)).max(1e-300)
        };
        if !ok {
            return Some(format!("{}: expected {want:e}, got {got:e}", FEATURE_NAMES[i]));
        }
    }
    None
}

/// Power of the spatial scale factor picked up by feature `i`.
pub fn scale_power(i: usize) -> i32 {
    match i {
        0..=19 => 1,   // vx, vy, v, a, jerk statistics
        20..=23 => 0,  // omega
        24..=27 => -1, // curvature
        30 | 31 | 36 => 1,
        _ => 0,
    }
}

/// Checks translation and time-shift invariance (exact) and spatial scaling
/// covariance (exact for a power-of-two factor, relative tolerance for an
/// arbitrary one). Returns a description of the first violation.
pub fn invariance_violation<R: Rng>(a: &MouseAction, rng: &mut R) -> Option<String> {
    check_invariances(a, rng).err()
}

fn check_invariances<R: Rng>(a: &MouseAction, rng: &mut R) -> Result<(), String> {
    use mousedyn::extract_features;
    use mousedyn::features::{DEFAULT_SHARP_THRESHOLD as SHARP, DIRECTION_INDEX as DIRECTION, NUM_FEATURES};
    const A_BEG: usize = NUM_FEATURES - 1;
    let feats = |b: &MouseAction| {
        extract_features(b, SHARP)
            .map(|f| f.to_vector())
            .map_err(|e| format!("extraction failed: {e}"))
    };
    let base = feats(a)?;
    if base.iter().any(|v| !v.is_finite()) {
        return Err("non-finite feature".into());
    }
    let fail = |what: String, m: Option<String>| m.map_or(Ok(()), |m| Err(format!("{what}: {m}")));

    let (dx, dy) = (rng.gen_range(-5000..5000) as f64, rng.gen_range(-5000..5000) as f64);
    let shifted = map_points(a, |p| Point {
        x: p.x + dx,
        y: p.y + dy,
        t: p.t,
    });
    fail(
        format!("translation by ({dx}, {dy})"),
        vector_mismatch(&base, &feats(&shifted)?, 1.0, 0.0, &[], |_| 0, &[]),
    )?;

    let dt = rng.gen_range(-1_000_000i64..1_000_000) as f64 * TICK;
    let delayed = map_points(a, |p| Point { t: p.t + dt, ..*p });
    fail(
        format!("time shift by {dt}"),
        vector_mismatch(&base, &feats(&delayed)?, 1.0, 0.0, &[], |_| 0, &[]),
    )?;

    let k = [0.25, 0.5, 2.0, 4.0, 8.0][rng.gen_range(0..5)];
    let scaled = map_points(a, |p| Point {
        x: p.x * k,
        y: p.y * k,
        t: p.t,
    });
    fail(
        format!("scaling by {k}"),
        vector_mismatch(&base, &feats(&scaled)?, k, 0.0, &[], scale_power, &[]),
    )?;

    let k: f64 = rng.gen_range(0.3..7.0);
    let scaled = map_points(a, |p| Point {
        x: p.x * k,
        y: p.y * k,
        t: p.t,
    });
    let got = feats(&scaled)?;
    // Counts, categories and the acceleration-phase duration must not move.
    // Direction is exempt when the chord lies on a sector boundary, where
    // rounding of the scaled coordinates may pick either side.
    let (first, last) = (&a.points[0], &a.points[a.points.len() - 1]);
    let (cx, cy) = (last.x - first.x, last.y - first.y);
    let on_boundary = cx == 0.0 || cy == 0.0 || cx.abs() == cy.abs();
    let mut relaxed = got;
    if on_boundary {
        relaxed[DIRECTION] = base[DIRECTION];
    }
    // Likewise the accelerating phase when two consecutive speeds are equal:
    // the zero acceleration between them may round to either sign.
    let series = mousedyn::features::compute_series(a).map_err(|e| e.to_string())?;
    let speed_tie = series.v[1..]
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() <= 1e-9 * w[0].max(w[1]));
    if speed_tie {
        relaxed[A_BEG] = base[A_BEG];
    }
    let exact = [28, DIRECTION, 34, 37, A_BEG];
    let floor = noise_scales(a, &series, k);
    fail(
        format!("scaling by {k}"),
        vector_mismatch(&base, &relaxed, k, 1e-9, &exact, scale_power, &floor),
    )
}

/// Natural magnitude of each feature of `a` scaled by `k`. Rounding of the
/// scaled coordinates perturbs a feature by a small multiple of its scale
/// times machine epsilon, even where the exact value is zero.
fn noise_scales(a: &MouseAction, s: &mousedyn::features::KinematicSeries, k: f64) -> Vec<f64> {
    use mousedyn::features::NUM_FEATURES;
    use std::f64::consts::PI;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let coord = a.points.iter().fold(1.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs())) * k;
    let min_dt = s.dt.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let min_ds =
        s.s.windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min)
            * k;
    // A coordinate difference is off by about ulp(coord), so speeds carry
    // noise of order eps * coord / dt even when the step is tiny.
    let speed = max_abs(&s.v) * k + 1e-4 * coord / min_dt;
    let angle = PI;
    let mut f = vec![0.0; NUM_FEATURES];
    for (i, x) in f.iter_mut().enumerate() {
        *x = match i {
            0..=11 => speed,
            12..=15 => speed / min_dt,
            16..=19 => speed / (min_dt * min_dt),
            20..=23 => angle / min_dt,
            24..=27 => {
                if min_ds.is_finite() {
                    angle / min_ds
                } else {
                    0.0
                }
            }
            30 | 31 | 36 => coord * a.points.len() as f64,
            35 => angle * a.points.len() as f64,
            _ => 0.0,
        };
    }
    f
}

/// Schema of `d` numeric columns named f0, f1, ...
pub fn numeric_schema(d: usize) -> mousedyn::forest::FeatureSchema {
    use mousedyn::forest::{FeatureKind, FeatureSchema};
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    FeatureSchema::new(&refs, &vec![FeatureKind::Numeric; d])
}

/// Two Gaussian clouds with unit variance whose means differ by
/// `separation` along every axis. Classes alternate row by row.
pub fn gaussian_blobs<R: Rng>(
    rng: &mut R,
    per_class: usize,
    d: usize,
    separation: f64,
) -> (mousedyn::forest::Matrix, Vec<bool>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut data = Vec::with_capacity(2 * per_class * d);
    let mut labels = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let genuine = i % 2 == 0;
        for _ in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            data.push(z + if genuine { separation } else { 0.0 });
        }
        labels.push(genuine);
    }
    (mousedyn::forest::Matrix::new(data, d), labels)
}

/// Stratified k-fold cross-validation of a forest on a plain matrix;
/// returns held-out scores and labels.
pub fn matrix_cv(x: &mousedyn::forest::Matrix, y: &[bool], folds: usize, params: mousedyn::ForestParams) -> ScoreSet {
    use mousedyn::eval::stratified_folds;
    use mousedyn::RandomForest;
    use rand::SeedableRng;
    let assign = stratified_folds(y, folds, &mut rand_chacha::ChaCha8Rng::seed_from_u64(params.seed));
    let mut out = ScoreSet::default();
    for f in 0..folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| assign[i] == f).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = RandomForest::fit(&x.select(&train), &ty, numeric_schema(x.n_cols()), params).unwrap();
        for &i in &test {
            let s = model.predict_proba(x.row(i)).unwrap();
            if y[i] {
                out.positives.push(s);
            } else {
                out.negatives.push(s);
            }
        }
    }
    out
}

/// Feature row for `user`; `tag` lands in elapsed_time so rows stay
/// distinguishable.
pub fn feature_row(user: u32, tag: usize) -> mousedyn::ActionFeatures {
    use mousedyn::features::{ActionFeatures, SeriesStats};
    let s = SeriesStats::default();
    ActionFeatures {
        vx: s,
        vy: s,
        v: s,
        a: s,
        jerk: s,
        omega: s,
        curvature: s,
        kind: ActionKind::MM,
        elapsed_time: tag as f64,
        trajectory_length: 0.0,
        dist_end_to_end: 0.0,
        direction: 1,
        straightness: 0.0,
        num_points: 4,
        sum_of_angles: 0.0,
        largest_deviation: 0.0,
        sharp_angles: 0,
        a_beg_time: 0.0,
        user_id: user,
        session_id: format!("u{user}"),
        genuine: true,
    }
}

/// Per-user feature rows drawn from user-specific distributions. With
/// `distinct = false` every user shares one distribution.
pub fn synthetic_users<R: Rng>(
    rng: &mut R,
    users: u32,
    per_user: usize,
    distinct: bool,
) -> mousedyn::eval::UserFeatures {
    use rand_distr::{Distribution, Normal};
    let mut out = mousedyn::eval::UserFeatures::new();
    for u in 1..=users {
        let centre = if distinct { f64::from(u) * 1.5 } else { 1.0 };
        let noise = Normal::new(0.0, 1.0).unwrap();
        let rows = (0..per_user)
            .map(|i| {
                let mut f = feature_row(u, i);
                f.v.mean = centre + noise.sample(rng);
                f.a.max = 2.0 * centre + noise.sample(rng);
                f.elapsed_time = 0.5 + noise.sample(rng).abs();
                f.kind = ActionKind::ALL[i % 3];
                f.session_id = format!("u{u}_s{}", i / 50);
                f
            })
            .collect();
        out.insert(u, rows);
    }
    out
}
