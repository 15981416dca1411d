//! Synthetic corpora in the on-disk session layout, for tests and demos.
//!
//! Each user gets a fixed movement style (speed, path bow, sampling rate,
//! action mix). Test sessions of a user directory are either drawn from that
//! user's style (genuine) or from another user's style (impostor).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::{write_events, Button, ButtonState, MouseEvent, Session, SessionRole, TEST_DIR, TRAINING_DIR};
use crate::seed::{derive_seed, rng_for};

const SCREEN_W: f64 = 1920.0;
const SCREEN_H: f64 = 1080.0;
const TAG_STYLE: u64 = 0x7374_796c;
const TAG_SESSION: u64 = 0x7365_7373;
/// Pause inserted after free movements so they end as separate actions.
const IDLE_GAP: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserStyle {
    /// Mean speed in pixels per second.
    pub speed: f64,
    /// Lateral bow of a path as a fraction of its length.
    pub bow: f64,
    /// Mean sampling interval in seconds.
    pub dt: f64,
    pub p_click: f64,
    pub p_drag: f64,
    /// Relative per-action speed variation.
    pub jitter: f64,
}

impl UserStyle {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            speed: rng.gen_range(300.0..2500.0),
            bow: rng.gen_range(-0.35..0.35),
            dt: rng.gen_range(0.008..0.05),
            p_click: rng.gen_range(0.3..0.6),
            p_drag: rng.gen_range(0.05..0.25),
            jitter: rng.gen_range(0.05..0.25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub users: u32,
    pub training_sessions: usize,
    /// Genuine and impostor test sessions per user, each.
    pub test_sessions: usize,
    pub actions_per_session: usize,
    /// Sprinkle scroll events, duplicates and off-screen coordinates.
    pub messy: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 4,
            training_sessions: 2,
            test_sessions: 1,
            actions_per_session: 40,
            messy: false,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub styles: BTreeMap<u32, UserStyle>,
    pub sessions: Vec<Session>,
    /// Test session file name -> is_illegal.
    pub labels: BTreeMap<String, bool>,
}

struct Recorder {
    events: Vec<MouseEvent>,
    t: f64,
    pos: (f64, f64),
}

impl Recorder {
    fn push(&mut self, button: Button, state: ButtonState, x: f64, y: f64) {
        self.events.push(MouseEvent {
            rtime: (self.t * 1000.0).round() / 1000.0,
            ctime: self.t,
            button,
            state,
            x: x.round().clamp(0.0, SCREEN_W) as u32,
            y: y.round().clamp(0.0, SCREEN_H) as u32,
        });
    }

    /// Samples a bowed path from the current position to `to`.
    fn stroke<R: Rng>(&mut self, rng: &mut R, style: &UserStyle, to: (f64, f64), button: Button, state: ButtonState) {
        let from = self.pos;
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let len = dx.hypot(dy).max(1.0);
        let speed = style.speed * (1.0 + style.jitter * rng.gen_range(-1.0..1.0));
        let duration = (len / speed).max(6.0 * style.dt);
        let (nx, ny) = (-dy / len, dx / len);
        let t0 = self.t;
        let mut u = 0.0;
        while u < 1.0 {
            self.t += style.dt * rng.gen_range(0.7..1.3);
            u = ((self.t - t0) / duration).min(1.0);
            // Smooth-step progress gives a bell-shaped speed profile.
            let s = u * u * (3.0 - 2.0 * u);
            let off = style.bow * len * 4.0 * s * (1.0 - s);
            let x = from.0 + dx * s + nx * off + rng.gen_range(-0.5..0.5);
            let y = from.1 + dy * s + ny * off + rng.gen_range(-0.5..0.5);
            self.push(button, state, x, y);
        }
        self.pos = to;
    }
}

fn random_target<R: Rng>(rng: &mut R) -> (f64, f64) {
    (
        rng.gen_range(20.0..SCREEN_W - 20.0),
        rng.gen_range(20.0..SCREEN_H - 20.0),
    )
}

/// Events of one session drawn from `style`.
pub fn session_events(style: &UserStyle, actions: usize, messy: bool, rng: &mut ChaCha8Rng) -> Vec<MouseEvent> {
    let mut rec = Recorder {
        events: Vec::new(),
        t: 0.0,
        pos: random_target(rng),
    };
    for _ in 0..actions {
        let target = random_target(rng);
        let r: f64 = rng.gen();
        if r < style.p_drag {
            let (x, y) = rec.pos;
            rec.t += style.dt;
            rec.push(Button::Left, ButtonState::Pressed, x, y);
            rec.stroke(rng, style, target, Button::None, ButtonState::Drag);
            rec.t += style.dt;
            rec.push(Button::Left, ButtonState::Released, target.0, target.1);
        } else if r < style.p_drag + style.p_click {
            rec.stroke(rng, style, target, Button::None, ButtonState::Move);
            let button = if rng.gen_bool(0.9) { Button::Left } else { Button::Right };
            rec.t += 0.05 + style.dt;
            rec.push(button, ButtonState::Pressed, target.0, target.1);
            rec.t += 0.08 + style.dt;
            rec.push(button, ButtonState::Released, target.0, target.1);
        } else {
            rec.stroke(rng, style, target, Button::None, ButtonState::Move);
            rec.t += IDLE_GAP;
        }
        rec.t += rng.gen_range(0.2..1.0);
        if messy && rng.gen_bool(0.1) {
            let (x, y) = rec.pos;
            rec.push(Button::Scroll, ButtonState::Down, x, y);
            let dup = *rec.events.last().expect("just pushed");
            rec.events.push(dup);
            rec.t += 0.01;
            rec.events.push(MouseEvent {
                rtime: rec.t,
                ctime: rec.t,
                button: Button::None,
                state: ButtonState::Move,
                x: 65_535,
                y: y as u32,
            });
        }
    }
    rec.events
}

fn session_name(counter: &mut u64) -> String {
    *counter += 1;
    format!("session_{:010}", 1_000_000 + *counter)
}

/// Builds a corpus in memory. Users are numbered from 1.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut style_rng = rng_for(cfg.seed, &[TAG_STYLE]);
    let styles: BTreeMap<u32, UserStyle> = (1..=cfg.users)
        .map(|u| (u, UserStyle::random(&mut style_rng)))
        .collect();
    let mut sessions = Vec::new();
    let mut labels = BTreeMap::new();
    let mut counter = 0;
    for (&user, style) in &styles {
        let mut rng = rng_for(cfg.seed, &[TAG_SESSION, u64::from(user)]);
        for _ in 0..cfg.training_sessions {
            sessions.push(Session {
                user_id: user,
                session_id: session_name(&mut counter),
                role: SessionRole::Training,
                events: session_events(style, cfg.actions_per_session, cfg.messy, &mut rng),
            });
        }
        for i in 0..2 * cfg.test_sessions {
            let genuine = i % 2 == 0;
            let source = if genuine || cfg.users < 2 {
                user
            } else {
                let others: Vec<u32> = styles.keys().copied().filter(|&u| u != user).collect();
                others[rng.gen_range(0..others.len())]
            };
            let name = session_name(&mut counter);
            labels.insert(name.clone(), !genuine);
            sessions.push(Session {
                user_id: user,
                session_id: name,
                role: if genuine {
                    SessionRole::TestPositive
                } else {
                    SessionRole::TestNegative
                },
                events: session_events(&styles[&source], cfg.actions_per_session, cfg.messy, &mut rng),
            });
        }
    }
    SynthCorpus {
        styles,
        sessions,
        labels,
    }
}

/// Writes the corpus under `root` in the usual layout and returns the path of
/// the labels file.
pub fn write_corpus(corpus: &SynthCorpus, root: &Path) -> io::Result<std::path::PathBuf> {
    for s in &corpus.sessions {
        let part = if s.role.is_test() { TEST_DIR } else { TRAINING_DIR };
        let dir = root.join(part).join(format!("user{}", s.user_id));
        fs::create_dir_all(&dir)?;
        let file = fs::File::create(dir.join(&s.session_id))?;
        write_events(BufWriter::new(file), &s.events)?;
    }
    let labels = root.join("public_labels.csv");
    let mut out = BufWriter::new(fs::File::create(&labels)?);
    writeln!(out, "filename,is_illegal")?;
    for (name, illegal) in &corpus.labels {
        writeln!(out, "{name},{}", u8::from(*illegal))?;
    }
    out.flush()?;
    Ok(labels)
}

/// Deterministic seed for ad-hoc synthetic streams.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[TAG_SESSION, index])
}
