//! Session log parsing, cleaning and corpus loading.
//!
//! A session file is a comma-separated list of mouse events with the columns
//! `rtime,ctime,button,state,x,y`, optionally preceded by one header line.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: line {line}: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },
    #[error("{path}: line {line}: unknown {field} token `{token}`")]
    UnknownToken {
        path: PathBuf,
        line: usize,
        field: &'static str,
        token: String,
    },
    #[error("{0}: session contains no events")]
    EmptySession(PathBuf),
    #[error("{0}: cleaning removed every event")]
    AllEventsRemoved(PathBuf),
    #[error("test session `{0}` has no entry in the labels file")]
    MissingLabel(String),
    #[error("bad labels file {path}: {reason}")]
    BadLabelFile { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Button {
    None,
    Left,
    Right,
    Middle,
    Scroll,
}

impl Button {
    /// Recognized file token. Anything starting with `Scroll` folds to
    /// [`Button::Scroll`].
    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "NoButton" => Some(Button::None),
            "Left" => Some(Button::Left),
            "Right" => Some(Button::Right),
            "Middle" => Some(Button::Middle),
            t if t.starts_with("Scroll") => Some(Button::Scroll),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Button::None => "NoButton",
            Button::Left => "Left",
            Button::Right => "Right",
            Button::Middle => "Middle",
            Button::Scroll => "Scroll",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ButtonState {
    Move,
    Pressed,
    Released,
    Drag,
    Down,
    Up,
}

impl ButtonState {
    pub fn from_token(token: &str) -> Option<Self> {
        match token {
            "Move" => Some(ButtonState::Move),
            "Pressed" => Some(ButtonState::Pressed),
            "Released" => Some(ButtonState::Released),
            "Drag" => Some(ButtonState::Drag),
            "Down" => Some(ButtonState::Down),
            "Up" => Some(ButtonState::Up),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ButtonState::Move => "Move",
            ButtonState::Pressed => "Pressed",
            ButtonState::Released => "Released",
            ButtonState::Drag => "Drag",
            ButtonState::Down => "Down",
            ButtonState::Up => "Up",
        }
    }
}

/// One recorded mouse event. `ctime` (client clock) is the timestamp used by
/// every downstream stage; `rtime` is kept for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MouseEvent {
    pub rtime: f64,
    pub ctime: f64,
    pub button: Button,
    pub state: ButtonState,
    pub x: u32,
    pub y: u32,
}

impl MouseEvent {
    /// Equality over every field except `rtime`.
    fn same_record(&self, other: &MouseEvent) -> bool {
        self.ctime == other.ctime
            && self.button == other.button
            && self.state == other.state
            && self.x == other.x
            && self.y == other.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionRole {
    Training,
    TestPositive,
    TestNegative,
}

impl SessionRole {
    pub fn is_test(self) -> bool {
        !matches!(self, SessionRole::Training)
    }

    /// Genuine means the session really belongs to the user whose directory
    /// holds it.
    pub fn is_genuine(self) -> bool {
        !matches!(self, SessionRole::TestNegative)
    }
}

impl fmt::Display for SessionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionRole::Training => "training",
            SessionRole::TestPositive => "test_positive",
            SessionRole::TestNegative => "test_negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: u32,
    pub session_id: String,
    pub role: SessionRole,
    pub events: Vec<MouseEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TokenMode {
    /// Unknown button/state tokens are an error.
    #[default]
    Strict,
    /// Unknown tokens become `NoButton` / `Move`.
    Lenient,
}

/// What counts as a duplicated entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DedupMode {
    /// Consecutive events equal in (ctime, button, state, x, y).
    #[default]
    ExactRecord,
    /// Consecutive events with the same coordinates and button/state,
    /// regardless of time.
    SameCoordinates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanConfig {
    pub max_x: u32,
    pub max_y: u32,
    pub dedup: DedupMode,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            max_x: 4096,
            max_y: 4096,
            dedup: DedupMode::ExactRecord,
        }
    }
}

fn parse_f64(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses session text. `path` only labels errors.
pub fn parse_events(text: &str, path: &Path, mode: TokenMode) -> Result<Vec<MouseEvent>, IngestError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let malformed = |reason: String| IngestError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        // A header is only tolerated as the first line.
        if idx == 0 && fields.len() == 6 && parse_f64(fields[0]).is_none() {
            continue;
        }
        if fields.len() != 6 {
            return Err(malformed(format!("expected 6 fields, found {}", fields.len())));
        }
        let rtime = parse_f64(fields[0]).ok_or_else(|| malformed(format!("bad rtime `{}`", fields[0])))?;
        let ctime = parse_f64(fields[1]).ok_or_else(|| malformed(format!("bad ctime `{}`", fields[1])))?;
        let button = match (Button::from_token(fields[2].trim()), mode) {
            (Some(b), _) => b,
            (None, TokenMode::Lenient) => Button::None,
            (None, TokenMode::Strict) => {
                return Err(IngestError::UnknownToken {
                    path: path.to_path_buf(),
                    line: line_no,
                    field: "button",
                    token: fields[2].to_string(),
                })
            }
        };
        let state = match (ButtonState::from_token(fields[3].trim()), mode) {
            (Some(s), _) => s,
            (None, TokenMode::Lenient) => ButtonState::Move,
            (None, TokenMode::Strict) => {
                return Err(IngestError::UnknownToken {
                    path: path.to_path_buf(),
                    line: line_no,
                    field: "state",
                    token: fields[3].to_string(),
                })
            }
        };
        let x = fields[4]
            .trim()
            .parse::<u32>()
            .map_err(|_| malformed(format!("bad x `{}`", fields[4])))?;
        let y = fields[5]
            .trim()
            .parse::<u32>()
            .map_err(|_| malformed(format!("bad y `{}`", fields[5])))?;
        events.push(MouseEvent {
            rtime,
            ctime,
            button,
            state,
            x,
            y,
        });
    }
    if events.is_empty() {
        return Err(IngestError::EmptySession(path.to_path_buf()));
    }
    Ok(events)
}

/// Reads one session file. The session id is the file name; the role defaults
/// to [`SessionRole::Training`] and is reassigned by [`load_corpus`].
pub fn parse_session(path: &Path, user_id: u32, mode: TokenMode) -> Result<Session, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let events = parse_events(&text, path, mode)?;
    let session_id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Session {
        user_id,
        session_id,
        role: SessionRole::Training,
        events,
    })
}

pub const SESSION_HEADER: &str = "record timestamp,client timestamp,button,state,x,y";

/// Writes events in session-file format, header included.
pub fn write_events<W: Write>(mut out: W, events: &[MouseEvent]) -> std::io::Result<()> {
    writeln!(out, "{SESSION_HEADER}")?;
    for e in events {
        writeln!(
            out,
            "{:?},{:?},{},{},{},{}",
            e.rtime,
            e.ctime,
            e.button.token(),
            e.state.token(),
            e.x,
            e.y
        )?;
    }
    Ok(())
}

/// Applies the cleaning rules in order:
/// 1. consecutive duplicates collapse to one;
/// 2. out-of-bounds coordinates take the last in-bounds coordinates seen
///    (events with no in-bounds predecessor are dropped);
/// 3. scroll events are removed;
/// 4. of consecutive events sharing a `ctime`, only the last is kept.
///
/// Returns an empty vector when nothing survives; [`clean_session`] turns that
/// into [`IngestError::AllEventsRemoved`].
pub fn clean_events(events: &[MouseEvent], cfg: &CleanConfig) -> Vec<MouseEvent> {
    let mut deduped: Vec<MouseEvent> = Vec::with_capacity(events.len());
    for e in events {
        let dup = deduped.last().is_some_and(|prev| match cfg.dedup {
            DedupMode::ExactRecord => prev.same_record(e),
            DedupMode::SameCoordinates => {
                prev.x == e.x && prev.y == e.y && prev.button == e.button && prev.state == e.state
            }
        });
        if !dup {
            deduped.push(*e);
        }
    }

    let mut last_in_bounds: Option<(u32, u32)> = None;
    let mut bounded = Vec::with_capacity(deduped.len());
    for mut e in deduped {
        if e.x > cfg.max_x || e.y > cfg.max_y {
            match last_in_bounds {
                Some((x, y)) => {
                    e.x = x;
                    e.y = y;
                }
                None => continue,
            }
        } else {
            last_in_bounds = Some((e.x, e.y));
        }
        bounded.push(e);
    }

    let mut out: Vec<MouseEvent> = Vec::with_capacity(bounded.len());
    for e in bounded.into_iter().filter(|e| e.button != Button::Scroll) {
        match out.last_mut() {
            Some(prev) if prev.ctime == e.ctime => *prev = e,
            _ => out.push(e),
        }
    }
    out
}

pub fn clean_session(mut session: Session, cfg: &CleanConfig) -> Result<Session, IngestError> {
    session.events = clean_events(&session.events, cfg);
    if session.events.is_empty() {
        return Err(IngestError::AllEventsRemoved(PathBuf::from(&session.session_id)));
    }
    Ok(session)
}

/// Test sessions missing from the labels file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UnlabeledPolicy {
    #[default]
    Error,
    /// Leave the session out of the corpus.
    Skip,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadOptions {
    pub clean: CleanConfig,
    pub tokens: TokenMode,
    pub unlabeled: UnlabeledPolicy,
    /// Ignore the test part entirely; no labels file is needed.
    pub training_only: bool,
}

pub const TRAINING_DIR: &str = "training_files";
pub const TEST_DIR: &str = "test_files";

/// Reads a labels file: header line, then `filename,is_illegal` rows.
pub fn read_labels(path: &Path) -> Result<HashMap<String, bool>, IngestError> {
    let bad = |reason: String| IngestError::BadLabelFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut labels = HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 2 {
            return Err(bad(format!("row {}: expected 2 columns", i + 2)));
        }
        let illegal = match &rec[1] {
            "0" | "0.0" => false,
            "1" | "1.0" => true,
            other => return Err(bad(format!("row {}: is_illegal must be 0 or 1, got `{other}`", i + 2))),
        };
        labels.insert(rec[0].to_string(), illegal);
    }
    Ok(labels)
}

/// `user12` -> 12.
pub fn user_id_from_dir(name: &str) -> Option<u32> {
    let digits: String = name.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn list_session_files(part_dir: &Path) -> Result<Vec<(u32, PathBuf)>, IngestError> {
    let mut files = Vec::new();
    if !part_dir.is_dir() {
        return Ok(files);
    }
    let users = fs::read_dir(part_dir).map_err(|e| IngestError::io(part_dir, e))?;
    for entry in users {
        let entry = entry.map_err(|e| IngestError::io(part_dir, e))?;
        let user_dir = entry.path();
        if !user_dir.is_dir() {
            continue;
        }
        let Some(user_id) = user_id_from_dir(&entry.file_name().to_string_lossy()) else {
            continue;
        };
        for f in fs::read_dir(&user_dir).map_err(|e| IngestError::io(&user_dir, e))? {
            let f = f.map_err(|e| IngestError::io(&user_dir, e))?;
            let p = f.path();
            let hidden = f.file_name().to_string_lossy().starts_with('.');
            if p.is_file() && !hidden {
                files.push((user_id, p));
            }
        }
    }
    Ok(files)
}

/// Loads every session under `root/training_files/user*/` and
/// `root/test_files/user*/`, cleans it and assigns its role. The result is
/// ordered by (role part, user id, session id).
pub fn load_corpus(root: &Path, labels: Option<&Path>, opts: &LoadOptions) -> Result<Vec<Session>, IngestError> {
    let training = list_session_files(&root.join(TRAINING_DIR))?;
    let test = if opts.training_only {
        Vec::new()
    } else {
        list_session_files(&root.join(TEST_DIR))?
    };

    let label_map = match (labels, test.is_empty()) {
        (Some(p), _) => read_labels(p)?,
        (None, true) => HashMap::new(),
        (None, false) => {
            return Err(IngestError::BadLabelFile {
                path: PathBuf::new(),
                reason: "test sessions present but no labels file given".into(),
            })
        }
    };

    let mut jobs: Vec<(u32, PathBuf, SessionRole)> = training
        .into_iter()
        .map(|(u, p)| (u, p, SessionRole::Training))
        .collect();
    for (u, p) in test {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match label_map.get(&name) {
            Some(true) => jobs.push((u, p, SessionRole::TestNegative)),
            Some(false) => jobs.push((u, p, SessionRole::TestPositive)),
            None => match opts.unlabeled {
                UnlabeledPolicy::Error => return Err(IngestError::MissingLabel(name)),
                UnlabeledPolicy::Skip => log::debug!("skipping unlabeled test session {name}"),
            },
        }
    }

    let mut sessions = jobs
        .into_par_iter()
        .map(|(user_id, path, role)| {
            let mut s = parse_session(&path, user_id, opts.tokens)?;
            s.role = role;
            s.events = clean_events(&s.events, &opts.clean);
            if s.events.is_empty() {
                return Err(IngestError::AllEventsRemoved(path));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>, IngestError>>()?;
    sessions.sort_by(|a, b| {
        (a.role.is_test(), a.user_id, &a.session_id).cmp(&(b.role.is_test(), b.user_id, &b.session_id))
    });
    Ok(sessions)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub training: usize,
    pub test_positive: usize,
    pub test_negative: usize,
}

pub fn role_counts(sessions: &[Session]) -> RoleCounts {
    let mut c = RoleCounts::default();
    for s in sessions {
        match s.role {
            SessionRole::Training => c.training += 1,
            SessionRole::TestPositive => c.test_positive += 1,
            SessionRole::TestNegative => c.test_negative += 1,
        }
    }
    c
}
