//! Splitting a cleaned event stream into MM, PC and DD mouse actions.
//!
//! Pass one cuts the stream after every `Released` event. A segment whose
//! `Released` directly follows a `Pressed` ends in a point-and-click (PC)
//! action; a segment whose `Released` closes a left-button `Pressed`, `Drag`,
//! ..., `Released` run ends in a drag-and-drop (DD) action. Pass two splits the
//! movement part of each segment wherever two consecutive events are more
//! than `gap_threshold` seconds apart. Only the piece touching the click
//! becomes part of the PC action; every other piece is a mouse-move (MM)
//! action. Actions shorter than `min_events` events are dropped.
//!
//! Button state outranks time: a long pause between `Pressed` and `Released`
//! never splits the enclosing PC or DD action.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{Button, ButtonState, MouseEvent, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    MM,
    PC,
    DD,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::MM, ActionKind::PC, ActionKind::DD];

    /// Dense categorical code used by the classifier.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::MM => "MM",
            ActionKind::PC => "PC",
            ActionKind::DD => "DD",
        })
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MM" => Ok(ActionKind::MM),
            "PC" => Ok(ActionKind::PC),
            "DD" => Ok(ActionKind::DD),
            other => Err(format!("unknown action kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MouseAction {
    pub kind: ActionKind,
    pub points: Vec<Point>,
    pub user_id: u32,
    pub session_id: String,
    /// Indices of the source events in the cleaned session.
    pub events: Range<usize>,
}

impl MouseAction {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.t)
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    /// Seconds; a larger pause between consecutive movement events splits.
    pub gap_threshold: f64,
    pub min_events: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            gap_threshold: 10.0,
            min_events: 4,
        }
    }
}

struct Segmenter<'a> {
    session: &'a Session,
    cfg: SegmentConfig,
    out: Vec<MouseAction>,
}

impl Segmenter<'_> {
    fn events(&self) -> &[MouseEvent] {
        &self.session.events
    }

    /// True when the pair (i-1, i) must not share an action.
    fn breaks_before(&self, i: usize) -> bool {
        let ev = self.events();
        let dt = ev[i].ctime - ev[i - 1].ctime;
        dt > self.cfg.gap_threshold || dt <= 0.0
    }

    fn emit(&mut self, kind: ActionKind, range: Range<usize>) {
        if range.len() < self.cfg.min_events {
            return;
        }
        let slice = &self.events()[range.clone()];
        if slice.windows(2).any(|w| w[1].ctime <= w[0].ctime) {
            log::debug!(
                "{}: dropping {kind} action with non-increasing time at events {range:?}",
                self.session.session_id
            );
            return;
        }
        let points = slice
            .iter()
            .map(|e| Point {
                x: f64::from(e.x),
                y: f64::from(e.y),
                t: e.ctime,
            })
            .collect();
        self.out.push(MouseAction {
            kind,
            points,
            user_id: self.session.user_id,
            session_id: self.session.session_id.clone(),
            events: range,
        });
    }

    /// Gap-splits `range` into MM actions.
    fn movement(&mut self, range: Range<usize>) {
        let mut start = range.start;
        for i in range.start + 1..range.end {
            if self.breaks_before(i) {
                self.emit(ActionKind::MM, start..i);
                start = i;
            }
        }
        if start < range.end {
            self.emit(ActionKind::MM, start..range.end);
        }
    }

    /// `range` ends at a `Released` event.
    fn terminated(&mut self, range: Range<usize>) {
        let ev = self.events();
        let release = range.end - 1;
        if release > range.start && ev[release - 1].state == ButtonState::Pressed {
            let press = release - 1;
            // The last movement piece before the press joins the click.
            let click_start = (range.start + 1..=press)
                .rev()
                .find(|&i| self.breaks_before(i))
                .unwrap_or(range.start);
            self.movement(range.start..click_start);
            self.emit(ActionKind::PC, click_start..range.end);
            return;
        }
        let press = (range.start..release)
            .rev()
            .find(|&i| ev[i].state == ButtonState::Pressed);
        if let Some(press) = press {
            let dragged = ev[press + 1..release].iter().any(|e| e.state == ButtonState::Drag);
            if ev[press].button == Button::Left && dragged {
                self.movement(range.start..press);
                self.emit(ActionKind::DD, press..range.end);
                return;
            }
        }
        self.movement(range);
    }
}

/// Segments one cleaned session. Actions come back in temporal order.
pub fn segment(session: &Session, cfg: &SegmentConfig) -> Vec<MouseAction> {
    let mut seg = Segmenter {
        session,
        cfg: *cfg,
        out: Vec::new(),
    };
    let mut start = 0;
    for (i, e) in session.events.iter().enumerate() {
        if e.state == ButtonState::Released {
            seg.terminated(start..i + 1);
            start = i + 1;
        }
    }
    if start < session.events.len() {
        seg.movement(start..session.events.len());
    }
    seg.out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionHistogram {
    pub mm: usize,
    pub pc: usize,
    pub dd: usize,
}

impl ActionHistogram {
    pub fn total(&self) -> usize {
        self.mm + self.pc + self.dd
    }

    pub fn count(&self, kind: ActionKind) -> usize {
        match kind {
            ActionKind::MM => self.mm,
            ActionKind::PC => self.pc,
            ActionKind::DD => self.dd,
        }
    }

    /// Share of `kind` in percent; zero for an empty histogram.
    pub fn percent(&self, kind: ActionKind) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * self.count(kind) as f64 / t as f64,
        }
    }

    pub fn add(&mut self, kind: ActionKind) {
        match kind {
            ActionKind::MM => self.mm += 1,
            ActionKind::PC => self.pc += 1,
            ActionKind::DD => self.dd += 1,
        }
    }
}

impl std::ops::AddAssign for ActionHistogram {
    fn add_assign(&mut self, rhs: Self) {
        self.mm += rhs.mm;
        self.pc += rhs.pc;
        self.dd += rhs.dd;
    }
}

pub fn action_type_histogram<'a, I>(actions: I) -> ActionHistogram
where
    I: IntoIterator<Item = &'a MouseAction>,
{
    let mut h = ActionHistogram::default();
    for a in actions {
        h.add(a.kind);
    }
    h
}
