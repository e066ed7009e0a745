//! Counterexamples drawn as per-thread timelines of register operations.
//!
//! Steps of the path are the time axis. An operation spans from its
//! invocation to its response; order and execute actions are marked inside
//! the span. Reads are numbered `r1, r2, ...` and writes `w1, w2, ...` in
//! invocation order.

use std::fmt::Write as _;

use serde::Serialize;

use super::properties::Counterexample;
use super::system::Label;
use super::CheckError;
use crate::action::Action;
use crate::algorithms::program::RegisterId;
use crate::algorithms::Program;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimelineOp {
    pub name: String,
    pub thread: u8,
    pub register: String,
    #[serde(skip)]
    pub register_id: RegisterId,
    pub kind: OpKind,
    /// Written value, or the value a finished read returned.
    pub value: Option<u8>,
    pub start: usize,
    /// Step of the response; `None` while still in progress at the end.
    pub end: Option<usize>,
    /// Step of the order (regular) or execute (atomic) action.
    pub mark: Option<usize>,
    /// Names of the operations on the same register that overlap this one.
    pub overlaps: Vec<String>,
}

impl TimelineOp {
    fn last(&self, steps: usize) -> usize {
        self.end.unwrap_or(steps.saturating_sub(1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimelineEvent {
    pub step: usize,
    pub thread: u8,
    pub event: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Timeline {
    pub threads: usize,
    pub steps: usize,
    pub ops: Vec<TimelineOp>,
    pub events: Vec<TimelineEvent>,
    /// Step where the closing cycle of a lasso starts.
    pub loop_start: Option<usize>,
}

/// Lays out the register operations of a counterexample.
pub fn render_timeline(program: &Program, cx: &Counterexample) -> Result<Timeline, CheckError> {
    let threads = program.threads as usize;
    let mut open: Vec<Option<usize>> = vec![None; threads];
    let mut ops: Vec<TimelineOp> = Vec::new();
    let mut events = Vec::new();
    let (mut reads, mut writes) = (0, 0);
    for (step, label) in cx.labels.iter().enumerate() {
        let t = label.thread().index();
        if t >= threads {
            return Err(CheckError::Timeline(format!("step {step} names thread {t}")));
        }
        let mut event = |name| {
            events.push(TimelineEvent {
                step,
                thread: t as u8,
                event: name,
            })
        };
        let r = match *label {
            Label::Register(r, a) => (r, a),
            Label::Crit(_) => {
                event("crit");
                continue;
            }
            Label::NonCrit(_) => {
                event("noncrit");
                continue;
            }
            Label::Acquire(_) => {
                event("acquire");
                continue;
            }
            Label::Release(_) => {
                event("release");
                continue;
            }
        };
        let (reg, action) = r;
        let malformed = || CheckError::Timeline(format!("step {step}: {action} without a matching invocation"));
        match action {
            Action::InvokeRead(_) | Action::InvokeWrite(..) => {
                if open[t].is_some() {
                    return Err(CheckError::Timeline(format!("step {step}: thread {t} is already busy")));
                }
                let (kind, name, value) = match action {
                    Action::InvokeWrite(_, v) => {
                        writes += 1;
                        (OpKind::Write, format!("w{writes}"), Some(v.0))
                    }
                    _ => {
                        reads += 1;
                        (OpKind::Read, format!("r{reads}"), None)
                    }
                };
                open[t] = Some(ops.len());
                ops.push(TimelineOp {
                    name,
                    thread: t as u8,
                    register: program.registers.get(reg).map(|d| d.name.clone()).ok_or_else(malformed)?,
                    register_id: reg,
                    kind,
                    value,
                    start: step,
                    end: None,
                    mark: None,
                    overlaps: Vec::new(),
                });
            }
            Action::OrderWrite(_) | Action::ExecuteRead(_) | Action::ExecuteWrite(_) => {
                let k = open[t].ok_or_else(malformed)?;
                ops[k].mark = Some(step);
            }
            Action::FinishRead(..) | Action::FinishWrite(_) => {
                let k = open[t].take().ok_or_else(malformed)?;
                if let Action::FinishRead(_, v) = action {
                    ops[k].value = Some(v.0);
                }
                ops[k].end = Some(step);
            }
            Action::Crit(_) | Action::NonCrit(_) => return Err(malformed()),
        }
    }
    let steps = cx.labels.len();
    for a in 0..ops.len() {
        for b in 0..ops.len() {
            if a != b
                && ops[a].register_id == ops[b].register_id
                && ops[a].start <= ops[b].last(steps)
                && ops[b].start <= ops[a].last(steps)
            {
                let name = ops[b].name.clone();
                ops[a].overlaps.push(name);
            }
        }
    }
    Ok(Timeline {
        threads,
        steps,
        ops,
        events,
        loop_start: cx.loop_start,
    })
}

impl Timeline {
    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn op(&self, name: &str) -> Option<&TimelineOp> {
        self.ops.iter().find(|o| o.name == name)
    }

    fn caption(op: &TimelineOp) -> String {
        match (op.kind, op.value) {
            (OpKind::Write, Some(v)) => format!("{} {}:={v}", op.name, op.register),
            (OpKind::Read, Some(v)) => format!("{} {}={v}", op.name, op.register),
            _ => format!("{} {}", op.name, op.register),
        }
    }

    /// One row per thread, one column per step, then one line per
    /// operation.
    pub fn to_text(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let mut out = String::new();
        let mut rows = vec![vec![' '; self.steps]; self.threads];
        for op in &self.ops {
            let row = &mut rows[op.thread as usize];
            let last = op.last(self.steps);
            for c in row.iter_mut().take(last + 1).skip(op.start) {
                *c = '-';
            }
            row[op.start] = '[';
            if op.end.is_some() {
                row[last] = ']';
            }
            if let Some(m) = op.mark {
                row[m] = '|';
            }
        }
        for e in &self.events {
            rows[e.thread as usize][e.step] = match e.event {
                "crit" => 'C',
                "noncrit" => 'N',
                "acquire" => 'A',
                _ => 'R',
            };
        }
        if let Some(k) = self.loop_start {
            let mut axis = vec![' '; self.steps];
            axis[k.min(self.steps - 1)] = '^';
            writeln!(out, "     {}  cycle from ^", axis.into_iter().collect::<String>()).unwrap();
        }
        for (t, row) in rows.into_iter().enumerate() {
            writeln!(out, "t{t:<3} {}", row.into_iter().collect::<String>()).unwrap();
        }
        out.push('\n');
        for op in &self.ops {
            let span = match op.end {
                Some(e) => format!("{}..{}", op.start, e),
                None => format!("{}..", op.start),
            };
            write!(out, "{:<16} t{} steps {span}", Self::caption(op), op.thread).unwrap();
            if let Some(m) = op.mark {
                write!(out, " mark {m}").unwrap();
            }
            if !op.overlaps.is_empty() {
                write!(out, " overlaps {}", op.overlaps.join(",")).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// The same layout as an SVG document.
    pub fn to_svg(&self) -> String {
        const COL: usize = 14;
        const ROW: usize = 48;
        const LEFT: usize = 40;
        let width = LEFT + COL * self.steps.max(1) + 20;
        let height = ROW * self.threads.max(1) + 20;
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="10">"#
        )
        .unwrap();
        if self.is_empty() {
            s.push_str("</svg>\n");
            return s;
        }
        let x = |step: usize| LEFT + step * COL;
        for t in 0..self.threads {
            let y = 10 + t * ROW + ROW / 2;
            writeln!(s, r#"<text x="4" y="{}">t{t}</text>"#, y + 4).unwrap();
            writeln!(
                s,
                r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ccc"/>"##,
                LEFT,
                x(self.steps)
            )
            .unwrap();
        }
        for op in &self.ops {
            let y = 10 + op.thread as usize * ROW + ROW / 2 - 8;
            let x0 = x(op.start);
            let x1 = x(op.last(self.steps)) + COL;
            let fill = match op.kind {
                OpKind::Read => "#dbe8ff",
                OpKind::Write => "#ffe2cc",
            };
            let dash = if op.end.is_none() { r#" stroke-dasharray="3,2""# } else { "" };
            writeln!(
                s,
                r##"<rect x="{x0}" y="{y}" width="{}" height="16" fill="{fill}" stroke="#333"{dash}/>"##,
                x1 - x0
            )
            .unwrap();
            writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x0 + 2, y - 2, Self::caption(op)).unwrap();
            if let Some(m) = op.mark {
                let mx = x(m) + COL / 2;
                writeln!(s, r##"<line x1="{mx}" y1="{y}" x2="{mx}" y2="{}" stroke="#c00" stroke-width="2"/>"##, y + 16)
                    .unwrap();
            }
        }
        for e in &self.events {
            let y = 10 + e.thread as usize * ROW + ROW / 2 + 4;
            let letter = match e.event {
                "crit" => "C",
                "noncrit" => "N",
                "acquire" => "A",
                _ => "R",
            };
            writeln!(s, r#"<text x="{}" y="{y}" font-weight="bold">{letter}</text>"#, x(e.step) + 3).unwrap();
        }
        if let Some(k) = self.loop_start {
            let lx = x(k);
            writeln!(
                s,
                r##"<line x1="{lx}" y1="4" x2="{lx}" y2="{}" stroke="#080" stroke-dasharray="4,3"/>"##,
                height - 4
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}
