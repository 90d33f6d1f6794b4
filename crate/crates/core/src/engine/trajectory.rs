use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    Jump { mark: f64 },
    /// Zero-based regimes.
    Switch { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// State just before the event.
    pub pre_state: Vec<f64>,
    /// Regime just before the event.
    pub pre_regime: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathStatus {
    Completed,
    /// `|X|` fell below the underflow floor; the state is held at 0 from then on.
    Frozen { time: f64 },
    /// A non-finite value appeared; the path stops at the last finite state.
    Divergent { time: f64 },
}

/// One realized path of `(X, α)`: rows on the recording grid plus one row per
/// event, in time order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub dim_x: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim_x` values per row.
    pub states: Vec<f64>,
    pub regimes: Vec<usize>,
    pub row_events: Vec<Option<EventKind>>,
    pub on_grid: Vec<bool>,
    pub events: Vec<Event>,
    pub status: PathStatus,
}

impl Trajectory {
    pub(crate) fn new(dim_x: usize) -> Self {
        Self {
            dim_x,
            times: Vec::new(),
            states: Vec::new(),
            regimes: Vec::new(),
            row_events: Vec::new(),
            on_grid: Vec::new(),
            events: Vec::new(),
            status: PathStatus::Completed,
        }
    }

    pub(crate) fn push_row(
        &mut self,
        t: f64,
        x: &[f64],
        regime: usize,
        event: Option<EventKind>,
        on_grid: bool,
    ) {
        // A switch at a grid time shares the grid row.
        if let Some(&last) = self.times.last() {
            if last == t {
                let k = self.times.len() - 1;
                self.states[k * self.dim_x..].copy_from_slice(x);
                self.regimes[k] = regime;
                if event.is_some() {
                    self.row_events[k] = event;
                }
                self.on_grid[k] |= on_grid;
                return;
            }
        }
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.regimes.push(regime);
        self.row_events.push(event);
        self.on_grid.push(on_grid);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.dim_x..(row + 1) * self.dim_x]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn final_regime(&self) -> usize {
        *self.regimes.last().expect("trajectory has at least the initial row")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial row")
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self.status, PathStatus::Divergent { .. })
    }

    /// `(time, state, regime)` for the rows on the recording grid.
    pub fn grid(&self) -> impl Iterator<Item = (f64, &[f64], usize)> + '_ {
        (0..self.len())
            .filter(|&k| self.on_grid[k])
            .map(|k| (self.times[k], self.state(k), self.regimes[k]))
    }

    pub fn jump_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Jump { .. }))
            .count()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write_header(out, self.dim_x, false)?;
        self.write_rows(out, None)
    }

    pub(crate) fn write_rows<W: Write>(&self, out: &mut W, path_id: Option<usize>) -> io::Result<()> {
        for k in 0..self.len() {
            if let Some(id) = path_id {
                write!(out, "{id},")?;
            }
            write!(out, "{}", fmt_f64(self.times[k]))?;
            for v in self.state(k) {
                write!(out, ",{}", fmt_f64(*v))?;
            }
            write!(out, ",{},", self.regimes[k] + 1)?;
            match self.row_events[k] {
                None => {}
                Some(EventKind::Jump { mark }) => write!(out, "J:{}", fmt_f64(mark))?,
                Some(EventKind::Switch { from, to }) => write!(out, "S:{}->{}", from + 1, to + 1)?,
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub(crate) fn write_header<W: Write>(out: &mut W, dim_x: usize, with_path: bool) -> io::Result<()> {
    if with_path {
        write!(out, "path_id,")?;
    }
    write!(out, "t")?;
    for k in 1..=dim_x {
        write!(out, ",x_{k}")?;
    }
    writeln!(out, ",alpha,event")
}

/// Long-format CSV of several paths with a leading `path_id` column.
pub fn write_ensemble_csv<W: Write>(paths: &[Trajectory], out: &mut W) -> io::Result<()> {
    let dim_x = paths.first().map_or(1, |p| p.dim_x);
    write_header(out, dim_x, true)?;
    for (id, p) in paths.iter().enumerate() {
        p.write_rows(out, Some(id))?;
    }
    Ok(())
}

/// 17 significant digits, locale independent.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // Avoid "-0e0".
        return "0".into();
    }
    format!("{v:.16e}")
}
