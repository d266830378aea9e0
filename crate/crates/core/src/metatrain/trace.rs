use std::io::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const TRACE_HEADER: &str = "epoch,query_index,step,loss_g_adv,loss_g_l1,loss_d";

/// One loss-trace line. Generator rows leave `loss_d` empty and
/// discriminator rows leave the generator columns empty; in cGAN mode one
/// row per batch carries all three.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    /// Query position in MetalGAN mode, batch position in cGAN mode.
    pub query_index: usize,
    pub step: usize,
    pub loss_g_adv: Option<f64>,
    pub loss_g_l1: Option<f64>,
    pub loss_d: Option<f64>,
}

impl TraceRow {
    pub fn generator(epoch: usize, query_index: usize, step: usize, adv: f64, l1: f64) -> Self {
        TraceRow {
            epoch,
            query_index,
            step,
            loss_g_adv: Some(adv),
            loss_g_l1: Some(l1),
            loss_d: None,
        }
    }

    pub fn discriminator(epoch: usize, query_index: usize, step: usize, loss: f64) -> Self {
        TraceRow {
            epoch,
            query_index,
            step,
            loss_g_adv: None,
            loss_g_l1: None,
            loss_d: Some(loss),
        }
    }

    pub fn is_generator(&self) -> bool {
        self.loss_g_l1.is_some()
    }

    fn line(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.query_index,
            self.step,
            cell(self.loss_g_adv),
            cell(self.loss_g_l1),
            cell(self.loss_d)
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return None;
        }
        let opt = |s: &str| if s.is_empty() { Some(None) } else { s.parse().ok().map(Some) };
        Some(TraceRow {
            epoch: f[0].parse().ok()?,
            query_index: f[1].parse().ok()?,
            step: f[2].parse().ok()?,
            loss_g_adv: opt(f[3])?,
            loss_g_l1: opt(f[4])?,
            loss_d: opt(f[5])?,
        })
    }
}

/// Append rows, writing the header first if the file is new or empty.
pub fn append_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(TRACE_HEADER);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.line());
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Config(format!("{}: missing trace header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| TraceRow::parse(l).ok_or_else(|| Error::Config(format!("{}: bad row {}", path.display(), i + 2))))
        .collect()
}
