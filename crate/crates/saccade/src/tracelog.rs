//! Episode trace log: one JSON object per line.
//!
//! ```text
//! {"image_id":7,"label":3,"prediction":3,"reward":1.0,"model":"MRAM, 10 glimpses","image_size":28,
//!  "steps":[{"t":1,"loc_x":-0.2,"loc_y":0.5,"pixel_x":10.8,"pixel_y":20.25,"baseline":0.91,"log_prob":1.3},...],
//!  "logits":[...]}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use saccade_core::glimpse::{to_pixel, Location};
use saccade_core::scanpath::ScanPath;
use saccade_core::training::EpisodeTrace;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub loc_x: f64,
    pub loc_y: f64,
    pub pixel_x: f64,
    pub pixel_y: f64,
    pub baseline: f64,
    pub log_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub image_id: u64,
    pub label: usize,
    pub prediction: usize,
    pub reward: f64,
    pub model: String,
    pub image_size: usize,
    pub steps: Vec<StepRecord>,
    pub logits: Vec<f64>,
}

impl TraceRecord {
    pub fn new(trace: &EpisodeTrace, model: &str, image_size: usize) -> Self {
        let steps = trace
            .locations
            .iter()
            .enumerate()
            .map(|(i, &loc)| {
                let (px, py) = to_pixel(loc, image_size);
                StepRecord {
                    t: i + 1,
                    loc_x: loc.x,
                    loc_y: loc.y,
                    pixel_x: px,
                    pixel_y: py,
                    baseline: trace.baselines[i],
                    log_prob: trace.log_probs[i],
                }
            })
            .collect();
        TraceRecord {
            image_id: trace.image_id,
            label: trace.label,
            prediction: trace.prediction,
            reward: trace.reward,
            model: model.to_string(),
            image_size,
            steps,
            logits: trace.logits.clone(),
        }
    }

    pub fn to_trace(&self) -> EpisodeTrace {
        EpisodeTrace {
            image_id: self.image_id,
            label: self.label,
            prediction: self.prediction,
            reward: self.reward,
            locations: self.steps.iter().map(|s| Location::new(s.loc_x, s.loc_y)).collect(),
            log_probs: self.steps.iter().map(|s| s.log_prob).collect(),
            baselines: self.steps.iter().map(|s| s.baseline).collect(),
            logits: self.logits.clone(),
        }
    }

    pub fn scan_path(&self) -> ScanPath {
        ScanPath {
            image_id: self.image_id,
            label: Some(self.label),
            model_tag: self.model.clone(),
            points: self.steps.iter().map(|s| (s.pixel_x, s.pixel_y)).collect(),
        }
    }
}

pub fn write_jsonl(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}
