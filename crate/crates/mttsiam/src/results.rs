//! Per-frame results files.
//!
//! A header line `frame,x,y,w,h,confidence,rs,status` followed by one record
//! per frame. `status` is `TRACKED` or `LOST`; a frame without a reported box
//! leaves `x,y,w,h` empty. Numbers are written in the shortest form that reads
//! back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use mttsiam_core::geometry::BBox;
use mttsiam_core::pipeline::{FrameResult, Status};
use thiserror::Error;

pub const HEADER: &str = "frame,x,y,w,h,confidence,rs,status";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub frame: u64,
    pub bbox: Option<BBox>,
    pub confidence: f64,
    pub rs: f64,
    pub status: Status,
}

impl From<&FrameResult> for ResultRecord {
    fn from(r: &FrameResult) -> Self {
        Self {
            frame: r.frame_index,
            bbox: r.bbox,
            confidence: r.confidence,
            rs: r.rs,
            status: r.status,
        }
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
}

pub fn to_string(records: &[ResultRecord]) -> String {
    let mut o = String::new();
    o.push_str(HEADER);
    o.push('\n');
    for r in records {
        let _ = write!(o, "{},", r.frame);
        match r.bbox {
            Some(b) => {
                let _ = write!(o, "{},{},{},{},", b.x, b.y, b.w, b.h);
            }
            None => o.push_str(",,,,"),
        }
        let status = match r.status {
            Status::Tracked => "TRACKED",
            Status::Lost => "LOST",
        };
        let _ = writeln!(o, "{},{},{status}", r.confidence, r.rs);
    }
    o
}

pub fn from_str(text: &str, path: &str) -> Result<Vec<ResultRecord>, ResultsError> {
    let err = |line: usize, msg: String| ResultsError::Format {
        path: path.into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        Some((i, l)) => return Err(err(i + 1, format!("expected header `{HEADER}`, found {l:?}"))),
        None => return Err(err(1, "empty results file".into())),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let ln = i + 1;
        let f: Vec<&str> = l.trim().split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(err(ln, format!("expected 8 fields, found {}", f.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("not a number: {s:?}")));
        let frame = f[0].parse().map_err(|_| err(ln, format!("bad frame index {:?}", f[0])))?;
        let bbox = if f[1..5].iter().all(|s| s.is_empty()) {
            None
        } else {
            Some(BBox::new(float(f[1])?, float(f[2])?, float(f[3])?, float(f[4])?))
        };
        let status = match f[7] {
            "TRACKED" => Status::Tracked,
            "LOST" => Status::Lost,
            s => return Err(err(ln, format!("status must be TRACKED or LOST, found {s:?}"))),
        };
        out.push(ResultRecord {
            frame,
            bbox,
            confidence: float(f[5])?,
            rs: float(f[6])?,
            status,
        });
    }
    Ok(out)
}

pub fn save(records: &[ResultRecord], path: &Path) -> Result<(), ResultsError> {
    std::fs::write(path, to_string(records)).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Vec<ResultRecord>, ResultsError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ResultsError::Io {
        path: name.clone(),
        source,
    })?;
    from_str(&text, &name)
}
