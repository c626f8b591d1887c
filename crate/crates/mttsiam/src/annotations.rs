//! Annotation directories in the OTB and GOT-10k layouts.
//!
//! A dataset directory holds one subdirectory per sequence, read in name
//! order. OTB sequences have `groundtruth_rect.txt`; GOT-10k sequences have
//! `groundtruth.txt` and optionally `absence.label` (one 0/1 flag per frame).
//! Box lines are `x,y,w,h` with commas, tabs or spaces as separators. A box
//! with non-positive width or height, or `NaN` fields, marks the frame absent.
//!
//! Image size is read from an optional `image_size.txt` (`width,height`);
//! without it the size is the smallest one that contains every box.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mttsiam_core::geometry::{BBox, ImageDims};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Otb,
    Got10k,
}

impl Layout {
    pub fn groundtruth_file(self) -> &'static str {
        match self {
            Layout::Otb => "groundtruth_rect.txt",
            Layout::Got10k => "groundtruth.txt",
        }
    }
}

pub const ABSENCE_FILE: &str = "absence.label";
pub const IMAGE_SIZE_FILE: &str = "image_size.txt";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Inconsistent { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceAnnotation {
    pub name: String,
    pub dims: ImageDims,
    /// One entry per frame; `None` marks an absent target.
    pub boxes: Vec<Option<BBox>>,
}

fn read(path: &Path) -> Result<String, AnnotationError> {
    fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

/// One box line. `Ok(None)` is an absent frame.
pub fn parse_box_line(line: &str) -> Result<Option<BBox>, String> {
    let f = fields(line);
    if f.len() != 4 {
        return Err(format!("expected 4 fields x,y,w,h, found {}", f.len()));
    }
    let mut v = [0.0; 4];
    for (dst, s) in v.iter_mut().zip(&f) {
        *dst = s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))?;
    }
    if v.iter().any(|x| x.is_nan()) || !(v[2] > 0.0 && v[3] > 0.0) {
        return Ok(None);
    }
    if v.iter().any(|x| x.is_infinite()) {
        return Err("infinite coordinate".into());
    }
    Ok(Some(BBox::new(v[0], v[1], v[2], v[3])))
}

fn non_empty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_boxes(path: &Path) -> Result<Vec<Option<BBox>>, AnnotationError> {
    let text = read(path)?;
    non_empty_lines(&text)
        .map(|(line, l)| {
            parse_box_line(l).map_err(|msg| AnnotationError::Malformed {
                path: path.to_path_buf(),
                line,
                msg,
            })
        })
        .collect()
}

fn parse_absence(path: &Path) -> Result<Vec<bool>, AnnotationError> {
    let text = read(path)?;
    non_empty_lines(&text)
        .map(|(line, l)| match l {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(AnnotationError::Malformed {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 0 or 1, found {l:?}"),
            }),
        })
        .collect()
}

fn parse_dims(path: &Path) -> Result<ImageDims, AnnotationError> {
    let text = read(path)?;
    let bad = |msg: &str| AnnotationError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.into(),
    };
    let f = fields(text.lines().next().unwrap_or(""));
    let [w, h] = f[..] else {
        return Err(bad("expected width,height"));
    };
    let w: u32 = w.parse().map_err(|_| bad("width is not a positive integer"))?;
    let h: u32 = h.parse().map_err(|_| bad("height is not a positive integer"))?;
    if w == 0 || h == 0 {
        return Err(bad("image size must be positive"));
    }
    Ok(ImageDims::new(w, h))
}

fn inferred_dims(boxes: &[Option<BBox>]) -> ImageDims {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for b in boxes.iter().flatten() {
        w = w.max(b.right());
        h = h.max(b.bottom());
    }
    ImageDims::new(w.ceil() as u32, h.ceil() as u32)
}

/// Reads one sequence directory.
pub fn load_sequence(dir: &Path, layout: Layout) -> Result<SequenceAnnotation, AnnotationError> {
    let gt = dir.join(layout.groundtruth_file());
    let mut boxes = parse_boxes(&gt)?;
    if boxes.is_empty() {
        return Err(AnnotationError::Inconsistent {
            path: gt,
            msg: "no frames".into(),
        });
    }
    let absence = dir.join(ABSENCE_FILE);
    if layout == Layout::Got10k && absence.is_file() {
        let flags = parse_absence(&absence)?;
        if flags.len() != boxes.len() {
            return Err(AnnotationError::Inconsistent {
                path: absence,
                msg: format!("{} absence flags for {} boxes", flags.len(), boxes.len()),
            });
        }
        for (b, absent) in boxes.iter_mut().zip(flags) {
            if absent {
                *b = None;
            }
        }
    }
    let size = dir.join(IMAGE_SIZE_FILE);
    let dims = if size.is_file() {
        parse_dims(&size)?
    } else {
        inferred_dims(&boxes)
    };
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(SequenceAnnotation { name, dims, boxes })
}

/// Every sequence under `root`. Subdirectories without the layout's
/// ground-truth file are skipped with a warning; an empty result is logged.
pub fn load_annotations(root: &Path, layout: Layout) -> Result<Vec<SequenceAnnotation>, AnnotationError> {
    let io_err = |source| AnnotationError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        if !dir.join(layout.groundtruth_file()).is_file() {
            log::warn!("{}: no {}, skipped", dir.display(), layout.groundtruth_file());
            continue;
        }
        out.push(load_sequence(&dir, layout)?);
    }
    if out.is_empty() {
        log::warn!("{}: no annotated sequences found", root.display());
    }
    Ok(out)
}

/// Writes `seq` as an OTB sequence directory `root/<name>/` with an
/// `image_size.txt`. Absent frames are written as `0,0,0,0`. Numbers use the
/// shortest representation that reads back to the same value.
pub fn write_otb(root: &Path, seq: &SequenceAnnotation) -> Result<PathBuf, AnnotationError> {
    let dir = root.join(&seq.name);
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AnnotationError::Io { path, source }
    };
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut text = String::new();
    for b in &seq.boxes {
        match b {
            Some(b) => text.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h)),
            None => text.push_str("0,0,0,0\n"),
        }
    }
    let gt = dir.join(Layout::Otb.groundtruth_file());
    fs::write(&gt, text).map_err(io_err(&gt))?;
    let size = dir.join(IMAGE_SIZE_FILE);
    fs::write(&size, format!("{},{}\n", seq.dims.width, seq.dims.height)).map_err(io_err(&size))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separators() {
        let want = Some(BBox::new(10.0, 20.0, 40.0, 60.0));
        assert_eq!(parse_box_line("10, 20, 40, 60").unwrap(), want);
        assert_eq!(parse_box_line("10\t20\t40\t60").unwrap(), want);
        assert_eq!(parse_box_line("10 20 40 60").unwrap(), want);
        assert_eq!(parse_box_line("10,20,40,60").unwrap(), want);
    }

    #[test]
    fn absent_and_bad_lines() {
        assert_eq!(parse_box_line("0,0,0,0").unwrap(), None);
        assert_eq!(parse_box_line("NaN,NaN,NaN,NaN").unwrap(), None);
        assert!(parse_box_line("1,2,3").is_err());
        assert!(parse_box_line("1,2,x,4").is_err());
    }

    #[test]
    fn malformed_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("s1");
        fs::create_dir(&seq).unwrap();
        fs::write(seq.join("groundtruth_rect.txt"), "1,2,3,4\n\n5,6,seven,8\n").unwrap();
        let e = load_annotations(dir.path(), Layout::Otb).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("groundtruth_rect.txt:3:"), "{msg}");
    }

    #[test]
    fn got10k_absence() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("GOT-10k_0001");
        fs::create_dir(&seq).unwrap();
        fs::write(seq.join("groundtruth.txt"), "1,2,3,4\n1,2,3,4\n1,2,3,4\n").unwrap();
        fs::write(seq.join(ABSENCE_FILE), "0\n1\n0\n").unwrap();
        let a = load_annotations(dir.path(), Layout::Got10k).unwrap();
        assert_eq!(a[0].boxes.iter().map(Option::is_some).collect::<Vec<_>>(), [true, false, true]);
        fs::write(seq.join(ABSENCE_FILE), "0\n1\n").unwrap();
        let e = load_annotations(dir.path(), Layout::Got10k).unwrap_err();
        assert!(matches!(e, AnnotationError::Inconsistent { .. }));
    }

    #[test]
    fn empty_directory_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_annotations(dir.path(), Layout::Otb).unwrap().is_empty());
    }

    #[test]
    fn otb_export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let seq = SequenceAnnotation {
            name: "toy".into(),
            dims: ImageDims::new(640, 480),
            boxes: vec![Some(BBox::new(0.1 + 0.2, 1.0 / 3.0, 48.0, 36.5)), None],
        };
        write_otb(dir.path(), &seq).unwrap();
        assert_eq!(load_annotations(dir.path(), Layout::Otb).unwrap(), vec![seq]);
    }
}
