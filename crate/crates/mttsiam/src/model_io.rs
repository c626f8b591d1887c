//! CombiNet model files.
//!
//! Text, one item per line:
//!
//! ```text
//! mttsiam-combinet 1
//! arch in_channels=4 conv_channels=16 kernel=3 outputs=2 leaky_slope=0.01
//! tensor block1.conv_w 16x3x4
//! ...
//! tensor fc6_b 2
//! params 23682
//! 3fb999999999999a
//! ...
//! ```
//!
//! The `tensor` lines list every parameter block in storage order with its
//! shape; the loader checks them against the architecture. Each parameter is
//! the 16-digit lowercase hex of its IEEE-754 bits, so a save/load round trip
//! is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use mttsiam_core::combinet::{Architecture, CombiNetModel, WINDOW};
use thiserror::Error;

pub const MAGIC: &str = "mttsiam-combinet";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: String, line: usize, msg: String },
}

/// `(name, shape)` of every parameter block in storage order.
pub fn tensor_shapes(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    let h = arch.hidden();
    let mut out = Vec::new();
    let mut in_ch = arch.in_channels;
    for b in 1..=4 {
        out.push((format!("block{b}.conv_w"), vec![arch.conv_channels, arch.kernel, in_ch]));
        out.push((format!("block{b}.conv_b"), vec![arch.conv_channels]));
        out.push((format!("block{b}.dense_w"), vec![h, WINDOW * in_ch]));
        out.push((format!("block{b}.dense_b"), vec![h]));
        in_ch = arch.conv_channels;
    }
    out.push(("fc5_w".into(), vec![h, h]));
    out.push(("fc5_b".into(), vec![h]));
    out.push(("fc6_w".into(), vec![arch.outputs, h]));
    out.push(("fc6_b".into(), vec![arch.outputs]));
    out
}

fn shape_str(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn to_string(model: &CombiNetModel) -> String {
    let a = model.architecture();
    let mut o = String::new();
    let _ = writeln!(o, "{MAGIC} {VERSION}");
    let _ = writeln!(
        o,
        "arch in_channels={} conv_channels={} kernel={} outputs={} leaky_slope={}",
        a.in_channels, a.conv_channels, a.kernel, a.outputs, a.leaky_slope
    );
    for (name, shape) in tensor_shapes(a) {
        let _ = writeln!(o, "tensor {name} {}", shape_str(&shape));
    }
    let _ = writeln!(o, "params {}", model.params().len());
    for p in model.params() {
        let _ = writeln!(o, "{:016x}", p.to_bits());
    }
    o
}

pub fn from_str(text: &str, path: &str) -> Result<CombiNetModel, ModelIoError> {
    let err = |line: usize, msg: String| ModelIoError::Format {
        path: path.into(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("file ends before {what}")));

    let (ln, l) = next("header")?;
    if l != format!("{MAGIC} {VERSION}") {
        return Err(err(ln, format!("expected `{MAGIC} {VERSION}`, found {l:?}")));
    }

    let (ln, l) = next("arch line")?;
    let rest = l.strip_prefix("arch ").ok_or_else(|| err(ln, "expected `arch ...`".into()))?;
    let mut arch = Architecture::default();
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(ln, format!("bad field {kv:?}")))?;
        let bad = || err(ln, format!("bad value for {k}: {v:?}"));
        match k {
            "in_channels" => arch.in_channels = v.parse().map_err(|_| bad())?,
            "conv_channels" => arch.conv_channels = v.parse().map_err(|_| bad())?,
            "kernel" => arch.kernel = v.parse().map_err(|_| bad())?,
            "outputs" => arch.outputs = v.parse().map_err(|_| bad())?,
            "leaky_slope" => arch.leaky_slope = v.parse().map_err(|_| bad())?,
            _ => return Err(err(ln, format!("unknown arch field {k:?}"))),
        }
    }
    arch.validate().map_err(|e| err(ln, e.to_string()))?;

    for (name, shape) in tensor_shapes(&arch) {
        let (ln, l) = next("tensor lines")?;
        let want = format!("tensor {name} {}", shape_str(&shape));
        if l != want {
            return Err(err(ln, format!("expected `{want}`, found {l:?}")));
        }
    }

    let (ln, l) = next("params line")?;
    let count: usize = l
        .strip_prefix("params ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| err(ln, format!("expected `params <count>`, found {l:?}")))?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, l) = next("all parameters")?;
        if l.len() != 16 {
            return Err(err(ln, format!("expected 16 hex digits, found {l:?}")));
        }
        let bits = u64::from_str_radix(l, 16).map_err(|_| err(ln, format!("bad hex {l:?}")))?;
        params.push(f64::from_bits(bits));
    }
    if let Some((ln, l)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(ln, format!("unexpected trailing content {l:?}")));
    }
    CombiNetModel::from_params(arch, params).map_err(|e| err(0, e.to_string()))
}

pub fn save(model: &CombiNetModel, path: &Path) -> Result<(), ModelIoError> {
    std::fs::write(path, to_string(model)).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<CombiNetModel, ModelIoError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Io {
        path: name.clone(),
        source,
    })?;
    from_str(&text, &name)
}
