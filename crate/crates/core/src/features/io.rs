//! Feature matrix persistence.
//!
//! Per-recording CSV: header `frame_index,<FEATURE_NAMES...>`, one row per
//! frame.
//!
//! Combined binary cache, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "ADRFEAT\0"
//! format version   u8       1
//! table version    u16      FEATURE_TABLE_VERSION
//! recording count  u32
//! per recording:
//!   id length u32, id bytes (UTF-8)
//!   rows u32, cols u32
//!   per row: frame_index u32, cols × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{
    FeatureError, FrameFeatureMatrix, FrameFeatureVector, FEATURE_COUNT, FEATURE_NAMES,
    FEATURE_TABLE_VERSION,
};

const CACHE_MAGIC: &[u8; 8] = b"ADRFEAT\0";
const CACHE_FORMAT_VERSION: u8 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> FeatureError {
    FeatureError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn write_feature_csv(path: &Path, matrix: &FrameFeatureMatrix) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header = std::iter::once("frame_index").chain(FEATURE_NAMES.iter().copied());
    w.write_record(header)
        .map_err(|e| format_err(path, e.to_string()))?;
    for row in &matrix.rows {
        let record = std::iter::once(row.frame_index.to_string())
            .chain(row.values.iter().map(|v| format!("{v:e}")));
        w.write_record(record)
            .map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_feature_csv(
    path: &Path,
    recording_id: &str,
) -> Result<FrameFeatureMatrix, FeatureError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    let header = r.headers().map_err(|e| format_err(path, e.to_string()))?;
    let expected: Vec<&str> = std::iter::once("frame_index")
        .chain(FEATURE_NAMES.iter().copied())
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(format_err(path, "header does not match the feature table"));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| format_err(path, format!("bad value {s:?}: {e}")))
        };
        let frame_index = record[0]
            .parse::<usize>()
            .map_err(|e| format_err(path, e.to_string()))?;
        let values = record.iter().skip(1).map(parse).collect::<Result<_, _>>()?;
        rows.push(FrameFeatureVector {
            frame_index,
            values,
        });
    }
    Ok(FrameFeatureMatrix {
        recording_id: recording_id.to_string(),
        rows,
    })
}

pub fn write_feature_cache(
    path: &Path,
    matrices: &[FrameFeatureMatrix],
) -> Result<(), FeatureError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.push(CACHE_FORMAT_VERSION);
    buf.extend_from_slice(&FEATURE_TABLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
    for m in matrices {
        buf.extend_from_slice(&(m.recording_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(m.recording_id.as_bytes());
        buf.extend_from_slice(&(m.rows.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(FEATURE_COUNT as u32).to_le_bytes());
        for row in &m.rows {
            buf.extend_from_slice(&(row.frame_index as u32).to_le_bytes());
            for v in &row.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.data.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn read_feature_cache(path: &Path) -> Result<Vec<FrameFeatureMatrix>, FeatureError> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(io_err(path))?;
    let truncated = || format_err(path, "truncated cache");
    let mut c = Cursor {
        data: &data,
        pos: 0,
    };
    if c.take(8) != Some(CACHE_MAGIC.as_slice()) {
        return Err(format_err(path, "bad magic"));
    }
    let version = c.take(1).ok_or_else(truncated)?[0];
    if version != CACHE_FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported cache version {version}"),
        ));
    }
    let table = u16::from_le_bytes(c.take(2).ok_or_else(truncated)?.try_into().unwrap());
    if table != FEATURE_TABLE_VERSION {
        return Err(format_err(
            path,
            format!("feature table version {table}, expected {FEATURE_TABLE_VERSION}"),
        ));
    }
    let count = c.u32().ok_or_else(truncated)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id_len = c.u32().ok_or_else(truncated)? as usize;
        let id = std::str::from_utf8(c.take(id_len).ok_or_else(truncated)?)
            .map_err(|_| format_err(path, "recording id is not UTF-8"))?
            .to_string();
        let rows = c.u32().ok_or_else(truncated)?;
        let cols = c.u32().ok_or_else(truncated)? as usize;
        if cols != FEATURE_COUNT {
            return Err(format_err(
                path,
                format!("{cols} columns, expected {FEATURE_COUNT}"),
            ));
        }
        let mut matrix = FrameFeatureMatrix {
            recording_id: id,
            rows: Vec::with_capacity(rows as usize),
        };
        for _ in 0..rows {
            let frame_index = c.u32().ok_or_else(truncated)? as usize;
            let values = (0..cols)
                .map(|_| c.f64().ok_or_else(truncated))
                .collect::<Result<_, _>>()?;
            matrix.rows.push(FrameFeatureVector {
                frame_index,
                values,
            });
        }
        out.push(matrix);
    }
    if c.pos != data.len() {
        return Err(format_err(path, "trailing bytes after last recording"));
    }
    Ok(out)
}
