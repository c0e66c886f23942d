//! Simulation log files.
//!
//! A log is line-delimited JSON. Every line is `CCCCCCCC <json>\n` where
//! `CCCCCCCC` is the CRC-32 of the JSON text in lowercase hex. The first
//! line holds the [`LogHeader`], every following line one [`Record`].
//!
//! Point payloads go to a side file `<log>.clouds`: the magic `NVSC`, a
//! little-endian u32 format version, then one block per recorded frame (u32
//! point count followed by `count` xyz triples of little-endian f32). A
//! cloud record's `offset` is the byte offset of its block.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use navsim_core::runtime::{CloudFrame, LogHeader, Record, RecordBody, SimLog, SCHEMA_VERSION};

pub const CLOUD_MAGIC: [u8; 4] = *b"NVSC";
pub const CLOUD_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("log has no header line")]
    Empty,
    #[error("unreadable header: {0}")]
    BadHeader(String),
    #[error("log schema version {found}, this build reads {expected}")]
    SchemaMismatch { found: u64, expected: u32 },
    #[error("log truncated at line {line} (byte {offset}): {reason}")]
    Truncated {
        /// Byte offset just past the last valid line.
        offset: u64,
        /// 1-based number of the first bad line.
        line: usize,
        reason: String,
        /// Header and every record before the bad line.
        partial: Box<SimLog>,
    },
    #[error("serialize: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("cloud file: {0}")]
    Cloud(String),
}

/// Path of the point-cloud side file of a log.
pub fn cloud_path(log: &Path) -> PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(".clouds");
    PathBuf::from(s)
}

fn write_line<W: Write>(out: &mut W, json: &str) -> io::Result<()> {
    writeln!(out, "{:08x} {}", crc32fast::hash(json.as_bytes()), json)
}

/// Streaming log writer. Clouds with payloads are moved to the side sink
/// when one is given; otherwise only their metadata is kept.
pub struct LogWriter<W: Write, C: Write> {
    out: W,
    clouds: Option<C>,
    cloud_pos: u64,
}

impl<W: Write, C: Write> LogWriter<W, C> {
    pub fn new(mut out: W, header: &LogHeader, mut clouds: Option<C>) -> Result<Self, LogError> {
        write_line(&mut out, &serde_json::to_string(header)?)?;
        let mut cloud_pos = 0;
        if let Some(c) = clouds.as_mut() {
            c.write_all(&CLOUD_MAGIC)?;
            c.write_all(&CLOUD_VERSION.to_le_bytes())?;
            cloud_pos = 8;
        }
        Ok(Self {
            out,
            clouds,
            cloud_pos,
        })
    }

    pub fn write(&mut self, record: &Record) -> Result<(), LogError> {
        let json = match (&record.body, self.clouds.as_mut()) {
            (RecordBody::PointCloud(f), Some(c)) if !f.points.is_empty() => {
                c.write_all(&(f.points.len() as u32).to_le_bytes())?;
                for p in &f.points {
                    for v in p {
                        c.write_all(&v.to_le_bytes())?;
                    }
                }
                let frame = CloudFrame {
                    offset: Some(self.cloud_pos),
                    points: Vec::new(),
                    ..f.clone()
                };
                self.cloud_pos += 4 + 12 * f.points.len() as u64;
                serde_json::to_string(&Record {
                    body: RecordBody::PointCloud(frame),
                    ..record.clone()
                })?
            }
            _ => serde_json::to_string(record)?,
        };
        write_line(&mut self.out, &json)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(W, Option<C>), LogError> {
        self.out.flush()?;
        if let Some(c) = self.clouds.as_mut() {
            c.flush()?;
        }
        Ok((self.out, self.clouds))
    }
}

/// Writes a log, plus its cloud side file when any frame carries points.
pub fn write_log(path: &Path, log: &SimLog) -> Result<(), LogError> {
    let has_clouds = log
        .records
        .iter()
        .any(|r| matches!(&r.body, RecordBody::PointCloud(f) if !f.points.is_empty()));
    let clouds = if has_clouds {
        Some(BufWriter::new(File::create(cloud_path(path))?))
    } else {
        None
    };
    let mut w = LogWriter::new(BufWriter::new(File::create(path)?), &log.header, clouds)?;
    for r in &log.records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

/// Encodes a log in memory, without cloud payloads.
pub fn encode_log(log: &SimLog) -> Result<Vec<u8>, LogError> {
    let mut w = LogWriter::<_, Vec<u8>>::new(Vec::new(), &log.header, None)?;
    for r in &log.records {
        w.write(r)?;
    }
    Ok(w.finish()?.0)
}

fn split_line(line: &[u8]) -> Result<&str, String> {
    let text = std::str::from_utf8(line).map_err(|e| format!("invalid utf-8: {e}"))?;
    let (crc, json) = text.split_once(' ').ok_or("missing checksum")?;
    let crc = u32::from_str_radix(crc, 16)
        .ok()
        .filter(|_| crc.len() == 8)
        .ok_or("malformed checksum")?;
    if crc32fast::hash(json.as_bytes()) != crc {
        return Err("checksum mismatch".into());
    }
    Ok(json)
}

/// Reads a log stream. Records after the first damaged or incomplete line
/// are not read; the error carries everything before it.
pub fn decode_log<R: BufRead>(mut input: R) -> Result<SimLog, LogError> {
    let mut buf = Vec::new();
    if input.read_until(b'\n', &mut buf)? == 0 {
        return Err(LogError::Empty);
    }
    if buf.pop() != Some(b'\n') {
        return Err(LogError::BadHeader("incomplete header line".into()));
    }
    let json = split_line(&buf).map_err(LogError::BadHeader)?;
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| LogError::BadHeader(e.to_string()))?;
    let found = value.get("schema_version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(LogError::SchemaMismatch {
                found: v,
                expected: SCHEMA_VERSION,
            })
        }
        None => return Err(LogError::BadHeader("no schema_version".into())),
    }
    let header: LogHeader =
        serde_json::from_value(value).map_err(|e| LogError::BadHeader(e.to_string()))?;
    let mut log = SimLog::new(header);
    let mut offset = buf.len() as u64 + 1;
    let mut line = 1;
    loop {
        buf.clear();
        let n = input.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok(log);
        }
        line += 1;
        let parsed = if buf.last() != Some(&b'\n') {
            Err("incomplete line".to_string())
        } else {
            split_line(&buf[..n - 1])
                .and_then(|json| serde_json::from_str::<Record>(json).map_err(|e| e.to_string()))
        };
        match parsed {
            Ok(r) => log.records.push(r),
            Err(reason) => {
                return Err(LogError::Truncated {
                    offset,
                    line,
                    reason,
                    partial: Box::new(log),
                })
            }
        }
        offset += n as u64;
    }
}

pub fn read_log(path: &Path) -> Result<SimLog, LogError> {
    decode_log(BufReader::new(File::open(path)?))
}

/// Reads the points of one frame from a cloud side file.
pub fn read_cloud<R: Read + Seek>(
    clouds: &mut R,
    frame: &CloudFrame,
) -> Result<Vec<[f32; 3]>, LogError> {
    let offset = frame
        .offset
        .ok_or_else(|| LogError::Cloud(format!("frame {} has no payload", frame.frame)))?;
    let mut head = [0u8; 8];
    clouds.seek(SeekFrom::Start(0))?;
    clouds.read_exact(&mut head)?;
    if head[..4] != CLOUD_MAGIC
        || u32::from_le_bytes(head[4..].try_into().unwrap()) != CLOUD_VERSION
    {
        return Err(LogError::Cloud("bad magic or version".into()));
    }
    clouds.seek(SeekFrom::Start(offset))?;
    let mut word = [0u8; 4];
    clouds.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word);
    if count != frame.count {
        return Err(LogError::Cloud(format!(
            "frame {}: {count} points stored, {} expected",
            frame.frame, frame.count
        )));
    }
    let mut raw = vec![0u8; 12 * count as usize];
    clouds.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap());
            [f(0), f(1), f(2)]
        })
        .collect())
}

/// Loads every cloud payload of a log read from `path` back into memory.
pub fn load_clouds(path: &Path, log: &mut SimLog) -> Result<(), LogError> {
    let mut file = BufReader::new(File::open(cloud_path(path))?);
    for r in &mut log.records {
        if let RecordBody::PointCloud(f) = &mut r.body {
            if f.offset.is_some() {
                f.points = read_cloud(&mut file, f)?;
            }
        }
    }
    Ok(())
}
