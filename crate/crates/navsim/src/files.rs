//! Text formats: world descriptors, simulation configs and scenario scripts
//! (all TOML).

use std::path::{Path, PathBuf};

use navsim_core::config::{ConfigError, SimConfig};
use navsim_core::math::Vec3;
use navsim_core::runtime::{ScenarioScript, ScriptError};
use navsim_core::world::{Aabb, Bounds2, WorldError, WorldModel};
use serde::Deserialize;

/// Bundled world descriptors, by name.
pub const BUNDLED_WORLDS: [(&str, &str); 2] = [
    ("paper_world", include_str!("../worlds/paper_world.toml")),
    ("empty", include_str!("../worlds/empty.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: obstacle {index}{}: {source}", name.as_deref().map(|n| format!(" ({n})")).unwrap_or_default())]
    Geometry {
        path: String,
        index: usize,
        name: Option<String>,
        source: WorldError,
    },
    #[error("{path}: {source}")]
    World { path: String, source: WorldError },
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{path}: {source}")]
    Script { path: String, source: ScriptError },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unknown world `{0}`: not a file and not a bundled world")]
    UnknownWorld(String),
}

fn parse_error(path: &str, text: &str, e: toml::de::Error) -> FileError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    FileError::Parse {
        path: path.to_string(),
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

fn read(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    bounds: Bounds2,
    #[serde(default)]
    obstacles: Vec<ObstacleDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleDoc {
    #[serde(default)]
    name: Option<String>,
    min: [f64; 3],
    max: [f64; 3],
}

/// Parses a world descriptor. `origin` names the document in errors.
pub fn parse_world(text: &str, origin: &str) -> Result<WorldModel, FileError> {
    let doc: WorldDoc = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
    let names: Vec<Option<String>> = doc.obstacles.iter().map(|o| o.name.clone()).collect();
    let boxes = doc
        .obstacles
        .iter()
        .map(|o| Aabb::new(Vec3::from(o.min), Vec3::from(o.max)))
        .collect();
    WorldModel::new(doc.bounds, boxes).map_err(|source| match source {
        WorldError::InvertedBox { index, .. }
        | WorldError::NonFinite { index }
        | WorldError::OutsideBounds { index } => FileError::Geometry {
            path: origin.to_string(),
            index,
            name: names[index].clone(),
            source,
        },
        WorldError::BadBounds => FileError::World {
            path: origin.to_string(),
            source,
        },
    })
}

pub fn load_world(path: &Path) -> Result<WorldModel, FileError> {
    parse_world(&read(path)?, &path.display().to_string())
}

/// Resolves a world reference: an existing file (relative references are
/// tried against `base` first) or the name of a bundled world.
pub fn resolve_world(reference: &str, base: Option<&Path>) -> Result<WorldModel, FileError> {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Some(b) = base {
        candidates.push(b.join(reference));
    }
    candidates.push(PathBuf::from(reference));
    for c in &candidates {
        if c.is_file() {
            return load_world(c);
        }
    }
    let stem = Path::new(reference)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(reference);
    BUNDLED_WORLDS
        .iter()
        .find(|(name, _)| *name == reference || *name == stem)
        .map(|(name, text)| parse_world(text, name))
        .unwrap_or_else(|| Err(FileError::UnknownWorld(reference.to_string())))
}

/// Parses a config document; missing keys keep their defaults.
pub fn parse_config(text: &str, origin: &str) -> Result<SimConfig, FileError> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
    cfg.validate().map_err(|source| FileError::Config {
        path: origin.to_string(),
        source,
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig, FileError> {
    parse_config(&read(path)?, &path.display().to_string())
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioScript, FileError> {
    let s: ScenarioScript = toml::from_str(text).map_err(|e| parse_error(origin, text, e))?;
    s.validate().map_err(|source| FileError::Script {
        path: origin.to_string(),
        source,
    })?;
    Ok(s)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, FileError> {
    parse_scenario(&read(path)?, &path.display().to_string())
}

/// Serializes a world back into descriptor form.
pub fn world_to_toml(world: &WorldModel) -> String {
    let b = world.bounds();
    let mut out = format!(
        "[bounds]\nx_min = {:?}\nx_max = {:?}\ny_min = {:?}\ny_max = {:?}\n",
        b.x_min, b.x_max, b.y_min, b.y_max
    );
    for o in world.obstacles() {
        out.push_str(&format!(
            "\n[[obstacles]]\nmin = [{:?}, {:?}, {:?}]\nmax = [{:?}, {:?}, {:?}]\n",
            o.min.x, o.min.y, o.min.z, o.max.x, o.max.y, o.max.z
        ));
    }
    out
}
