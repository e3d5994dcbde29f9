//! Flat `key = value` run configuration. Command-line flags override file values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use geotopo::embedding::EmbeddingParams;
use geotopo::routing::{AttachPolicy, RoutingMode, RoutingParams};
use geotopo::{Error, PfpParams, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pfp: PfpParams,
    pub embedding: EmbeddingParams,
    pub grid: Option<PathBuf>,
    pub l_max: f64,
    pub routing: RoutingParams,
    pub symmetric_fallback: bool,
    pub graph_seed: u64,
    pub embed_seed: u64,
    pub attach_seed: u64,
    pub graph: Option<PathBuf>,
    pub embedding_file: Option<PathBuf>,
    pub border: Option<PathBuf>,
    pub devices: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pfp: PfpParams::default(),
            embedding: EmbeddingParams::default(),
            grid: None,
            l_max: 300.0,
            routing: RoutingParams::default(),
            symmetric_fallback: true,
            graph_seed: 1,
            embed_seed: 2,
            attach_seed: 3,
            graph: None,
            embedding_file: None,
            border: None,
            devices: None,
            dataset: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parameter(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "nodes" => self.pfp.node_count = parse(key, value)?,
            "p" => self.pfp.p = parse(key, value)?,
            "q" => self.pfp.q = parse(key, value)?,
            "delta" => self.pfp.delta = parse(key, value)?,
            "seed_nodes" => self.pfp.seed_nodes = parse(key, value)?,
            "n" => self.embedding.n = parse(key, value)?,
            "N" => self.embedding.max_locations = parse(key, value)?,
            "c_max" => self.embedding.c_max = parse(key, value)?,
            "k" => self.embedding.patience = parse(key, value)?,
            "l_max" => self.l_max = parse(key, value)?,
            "h_max" => self.routing.h_max = parse(key, value)?,
            "n_f" => self.routing.n_f = parse(key, value)?,
            "c" => self.routing.c_light = parse(key, value)?,
            "offset_ms" => self.routing.offset_ms = parse(key, value)?,
            "attach" => self.routing.policy = value.parse::<AttachPolicy>()?,
            "routing" => self.routing.mode = value.parse::<RoutingMode>()?,
            "symmetric_fallback" => self.symmetric_fallback = parse(key, value)?,
            "graph_seed" => self.graph_seed = parse(key, value)?,
            "embed_seed" => self.embed_seed = parse(key, value)?,
            "attach_seed" => self.attach_seed = parse(key, value)?,
            "grid" => self.grid = path(),
            "graph" => self.graph = path(),
            "embedding" => self.embedding_file = path(),
            "border" => self.border = path(),
            "devices" => self.devices = path(),
            "dataset" => self.dataset = path(),
            other => return Err(Error::Parameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.pfp.validate()?;
        self.embedding.validate()?;
        self.routing.validate()?;
        if !(self.l_max >= 0.0) {
            return Err(Error::Parameter(format!("l_max must be >= 0, got {}", self.l_max)));
        }
        Ok(())
    }

    /// Every resolved setting as `key = value` lines, each with `prefix`.
    pub fn render(&self, prefix: &str) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{prefix}{k} = {v}");
        };
        put("nodes", self.pfp.node_count.to_string());
        put("p", self.pfp.p.to_string());
        put("q", self.pfp.q.to_string());
        put("delta", self.pfp.delta.to_string());
        put("seed_nodes", self.pfp.seed_nodes.to_string());
        put("n", self.embedding.n.to_string());
        put("N", self.embedding.max_locations.to_string());
        put("c_max", self.embedding.c_max.to_string());
        put("k", self.embedding.patience.to_string());
        put("l_max", self.l_max.to_string());
        put("h_max", self.routing.h_max.to_string());
        put("n_f", self.routing.n_f.to_string());
        put("c", self.routing.c_light.to_string());
        put("offset_ms", self.routing.offset_ms.to_string());
        put("attach", self.routing.policy.to_string());
        put("routing", self.routing.mode.to_string());
        put("symmetric_fallback", self.symmetric_fallback.to_string());
        put("graph_seed", self.graph_seed.to_string());
        put("embed_seed", self.embed_seed.to_string());
        put("attach_seed", self.attach_seed.to_string());
        let paths = [
            ("grid", &self.grid),
            ("graph", &self.graph),
            ("embedding", &self.embedding_file),
            ("border", &self.border),
            ("devices", &self.devices),
            ("dataset", &self.dataset),
        ];
        for (k, v) in paths {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.pfp.p, cfg.pfp.q), (0.40, 0.11));
        assert_eq!(cfg.l_max, 300.0);
        assert_eq!(cfg.routing.h_max, 200.0);
        assert_eq!(cfg.embedding.patience, 5000);
        assert_eq!(cfg.routing.n_f, 1.62);
    }

    #[test]
    fn render_reloads() {
        let mut cfg = RunConfig::default();
        cfg.set("N", "78000").unwrap();
        cfg.set("routing", "distance-first").unwrap();
        cfg.set("grid", "world.grid").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, cfg.render("")).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("colour", "red"), Err(Error::Parameter(_))));
        assert!(matches!(cfg.set("k", "many"), Err(Error::Parameter(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "nodes = 10\njust words\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Format { line: 2, .. })));
    }
}
