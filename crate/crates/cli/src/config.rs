//! Run configuration, layered as defaults < TOML file < command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use zipper_core::graph::{GraphFormat, SyntheticKind};
use zipper_core::runtime::StreamConfig;
use zipper_core::tiling::TilingMode;
use zipper_core::timing::{EnergyParams, HardwareConfig};

use crate::CliError;

/// Environment variable naming a config file to load before flags apply.
pub const CONFIG_ENV: &str = "ZIPPER_CONFIG";

/// Where the input graph comes from.
///
/// Written as `g4`, `star:V`, `chain:V`, `er:V:E`, `rmat:V:E`, or a file path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphSource {
    Example,
    Synthetic { kind: SyntheticKind, v: usize, e: usize },
    File(PathBuf),
}

impl FromStr for GraphSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "g4" {
            return Ok(Self::Example);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() >= 2 {
            if let Ok(kind) = parts[0].parse::<SyntheticKind>() {
                let num = |i: usize| -> Result<usize, String> {
                    parts
                        .get(i)
                        .ok_or_else(|| format!("`{s}` is missing a size"))?
                        .parse()
                        .map_err(|_| format!("`{s}` has a non-numeric size"))
                };
                let v = num(1)?;
                let e = match kind {
                    SyntheticKind::Star | SyntheticKind::Chain => v.saturating_sub(1),
                    _ => num(2)?,
                };
                let arity = if matches!(kind, SyntheticKind::Star | SyntheticKind::Chain) { 2 } else { 3 };
                if parts.len() != arity {
                    return Err(format!("`{s}` has {} fields, expected {arity}", parts.len()));
                }
                return Ok(Self::Synthetic { kind, v, e });
            }
        }
        if s.is_empty() {
            return Err("empty graph source".into());
        }
        Ok(Self::File(PathBuf::from(s)))
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Example => f.write_str("g4"),
            Self::Synthetic { kind, v, e } => {
                let name = match kind {
                    SyntheticKind::ErdosRenyi => "er",
                    SyntheticKind::Rmat => "rmat",
                    SyntheticKind::Star => return write!(f, "star:{v}"),
                    SyntheticKind::Chain => return write!(f, "chain:{v}"),
                };
                write!(f, "{name}:{v}:{e}")
            }
            Self::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// `n_s,n_e`, both at least one.
pub fn parse_streams(s: &str) -> Result<StreamConfig, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("streams `{s}` must look like `n_s,n_e`"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad stream count `{t}`"));
    let cfg = StreamConfig { n_s: n(a)?, n_e: n(b)? };
    if cfg.n_s == 0 || cfg.n_e == 0 {
        return Err("stream counts must be at least 1".into());
    }
    Ok(cfg)
}

/// Everything needed to reproduce one compile/verify/run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Graph source string, see [`GraphSource`].
    pub graph: String,
    /// Inferred from the extension when absent.
    pub graph_format: Option<GraphFormat>,
    /// Benchmark model name or path to a model text file.
    pub model: String,
    pub f_in: usize,
    pub f_out: usize,
    pub tiling: TilingMode,
    /// Destination partition size; `None` picks sizes from the hardware.
    pub dst_size: Option<usize>,
    pub src_size: Option<usize>,
    pub reorder: bool,
    pub e2v: bool,
    /// `[n_s, n_e]`.
    pub streams: [usize; 2],
    /// TOML file with optional `[hw]` and `[energy]` tables.
    pub hardware: Option<PathBuf>,
    pub seed: u64,
    pub stats_out: Option<PathBuf>,
    pub energy_out: Option<PathBuf>,
    pub util_out: Option<PathBuf>,
    /// Sampling window for the utilization trace, in cycles.
    pub util_window: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: "rmat:1024:16384".into(),
            graph_format: None,
            model: "gcn".into(),
            f_in: 128,
            f_out: 128,
            tiling: TilingMode::Sparse,
            dst_size: None,
            src_size: None,
            reorder: false,
            e2v: true,
            streams: [2, 2],
            hardware: None,
            seed: 1,
            stats_out: None,
            energy_out: None,
            util_out: None,
            util_window: 1000,
        }
    }
}

/// Contents of a hardware file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareSpec {
    pub hw: HardwareConfig,
    pub energy: EnergyParams,
}

impl HardwareSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

impl RunConfig {
    /// Defaults overlaid with the TOML file at `path`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn graph_source(&self) -> Result<GraphSource, CliError> {
        self.graph.parse().map_err(CliError::Usage)
    }

    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            n_s: self.streams[0],
            n_e: self.streams[1],
        }
    }

    pub fn hardware_spec(&self) -> Result<HardwareSpec, CliError> {
        match &self.hardware {
            Some(p) => HardwareSpec::load(p),
            None => Ok(HardwareSpec::default()),
        }
    }

    /// Format of a file-backed graph: explicit, else by extension.
    pub fn graph_format_for(&self, path: &Path) -> GraphFormat {
        self.graph_format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") => GraphFormat::MatrixMarket,
            _ => GraphFormat::EdgeList,
        })
    }

    /// Checks stream counts, sizes and that referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.streams.contains(&0) {
            return Err(CliError::Usage("stream counts must be at least 1".into()));
        }
        if self.f_in == 0 || self.f_out == 0 {
            return Err(CliError::Usage("f_in and f_out must be at least 1".into()));
        }
        if self.dst_size == Some(0) || self.src_size == Some(0) {
            return Err(CliError::Usage("partition sizes must be at least 1".into()));
        }
        if self.dst_size.is_some() != self.src_size.is_some() {
            return Err(CliError::Usage("set both dst_size and src_size, or neither".into()));
        }
        let mut files: Vec<&Path> = Vec::new();
        if let GraphSource::File(p) = self.graph_source()? {
            if !p.exists() {
                return Err(CliError::Usage(format!("graph file {} not found", p.display())));
            }
        }
        if looks_like_path(&self.model) {
            files.push(Path::new(&self.model));
        }
        if let Some(h) = &self.hardware {
            files.push(h);
        }
        if let Some(p) = files.into_iter().find(|p| !p.exists()) {
            return Err(CliError::Usage(format!("{} not found", p.display())));
        }
        Ok(())
    }
}

/// Model arguments naming a file rather than a benchmark.
pub fn looks_like_path(model: &str) -> bool {
    model.contains('/') || model.contains('.')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_sources_round_trip() {
        for s in ["g4", "star:64", "chain:8", "er:256:1024", "rmat:256:2048", "data/x.mtx"] {
            let g: GraphSource = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        assert!("rmat:10".parse::<GraphSource>().is_err());
        assert!("star:4:9".parse::<GraphSource>().is_err());
        assert!("rmat:x:3".parse::<GraphSource>().is_err());
    }

    #[test]
    fn streams_flag() {
        assert_eq!(parse_streams("4, 2"), Ok(StreamConfig { n_s: 4, n_e: 2 }));
        assert!(parse_streams("0,1").is_err());
        assert!(parse_streams("3").is_err());
    }

    #[test]
    fn file_overrides_defaults_only_where_set() {
        let c = RunConfig::from_toml("model = \"gat\"\nstreams = [4, 4]\n").unwrap();
        assert_eq!(c.model, "gat");
        assert_eq!(c.streams, [4, 4]);
        assert_eq!(c.f_in, RunConfig::default().f_in);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            dst_size: Some(64),
            src_size: Some(32),
            tiling: TilingMode::Regular,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.streams = [0, 1];
        assert!(c.validate().is_err());
        let c = RunConfig {
            graph: "/nonexistent/graph.txt".into(),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            dst_size: Some(4),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_hardware_file() {
        let spec: HardwareSpec = toml::from_str("[hw]\nmu_count = 4\n").unwrap();
        assert_eq!(spec.hw.mu_count, 4);
        assert_eq!(spec.hw.vu_count, HardwareConfig::default().vu_count);
        assert_eq!(spec.energy, EnergyParams::default());
    }
}
