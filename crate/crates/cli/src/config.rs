//! The shared key file: flat `key = value` lines, `#` comments.
//!
//! ```text
//! model = gmm:fixtures/gmm_desk.nzt      # or bridge:cmd:<command> / bridge:tcp:<host>:<port>
//! shape = 3x16x16                       # required for bridge models
//! projection = multibits(2)
//! seed = 42
//! steps = 40
//! codebook = codebook.nzt               # multichannel only
//! context = prompt=a red barn;guidance=7.5
//! ```
//!
//! Relative paths resolve against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use noisecoder::schedule::{DEFAULT_RHO, DEFAULT_SIGMA_MAX, DEFAULT_SIGMA_MIN, DEFAULT_STEPS};
use noisecoder::{BridgeConfig, BridgeModel, Codebook, Endpoint, GaussianMixtureModel, ProjectionKind, ScoreModel, Shape, SigmaSchedule, StegoKey};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Gmm(PathBuf),
    Bridge(Endpoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: Option<ModelSpec>,
    pub shape: Option<Shape>,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rho: f64,
    pub steps: usize,
    pub projection: ProjectionKind,
    pub seed: u64,
    pub codebook: Option<PathBuf>,
    pub context: Option<String>,
    pub bridge_timeout: Duration,
    pub bridge_connections: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: None,
            shape: None,
            sigma_max: DEFAULT_SIGMA_MAX,
            sigma_min: DEFAULT_SIGMA_MIN,
            rho: DEFAULT_RHO,
            steps: DEFAULT_STEPS,
            projection: ProjectionKind::Mb,
            seed: 0,
            codebook: None,
            context: None,
            bridge_timeout: noisecoder::bridge::DEFAULT_TIMEOUT,
            bridge_connections: 1,
        }
    }
}

pub fn parse_shape(s: &str) -> Result<Shape, Failure> {
    let dims: Vec<usize> = s
        .split(['x', 'X', ',', '×'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("bad shape {s:?}; expected CxHxW")))?;
    match dims[..] {
        [c, h, w] => Ok(Shape::new(c, h, w)?),
        _ => Err(Failure::usage(format!("bad shape {s:?}; expected CxHxW"))),
    }
}

pub fn parse_model(s: &str, base: &Path) -> Result<ModelSpec, Failure> {
    if let Some(path) = s.strip_prefix("gmm:") {
        Ok(ModelSpec::Gmm(base.join(path)))
    } else if let Some(endpoint) = s.strip_prefix("bridge:") {
        Ok(ModelSpec::Bridge(endpoint.parse()?))
    } else {
        Err(Failure::usage(format!("bad model {s:?}; expected gmm:<path> or bridge:<endpoint>")))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::missing(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, Failure> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("line {}: expected key = value", n + 1)))?;
            // Trailing comments need whitespace before '#', so that values
            // such as contexts may contain the character.
            let value = value.split_once(" #").map_or(value, |(v, _)| v).trim();
            cfg.set(key.trim(), value, base).map_err(|f| f.context(&format!("line {}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), Failure> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| Failure::usage(format!("{key}: not a number: {v:?}")));
        match key {
            "model" => self.model = Some(parse_model(value, base)?),
            "shape" => self.shape = Some(parse_shape(value)?),
            "sigma_max" => self.sigma_max = num(value)?,
            "sigma_min" => self.sigma_min = num(value)?,
            "rho" => self.rho = num(value)?,
            "steps" => self.steps = value.parse().map_err(|_| Failure::usage(format!("steps: bad value {value:?}")))?,
            "projection" => self.projection = value.parse().map_err(|e: noisecoder::Error| Failure::usage(e.to_string()))?,
            "seed" => self.seed = value.parse().map_err(|_| Failure::usage(format!("seed: bad value {value:?}")))?,
            "codebook" => self.codebook = Some(base.join(value)),
            "context" => self.context = Some(value.to_owned()),
            "bridge_timeout" => self.bridge_timeout = Duration::from_secs_f64(num(value)?),
            "bridge_connections" => {
                self.bridge_connections = value.parse().map_err(|_| Failure::usage(format!("bridge_connections: bad value {value:?}")))?
            }
            other => return Err(Failure::usage(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<SigmaSchedule, Failure> {
        Ok(SigmaSchedule::new(self.sigma_max, self.sigma_min, self.rho, self.steps)?)
    }

    /// `$NOISECODER_BRIDGE` replaces a bridge endpoint, or supplies one when
    /// no model is configured.
    fn resolved_model(&self) -> Result<ModelSpec, Failure> {
        match &self.model {
            Some(ModelSpec::Gmm(p)) => Ok(ModelSpec::Gmm(p.clone())),
            Some(ModelSpec::Bridge(e)) => {
                Ok(ModelSpec::Bridge(Endpoint::resolve(Some(&e.to_string()))?.expect("configured endpoint")))
            }
            None => match Endpoint::resolve(None)? {
                Some(e) => Ok(ModelSpec::Bridge(e)),
                None => Err(Failure::usage("no model configured; set model = gmm:<path> or bridge:<endpoint>")),
            },
        }
    }

    pub fn open_model(&self) -> Result<Box<dyn ScoreModel>, Failure> {
        match self.resolved_model()? {
            ModelSpec::Gmm(path) => {
                let gmm = GaussianMixtureModel::load(&path).map_err(|e| Failure::from(e).context(&path.display().to_string()))?;
                if let Some(shape) = self.shape.filter(|&s| s != gmm.shape()) {
                    return Err(Failure::usage(format!("configured shape {shape} but the mixture is {}", gmm.shape())));
                }
                Ok(Box::new(gmm))
            }
            ModelSpec::Bridge(endpoint) => {
                let shape = self.shape.ok_or_else(|| Failure::usage("bridge models need shape = CxHxW"))?;
                let cfg = BridgeConfig::new(endpoint, shape).timeout(self.bridge_timeout).connections(self.bridge_connections);
                Ok(Box::new(BridgeModel::connect(cfg)?))
            }
        }
    }

    pub fn key(&self) -> Result<StegoKey, Failure> {
        let codebook = match &self.codebook {
            Some(path) if self.projection.needs_codebook() => {
                Some(Codebook::read(path).map_err(|e| Failure::from(e).context(&path.display().to_string()))?)
            }
            _ => None,
        };
        Ok(StegoKey::new(self.projection, self.seed, codebook)?)
    }

    /// Renders the file back; `base` relativizes paths where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        match &self.model {
            Some(ModelSpec::Gmm(p)) => out += &format!("model = gmm:{}\n", rel(p)),
            Some(ModelSpec::Bridge(e)) => out += &format!("model = bridge:{e}\n"),
            None => {}
        }
        if let Some(s) = self.shape {
            out += &format!("shape = {}x{}x{}\n", s.channels, s.height, s.width);
        }
        out += &format!("projection = {}\nseed = {}\n", self.projection, self.seed);
        out += &format!("sigma_max = {}\nsigma_min = {}\nrho = {}\nsteps = {}\n", self.sigma_max, self.sigma_min, self.rho, self.steps);
        if let Some(p) = &self.codebook {
            out += &format!("codebook = {}\n", rel(p));
        }
        if let Some(c) = &self.context {
            out += &format!("context = {c}\n");
        }
        out
    }
}
