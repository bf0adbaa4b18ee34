use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gtr_core::density::{truncate, CellularGrid, ControlRegion, CutUniform, Density, Density1D, DiracMixture, LinearRamp, UniformTarget};
use gtr_core::{BarycentricState, CellularMask};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    UniversalExact,
    Identities,
    Approximate,
    Robustness,
    DiracLimit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::UniversalExact => "universal-exact",
            Self::Identities => "identities",
            Self::Approximate => "approximate",
            Self::Robustness => "robustness",
            Self::DiracLimit => "dirac-limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum End {
    #[default]
    LeftEnd,
    RightEnd,
}

impl From<End> for gtr_core::universal::Target {
    fn from(e: End) -> Self {
        match e {
            End::LeftEnd => Self::LeftEnd,
            End::RightEnd => Self::RightEnd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    #[default]
    Corner,
    Centroid,
}

impl From<Geometry> for gtr_core::robustness::ControlGeometry {
    fn from(g: Geometry) -> Self {
        match g {
            Geometry::Corner => Self::VertexCorner,
            Geometry::Centroid => Self::Centroid,
        }
    }
}

/// Breaking-point density, written either as a compact string
/// (`corner:1:0.5`) or as a table with a `kind` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    Cellular { mask: String },
    Grid { resolution: usize, mask: Option<String> },
    Dirac { atoms: Vec<Vec<f64>>, weights: Option<Vec<f64>> },
    /// Uniform density with the corner at `vertex` (1-based) made unbreakable.
    Corner { vertex: usize, epsilon: f64 },
    Centroid { epsilon: f64 },
    Balls { epsilon: f64, centers: Vec<Vec<f64>> },
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect()
}

fn parse_points(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_floats).collect()
}

impl FromStr for DensitySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().splitn(3, ':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}"));
        let int = |t: &str| t.parse::<usize>().map_err(|e| format!("bad integer {t:?}: {e}"));
        Ok(match parts.as_slice() {
            ["uniform"] => Self::Uniform,
            ["cellular", mask] => Self::Cellular { mask: mask.to_string() },
            ["grid", res] => Self::Grid { resolution: int(res)?, mask: None },
            ["grid", res, mask] => Self::Grid { resolution: int(res)?, mask: Some(mask.to_string()) },
            ["dirac", atoms] => Self::Dirac { atoms: parse_points(atoms)?, weights: None },
            ["corner", v, eps] => Self::Corner { vertex: int(v)?, epsilon: num(eps)? },
            ["centroid", eps] => Self::Centroid { epsilon: num(eps)? },
            ["balls", eps, centers] => Self::Balls { epsilon: num(eps)?, centers: parse_points(centers)? },
            _ => {
                return Err(format!(
                    "unknown density {s:?}; expected uniform, cellular:MASK, grid:RES[:MASK], dirac:ATOMS, \
                     corner:VERTEX:EPS, centroid:EPS or balls:EPS:CENTERS"
                ))
            }
        })
    }
}

impl DensitySpec {
    pub fn build(&self, n: usize) -> gtr_core::Result<Density> {
        let states = |pts: &[Vec<f64>]| pts.iter().map(|p| BarycentricState::new(p.clone())).collect::<Result<Vec<_>, _>>();
        let invalid = |m: String| gtr_core::Error::InvalidArgument(m);
        Ok(match self {
            Self::Uniform => Density::uniform(n)?,
            Self::Cellular { mask } => {
                if n != 2 {
                    return Err(invalid("a cellular elastic has two outcomes".into()));
                }
                Density::Cellular1D(gtr_core::density::Cellular1D::new(mask.parse()?))
            }
            Self::Grid { resolution, mask } => {
                let grid = match mask {
                    Some(m) => CellularGrid::new(n, *resolution, m.parse::<CellularMask>()?)?,
                    None => CellularGrid::all_breakable(n, *resolution)?,
                };
                Density::CellularGrid(grid)
            }
            Self::Dirac { atoms, weights } => {
                let atoms = states(atoms)?;
                Density::DiracMixture(match weights {
                    Some(w) => DiracMixture::new(atoms, w.clone())?,
                    None => DiracMixture::uniform(atoms)?,
                })
            }
            Self::Corner { vertex, epsilon } => {
                if *vertex == 0 || *vertex > n {
                    return Err(invalid(format!("vertex {vertex} not in 1..={n}")));
                }
                truncate(&Density::uniform(n)?, ControlRegion::corner(n, vertex - 1, *epsilon)?)?
            }
            Self::Centroid { epsilon } => truncate(&Density::uniform(n)?, ControlRegion::centroid(n, *epsilon)?)?,
            Self::Balls { epsilon, centers } => {
                truncate(&Density::uniform(n)?, ControlRegion::balls(states(centers)?, *epsilon)?)?
            }
        })
    }
}

/// Target density on the two-outcome elastic: `ramp`, `uniform` or `cut:Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TargetDensity {
    Ramp,
    Uniform,
    Cut(f64),
}

impl TargetDensity {
    pub fn as_density(&self) -> Box<dyn Density1D + Sync> {
        match *self {
            Self::Ramp => Box::new(LinearRamp),
            Self::Uniform => Box::new(UniformTarget),
            Self::Cut(cut) => Box::new(CutUniform { cut }),
        }
    }
}

impl FromStr for TargetDensity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "ramp" => Ok(Self::Ramp),
            "uniform" => Ok(Self::Uniform),
            t => match t.strip_prefix("cut:").map(str::parse::<f64>) {
                Some(Ok(c)) if (0.0..1.0).contains(&c) => Ok(Self::Cut(c)),
                _ => Err(format!("unknown target density {s:?}; expected ramp, uniform or cut:Y with 0 <= Y < 1")),
            },
        }
    }
}

impl TryFrom<String> for TargetDensity {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<TargetDensity> for String {
    fn from(t: TargetDensity) -> Self {
        t.to_string()
    }
}

impl fmt::Display for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ramp => f.write_str("ramp"),
            Self::Uniform => f.write_str("uniform"),
            Self::Cut(c) => write!(f, "cut:{c}"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DensityInput {
    Text(String),
    Table(DensitySpec),
}

fn density_field<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DensitySpec>, D::Error> {
    match Option::<DensityInput>::deserialize(d)? {
        None => Ok(None),
        Some(DensityInput::Table(t)) => Ok(Some(t)),
        Some(DensityInput::Text(s)) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

/// Everything a run needs. Loaded from a TOML file and then overridden
/// field by field from the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "density_field", skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<End>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_density: Option<TargetDensity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn override_with(&mut self, other: ExperimentConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command, seed, threads, out, format, state, density, samples, cells, position, target, max_cells, n_max,
            target_density, m, ell, points, delta, outcome, geometry, epsilons, centers
        );
    }
}

pub fn required<T: Clone>(value: &Option<T>, name: &str, command: Command) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Validation(format!("{} needs --{name}", command.name())))
}

/// Comma-separated floats, for flags.
pub fn float_list(s: &str) -> Result<Vec<f64>, String> {
    parse_floats(s)
}

/// Semicolon-separated points of comma-separated floats, for flags.
pub fn point_list(s: &str) -> Result<Vec<Vec<f64>>, String> {
    parse_points(s)
}
