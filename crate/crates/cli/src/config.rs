//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use parreg_core::coeffs::{self, CoefficientPath};
use parreg_core::field::{Field, SpaceField};
use parreg_core::grid::{GridSpec, SpaceGrid};
use parreg_core::linalg::{self, Matrix};
use parreg_core::sources::{self, FamilyParams};
use parreg_core::stochastic::MatrixPath;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: Option<String>,
    pub scenario: Option<String>,
    pub path: Option<PathSpec>,
    pub grid: Option<GridConfig>,
    /// Drift matrix, row-major.
    pub a: Option<Vec<Vec<f64>>>,
    pub horizon: Option<f64>,
    pub p: Option<f64>,
    pub p0: Option<usize>,
    pub pairs: Option<Vec<[usize; 2]>>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub source: Option<SourceSpec>,
    /// Additional sources evaluated alongside `source` (estimate only).
    pub extra_sources: Option<Vec<SourceSpec>>,
    pub lambdas: Option<Vec<f64>>,
    pub certify_times: Option<TimeSamples>,
    pub probes: Option<Vec<Probe>>,
    pub integrand: Option<IntegrandSpec>,
    pub interval: Option<[f64; 2]>,
    pub profile: Option<String>,
    pub q: Option<Vec<Vec<f64>>>,
    pub w: Option<WSpec>,
    pub space: Option<SpaceConfig>,
    pub refine: Option<bool>,
    pub write_field: Option<bool>,
    pub outputs: Option<OutputNames>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathSpec {
    Identity { dim: usize },
    Constant { matrix: Vec<Vec<f64>> },
    /// Entry `(i, j)` of `c(t)` is `sum_k coeffs[i][j][k] t^k`.
    Polynomial { coeffs: Vec<Vec<Vec<f64>>> },
    /// `[[1, t/2], [t/2, t^2]]`.
    MixedQuadratic,
    /// `[[1 + e^t, t/2], [t/2, t^2]]`.
    DriftExample,
    /// CSV with header `t,c11,...,cdd`; relative paths resolve against the
    /// config file.
    Table { file: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub half_widths: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_widths: Vec<f64>,
    pub points: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    /// `1_{[t_lo, t_hi]}(t) exp(-|x|^2)`.
    Gaussian { t_lo: f64, t_hi: f64 },
    /// `bump(t / t_half) exp(-|x|^2 / (2 width^2))`.
    BumpGaussian { t_half: f64, width: f64 },
    Family {
        members: Option<usize>,
        modes: Option<usize>,
        max_wavenumber: Option<f64>,
        max_frequency: Option<f64>,
        radius: f64,
        t_lo: f64,
        t_hi: f64,
    },
    NearExtremal {
        i: usize,
        j: usize,
        k: f64,
        radius: f64,
        t_lo: f64,
        t_hi: f64,
    },
    File { path: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSamples {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntegrandSpec {
    Identity { dim: usize },
    /// `diag(1, s)`.
    DiagonalRamp,
    Constant { matrix: Vec<Vec<f64>> },
    /// Planar rotation by angle `s`.
    Rotation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WSpec {
    /// `exp(-|x|^2 / (2 width^2))`.
    Gaussian { width: f64 },
    Bump { radius: f64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputNames {
    pub json: Option<String>,
    pub csv: Option<String>,
    pub field: Option<String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: Config =
            serde_json::from_str(&text).map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.apply_scenario()?;
        Ok(cfg)
    }

    /// Fills unset keys from the named scenario.
    fn apply_scenario(&mut self) -> Result<()> {
        let Some(name) = self.scenario.clone() else {
            return Ok(());
        };
        match name.as_str() {
            "example-exa" => {
                self.path.get_or_insert(PathSpec::MixedQuadratic);
                self.p0.get_or_insert(1);
                self.p.get_or_insert(2.0);
                self.pairs.get_or_insert(vec![[1, 1]]);
                self.certify_times.get_or_insert(TimeSamples {
                    t_min: -5.0,
                    t_max: 5.0,
                    count: 1001,
                });
                self.grid.get_or_insert(GridConfig {
                    half_widths: vec![24.0, 24.0],
                    points: vec![128, 128],
                    t_min: -1.0,
                    t_max: 1.0,
                    dt: 1.0 / 32.0,
                });
            }
            "example-exa1" | "remark-ko" => {
                self.path.get_or_insert(PathSpec::DriftExample);
                let a = if name == "remark-ko" {
                    vec![vec![0.0, 0.0], vec![1.0, 0.0]]
                } else {
                    vec![vec![0.0, 0.0], vec![0.0, 1.0]]
                };
                self.a.get_or_insert(a);
                self.horizon.get_or_insert(1.0);
                self.p0.get_or_insert(1);
                self.p.get_or_insert(2.0);
                self.certify_times.get_or_insert(TimeSamples {
                    t_min: -1.0,
                    t_max: 1.0,
                    count: 201,
                });
                self.grid.get_or_insert(GridConfig {
                    half_widths: vec![25.0, 25.0],
                    points: vec![128, 128],
                    t_min: -0.5,
                    t_max: 0.5,
                    dt: 1.0 / 32.0,
                });
                self.source.get_or_insert(SourceSpec::BumpGaussian {
                    t_half: 0.5,
                    width: 1.0,
                });
                self.refine.get_or_insert(true);
            }
            other => bail!("invalid config: unknown scenario '{other}' (key 'scenario')"),
        }
        Ok(())
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, key: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| anyhow!("invalid config: missing key '{key}'"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| anyhow!("invalid config: missing key 'seed' (required for stochastic commands)"))
    }

    pub fn p(&self) -> f64 {
        self.p.unwrap_or(2.0)
    }

    pub fn p0(&self, dim: usize) -> usize {
        self.p0.unwrap_or(dim)
    }

    pub fn build_path(&self, base_dir: &Path) -> Result<CoefficientPath> {
        let spec = self.require(&self.path, "path")?;
        Ok(match spec {
            PathSpec::Identity { dim } => CoefficientPath::identity(*dim),
            PathSpec::Constant { matrix } => CoefficientPath::constant(matrix_from(matrix, "path.matrix")?)?,
            PathSpec::Polynomial { coeffs } => CoefficientPath::polynomial(coeffs.clone())?,
            PathSpec::MixedQuadratic => coeffs::mixed_quadratic_path(),
            PathSpec::DriftExample => coeffs::exponential_mixed_path(),
            PathSpec::Table { file } => CoefficientPath::from_csv(resolve(base_dir, file))?,
        })
    }

    pub fn build_grid(&self) -> Result<GridSpec> {
        let g = self.require(&self.grid, "grid")?;
        let space = SpaceGrid::new(g.half_widths.clone(), g.points.clone())
            .map_err(|e| anyhow!("invalid config: key 'grid': {e}"))?;
        GridSpec::new(space, g.t_min, g.t_max, g.dt).map_err(|e| anyhow!("invalid config: key 'grid': {e}"))
    }

    pub fn build_space(&self) -> Result<SpaceGrid> {
        let s = self.require(&self.space, "space")?;
        SpaceGrid::new(s.half_widths.clone(), s.points.clone())
            .map_err(|e| anyhow!("invalid config: key 'space': {e}"))
    }

    pub fn build_a(&self, dim: usize) -> Result<Matrix> {
        match &self.a {
            Some(rows) => {
                let a = matrix_from(rows, "a")?;
                if a.shape() != (dim, dim) {
                    bail!("invalid config: key 'a' must be {dim}x{dim}");
                }
                Ok(a)
            }
            None => Ok(Matrix::zeros(dim, dim)),
        }
    }

    pub fn pairs(&self, p0: usize) -> Vec<(usize, usize)> {
        match &self.pairs {
            Some(list) => list.iter().map(|[i, j]| (*i, *j)).collect(),
            None => {
                let mut out = Vec::new();
                for i in 1..=p0 {
                    for j in i..=p0 {
                        out.push((i, j));
                    }
                }
                out
            }
        }
    }

    pub fn source_is_random(spec: &SourceSpec) -> bool {
        matches!(spec, SourceSpec::Family { .. })
    }

    /// Builds the sources described by `spec` on `grid`.
    pub fn build_sources(
        &self,
        spec: &SourceSpec,
        grid: &GridSpec,
        base_dir: &Path,
    ) -> Result<Vec<Field>> {
        Ok(match spec {
            SourceSpec::Zero => vec![Field::zeros(grid.clone())],
            SourceSpec::Gaussian { t_lo, t_hi } => vec![sources::gaussian_source(grid.clone(), *t_lo, *t_hi)],
            SourceSpec::BumpGaussian { t_half, width } => {
                let (th, w) = (*t_half, *width);
                if !(th > 0.0 && w > 0.0) {
                    bail!("invalid config: key 'source': t_half and width must be positive");
                }
                vec![Field::from_fn(grid.clone(), move |t, x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    sources::bump(t / th) * (-r2 / (2.0 * w * w)).exp()
                })]
            }
            SourceSpec::Family {
                members,
                modes,
                max_wavenumber,
                max_frequency,
                radius,
                t_lo,
                t_hi,
            } => {
                let std = FamilyParams::standard(*radius, *t_lo, *t_hi);
                let params = FamilyParams {
                    members: members.unwrap_or(std.members),
                    modes: modes.unwrap_or(std.modes),
                    max_wavenumber: max_wavenumber.unwrap_or(std.max_wavenumber),
                    max_frequency: max_frequency.unwrap_or(std.max_frequency),
                    ..std
                };
                sources::random_smooth_family(grid, &params, self.seed()?)?
            }
            SourceSpec::NearExtremal {
                i,
                j,
                k,
                radius,
                t_lo,
                t_hi,
            } => vec![sources::near_extremal_mixed(grid, *i, *j, *k, *radius, *t_lo, *t_hi)?],
            SourceSpec::File { path } => {
                let f = Field::read_from(resolve(base_dir, path))?;
                if !f.grid().same_as(grid) {
                    bail!("invalid config: key 'source.path': field grid differs from 'grid'");
                }
                vec![f]
            }
        })
    }

    pub fn build_integrand(&self) -> Result<MatrixPath> {
        let spec = self.require(&self.integrand, "integrand")?;
        let [a, b] = self.interval.unwrap_or([0.0, 1.0]);
        Ok(match spec {
            IntegrandSpec::Identity { dim } => MatrixPath::constant(Matrix::identity(*dim, *dim), a, b)?,
            IntegrandSpec::DiagonalRamp => MatrixPath::diagonal(2, a, b, |s, i| if i == 0 { 1.0 } else { s })?,
            IntegrandSpec::Constant { matrix } => MatrixPath::constant(matrix_from(matrix, "integrand.matrix")?, a, b)?,
            IntegrandSpec::Rotation => MatrixPath::from_fn(2, 2, a, b, |s| {
                Matrix::from_row_slice(2, 2, &[s.cos(), -s.sin(), s.sin(), s.cos()])
            })?,
        })
    }

    pub fn build_w(&self, space: &SpaceGrid) -> Result<SpaceField> {
        let spec = self.require(&self.w, "w")?;
        Ok(match spec {
            WSpec::Gaussian { width } => {
                let w = *width;
                SpaceField::from_fn(space.clone(), move |x| {
                    (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * w * w)).exp()
                })
            }
            WSpec::Bump { radius } => {
                let r = *radius;
                SpaceField::from_fn(space.clone(), move |x| sources::radial_bump(x, r))
            }
        })
    }

    pub fn output_name(&self, kind: &str, default: &str) -> String {
        let names = self.outputs.clone().unwrap_or_default();
        match kind {
            "json" => names.json,
            "csv" => names.csv,
            _ => names.field,
        }
        .unwrap_or_else(|| default.to_string())
    }
}

pub fn matrix_from(rows: &[Vec<f64>], key: &str) -> Result<Matrix> {
    linalg::from_rows(rows).map_err(|e| anyhow!("invalid config: key '{key}': {e}"))
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
