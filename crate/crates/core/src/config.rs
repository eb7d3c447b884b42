//! Plain-text module configurations: `key = value` lines grouped into blocks
//! separated by blank lines. `#` starts a comment.
//!
//! ```text
//! name = ours
//! module = activation
//! kind = adaa_snakebeta
//! oversample = 2
//!
//! name = convt
//! module = upsampler
//! kind = conv_transpose
//! factor = 2
//! ```

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::activations::{ActivationKind, ActivationSpec, BaseActivation, DEFAULT_ELU_A, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::filters::{FilterDesignSpec, FilterKind};
use crate::upsamplers::{UpsamplerKind, UpsamplerSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum ModuleSpec {
    Activation(ActivationSpec),
    Upsampler(UpsamplerSpec),
}

/// A module configuration with its report name.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedConfig {
    pub name: String,
    pub spec: ModuleSpec,
}

impl NamedConfig {
    pub fn activation(name: impl Into<String>, spec: ActivationSpec) -> Self {
        Self {
            name: name.into(),
            spec: ModuleSpec::Activation(spec),
        }
    }

    pub fn upsampler(name: impl Into<String>, spec: UpsamplerSpec) -> Self {
        Self {
            name: name.into(),
            spec: ModuleSpec::Upsampler(spec),
        }
    }

    /// Canonical `key = value` block (no trailing blank line).
    pub fn to_block(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("name", self.name.clone());
        match &self.spec {
            ModuleSpec::Activation(a) => {
                kv("module", "activation".into());
                match a.kind {
                    ActivationKind::Identity => kv("kind", "identity".into()),
                    ActivationKind::LeakyRelu { slope } => {
                        kv("kind", "leaky_relu".into());
                        kv("slope", slope.to_string());
                    }
                    ActivationKind::Elu { a } => {
                        kv("kind", "elu".into());
                        kv("a", a.to_string());
                    }
                    ActivationKind::SnakeBeta => kv("kind", "snakebeta".into()),
                    ActivationKind::AdaaSnakeBeta => kv("kind", "adaa_snakebeta".into()),
                    ActivationKind::AdaaGeneric(base) => {
                        kv("kind", "adaa_generic".into());
                        match base {
                            BaseActivation::Identity => kv("base", "identity".into()),
                            BaseActivation::LeakyRelu { slope } => {
                                kv("base", "leaky_relu".into());
                                kv("slope", slope.to_string());
                            }
                            BaseActivation::Elu { a } => {
                                kv("base", "elu".into());
                                kv("a", a.to_string());
                            }
                            BaseActivation::SnakeBeta => kv("base", "snakebeta".into()),
                        }
                        kv("tol", a.adaa_tol.to_string());
                    }
                }
                kv("alpha", a.alpha.to_string());
                kv("beta", a.beta.to_string());
                kv("oversample", a.oversample_factor.to_string());
            }
            ModuleSpec::Upsampler(u) => {
                kv("module", "upsampler".into());
                let kind = match u.kind {
                    UpsamplerKind::ConvTranspose => "conv_transpose",
                    UpsamplerKind::LinearInterp => "linear",
                    UpsamplerKind::NearestInterp => "nearest",
                    UpsamplerKind::AntiAliasedResample => "aa_resample",
                };
                kv("kind", kind.into());
                kv("factor", u.factor.to_string());
                kv("kernel_size", u.kernel_size.to_string());
                kv("seed", u.seed.to_string());
                kv("noise_prior", u.noise_prior.to_string());
                kv("cutoff", u.filter.cutoff.to_string());
                kv("transition", u.filter.transition_width.to_string());
                kv("atten_db", u.filter.stopband_atten_db.to_string());
            }
        }
        out
    }

    /// First 12 hex digits of the SHA-256 of [`Self::to_block`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_block().as_bytes());
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn serialize_configs(configs: &[NamedConfig]) -> String {
    configs
        .iter()
        .map(NamedConfig::to_block)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses every block in `text`. An input with no blocks is an error.
pub fn parse_configs(text: &str) -> Result<Vec<NamedConfig>> {
    let mut configs = Vec::new();
    let mut block: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // Comment-only lines do not end a block.
            if raw.trim().is_empty() && !block.is_empty() {
                configs.push(parse_block(&std::mem::take(&mut block))?);
            }
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let key = k.trim().to_ascii_lowercase();
        if block.iter().any(|(_, bk, _)| *bk == key) {
            return Err(Error::Config {
                line: line_no,
                message: format!("duplicate key {key:?}"),
            });
        }
        block.push((line_no, key, v.trim().to_string()));
    }
    if !block.is_empty() {
        configs.push(parse_block(&block)?);
    }
    if configs.is_empty() {
        return Err(Error::Config {
            line: 0,
            message: "no configurations found".into(),
        });
    }
    Ok(configs)
}

struct Block<'a> {
    entries: &'a [(usize, String, String)],
    used: Vec<bool>,
}

impl<'a> Block<'a> {
    fn first_line(&self) -> usize {
        self.entries.first().map_or(0, |e| e.0)
    }

    fn raw(&mut self, key: &str) -> Option<(usize, &'a str)> {
        let pos = self.entries.iter().position(|(_, k, _)| k == key)?;
        self.used[pos] = true;
        let (line, _, v) = &self.entries[pos];
        Some((*line, v.as_str()))
    }

    fn required(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let line = self.first_line();
        self.raw(key).ok_or_else(|| Error::Config {
            line,
            message: format!("missing key {key:?}"),
        })
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line,
                message: format!("bad value {v:?} for {key:?}"),
            }),
        }
    }

    fn finish(&self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            None => Ok(()),
            Some(i) => Err(Error::Config {
                line: self.entries[i].0,
                message: format!("unknown key {:?}", self.entries[i].1),
            }),
        }
    }
}

fn parse_block(entries: &[(usize, String, String)]) -> Result<NamedConfig> {
    let mut b = Block {
        entries,
        used: vec![false; entries.len()],
    };
    let line = b.first_line();
    let name = b.required("name")?.1.to_string();
    if name.is_empty() || name.contains(',') {
        return Err(Error::Config {
            line,
            message: format!("invalid name {name:?}"),
        });
    }
    let (module_line, module) = b.required("module")?;
    let spec = match module {
        "activation" => ModuleSpec::Activation(parse_activation(&mut b)?),
        "upsampler" => ModuleSpec::Upsampler(parse_upsampler(&mut b)?),
        other => {
            return Err(Error::Config {
                line: module_line,
                message: format!("unknown module {other:?}"),
            })
        }
    };
    b.finish()?;
    let validated = match &spec {
        ModuleSpec::Activation(a) => a.validate(),
        ModuleSpec::Upsampler(u) => u.validate(),
    };
    validated.map_err(|e| Error::Config {
        line,
        message: e.to_string(),
    })?;
    Ok(NamedConfig { name, spec })
}

fn parse_activation(b: &mut Block) -> Result<ActivationSpec> {
    let (kind_line, kind) = b.required("kind")?;
    let base_of = |b: &mut Block, name: &str, line: usize| -> Result<BaseActivation> {
        Ok(match name {
            "identity" => BaseActivation::Identity,
            "leaky_relu" => BaseActivation::LeakyRelu {
                slope: b.parsed("slope", DEFAULT_LEAKY_SLOPE)?,
            },
            "elu" => BaseActivation::Elu {
                a: b.parsed("a", DEFAULT_ELU_A)?,
            },
            "snakebeta" => BaseActivation::SnakeBeta,
            other => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown activation kind {other:?}"),
                })
            }
        })
    };
    let kind = match kind {
        "adaa_snakebeta" => ActivationKind::AdaaSnakeBeta,
        "adaa_generic" => {
            let (line, base) = b.required("base")?;
            ActivationKind::AdaaGeneric(base_of(b, base, line)?)
        }
        other => match base_of(b, other, kind_line)? {
            BaseActivation::Identity => ActivationKind::Identity,
            BaseActivation::LeakyRelu { slope } => ActivationKind::LeakyRelu { slope },
            BaseActivation::Elu { a } => ActivationKind::Elu { a },
            BaseActivation::SnakeBeta => ActivationKind::SnakeBeta,
        },
    };
    let mut spec = ActivationSpec::new(kind, b.parsed("oversample", 1)?);
    spec.alpha = b.parsed("alpha", 1.0)?;
    spec.beta = b.parsed("beta", 1.0)?;
    if matches!(kind, ActivationKind::AdaaGeneric(_)) {
        spec.adaa_tol = b.parsed("tol", spec.adaa_tol)?;
    }
    Ok(spec)
}

fn parse_upsampler(b: &mut Block) -> Result<UpsamplerSpec> {
    let (line, kind) = b.required("kind")?;
    let kind = match kind {
        "conv_transpose" => UpsamplerKind::ConvTranspose,
        "linear" => UpsamplerKind::LinearInterp,
        "nearest" => UpsamplerKind::NearestInterp,
        "aa_resample" => UpsamplerKind::AntiAliasedResample,
        other => {
            return Err(Error::Config {
                line,
                message: format!("unknown upsampler kind {other:?}"),
            })
        }
    };
    let factor: usize = b.parsed("factor", 2)?;
    let mut spec = UpsamplerSpec::new(kind, factor.max(1));
    spec.factor = factor;
    spec.kernel_size = b.parsed("kernel_size", spec.kernel_size)?;
    spec.seed = b.parsed("seed", 0)?;
    spec.noise_prior = b.parsed("noise_prior", false)?;
    spec.filter = FilterDesignSpec {
        cutoff: b.parsed("cutoff", spec.filter.cutoff)?,
        transition_width: b.parsed("transition", spec.filter.transition_width)?,
        stopband_atten_db: b.parsed("atten_db", spec.filter.stopband_atten_db)?,
        kind: FilterKind::LowPass,
    };
    Ok(spec)
}
