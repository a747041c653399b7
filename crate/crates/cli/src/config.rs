//! Run configuration: a flat key=value file mirrored by command-line flags;
//! flags win over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use viseme_core::alphabet::Profile;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub precision: f64,
    pub min_card: usize,
    pub vq_bits: u32,
    pub profile: Profile,
    pub clamp: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            precision: 4.0,
            min_card: 8,
            vq_bits: 4,
            profile: Profile::Full,
            clamp: 2.0,
            out: PathBuf::from("."),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn profile_name(&self) -> &'static str {
        match self.profile {
            Profile::Full => "full",
            Profile::ConvexHull => "convex-hull",
        }
    }

    pub fn to_file_form(&self) -> String {
        format!(
            "precision={}\nmin_card={}\nvq_bits={}\nprofile={}\nclamp={}\nout={}\nseed={}\n",
            self.precision,
            self.min_card,
            self.vq_bits,
            self.profile_name(),
            self.clamp,
            self.out.display(),
            self.seed
        )
    }

    pub fn parse_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {} is not key=value", lineno + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "precision" => cfg.precision = value.parse()?,
                "min_card" => cfg.min_card = value.parse()?,
                "vq_bits" => cfg.vq_bits = value.parse()?,
                "profile" => cfg.profile = value.parse()?,
                "clamp" => cfg.clamp = value.parse()?,
                "out" => cfg.out = PathBuf::from(value),
                "seed" => cfg.seed = value.parse()?,
                other => bail!("unknown config key `{other}`"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.precision < 0.0 {
            bail!("precision must be non-negative");
        }
        if self.min_card < 6 {
            bail!("min_card must be at least 6");
        }
        if !(1..=12).contains(&self.vq_bits) {
            bail!("vq_bits must be in 1..=12");
        }
        if self.clamp <= 0.0 {
            bail!("clamp must be positive");
        }
        Ok(())
    }
}
