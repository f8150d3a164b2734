use crate::blocks::BlockKind;
use crate::error::{ModelError, Result};
use serde::{Deserialize, Serialize};

/// How the level-entry convolution output is wired to the last encoding
/// block's output at the same spatial level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    None,
    Add,
    Concat,
}

impl Sharing {
    pub const ALL: [Sharing; 3] = [Sharing::None, Sharing::Add, Sharing::Concat];

    pub fn name(self) -> &'static str {
        match self {
            Sharing::None => "none",
            Sharing::Add => "add",
            Sharing::Concat => "concat",
        }
    }
}

impl std::str::FromStr for Sharing {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Sharing::None),
            "add" => Ok(Sharing::Add),
            "concat" => Ok(Sharing::Concat),
            other => Err(ModelError::Config(format!(
                "unknown feature sharing `{other}` (none, add, concat)"
            ))),
        }
    }
}

impl std::fmt::Display for Sharing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One point in the network family: width/depth multipliers, the block kind
/// per role, the sharing mode, and the two class counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub w: usize,
    pub d: usize,
    pub encoder: BlockKind,
    pub decoder: BlockKind,
    pub sharing: Sharing,
    pub tissue_classes: usize,
    pub diagnostic_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            w: 64,
            d: 5,
            encoder: BlockKind::Esp,
            decoder: BlockKind::Psp,
            sharing: Sharing::Concat,
            tissue_classes: 8,
            diagnostic_classes: 4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.w % 2 != 0 {
            return Err(ModelError::Config(format!(
                "width multiplier must be even and positive (level 5 uses w/2), got {}",
                self.w
            )));
        }
        if self.d < 1 {
            return Err(ModelError::Config("depth multiplier must be >= 1".into()));
        }
        if self.tissue_classes < 2 || self.diagnostic_classes < 2 {
            return Err(ModelError::Config(
                "class counts must be at least 2".into(),
            ));
        }
        Ok(())
    }
}
