use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::glimpse::{GlimpseConfig, GlimpseDims};

/// Architecture selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    /// One recurrent core drives both the gaze policy and the classifier.
    Ram,
    /// Two layers: the lower one classifies, the upper one steers the gaze.
    Dram,
    /// Two layers: the lower one steers the gaze, the upper one classifies.
    Mram,
    /// Full-image LeNet-5 reference classifier.
    Lenet,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ram => "ram",
            Variant::Dram => "dram",
            Variant::Mram => "mram",
            Variant::Lenet => "lenet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ram" => Ok(Variant::Ram),
            "dram" => Ok(Variant::Dram),
            "mram" => Ok(Variant::Mram),
            "lenet" | "lenet5" | "lenet-5" | "cnn" => Ok(Variant::Lenet),
            other => Err(Error::Config(format!("unknown model variant '{other}'"))),
        }
    }

    pub fn is_two_layer(self) -> bool {
        matches!(self, Variant::Dram | Variant::Mram)
    }

    pub fn is_attention(self) -> bool {
        !matches!(self, Variant::Lenet)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BaselineMode {
    /// Reads the hidden state of the layer that drives the gaze policy.
    Single,
    /// Reads the concatenation of both layers' hidden states.
    Hybrid,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Single => "single",
            BaselineMode::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(BaselineMode::Single),
            "hybrid" => Ok(BaselineMode::Hybrid),
            other => Err(Error::Config(format!("unknown baseline mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    pub variant: Variant,
    /// LSTM width of every recurrent layer.
    pub hidden: usize,
    pub num_glimpses: usize,
    pub glimpse: GlimpseConfig,
    pub glimpse_dims: GlimpseDims,
    pub baseline: BaselineMode,
    /// DRAM only: initialise the gaze layer from a CNN over the full image.
    pub context_cnn: bool,
    pub num_classes: usize,
    /// Standard deviation of the Gaussian location policy, in normalized
    /// coordinates.
    pub policy_sigma: f64,
    /// Side of the (square) input images.
    pub image_size: usize,
}

impl ModelSpec {
    /// Defaults for each variant: 256 LSTM units, 8×8 single-scale glimpses,
    /// hybrid baseline for MRAM, context CNN for DRAM.
    pub fn new(variant: Variant, image_size: usize, num_classes: usize) -> Self {
        ModelSpec {
            variant,
            hidden: 256,
            num_glimpses: match variant {
                Variant::Ram => 7,
                _ => 10,
            },
            glimpse: GlimpseConfig::default(),
            glimpse_dims: GlimpseDims::default(),
            baseline: match variant {
                Variant::Mram => BaselineMode::Hybrid,
                _ => BaselineMode::Single,
            },
            context_cnn: variant == Variant::Dram,
            num_classes,
            policy_sigma: 0.1,
            image_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.image_size == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        if self.variant == Variant::Lenet {
            if self.image_size < 12 {
                return Err(Error::Config(format!("LeNet-5 needs images of at least 12 pixels, got {}", self.image_size)));
            }
            return Ok(());
        }
        self.glimpse.validate()?;
        if self.hidden == 0 || self.glimpse_dims.what == 0 || self.glimpse_dims.where_ == 0 || self.glimpse_dims.out == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.num_glimpses == 0 {
            return Err(Error::Config("num_glimpses must be >= 1".into()));
        }
        if !(self.policy_sigma > 0.0 && self.policy_sigma.is_finite()) {
            return Err(Error::Config(format!("policy_sigma must be positive, got {}", self.policy_sigma)));
        }
        if self.baseline == BaselineMode::Hybrid && !self.variant.is_two_layer() {
            return Err(Error::Config(format!(
                "hybrid baseline needs a two-layer model, not {}",
                self.variant.name()
            )));
        }
        if self.context_cnn && self.variant != Variant::Dram {
            return Err(Error::Config(format!("context CNN is only defined for DRAM, not {}", self.variant.name())));
        }
        Ok(())
    }

    /// Row label in the style of the results tables, e.g.
    /// `"DRAM without CNN, 10 glimpses"`.
    pub fn tag(&self) -> String {
        let mut s = String::new();
        match self.variant {
            Variant::Lenet => return String::from("CNN(LeNet-5)"),
            Variant::Ram => s.push_str("RAM"),
            Variant::Mram => {
                s.push_str("MRAM");
                if self.baseline == BaselineMode::Single {
                    s.push_str(" single baseline");
                }
            }
            Variant::Dram => {
                s.push_str("DRAM");
                if !self.context_cnn {
                    s.push_str(" without CNN");
                }
                if self.baseline == BaselineMode::Hybrid {
                    s.push_str(" with hybrid baseline");
                }
            }
        }
        s.push_str(&format!(", {} glimpses", self.num_glimpses));
        if self.glimpse.num_scales > 1 {
            s.push_str(&format!(", {} scale", self.glimpse.num_scales));
        }
        s
    }
}
