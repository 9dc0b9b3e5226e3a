use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// The eight augmentations, in application order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentationKind {
    AxisMirror,
    RandomScale,
    JointJitter,
    SlowDown,
    SpeedUp,
    FrameDropout,
    JointDropout,
    RandomRotation,
}

impl AugmentationKind {
    pub const ORDER: [AugmentationKind; 8] = [
        AugmentationKind::AxisMirror,
        AugmentationKind::RandomScale,
        AugmentationKind::JointJitter,
        AugmentationKind::SlowDown,
        AugmentationKind::SpeedUp,
        AugmentationKind::FrameDropout,
        AugmentationKind::JointDropout,
        AugmentationKind::RandomRotation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::AxisMirror => "axis-mirror",
            AugmentationKind::RandomScale => "random-scale",
            AugmentationKind::JointJitter => "joint-jitter",
            AugmentationKind::SlowDown => "slow-down",
            AugmentationKind::SpeedUp => "speed-up",
            AugmentationKind::FrameDropout => "frame-dropout",
            AugmentationKind::JointDropout => "joint-dropout",
            AugmentationKind::RandomRotation => "random-rotation",
        }
    }

    pub fn from_name(name: &str) -> Option<AugmentationKind> {
        Self::ORDER.iter().copied().find(|k| k.name() == name)
    }

    /// Per-frame geometric perturbations.
    pub fn is_spatial(self) -> bool {
        matches!(
            self,
            AugmentationKind::AxisMirror
                | AugmentationKind::RandomScale
                | AugmentationKind::JointJitter
                | AugmentationKind::FrameDropout
                | AugmentationKind::JointDropout
        )
    }

    /// Time-axis resampling.
    pub fn is_temporal(self) -> bool {
        matches!(self, AugmentationKind::SlowDown | AugmentationKind::SpeedUp)
    }
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirrorParams {
    pub enabled: bool,
    pub probability: f64,
}

/// Zero-mean Gaussian perturbation with the given variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub enabled: bool,
    pub probability: f64,
    pub variance: f64,
}

/// Uniform speed factor range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedParams {
    pub enabled: bool,
    pub probability: f64,
    pub min_factor: f64,
    pub max_factor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutParams {
    pub enabled: bool,
    pub probability: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub enabled: bool,
    pub probability: f64,
    /// Each Euler angle is drawn from U[−max_angle, max_angle].
    pub max_angle: f64,
}

/// Trigger probability and strength of every augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub axis_mirror: MirrorParams,
    pub random_scale: NoiseParams,
    pub joint_jitter: NoiseParams,
    pub slow_down: SpeedParams,
    pub speed_up: SpeedParams,
    pub frame_dropout: DropoutParams,
    pub joint_dropout: DropoutParams,
    pub random_rotation: RotationParams,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Names accepted by [`AugmentationConfig::profile`] besides `without-<kind>`.
pub const BUILTIN_PROFILES: [&str; 5] =
    ["baseline", "spatial-only", "temporal-only", "with-rotation", "none"];

impl AugmentationConfig {
    /// Every augmentation enabled with the published probabilities and
    /// strengths, rotation included.
    pub fn full() -> Self {
        AugmentationConfig {
            axis_mirror: MirrorParams {
                enabled: true,
                probability: 0.5,
            },
            random_scale: NoiseParams {
                enabled: true,
                probability: 0.7,
                variance: 0.02,
            },
            joint_jitter: NoiseParams {
                enabled: true,
                probability: 0.5,
                variance: 0.02,
            },
            slow_down: SpeedParams {
                enabled: true,
                probability: 0.5,
                min_factor: 0.5,
                max_factor: 0.9,
            },
            speed_up: SpeedParams {
                enabled: true,
                probability: 0.5,
                min_factor: 1.2,
                max_factor: 2.0,
            },
            frame_dropout: DropoutParams {
                enabled: true,
                probability: 0.5,
                rate: 0.5,
            },
            joint_dropout: DropoutParams {
                enabled: true,
                probability: 0.5,
                rate: 0.5,
            },
            random_rotation: RotationParams {
                enabled: true,
                probability: 0.6,
                max_angle: PI,
            },
        }
    }

    /// [`full`](Self::full) without random rotation.
    pub fn baseline() -> Self {
        Self::full().with(AugmentationKind::RandomRotation, false)
    }

    pub fn none() -> Self {
        AugmentationKind::ORDER
            .iter()
            .fold(Self::full(), |c, &k| c.with(k, false))
    }

    /// Copy with one augmentation switched on or off.
    pub fn with(mut self, kind: AugmentationKind, enabled: bool) -> Self {
        *self.enabled_mut(kind) = enabled;
        self
    }

    fn enabled_mut(&mut self, kind: AugmentationKind) -> &mut bool {
        match kind {
            AugmentationKind::AxisMirror => &mut self.axis_mirror.enabled,
            AugmentationKind::RandomScale => &mut self.random_scale.enabled,
            AugmentationKind::JointJitter => &mut self.joint_jitter.enabled,
            AugmentationKind::SlowDown => &mut self.slow_down.enabled,
            AugmentationKind::SpeedUp => &mut self.speed_up.enabled,
            AugmentationKind::FrameDropout => &mut self.frame_dropout.enabled,
            AugmentationKind::JointDropout => &mut self.joint_dropout.enabled,
            AugmentationKind::RandomRotation => &mut self.random_rotation.enabled,
        }
    }

    pub fn is_enabled(&self, kind: AugmentationKind) -> bool {
        let mut c = *self;
        *c.enabled_mut(kind)
    }

    /// Trigger probability, or 0 when the augmentation is disabled.
    pub fn effective_probability(&self, kind: AugmentationKind) -> f64 {
        if !self.is_enabled(kind) {
            return 0.0;
        }
        match kind {
            AugmentationKind::AxisMirror => self.axis_mirror.probability,
            AugmentationKind::RandomScale => self.random_scale.probability,
            AugmentationKind::JointJitter => self.joint_jitter.probability,
            AugmentationKind::SlowDown => self.slow_down.probability,
            AugmentationKind::SpeedUp => self.speed_up.probability,
            AugmentationKind::FrameDropout => self.frame_dropout.probability,
            AugmentationKind::JointDropout => self.joint_dropout.probability,
            AugmentationKind::RandomRotation => self.random_rotation.probability,
        }
    }

    /// Resolves a built-in profile name.
    pub fn profile(name: &str) -> Result<Self> {
        let base = Self::baseline();
        let cfg = match name {
            "baseline" => base,
            "none" => Self::none(),
            "with-rotation" => base.with(AugmentationKind::RandomRotation, true),
            "spatial-only" => AugmentationKind::ORDER
                .iter()
                .filter(|k| k.is_temporal())
                .fold(base, |c, &k| c.with(k, false)),
            "temporal-only" => AugmentationKind::ORDER
                .iter()
                .filter(|k| k.is_spatial())
                .fold(base, |c, &k| c.with(k, false)),
            other => {
                let kind = other
                    .strip_prefix("without-")
                    .and_then(AugmentationKind::from_name)
                    .ok_or_else(|| Error::Config(format!("unknown augmentation profile `{name}`")))?;
                base.with(kind, false)
            }
        };
        Ok(cfg)
    }

    /// Every built-in profile name, `without-<kind>` variants included.
    pub fn profile_names() -> Vec<String> {
        BUILTIN_PROFILES
            .iter()
            .map(|s| s.to_string())
            .chain(AugmentationKind::ORDER.iter().map(|k| format!("without-{k}")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        let bad = |m: String| Err(Error::Config(m));
        for k in AugmentationKind::ORDER {
            let mut c = *self;
            *c.enabled_mut(k) = true;
            if !unit(c.effective_probability(k)) {
                return bad(format!("{k}: probability must be in [0, 1]"));
            }
        }
        for (k, v) in [
            (AugmentationKind::RandomScale, self.random_scale.variance),
            (AugmentationKind::JointJitter, self.joint_jitter.variance),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{k}: variance must be >= 0"));
            }
        }
        for (k, v) in [
            (AugmentationKind::FrameDropout, self.frame_dropout.rate),
            (AugmentationKind::JointDropout, self.joint_dropout.rate),
        ] {
            if !unit(v) {
                return bad(format!("{k}: rate must be in [0, 1]"));
            }
        }
        let s = self.slow_down;
        if !(s.min_factor > 0.0 && s.min_factor <= s.max_factor && s.max_factor < 1.0) {
            return bad("slow-down: factor range must lie inside (0, 1)".into());
        }
        let s = self.speed_up;
        if !(s.min_factor > 1.0 && s.min_factor <= s.max_factor && s.max_factor.is_finite()) {
            return bad("speed-up: factor range must lie inside (1, inf)".into());
        }
        if !(0.0..=PI).contains(&self.random_rotation.max_angle) {
            return bad("random-rotation: angle bound must be in [0, pi]".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("augmentation profile: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AugmentationKind::*;

    #[test]
    fn published_defaults() {
        let c = AugmentationConfig::full();
        assert_eq!(c.axis_mirror.probability, 0.5);
        assert_eq!((c.random_scale.probability, c.random_scale.variance), (0.7, 0.02));
        assert_eq!((c.joint_jitter.probability, c.joint_jitter.variance), (0.5, 0.02));
        assert_eq!(
            (c.slow_down.probability, c.slow_down.min_factor, c.slow_down.max_factor),
            (0.5, 0.5, 0.9)
        );
        assert_eq!(
            (c.speed_up.probability, c.speed_up.min_factor, c.speed_up.max_factor),
            (0.5, 1.2, 2.0)
        );
        assert_eq!((c.frame_dropout.probability, c.frame_dropout.rate), (0.5, 0.5));
        assert_eq!((c.joint_dropout.probability, c.joint_dropout.rate), (0.5, 0.5));
        assert_eq!((c.random_rotation.probability, c.random_rotation.max_angle), (0.6, PI));
        c.validate().unwrap();
    }

    #[test]
    fn baseline_excludes_rotation() {
        let b = AugmentationConfig::baseline();
        assert_eq!(b.effective_probability(RandomRotation), 0.0);
        for k in AugmentationKind::ORDER {
            assert_eq!(b.is_enabled(k), k != RandomRotation);
        }
        assert_eq!(AugmentationConfig::profile("baseline").unwrap(), b);
    }

    #[test]
    fn category_profiles_toggle_flags_only() {
        let s = AugmentationConfig::profile("spatial-only").unwrap();
        let t = AugmentationConfig::profile("temporal-only").unwrap();
        for k in AugmentationKind::ORDER {
            assert_eq!(s.is_enabled(k), k.is_spatial(), "{k}");
            assert_eq!(t.is_enabled(k), k.is_temporal(), "{k}");
        }
        let r = AugmentationConfig::profile("with-rotation").unwrap();
        assert!(r.is_enabled(RandomRotation));
        let n = AugmentationConfig::profile("none").unwrap();
        assert!(AugmentationKind::ORDER.iter().all(|&k| n.effective_probability(k) == 0.0));
        // strengths are untouched by profile toggles
        assert_eq!(s.random_scale, AugmentationConfig::full().random_scale.clone());
    }

    #[test]
    fn without_profiles() {
        for k in AugmentationKind::ORDER {
            let c = AugmentationConfig::profile(&format!("without-{k}")).unwrap();
            assert!(!c.is_enabled(k));
        }
        assert_eq!(AugmentationConfig::profile_names().len(), 13);
        assert!(AugmentationConfig::profile("without-teleport").is_err());
        assert!(AugmentationConfig::profile("bogus").is_err());
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let c = AugmentationConfig::profile("temporal-only").unwrap();
        assert_eq!(AugmentationConfig::from_toml(&c.to_toml()).unwrap(), c);
        let mut bad = c;
        bad.slow_down.max_factor = 1.5;
        assert!(AugmentationConfig::from_toml(&bad.to_toml()).is_err());
        let mut bad = c;
        bad.random_scale.probability = 1.5;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.random_rotation.max_angle = 4.0;
        assert!(bad.validate().is_err());
    }
}
