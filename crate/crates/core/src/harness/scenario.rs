use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::FcsConfig;
use crate::llc::MpcConfig;
use crate::plant::{default_surrogate, SurrogateParams};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Pilot command goes straight to the plant; margins are still computed.
    #[default]
    LlcOff,
    /// Pilot command is clamped at the extremal control.
    AutoLimit,
    /// Margins are shown to the pilot, who may or may not follow them.
    Cue,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "llc_off" => Ok(Self::LlcOff),
            "auto_limit" => Ok(Self::AutoLimit),
            "cue" => Ok(Self::Cue),
            _ => Err(Error::InvalidParam(format!("unknown mode {s:?} (llc_off|auto_limit|cue)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Constant `magnitude` over `[t_start, t_end)`.
    Step,
    /// `+magnitude` over the first half, `−magnitude` over the second.
    Doublet,
    /// Same waveform as a step; kept separate to label finite-duration inputs.
    Pulse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub axis: String,
    pub shape: Shape,
    /// Stick deflection, %.
    pub magnitude: f64,
}

impl Segment {
    pub fn value(&self, t: f64) -> f64 {
        if t < self.t_start || t >= self.t_end {
            return 0.0;
        }
        match self.shape {
            Shape::Step | Shape::Pulse => self.magnitude,
            Shape::Doublet => {
                if t < 0.5 * (self.t_start + self.t_end) {
                    self.magnitude
                } else {
                    -self.magnitude
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPolicy {
    /// The pilot flies the script and ignores the cue.
    #[default]
    Script,
    /// The pilot never exceeds the extremal control shown on the cue:
    /// `u_pilot = min(script, u_ext)` in the load-increasing sense.
    PerfectTracking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotConfig {
    pub policy: PilotPolicy,
    /// Frames between a margin being computed and the pilot acting on it.
    pub delay_frames: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            policy: PilotPolicy::Script,
            delay_frames: 0,
        }
    }
}

/// Inline document or a path to one, resolved relative to the scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    fn resolve(&mut self, base: &Path) -> Result<()> {
        if let Source::Path(p) = self {
            let full = if p.is_absolute() { p.clone() } else { base.join(&*p) };
            let text = std::fs::read_to_string(&full)?;
            *self = Source::Inline(serde_json::from_str(&text)?);
        }
        Ok(())
    }

    pub fn get(&self) -> Result<&T> {
        match self {
            Source::Inline(v) => Ok(v),
            Source::Path(p) => Err(Error::InvalidParam(format!("unresolved reference {}", p.display()))),
        }
    }

    pub fn get_mut(&mut self) -> Result<&mut T> {
        match self {
            Source::Inline(v) => Ok(v),
            Source::Path(p) => Err(Error::InvalidParam(format!("unresolved reference {}", p.display()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub plant: Source<SurrogateParams>,
    pub fcs: Source<FcsConfig>,
    pub mpc: Source<MpcConfig>,
    pub mode: Mode,
    pub script: Vec<Segment>,
    /// s.
    pub duration: f64,
    pub seed: u64,
    /// State harmonics kept in the on-board model.
    pub harmonic_order: usize,
    /// Output harmonics kept in the on-board model.
    pub output_order: usize,
    /// Slow LTI states; default is the mean of every LTP state.
    pub slow_labels: Option<Vec<String>>,
    /// Plant steps per control frame.
    pub plant_substeps: usize,
    pub pilot: PilotConfig,
    pub cue_gain: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: "unnamed".into(),
            plant: Source::Inline(default_surrogate()),
            fcs: Source::Inline(FcsConfig::default()),
            mpc: Source::Inline(MpcConfig::default()),
            mode: Mode::LlcOff,
            script: Vec::new(),
            duration: 10.0,
            seed: 0,
            harmonic_order: 4,
            output_order: 2,
            slow_labels: None,
            plant_substeps: 4,
            pilot: PilotConfig::default(),
            cue_gain: 1.0,
        }
    }
}

impl Scenario {
    /// Parses a scenario; path references are resolved against `base`.
    pub fn from_json_str(s: &str, base: &Path) -> Result<Self> {
        let mut sc: Scenario = serde_json::from_str(s)?;
        if sc.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: sc.schema_version,
                expected: SCENARIO_SCHEMA_VERSION,
            });
        }
        sc.plant.resolve(base)?;
        sc.fcs.resolve(base)?;
        sc.mpc.resolve(base)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn plant(&self) -> Result<&SurrogateParams> {
        self.plant.get()
    }

    pub fn fcs(&self) -> Result<&FcsConfig> {
        self.fcs.get()
    }

    pub fn mpc(&self) -> Result<&MpcConfig> {
        self.mpc.get()
    }

    pub fn dt(&self) -> Result<f64> {
        Ok(self.fcs()?.dt_ctrl)
    }

    pub fn n_frames(&self) -> Result<usize> {
        Ok((self.duration / self.dt()? - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        plant.validate()?;
        self.fcs()?.validate()?;
        self.mpc()?.validate(&plant.input_labels)?;
        if !plant.input_labels.contains(&self.fcs()?.axis) {
            return Err(Error::MissingLabel(self.fcs()?.axis.clone()));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::InvalidParam(format!("duration must be >= 0, got {}", self.duration)));
        }
        if self.plant_substeps == 0 || self.output_order == 0 {
            return Err(Error::InvalidParam("plant_substeps and output_order must be >= 1".into()));
        }
        if !self.cue_gain.is_finite() {
            return Err(Error::InvalidParam("cue_gain must be finite".into()));
        }
        for s in &self.script {
            if !plant.input_labels.contains(&s.axis) {
                return Err(Error::MissingLabel(s.axis.clone()));
            }
            if !(s.t_start.is_finite() && s.t_end.is_finite() && s.magnitude.is_finite() && s.t_end > s.t_start) {
                return Err(Error::InvalidParam(format!("bad script segment {s:?}")));
            }
            if s.t_end > self.duration + 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "segment ending at {} exceeds the duration {}",
                    s.t_end, self.duration
                )));
            }
        }
        for (i, a) in self.script.iter().enumerate() {
            for b in &self.script[i + 1..] {
                if a.axis == b.axis && a.t_start < b.t_end && b.t_start < a.t_end {
                    return Err(Error::InvalidParam(format!(
                        "overlapping segments on {} at [{}, {}) and [{}, {})",
                        a.axis, a.t_start, a.t_end, b.t_start, b.t_end
                    )));
                }
            }
        }
        Ok(())
    }

    /// Scripted stick deflection per input axis at `t`.
    pub fn stick_at(&self, t: f64, input_labels: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; input_labels.len()];
        for s in &self.script {
            if let Some(i) = input_labels.iter().position(|l| *l == s.axis) {
                out[i] += s.value(t);
            }
        }
        out
    }

    /// Sets a named tuning parameter; used by parameter sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "Tp" => self.mpc.get_mut()?.tp = value,
            "dt_mpc" => self.mpc.get_mut()?.dt_mpc = Some(value),
            "y_max" => self.mpc.get_mut()?.y_max = value,
            "Q" => self.mpc.get_mut()?.q = value,
            "anti_windup_gain" => self.fcs.get_mut()?.anti_windup_gain = value,
            "kp" => self.fcs.get_mut()?.kp = value,
            "ki" => self.fcs.get_mut()?.ki = value,
            "kd" => self.fcs.get_mut()?.kd = value,
            "stick_gain" => self.fcs.get_mut()?.stick_gain = value,
            "cue_gain" => self.cue_gain = value,
            "harmonic_order" => self.harmonic_order = as_count(name, value)?,
            "delay_frames" => self.pilot.delay_frames = as_count(name, value)?,
            "nonlinearity_gain" => self.plant.get_mut()?.nonlinearity_gain = value,
            _ => return Err(Error::InvalidParam(format!("unknown sweep parameter {name:?}"))),
        }
        self.validate()
    }
}

/// Aggressive 20° attitude step on the default surrogate; the unlimited run
/// exceeds the 350 lbs limit.
pub fn attitude_step() -> Scenario {
    Scenario {
        name: "attitude_step".into(),
        mode: Mode::AutoLimit,
        script: vec![Segment {
            t_start: 1.0,
            t_end: 6.0,
            axis: "lon".into(),
            shape: Shape::Step,
            magnitude: 20.0,
        }],
        duration: 8.0,
        ..Default::default()
    }
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParam(format!("{name} must be a non-negative integer, got {v}")))
    }
}
