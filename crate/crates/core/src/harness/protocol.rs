//! JSON wire messages exchanged with the cockpit client, one per line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

/// Stick deflections beyond this magnitude are rejected.
pub const STICK_LIMIT: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    Telemetry(Telemetry),
    Event(Event),
    End { frames: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub schema_version: u32,
    pub scenario: String,
    pub dt_ctrl: f64,
    pub telemetry_period: f64,
    pub cue_gain: f64,
    pub axis: String,
    pub input_labels: Vec<String>,
    pub y_max: Option<f64>,
}

/// `None` fields were not available this frame (no margin computed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub schema_version: u32,
    pub frame: usize,
    pub t: f64,
    pub cm: Option<f64>,
    pub cue_height: Option<f64>,
    pub y_1rev_exact: Option<f64>,
    pub y_1rev_predicted: Option<f64>,
    pub y_max: Option<f64>,
    /// Stick deflection, %.
    pub stick: f64,
    pub u_pilot: f64,
    pub u_ext: Option<f64>,
    /// deg/s.
    pub pitch_rate: f64,
    /// deg.
    pub attitude: f64,
    /// ft/s.
    pub airspeed: f64,
    pub margin_valid: bool,
    pub stale: bool,
    pub cue_on: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ClientConnected,
    ClientDisconnected,
    NeutralStick,
    CueOn,
    CueOff,
    LimitChanged,
    DeadlineMiss,
    /// The LLC solve overran its budget and the previous margin was held.
    StaleMargin,
    ProtocolError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Stick { axis: String, value: f64 },
    CueToggle { on: bool },
    SetLimit { y_max: f64 },
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self> {
        let msg: ClientMessage = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(e.to_string()))?;
        msg.check()?;
        Ok(msg)
    }

    pub fn check(&self) -> Result<()> {
        match self {
            ClientMessage::Stick { value, .. } if !(value.is_finite() && value.abs() <= STICK_LIMIT) => {
                Err(Error::Protocol(format!("stick value {value} outside [-100, 100]")))
            }
            ClientMessage::SetLimit { y_max } if !(*y_max > 0.0) => {
                Err(Error::Protocol(format!("y_max must be > 0, got {y_max}")))
            }
            _ => Ok(()),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

impl ServerMessage {
    pub fn parse(line: &str) -> Result<Self> {
        let msg: ServerMessage = serde_json::from_str(line.trim()).map_err(|e| Error::Protocol(e.to_string()))?;
        let version = match &msg {
            ServerMessage::Hello(h) => Some(h.schema_version),
            ServerMessage::Telemetry(t) => Some(t.schema_version),
            _ => None,
        };
        if let Some(v) = version.filter(|v| *v != PROTOCOL_VERSION) {
            return Err(Error::Schema {
                found: v,
                expected: PROTOCOL_VERSION,
            });
        }
        Ok(msg)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// Splits a text frame into messages; blank lines are skipped.
pub fn parse_client_frame(text: &str) -> Vec<Result<ClientMessage>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(ClientMessage::parse).collect()
}

pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
