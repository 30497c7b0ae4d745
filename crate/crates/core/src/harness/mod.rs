//! Scenario runner, trace persistence, frequency-domain fidelity and the
//! real-time cue server.

pub mod freq;
pub mod protocol;
pub mod realtime;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use freq::{fidelity_cost, frequency_response, log_grid, FidelityConfig, FidelityReport, FrequencyResponse, Pair, PairResponse};
pub use realtime::{serve_realtime, RealtimeServer, ServeOptions, Session};
pub use scenario::{attitude_step, Mode, PilotConfig, PilotPolicy, Scenario, Segment, Shape, Source};
pub use sim::{replay, run_batch, run_inputs, run_with_setup, summarize, ClosedLoop, FrameInput, OneRevEstimator, Setup, TraceSummary};
pub use trace::{SimTrace, TraceRecord};
