use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use llc_core::harmonic::LtiModel;
use llc_core::harness::{
    fidelity_cost, frequency_response, log_grid, replay, run_with_setup, summarize, FidelityConfig, FrequencyResponse, Mode, Pair,
    Scenario, ServeOptions, Setup, SimTrace,
};
use llc_core::reduction::ReducedLti;
use llc_core::StateSpace;

#[derive(Parser)]
#[command(name = "sim", version, about = "Harmonic load limiting simulation workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Batch closed-loop run.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Attitude step used to report the time to reach it, deg.
        #[arg(long, default_value_t = 20.0)]
        target: f64,
    },
    /// Frequency responses of an LTI or reduced model.
    Freq {
        model: PathBuf,
        /// Comma-separated input:output pairs, e.g. `lon:q,lon:pitch_link_load[1c]`.
        #[arg(long, value_delimiter = ',', required = true)]
        pairs: Vec<Pair>,
        #[arg(long, default_value_t = 0.1)]
        omega_min: f64,
        #[arg(long, default_value_t = 100.0)]
        omega_max: f64,
        #[arg(long, default_value_t = 60)]
        points: usize,
        /// Explicit grid, rad/s; overrides the log grid.
        #[arg(long, value_delimiter = ',')]
        omega: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted magnitude/phase mismatch between two frequency responses.
    Fidelity {
        model_fr: PathBuf,
        ref_fr: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        wg: f64,
        #[arg(long, default_value_t = 0.01745)]
        wp: f64,
    },
    /// Real-time cue session over a websocket.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value_t = 1.0)]
        cue_gain: f64,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Session length, s; the scenario duration when absent.
        #[arg(long)]
        duration: Option<f64>,
        /// Seconds to wait for a client before the clock starts.
        #[arg(long, default_value_t = 0.0)]
        wait: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Runs a scenario once per parameter value.
    Sweep {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 20.0)]
        target: f64,
    },
    /// Re-runs the inputs recorded in a trace.
    Replay {
        scenario: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the plant and the on-board models derived from a scenario.
    Model {
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, mode, out, target } => {
            let mut sc = load(&scenario)?;
            if let Some(m) = mode {
                sc.mode = m;
            }
            let setup = Setup::build(&sc)?;
            let t0 = Instant::now();
            let trace = run_with_setup(&setup, &sc)?;
            let elapsed = t0.elapsed();
            if let Some(out) = out {
                trace.export(&out).with_context(|| format!("writing {}", out.display()))?;
            }
            let s = summarize(&trace, &setup, target)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            eprintln!("{} frames in {:.2} s", trace.len(), elapsed.as_secs_f64());
        }
        Cmd::Freq {
            model,
            pairs,
            omega_min,
            omega_max,
            points,
            omega,
            out,
        } => {
            let grid = if omega.is_empty() {
                log_grid(omega_min, omega_max, points)
            } else {
                omega
            };
            let sys = load_model(&model)?;
            let fr = frequency_response(sys.as_ref(), &pairs, &grid)?;
            for p in &fr.pairs {
                if !p.flagged.is_empty() {
                    eprintln!("{}: {} singular points flagged", p.pair, p.flagged.len());
                }
            }
            fr.write_csv(std::fs::File::create(&out)?)?;
        }
        Cmd::Fidelity { model_fr, ref_fr, wg, wp } => {
            let m = read_fr(&model_fr)?;
            let r = read_fr(&ref_fr)?;
            let rep = fidelity_cost(&m, &r, &FidelityConfig { w_g: wg, w_p: wp })?;
            for p in &rep.pairs {
                println!("{:<32} J = {:.4}", p.pair.to_string(), p.j);
            }
            println!("{:<32} J = {:.4}", "average", rep.average);
        }
        Cmd::Serve {
            scenario,
            port,
            cue_gain,
            bind,
            duration,
            wait,
            out,
            events,
        } => {
            let mut sc = load(&scenario)?;
            sc.mode = Mode::Cue;
            let opts = ServeOptions {
                bind,
                port,
                cue_gain,
                duration,
                wait_for_client: Duration::from_secs_f64(wait.max(0.0)),
                ..Default::default()
            };
            let server = llc_core::harness::RealtimeServer::bind(opts)?;
            eprintln!("listening on ws://{}", server.local_addr()?);
            let session = server.run(&sc)?;
            eprintln!(
                "{} frames, {} deadline misses, {} telemetry frames dropped",
                session.trace.len(),
                session.deadline_misses,
                session.telemetry_dropped
            );
            if let Some(out) = out {
                session.trace.export(&out)?;
            }
            if let Some(ev) = events {
                std::fs::write(ev, session.events_jsonl())?;
            }
        }
        Cmd::Sweep {
            scenario,
            param,
            values,
            mode,
            target,
        } => {
            let base = match scenario {
                Some(p) => load(&p)?,
                None => llc_core::harness::scenario::attitude_step(),
            };
            println!("{param},peak_load,within_105,peak_attitude,t_reach,min_cm,mean_qp_iterations,wall_s");
            for v in values {
                let mut sc = base.clone();
                if let Some(m) = mode {
                    sc.mode = m;
                }
                sc.set_param(&param, v)?;
                let setup = Setup::build(&sc)?;
                let t0 = Instant::now();
                let trace = run_with_setup(&setup, &sc)?;
                let wall = t0.elapsed().as_secs_f64();
                let s = summarize(&trace, &setup, target)?;
                println!(
                    "{v},{},{},{},{},{},{},{wall:.3}",
                    s.peak_load, s.within_105, s.peak_attitude, s.t_reach, s.min_cm, s.mean_qp_iterations
                );
            }
        }
        Cmd::Replay { scenario, trace, out } => {
            let sc = load(&scenario)?;
            let setup = Setup::build(&sc)?;
            let logged = SimTrace::import(&trace)?;
            let again = replay(&setup, &sc, &logged)?;
            let same = again.records.len() == logged.records.len() && csv_bytes(&again)? == csv_bytes(&logged)?;
            if let Some(out) = out {
                again.export(&out)?;
            }
            println!("{} frames, identical: {same}", again.len());
            if !same {
                bail!("replayed trace differs from the log");
            }
        }
        Cmd::Model { scenario, out_dir } => {
            let sc = load(&scenario)?;
            let setup = Setup::build(&sc)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("plant.json"), setup.params.to_json_string()?)?;
            std::fs::write(out_dir.join("ltp.json"), setup.ltp.to_json_string()?)?;
            std::fs::write(out_dir.join("lti.json"), setup.lti.to_json_string()?)?;
            std::fs::write(out_dir.join("reduced.json"), setup.reduced.to_json_string()?)?;
            println!(
                "LTI {} states, reduced {} states, trim 1/rev load {:.3}",
                setup.lti.a.nrows(),
                setup.reduced.n_slow(),
                setup.trim.load_1rev()
            );
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_path(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn read_fr(path: &Path) -> Result<FrequencyResponse> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(FrequencyResponse::read_csv(f)?)
}

/// Accepts full LTI or reduced model documents.
fn load_model(path: &Path) -> Result<Box<dyn StateSpace>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(r) = ReducedLti::from_json_str(&text) {
        return Ok(Box::new(r));
    }
    match LtiModel::from_json_str(&text) {
        Ok(m) => Ok(Box::new(m)),
        Err(e) => bail!("{} is neither a reduced nor a full LTI model: {e}", path.display()),
    }
}

fn csv_bytes(t: &SimTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}
