use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use lte_mapper_core::analysis::{analysis_report, scatter3d_export, ColorScale};
use lte_mapper_core::campaign::Campaign;
use lte_mapper_core::clock::SystemClock;
use lte_mapper_core::persistence::{load_dir, save_dir, MANIFEST_FILE};
use lte_mapper_core::protocol::serial::{AtPort, SerialModem};
use lte_mapper_core::sim::survey::{run_survey, SurveyPlan};
use lte_mapper_core::sim::{Scenario, SimModem};
use lte_mapper_service::{router, svg, AppState, Backend, Config};

#[derive(Parser)]
#[command(version, about = "LTE 450 MHz signal mapping station")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// `sim:<scenario.toml>` or `serial:<device>`. Omit to run read-only.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long, default_value_t = 8450)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Campaign directory; loaded if present, saved after every commit.
        #[arg(long)]
        campaign_dir: Option<PathBuf>,
        /// Label for a new campaign.
        #[arg(long, default_value = "building")]
        building: String,
        /// Modem DRX cycle in seconds; the sample interval may not be shorter.
        #[arg(long, default_value_t = 2.56)]
        drx_cycle: f64,
        #[arg(long, default_value_t = 115_200)]
        baud: u32,
        /// Lower edges of the good, fair and poor bins in dBm.
        #[arg(long, value_parser = parse_scale, default_value = "-95,-105,-120")]
        color_scale: ColorScale,
    },
    /// Print the analysis of a stored campaign.
    Report {
        #[arg(long)]
        campaign_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the indoor scatter as `.svg` or `.json`.
    Scatter {
        #[arg(long)]
        campaign_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Survey a simulated building and store the campaign.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        building: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scale(s: &str) -> Result<ColorScale, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [good, fair, poor] if good > fair && fair > poor => Ok(ColorScale { good, fair, poor }),
        _ => Err("expected three strictly decreasing thresholds, e.g. -95,-105,-120".into()),
    }
}

fn open_backend(spec: &str, baud: u32) -> anyhow::Result<Backend> {
    if let Some(path) = spec.strip_prefix("sim:") {
        let scenario = Scenario::load(path).with_context(|| format!("loading {path}"))?;
        return Ok(Box::new(SimModem::new(scenario)?));
    }
    if let Some(dev) = spec.strip_prefix("serial:") {
        let port = serialport::new(dev, baud)
            .timeout(Duration::from_millis(100))
            .open()
            .with_context(|| format!("opening {dev}"))?;
        return Ok(Box::new(SerialModem::open(AtPort::new(port))?));
    }
    bail!("backend must be sim:<file> or serial:<device>, got {spec:?}")
}

fn load(dir: &Path) -> anyhow::Result<Campaign> {
    load_dir(dir).with_context(|| format!("loading campaign from {}", dir.display()))
}

async fn serve(
    backend: Option<String>,
    addr: SocketAddr,
    campaign_dir: Option<PathBuf>,
    building: String,
    drx_cycle: f64,
    baud: u32,
    color_scale: ColorScale,
) -> anyhow::Result<()> {
    let modem = backend.as_deref().map(|b| open_backend(b, baud)).transpose()?;
    let campaign = match &campaign_dir {
        Some(dir) if dir.join(MANIFEST_FILE).exists() => load(dir)?,
        Some(dir) => {
            let id = dir.file_name().map_or("campaign".into(), |n| n.to_string_lossy().into_owned());
            let c = Campaign::new(id, building);
            save_dir(&c, dir)?;
            c
        }
        None => Campaign::new("campaign", building),
    };
    tracing::info!(
        records = campaign.records().len(),
        next = campaign.next_position_id(),
        "campaign {}",
        campaign.campaign_id
    );
    if modem.is_none() {
        tracing::warn!("no backend configured; measurement endpoints answer 503");
    }
    let config = Config {
        backend_label: backend,
        drx_cycle: Duration::try_from_secs_f64(drx_cycle).context("--drx-cycle")?,
        campaign_dir,
        color_scale,
        clock: Arc::new(SystemClock),
    };
    let app = router(AppState::new(campaign, modem, config));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    match Cli::parse().command {
        Command::Serve {
            backend,
            port,
            bind,
            campaign_dir,
            building,
            drx_cycle,
            baud,
            color_scale,
        } => {
            let addr: SocketAddr = format!("{bind}:{port}").parse().context("--bind")?;
            tokio::runtime::Runtime::new()?.block_on(serve(
                backend,
                addr,
                campaign_dir,
                building,
                drx_cycle,
                baud,
                color_scale,
            ))
        }
        Command::Report { campaign_dir, json } => {
            let c = load(&campaign_dir)?;
            let report = analysis_report(&[(c.building_label.as_str(), c.records())]);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            Ok(())
        }
        Command::Scatter { campaign_dir, out } => {
            let c = load(&campaign_dir)?;
            let points = scatter3d_export(c.records(), &ColorScale::default());
            let body = match out.extension().and_then(|e| e.to_str()) {
                Some("svg") => svg::render(&points),
                Some("json") => serde_json::to_string_pretty(&points)?,
                _ => bail!("--out must end in .svg or .json"),
            };
            std::fs::write(&out, body)?;
            eprintln!("{} points written to {}", points.len(), out.display());
            Ok(())
        }
        Command::Simulate {
            scenario,
            building,
            seed,
            out,
        } => {
            let mut s = Scenario::load(&scenario)
                .with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let c = run_survey(&s, &SurveyPlan::new(building))?;
            save_dir(&c, &out)?;
            eprintln!("{} records written to {}", c.records().len(), out.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_scale_flag() {
        assert_eq!(parse_scale("-95,-105,-120").unwrap(), ColorScale::default());
        assert!(parse_scale("-95,-95,-120").is_err());
        assert!(parse_scale("-95,-105").is_err());
        assert!(parse_scale("a,b,c").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["lte-mapper", "serve", "--backend", "sim:x.toml", "--drx-cycle", "5.12"]).unwrap();
        assert!(matches!(cli.command, Command::Serve { drx_cycle, .. } if drx_cycle == 5.12));
    }
}
