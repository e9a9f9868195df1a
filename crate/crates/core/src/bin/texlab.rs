use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use texlab::channels::{audit_channel, free_channel_to, ChannelJson, KrausChannel};
use texlab::identify::{identify_layer, IdentifyConfig, ProtocolConfig, DEFAULT_TAU, DEFAULT_TRIALS};
use texlab::io;
use texlab::paramagnet::{rugosity_magnetization_report, DEFAULT_GRID};
use texlab::texture::TextureReading;
use texlab::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "texlab", version, about = "Quantum-state texture and hidden-basis gate identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grand sum, rugosity and f₁ probability of a state file.
    Texture {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Validate a Kraus channel and audit grand-sum monotonicity on random states.
    ///
    /// The input is either a channel `{dim, kraus}` or a target state
    /// `{dim, matrix}`, from which a free channel taking f₂ to it is built.
    ChannelAudit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Run the randomized protocol on a layer spec and reconstruct it.
    ///
    /// Exits 0 on full reconstruction, 2 when ambiguities remain, 1 on error.
    Identify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRIALS, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        shots: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_TAU, value_parser = positive)]
        tau: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Averaged rugosity of a coherent paramagnet against both closed forms.
    Paramagnet {
        /// `start:stop:step` or a comma-separated list of x = μ₀B/k_BT values.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
        quadrature_points: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Random layer spec with a Haar-random hidden basis.
    LayerGen {
        #[arg(long)]
        tracks: usize,
        #[arg(long, default_value_t = 1)]
        cnots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a positive number")),
    }
}

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    let points = if let [a, b, step] = s.split(':').collect::<Vec<_>>()[..] {
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step.is_nan() || step <= 0.0 || b < a {
            return Err("grid needs start <= stop and step > 0".into());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * step).collect()
    } else {
        s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
    };
    if points.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("grid values must be finite and non-negative".into());
    }
    Ok(Grid(points))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    report: &'a T,
    version: &'static str,
}

#[derive(Serialize)]
struct AuditReport<'a> {
    #[serde(flatten)]
    audit: &'a texlab::channels::ChannelAudit,
    source: &'static str,
    seed: u64,
    trials: u64,
}

#[derive(Serialize)]
struct ParamagnetReport<'a> {
    quadrature_points: u64,
    rows: &'a [texlab::paramagnet::RugosityRow],
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::field("--in", format!("{}: {e}", path.display())))
}

impl Output {
    fn validate(&self) -> Result<()> {
        if let Some(path) = &self.out {
            let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !parent.is_dir() {
                return Err(Error::field("--out", format!("directory {} does not exist", parent.display())));
            }
        }
        Ok(())
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn json_only(&self, what: &str) -> Result<()> {
        if self.format == Format::Csv {
            return Err(Error::field("--format", format!("{what} reports are JSON only")));
        }
        Ok(())
    }
}

fn load_channel(text: &str) -> Result<(KrausChannel, &'static str)> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::field("<document>", e.to_string()))?;
    if doc.get("kraus").is_some() {
        let json: ChannelJson = serde_json::from_value(doc).map_err(|e| Error::field("kraus", e.to_string()))?;
        return Ok((KrausChannel::from_json(&json)?, "channel"));
    }
    let target = io::parse_state(text)?;
    Ok((free_channel_to(&target)?, "target"))
}

/// `Ok(true)` when the run finished without ambiguity.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Texture { input, output } => {
            output.validate()?;
            output.json_only("texture")?;
            let rho = io::parse_state(&read_input(&input)?)?;
            let reading = TextureReading::of(&rho)?;
            output.emit(&io::to_json_string(&Envelope { report: &reading, version: VERSION })?)?;
        }
        Command::ChannelAudit { input, seed, trials, output } => {
            output.validate()?;
            output.json_only("channel-audit")?;
            let (channel, source) = load_channel(&read_input(&input)?)?;
            let audit = audit_channel(&channel, trials, seed)?;
            let report = AuditReport { audit: &audit, source, seed, trials };
            output.emit(&io::to_json_string(&Envelope { report: &report, version: VERSION })?)?;
        }
        Command::Identify { input, seed, trials, shots, tau, output } => {
            output.validate()?;
            let layer = io::parse_layer_spec(&read_input(&input)?)?;
            let cfg = IdentifyConfig {
                protocol: ProtocolConfig { shots, ..ProtocolConfig::new(trials, seed) },
                tau,
            };
            let report = identify_layer(&layer, &cfg)?;
            match output.format {
                Format::Json => output.emit(&io::to_json_string(&report)?)?,
                Format::Csv => output.emit(&io::track_stats_csv(&report.tracks))?,
            }
            return Ok(report.is_full());
        }
        Command::Paramagnet { grid, quadrature_points, output } => {
            output.validate()?;
            let grid = grid.map_or_else(|| DEFAULT_GRID.to_vec(), |g| g.0);
            let rows = rugosity_magnetization_report(&grid, quadrature_points as usize, None)?;
            match output.format {
                Format::Json => {
                    let report = ParamagnetReport { quadrature_points, rows: &rows };
                    output.emit(&io::to_json_string(&Envelope { report: &report, version: VERSION })?)?
                }
                Format::Csv => output.emit(&io::rugosity_csv(&rows))?,
            }
        }
        Command::LayerGen { tracks, cnots, seed, output } => {
            output.validate()?;
            output.json_only("layer-gen")?;
            let layer = io::random_layer(tracks, cnots, seed)?;
            output.emit(&io::to_json_string(&io::layer_to_value(&layer))?)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which here means "partial".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
