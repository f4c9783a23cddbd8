//! `zonal`: zone-restricted detection evaluation and label-assignment
//! simulation from the command line.

mod config;
mod run;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zonal::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "zonal", version, about = "Zone evaluation (ZP, SP, variance) and assignment simulation")]
struct Cli {
    /// eval, sweep, grid, corr or assign (may come from --config instead)
    mode: Option<String>,
    /// Flat key = value file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth annotations (COCO JSON)
    #[arg(long)]
    gt: Option<String>,
    /// Detections (COCO results JSON)
    #[arg(long)]
    det: Option<String>,
    /// Scene fixture for assign mode
    #[arg(long)]
    scene: Option<String>,
    /// Number of annular zones [default: 5]
    #[arg(long)]
    zones: Option<String>,
    /// Grid shape, ROWSxCOLS
    #[arg(long)]
    grid: Option<String>,
    /// Bands "ri:rj,ri:rj,..." or "hollow"
    #[arg(long)]
    sweep: Option<String>,
    /// IoU thresholds, "start:step:stop" or a list [default: 0.5:0.05:0.95]
    #[arg(long)]
    iou: Option<String>,
    /// Detections kept per image and category [default: 100]
    #[arg(long)]
    max_dets: Option<String>,
    /// max-iou, atss, sela or sela-cost [default: atss]
    #[arg(long)]
    assigner: Option<String>,
    /// Spatial relaxation strength [default: 0]
    #[arg(long)]
    gamma: Option<String>,
    /// Candidates per pyramid level [default: 9]
    #[arg(long)]
    top_k: Option<String>,
    /// Max-IoU positive threshold [default: 0.5]
    #[arg(long)]
    pos_thr: Option<String>,
    /// Max-IoU negative threshold [default: 0.4]
    #[arg(long)]
    neg_thr: Option<String>,
    /// none, left-discard, left-keep1, right-discard or right-keep1
    #[arg(long)]
    zone_filter: Option<String>,
    /// Output directory [default: zonal-report]
    #[arg(long)]
    out: Option<String>,
    /// json, csv or both; the JSON report is always written [default: json]
    #[arg(long)]
    format: Option<String>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long)]
    threads: Option<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("mode", &self.mode),
            ("gt", &self.gt),
            ("det", &self.det),
            ("scene", &self.scene),
            ("zones", &self.zones),
            ("grid", &self.grid),
            ("sweep", &self.sweep),
            ("iou", &self.iou),
            ("max-dets", &self.max_dets),
            ("assigner", &self.assigner),
            ("gamma", &self.gamma),
            ("top-k", &self.top_k),
            ("pos-thr", &self.pos_thr),
            ("neg-thr", &self.neg_thr),
            ("zone-filter", &self.zone_filter),
            ("out", &self.out),
            ("format", &self.format),
            ("threads", &self.threads),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => config::read_config_file(path)?,
        None => BTreeMap::new(),
    };
    settings.extend(cli.flags());
    let config = config::resolve(&settings)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let output = pool.install(|| run::execute(&config))?;
    let written = run::write(&config.out, &output)?;

    print!("{}", output.summary);
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io_or_parse() { 1 } else { 2 })
        }
    }
}
