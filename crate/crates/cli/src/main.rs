use clap::{Args, Parser, Subcommand, ValueEnum};
use planloc_cli::config::{ExperimentConfig, FusionParams, Overrides};
use planloc_cli::{
    build_scene, exit, localize_once, parse_pose, run_matrix, write_scene, CliError, OnceRequest,
};
use planloc_core::model::DEFAULT_MAP_DENSITY;
use planloc_core::registration::{IcpMethod, Method, ScanMode, SelectiveConfig};
use planloc_core::sensor_sim::default_camera_rig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "planloc",
    version,
    about = "Selective ICP localization in deviating building models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extrude the floorplan, apply deviations and write the mesh files.
    BuildScene(Common),
    /// Run the 2x3 method matrix and write report.csv and trials.jsonl.
    RunMatrix(Common),
    /// Localize a single scan file against a model.
    LocalizeOnce(Once),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args, Default)]
struct Tuning {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Binary density threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Linear weight offset.
    #[arg(long)]
    delta_prime: Option<f64>,
    /// Consistency threshold on translation, meters.
    #[arg(long)]
    tau_trans: Option<f64>,
    /// Consistency threshold on rotation, radians.
    #[arg(long)]
    tau_rot: Option<f64>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            delta: self.delta,
            delta_prime: self.delta_prime,
            tau_translation: self.tau_trans,
            tau_rotation: self.tau_rot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IcpArg {
    Full,
    Selective,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanArg {
    Full,
    Filtered,
    Weighted,
}

#[derive(Args)]
struct Once {
    /// Model mesh (OBJ with named groups).
    #[arg(long)]
    model: PathBuf,
    /// Reference surface ids, JSON list.
    #[arg(long)]
    refs: Option<PathBuf>,
    /// Scan CSV in the sensor frame.
    #[arg(long)]
    scan: PathBuf,
    /// Density image (PGM), once per camera in rig order.
    #[arg(long = "image")]
    images: Vec<PathBuf>,
    /// Initial pose as inline JSON `{"t":[..],"q":[w,x,y,z]}` or a file.
    #[arg(long)]
    init: String,
    #[arg(long, value_enum, default_value = "selective")]
    icp: IcpArg,
    #[arg(long, value_enum, default_value = "full")]
    scan_mode: ScanArg,
    /// Experiment config supplying cameras, fusion and ICP settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn load_config(path: &Path, tuning: &Tuning) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&tuning.overrides());
    Ok(cfg)
}

fn cmd_build_scene(args: &Common) -> Result<i32, CliError> {
    let cfg = load_config(&args.config, &args.tuning)?;
    let built = build_scene(&cfg)?;
    let files = write_scene(&built, &cfg.output_dir)?;
    println!(
        "{:<16} {:>10} {:>24}  deviated  reference",
        "surface", "area_m2", "normal"
    );
    for s in built.as_planned.surfaces() {
        let n = s.dominant_normal();
        let moved = built.as_built.surface(s.id()) != Some(s);
        let is_ref = built.references.surface_ids().iter().any(|r| r == s.id());
        println!(
            "{:<16} {:>10.3} {:>24}  {:<8}  {}",
            s.id(),
            s.area(),
            format!("({:.2}, {:.2}, {:.2})", n.x, n.y, n.z),
            if moved { "yes" } else { "no" },
            if is_ref { "yes" } else { "no" },
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(exit::OK)
}

fn cmd_run_matrix(args: &Common) -> Result<i32, CliError> {
    let cfg = load_config(&args.config, &args.tuning)?;
    let run = run_matrix(&cfg, Some(&cfg.output_dir))?;
    print!("{}", run.csv);
    Ok(exit::OK)
}

fn cmd_localize_once(args: &Once) -> Result<i32, CliError> {
    let (cameras, mut fusion, mut localization, map_density, mut seed) = match &args.config {
        Some(path) => {
            let cfg = load_config(path, &args.tuning)?;
            (
                cfg.camera_specs(),
                cfg.fusion,
                cfg.localization,
                cfg.map_density,
                cfg.seed,
            )
        }
        None => (
            default_camera_rig(),
            FusionParams::default(),
            SelectiveConfig::default(),
            DEFAULT_MAP_DENSITY,
            0,
        ),
    };
    let t = &args.tuning;
    fusion.delta = t.delta.unwrap_or(fusion.delta);
    fusion.delta_prime = t.delta_prime.unwrap_or(fusion.delta_prime);
    localization.tau_translation = t.tau_trans.unwrap_or(localization.tau_translation);
    localization.tau_rotation = t.tau_rot.unwrap_or(localization.tau_rotation);
    seed = t.seed.unwrap_or(seed);
    let req = OnceRequest {
        model: args.model.clone(),
        refs: args.refs.clone(),
        scan: args.scan.clone(),
        images: args.images.clone(),
        cameras,
        init: parse_pose(&args.init)?,
        method: Method {
            icp: match args.icp {
                IcpArg::Full => IcpMethod::Full,
                IcpArg::Selective => IcpMethod::Selective,
            },
            scan: match args.scan_mode {
                ScanArg::Full => ScanMode::Full,
                ScanArg::Filtered => ScanMode::Filtered,
                ScanArg::Weighted => ScanMode::Weighted,
            },
        },
        fusion,
        localization,
        map_density,
        seed,
    };
    let record = localize_once(&req)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&record).expect("record serializes")
    );
    Ok(if record.outcome == "localized" {
        exit::OK
    } else {
        exit::FAILED
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INPUT as u8 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::BuildScene(a) => cmd_build_scene(a),
        Command::RunMatrix(a) => cmd_run_matrix(a),
        Command::LocalizeOnce(a) => cmd_localize_once(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::INPUT as u8)
        }
    }
}
