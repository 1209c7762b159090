use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cqed_bayes::bayes::{update_full, BayesInput, RecordData, ScaleMode, Variant};
use cqed_bayes::field::{Branch, FieldModel};
use cqed_bayes::harness::{run_experiment, ExperimentConfig, UNITS};
use cqed_bayes::qfunc::{coherent_fidelity, qfunction, PhaseGrid};
use cqed_bayes::trajectory::{conditional_cavity, conventions, drive, git_blob_sha1, run_trajectory, Increments, SimConfig, TrajectoryRecord};
use cqed_bayes::ComplexAmp;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "cqed", version, about = "Dispersive qubit readout: trajectories, field rates and Bayesian state estimates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Unit,
    Tm,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one trajectory and write record.csv plus metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the cavity fields and derived rates on a uniform grid.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Defaults to the config's t_end.
        #[arg(long)]
        t_end: Option<f64>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply one Bayesian rule to a recorded output at time t_m.
    Bayes {
        #[arg(long)]
        record: PathBuf,
        #[arg(long, default_value = "br2")]
        variant: String,
        #[arg(long)]
        tm: f64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        scale: Option<Scale>,
    },
    /// Q-function difference of the conditional cavity states at time t.
    Qfunc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the config's t_end.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired truth/estimator ensemble comparison.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Accepts a bare simulation config or an experiment config with a `sim` block.
fn load_sim(path: &Path) -> Result<(SimConfig, Value)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(u) = v.get("units") {
        if u != UNITS {
            bail!("{}: units must be {UNITS:?}, got {u}", path.display());
        }
    }
    let root = v.clone();
    let sim_v = match v.get_mut("sim") {
        Some(s) => s.take(),
        None => {
            if let Some(o) = v.as_object_mut() {
                o.remove("units");
            }
            v
        }
    };
    let sim: SimConfig = serde_json::from_value(sim_v).with_context(|| format!("invalid simulation config in {}", path.display()))?;
    sim.validate()?;
    Ok((sim, root))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let (mut cfg, _) = load_sim(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rec = run_trajectory(&cfg)?;
    let hash = rec.write_dir(out, &cfg)?;
    log::info!("{} samples written to {}", rec.len(), out.display());
    println!("{hash}");
    Ok(())
}

fn rates(config: &Path, dt: f64, t_end: Option<f64>, out: Option<&Path>) -> Result<()> {
    let (cfg, _) = load_sim(config)?;
    let t_end = t_end.unwrap_or(cfg.t_end);
    if !(dt > 0.0) || !(t_end >= 0.0) {
        bail!("need dt > 0 and t_end >= 0");
    }
    let m = FieldModel::new(cfg.params, cfg.initial_cavity);
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["t", "re_alpha_g", "im_alpha_g", "re_alpha_e", "im_alpha_e", "B", "gamma_d", "gamma_ci", "gamma_ba", "gamma_m", "D_overlap", "D_integral"])?;
    let n = (t_end / dt).round() as usize;
    let ch = cfg.channels();
    for k in 0..=n {
        let t = (k as f64 * dt).min(t_end);
        let r = m.rates(t);
        // per-channel ci/ba rates summed over the active readout channels
        let (gci, gba) = ch.iter().fold((0.0, 0.0), |(a, b), c| {
            let cr = r.channel(&cfg.params, c);
            (a + cr.gamma_ci(), b + cr.gamma_ba())
        });
        let d_int = m.purity_integral(t)?;
        let row = [t, r.alpha_g.re, r.alpha_g.im, r.alpha_e.re, r.alpha_e.im, r.b, r.gamma_d, gci, gba, r.gamma_m, r.purity_d, d_int];
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    match out {
        Some(p) => {
            let side = p.with_extension("json");
            fs::write(&side, serde_json::to_vec_pretty(&json!({ "params": cfg.params, "alpha0": cfg.initial_cavity, "conventions": conventions() }))?)?;
        }
        None => eprintln!("conventions: {}", conventions()),
    }
    Ok(())
}

fn bayes(record: &Path, variant: &str, tm: f64, config: &Path, scale: Option<Scale>) -> Result<()> {
    let (cfg, root) = load_sim(config)?;
    let variant: Variant = variant.parse()?;
    let bytes = fs::read(record).with_context(|| format!("reading {}", record.display()))?;
    let side = record.with_file_name("record.json");
    if side.exists() && record.file_name().is_some_and(|n| n == "record.csv") {
        let meta: Value = serde_json::from_slice(&fs::read(&side)?)?;
        let want = meta.get("record_sha1").and_then(Value::as_str).unwrap_or_default();
        let got = git_blob_sha1(&bytes);
        if want != got {
            bail!("record hash {got} does not match {} in {}", want, side.display());
        }
    }
    let rec = TrajectoryRecord::from_csv_bytes(&bytes, cfg.params.phi_lo)?;
    if (rec.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        log::warn!("record dt {} differs from config dt {}; using the record's", rec.dt, cfg.dt);
    }
    let mut input = BayesInput::new(cfg.initial_qubit_dm()?, tm, RecordData::Sampled(&rec), cfg.params, variant);
    input.alpha0 = cfg.initial_cavity;
    input.scale = match scale {
        Some(Scale::Unit) => ScaleMode::Unit,
        Some(Scale::Tm) => ScaleMode::Tm,
        None => match root.get("scale") {
            Some(s) => serde_json::from_value(s.clone())?,
            None => ScaleMode::default(),
        },
    };
    let o = update_full(&input)?;
    let out = json!({
        "rho_gg": o.rho.rho_gg,
        "rho_ee": o.rho.rho_ee,
        "re_ge": o.rho.rho_ge.re,
        "im_ge": o.rho.rho_ge.im,
        "phi1": o.phi1,
        "phi2": o.phi2,
        "purity_factor": o.purity_factor,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn qfunc(config: &Path, seed: Option<u64>, t: Option<f64>, out: &Path) -> Result<()> {
    let (mut cfg, _) = load_sim(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = t {
        cfg.t_end = t;
    }
    cfg.validate()?;
    cfg.snapshot_every = None;
    let t = cfg.n_steps() as f64 * cfg.dt;
    let state = drive(&cfg, Increments::Seeded(cfg.seed), |_, _, _, _, _| {})?;
    let dm_g = conditional_cavity(&state, Branch::G)?;
    let dm_e = conditional_cavity(&state, Branch::E)?;
    let grid = PhaseGrid::default_for(cfg.params.steady_field_scale().max(cfg.initial_cavity.abs()));
    let qg = qfunction(&dm_g, &grid)?;
    let qe = qfunction(&dm_e, &grid)?;
    let diff = qe.sub(&qg)?;
    fs::create_dir_all(out)?;
    diff.write_csv(&out.join("qfunc_diff.csv"))?;
    diff.write_axes(&out.join("qfunc_axes.json"))?;
    let m = FieldModel::new(cfg.params, cfg.initial_cavity);
    let (ag, ae) = (ComplexAmp::from(m.alpha(t, Branch::G)), ComplexAmp::from(m.alpha(t, Branch::E)));
    let summary = json!({
        "t": t,
        "fidelity_g": coherent_fidelity(&dm_g, ag)?,
        "fidelity_e": coherent_fidelity(&dm_e, ae)?,
        "centroid_g": qg.centroid(),
        "centroid_e": qe.centroid(),
        "beta_abs": (m.alpha(t, Branch::E) - m.alpha(t, Branch::G)).norm(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn compare(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    cfg.output_dir = Some(out.to_path_buf());
    let report = run_experiment(&cfg)?;
    for e in &report.estimators {
        println!("{:<20} mean|d rho_ge| {:.5}  mean|d rho_gg| {:.5}", e.name, e.summary.mean_abs_ge, e.summary.mean_gg);
    }
    if !report.failures.is_empty() {
        bail!("{} of {} trajectories failed; see report.json", report.failures.len(), cfg.ensemble_size);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Cmd::Rates { config, dt, t_end, out } => rates(&config, dt, t_end, out.as_deref()),
        Cmd::Bayes { record, variant, tm, config, scale } => bayes(&record, &variant, tm, &config, scale),
        Cmd::Qfunc { config, seed, t, out } => qfunc(&config, seed, t, &out),
        Cmd::Compare { config, out } => compare(&config, &out),
    }
}
