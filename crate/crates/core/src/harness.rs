//! Paired truth/estimator experiments, the phase-scaling audit and parameter calibration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bayes::{phi2_approx_multi, phi2_exact_path, Estimator, Lambdas, Measured, ScaleMode, Variant};
use crate::error::{Error, Result};
use crate::field::{alpha_steady, Branch, Channel, ModelParams};
use crate::qubit::QubitDM;
use crate::trajectory::{git_blob_sha1, run_ensemble, run_trajectory, SimConfig, TrajectoryRecord};

pub const UNITS: &str = "kappa";
pub const DEFAULT_CHECKPOINTS: usize = 100;

fn kappa_units() -> String {
    UNITS.to_string()
}

fn all_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn one() -> usize {
    1
}

fn default_ablation() -> Option<Variant> {
    Some(Variant::Br2Prime)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "kappa_units")]
    pub units: String,
    pub sim: SimConfig,
    #[serde(default = "all_variants")]
    pub estimators: Vec<Variant>,
    /// Evaluation times; 100 uniform points over `(0, t_end]` when absent.
    #[serde(default)]
    pub t_checkpoints: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub scale: ScaleMode,
    /// Rule that also gets the eight-way on/off grid of its correction factors.
    #[serde(default = "default_ablation")]
    pub ablation: Option<Variant>,
}

impl ExperimentConfig {
    pub fn new(sim: SimConfig, ensemble_size: usize) -> Self {
        Self {
            units: kappa_units(),
            sim,
            estimators: all_variants(),
            t_checkpoints: None,
            ensemble_size,
            output_dir: None,
            scale: ScaleMode::default(),
            ablation: default_ablation(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        match &self.t_checkpoints {
            Some(ts) => ts.clone(),
            None => {
                let steps = self.sim.n_steps();
                let n = DEFAULT_CHECKPOINTS.min(steps);
                (1..=n).map(|k| ((k * steps) / n) as f64 * self.sim.dt).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.units != UNITS {
            return Err(Error::InvalidConfig(format!("units must be {UNITS:?}, got {:?}", self.units)));
        }
        self.sim.validate()?;
        if self.ensemble_size < 1 {
            return Err(Error::InvalidConfig("ensemble_size must be >= 1".into()));
        }
        if self.estimators.is_empty() && self.ablation.is_none() {
            return Err(Error::InvalidConfig("no estimators requested".into()));
        }
        let t_end = self.sim.n_steps() as f64 * self.sim.dt;
        let ts = self.checkpoints();
        if ts.is_empty() {
            return Err(Error::InvalidConfig("no checkpoints".into()));
        }
        for (i, &t) in ts.iter().enumerate() {
            if !(t > 0.0) || t > t_end * (1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!("checkpoint {t} outside (0, {t_end}]")));
            }
            if i > 0 && t <= ts[i - 1] {
                return Err(Error::InvalidConfig("checkpoints must be strictly ascending".into()));
            }
            let k = (t / self.sim.dt).round();
            if (k * self.sim.dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::CadenceMismatch(format!("checkpoint {t} is not on the dt = {} grid", self.sim.dt)));
            }
        }
        Ok(())
    }
}

/// One estimator as run by the harness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub variant: Variant,
    pub lambdas: Lambdas,
    pub scale: ScaleMode,
}

impl EstimatorSpec {
    pub fn name(&self, default_scale: ScaleMode) -> String {
        let mut s = self.variant.name().to_string();
        if self.variant == Variant::Br2Prime && self.scale != default_scale {
            s.push_str(match self.scale {
                ScaleMode::Unit => "_unit",
                ScaleMode::Tm => "_tm",
            });
        }
        if self.lambdas != Lambdas::ALL {
            s.push('_');
            s.push_str(&self.lambdas.label());
        }
        s
    }
}

fn estimator_specs(cfg: &ExperimentConfig) -> Vec<(String, EstimatorSpec)> {
    let mut out: Vec<(String, EstimatorSpec)> = Vec::new();
    let mut push = |spec: EstimatorSpec| {
        let name = spec.name(cfg.scale);
        if !out.iter().any(|(n, _)| *n == name) {
            out.push((name, spec));
        }
    };
    for &v in &cfg.estimators {
        push(EstimatorSpec { variant: v, lambdas: Lambdas::ALL, scale: cfg.scale });
        if v == Variant::Br2Prime {
            let other = match cfg.scale {
                ScaleMode::Unit => ScaleMode::Tm,
                ScaleMode::Tm => ScaleMode::Unit,
            };
            push(EstimatorSpec { variant: v, lambdas: Lambdas::ALL, scale: other });
        }
    }
    if let Some(v) = cfg.ablation {
        for l in Lambdas::grid() {
            push(EstimatorSpec { variant: v, lambdas: l, scale: cfg.scale });
        }
    }
    out
}

/// Absolute errors against the trajectory truth, pooled over trajectories.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_gg: f64,
    pub max_gg: f64,
    pub mean_re_ge: f64,
    pub max_re_ge: f64,
    pub mean_im_ge: f64,
    pub max_im_ge: f64,
    /// `|rho_ge - rho_ge^true|`, complex modulus.
    pub mean_abs_ge: f64,
    pub max_abs_ge: f64,
    /// Standard error of `mean_abs_ge` across trajectories.
    pub se_abs_ge: f64,
}

#[derive(Default)]
struct ErrorAcc {
    n: usize,
    sum: [f64; 4],
    max: [f64; 4],
    sq_abs: f64,
}

impl ErrorAcc {
    fn push(&mut self, est: &QubitDM, truth: &QubitDM) {
        let d = est.rho_ge - truth.rho_ge;
        let e = [(est.rho_gg - truth.rho_gg).abs(), d.re.abs(), d.im.abs(), d.norm()];
        self.n += 1;
        for i in 0..4 {
            self.sum[i] += e[i];
            self.max[i] = self.max[i].max(e[i]);
        }
        self.sq_abs += e[3] * e[3];
    }

    fn stats(&self) -> ErrorStats {
        let n = self.n.max(1) as f64;
        let m = self.sum.map(|s| s / n);
        let var = if self.n > 1 { ((self.sq_abs - n * m[3] * m[3]) / (n - 1.0)).max(0.0) } else { 0.0 };
        ErrorStats {
            mean_gg: m[0],
            max_gg: self.max[0],
            mean_re_ge: m[1],
            max_re_ge: self.max[1],
            mean_im_ge: m[2],
            max_im_ge: self.max[2],
            mean_abs_ge: m[3],
            max_abs_ge: self.max[3],
            se_abs_ge: (var / n).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub name: String,
    pub spec: EstimatorSpec,
    /// One entry per checkpoint.
    pub per_checkpoint: Vec<ErrorStats>,
    /// Means averaged over checkpoints, maxima over everything.
    pub summary: ErrorStats,
}

/// Mean `|Phi2_approx - Phi2_exact|` per checkpoint for both scalings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Phi2Audit {
    pub unit: Vec<f64>,
    pub tm: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<f64>,
    pub estimators: Vec<EstimatorReport>,
    /// Ensemble-mean truth at each checkpoint.
    pub truth_mean: Vec<QubitDM>,
    /// Ensemble-mean `Tr rho^2` of the truth.
    pub truth_purity: Vec<f64>,
    pub phi2_audit: Phi2Audit,
    pub record_sha1: Vec<String>,
    /// `(trajectory index, message)` for trajectories that failed.
    pub failures: Vec<(usize, String)>,
    pub runtime_s: f64,
}

impl ComparisonReport {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.name == name)
    }

    /// Hash of the report with the wall-clock field zeroed.
    pub fn digest(&self) -> Result<String> {
        let mut r = self.clone();
        r.runtime_s = 0.0;
        Ok(git_blob_sha1(&serde_json::to_vec(&r)?))
    }
}

struct TrajectoryOutcome {
    hash: String,
    truth: Vec<QubitDM>,
    estimates: Vec<Vec<QubitDM>>,
    phi2_err: Vec<[f64; 2]>,
}

fn evaluate_trajectory(sim: &SimConfig, specs: &[(String, EstimatorSpec)], checkpoints: &[f64]) -> Result<TrajectoryOutcome> {
    let mut sim = sim.clone();
    sim.record_qubit = true;
    sim.snapshot_every = None;
    let truth_rec = run_trajectory(&sim)?;
    let bytes = truth_rec.to_csv_bytes()?;
    let hash = git_blob_sha1(&bytes);

    // estimators see only the serialized record
    let rec = TrajectoryRecord::from_csv_bytes(&bytes, sim.params.phi_lo)?;
    let seen = rec.content_hash()?;
    if seen != hash {
        return Err(Error::InvariantViolation(format!("record hash {seen} handed to estimators differs from simulator hash {hash}")));
    }

    let p = sim.params;
    let a0 = sim.initial_cavity;
    let prior = sim.initial_qubit_dm()?;
    let phi2 = phi2_exact_path(&rec, &p, a0);
    let nch = rec.n_channels();
    let mut cum = vec![vec![0.0; rec.len() + 1]; nch];
    for j in 0..nch {
        for k in 0..rec.len() {
            cum[j][k + 1] = cum[j][k] + rec.samples[j][k];
        }
    }
    let mut est: Vec<Estimator> = specs
        .iter()
        .map(|(_, s)| {
            let mut e = Estimator::new(p, a0, rec.scheme);
            e.scale = s.scale;
            e.lambdas = s.lambdas;
            e
        })
        .collect();
    let channels: Vec<Channel> = est.first().map(|e| e.channels().to_vec()).unwrap_or_else(|| rec.channels.clone());

    let mut out = TrajectoryOutcome { hash, truth: Vec::new(), estimates: vec![Vec::new(); specs.len()], phi2_err: Vec::new() };
    for &t in checkpoints {
        let k = rec.steps_until(t)?;
        out.truth.push(truth_rec.qubit[k - 1]);
        let data = Measured { outputs: (0..nch).map(|j| cum[j][k] * rec.dt / t).collect(), phi2_exact: Some(phi2[k - 1]) };
        for (i, ((_, s), e)) in specs.iter().zip(est.iter_mut()).enumerate() {
            let r = e.update(&prior, s.variant, t, &data)?;
            out.estimates[i].push(r.rho);
        }
        let unit = phi2_approx_multi(&data.outputs, t, &p, a0, &channels, ScaleMode::Unit)?;
        let tm = phi2_approx_multi(&data.outputs, t, &p, a0, &channels, ScaleMode::Tm)?;
        out.phi2_err.push([(unit - phi2[k - 1]).abs(), (tm - phi2[k - 1]).abs()]);
    }
    Ok(out)
}

fn write_curve(path: &Path, ts: &[f64], rho: &[QubitDM]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "rho_gg", "re_ge", "im_ge"])?;
    for (t, r) in ts.iter().zip(rho) {
        w.write_record([t.to_string(), r.rho_gg.to_string(), r.rho_ge.re.to_string(), r.rho_ge.im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Simulates `ensemble_size` trajectories, hands each serialized record to every estimator
/// and scores them against the trajectory's own reduced qubit state.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let start = Instant::now();
    let specs = estimator_specs(cfg);
    let checkpoints = cfg.checkpoints();
    let results = run_ensemble(&cfg.sim, cfg.ensemble_size, |_, sim| Ok(evaluate_trajectory(sim, &specs, &checkpoints)))?;

    let nc = checkpoints.len();
    let mut accs: Vec<Vec<ErrorAcc>> = specs.iter().map(|_| (0..nc).map(|_| ErrorAcc::default()).collect()).collect();
    let mut truth_sum = vec![(0.0, 0.0, Complex64::new(0.0, 0.0)); nc];
    let mut purity_sum = vec![0.0; nc];
    let mut audit_sum = vec![[0.0; 2]; nc];
    let mut hashes = Vec::new();
    let mut failures = Vec::new();
    let mut first: Option<&TrajectoryOutcome> = None;
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(o) => {
                hashes.push(o.hash.clone());
                for c in 0..nc {
                    let tr = &o.truth[c];
                    truth_sum[c].0 += tr.rho_gg;
                    truth_sum[c].1 += tr.rho_ee;
                    truth_sum[c].2 += tr.rho_ge;
                    purity_sum[c] += tr.purity();
                    audit_sum[c][0] += o.phi2_err[c][0];
                    audit_sum[c][1] += o.phi2_err[c][1];
                    for (s, acc) in accs.iter_mut().enumerate() {
                        acc[c].push(&o.estimates[s][c], tr);
                    }
                }
                first.get_or_insert(o);
            }
            Err(e) => {
                log::error!("trajectory {i} failed: {e}");
                hashes.push(String::new());
                failures.push((i, e.to_string()));
            }
        }
    }
    let ok = (cfg.ensemble_size - failures.len()) as f64;
    if ok == 0.0 {
        return Err(Error::InvariantViolation(format!("all {} trajectories failed; first: {}", cfg.ensemble_size, failures[0].1)));
    }

    let estimators = specs
        .iter()
        .zip(&accs)
        .map(|((name, spec), acc)| {
            let per: Vec<ErrorStats> = acc.iter().map(ErrorAcc::stats).collect();
            let n = per.len() as f64;
            let summary = ErrorStats {
                mean_gg: per.iter().map(|s| s.mean_gg).sum::<f64>() / n,
                max_gg: per.iter().map(|s| s.max_gg).fold(0.0, f64::max),
                mean_re_ge: per.iter().map(|s| s.mean_re_ge).sum::<f64>() / n,
                max_re_ge: per.iter().map(|s| s.max_re_ge).fold(0.0, f64::max),
                mean_im_ge: per.iter().map(|s| s.mean_im_ge).sum::<f64>() / n,
                max_im_ge: per.iter().map(|s| s.max_im_ge).fold(0.0, f64::max),
                mean_abs_ge: per.iter().map(|s| s.mean_abs_ge).sum::<f64>() / n,
                max_abs_ge: per.iter().map(|s| s.max_abs_ge).fold(0.0, f64::max),
                se_abs_ge: per.iter().map(|s| s.se_abs_ge * s.se_abs_ge).sum::<f64>().sqrt() / n,
            };
            EstimatorReport { name: name.clone(), spec: *spec, per_checkpoint: per, summary }
        })
        .collect();

    let report = ComparisonReport {
        config: cfg.clone(),
        checkpoints: checkpoints.clone(),
        estimators,
        truth_mean: truth_sum.iter().map(|(g, e, ge)| QubitDM { rho_gg: g / ok, rho_ee: e / ok, rho_ge: ge / ok }).collect(),
        truth_purity: purity_sum.iter().map(|s| s / ok).collect(),
        phi2_audit: Phi2Audit { unit: audit_sum.iter().map(|a| a[0] / ok).collect(), tm: audit_sum.iter().map(|a| a[1] / ok).collect() },
        record_sha1: hashes,
        failures,
        runtime_s: start.elapsed().as_secs_f64(),
    };

    if let (Some(dir), Some(o)) = (&cfg.output_dir, first) {
        fs::create_dir_all(dir)?;
        write_curve(&dir.join("truth.csv"), &checkpoints, &o.truth)?;
        for (s, (name, _)) in specs.iter().enumerate() {
            write_curve(&dir.join(format!("curves_{name}.csv")), &checkpoints, &o.estimates[s])?;
        }
        fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleAudit {
    pub t_m: f64,
    pub records: usize,
    pub mean_abs_err_unit: f64,
    pub se_unit: f64,
    pub mean_abs_err_tm: f64,
    pub se_tm: f64,
    pub selected: ScaleMode,
}

/// Compares both integrated-phase scalings against the sampled phase on `records` seeded
/// single-quadrature runs and picks the closer one.
pub fn select_scale_mode(p: &ModelParams, t_m: f64, dt: f64, records: usize, seed: u64) -> Result<ScaleAudit> {
    let mut sim = SimConfig::new(*p, dt, t_m);
    sim.seed = seed;
    sim.snapshot_every = None;
    sim.record_qubit = false;
    let errs = run_ensemble(&sim, records, |_, c| {
        let rec = run_trajectory(c)?;
        let exact = *phi2_exact_path(&rec, p, c.initial_cavity).last().unwrap();
        let i_m = rec.integrated(0, t_m)?;
        let mut e = [0.0; 2];
        for (slot, s) in e.iter_mut().zip([ScaleMode::Unit, ScaleMode::Tm]) {
            *slot = (crate::bayes::phi2_approx(i_m, t_m, p, p.phi_lo, c.initial_cavity, s)? - exact).abs();
        }
        Ok(e)
    })?;
    let n = errs.len() as f64;
    let stat = |i: usize| {
        let m = errs.iter().map(|e| e[i]).sum::<f64>() / n;
        let v = errs.iter().map(|e| (e[i] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, (v / n).sqrt())
    };
    let (mu, su) = stat(0);
    let (mt, st) = stat(1);
    Ok(ScaleAudit {
        t_m,
        records,
        mean_abs_err_unit: mu,
        se_unit: su,
        mean_abs_err_tm: mt,
        se_tm: st,
        selected: if mu <= mt { ScaleMode::Unit } else { ScaleMode::Tm },
    })
}

/// Steady-state branch means of the outputs; `Q` only for two-quadrature readout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyMeans {
    pub i_g: f64,
    pub i_e: f64,
    #[serde(default)]
    pub q_g: Option<f64>,
    #[serde(default)]
    pub q_e: Option<f64>,
}

/// Quantities assumed known during calibration. `phi_lo` fixes the `I` channel of single readout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownParams {
    pub delta_r: f64,
    pub eps_m: f64,
    #[serde(default)]
    pub phi_lo: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub kappa: f64,
    pub chi: f64,
    pub residual: f64,
}

fn calib_channels(m: &SteadyMeans, known: &KnownParams) -> Result<Vec<Channel>> {
    match (m.q_g, m.q_e) {
        (Some(_), Some(_)) => Ok(Channel::iq().to_vec()),
        (None, None) => Ok(vec![Channel::single(known.phi_lo)]),
        _ => Err(Error::InvalidConfig("q_g and q_e must be given together".into())),
    }
}

fn model_means(kappa: f64, chi: f64, known: &KnownParams, channels: &[Channel]) -> Vec<f64> {
    let p = ModelParams::new(known.delta_r, chi, known.eps_m, kappa, known.phi_lo);
    let mut out = Vec::with_capacity(2 * channels.len());
    for b in Branch::BOTH {
        let a = alpha_steady(&p, b).c64();
        for ch in channels {
            out.push(ch.mean_output(&p, a));
        }
    }
    out
}

fn observed(m: &SteadyMeans, channels: &[Channel]) -> Vec<f64> {
    if channels.len() == 2 {
        vec![m.i_g, m.q_g.unwrap_or(0.0), m.i_e, m.q_e.unwrap_or(0.0)]
    } else {
        vec![m.i_g, m.i_e]
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Recovers `(kappa, chi)` from steady branch means: coarse log-grid search, then damped Gauss-Newton.
pub fn calibrate_params(means: &SteadyMeans, known: &KnownParams) -> Result<Calibrated> {
    let channels = calib_channels(means, known)?;
    let y = observed(means, &channels);
    if y.iter().any(|v| !v.is_finite()) || !known.eps_m.is_finite() || known.eps_m == 0.0 {
        return Err(Error::Calibration("means and eps_m must be finite, eps_m nonzero".into()));
    }
    let half = y.len() / 2;
    let split = sq_norm(&y[..half].iter().zip(&y[half..]).map(|(g, e)| g - e).collect::<Vec<_>>()).sqrt();
    let scale = sq_norm(&y).sqrt().max(1e-300);
    if split <= 1e-12 * scale {
        return Err(Error::Calibration("singular Jacobian: branch means coincide, chi is not identifiable".into()));
    }
    let resid = |k: f64, c: f64| -> Vec<f64> { model_means(k, c, known, &channels).iter().zip(&y).map(|(m, o)| m - o).collect() };

    let mut best = (f64::INFINITY, 1.0, 0.0);
    for i in 0..=80 {
        let k = 10f64.powf(-2.0 + 4.0 * i as f64 / 80.0);
        for j in -60..=60 {
            let c = k * j as f64 / 30.0;
            let r = sq_norm(&resid(k, c));
            if r < best.0 {
                best = (r, k, c);
            }
        }
    }
    let (_, mut k, mut c) = best;
    let mut lambda = 1e-3;
    let mut cost = sq_norm(&resid(k, c));
    for _ in 0..200 {
        let r = resid(k, c);
        let hk = 1e-7 * k.max(1e-6);
        let hc = 1e-7 * k.max(c.abs()).max(1e-6);
        let rk: Vec<f64> = resid(k + hk, c).iter().zip(resid(k - hk, c)).map(|(a, b)| (a - b) / (2.0 * hk)).collect();
        let rc: Vec<f64> = resid(k, c + hc).iter().zip(resid(k, c - hc)).map(|(a, b)| (a - b) / (2.0 * hc)).collect();
        let (a11, a12, a22) = (sq_norm(&rk), rk.iter().zip(&rc).map(|(a, b)| a * b).sum::<f64>(), sq_norm(&rc));
        let det0 = a11 * a22 - a12 * a12;
        if !(det0.abs() > 1e-14 * (a11 * a22).max(1e-300)) {
            return Err(Error::Calibration(format!("singular Jacobian at kappa = {k}, chi = {c}")));
        }
        let g1 = rk.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let g2 = rc.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let mut improved = false;
        for _ in 0..30 {
            let (b11, b22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = b11 * b22 - a12 * a12;
            let dk = -(b22 * g1 - a12 * g2) / det;
            let dc = -(b11 * g2 - a12 * g1) / det;
            let (nk, nc) = (k + dk, c + dc);
            if nk > 0.0 {
                let nc_cost = sq_norm(&resid(nk, nc));
                if nc_cost < cost {
                    k = nk;
                    c = nc;
                    cost = nc_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved || cost <= 1e-30 * scale * scale {
            break;
        }
    }
    if !(k > 0.0) || !k.is_finite() || !c.is_finite() {
        return Err(Error::Calibration("no root with kappa > 0".into()));
    }
    Ok(Calibrated { kappa: k, chi: c, residual: cost.sqrt() })
}

/// Steady means predicted by the model, for round trips.
pub fn steady_means(p: &ModelParams, two_quadrature: bool) -> SteadyMeans {
    let known = KnownParams { delta_r: p.delta_r, eps_m: p.eps_m, phi_lo: p.phi_lo };
    if two_quadrature {
        let v = model_means(p.kappa, p.chi, &known, &Channel::iq());
        SteadyMeans { i_g: v[0], q_g: Some(v[1]), i_e: v[2], q_e: Some(v[3]) }
    } else {
        let v = model_means(p.kappa, p.chi, &known, &[Channel::single(p.phi_lo)]);
        SteadyMeans { i_g: v[0], i_e: v[1], q_g: None, q_e: None }
    }
}
