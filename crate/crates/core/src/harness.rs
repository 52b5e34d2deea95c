//! Seeded Monte Carlo experiments over a grid of cells.
//!
//! A config is a flat key=value file:
//!
//! ```text
//! seed=42
//! trials=100
//! m=16
//! n=32
//! k=1,2,3,4
//! snr=10,100,noise-free
//! profile=equal(1),uniform(0.5;1):signed
//! noise=isotropic
//! matrix=gaussian
//! diagnostics=true
//! exact_delta=true
//! cap=2000000
//! parallel=true
//! out_dir=results
//! ```
//!
//! Cells are the cartesian product of the list-valued keys in the order
//! `m, n, k, snr, profile, noise`. Trial `t` of cell `c` is generated from
//! `derive_seed(seed, c, t)`, so every output file is a function of the
//! config alone. `parallel` only changes how trials are scheduled.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{self, CalibrationPoint, ConditionId, Region};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::Matrix;
use crate::metrics::{self, binomial, DeltaTable, SparseSignal};
use crate::omp::{run_omp, verify_iteration_inequalities, StoppingRule};
use crate::synth::{self, derive_seed, NoiseMode, SignalProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SnrSpec {
    Ratio(f64),
    NoiseFree,
}

impl SnrSpec {
    pub fn label(&self) -> String {
        match self {
            SnrSpec::Ratio(r) => r.to_string(),
            SnrSpec::NoiseFree => "noise-free".into(),
        }
    }

    fn parse(text: &str) -> Result<Self> {
        if text == "noise-free" {
            return Ok(SnrSpec::NoiseFree);
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(SnrSpec::Ratio(v)),
            _ => Err(Error::Parse(format!("bad snr '{text}' (positive ratio or noise-free)"))),
        }
    }
}

/// How the measurement matrix of each trial is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MatrixKind {
    /// I.i.d. `N(0, 1/m)`.
    Gaussian,
    /// Gaussian with unit-norm columns.
    Normalized,
    /// Unit-norm columns of a random tight frame.
    Tight,
    /// Randomly rotated `[I | H/sqrt m]`.
    IdentityHadamard,
    /// `m x m` identity; needs `n = m`.
    Identity,
    /// The fixed identity-matrix counterexample with the given `eps`;
    /// `snr`, `profile` and `noise` are ignored and `n` must equal `m`.
    Counterexample(f64),
}

impl MatrixKind {
    pub fn label(&self) -> String {
        match self {
            MatrixKind::Gaussian => "gaussian".into(),
            MatrixKind::Normalized => "normalized".into(),
            MatrixKind::Tight => "tight".into(),
            MatrixKind::IdentityHadamard => "identity_hadamard".into(),
            MatrixKind::Identity => "identity".into(),
            MatrixKind::Counterexample(eps) => format!("counterexample({eps})"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(match text {
            "gaussian" => MatrixKind::Gaussian,
            "normalized" => MatrixKind::Normalized,
            "tight" => MatrixKind::Tight,
            "identity_hadamard" => MatrixKind::IdentityHadamard,
            "identity" => MatrixKind::Identity,
            _ => {
                let eps = text
                    .strip_prefix("counterexample(")
                    .and_then(|t| t.strip_suffix(')'))
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|e| e.is_finite() && *e >= 0.0)
                    .ok_or_else(|| Error::Parse(format!("bad matrix kind '{text}'")))?;
                MatrixKind::Counterexample(eps)
            }
        })
    }

    pub fn generate(&self, m: usize, n: usize, seed: u64) -> Result<Matrix> {
        match self {
            MatrixKind::Gaussian => synth::gaussian_matrix(m, n, seed),
            MatrixKind::Normalized => synth::normalized_gaussian_matrix(m, n, seed),
            MatrixKind::Tight => synth::tight_frame(m, n, seed),
            MatrixKind::IdentityHadamard => synth::identity_hadamard_frame(m, n, seed),
            MatrixKind::Identity | MatrixKind::Counterexample(_) => {
                if n != m {
                    return Err(Error::input("identity matrices need n = m"));
                }
                Matrix::identity(m)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub trials_per_cell: usize,
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub snr: Vec<SnrSpec>,
    pub profile: Vec<SignalProfile>,
    pub noise: Vec<NoiseMode>,
    pub matrix: MatrixKind,
    /// Verify the per-iteration inequalities in every trial.
    pub diagnostics: bool,
    /// Compute exact `delta_K`, `delta_{K+1}` (and `delta_2K` when within
    /// the cap) for every trial.
    pub exact_delta: bool,
    pub cap: u64,
    pub parallel: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base_seed: 0,
            trials_per_cell: 100,
            m: Vec::new(),
            n: Vec::new(),
            k: Vec::new(),
            snr: vec![SnrSpec::NoiseFree],
            profile: vec![SignalProfile::equal(1.0)],
            noise: vec![NoiseMode::Isotropic],
            matrix: MatrixKind::Gaussian,
            diagnostics: false,
            exact_delta: false,
            cap: metrics::DEFAULT_SUBSET_CAP,
            parallel: true,
            out_dir: PathBuf::from("results"),
        }
    }
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("bad boolean '{v}' for {key}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (key, v) in io::parse_key_values(text)? {
            let v = v.as_str();
            match key.as_str() {
                "seed" => c.base_seed = parse_num(&key, v)?,
                "trials" => c.trials_per_cell = parse_num(&key, v)?,
                "m" => c.m = parse_list(v, |s| parse_num(&key, s))?,
                "n" => c.n = parse_list(v, |s| parse_num(&key, s))?,
                "k" => c.k = parse_list(v, |s| parse_num(&key, s))?,
                "snr" => c.snr = parse_list(v, SnrSpec::parse)?,
                "profile" => c.profile = parse_list(v, SignalProfile::parse)?,
                "noise" => c.noise = parse_list(v, NoiseMode::parse)?,
                "matrix" => c.matrix = MatrixKind::parse(v)?,
                "diagnostics" => c.diagnostics = parse_bool(&key, v)?,
                "exact_delta" => c.exact_delta = parse_bool(&key, v)?,
                "cap" => c.cap = parse_num(&key, v)?,
                "parallel" => c.parallel = parse_bool(&key, v)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Key=value text that [`ExperimentConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        fn join<T>(v: &[T], f: impl Fn(&T) -> String) -> String {
            v.iter().map(f).collect::<Vec<_>>().join(",")
        }
        io::format_key_values(&[
            ("seed", self.base_seed.to_string()),
            ("trials", self.trials_per_cell.to_string()),
            ("m", join(&self.m, usize::to_string)),
            ("n", join(&self.n, usize::to_string)),
            ("k", join(&self.k, usize::to_string)),
            ("snr", join(&self.snr, SnrSpec::label)),
            ("profile", join(&self.profile, SignalProfile::label)),
            ("noise", join(&self.noise, NoiseMode::label)),
            ("matrix", self.matrix.label()),
            ("diagnostics", self.diagnostics.to_string()),
            ("exact_delta", self.exact_delta.to_string()),
            ("cap", self.cap.to_string()),
            ("parallel", self.parallel.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ])
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &m in &self.m {
            for &n in &self.n {
                for &k in &self.k {
                    for &snr in &self.snr {
                        for &profile in &self.profile {
                            for &noise in &self.noise {
                                out.push(Cell { index: out.len(), m, n, k, snr, profile, noise, matrix: self.matrix });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 {
            return Err(Error::input("trials must be positive"));
        }
        for cell in self.cells() {
            cell.validate()?;
            if self.exact_delta {
                for order in cell.required_orders() {
                    let count = binomial(cell.n, order);
                    if count > self.cap as u128 {
                        return Err(Error::Capacity { required: count, cap: self.cap });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub snr: SnrSpec,
    pub profile: SignalProfile,
    pub noise: NoiseMode,
    pub matrix: MatrixKind,
}

impl Cell {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::input(format!("cell {}: m, n and K must be positive", self.index)));
        }
        if self.k > self.m || self.k > self.n {
            return Err(Error::input(format!(
                "cell {}: K={} exceeds m={} or n={}",
                self.index, self.k, self.m, self.n
            )));
        }
        if let MatrixKind::Counterexample(_) = self.matrix {
            if self.n != self.m || self.k >= self.m {
                return Err(Error::input(format!("cell {}: the counterexample needs n = m > K", self.index)));
            }
        }
        self.profile.validate()
    }

    /// Orders whose constants must fit under the cap.
    fn required_orders(&self) -> Vec<usize> {
        let mut v = vec![1, self.k, self.k + 1];
        v.retain(|o| *o <= self.n);
        v.dedup();
        v
    }
}

/// One trial's results. Fields that could not be computed are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub snr_target: SnrSpec,
    pub snr_actual: Option<f64>,
    pub mar: Option<f64>,
    pub kappa: Option<f64>,
    pub delta_1: Option<f64>,
    pub delta_k: Option<f64>,
    pub delta_k1: Option<f64>,
    pub delta_2k: Option<f64>,
    pub rho_error: Option<f64>,
    pub l2_distortion: Option<f64>,
    pub noise_norm: Option<f64>,
    /// Indexed like [`ConditionId::ALL`].
    pub verdicts: [Option<bool>; 5],
    pub region: Option<Region>,
    /// Iteration-inequality violations; `None` when diagnostics are off.
    pub violations: Option<usize>,
    pub error: Option<String>,
}

impl TrialRecord {
    fn new(cell: &Cell, trial: usize, seed: u64) -> Self {
        TrialRecord {
            cell: cell.index,
            trial,
            seed,
            m: cell.m,
            n: cell.n,
            k: cell.k,
            snr_target: cell.snr,
            snr_actual: None,
            mar: None,
            kappa: None,
            delta_1: None,
            delta_k: None,
            delta_k1: None,
            delta_2k: None,
            rho_error: None,
            l2_distortion: None,
            noise_norm: None,
            verdicts: [None; 5],
            region: None,
            violations: None,
            error: None,
        }
    }

    pub fn exact_recovery(&self) -> bool {
        self.rho_error == Some(0.0)
    }

    pub fn verdict(&self, id: ConditionId) -> Option<bool> {
        let pos = ConditionId::ALL.iter().position(|c| *c == id).expect("known id");
        self.verdicts[pos]
    }

    pub const CSV_HEADER: &'static str = "trial_id,seed,m,n,K,snr_target,snr_actual,mar,kappa,\
delta_1,delta_K,delta_K+1,delta_2K,rho_error,l2_distortion,\
THM1_SUFFICIENT,THM2_NECESSARY,REMARK_SNR_GT_K,THM3_SNR_FLOOR,RIP_SHAPE_THM1,region,violations,error";

    pub fn to_csv_row(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map_or(String::new(), |x| x.to_string())
        }
        let mut row = format!(
            "{}:{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.cell,
            self.trial,
            self.seed,
            self.m,
            self.n,
            self.k,
            self.snr_target.label(),
            opt(self.snr_actual),
            opt(self.mar),
            opt(self.kappa),
            opt(self.delta_1),
            opt(self.delta_k),
            opt(self.delta_k1),
            opt(self.delta_2k),
            opt(self.rho_error),
            opt(self.l2_distortion),
        );
        for v in self.verdicts {
            let _ = write!(row, ",{}", v.map_or("", |b| if b { "1" } else { "0" }));
        }
        let region = match self.region {
            Some(Region::Guaranteed) => "guaranteed",
            Some(Region::BelowNecessary) => "below_necessary",
            Some(Region::Indeterminate) => "indeterminate",
            None => "",
        };
        let error = self.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = write!(row, ",{region},{},{error}", opt(self.violations));
        row
    }
}

/// The instance of one trial.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub phi: Matrix,
    pub x: SparseSignal,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws the instance for trial `trial` of `cell`. Matrix, signal and noise
/// use independent streams derived from the trial seed.
pub fn trial_instance(cell: &Cell, seed: u64) -> Result<TrialInstance> {
    if let MatrixKind::Counterexample(eps) = cell.matrix {
        let inst = synth::appendix_a_instance(cell.k, cell.m, eps)?;
        return Ok(TrialInstance { phi: inst.phi, x: inst.x, noise: inst.noise, y: inst.y });
    }
    let phi = cell.matrix.generate(cell.m, cell.n, derive_seed(seed, 0, 1))?;
    let x = synth::sparse_signal(cell.n, cell.k, &cell.profile, derive_seed(seed, 0, 2))?;
    let noise = match cell.snr {
        SnrSpec::NoiseFree => vec![0.0; cell.m],
        SnrSpec::Ratio(snr) => synth::noise_at_snr(&phi, &x, snr, cell.noise, derive_seed(seed, 0, 3))?,
    };
    let y = crate::linalg::add(&phi.mul_vec(&x.to_dense())?, &noise);
    Ok(TrialInstance { phi, x, noise, y })
}

/// Runs one trial. Errors are recorded in the returned record rather than
/// propagated.
pub fn run_trial(config: &ExperimentConfig, cell: &Cell, trial: usize) -> TrialRecord {
    let seed = derive_seed(config.base_seed, cell.index as u64, trial as u64);
    let mut rec = TrialRecord::new(cell, trial, seed);
    if let Err(e) = fill_trial(config, cell, seed, &mut rec) {
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_trial(config: &ExperimentConfig, cell: &Cell, seed: u64, rec: &mut TrialRecord) -> Result<()> {
    let inst = trial_instance(cell, seed)?;
    let m = metrics::InstanceMetrics::compute(&inst.phi, &inst.x, &inst.noise)?;
    rec.snr_actual = Some(m.snr);
    rec.mar = Some(m.mar);
    rec.kappa = Some(m.kappa);
    rec.noise_norm = Some(m.noise_energy.sqrt());

    let k = cell.k;
    let mut deltas = DeltaTable::default();
    if config.exact_delta || config.diagnostics {
        deltas = metrics::exact_delta_table(&inst.phi, &[1], config.cap)?;
    }
    if config.exact_delta {
        let extra = metrics::exact_delta_table(&inst.phi, &cell.required_orders(), config.cap)?;
        for (o, d) in extra.iter() {
            deltas.insert(o, d);
        }
        if 2 * k <= cell.n && binomial(cell.n, 2 * k) <= config.cap as u128 {
            let d = metrics::exact_rip_constant(&inst.phi, 2 * k, config.cap)?.delta;
            deltas.insert(2 * k, d);
        }
    }
    rec.delta_1 = deltas.get(1);
    rec.delta_k = deltas.get(k);
    rec.delta_k1 = deltas.get(k + 1);
    rec.delta_2k = deltas.get(2 * k);

    if config.exact_delta {
        let c = conditions::classify_instance(&inst.phi, &inst.x, &inst.noise, &deltas)?;
        for (slot, id) in rec.verdicts.iter_mut().zip(ConditionId::ALL) {
            *slot = c.holds(id);
        }
        rec.region = Some(c.region);
    }

    let trace = run_omp(&inst.phi, &inst.y, StoppingRule::FixedIterations(k))?;
    let report = metrics::recovery_report(&inst.x, &trace.final_estimate, &trace.final_support)?;
    rec.rho_error = Some(report.support.error_rate);
    rec.l2_distortion = Some(report.l2_distortion);

    if config.diagnostics {
        rec.violations = Some(
            match verify_iteration_inequalities(&inst.phi, &inst.x, &inst.noise, &trace, &deltas) {
                Ok(d) => d.violations(),
                Err(Error::Consistency(msg)) => {
                    rec.error = Some(msg);
                    1
                }
                Err(e) => return Err(e),
            },
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionTally {
    pub id: ConditionId,
    pub evaluated: usize,
    pub holds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub trials: usize,
    pub errors: usize,
    /// Over trials without errors.
    pub exact_recovery_rate: f64,
    pub mean_rho: f64,
    pub max_rho: f64,
    pub mean_l2_distortion: f64,
    pub tallies: Vec<ConditionTally>,
    pub guaranteed: usize,
    /// Trials in the guaranteed region that still missed the support.
    pub guaranteed_failures: usize,
    pub violations: usize,
    pub wall_time_secs: f64,
}

impl CellSummary {
    fn aggregate(cell: Cell, records: &[TrialRecord], wall_time_secs: f64) -> Self {
        let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.rho_error.is_some()).collect();
        let count = ok.len().max(1) as f64;
        let rhos = ok.iter().map(|r| r.rho_error.unwrap_or(0.0));
        let tallies = ConditionId::ALL
            .iter()
            .map(|&id| ConditionTally {
                id,
                evaluated: records.iter().filter(|r| r.verdict(id).is_some()).count(),
                holds: records.iter().filter(|r| r.verdict(id) == Some(true)).count(),
            })
            .collect();
        let guaranteed: Vec<&&TrialRecord> =
            ok.iter().filter(|r| r.region == Some(Region::Guaranteed)).collect();
        CellSummary {
            cell,
            trials: records.len(),
            errors: records.iter().filter(|r| r.error.is_some()).count(),
            exact_recovery_rate: if ok.is_empty() {
                0.0
            } else {
                ok.iter().filter(|r| r.exact_recovery()).count() as f64 / count
            },
            mean_rho: rhos.clone().sum::<f64>() / count,
            max_rho: rhos.fold(0.0, f64::max),
            mean_l2_distortion: ok.iter().filter_map(|r| r.l2_distortion).sum::<f64>() / count,
            tallies,
            guaranteed: guaranteed.len(),
            guaranteed_failures: guaranteed.iter().filter(|r| !r.exact_recovery()).count(),
            violations: records.iter().filter_map(|r| r.violations).sum(),
            wall_time_secs,
        }
    }

    pub fn csv_header() -> String {
        let mut h = String::from(
            "cell,m,n,K,snr_target,profile,noise,matrix,trials,errors,exact_recovery_rate,mean_rho,max_rho,mean_l2_distortion",
        );
        for id in ConditionId::ALL {
            let _ = write!(h, ",{id}_evaluated,{id}_holds");
        }
        h.push_str(",guaranteed,guaranteed_failures,violations");
        h
    }

    /// Wall time is left out so that the row depends only on the config.
    pub fn to_csv_row(&self) -> String {
        let c = &self.cell;
        let mut row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.index,
            c.m,
            c.n,
            c.k,
            c.snr.label(),
            c.profile.label(),
            c.noise.label(),
            c.matrix.label(),
            self.trials,
            self.errors,
            self.exact_recovery_rate,
            self.mean_rho,
            self.max_rho,
            self.mean_l2_distortion
        );
        for t in &self.tallies {
            let _ = write!(row, ",{},{}", t.evaluated, t.holds);
        }
        let _ = write!(row, ",{},{},{}", self.guaranteed, self.guaranteed_failures, self.violations);
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
}

impl ExperimentOutcome {
    pub fn violations(&self) -> usize {
        self.cells.iter().map(|c| c.violations).sum()
    }

    pub fn guaranteed_failures(&self) -> usize {
        self.cells.iter().map(|c| c.guaranteed_failures).sum()
    }
}

/// Runs every trial without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let cells = config.cells();
    let tasks: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..config.trials_per_cell).map(move |t| (c, t))).collect();
    let run = |&(c, t): &(usize, usize)| {
        let start = Instant::now();
        let rec = run_trial(config, &cells[c], t);
        (rec, start.elapsed().as_secs_f64())
    };
    // collect() keeps task order, so records come out in (cell, trial) order
    let results: Vec<(TrialRecord, f64)> =
        if config.parallel { tasks.par_iter().map(run).collect() } else { tasks.iter().map(run).collect() };

    let per = config.trials_per_cell;
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let chunk = &results[i * per..(i + 1) * per];
            let recs: Vec<TrialRecord> = chunk.iter().map(|r| r.0.clone()).collect();
            CellSummary::aggregate(*cell, &recs, chunk.iter().map(|r| r.1).sum())
        })
        .collect();
    Ok(ExperimentOutcome { cells: summaries, records: results.into_iter().map(|r| r.0).collect() })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    cells: usize,
    trials: usize,
    violations: usize,
    guaranteed_failures: usize,
    cell_wall_time_secs: Vec<f64>,
}

/// Runs the experiment and writes `trials.csv`, `cells.csv` and
/// `manifest.json` under `config.out_dir`. The output files are created
/// before any trial runs, so an unwritable directory fails fast.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut trials_file = File::create(config.out_dir.join("trials.csv"))?;
    let mut cells_file = File::create(config.out_dir.join("cells.csv"))?;
    let mut manifest_file = File::create(config.out_dir.join("manifest.json"))?;

    let outcome = execute(config)?;

    let mut trials = String::from(TrialRecord::CSV_HEADER);
    trials.push('\n');
    for r in &outcome.records {
        trials.push_str(&r.to_csv_row());
        trials.push('\n');
    }
    trials_file.write_all(trials.as_bytes())?;

    let mut cells = CellSummary::csv_header();
    cells.push('\n');
    for c in &outcome.cells {
        cells.push_str(&c.to_csv_row());
        cells.push('\n');
    }
    cells_file.write_all(cells.as_bytes())?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        cells: outcome.cells.len(),
        trials: outcome.records.len(),
        violations: outcome.violations(),
        guaranteed_failures: outcome.guaranteed_failures(),
        cell_wall_time_secs: outcome.cells.iter().map(|c| c.wall_time_secs).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    manifest_file.write_all(text.as_bytes())?;
    manifest_file.write_all(b"\n")?;
    Ok(outcome)
}

/// Corpus for calibrating the constant of the error-rate bound:
/// equal-magnitude signals, exact `delta_2K`, and noise at
/// `factor * delta_2K^{-3/2}` for each factor (all `>= 1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationConfig {
    pub base_seed: u64,
    pub trials: usize,
    pub m: usize,
    pub n: usize,
    pub k: Vec<usize>,
    pub snr_factors: Vec<f64>,
    pub matrix: MatrixKind,
    pub noise: NoiseMode,
    pub cap: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            base_seed: 0,
            trials: 200,
            m: 12,
            n: 14,
            k: vec![1, 2, 3],
            snr_factors: vec![1.0, 2.0, 10.0],
            matrix: MatrixKind::Tight,
            noise: NoiseMode::Isotropic,
            cap: metrics::DEFAULT_SUBSET_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub calibration: conditions::Calibration,
    /// Trials skipped because `delta_2K` fell outside `(0, 1)`.
    pub skipped: usize,
    pub max_rho: f64,
    pub min_delta_2k: f64,
    pub max_delta_2k: f64,
}

pub fn calibrate_corpus(config: &CalibrationConfig) -> Result<CalibrationSummary> {
    if config.snr_factors.iter().any(|f| !(*f >= 1.0 && f.is_finite())) {
        return Err(Error::input("SNR factors must be finite and >= 1"));
    }
    for &k in &config.k {
        if k == 0 || 2 * k > config.n || k > config.m {
            return Err(Error::input(format!("K={k} needs 2K <= n and K <= m")));
        }
        let count = binomial(config.n, 2 * k);
        if count > config.cap as u128 {
            return Err(Error::Capacity { required: count, cap: config.cap });
        }
    }
    let tasks: Vec<(usize, usize, usize)> = (0..config.k.len())
        .flat_map(|ki| {
            (0..config.snr_factors.len()).flat_map(move |fi| (0..config.trials).map(move |t| (ki, fi, t)))
        })
        .collect();
    let results: Vec<Result<Option<CalibrationPoint>>> = tasks
        .par_iter()
        .map(|&(ki, fi, t)| {
            let k = config.k[ki];
            let seed = derive_seed(config.base_seed, (ki * config.snr_factors.len() + fi) as u64, t as u64);
            let phi = config.matrix.generate(config.m, config.n, derive_seed(seed, 0, 1))?;
            let d2k = metrics::exact_rip_constant(&phi, 2 * k, config.cap)?.delta;
            if !(d2k > 0.0 && d2k < 1.0) {
                return Ok(None);
            }
            let x = synth::sparse_signal(config.n, k, &SignalProfile::equal(1.0), derive_seed(seed, 0, 2))?;
            let kappa = metrics::compute_kappa(&x)?;
            let snr = conditions::theorem3_snr_floor(kappa, d2k)? * config.snr_factors[fi];
            let noise = synth::noise_at_snr(&phi, &x, snr, config.noise, derive_seed(seed, 0, 3))?;
            let y = crate::linalg::add(&phi.mul_vec(&x.to_dense())?, &noise);
            let trace = run_omp(&phi, &y, StoppingRule::FixedIterations(k))?;
            let rho = metrics::support_error_rate(x.support(), &trace.final_support)?.error_rate;
            Ok(Some(CalibrationPoint { rho, kappa, delta_2k: d2k }))
        })
        .collect();
    let mut points = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(p) => points.push(p),
            None => skipped += 1,
        }
    }
    let calibration = conditions::calibrate_c(&points)?;
    let fold = |f: fn(f64, f64) -> f64, init| points.iter().map(|p| p.delta_2k).fold(init, f);
    Ok(CalibrationSummary {
        calibration,
        skipped,
        max_rho: points.iter().map(|p| p.rho).fold(0.0, f64::max),
        min_delta_2k: fold(f64::min, f64::INFINITY),
        max_delta_2k: fold(f64::max, 0.0),
    })
}
