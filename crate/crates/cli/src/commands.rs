//! Subcommand implementations. Each reads a [`RunConfig`] and writes its
//! result to `output` (or stdout); warnings go to a `<output>.warnings.json`
//! sidecar, or to the log when writing to stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use dmq_core::bootstrap::{select_k, KSelection};
use dmq_core::geometry::rotation_for;
use dmq_core::quantile::{theta_grid, EstimateOptions, SurfaceEstimator, ThetaGrid, DEFAULT_MIN_ROWS};
use dmq_core::tmodel::{asymptotic_quantile, oracle_surface, relative_error, sample_t, theoretical_rho, TParams};
use dmq_core::{estimate_surface, Direction, Sample};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Format, KSpec, RunConfig};
use crate::error::{CliError, CliResult, EXIT_DATA};
use crate::io::{fmt_f64, parse_csv, write_sample_csv, SurfaceDoc};

fn emit(cfg: &RunConfig, write: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match &cfg.output {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
            let mut w = std::io::BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".warnings.json");
    PathBuf::from(s)
}

fn write_report(cfg: &RunConfig, warnings: &[String], details: serde_json::Value) -> CliResult<()> {
    match &cfg.output {
        Some(out) => {
            let report = json!({ "warnings": warnings, "details": details });
            std::fs::write(sidecar_path(out), serde_json::to_string_pretty(&report)?)?;
        }
        None => warnings.iter().for_each(|w| log::warn!("{w}")),
    }
    Ok(())
}

fn load(cfg: &RunConfig) -> CliResult<Sample> {
    parse_csv(cfg.input()?, cfg.has_header)
}

fn options(cfg: &RunConfig) -> EstimateOptions {
    EstimateOptions {
        k: cfg.k_choice(),
        k_rho: None,
        min_rows: DEFAULT_MIN_ROWS,
        center: cfg.center,
    }
}

pub fn run_rotate(cfg: &RunConfig) -> CliResult<()> {
    let sample = load(cfg)?;
    let u = cfg.direction.resolve_for_sample(&sample)?;
    let rotated = rotation_for(&u)?.rotate_sample(&sample)?;
    emit(cfg, |w| write_sample_csv(w, &rotated))
}

/// Selection on the rotated (and optionally median-centered) sample.
pub fn select_k_for(cfg: &RunConfig, sample: &Sample) -> CliResult<KSelection> {
    let u = cfg.direction.resolve_for_sample(sample)?;
    let base = if cfg.center {
        sample.shifted(&sample.componentwise_median())?
    } else {
        sample.clone()
    };
    let rotated = rotation_for(&u)?.rotate_sample(&base)?;
    Ok(select_k(&rotated, &cfg.bootstrap())?)
}

pub fn run_select_k(cfg: &RunConfig) -> CliResult<()> {
    let sample = load(cfg)?;
    let sel = select_k_for(cfg, &sample)?;
    let text = serde_json::to_string_pretty(&sel)?;
    emit(cfg, |w| Ok(writeln!(w, "{text}")?))
}

fn grid_for(cfg: &RunConfig, d: usize) -> CliResult<ThetaGrid> {
    Ok(theta_grid(d, cfg.grid, cfg.delta)?)
}

fn write_surface(cfg: &RunConfig, doc: &SurfaceDoc) -> CliResult<()> {
    match cfg.format {
        Format::Json => {
            let text = doc.to_json()?;
            emit(cfg, |w| Ok(writeln!(w, "{text}")?))
        }
        Format::Csv => emit(cfg, |w| doc.write_csv(w)),
    }
}

pub fn estimate_doc(cfg: &RunConfig, sample: &Sample) -> CliResult<(SurfaceDoc, Vec<String>, serde_json::Value)> {
    let u = cfg.direction.resolve_for_sample(sample)?;
    let alpha = cfg.alpha_or(sample.nrows())?;
    let grid = grid_for(cfg, sample.dim())?;
    let surface = estimate_surface(sample, &u, alpha, &grid, &options(cfg))?;
    let details = json!({
        "fit": surface.fit,
        "selection": surface.selection,
        "center": surface.center,
    });
    Ok((SurfaceDoc::from(&surface), surface.warnings.clone(), details))
}

pub fn run_estimate(cfg: &RunConfig) -> CliResult<()> {
    let sample = load(cfg)?;
    let (doc, warnings, details) = estimate_doc(cfg, &sample)?;
    write_surface(cfg, &doc)?;
    write_report(cfg, &warnings, details)
}

pub fn run_flag(cfg: &RunConfig) -> CliResult<()> {
    let sample = load(cfg)?;
    let u = cfg.direction.resolve_for_sample(&sample)?;
    let alpha = cfg.alpha_or(sample.nrows())?;
    let est = SurfaceEstimator::new(&sample, &u, &options(cfg))?;
    let flags = est.flag(&sample, alpha)?;
    emit(cfg, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["row", "alpha_z", "flagged"])?;
        for (i, f) in flags.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), fmt_f64(f.alpha_z), f.flagged.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let count = flags.iter().filter(|f| f.flagged).count();
    let details = json!({
        "alpha": alpha,
        "flagged": count,
        "fraction": count as f64 / flags.len() as f64,
        "fit": est.fit(),
        "selection": est.selection(),
    });
    write_report(cfg, est.warnings(), details)
}

pub fn run_simulate_t(cfg: &RunConfig) -> CliResult<()> {
    let params = cfg.t_params()?;
    let sample = sample_t(&params, cfg.sample_size()?, cfg.seed)?;
    emit(cfg, |w| write_sample_csv(w, &sample))
}

/// `k` used by the oracle's normalization `t = n / k`; `auto` means `floor(sqrt(n))`.
pub fn oracle_k(cfg: &RunConfig, n: usize) -> usize {
    match cfg.k {
        KSpec::Fixed(k) => k,
        KSpec::Auto => ((n as f64).sqrt().floor() as usize).max(2),
    }
}

pub fn oracle_doc(cfg: &RunConfig) -> CliResult<SurfaceDoc> {
    let params = cfg.t_params()?;
    let n = cfg.sample_size()?;
    let u = cfg.direction.resolve_for_model(&params)?;
    let alpha = cfg.alpha_or(n)?;
    let k = oracle_k(cfg, n);
    let grid = grid_for(cfg, params.dim())?;
    let points = oracle_surface(&params, &u, alpha, &grid, n as f64 / k as f64)?;
    Ok(SurfaceDoc {
        alpha,
        direction: u.components().to_vec(),
        k,
        gamma: params.gamma(),
        source: Some("oracle".into()),
        points: points.iter().map(Into::into).collect(),
    })
}

pub fn run_oracle_t(cfg: &RunConfig) -> CliResult<()> {
    write_surface(cfg, &oracle_doc(cfg)?)
}

/// Seed of stream `stream` of replicate `replicate` under a master seed.
pub fn derive_seed(master: u64, replicate: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((stream << 48) ^ replicate);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub k_hat: usize,
    pub fallback: bool,
    /// `gamma_j_hat / gamma`.
    pub gamma_ratio: Vec<f64>,
    pub gamma_joint_ratio: f64,
    /// Relative error at the diagonal angle, against the oracle at `t = n / k_hat`.
    pub re: f64,
    pub rho: Vec<f64>,
    pub floored: Vec<bool>,
    pub x_original: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    /// Assumption failure (e.g. a non-positive tail index) that prevented
    /// estimation; numeric fields are then NaN.
    pub error: Option<String>,
}

impl ReplicateResult {
    fn failed(replicate: usize, seed: u64, d: usize, points: usize, error: String) -> Self {
        Self {
            replicate,
            seed,
            k_hat: 0,
            fallback: false,
            gamma_ratio: vec![f64::NAN; d],
            gamma_joint_ratio: f64::NAN,
            re: f64::NAN,
            rho: vec![f64::NAN; points],
            floored: vec![false; points],
            x_original: vec![vec![f64::NAN; d]; points],
            warnings: Vec::new(),
            error: Some(error),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStudy {
    pub n: usize,
    pub alpha: f64,
    pub direction: Vec<f64>,
    pub angles: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<f64>>,
    pub rho_tilde: Vec<f64>,
    pub replicates: Vec<ReplicateResult>,
}

/// Pointwise percentile with linear interpolation between order statistics.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = p * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

fn replicate(
    cfg: &RunConfig,
    params: &TParams,
    u: &Direction,
    grid: &ThetaGrid,
    alpha: f64,
    n: usize,
    r: usize,
) -> CliResult<ReplicateResult> {
    let seed = derive_seed(cfg.seed, r as u64, 0);
    let sample = sample_t(params, n, seed)?;
    let mut opts = options(cfg);
    if let KSpec::Auto = cfg.k {
        let mut boot = cfg.bootstrap();
        boot.seed = derive_seed(cfg.seed, r as u64, 1);
        opts.k = dmq_core::KChoice::Auto(boot);
    }
    let est = SurfaceEstimator::new(&sample, u, &opts)?;
    let surface = est.surface(grid, alpha)?;
    let fit = est.fit();
    let d = params.dim();
    let diag = vec![1.0 / (d as f64).sqrt(); d];
    let x_hat = est.point(&diag, alpha)?;
    let x_tilde = asymptotic_quantile(params, u, alpha, &diag, n as f64 / fit.k as f64)?;
    let re = relative_error(&x_tilde, &x_hat.x_rotated)?;
    Ok(ReplicateResult {
        replicate: r,
        seed,
        k_hat: fit.k,
        fallback: est.selection().is_some_and(|s| s.fallback),
        gamma_ratio: fit.gamma_j.iter().map(|g| g / params.gamma()).collect(),
        gamma_joint_ratio: fit.gamma / params.gamma(),
        re,
        rho: surface.points.iter().map(|p| p.rho).collect(),
        floored: surface.points.iter().map(|p| p.floored).collect(),
        x_original: surface.points.into_iter().map(|p| p.x_original).collect(),
        warnings: surface.warnings,
        error: None,
    })
}

/// Simulates `replicates` samples from the model and estimates each.
/// Replicates run in parallel; results do not depend on the worker count.
/// A replicate whose data violate an estimation assumption is kept as a
/// failed record; other errors abort the study.
pub fn mc_study(cfg: &RunConfig) -> CliResult<McStudy> {
    let params = cfg.t_params()?;
    let n = cfg.sample_size()?;
    let u = cfg.direction.resolve_for_model(&params)?;
    let alpha = cfg.alpha_or(n)?;
    let grid = grid_for(cfg, params.dim())?;
    let rho_tilde = grid
        .points()
        .par_iter()
        .map(|th| theoretical_rho(th, &params, &u))
        .collect::<dmq_core::Result<Vec<f64>>>()?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            match replicate(cfg, &params, &u, &grid, alpha, n, r) {
                Err(e) if e.exit_code == EXIT_DATA => Ok(ReplicateResult::failed(
                    r,
                    derive_seed(cfg.seed, r as u64, 0),
                    params.dim(),
                    grid.len(),
                    e.message,
                )),
                other => other.map_err(|e| e.context(&format!("replicate {r}"))),
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(McStudy {
        n,
        alpha,
        direction: u.components().to_vec(),
        angles: grid.angles().to_vec(),
        thetas: grid.points().to_vec(),
        rho_tilde,
        replicates,
    })
}

impl McStudy {
    pub fn write_replicates<W: Write>(&self, w: W) -> CliResult<()> {
        let d = self.direction.len();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_string(), "seed".into(), "k_hat".into(), "fallback".into()];
        header.extend((1..=d).map(|j| format!("gamma_ratio_{j}")));
        header.push("gamma_joint_ratio".into());
        header.push("re".into());
        header.push("error".into());
        wtr.write_record(&header)?;
        for r in &self.replicates {
            let mut rec = vec![r.replicate.to_string(), r.seed.to_string(), r.k_hat.to_string(), r.fallback.to_string()];
            rec.extend(r.gamma_ratio.iter().map(|v| fmt_f64(*v)));
            rec.push(fmt_f64(r.gamma_joint_ratio));
            rec.push(fmt_f64(r.re));
            rec.push(r.error.clone().unwrap_or_default());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_rho_curves<W: Write>(&self, w: W) -> CliResult<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let na = self.angles.first().map_or(0, Vec::len);
        let mut header = vec!["replicate".to_string(), "point".into()];
        header.extend((1..=na).map(|j| format!("angle_{j}")));
        header.extend(["rho_hat".into(), "floored".into(), "rho_tilde".into()]);
        wtr.write_record(&header)?;
        for r in self.replicates.iter().filter(|r| r.ok()) {
            for (i, angles) in self.angles.iter().enumerate() {
                let mut rec = vec![r.replicate.to_string(), i.to_string()];
                rec.extend(angles.iter().map(|v| fmt_f64(*v)));
                rec.push(fmt_f64(r.rho[i]));
                rec.push(r.floored[i].to_string());
                rec.push(fmt_f64(self.rho_tilde[i]));
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// 15%, 50% and 85% pointwise percentiles of each surface coordinate
    /// over the successful replicates. NaN when none succeeded.
    pub fn bands(&self) -> Vec<Vec<[f64; 3]>> {
        let d = self.direction.len();
        (0..self.thetas.len())
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut v: Vec<f64> = self
                            .replicates
                            .iter()
                            .filter(|r| r.ok())
                            .map(|r| r.x_original[i][j])
                            .collect();
                        if v.is_empty() {
                            return [f64::NAN; 3];
                        }
                        [percentile(&mut v, 0.15), percentile(&mut v, 0.5), percentile(&mut v, 0.85)]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write_bands<W: Write>(&self, w: W) -> CliResult<()> {
        let d = self.direction.len();
        let na = self.angles.first().map_or(0, Vec::len);
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["point".to_string()];
        header.extend((1..=na).map(|j| format!("angle_{j}")));
        for j in 1..=d {
            header.extend([format!("x{j}_p15"), format!("x{j}_p50"), format!("x{j}_p85")]);
        }
        wtr.write_record(&header)?;
        for (i, b) in self.bands().iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(self.angles[i].iter().map(|v| fmt_f64(*v)));
            rec.extend(b.iter().flat_map(|q| q.iter().map(|v| fmt_f64(*v))));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Writes `replicates.csv`, `rho_curves.csv`, `bands.csv` and a warnings
/// report into the output directory.
pub fn run_mc_study(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg
        .output
        .as_ref()
        .ok_or_else(|| CliError::usage("mc-study needs --output <directory>"))?;
    std::fs::create_dir_all(dir)?;
    let study = mc_study(cfg)?;
    let create = |name: &str| -> CliResult<std::io::BufWriter<std::fs::File>> {
        Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
    };
    study.write_replicates(create("replicates.csv")?)?;
    study.write_rho_curves(create("rho_curves.csv")?)?;
    study.write_bands(create("bands.csv")?)?;
    let warnings: Vec<String> = study
        .replicates
        .iter()
        .flat_map(|r| {
            r.warnings
                .iter()
                .chain(&r.error)
                .map(move |w| format!("replicate {}: {w}", r.replicate))
        })
        .collect();
    let failed = study.replicates.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} replicates failed; see warnings.json", study.replicates.len());
    }
    let report = json!({
        "warnings": warnings,
        "details": { "n": study.n, "alpha": study.alpha, "direction": study.direction, "replicates": study.replicates.len(), "failed": failed },
    });
    std::fs::write(dir.join("warnings.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
