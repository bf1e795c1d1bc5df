use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use fracimp_core::estimator::log_omega_grid;
use fracimp_core::simulator::{Excitation, Experiment};
use fracimp_core::spectra::detect_excited_bins;
use fracimp_core::{
    coulomb_count, fit_randles, nonparametric_impedance, parametric_impedance, per_period_spectra,
    relative_error_curve, resonance_frequency, synthesize_multisine, wtls_estimate, Complex64,
    Error, EstimateResult, ImpedancePoint, MultisineSpec, RandlesParams, SpectralSet,
};
use serde::{Deserialize, Serialize};

use crate::config::{check_schema, RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::record::{read_json, read_record, write_json, write_record, write_table, RecordMeta};

/// Bins whose current exceeds this multiple of the median count as excited.
const EXCITATION_FACTOR: f64 = 100.0;

pub const BODE_HEADER: [&str; 3] = ["freq_hz", "mag_ohm", "phase_deg"];
pub const NYQUIST_HEADER: [&str; 2] = ["re_ohm", "neg_im_ohm"];

/// Shared flags.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(CliError::io(&self.out))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub schema_version: String,
    pub multisine: MultisineSpec,
    pub frequencies_hz: Vec<f64>,
}

impl DesignFile {
    pub fn load(path: &Path) -> Result<MultisineSpec> {
        let file: DesignFile = read_json(path)?;
        check_schema(&file.schema_version)?;
        Ok(file.multisine)
    }
}

/// `weighting` is `"wtls"` for the iterated weighted solve and `"tls"` when
/// the record had too few periods for noise covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub schema_version: String,
    pub weighting: String,
    #[serde(flatten)]
    pub result: EstimateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub schema_version: String,
    #[serde(flatten)]
    pub params: RandlesParams,
    pub resonance_rad_s: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

pub fn design(ctx: &Context, with_signal: bool) -> Result<()> {
    let spec = ctx.config.multisine(ctx.seed)?.ok_or_else(|| {
        CliError::Usage("design needs a multisine excitation in the config".into())
    })?;
    let acq = ctx.config.acquisition;
    // Fail on Nyquist violations even when no signal is written.
    let signal = synthesize_multisine(&spec, acq.sample_rate_hz, acq.periods)?;
    ctx.prepare_out()?;
    let file = DesignFile {
        schema_version: SCHEMA_VERSION.into(),
        frequencies_hz: spec.frequencies_hz(),
        multisine: spec,
    };
    write_json(&ctx.path("multisine.json"), &file)?;
    if with_signal {
        let fs = signal.sample_rate_hz();
        let rows = signal
            .samples()
            .iter()
            .enumerate()
            .map(|(n, &i)| vec![n as f64 / fs, i]);
        write_table(&ctx.path("excitation.csv"), &["time_s", "current_a"], rows)?;
    }
    ctx.say(format!(
        "{} lines from {:.6} Hz to {:.6} Hz, period {} s",
        file.frequencies_hz.len(),
        file.frequencies_hz[0],
        file.frequencies_hz[file.frequencies_hz.len() - 1],
        file.multisine.period_s
    ));
    Ok(())
}

pub fn simulate(ctx: &Context, spec: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let excitation = match spec {
        Some(p) => Excitation::Multisine(DesignFile::load(p)?),
        None => cfg.excitation(ctx.seed)?,
    };
    let exp = Experiment {
        cell: cfg.cell,
        excitation,
        rms_a: cfg.acquisition.rms_a,
        sample_rate_hz: cfg.acquisition.sample_rate_hz,
        periods: cfg.acquisition.periods,
        current_snr: cfg.noise.current_snr,
        voltage_snr: cfg.noise.voltage_snr,
    };
    let m = exp.run(ctx.seed)?;
    let mut meta = RecordMeta::for_record(&m.current);
    meta.ocv_v = Some(cfg.cell.ocv);
    if let Some(soc) = cfg.soc {
        let trace = coulomb_count(&m.current, soc.initial_percent, soc.capacity_ah)?;
        if trace.out_of_range {
            log::warn!("state of charge leaves [0, 100] % during the record");
        }
        meta.soc_percent = Some(soc.initial_percent);
    }
    ctx.prepare_out()?;
    write_record(&ctx.path("record.csv"), &m.current, &m.voltage, &meta)?;
    ctx.say(format!(
        "{} samples ({} periods of {} s at {} Hz)",
        m.current.len(),
        meta.periods,
        meta.period_s,
        meta.sample_rate_hz
    ));
    Ok(())
}

/// Excited bins from a design file, or detected from the current spectrum.
fn excited_bins(spectra: &SpectralSet, spec: Option<&Path>) -> Result<Vec<usize>> {
    match spec {
        Some(p) => {
            let spec = DesignFile::load(p)?;
            if (spec.period_s - spectra.period_s).abs() > 1e-9 * spec.period_s {
                return Err(CliError::Usage(format!(
                    "design period {} s does not match record period {} s",
                    spec.period_s, spectra.period_s
                )));
            }
            Ok(spec.excited_bins())
        }
        None => Ok(detect_excited_bins(spectra, EXCITATION_FACTOR)),
    }
}

fn bode_rows(points: &[ImpedancePoint]) -> impl Iterator<Item = Vec<f64>> + '_ {
    points
        .iter()
        .map(|p| vec![p.freq_hz, p.magnitude(), p.phase_deg()])
}

fn nyquist_rows(points: &[ImpedancePoint]) -> impl Iterator<Item = Vec<f64>> + '_ {
    points.iter().map(|p| vec![p.z.re, -p.z.im])
}

fn write_curves(ctx: &Context, prefix: &str, points: &[ImpedancePoint]) -> Result<()> {
    write_table(
        &ctx.path(&format!("{prefix}bode.csv")),
        &BODE_HEADER,
        bode_rows(points),
    )?;
    write_table(
        &ctx.path(&format!("{prefix}nyquist.csv")),
        &NYQUIST_HEADER,
        nyquist_rows(points),
    )
}

pub fn estimate(ctx: &Context, record: &Path, spec: Option<&Path>) -> Result<()> {
    let rec = read_record(record)?;
    let spectra = per_period_spectra(&rec.current, &rec.voltage)?;
    let mut cfg = ctx.config.estimation.clone();
    if cfg.bin_mask.is_none() {
        let bins = excited_bins(&spectra, spec)?;
        if bins.is_empty() {
            log::info!("no excited bins detected; using every bin in the window");
        } else {
            cfg.bin_mask = Some(bins);
        }
    }
    let weighting = if rec.meta.periods < 2 && cfg.iterations > 0 {
        log::warn!("a single period carries no noise covariances; falling back to unweighted TLS");
        cfg.iterations = 0;
        "tls"
    } else if cfg.iterations == 0 {
        "tls"
    } else {
        "wtls"
    };
    let result = wtls_estimate(&spectra, &cfg)?;

    // Log grid over the bins used, plus the bins themselves.
    let f_lo = spectra.freq_hz[result.bins[0]];
    let f_hi = spectra.freq_hz[result.bins[result.bins.len() - 1]];
    let mut omegas = log_omega_grid(f_lo, f_hi, ctx.config.output.grid_points);
    omegas.extend(result.bins.iter().map(|&k| spectra.omega(k)));
    omegas.sort_by(f64::total_cmp);
    omegas.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let curve = parametric_impedance(&result, &omegas)?;

    ctx.prepare_out()?;
    let file = EstimateFile {
        schema_version: SCHEMA_VERSION.into(),
        weighting: weighting.into(),
        result,
    };
    write_json(&ctx.path("estimate.json"), &file)?;
    write_curves(ctx, "", &curve)?;
    let r = &file.result.rational;
    ctx.say(format!(
        "weighting  {weighting} ({} bins)",
        file.result.bins.len()
    ));
    ctx.say(format!("a          {:?}", r.a));
    ctx.say(format!("b          {:?}", r.b));
    ctx.say(format!("c          {:?}", file.result.transient));
    Ok(())
}

pub fn eis(ctx: &Context, record: &Path, spec: Option<&Path>) -> Result<()> {
    let rec = read_record(record)?;
    let spectra = per_period_spectra(&rec.current, &rec.voltage)?;
    let top = spectra.max_estimation_bin();
    let bins: Vec<usize> = excited_bins(&spectra, spec)?
        .into_iter()
        .filter(|&k| k >= 1 && k <= top)
        .collect();
    if bins.is_empty() {
        return Err(Error::EmptyBinSelection.into());
    }
    let points = nonparametric_impedance(&spectra, &bins)?;
    ctx.prepare_out()?;
    write_curves(ctx, "eis_", &points)?;
    ctx.say(format!("{} nonparametric points", points.len()));
    Ok(())
}

pub fn fit(ctx: &Context, estimate: &Path) -> Result<()> {
    let file: EstimateFile = read_json(estimate)?;
    check_schema(&file.schema_version)?;
    let out = &ctx.config.output;
    let fit = fit_randles(&file.result.rational, out.fit_max_iter, out.fit_tol)?;
    if !fit.converged {
        log::warn!(
            "ECM fit stopped after {} iterations without converging",
            fit.iterations
        );
    }
    let p = fit.params;
    let result = FitFile {
        schema_version: SCHEMA_VERSION.into(),
        params: p,
        resonance_rad_s: resonance_frequency(&p),
        residual_norm: fit.residual_norm,
        iterations: fit.iterations,
        converged: fit.converged,
        residual_history: fit.residual_history,
    };
    ctx.prepare_out()?;
    write_json(&ctx.path("fit.json"), &result)?;
    ctx.say(format!("R_S        {:.6e} ohm", p.r_s));
    ctx.say(format!("R_CT       {:.6e} ohm", p.r_ct));
    ctx.say(format!("C_DL       {:.6e} F", p.c_dl));
    ctx.say(format!("sigma      {:.6e} ohm/sqrt(s)", p.sigma_w));
    ctx.say(format!("omega_res  {:.6e} rad/s", result.resonance_rad_s));
    ctx.say(format!("residual   {:.3e}", result.residual_norm));
    Ok(())
}

fn read_bode(path: &Path) -> Result<Vec<ImpedancePoint>> {
    Ok(crate::record::read_table(path, &BODE_HEADER)?
        .into_iter()
        .map(|r| ImpedancePoint {
            freq_hz: r[0],
            z: Complex64::from_polar(r[1], r[2].to_radians()),
        })
        .collect())
}

/// Pairs of points sharing a frequency (1e-9 relative).
fn match_grids(
    reference: &[ImpedancePoint],
    other: &[ImpedancePoint],
) -> (Vec<ImpedancePoint>, Vec<ImpedancePoint>) {
    let mut sorted = other.to_vec();
    sorted.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));
    let mut refs = Vec::new();
    let mut ests = Vec::new();
    for r in reference {
        let i = sorted.partition_point(|p| p.freq_hz < r.freq_hz);
        let hit = [i.wrapping_sub(1), i]
            .into_iter()
            .filter_map(|j| sorted.get(j))
            .find(|p| (p.freq_hz - r.freq_hz).abs() <= 1e-9 * r.freq_hz.abs());
        if let Some(p) = hit {
            refs.push(*r);
            ests.push(ImpedancePoint {
                freq_hz: r.freq_hz,
                z: p.z,
            });
        }
    }
    (refs, ests)
}

pub fn compare(
    ctx: &Context,
    nonpar: &Path,
    par: Option<&Path>,
    estimate: Option<&Path>,
) -> Result<()> {
    let reference = read_bode(nonpar)?;
    let (refs, ests) = match (par, estimate) {
        (_, Some(est)) => {
            let file: EstimateFile = read_json(est)?;
            check_schema(&file.schema_version)?;
            let omegas: Vec<f64> = reference.iter().map(|p| TAU * p.freq_hz).collect();
            (reference, parametric_impedance(&file.result, &omegas)?)
        }
        (Some(par), None) => match_grids(&reference, &read_bode(par)?),
        (None, None) => return Err(CliError::Usage("compare needs --par or --estimate".into())),
    };
    if refs.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} and the parametric curve share no frequencies",
            nonpar.display()
        ))
        .into());
    }
    let curve = relative_error_curve(&refs, &ests)?;
    ctx.prepare_out()?;
    write_table(
        &ctx.path("compare.csv"),
        &["freq_hz", "rel_error"],
        curve.iter().map(|e| vec![e.freq_hz, e.rel_error]),
    )?;
    let worst = curve.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    ctx.say(format!(
        "{} common frequencies, max relative error {:.4} %",
        curve.len(),
        100.0 * worst
    ));
    Ok(())
}
