use rayon::prelude::*;

use super::{
    CatParams, CliError, CommutatorParams, Experiment, ExperimentConfig, MeasureParams,
    OverlapParams, ProbeKind, ScaleParams, SplitParams,
};
use crate::branch::{reduce_labels, BranchState, SiteState};
use crate::measurement::{
    cat_lifetime, decoherence_report, environment_scatter, estimate_scale, infrared_dephase,
    local_environment_scatter, premeasure, split, DephasingSpec, EnvironmentSpec, MeasurementSpec,
    SplitterSpec, OBJECT_SITE,
};
use crate::operator::{commutator_scaling, Probe};
use crate::overlap::{overlap_curve, FerromagnetSpec};
use crate::series::{Axis, ScalingSeries, SeriesPoint};
use crate::C64;

/// CSV text plus the lines meant for standard output; the verdict is last.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub summary: Vec<String>,
}

/// Fitted slope against its closed-form expectation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    pub expected: f64,
    pub pass: bool,
}

impl Verdict {
    /// An exactly vanishing series passes any decaying expectation.
    fn judge(series: &ScalingSeries, expected: f64, tolerance: f64) -> Result<Self, CliError> {
        if series.is_exact_zero() {
            return Ok(Verdict {
                slope: None,
                stderr: None,
                expected,
                pass: expected < 0.0,
            });
        }
        let slope = series.slope().ok_or_else(|| {
            CliError::Runtime(
                "error: fewer than 2 points with a finite logarithm; no slope to fit".into(),
            )
        })?;
        Ok(Verdict {
            slope: Some(slope),
            stderr: series.slope_stderr(),
            expected,
            pass: (slope - expected).abs() <= tolerance,
        })
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), format_f64);
        write!(
            f,
            "slope={} stderr={} expected={} pass={}",
            opt(self.slope),
            opt(self.stderr),
            format_f64(self.expected),
            self.pass
        )
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(axis: Option<Axis>, header: &[&str]) -> Result<Self, CliError> {
        let mut buf = Vec::new();
        if let Some(axis) = axis {
            buf.extend_from_slice(format!("# axis={axis}\n").as_bytes());
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(buf);
        writer.write_record(header).map_err(csv_error)?;
        Ok(Table { writer })
    }

    fn row(&mut self, fields: &[f64]) -> Result<(), CliError> {
        self.writer
            .write_record(fields.iter().map(|&v| format_f64(v)))
            .map_err(csv_error)
    }

    fn series(mut self, series: &ScalingSeries) -> Result<String, CliError> {
        for p in series.points() {
            self.row(&[p.parameter, p.value, p.log_value])?;
        }
        self.finish()
    }

    fn finish(self) -> Result<String, CliError> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| csv_error(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV fields are ASCII"))
    }
}

fn csv_error(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("error: csv: {e}"))
}

/// Runs one sweep on the current rayon pool. Output depends only on the
/// config: points are gathered in sweep order, never completion order.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match &config.experiment {
        Experiment::Overlap(p) => run_overlap(p, config),
        Experiment::Commutator(p) => run_commutator(p, config),
        Experiment::Measure(p) => run_measure(p, config),
        Experiment::Split(p) => run_split(p, config),
        Experiment::Cat(p) => run_cat(p, config),
        Experiment::Scale(p) => run_scale(p),
    }
}

fn series_output(
    series: &ScalingSeries,
    header: &[&str],
    expected: f64,
    config: &ExperimentConfig,
) -> Result<RunOutput, CliError> {
    let csv = Table::new(Some(series.axis()), header)?.series(series)?;
    let verdict = Verdict::judge(series, expected, config.tolerance)?;
    Ok(RunOutput {
        csv,
        summary: vec![verdict.to_string()],
    })
}

fn run_overlap(p: &OverlapParams, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let template = FerromagnetSpec::new(0, p.m, p.eta)
        .with_excited_overlaps(
            p.excited_overlaps
                .iter()
                .map(|&c| C64::new(c, 0.0))
                .collect(),
        )
        .with_seed(config.seed);
    let series = overlap_curve(&template, &p.n_list)?;
    series_output(
        &series,
        &["n", "overlap", "log_overlap"],
        p.eta.ln(),
        config,
    )
}

fn run_commutator(p: &CommutatorParams, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let probe = match p.probe {
        ProbeKind::Random => Probe::Random {
            count: p.probe_count,
            seed: config.seed,
        },
        ProbeKind::SafeBasis => Probe::SafeBasis,
    };
    let series = commutator_scaling(&p.expr, p.d, &p.n_list, &probe)?;
    series_output(
        &series,
        &["n", "max_element", "log_max_element"],
        -1.0,
        config,
    )
}

fn run_measure(p: &MeasureParams, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let spec = MeasurementSpec::from_real(&p.amplitudes, p.apparatus_sites)
        .with_pointer_overlap(p.pointer_overlap);
    let apparatus: Vec<usize> = spec.apparatus().collect();
    let dephasing = if p.samples == 0 {
        DephasingSpec::analytic(p.gamma, p.t, apparatus.clone())
    } else {
        DephasingSpec::sampled(p.gamma, p.t, apparatus.clone(), config.seed, p.samples)
    };
    let (base, report) = infrared_dephase(&premeasure(&spec)?, &dephasing)?;
    let mut keep = vec![OBJECT_SITE];
    if p.keep_apparatus {
        keep.extend(&apparatus);
    }
    let rows = p
        .env_list
        .par_iter()
        .map(|&env_sites| -> crate::Result<[f64; 3]> {
            let state = environment_scatter(
                &base,
                &EnvironmentSpec {
                    env_sites,
                    kappa: p.kappa,
                },
            )?;
            let r = decoherence_report(&state, &keep, &spec)?;
            Ok([env_sites as f64, r.trace_distance, r.purity])
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let series = ScalingSeries::new(
        rows.iter().map(|r| SeriesPoint::new(r[0], r[1])).collect(),
        Axis::SemiLog,
    );

    let mut sorted = rows;
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut table = Table::new(
        Some(Axis::SemiLog),
        &[
            "env_sites",
            "trace_distance",
            "log_trace_distance",
            "purity",
        ],
    )?;
    for r in &sorted {
        table.row(&[r[0], r[1], r[1].ln(), r[2]])?;
    }
    let csv = table.finish()?;

    let mut verdict = Verdict::judge(&series, p.kappa.ln(), config.tolerance)?;
    let mut summary = Vec::new();
    if p.samples > 0 && p.gamma * p.t > 0.0 {
        let (mean, se) = report.pooled_factor();
        let within = (mean - report.analytic_factor).abs() <= p.sigmas * se;
        summary.push(format!(
            "dephasing={} stderr={} analytic={} within={within}",
            format_f64(mean),
            format_f64(se),
            format_f64(report.analytic_factor)
        ));
        verdict.pass &= within;
    }
    summary.push(verdict.to_string());
    Ok(RunOutput { csv, summary })
}

fn run_split(p: &SplitParams, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let up = SiteState::basis(2, 0)?;
    let down = SiteState::basis(2, 1)?;
    let body = BranchState::product(vec![up; p.n]);
    let kept: Vec<usize> = (0..p.n).collect();
    let rows = p
        .k_list
        .par_iter()
        .map(|&k| -> crate::Result<[f64; 3]> {
            let state = split(&body, &SplitterSpec::leading(k, down.clone())?)?;
            let before = reduce_labels(&state, &kept)?.coherence(0, 1)?;
            let scattered = local_environment_scatter(&state, p.kappa)?;
            let after = reduce_labels(&scattered, &kept)?.coherence(0, 1)?;
            Ok([k as f64, before, after])
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let series = ScalingSeries::new(
        rows.iter().map(|r| SeriesPoint::new(r[0], r[2])).collect(),
        Axis::SemiLog,
    );
    let mut sorted = rows;
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut table = Table::new(
        Some(Axis::SemiLog),
        &[
            "k",
            "coherence_before",
            "coherence_after",
            "log_coherence_after",
        ],
    )?;
    for r in &sorted {
        table.row(&[r[0], r[1], r[2], r[2].ln()])?;
    }
    let csv = table.finish()?;
    let verdict = Verdict::judge(&series, p.kappa.ln(), config.tolerance)?;
    Ok(RunOutput {
        csv,
        summary: vec![verdict.to_string()],
    })
}

fn run_cat(p: &CatParams, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let series = cat_lifetime(&p.n_list, p.gamma)?;
    series_output(&series, &["n", "half_life", "log_half_life"], -1.0, config)
}

fn run_scale(p: &ScaleParams) -> Result<RunOutput, CliError> {
    let mass = estimate_scale(p.atoms, p.atom_mass)?;
    let mut table = Table::new(None, &["atoms", "atom_mass_kg", "mass_kg"])?;
    table.row(&[p.atoms, p.atom_mass, mass])?;
    Ok(RunOutput {
        csv: table.finish()?,
        summary: vec![format!("{mass:e} kg")],
    })
}
