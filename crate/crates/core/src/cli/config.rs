use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};

use super::{
    CatParams, CliError, CommutatorParams, Experiment, ExperimentConfig, MeasureParams,
    OverlapParams, ProbeKind, ScaleParams, SplitParams,
};
use crate::operator::{build_site_matrices, parse_operator};

/// Default worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "SUPERSEL_THREADS";

const DEFAULT_SEED: u64 = 42;
const DEFAULT_TOLERANCE: f64 = 1e-6;

struct Key {
    name: &'static str,
    help: &'static str,
}

const COMMON: &[Key] = &[
    Key {
        name: "seed",
        help: "RNG seed [default: 42]",
    },
    Key {
        name: "out",
        help: "CSV output path [default: <subcommand>.csv]",
    },
    Key {
        name: "threads",
        help: "worker threads [default: $SUPERSEL_THREADS, else all cores]",
    },
    Key {
        name: "tolerance",
        help: "allowed |slope - expected| [default: 1e-6]",
    },
];

struct Spec {
    name: &'static str,
    about: &'static str,
    columns: &'static str,
    keys: &'static [Key],
}

const SUBCOMMANDS: &[Spec] = &[
    Spec {
        name: "overlap",
        about: "Overlap of two magnetization states against N (semi-log; expected slope ln eta)",
        columns: "CSV columns: n, overlap, log_overlap",
        keys: &[
            Key { name: "eta", help: "per-site vacuum overlap in [0, 1] (required)" },
            Key { name: "m", help: "number of excited sites [default: 0]" },
            Key { name: "n-list", help: "comma-separated site counts (required)" },
            Key { name: "excited-overlaps", help: "comma-separated overlaps of the m excited sites [default: eta each]" },
        ],
    },
    Spec {
        name: "commutator",
        about: "Largest [X, P] matrix element against N (log-log; expected slope -1)",
        columns: "CSV columns: n, max_element, log_max_element",
        keys: &[
            Key { name: "expr", help: "operator polynomial, e.g. \"x1*p2^2 - 0.5 p1\" (required)" },
            Key { name: "d", help: "oscillator truncation, 2..=64 [default: 16]" },
            Key { name: "n-list", help: "comma-separated particle counts (required)" },
            Key { name: "probe", help: "random | safe-basis [default: random]" },
            Key { name: "probe-count", help: "random probe vectors [default: 3]" },
        ],
    },
    Spec {
        name: "measure",
        about: "Distance of the object-apparatus state from the pointer mixture against environment size (semi-log; expected slope ln kappa)",
        columns: "CSV columns: env_sites, trace_distance, log_trace_distance, purity",
        keys: &[
            Key { name: "amplitudes", help: "comma-separated real outcome amplitudes, squares summing to 1 (required)" },
            Key { name: "apparatus-sites", help: "pointer sites [default: 1]" },
            Key { name: "pointer-overlap", help: "per-site overlap of distinct pointer states [default: 0]" },
            Key { name: "kappa", help: "per-site overlap of environment records (required)" },
            Key { name: "env-list", help: "comma-separated environment sizes (required)" },
            Key { name: "keep-apparatus", help: "keep the apparatus alongside the object: true | false [default: false]" },
            Key { name: "gamma", help: "dephasing rate of each apparatus site [default: 0]" },
            Key { name: "t", help: "dephasing time [default: 0]" },
            Key { name: "samples", help: "Monte-Carlo phase samples per site; 0 is analytic [default: 0]" },
            Key { name: "sigmas", help: "standard errors allowed for a sampled factor [default: 3]" },
        ],
    },
    Spec {
        name: "split",
        about: "Branch coherence after k-local splits and local scattering against k (semi-log; expected slope ln kappa)",
        columns: "CSV columns: k, coherence_before, coherence_after, log_coherence_after",
        keys: &[
            Key { name: "n", help: "body sites (required)" },
            Key { name: "k-list", help: "comma-separated splitter localities, each in 1..=n (required)" },
            Key { name: "kappa", help: "per-site overlap of environment records (required)" },
        ],
    },
    Spec {
        name: "cat",
        about: "Cat-state coherence half-life against N (log-log; expected slope -1)",
        columns: "CSV columns: n, half_life, log_half_life",
        keys: &[
            Key { name: "gamma", help: "per-site dephasing rate (required)" },
            Key { name: "n-list", help: "comma-separated site counts (required)" },
        ],
    },
    Spec {
        name: "scale",
        about: "Mass of a body of identical atoms",
        columns: "CSV columns: atoms, atom_mass_kg, mass_kg",
        keys: &[
            Key { name: "atoms", help: "number of atoms (required)" },
            Key { name: "atom-mass", help: "mass per atom in kg (required)" },
        ],
    },
];

/// The clap command tree; every value is taken as text and typed later so
/// that file and flag values share one validation path.
pub fn command() -> Command {
    let mut cmd = Command::new("supersel")
        .about("Finite-N experiments on emergent superselection")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for spec in SUBCOMMANDS {
        let mut sub = Command::new(spec.name)
            .about(spec.about)
            .after_help(spec.columns)
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("PATH")
                    .help("`key = value` file; flags override its values"),
            );
        for key in spec.keys.iter().chain(COMMON) {
            sub = sub.arg(
                Arg::new(key.name)
                    .long(key.name)
                    .value_name("VALUE")
                    .allow_negative_numbers(true)
                    .help(key.help),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

pub fn parse_config<I, T>(argv: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse_config_with_env(argv, std::env::var(THREADS_ENV).ok())
}

/// As [`parse_config`], with the `SUPERSEL_THREADS` value passed explicitly.
pub fn parse_config_with_env<I, T>(
    argv: I,
    env_threads: Option<String>,
) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command()
        .try_get_matches_from(argv)
        .map_err(|e| match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                CliError::Help(e.render().to_string())
            }
            _ => CliError::Usage(e.render().to_string().trim_end().to_string()),
        })?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let spec = SUBCOMMANDS
        .iter()
        .find(|s| s.name == name)
        .expect("known subcommand");
    let mut raw = Raw::collect(spec, sub)?;

    let experiment = match name {
        "overlap" => Experiment::Overlap(overlap(&mut raw)?),
        "commutator" => Experiment::Commutator(commutator(&mut raw)?),
        "measure" => Experiment::Measure(measure(&mut raw)?),
        "split" => Experiment::Split(split(&mut raw)?),
        "cat" => Experiment::Cat(cat(&mut raw)?),
        "scale" => Experiment::Scale(scale(&mut raw)?),
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    let seed = raw.or("seed", DEFAULT_SEED)?;
    let output_path = raw
        .take("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    let threads = match raw.opt::<usize>("threads")? {
        Some(t) => Some(t),
        None => env_threads
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| CliError::key(THREADS_ENV, format!("{v:?}: {e}")))
            })
            .transpose()?,
    };
    if threads == Some(0) {
        return Err(CliError::key("threads", "must be at least 1"));
    }
    let tolerance: f64 = raw.or("tolerance", DEFAULT_TOLERANCE)?;
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(CliError::key(
            "tolerance",
            format!("{tolerance} must be positive"),
        ));
    }
    Ok(ExperimentConfig {
        experiment,
        seed,
        output_path,
        threads,
        tolerance,
    })
}

/// Merged textual values, file first and flags on top.
struct Raw {
    values: BTreeMap<&'static str, String>,
}

impl Raw {
    fn collect(spec: &Spec, sub: &ArgMatches) -> Result<Self, CliError> {
        let known = |k: &str| {
            spec.keys
                .iter()
                .chain(COMMON)
                .map(|key| key.name)
                .find(|n| *n == k)
        };
        let mut values = BTreeMap::new();
        if let Some(path) = sub.get_one::<String>("config") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::key("config", format!("cannot read {path}: {e}")))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::key(
                        "config",
                        format!("{path}:{}: expected `key = value`", lineno + 1),
                    )
                })?;
                let k = k.trim().replace('_', "-");
                let name = known(&k).ok_or_else(|| {
                    CliError::key(
                        &k,
                        format!("unknown key for `{}` in {path}:{}", spec.name, lineno + 1),
                    )
                })?;
                values.insert(name, v.trim().to_string());
            }
        }
        for key in spec.keys.iter().chain(COMMON) {
            if let Some(v) = sub.get_one::<String>(key.name) {
                values.insert(key.name, v.clone());
            }
        }
        Ok(Raw { values })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key).map(|v| parse_value(key, &v)).transpose()
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| missing(key))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)
            .map(|v| {
                v.split(',')
                    .map(|item| parse_value(key, item.trim()))
                    .collect::<Result<Vec<T>, _>>()
            })
            .transpose()
    }

    fn req_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.list(key)?.ok_or_else(|| missing(key))
    }
}

fn missing(key: &str) -> CliError {
    CliError::key(key, "missing required key")
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| {
        CliError::key(
            key,
            format!("cannot parse {v:?} as {}: {e}", std::any::type_name::<T>()),
        )
    })
}

fn unit_interval(key: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::key(key, format!("{v} is outside [0, 1]")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::key(
            key,
            format!("{v} must be finite and non-negative"),
        ))
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::key(
            key,
            format!("{v} must be finite and positive"),
        ))
    }
}

fn at_least_one<T: PartialOrd + From<u8> + std::fmt::Display>(
    key: &str,
    list: &[T],
) -> Result<(), CliError> {
    if list.is_empty() {
        return Err(CliError::key(key, "empty list"));
    }
    if let Some(v) = list.iter().find(|v| **v < T::from(1)) {
        return Err(CliError::key(key, format!("{v} must be at least 1")));
    }
    Ok(())
}

fn overlap(raw: &mut Raw) -> Result<OverlapParams, CliError> {
    let eta = unit_interval("eta", raw.req("eta")?)?;
    let m: usize = raw.or("m", 0)?;
    let n_list: Vec<usize> = raw.req_list("n-list")?;
    at_least_one("n-list", &n_list)?;
    let smallest = *n_list.iter().min().expect("non-empty");
    if m >= smallest {
        return Err(CliError::key(
            "m",
            format!("m = {m} must be below every N (smallest is {smallest})"),
        ));
    }
    let excited_overlaps: Vec<f64> = raw.list("excited-overlaps")?.unwrap_or_default();
    if !excited_overlaps.is_empty() && excited_overlaps.len() != m {
        return Err(CliError::key(
            "excited-overlaps",
            format!("{} values for m = {m}", excited_overlaps.len()),
        ));
    }
    if let Some(c) = excited_overlaps.iter().find(|c| !(c.abs() <= 1.0)) {
        return Err(CliError::key("excited-overlaps", format!("|{c}| > 1")));
    }
    Ok(OverlapParams {
        eta,
        m,
        n_list,
        excited_overlaps,
    })
}

fn commutator(raw: &mut Raw) -> Result<CommutatorParams, CliError> {
    let text: String = raw.req("expr")?;
    let expr =
        parse_operator(&text).map_err(|e| CliError::key("expr", format!("{e} in {text:?}")))?;
    let d: usize = raw.or("d", 16)?;
    build_site_matrices(d).map_err(|e| CliError::key("d", e))?;
    let n_list: Vec<u64> = raw.req_list("n-list")?;
    if n_list.is_empty() {
        return Err(CliError::key("n-list", "empty list"));
    }
    let smallest = *n_list.iter().min().expect("non-empty");
    if let Some(&site) = expr.support().iter().next_back() {
        if u64::from(site) > smallest {
            return Err(CliError::key(
                "n-list",
                format!("N = {smallest} is below the operator's largest site {site}"),
            ));
        }
    }
    if smallest == 0 {
        return Err(CliError::key("n-list", "0 must be at least 1"));
    }
    let probe = match raw.take("probe").as_deref() {
        None | Some("random") => ProbeKind::Random,
        Some("safe-basis") => ProbeKind::SafeBasis,
        Some(other) => {
            return Err(CliError::key(
                "probe",
                format!("{other:?} is not random or safe-basis"),
            ))
        }
    };
    let probe_count: usize = raw.or("probe-count", 3)?;
    if probe_count == 0 {
        return Err(CliError::key("probe-count", "must be at least 1"));
    }
    Ok(CommutatorParams {
        expr,
        d,
        n_list,
        probe,
        probe_count,
    })
}

fn measure(raw: &mut Raw) -> Result<MeasureParams, CliError> {
    let amplitudes: Vec<f64> = raw.req_list("amplitudes")?;
    let total: f64 = amplitudes.iter().map(|a| a * a).sum();
    if !((total - 1.0).abs() <= 1e-10) {
        return Err(CliError::key(
            "amplitudes",
            format!("squares sum to {total}, expected 1"),
        ));
    }
    let apparatus_sites: usize = raw.or("apparatus-sites", 1)?;
    let pointer_overlap = unit_interval("pointer-overlap", raw.or("pointer-overlap", 0.0)?)?;
    let kappa = unit_interval("kappa", raw.req("kappa")?)?;
    let env_list: Vec<usize> = raw.req_list("env-list")?;
    if env_list.is_empty() {
        return Err(CliError::key("env-list", "empty list"));
    }
    let keep_apparatus: bool = raw.or("keep-apparatus", false)?;
    let gamma = non_negative("gamma", raw.or("gamma", 0.0)?)?;
    let t = non_negative("t", raw.or("t", 0.0)?)?;
    let samples: usize = raw.or("samples", 0)?;
    let outcomes = amplitudes.iter().filter(|a| **a != 0.0).count();
    if samples > 0 && gamma * t > 0.0 && outcomes != 2 {
        return Err(CliError::key(
            "samples",
            format!("sampled dephasing needs two outcomes, got {outcomes}"),
        ));
    }
    let sigmas = positive("sigmas", raw.or("sigmas", 3.0)?)?;
    Ok(MeasureParams {
        amplitudes,
        apparatus_sites,
        pointer_overlap,
        kappa,
        env_list,
        keep_apparatus,
        gamma,
        t,
        samples,
        sigmas,
    })
}

fn split(raw: &mut Raw) -> Result<SplitParams, CliError> {
    let n: usize = raw.req("n")?;
    if n == 0 {
        return Err(CliError::key("n", "must be at least 1"));
    }
    let k_list: Vec<usize> = raw.req_list("k-list")?;
    at_least_one("k-list", &k_list)?;
    if let Some(k) = k_list.iter().find(|&&k| k > n) {
        return Err(CliError::key("k-list", format!("k = {k} exceeds n = {n}")));
    }
    let kappa = unit_interval("kappa", raw.req("kappa")?)?;
    Ok(SplitParams { n, k_list, kappa })
}

fn cat(raw: &mut Raw) -> Result<CatParams, CliError> {
    let gamma = positive("gamma", raw.req("gamma")?)?;
    let n_list: Vec<usize> = raw.req_list("n-list")?;
    at_least_one("n-list", &n_list)?;
    Ok(CatParams { gamma, n_list })
}

fn scale(raw: &mut Raw) -> Result<ScaleParams, CliError> {
    let atoms = positive("atoms", raw.req("atoms")?)?;
    let atom_mass = positive("atom-mass", raw.req("atom-mass")?)?;
    Ok(ScaleParams { atoms, atom_mass })
}
