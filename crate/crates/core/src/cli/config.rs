//! Run configuration: a flat TOML file and command-line flags with the same key names.
//! Flags win over the file, the file wins over defaults, and each value remembers where
//! it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::DEFAULT_SEED;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TWOWELL_OUT";
const OUT_FALLBACK: &str = "twowell-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    Wells,
    Energy,
    Minimize,
    Layer,
    Scaling,
    SurfaceScaling,
    Spin,
    Coarea,
    Rigidity,
    PerturbGrid,
    Verify,
    Calibrate,
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Wells => "wells",
            Command::Energy => "energy",
            Command::Minimize => "minimize",
            Command::Layer => "layer",
            Command::Scaling => "scaling",
            Command::SurfaceScaling => "surface-scaling",
            Command::Spin => "spin",
            Command::Coarea => "coarea",
            Command::Rigidity => "rigidity",
            Command::PerturbGrid => "perturb-grid",
            Command::Verify => "verify",
            Command::Calibrate => "calibrate",
            Command::Export => "export",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Flag,
}

/// Comma-separated on the command line, an array in the file.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<T>().map_err(|_| format!("bad list entry `{}`", t.trim())))
            .collect::<std::result::Result<Vec<T>, String>>()
            .map(List)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for List<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Vec::<T>::deserialize(d).map(List)
    }
}

impl<T: Serialize> Serialize for List<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Declares every key once: the file schema, the flag set, the resolved config and the merge.
macro_rules! keys {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr; )*) => {
        /// Contents of a config file. Unknown keys are rejected.
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct FileConfig {
            pub command: Option<Command>,
            $( pub $name: Option<$ty>, )*
        }

        /// One flag per config key.
        #[derive(Debug, Default, Clone, clap::Args)]
        pub struct Flags {
            $( $(#[doc = $doc])* #[arg(long = stringify!($name))] pub $name: Option<$ty>, )*
        }

        /// Validated configuration of one run.
        #[derive(Clone, Debug, Serialize)]
        pub struct RunConfig {
            pub command: Command,
            $( pub $name: $ty, )*
            /// Where each value came from.
            pub provenance: BTreeMap<String, Source>,
        }

        impl RunConfig {
            fn merge(command: Command, file: FileConfig, flags: Flags) -> Self {
                let mut provenance = BTreeMap::new();
                provenance.insert("command".to_string(), if file.command.is_some() { Source::File } else { Source::Flag });
                $(
                    let $name: $ty = match (flags.$name, file.$name) {
                        (Some(v), _) => { provenance.insert(stringify!($name).to_string(), Source::Flag); v }
                        (None, Some(v)) => { provenance.insert(stringify!($name).to_string(), Source::File); v }
                        (None, None) => { provenance.insert(stringify!($name).to_string(), Source::Default); $default }
                    };
                )*
                RunConfig { command, $( $name, )* provenance }
            }

            /// Every key in declaration order, for documentation and echo.
            pub fn keys() -> &'static [&'static str] {
                &[$( stringify!($name), )*]
            }
        }
    };
}

keys! {
    /// Lattice parameter a > 1
    a: f64 = std::f64::consts::SQRT_2;
    /// Volume fraction λ ∈ (0,1] of the boundary data
    lambda: f64 = 0.5;
    /// Resolution
    n: u32 = 16;
    /// Resolutions of a study, comma-separated
    n_list: List<u32> = List(vec![16, 32, 64]);
    /// Domain extent along the interface direction
    domain_d: f64 = 4.0;
    /// Domain extent across it
    domain_l: f64 = 1.0;
    /// Domain orientation: + or -
    domain_sign: String = "+".into();
    /// clamped or free
    domain_ends: String = "clamped".into();
    /// tilde, truncated or one_well
    density: String = "truncated".into();
    /// lbfgs or gradient_descent
    method: String = "lbfgs".into();
    /// Iteration cap per minimization stage
    max_iters: usize = 300;
    /// Run the smoothing continuation before the exact minimization
    smoothing: bool = true;
    /// Starting state: affine, laminate or perturbed
    init: String = "affine".into();
    /// Sup amplitude of the random perturbation, in units of 1/n
    amplitude: f64 = 0.0;
    /// Master seed
    seed: u64 = DEFAULT_SEED;
    /// Restarts of the surface scaling study
    restarts: usize = 5;
    /// Layer kind: B+, B-, C+ or C-
    kind: String = "C+".into();
    /// Left state of a layer: data, U0, QU1 or QtU1
    left: String = "U0".into();
    /// Right state of a layer
    right: String = "QU1".into();
    /// Strip extent along the interface
    m1: f64 = 1.0;
    /// Strip extent across the interface
    m2: f64 = 1.0;
    /// Extents along the interface for the scaling study
    m1_list: List<f64> = List(vec![1.0, 2.0]);
    /// Extents across the interface for the scaling study
    m2_list: List<f64> = List(vec![1.0, 2.0]);
    /// Bad-pair fraction θ of the grid recursion
    theta: f64 = 0.25;
    /// Step cap of the recursion
    m_max: usize = 100_000;
    /// Intervals in the chain simulation
    chain_length: usize = 50;
    /// Cells per interval in the chain simulation
    resolution: usize = 1000;
    /// worst_case or uniform
    placement: String = "worst_case".into();
    /// Neighbors sharing θ in the chain simulation
    neighbors: usize = 1;
    /// Sampled pairs of the rigidity diagnostic
    samples: usize = 10_000;
    /// Needle width of the default rigidity configuration
    needle_width: f64 = 0.05;
    /// Needle half-length of the default rigidity configuration
    needle_half_length: f64 = 0.1;
    /// Coarea field: density or distance
    field: String = "density".into();
    /// Deformation file to read instead of building a state
    input: String = String::new();
    /// Output directory (default: $TWOWELL_OUT or twowell-out)
    out: String = std::env::var(OUT_ENV).unwrap_or_else(|_| OUT_FALLBACK.into());
    /// Fixture file; the bundled one when empty. calibrate writes here.
    fixture: String = String::new();
    /// Randomized inequality suite size
    suite_size: usize = 1000;
    /// Random part of the spin suite
    spin_suite_size: usize = 200;
    /// Estimate the layer table during calibrate
    layers: bool = false;
}

fn toml_line(text: &str, err: &toml::de::Error) -> usize {
    err.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0)
}

pub fn parse_file(text: &str) -> Result<FileConfig> {
    toml::from_str(text).map_err(|e| Error::Parse { line: toml_line(text, &e), msg: e.message().to_string() })
}

/// Reads the optional file, applies the flags and validates.
pub fn parse_config(command: Option<Command>, file: Option<&Path>, flags: Flags) -> Result<RunConfig> {
    let fc = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_file(&text)?
        }
        None => FileConfig::default(),
    };
    let cmd = match (command, fc.command) {
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => return Err(Error::Config("no command given (flag or `command` key)".into())),
    };
    let from_flag = command.is_some();
    let mut cfg = RunConfig::merge(cmd, fc, flags);
    if from_flag {
        cfg.provenance.insert("command".into(), Source::Flag);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn one_of(key: &str, v: &str, allowed: &[&str]) -> Result<()> {
    if allowed.contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be one of {}, got `{v}`", allowed.join(", "))))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda out of range: λ ∈ (0,1] required, got {}", self.lambda)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Config(format!("a out of range: a > 0 required, got {}", self.a)));
        }
        if self.n == 0 || self.n_list.0.contains(&0) || self.n_list.0.is_empty() {
            return Err(Error::Config("resolutions must be positive: n ≥ 1".into()));
        }
        if !(self.domain_d > 0.0 && self.domain_l > 0.0) {
            return Err(Error::Config("domain extents must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta out of range: θ ∈ [0,1) required, got {}", self.theta)));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::Config(format!("amplitude must be ≥ 0, got {}", self.amplitude)));
        }
        one_of("domain_sign", &self.domain_sign, &["+", "-"])?;
        one_of("domain_ends", &self.domain_ends, &["clamped", "free"])?;
        one_of("density", &self.density, &["tilde", "truncated", "one_well"])?;
        one_of("method", &self.method, &["lbfgs", "gradient_descent"])?;
        one_of("init", &self.init, &["affine", "laminate", "perturbed"])?;
        one_of("placement", &self.placement, &["worst_case", "uniform"])?;
        one_of("field", &self.field, &["density", "distance"])?;
        one_of("kind", &self.kind, &["B+", "B-", "C+", "C-"])?;
        for (key, v) in [("left", &self.left), ("right", &self.right)] {
            one_of(key, v, &["data", "U0", "U1", "QU1", "QtU1"])?;
        }
        if !self.input.is_empty() && !Path::new(&self.input).is_file() {
            return Err(Error::Config(format!("input file {} does not exist", self.input)));
        }
        if self.command == Command::Export && self.input.is_empty() {
            return Err(Error::Config("export needs an input deformation file".into()));
        }
        if self.command == Command::Verify && !self.fixture.is_empty() && !Path::new(&self.fixture).is_file() {
            return Err(Error::Config(format!("fixture file {} does not exist", self.fixture)));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    /// The resolved configuration with provenance, as echoed into the manifest.
    pub fn echo(&self) -> serde_json::Value {
        let v = serde_json::to_value(self).expect("config serializes");
        let prov = &v["provenance"];
        let mut out = serde_json::Map::new();
        if let serde_json::Value::Object(m) = &v {
            for (k, val) in m.iter().filter(|(k, _)| *k != "provenance") {
                out.insert(k.clone(), serde_json::json!({ "value": val, "source": prov[k] }));
            }
        }
        serde_json::Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct T {
        #[command(flatten)]
        flags: Flags,
    }

    fn flags(args: &[&str]) -> Flags {
        T::parse_from(std::iter::once("t").chain(args.iter().copied())).flags
    }

    #[test]
    fn minimal_flags_fill_defaults() {
        let cfg = parse_config(Some(Command::Energy), None, flags(&["--a", "1.4142135", "--lambda", "0.5", "--n", "16"])).unwrap();
        assert_eq!(cfg.n, 16);
        assert_eq!(cfg.density, "truncated");
        assert_eq!(cfg.provenance["a"], Source::Flag);
        assert_eq!(cfg.provenance["density"], Source::Default);
    }

    #[test]
    fn lambda_bound_is_named() {
        let e = parse_config(Some(Command::Energy), None, flags(&["--lambda", "1.5"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("λ ∈ (0,1]"), "{e}");
    }

    #[test]
    fn flag_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "command = \"energy\"\nn = 8\nn_list = [8, 16]\ndensity = \"tilde\"\n").unwrap();
        let cfg = parse_config(None, Some(&p), flags(&["--n", "12"])).unwrap();
        assert_eq!(cfg.n, 12);
        assert_eq!(cfg.n_list, List(vec![8, 16]));
        let echo = cfg.echo();
        assert_eq!(echo["n"]["source"], "flag");
        assert_eq!(echo["density"]["source"], "file");
        assert_eq!(echo["density"]["value"], "tilde");
        assert_eq!(echo["lambda"]["source"], "default");
        assert_eq!(echo["command"]["source"], "file");
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let e = parse_file("n = 8\nbogus = 1\n").unwrap_err();
        match e {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn list_flags_split_on_commas() {
        let f = flags(&["--n_list", "8,16, 32", "--m1_list", "1,2"]);
        assert_eq!(f.n_list.unwrap().0, vec![8, 16, 32]);
        assert_eq!(f.m1_list.unwrap().0, vec![1.0, 2.0]);
    }

    #[test]
    fn every_key_is_a_flag() {
        let cmd = <T as clap::CommandFactory>::command();
        for k in RunConfig::keys() {
            assert!(cmd.get_arguments().any(|a| a.get_long() == Some(k)), "{k}");
        }
    }
}
