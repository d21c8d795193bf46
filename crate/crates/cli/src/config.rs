//! Run configuration: one parameter struct per subcommand, usable both as
//! command-line flags and as a JSON config file.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use polyloc_core::{ChargeLaw, WalkSpec, Window};
use serde::{Deserialize, Serialize};

/// Defaults of a flag struct, taken from its clap definitions so that a JSON
/// config and the command line agree on every omitted field.
macro_rules! defaults_from_clap {
    ($($t:ty),* $(,)?) => {$(
        impl Default for $t {
            fn default() -> Self {
                use clap::FromArgMatches;
                let cmd = <$t as Args>::augment_args(clap::Command::new("defaults").no_binary_name(true));
                let matches = cmd.try_get_matches_from(std::iter::empty::<String>()).expect("every flag has a default");
                <$t>::from_arg_matches(&matches).expect("defaults parse")
            }
        }
    )*};
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Binary,
    Gaussian,
}

impl LawName {
    pub fn law(self) -> ChargeLaw {
        match self {
            LawName::Binary => ChargeLaw::BinarySymmetric,
            LawName::Gaussian => ChargeLaw::StandardGaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WindowName {
    /// Endpoint window `[-3 sqrt(M), 8 sqrt(M)]` from size 1000 on.
    Standard,
    Full,
}

impl WindowName {
    pub fn window(self) -> Window {
        match self {
            WindowName::Standard => Window::standard(),
            WindowName::Full => Window::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum WalkName {
    Simple,
    Triple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SideName {
    Localization,
    Delocalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct WalkArgs {
    #[arg(long, value_enum, default_value = "triple")]
    pub walk: WalkName,
    /// Probability of each nonzero step of the triple walk.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Largest return time tabulated.
    #[arg(long, default_value_t = 1000)]
    pub n_max: usize,
}

impl WalkArgs {
    pub fn spec(&self) -> polyloc_core::Result<WalkSpec> {
        walk_spec(self.walk, self.p)
    }
}

pub fn walk_spec(walk: WalkName, p: f64) -> polyloc_core::Result<WalkSpec> {
    match walk {
        WalkName::Simple => Ok(WalkSpec::simple()),
        WalkName::Triple => WalkSpec::triple(p),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct TransferArgs {
    #[arg(long, default_value_t = 0.6)]
    pub lam: f64,
    #[arg(long, default_value_t = 0.44, allow_hyphen_values = true)]
    pub h: f64,
    /// Polymer size (even number of charges).
    #[arg(long, default_value_t = 2000)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub samples: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub law: LawName,
    #[arg(long, value_enum, default_value = "standard")]
    pub window: WindowName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct TestLocArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lam: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub h: f64,
    /// Polymer size of each sample.
    #[arg(long, default_value_t = 20_000)]
    pub size: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "binary")]
    pub law: LawName,
    #[arg(long, value_enum, default_value = "standard")]
    pub window: WindowName,
    #[arg(long, value_enum, default_value = "localization")]
    pub side: SideName,
    /// Evaluate the test at this statistic instead of sampling.
    #[arg(long)]
    pub u_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileDistanceArgs {
    #[arg(long, default_value_t = 0.6)]
    pub lam: f64,
    #[arg(long, default_value_t = 0.42, allow_hyphen_values = true)]
    pub h: f64,
    #[arg(long, value_delimiter = ',', default_value = "10000,100000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub samples: u64,
    #[arg(long, value_enum, default_value = "standard")]
    pub window: WindowName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalCurveArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.6")]
    pub lams: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub size: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub law: LawName,
    #[arg(long, value_enum, default_value = "standard")]
    pub window: WindowName,
    /// Partition-function level that defines the estimate.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lam: f64,
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    pub h: f64,
    #[arg(long, default_value_t = 0.03)]
    pub eps: f64,
    /// Starting stretch length; the smallest one with a bound above 1 when absent.
    #[arg(long)]
    pub a: Option<u64>,
    /// Stretch mean; the rate-optimal value when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<f64>,
    /// Charges scanned per sample before giving up.
    #[arg(long, default_value_t = 1 << 32)]
    pub cap: u64,
    /// Largest stopping time evaluated with the full transfer recursion.
    #[arg(long, default_value_t = 20_000)]
    pub transfer_cap: u64,
    #[arg(long, default_value_t = 10)]
    pub samples: u64,
    #[arg(long, value_enum, default_value = "binary")]
    pub law: LawName,
}

/// A periodic model: a copolymer when `omega` is given, homogeneous pinning otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArgs {
    /// One period of copolymer charges.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub omega: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.5)]
    pub lam: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub h: f64,
    /// Contact reward of the pinning model.
    #[arg(long, allow_hyphen_values = true)]
    pub beta0: Option<f64>,
    /// Period of the pinning model.
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    #[arg(long, value_enum, default_value = "triple")]
    pub walk: WalkName,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 10_000)]
    pub x_cut: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CurveArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,-1")]
    pub omega: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04,0.07,0.1")]
    pub lams: Vec<f64>,
    #[arg(long, value_enum, default_value = "triple")]
    pub walk: WalkName,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum PeriodicAction {
    /// Perron-Frobenius eigenvalue and regime.
    Delta(ModelArgs),
    /// Free energy of a localized model.
    FreeEnergy(ModelArgs),
    /// Asymptotic constants per endpoint residue.
    Constants(ModelArgs),
    /// Limit kernel masses and sign parameters.
    Kernels(ModelArgs),
    /// Critical curve of a copolymer over a grid of couplings.
    Curve(CurveArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct CocycleArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
    pub alphabet: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    pub nu: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Values of the function on all words of length `k + 1`, big-endian.
    #[arg(long = "f", value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1,-1,0")]
    #[serde(rename = "F")]
    pub f: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,1")]
    pub betas: Vec<f64>,
    /// Largest length of the tabulated partition functions.
    #[arg(long, default_value_t = 20)]
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct LltCheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096,10000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub ballot_n_max: usize,
}

defaults_from_clap!(
    WalkArgs,
    TransferArgs,
    TestLocArgs,
    ProfileDistanceArgs,
    CriticalCurveArgs,
    LowerBoundArgs,
    ModelArgs,
    CurveArgs,
    CocycleArgs,
    LltCheckArgs,
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Subcommand)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Return-time law of the walk.
    Walk(WalkArgs),
    /// Pinned and free log partition functions of random polymers.
    Transfer(TransferArgs),
    /// Localization test from sampled partition functions.
    TestLoc(TestLocArgs),
    /// Distance of the endpoint profile to the meander law.
    ProfileDistance(ProfileDistanceArgs),
    /// Finite-size estimates of the critical point.
    CriticalCurve(CriticalCurveArgs),
    /// Pathwise lower-bound certificates.
    LowerBound(LowerBoundArgs),
    /// Periodic model computations.
    #[command(subcommand)]
    Periodic(PeriodicAction),
    /// Coboundary decision and free energy of a Markov cocycle.
    Cocycle(CocycleArgs),
    /// Conditioned local limit theorem and ballot identity checks.
    LltCheck(LltCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Walk(_) => "walk",
            Command::Transfer(_) => "transfer",
            Command::TestLoc(_) => "test-loc",
            Command::ProfileDistance(_) => "profile-distance",
            Command::CriticalCurve(_) => "critical-curve",
            Command::LowerBound(_) => "lower-bound",
            Command::Periodic(_) => "periodic",
            Command::Cocycle(_) => "cocycle",
            Command::LltCheck(_) => "llt-check",
        }
    }

    /// Run-directory prefix: the subcommand, plus the action for `periodic`.
    pub fn label(&self) -> String {
        match self {
            Command::Periodic(action) => {
                let a = match action {
                    PeriodicAction::Delta(_) => "delta",
                    PeriodicAction::FreeEnergy(_) => "free-energy",
                    PeriodicAction::Constants(_) => "constants",
                    PeriodicAction::Kernels(_) => "kernels",
                    PeriodicAction::Curve(_) => "curve",
                };
                format!("periodic-{a}")
            }
            other => other.name().to_string(),
        }
    }
}

/// Everything that determines a run's outputs, plus where to put them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; `None` or 0 uses every core.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

pub fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Probe {
        #[command(subcommand)]
        command: Command,
    }

    fn parse(args: &[&str]) -> Command {
        Probe::try_parse_from(std::iter::once("probe").chain(args.iter().copied())).unwrap().command
    }

    #[test]
    fn json_defaults_match_flag_defaults() {
        for (name, args) in [
            ("walk", vec!["walk"]),
            ("transfer", vec!["transfer"]),
            ("test-loc", vec!["test-loc"]),
            ("profile-distance", vec!["profile-distance"]),
            ("critical-curve", vec!["critical-curve"]),
            ("lower-bound", vec!["lower-bound"]),
            ("cocycle", vec!["cocycle"]),
            ("llt-check", vec!["llt-check"]),
        ] {
            let from_json: Command = serde_json::from_str(&format!(r#"{{"command": "{name}"}}"#)).unwrap();
            assert_eq!(from_json, parse(&args), "{name}");
        }
        let curve: Command = serde_json::from_str(r#"{"command": "periodic", "action": "curve"}"#).unwrap();
        assert_eq!(curve, parse(&["periodic", "curve"]));
    }

    #[test]
    fn run_config_round_trips() {
        let config = RunConfig {
            command: parse(&["periodic", "kernels", "--beta0", "-0.5", "--period", "2"]),
            master_seed: 9,
            threads: Some(2),
            output_dir: "x".into(),
        };
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), config);
    }

    #[test]
    fn negative_values_parse() {
        match parse(&["transfer", "--h", "-0.25"]) {
            Command::Transfer(a) => assert_eq!(a.h, -0.25),
            _ => unreachable!(),
        }
    }
}
