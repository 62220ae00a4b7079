use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "qfidkit", version, about = "Fidelity lemma checks, coherent-information bounds and coding procedures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run randomized checks of the fidelity, entropy and coding inequalities.
    Check(CheckArgs),
    /// Maximize coherent information over input states for a standard channel.
    CoherentInfo(CoherentInfoArgs),
    /// Strip the support of a density operator into a fidelity-ordered ensemble.
    Strip(StripArgs),
    /// Extract an isometric encoding from a general encoding and decoder.
    Extract(ExtractArgs),
    /// Typical-subspace weight and dimension of an i.i.d. source.
    Typical(TypicalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Lemma {
    All,
    Convexity,
    Composition,
    CloseFinal,
    FeContinuity,
    EntropyContinuity,
    CondEntropyContinuity,
    Compression,
    ThreeHalves,
    Isometry,
    Fcc,
    EncodingIrrelevance,
}

impl Lemma {
    pub const SECTIONS: [Lemma; 11] = [
        Lemma::Convexity,
        Lemma::Composition,
        Lemma::CloseFinal,
        Lemma::FeContinuity,
        Lemma::EntropyContinuity,
        Lemma::CondEntropyContinuity,
        Lemma::Compression,
        Lemma::ThreeHalves,
        Lemma::Isometry,
        Lemma::Fcc,
        Lemma::EncodingIrrelevance,
    ];

    pub fn name(self) -> String {
        self.to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string()
    }
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub lemma: Lemma,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Largest dimension; trials cycle through 2..=dim.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CoherentInfoArgs {
    #[arg(long)]
    pub channel: String,
    /// Comma-separated values or an inclusive range `start:stop:step`.
    #[arg(long, default_value = "0")]
    pub param: String,
    /// Comma-separated block lengths.
    #[arg(long, default_value = "1")]
    pub n: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StripArgs {
    /// JSON file with `rho`, `op` and optional `n0`.
    #[arg(long, conflicts_with_all = ["channel", "base"])]
    pub input: Option<PathBuf>,
    /// Standard channel used when no input file is given.
    #[arg(long, default_value = "dephasing")]
    pub channel: String,
    #[arg(long, default_value_t = 0.2)]
    pub param: f64,
    /// Diagonal of the input state; uniform when omitted.
    #[arg(long)]
    pub base: Option<String>,
    /// Number of states to remove.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// JSON file with `rho`, `E` and `A`.
    #[arg(long, conflicts_with_all = ["dim", "param", "base"])]
    pub input: Option<PathBuf>,
    /// Channel input dimension of the built-in qubit fixture.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Noise strength mixed into the fixture encoding; 0 gives perfect
    /// transmission.
    #[arg(long)]
    pub param: Option<f64>,
    /// Diagonal of the source state; uniform when omitted.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TypicalArgs {
    /// Comma-separated base spectrum.
    #[arg(long)]
    pub base: String,
    /// Comma-separated block lengths.
    #[arg(long)]
    pub n: String,
    #[arg(long)]
    pub eps: f64,
    /// `δ` for the dimension lower bound.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
