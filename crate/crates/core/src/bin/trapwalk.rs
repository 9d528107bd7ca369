use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use trapwalk::runner::{execute, manifest_path, read_config_file, ExperimentConfig, Subcommand};
use trapwalk::Error;

#[derive(Parser)]
#[command(name = "trapwalk", version, about = "Hitting times and aging of biased walks in trap environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Rescaled hitting times of the directed trap model against the extremal marginals.
    TrapHitting(Common),
    /// Probability that the trap walk sits at the same site at times a and b.
    TrapAging(Common),
    /// Frequencies of the good-trajectory events of the trap walk.
    TrapDiagnostics(Common),
    /// Surrogate hitting times on the tree against the extremal marginals.
    TreeHitting(Common),
    /// Localization aging on the tree.
    TreeAging(Common),
    /// Law of the rescaled quenched mean hitting time.
    TreeQuenchedMean(Common),
    /// Exact walks on small trees checked against closed forms and the surrogate.
    TreeOracle(Common),
    /// Rescaled sums of a triangular array.
    Kasahara(Common),
    /// Two constructions of the extremal process compared.
    ExtremalReference(Common),
    /// J1 and M1 distances between random step paths.
    PathsDistance(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key, e.g. --set tree.size_cap=1e6 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// Tail exponent of the trap depths.
    #[arg(long)]
    gamma: Option<String>,
    /// Offspring tail index; below 2 selects the zipf family.
    #[arg(long)]
    alpha: Option<String>,
    /// Offspring family: geometric or zipf.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    b: Option<String>,
    /// Diagnostic horizon or Poisson horizon.
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Comma-separated increasing times.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long = "gamma-prime")]
    gamma_prime: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// tree-oracle check: basic, toy-aging or deep-time.
    #[arg(long)]
    check: Option<String>,
    /// CSV data file; the manifest goes next to it unless --manifest is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Record wall time in the manifest.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn pairs(&self) -> Result<Vec<(String, String)>, Error> {
        let mut pairs = match &self.config {
            Some(p) => read_config_file(p)?,
            None => Vec::new(),
        };
        let flags = [
            ("n", &self.n),
            ("beta", &self.beta),
            ("tail.gamma", &self.gamma),
            ("offspring.alpha", &self.alpha),
            ("offspring.family", &self.family),
            ("a", &self.a),
            ("b", &self.b),
            ("horizon", &self.horizon),
            ("grid", &self.grid),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("kappa", &self.kappa),
            ("gamma_prime", &self.gamma_prime),
            ("eps", &self.eps),
            ("check", &self.check),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(p) = &self.out {
            pairs.push(("out".into(), p.display().to_string()));
        }
        if let Some(p) = &self.manifest {
            pairs.push(("manifest".into(), p.display().to_string()));
        }
        if self.timing {
            pairs.push(("timing".into(), "true".into()));
        }
        Ok(pairs)
    }
}

fn split(cmd: Command) -> (Subcommand, Common) {
    match cmd {
        Command::TrapHitting(c) => (Subcommand::TrapHitting, c),
        Command::TrapAging(c) => (Subcommand::TrapAging, c),
        Command::TrapDiagnostics(c) => (Subcommand::TrapDiagnostics, c),
        Command::TreeHitting(c) => (Subcommand::TreeHitting, c),
        Command::TreeAging(c) => (Subcommand::TreeAging, c),
        Command::TreeQuenchedMean(c) => (Subcommand::TreeQuenchedMean, c),
        Command::TreeOracle(c) => (Subcommand::TreeOracle, c),
        Command::Kasahara(c) => (Subcommand::Kasahara, c),
        Command::ExtremalReference(c) => (Subcommand::ExtremalReference, c),
        Command::PathsDistance(c) => (Subcommand::PathsDistance, c),
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter { .. } | Error::Config(_) | Error::Table(_))
}

fn main() -> ExitCode {
    let (command, common) = split(Cli::parse().command);
    let cfg = match common.pairs().and_then(|p| ExperimentConfig::from_pairs(command, &p)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("trapwalk: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg) {
        Ok(out) => {
            if manifest_path(&cfg).is_none() {
                print!("{}", out.manifest.to_json_lines());
            }
            for t in &out.manifest.tests {
                eprintln!(
                    "{} {}: statistic {} bound {}",
                    if t.pass { "PASS" } else { "FAIL" },
                    t.name,
                    t.statistic,
                    t.bound
                );
            }
            if out.manifest.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("trapwalk: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
