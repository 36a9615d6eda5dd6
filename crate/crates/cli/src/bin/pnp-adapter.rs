//! Reference denoiser adapter speaking the `PNPD` protocol over stdin/stdout.
//! Useful as a test peer and as a template for wrapping other denoisers.

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pnp_core::denoise::protocol::serve;
use pnp_core::denoise::{AdaptiveSmoothing, Denoiser, IdentityDenoiser, PriorMean, QuadraticPrior};
use pnp_core::{Error, ImageTensor, NoiseLevelMap};

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    /// Returns the input unchanged.
    Passthrough,
    /// Closed-form denoiser of the quadratic prior.
    Quadratic,
    /// Adaptive Gaussian smoothing.
    Smoothing,
    /// Rejects every request (exercises error statuses).
    Fail,
}

#[derive(Parser)]
#[command(name = "pnp-adapter", version, about = "PNPD protocol adapter")]
struct Args {
    #[arg(long, value_enum, default_value = "passthrough")]
    backend: Backend,
    #[arg(long, default_value_t = QuadraticPrior::default_kappa())]
    kappa: f64,
    #[arg(long, default_value_t = QuadraticPrior::default_mean())]
    mean: f64,
    #[arg(long, default_value_t = AdaptiveSmoothing::default_beta())]
    beta: f64,
    #[arg(long, default_value_t = AdaptiveSmoothing::default_h_max())]
    h_max: f64,
}

struct Failing;

impl Denoiser for Failing {
    fn denoise(&mut self, _: &ImageTensor, _: &NoiseLevelMap) -> pnp_core::Result<ImageTensor> {
        Err(Error::Config("backend configured to fail".into()))
    }

    fn name(&self) -> &str {
        "fail"
    }
}

fn build(args: &Args) -> pnp_core::Result<Box<dyn Denoiser>> {
    Ok(match args.backend {
        Backend::Passthrough => Box::new(IdentityDenoiser),
        Backend::Quadratic => Box::new(QuadraticPrior::new(
            args.kappa,
            PriorMean::Constant(args.mean),
        )?),
        Backend::Smoothing => Box::new(AdaptiveSmoothing::new(args.beta, args.h_max)?),
        Backend::Fail => Box::new(Failing),
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut backend = match build(&args) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("pnp-adapter: {e}");
            return ExitCode::from(2);
        }
    };
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    match serve(|u, s| backend.denoise(u, s), &mut input, &mut output) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pnp-adapter: {e}");
            ExitCode::FAILURE
        }
    }
}
