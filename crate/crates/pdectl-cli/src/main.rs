//! Command-line front end: dataset generation, training, trajectory
//! reconstruction, shooting baselines, evaluation tables and frame export.

mod ckpt;
mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pdectl", version, about = "Differentiable-physics PDE control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a manifest (or built-in defaults).
    Gen {
        /// Experiment kind: burger | fluid_natural | fluid_shapes | fluid_indirect.
        #[arg(long)]
        experiment: Option<String>,
        /// Manifest to start from; command-line flags override its values.
        #[arg(long)]
        manifest: Option<std::path::PathBuf>,
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of training examples.
        #[arg(long)]
        train_count: Option<usize>,
        /// Override the number of test examples.
        #[arg(long)]
        test_count: Option<usize>,
        /// Override the grid resolution (e.g. "32" or "32x32").
        #[arg(long)]
        grid: Option<String>,
        /// Override the number of solver steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train networks on a generated dataset.
    Train {
        /// Dataset directory (with manifest.json).
        #[arg(long)]
        data: std::path::PathBuf,
        /// Training stage: supervised | diffphys.
        #[arg(long)]
        stage: String,
        /// Scheme for end-to-end training: chain | staggered | refined.
        #[arg(long)]
        scheme: Option<String>,
        /// Checkpoint to initialize from.
        #[arg(long)]
        init: Option<std::path::PathBuf>,
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long, default_value_t = false)]
        resume: bool,
        /// Sequence length used by end-to-end unrolls.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Reconstruct a trajectory for one dataset example.
    Reconstruct {
        #[arg(long)]
        data: std::path::PathBuf,
        /// Example index.
        #[arg(long, default_value_t = 0)]
        example: usize,
        /// Checkpoint with the networks to use.
        #[arg(long)]
        ckpt: Option<std::path::PathBuf>,
        /// chain | staggered | refined | two_stage.
        #[arg(long, default_value = "staggered")]
        scheme: String,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Timing repetitions (after 3 warm-ups).
        #[arg(long, default_value_t = 20)]
        timing_reps: usize,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Optimize controls directly for one dataset example.
    Shoot {
        #[arg(long)]
        data: std::path::PathBuf,
        #[arg(long, default_value_t = 0)]
        example: usize,
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reconstruction directory whose forces seed the optimization.
        #[arg(long)]
        warm_start: Option<std::path::PathBuf>,
        /// Coarse-to-fine fractions, e.g. "0.25,0.5,1".
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Objective weight on the force term.
        #[arg(long)]
        alpha: Option<f64>,
        /// Blur radius for the observation loss.
        #[arg(long)]
        blur: Option<f64>,
    },
    /// Evaluate methods over the test split and write a results table.
    Eval {
        #[arg(long)]
        data: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Method spec `name:scheme:ckpt`, repeatable.
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Export tensor files as grayscale frames.
    Render {
        /// A .pdtf file or a directory of them.
        #[arg(long)]
        input: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen {
            experiment,
            manifest,
            out,
            seed,
            train_count,
            test_count,
            grid,
            steps,
        } => commands::gen(
            experiment, manifest, out, seed, train_count, test_count, grid, steps,
        ),
        Command::Train {
            data,
            stage,
            scheme,
            init,
            out,
            iters,
            lr,
            seed,
            resume,
            horizon,
        } => commands::train(data, stage, scheme, init, out, iters, lr, seed, resume, horizon),
        Command::Reconstruct {
            data,
            example,
            ckpt,
            scheme,
            out,
            timing_reps,
            horizon,
        } => commands::reconstruct(data, example, ckpt, scheme, out, timing_reps, horizon),
        Command::Shoot {
            data,
            example,
            out,
            iters,
            lr,
            seed,
            warm_start,
            schedule,
            horizon,
            alpha,
            blur,
        } => commands::shoot(
            data, example, out, iters, lr, seed, warm_start, schedule, horizon, alpha, blur,
        ),
        Command::Eval {
            data,
            out,
            methods,
            horizon,
        } => commands::eval(data, out, methods, horizon),
        Command::Render { input, out } => commands::render(input, out),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
