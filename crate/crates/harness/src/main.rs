use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use pso_core::he::keygen;
use pso_core::protocols::ResultMode;
use pso_core::roles::{PartyId, Role};
use pso_harness::bench::{self, Axis, BenchConfig};
use pso_harness::engine::{execute, execute_best, record, verify, TransportKind};
use pso_harness::{HarnessError, RunDescriptor};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const EXIT_MISMATCH: u8 = 1;
const EXIT_DETECTED: u8 = 2;
const EXIT_INFRA: u8 = 3;

#[derive(Parser)]
#[command(name = "pso", version, about = "Private set operations: run, verify and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Local,
    Threaded,
}

impl From<TransportArg> for TransportKind {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Local => TransportKind::Local,
            TransportArg::Threaded => TransportKind::Threaded,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    U,
    N,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair and print the public key.
    Keygen {
        #[arg(long, default_value_t = 512)]
        bits: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Execute a run descriptor and print the result and report.
    Run {
        descriptor: PathBuf,
        #[arg(long, value_enum, default_value = "threaded")]
        transport: TransportArg,
        /// Write the deterministic result record (JSON) here.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Execute a run descriptor and compare with the plaintext oracle.
    Verify {
        descriptor: PathBuf,
        #[arg(long, value_enum, default_value = "threaded")]
        transport: TransportArg,
    },
    /// Sweep `u` or `n` on the generic protocol with alpha = beta = n.
    Bench {
        #[arg(long, value_enum, default_value = "u")]
        axis: AxisArg,
        /// Comma-separated ascending values; defaults to the standard sweep.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        u: usize,
        #[arg(long, default_value_t = 512)]
        key_bits: usize,
        #[arg(long, default_value = "elements")]
        mode: ResultMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Write rows as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also time keyed-hash tagging of this many elements.
        #[arg(long)]
        tagging: Option<usize>,
    },
    /// Execute a run descriptor and print the repository log.
    AuditLog {
        descriptor: PathBuf,
        /// Only entries for this vector label.
        #[arg(long)]
        label: Option<String>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INFRA)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Keygen { bits, seed } => {
            let mut rng = match seed {
                Some(s) => ChaCha20Rng::seed_from_u64(s),
                None => ChaCha20Rng::from_entropy(),
            };
            let start = Instant::now();
            let kp = keygen(bits, &mut rng).map_err(|e| HarnessError::Descriptor(e.to_string()))?;
            let v = serde_json::json!({
                "bits": kp.public.bits(),
                "key_id": kp.public.id().to_string(),
                "public_key": kp.public.to_hex(),
                "seconds": start.elapsed().as_secs_f64(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(0)
        }
        Command::Run {
            descriptor,
            transport,
            record: record_path,
        } => {
            let s = RunDescriptor::load_scenario(&descriptor)?;
            let out = execute_best(&s, transport.into())?;
            let r = &out.report;
            println!("protocol  {} ({}), n = {}", r.protocol, r.mode, r.n);
            if let Some(res) = &r.result {
                println!("result    {res}");
            }
            if let Some(v) = &r.verdict {
                println!("verdict   {v}");
            }
            let p = r.party_counts();
            println!(
                "parties   {} encryptions ({} re-randomizations), {} multiplications, {} exponentiations",
                p.encryptions, p.rerandomizations, p.multiplications, p.exponentiations
            );
            println!("decider   {} decryptions", r.decider_counts().decryptions);
            println!(
                "timings   setup {:.3}s, offline {:.3}s, online {:.3}s",
                r.timings.setup, r.timings.offline, r.timings.online
            );
            println!("transcript {}", out.tap.digest());
            if let Some(path) = record_path {
                let f = File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
                serde_json::to_writer_pretty(f, &record(&out)?)?;
            }
            Ok(match &r.verdict {
                Some(v) if !v.is_consistent() => EXIT_DETECTED,
                _ => 0,
            })
        }
        Command::Verify { descriptor, transport } => {
            let s = RunDescriptor::load_scenario(&descriptor)?;
            let (v, _) = verify(&s, transport.into())?;
            println!("{v}");
            Ok(match v.exit_code() {
                0 => 0,
                1 => EXIT_MISMATCH,
                _ => EXIT_DETECTED,
            })
        }
        Command::Bench {
            axis,
            values,
            n,
            u,
            key_bits,
            mode,
            seed,
            repetitions,
            csv,
            tagging,
        } => {
            let axis = match axis {
                AxisArg::U => Axis::U,
                AxisArg::N => Axis::N,
            };
            let values = if values.is_empty() {
                match axis {
                    Axis::U => vec![10, 20, 40, 60, 80, 100],
                    Axis::N => vec![3, 5, 10, 15, 20],
                }
            } else {
                values
            };
            let cfg = BenchConfig {
                axis,
                values,
                n,
                u,
                key_bits,
                mode,
                seed,
                repetitions,
                transport: TransportKind::Local,
            };
            let rows = bench::sweep(&cfg)?;
            print!("{}", bench::table(&rows));
            let xs: Vec<f64> = rows
                .iter()
                .map(|r| match axis {
                    Axis::U => r.u as f64,
                    Axis::N => r.n as f64,
                })
                .collect();
            if rows.len() >= 2 {
                let online: Vec<f64> = rows.iter().map(|r| r.online_s).collect();
                let lin = bench::linear_fit(&xs, &online);
                println!("online time linear fit: slope {:.5} s/unit, R^2 {:.4}", lin.slope, lin.r2);
                let work: Vec<f64> = rows.iter().map(|r| r.party_work() as f64).collect();
                let pow = bench::power_fit(&xs, &work);
                println!("party work power fit: exponent {:.3}, R^2 {:.4}", pow.slope, pow.r2);
            }
            if let Some(path) = csv {
                let f = File::create(&path).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
                bench::write_csv(&rows, f)?;
            }
            if let Some(k) = tagging {
                let t = bench::tagging_time(k, seed)?;
                println!("tagging {k} elements: {:.3}s", t.as_secs_f64());
            }
            Ok(0)
        }
        Command::AuditLog { descriptor, label } => {
            let s = RunDescriptor::load_scenario(&descriptor)?;
            let out = execute(&s, TransportKind::Local)?;
            let viewer = Role::Party(PartyId(1));
            let entries = match &label {
                Some(l) => out.repository.audit(viewer, l)?,
                None => out.repository.full_log(viewer)?,
            };
            let stdout = io::stdout();
            let mut w = stdout.lock();
            for e in entries {
                writeln!(w, "{}", e.export_line()).map_err(|e| HarnessError::Io {
                    path: "<stdout>".into(),
                    source: e,
                })?;
            }
            Ok(0)
        }
    }
}
