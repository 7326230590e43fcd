//! Command-line front end for `latcap`.
//!
//! [`run`] parses arguments, dispatches and returns the exit code together
//! with whatever should go to stdout and stderr, so the whole surface is
//! testable in-process.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::broadcast::{simulate, BroadcastError, SimulationReport};
use crate::exactmath::Rational;
use crate::exchange::{identities, phi_table};
use crate::infotools::run_submodularity_trials;
use crate::polyhedra::{latent_facets, vertices3, FacetOptions, InequalitySystem, Variable};
use crate::region::{member, support_lp, support_partition, DirectionVector, RateVector, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_OUTSIDE: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "latcap", version, about = "Latent capacity region toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output format (plotdata defaults to csv, everything else to json)
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of exchange rates
    Phi {
        #[arg(long)]
        k: usize,
    },
    /// Decide whether R lies in the region implied by R*
    Member {
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate, required = true)]
        rstar: Vec<Rational>,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate, required = true)]
        r: Vec<Rational>,
    },
    /// Largest A·R over the region, by LP and by partition search
    Support {
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate, required = true)]
        rstar: Vec<Rational>,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate, required = true)]
        a: Vec<Rational>,
    },
    /// Irredundant inequalities describing the region
    Facets {
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', value_parser = parse_rate)]
        rstar: Option<Vec<Rational>>,
        /// Keep R* as variables
        #[arg(long)]
        symbolic: bool,
        /// Largest K accepted
        #[arg(long, default_value_t = crate::polyhedra::DEFAULT_MAX_USERS)]
        max_k: usize,
    },
    /// Vertices and tight facets of the three-user region
    Plotdata {
        #[arg(long, value_delimiter = ',', value_parser = parse_rate, required = true)]
        rstar: Vec<Rational>,
    },
    /// Encode random messages, send them over the channel and decode
    Simulate {
        #[arg(long)]
        k: usize,
        /// Symbols per set at each level, comma separated
        #[arg(long, value_delimiter = ',')]
        cap: Vec<usize>,
        /// Transfers as `i,j,amount` triples separated by `;`
        #[arg(long, value_delimiter = ';', value_parser = parse_transfer)]
        alloc: Vec<Transfer>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Include a hex dump of every channel block
        #[arg(long)]
        trace: bool,
    },
    /// Exchange-rate identities and entropy inequalities
    CheckLemmas {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest user count for the exchange-rate identities
        #[arg(long, default_value_t = 12)]
        max_k: usize,
    },
}

/// A non-negative rational in `p/q` or integer form.
pub fn parse_rate(token: &str) -> Result<Rational, String> {
    let q: Rational = token.parse().map_err(|e| format!("{e}"))?;
    if q.is_negative() {
        return Err(format!("`{}` is negative", token.trim()));
    }
    Ok(q)
}

/// `i,j,amount`; an empty string stands for no transfer.
pub fn parse_transfer(triple: &str) -> Result<Transfer, String> {
    let triple = triple.trim();
    if triple.is_empty() {
        return Ok(Transfer(0, 0, 0));
    }
    let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
    let [i, j, amount] = parts[..] else {
        return Err(format!("`{triple}` is not an i,j,amount triple"));
    };
    let num = |t: &str| t.parse::<usize>().map_err(|_| format!("`{t}` is not a whole number"));
    Ok(Transfer(num(i)?, num(j)?, num(amount)?))
}

/// `amount` symbols of level `i` spent on level `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer(pub usize, pub usize, pub usize);

/// Exit code and text produced by one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn usage(message: impl std::fmt::Display) -> Self {
        Outcome {
            code: EXIT_USAGE,
            stdout: String::new(),
            stderr: format!("error: {message}\n"),
        }
    }
}

struct Rendered {
    code: i32,
    json: serde_json::Value,
    csv: Vec<Vec<String>>,
}

fn csv_text(rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let default_format = match cli.command {
        Command::Plotdata { .. } => Format::Csv,
        _ => Format::Json,
    };
    let rendered = match dispatch(&cli.command) {
        Ok(r) => r,
        Err(message) => return Outcome::usage(message),
    };
    let text = match cli.output.format.unwrap_or(default_format) {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&rendered.json).expect("serializable")),
        Format::Csv => csv_text(&rendered.csv),
    };
    match cli.output.out {
        Some(path) => match std::fs::write(&path, text) {
            Ok(()) => Outcome { code: rendered.code, stdout: String::new(), stderr: String::new() },
            Err(e) => Outcome {
                code: EXIT_FAILURE,
                stdout: String::new(),
                stderr: format!("error: cannot write {}: {e}\n", path.display()),
            },
        },
        None => Outcome { code: rendered.code, stdout: text, stderr: String::new() },
    }
}

fn rates(values: &[Rational]) -> Result<RateVector, String> {
    RateVector::new(values.to_vec()).map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}

fn strings<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Vec<String> {
    values.into_iter().map(Rational::to_string).collect()
}

fn dispatch(command: &Command) -> Result<Rendered, String> {
    match command {
        Command::Phi { k } => {
            let table = phi_table(*k).map_err(|e| e.to_string())?;
            let mut csv = vec![std::iter::once("i".to_string()).chain((1..=*k).map(|j| format!("j={j}"))).collect()];
            for (i, row) in table.rows().iter().enumerate() {
                csv.push(std::iter::once((i + 1).to_string()).chain(strings(row)).collect());
            }
            Ok(Rendered {
                code: EXIT_OK,
                json: json!({ "k": k, "table": table.rows() }),
                csv,
            })
        }
        Command::Member { k, rstar, r } => {
            let verdict = member(*k, &rates(rstar)?, &rates(r)?).map_err(|e| e.to_string())?;
            let mut header = vec!["verdict".to_string(), "support_value".into(), "score".into()];
            header.extend((1..=*k).map(|j| format!("A_{j}")));
            let (code, row) = match &verdict {
                Verdict::Inside { .. } => {
                    let mut row = vec!["inside".to_string(), String::new(), String::new()];
                    row.extend(std::iter::repeat_n(String::new(), *k));
                    (EXIT_OK, row)
                }
                Verdict::Outside {
                    separator,
                    support_value,
                    score,
                } => {
                    let mut row = vec!["outside".to_string(), support_value.to_string(), score.to_string()];
                    row.extend(strings(separator.as_slice()));
                    (EXIT_OUTSIDE, row)
                }
            };
            Ok(Rendered {
                code,
                json: to_json(&verdict),
                csv: vec![header, row],
            })
        }
        Command::Support { k, rstar, a } => {
            let rstar = rates(rstar)?;
            let direction = DirectionVector::new(a.clone()).map_err(|e| e.to_string())?;
            let lp = support_lp(*k, &rstar, &direction).map_err(|e| e.to_string())?;
            let by_partition = support_partition(*k, &rstar, &direction).map_err(|e| e.to_string())?;
            let agree = lp.value == by_partition.value;
            let point = lp.point();
            let mut header = vec!["value".to_string()];
            header.extend((1..=*k).map(|j| format!("R_{j}")));
            let mut row = vec![lp.value.to_string()];
            row.extend(strings(point.as_slice()));
            Ok(Rendered {
                code: if agree { EXIT_OK } else { EXIT_VIOLATION },
                json: json!({
                    "value": lp.value,
                    "point": point,
                    "allocation": lp.allocation,
                    "partition": by_partition.partition,
                    "partition_value": by_partition.value,
                    "routes_agree": agree,
                }),
                csv: vec![header, row],
            })
        }
        Command::Facets {
            k,
            rstar,
            symbolic,
            max_k,
        } => {
            let rstar = rstar.as_deref().map(rates).transpose()?;
            let system = latent_facets(*k, *symbolic, rstar.as_ref(), FacetOptions { max_users: *max_k })
                .map_err(|e| e.to_string())?;
            Ok(Rendered {
                code: EXIT_OK,
                json: json!({
                    "k": k,
                    "symbolic": symbolic,
                    "variables": system.variables().iter().map(Variable::to_string).collect::<Vec<_>>(),
                    "inequalities": system.rows().collect::<Vec<_>>(),
                }),
                csv: facets_csv(&system),
            })
        }
        Command::Plotdata { rstar } => {
            let rstar = rates(rstar)?;
            if rstar.len() != 3 {
                return Err(format!("plotdata needs three R* entries, got {}", rstar.len()));
            }
            let system = latent_facets(3, false, Some(&rstar), FacetOptions::default()).map_err(|e| e.to_string())?;
            let rows: Vec<String> = system.rows().map(|r| r.to_string()).collect();
            let vertices = vertices3(&system).map_err(|e| e.to_string())?;
            let mut csv = vec![vec![
                "vertex".to_string(),
                "R_1".into(),
                "R_2".into(),
                "R_3".into(),
                "tight".into(),
            ]];
            for (n, v) in vertices.iter().enumerate() {
                let mut row = vec![n.to_string()];
                row.extend(strings(&v.point));
                row.push(v.tight.iter().map(|t| rows[*t].as_str()).collect::<Vec<_>>().join(";"));
                csv.push(row);
            }
            Ok(Rendered {
                code: EXIT_OK,
                json: json!({
                    "rstar": rstar,
                    "inequalities": system.rows().collect::<Vec<_>>(),
                    "vertices": vertices,
                }),
                csv,
            })
        }
        Command::Simulate {
            k,
            cap,
            alloc,
            seed,
            trials,
            trace,
        } => {
            let mut matrix = vec![vec![0usize; *k]; *k];
            for &Transfer(i, j, amount) in alloc.iter().filter(|t| t.2 > 0) {
                if i == 0 || j == 0 || i > *k || j > *k {
                    return Err(format!("transfer {i},{j} names a level outside 1..={k}"));
                }
                matrix[i - 1][j - 1] += amount;
            }
            let runs: Vec<SimulationReport> = (0..*trials)
                .map(|t| simulate(*k, cap, &matrix, seed.wrapping_add(t), *trace))
                .collect::<Result<_, BroadcastError>>()
                .map_err(|e| e.to_string())?;
            let ok = runs.iter().all(|r| r.success && r.rates_exact);
            let mut header: Vec<String> = ["seed", "success", "rates_exact", "block_multiplier", "bytes_on_channel"]
                .map(String::from)
                .to_vec();
            header.extend((1..=*k).map(|j| format!("delivered_rate_{j}")));
            let mut csv = vec![header];
            for r in &runs {
                let mut row = vec![
                    r.seed.to_string(),
                    r.success.to_string(),
                    r.rates_exact.to_string(),
                    r.block_multiplier.to_string(),
                    r.bytes_on_channel.to_string(),
                ];
                row.extend(strings(&r.delivered_rates));
                csv.push(row);
            }
            Ok(Rendered {
                code: if ok { EXIT_OK } else { EXIT_VIOLATION },
                json: json!({ "trials": trials, "all_succeeded": ok, "runs": runs }),
                csv,
            })
        }
        Command::CheckLemmas { trials, seed, max_k } => {
            let violations = identities::check_up_to(*max_k);
            let entropy = run_submodularity_trials(*trials, *seed).map_err(|e| e.to_string())?;
            let passed = violations.is_empty() && entropy.passed();
            let csv = vec![
                vec!["check".to_string(), "trials".into(), "violations".into(), "min_margin".into()],
                vec!["exchange_identities".into(), max_k.to_string(), violations.len().to_string(), String::new()],
                vec![
                    "pairwise_submodularity".into(),
                    entropy.pairwise.trials.to_string(),
                    entropy.pairwise.violations.to_string(),
                    format!("{:.11e}", entropy.pairwise.min_margin),
                ],
                vec![
                    "kway_submodularity".into(),
                    entropy.kway.trials.to_string(),
                    entropy.kway.violations.to_string(),
                    format!("{:.11e}", entropy.kway.min_margin),
                ],
            ];
            Ok(Rendered {
                code: if passed { EXIT_OK } else { EXIT_VIOLATION },
                json: json!({
                    "passed": passed,
                    "exchange_identities": {
                        "max_k": max_k,
                        "identities": identities::NAMES,
                        "violations": violations,
                    },
                    "submodularity": entropy,
                }),
                csv,
            })
        }
    }
}

fn facets_csv(system: &InequalitySystem) -> Vec<Vec<String>> {
    let vars: Vec<Variable> = system.variables().iter().copied().collect();
    let mut header: Vec<String> = vars.iter().map(Variable::to_string).collect();
    header.push("constant".into());
    let mut out = vec![header];
    for r in system.rows() {
        let mut row: Vec<String> = vars.iter().map(|v| r.coefficient(*v).to_string()).collect();
        row.push(r.constant().to_string());
        out.push(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn latcap(args: &str) -> Outcome {
        run(std::iter::once("latcap").chain(args.split_whitespace()))
    }

    #[test]
    fn rate_parsing() {
        assert_eq!(parse_rate("2/3").unwrap(), Rational::frac(2, 3));
        assert_eq!(parse_rate(" 4 ").unwrap(), Rational::from(4));
        assert!(parse_rate("0.5").unwrap_err().contains("0.5"));
        assert!(parse_rate("-2").unwrap_err().contains("-2"));
        assert!(parse_rate("x").unwrap_err().contains('x'));
    }

    #[test]
    fn transfer_parsing() {
        assert_eq!(parse_transfer(" 3,1,3").unwrap(), Transfer(3, 1, 3));
        assert_eq!(parse_transfer("").unwrap(), Transfer(0, 0, 0));
        assert!(parse_transfer("1,2").unwrap_err().contains("1,2"));
        assert!(parse_transfer("1,b,2").unwrap_err().contains("`b`"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(latcap("bogus").code, EXIT_USAGE);
        assert_eq!(latcap("phi").code, EXIT_USAGE);
        let bad = latcap("member --k 2 --rstar 1,1 --r 0.5,0");
        assert_eq!(bad.code, EXIT_USAGE);
        assert!(bad.stderr.contains("0.5"));
        assert_eq!(latcap("member --k 3 --rstar 1,1 --r 1,0").code, EXIT_USAGE);
        assert_eq!(latcap("--help").code, EXIT_OK);
    }

    #[test]
    fn phi_csv() {
        let out = latcap("phi --k 2 --format csv");
        assert_eq!(out.stdout, "i,j=1,j=2\n1,1,1\n2,1/2,1\n");
    }

    #[test]
    fn facets_csv_header() {
        let out = latcap("facets --k 1 --rstar 5 --format csv");
        assert_eq!(out.code, EXIT_OK);
        assert_eq!(out.stdout, "R_1,constant\n-1,0\n1,5\n");
    }

    #[test]
    fn writes_to_file() {
        let dir = std::env::temp_dir().join(format!("latcap-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("phi.json");
        let out = run(["latcap", "phi", "--k", "2", "--out", path.to_str().unwrap()]);
        assert_eq!(out.code, EXIT_OK);
        assert!(out.stdout.is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("1/2"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
