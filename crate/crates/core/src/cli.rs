//! The `haagerup` command-line front end.
//!
//! Every subcommand prints (or writes with `--out`) a JSON report echoing
//! its configuration and the defaults in force. Exit status: 0 when all
//! checks pass, 1 when a mathematical property check fails, 2 on bad input
//! or an exhausted resource budget.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::action::{
    properness_profile, tree_cocycle, verify_cocycle, verify_isometry, ActionBundle,
};
use crate::construction::{
    construct_and_certify, ConstructConfig, Tolerances, DEFAULT_N_MAX, MATERIALIZATION_BITS,
    MATERIALIZATION_MAX_N, MAX_BOX_BITS,
};
use crate::embedding::{escape_csv, escape_profile, escapes, gns_embed};
use crate::error::{Error, Result};
use crate::group::{GroupSpec, DEFAULT_BALL_CAP};
use crate::kernel::{
    cnd_test, exp_kernel_test, frullani_constant, frullani_power, power_transform,
    power_transform_or_identity, CndFunction, Kernel, QuadratureConfig,
};
use crate::measure::{
    lp_gauge, mazur_map, mazur_modulus_estimate, LpVector, LpVectorJson, ModulusConfig,
};
use crate::suite::{run_suite, SuiteConfig};

/// Environment variable naming the default directory for suite artifacts.
pub const SCRATCH_DIR_ENV: &str = "HAAGERUP_SCRATCH_DIR";

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SEED: u64 = 0;

/// Defaults echoed into every report.
#[derive(Clone, Debug, Serialize)]
pub struct Defaults {
    pub version: &'static str,
    pub cnd_tolerance: f64,
    pub seed: u64,
    pub quadrature: QuadratureConfig,
    pub construction_tolerances: Tolerances,
    pub ball_cap: usize,
    pub window_budget_bits: u64,
    pub box_side_budget: usize,
    pub materialization_max_side: usize,
    pub materialization_bits: usize,
}

impl Defaults {
    pub fn current() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            cnd_tolerance: DEFAULT_TOL,
            seed: DEFAULT_SEED,
            quadrature: QuadratureConfig::default(),
            construction_tolerances: Tolerances::default(),
            ball_cap: DEFAULT_BALL_CAP,
            window_budget_bits: MAX_BOX_BITS,
            box_side_budget: DEFAULT_N_MAX,
            materialization_max_side: MATERIALIZATION_MAX_N,
            materialization_bits: MATERIALIZATION_BITS,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "haagerup", version, about = "CND kernels, Mazur maps and proper affine actions on L_p")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// Write the report here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug, Clone, Serialize)]
struct KernelInput {
    /// Kernel JSON: {"labels": [...], "matrix": [[...], ...]}.
    #[arg(long, required_unless_present = "line_points")]
    kernel: Option<PathBuf>,
    /// Build K(i, j) = |x_i - x_j|^exponent from points on the line.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "kernel")]
    line_points: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0, requires = "line_points")]
    exponent: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a kernel for conditional negative definiteness.
    CndTest {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Entrywise power K^alpha of a CND kernel, with its CND test.
    Power {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long)]
        alpha: f64,
        /// Accept alpha = 1 as the identity transform.
        #[arg(long)]
        allow_identity: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// CND test of 1 - exp(-tK) and PSD test of exp(-tK) over a t grid.
    ExpTest {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
        t: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// x^alpha through the integral of (1 - e^{-tx}) t^{-alpha-1}.
    Frullani {
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        t_max_factor: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
        /// Relative error allowed against x^alpha.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Mazur map of a vector, or an empirical modulus of continuity.
    Mazur {
        /// Vector JSON: {"weights": [...], "values": [...], "p": ...}.
        #[arg(long, conflicts_with_all = ["p_from", "samples"])]
        vector: Option<PathBuf>,
        #[arg(long)]
        p_to: f64,
        #[arg(long, required_unless_present = "vector")]
        p_from: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        atoms: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Euclidean embedding of a CND kernel with zero diagonal.
    Gns {
        #[command(flatten)]
        input: KernelInput,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Minimum of psi over spheres of a Cayley ball.
    Escape {
        #[arg(long)]
        group: GroupSpec,
        /// `word-length`, or a JSON file {"group": ..., "values": {element: value}}.
        #[arg(long, default_value = "word-length")]
        psi: String,
        #[arg(long)]
        radius: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Tree cocycle of the free group as an action bundle.
    TreeAction {
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        radius: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Verify the isometry and cocycle identities of an action bundle.
    Verify {
        #[arg(long)]
        action: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Properness profile of an action bundle.
    Profile {
        #[arg(long)]
        action: PathBuf,
        #[arg(long)]
        radius: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build and certify a proper affine action of Z^d on L_p.
    Construct {
        #[arg(long, default_value = "Z")]
        group: GroupSpec,
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        radius: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        /// Fixed odd box sides instead of schedule selection.
        #[arg(long, value_delimiter = ',')]
        sides: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the acceptance battery.
    Suite {
        /// Directory for suite_report.json and suite_timings.json
        /// (default: $HAAGERUP_SCRATCH_DIR, else the current directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Mutation fixture: negate the Mazur exponent in the transfer check.
        #[arg(long)]
        inject_mazur_sign_flip: bool,
    },
}

/// Result of a subcommand: the report body, an optional CSV rendering and
/// whether all property checks passed.
struct Outcome {
    body: Value,
    csv: Option<String>,
    passed: bool,
}

impl Outcome {
    fn json(body: impl Serialize, passed: bool) -> Result<Self> {
        Ok(Self {
            body: serde_json::to_value(body)?,
            csv: None,
            passed,
        })
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }
}

/// Parses `args` (program name first) and runs the subcommand, returning
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn load_kernel(input: &KernelInput) -> Result<Kernel> {
    match (&input.kernel, &input.line_points) {
        (Some(path), _) => read_json(path),
        (None, Some(points)) => Kernel::power_distance_on_line(points, input.exponent),
        (None, None) => Err(Error::input("need --kernel or --line-points")),
    }
}

fn emit(command: &str, config: Value, outcome: Outcome, output: &OutputArgs) -> Result<bool> {
    let text = match output.format {
        Format::Json => {
            let report = json!({
                "command": command,
                "config": config,
                "defaults": Defaults::current(),
                "passed": outcome.passed,
                "result": outcome.body,
            });
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv.ok_or_else(|| {
            Error::input(format!("`{command}` has no CSV form; use --format json"))
        })?,
    };
    match &output.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(outcome.passed)
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::CndTest { input, tol, output } => {
            let k = load_kernel(&input)?;
            let report = cnd_test(&k, tol)?;
            let passed = report.is_cnd();
            emit(
                "cnd-test",
                json!({ "input": input, "tol": tol }),
                Outcome::json(report, passed)?,
                &output,
            )
        }
        Command::Power {
            input,
            alpha,
            allow_identity,
            tol,
            output,
        } => {
            let k = load_kernel(&input)?;
            let transformed = if allow_identity {
                power_transform_or_identity(&k, alpha)?
            } else {
                power_transform(&k, alpha)?
            };
            let report = cnd_test(&transformed, tol)?;
            let passed = report.is_cnd();
            emit(
                "power",
                json!({ "input": input, "alpha": alpha, "allow_identity": allow_identity, "tol": tol }),
                Outcome::json(json!({ "kernel": transformed, "cnd": report }), passed)?,
                &output,
            )
        }
        Command::ExpTest {
            input,
            t,
            tol,
            output,
        } => {
            let k = load_kernel(&input)?;
            let report = exp_kernel_test(&k, &t, tol)?;
            let passed = report.passed;
            emit(
                "exp-test",
                json!({ "input": input, "t": t, "tol": tol }),
                Outcome::json(report, passed)?,
                &output,
            )
        }
        Command::Frullani {
            x,
            alpha,
            eps,
            t_max_factor,
            nodes,
            tol,
            output,
        } => {
            let d = QuadratureConfig::default();
            let quad = QuadratureConfig {
                eps: eps.unwrap_or(d.eps),
                t_max_factor: t_max_factor.unwrap_or(d.t_max_factor),
                nodes: nodes.unwrap_or(d.nodes),
            };
            if x.is_empty() || alpha.is_empty() {
                return Err(Error::input("need at least one x and one alpha"));
            }
            let mut rows = Vec::new();
            let mut csv = String::from("x,alpha,c_alpha,value,exact,relative_error\n");
            let mut passed = true;
            for &xv in &x {
                for &a in &alpha {
                    let value = frullani_power(xv, a, &quad)?;
                    let exact = xv.powf(a);
                    let rel = (value - exact).abs() / exact;
                    passed &= rel <= tol;
                    let c = frullani_constant(a)?;
                    csv.push_str(&format!("{xv},{a},{c},{value},{exact},{rel}\n"));
                    rows.push(json!({
                        "x": xv, "alpha": a, "c_alpha": c,
                        "value": value, "exact": exact, "relative_error": rel,
                    }));
                }
            }
            emit(
                "frullani",
                json!({ "x": x, "alpha": alpha, "quadrature": quad, "tol": tol }),
                Outcome::json(rows, passed)?.with_csv(csv),
                &output,
            )
        }
        Command::Mazur {
            vector,
            p_to,
            p_from,
            samples,
            atoms,
            seed,
            output,
        } => match vector {
            Some(path) => {
                let v: LpVector = read_json::<LpVectorJson>(&path)?.try_into()?;
                let image = mazur_map(&v, v.p(), p_to)?;
                let body = json!({
                    "p_from": v.p(),
                    "p_to": p_to,
                    "input_gauge": lp_gauge(&v),
                    "output_gauge": lp_gauge(&image),
                    "image": LpVectorJson::from(&image),
                });
                emit(
                    "mazur",
                    json!({ "vector": path, "p_to": p_to }),
                    Outcome::json(body, true)?,
                    &output,
                )
            }
            None => {
                let config = ModulusConfig {
                    p_from: p_from.ok_or_else(|| Error::input("modulus mode needs --p-from"))?,
                    p_to,
                    sample_count: samples,
                    atoms,
                    seed,
                };
                let table = mazur_modulus_estimate(&config)?;
                let csv = table.to_csv();
                emit(
                    "mazur",
                    serde_json::to_value(&config)?,
                    Outcome::json(table, true)?.with_csv(csv),
                    &output,
                )
            }
        },
        Command::Gns { input, tol, output } => {
            let k = load_kernel(&input)?;
            let config = json!({ "input": input, "tol": tol });
            match gns_embed(&k, tol) {
                Ok(e) => emit("gns", config, Outcome::json(e, true)?, &output),
                Err(Error::NotCnd {
                    extremal_value,
                    threshold,
                    witness,
                }) => emit(
                    "gns",
                    config,
                    Outcome::json(
                        json!({
                            "error": "kernel is not CND",
                            "extremal_value": extremal_value,
                            "threshold": threshold,
                            "witness": witness,
                        }),
                        false,
                    )?,
                    &output,
                ),
                Err(Error::Inconsistent { eigenvalue, cutoff }) => emit(
                    "gns",
                    config,
                    Outcome::json(
                        json!({
                            "error": "centered Gram matrix has a negative eigenvalue",
                            "eigenvalue": eigenvalue,
                            "cutoff": cutoff,
                        }),
                        false,
                    )?,
                    &output,
                ),
                Err(e) => Err(e),
            }
        }
        Command::Escape {
            group,
            psi,
            radius,
            output,
        } => {
            let function = if psi == "word-length" {
                CndFunction::word_length(&group, &group.ball(radius)?)?
            } else {
                #[derive(serde::Deserialize)]
                struct PsiFile {
                    group: GroupSpec,
                    values: BTreeMap<String, f64>,
                }
                let file: PsiFile = read_json(Path::new(&psi))?;
                if file.group != group {
                    return Err(Error::input(format!(
                        "psi file is for {}, not {group}",
                        file.group
                    )));
                }
                let values = file
                    .values
                    .iter()
                    .map(|(k, v)| Ok((group.parse_element(k)?, *v)))
                    .collect::<Result<_>>()?;
                CndFunction::new(group.clone(), values)?
            };
            let radii: Vec<usize> = (0..=radius).collect();
            let profile = escape_profile(&function, &radii)?;
            let passed = escapes(&profile);
            let csv = escape_csv(&profile);
            emit(
                "escape",
                json!({ "group": group, "psi": psi, "radius": radius }),
                Outcome::json(profile, passed)?.with_csv(csv),
                &output,
            )
        }
        Command::TreeAction {
            rank,
            p,
            radius,
            output,
        } => {
            let action = tree_cocycle(rank, p, radius)?;
            let bundle = ActionBundle::from_action(&action, radius);
            // The bundle itself is the artifact, so it is written bare.
            let mut text = serde_json::to_string(&bundle)?;
            text.push('\n');
            if output.format == Format::Csv {
                return Err(Error::input("`tree-action` has no CSV form; use --format json"));
            }
            match &output.out {
                Some(path) => write_atomic(path, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Verify {
            action,
            tol,
            seed,
            output,
        } => {
            let bundle: ActionBundle = read_json(&action)?;
            let radius = bundle.radius;
            let act = bundle.into_action()?;
            let ball = act.spec().ball(radius)?;
            let isometry = act
                .blocks()
                .iter()
                .map(|b| verify_isometry(b.rep(), act.p(), &ball, tol, seed))
                .collect::<Result<Vec<_>>>()?;
            let cocycle = verify_cocycle(&act, &ball, tol)?;
            let passed = cocycle.passed && isometry.iter().all(|r| r.passed);
            emit(
                "verify",
                json!({ "action": action, "tol": tol, "seed": seed, "radius": radius }),
                Outcome::json(json!({ "isometry": isometry, "cocycle": cocycle }), passed)?,
                &output,
            )
        }
        Command::Profile {
            action,
            radius,
            output,
        } => {
            let bundle: ActionBundle = read_json(&action)?;
            if radius > bundle.radius {
                return Err(Error::input(format!(
                    "action is defined up to radius {}, asked for {radius}",
                    bundle.radius
                )));
            }
            let profile = properness_profile(&bundle.into_action()?, radius)?;
            let passed = profile.strictly_increasing;
            let csv = profile.to_csv();
            emit(
                "profile",
                json!({ "action": action, "radius": radius }),
                Outcome::json(profile, passed)?.with_csv(csv),
                &output,
            )
        }
        Command::Construct {
            group,
            p,
            radius,
            eps,
            n_max,
            sides,
            seed,
            output,
        } => {
            let config = ConstructConfig {
                group,
                p,
                radius,
                eps,
                n_max,
                sides,
                tolerances: Tolerances::default(),
                seed,
            };
            let report = construct_and_certify(&config)?;
            let passed = report.passed;
            emit(
                "construct",
                serde_json::to_value(&config)?,
                Outcome::json(report, passed)?,
                &output,
            )
        }
        Command::Suite {
            out_dir,
            seed,
            inject_mazur_sign_flip,
        } => {
            let dir = out_dir
                .or_else(|| std::env::var_os(SCRATCH_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let mut config = SuiteConfig::default();
            if let Some(s) = seed {
                config.seed = s;
                config.construction.seed = s.wrapping_add(8);
            }
            config.inject_mazur_sign_flip = inject_mazur_sign_flip;
            let outcome = run_suite(&config)?;
            std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let mut report = serde_json::to_string_pretty(&outcome.report)?;
            report.push('\n');
            write_atomic(&dir.join("suite_report.json"), report.as_bytes())?;
            let mut timings = serde_json::to_string_pretty(&outcome.timings)?;
            timings.push('\n');
            write_atomic(&dir.join("suite_timings.json"), timings.as_bytes())?;
            for (c, t) in outcome.report.criteria.iter().zip(&outcome.timings) {
                println!(
                    "{:>2} {:<22} {} {:.2}s",
                    c.id,
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    t.seconds
                );
            }
            Ok(outcome.report.passed)
        }
    }
}
