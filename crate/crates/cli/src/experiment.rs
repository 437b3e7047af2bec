//! Running configured variants and writing their outputs.
//!
//! For every variant `{name}_{scheme}_{refine}` the output directory receives
//!
//! * `{stem}.csv` with header `level,N,K,nu,mu_total,J_discrete,J_error`,
//! * `{stem}_estimators.csv`, the final level's local indicators,
//! * `{stem}_mesh.txt`, the final mesh (one line of breakpoints per component),
//! * `{stem}_mesh.svg`, drawn from the mesh dump,
//! * optionally `{stem}_level{l}_system.txt` with the assembled matrices.
//!
//! Per configuration there are also `{name}_convergence.svg` and
//! `{name}_iterations.svg`, drawn from the history CSVs only so that
//! [`write_plots`] regenerates them byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use godi_core::reference::{reference_solve, true_goal_error, ReferenceSolution};
use godi_core::{driver, Qoi, RunConfig, RunHistory, SplittingScheme};

use crate::config::{ExperimentConfig, Refinement, SchemeArg, SplittingName};
use crate::svg::{convergence_svg, iterations_svg, mesh_svg, ConvergenceSeries, IterationSeries};
use crate::CliError;

pub const HISTORY_HEADER: &str = "level,N,K,nu,mu_total,J_discrete,J_error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub scheme: SchemeArg,
    pub refine: Refinement,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::new(SchemeArg::Euler, Refinement::Goal),
        Variant::new(SchemeArg::Euler, Refinement::Uniform),
        Variant::new(SchemeArg::Cn, Refinement::Goal),
        Variant::new(SchemeArg::Cn, Refinement::Uniform),
    ];

    pub const fn new(scheme: SchemeArg, refine: Refinement) -> Self {
        Self { scheme, refine }
    }

    pub fn label(self) -> String {
        let scheme = match self.scheme {
            SchemeArg::Euler => "euler",
            SchemeArg::Cn => "cn",
        };
        format!("{scheme}_{}", self.refine.name())
    }

    pub fn stem(self, name: &str) -> String {
        format!("{name}_{}", self.label())
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub splitting: Option<SplittingName>,
    pub levels: Option<usize>,
    /// Only used by goal-oriented variants; uniform refinement bisects all cells.
    pub fraction: Option<f64>,
    pub k_max: Option<usize>,
    pub n_init: Option<usize>,
}

pub fn run_config(
    config: &ExperimentConfig,
    variant: Variant,
    overrides: &Overrides,
) -> Result<RunConfig, CliError> {
    let splitting = match overrides.splitting {
        Some(SplittingName::Jacobi) => SplittingScheme::Jacobi,
        Some(SplittingName::GaussSeidel) => SplittingScheme::GaussSeidel,
        Some(SplittingName::Full) => SplittingScheme::Full,
        None => config.splitting()?,
    };
    let (levels, fraction) = match variant.refine {
        Refinement::Goal => (
            overrides.levels.unwrap_or(config.run.goal_levels),
            overrides.fraction.unwrap_or(config.run.goal_fraction),
        ),
        Refinement::Uniform => (overrides.levels.unwrap_or(config.run.uniform_levels), 1.0),
    };
    let rc = RunConfig {
        levels,
        k_max: overrides.k_max.unwrap_or(config.run.k_max),
        fraction,
        scheme: variant.scheme.scheme(),
        splitting,
        n_init: overrides.n_init.unwrap_or(config.run.n_init),
    };
    rc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(rc)
}

/// One line of a history CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub cells: usize,
    pub k: usize,
    pub nu: f64,
    pub mu_total: f64,
    pub j_discrete: f64,
    pub j_error: f64,
}

impl LevelRow {
    /// `mu_total + nu`, the bound drawn dashed in the convergence plot.
    pub fn estimate(&self) -> f64 {
        self.mu_total + self.nu
    }
}

pub fn level_rows(history: &RunHistory, reference: &ReferenceSolution, qoi: &Qoi) -> Vec<LevelRow> {
    history
        .levels
        .iter()
        .map(|rec| LevelRow {
            level: rec.level,
            cells: rec.total_cells(),
            k: rec.k,
            nu: rec.nu,
            mu_total: rec.mu_total,
            j_discrete: rec.j_discrete,
            j_error: true_goal_error(reference, qoi, &rec.final_iterate),
        })
        .collect()
}

pub fn history_csv(rows: &[LevelRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.level, r.cells, r.k, r.nu, r.mu_total, r.j_discrete, r.j_error
        ));
    }
    out
}

pub fn parse_history_csv(text: &str) -> Result<Vec<LevelRow>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(CliError::Config(format!(
            "history CSV must start with `{HISTORY_HEADER}`"
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let bad = |what: &str| CliError::Config(format!("history CSV line {}: {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| bad(&format!("bad integer `{s}`")))
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(&format!("bad number `{s}`")))
            };
            Ok(LevelRow {
                level: int(f[0])?,
                cells: int(f[1])?,
                k: int(f[2])?,
                nu: num(f[3])?,
                mu_total: num(f[4])?,
                j_discrete: num(f[5])?,
                j_error: num(f[6])?,
            })
        })
        .collect()
}

pub fn parse_mesh_dump(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            line.split_whitespace()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        CliError::Config(format!("mesh dump line {}: bad number `{s}`", n + 1))
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Debug)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub stem: String,
    pub history: RunHistory,
    pub rows: Vec<LevelRow>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Runs every variant (concurrently), writes the per-variant files and the
/// plots, and returns the histories.
pub fn run_experiment(
    config: &ExperimentConfig,
    variants: &[Variant],
    overrides: &Overrides,
    out_dir: &Path,
    emit_matrices: bool,
) -> Result<Vec<VariantOutcome>, CliError> {
    config.validate()?;
    let problem = config.problem()?;
    let qoi = config.qoi(&problem)?;
    let configs = variants
        .iter()
        .map(|&v| run_config(config, v, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display().to_string(), e))?;
    let reference = reference_solve(&problem)?;

    let results: Vec<Result<VariantOutcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .zip(&configs)
            .map(|(&variant, rc)| {
                let (problem, qoi, reference) = (&problem, &qoi, &reference);
                let stem = variant.stem(&config.name);
                scope.spawn(move || -> Result<VariantOutcome, CliError> {
                    let mut io_error = None;
                    let history = driver::run_with_observer(problem, qoi, rc, |level, system| {
                        if emit_matrices && io_error.is_none() {
                            let path = out_dir.join(format!("{stem}_level{level}_system.txt"));
                            let mut buf = Vec::new();
                            system.write_triplets(&mut buf).expect("writing to memory");
                            io_error = write(&path, buf).err();
                        }
                    })?;
                    if let Some(e) = io_error {
                        return Err(e);
                    }
                    let rows = level_rows(&history, reference, qoi);
                    write(&out_dir.join(format!("{stem}.csv")), history_csv(&rows))?;
                    if let Some(last) = history.levels.last() {
                        let mut buf = Vec::new();
                        last.report
                            .write_csv(&last.mesh, &mut buf)
                            .expect("writing to memory");
                        write(&out_dir.join(format!("{stem}_estimators.csv")), buf)?;
                        write(&out_dir.join(format!("{stem}_mesh.txt")), last.mesh.dump())?;
                    }
                    Ok(VariantOutcome {
                        variant,
                        stem,
                        history,
                        rows,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant thread panicked"))
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_plots(out_dir, &config.name)?;
    Ok(outcomes)
}

/// Redraws the plots of experiment `name` from the CSV and mesh files in
/// `dir`. Returns the paths written.
pub fn write_plots(dir: &Path, name: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut convergence = Vec::new();
    let mut iterations = Vec::new();
    let mut written = Vec::new();
    for variant in Variant::ALL {
        let stem = variant.stem(name);
        let csv = dir.join(format!("{stem}.csv"));
        if csv.exists() {
            let rows = parse_history_csv(&read(&csv)?)?;
            convergence.push(ConvergenceSeries {
                label: variant.label(),
                cells: rows.iter().map(|r| r.cells as f64).collect(),
                error: rows.iter().map(|r| r.j_error).collect(),
                estimate: rows.iter().map(LevelRow::estimate).collect(),
            });
            iterations.push(IterationSeries {
                label: variant.label(),
                levels: rows.iter().map(|r| r.level as f64).collect(),
                iterations: rows.iter().map(|r| r.k as f64).collect(),
            });
        }
        let mesh = dir.join(format!("{stem}_mesh.txt"));
        if mesh.exists() {
            let nodes = parse_mesh_dump(&read(&mesh)?)?;
            let path = dir.join(format!("{stem}_mesh.svg"));
            write(&path, mesh_svg(&format!("{stem}: final mesh"), &nodes))?;
            written.push(path);
        }
    }
    if convergence.is_empty() {
        return Ok(written);
    }
    let path = dir.join(format!("{name}_convergence.svg"));
    write(
        &path,
        convergence_svg(&format!("{name}: goal error"), &convergence),
    )?;
    written.push(path);
    let path = dir.join(format!("{name}_iterations.svg"));
    write(
        &path,
        iterations_svg(&format!("{name}: iterations per level"), &iterations),
    )?;
    written.push(path);
    Ok(written)
}

/// Experiment names with at least one history CSV in `dir`, sorted.
pub fn experiments_in(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir.display().to_string(), e))?;
        let file = entry.file_name().to_string_lossy().into_owned();
        for variant in Variant::ALL {
            if let Some(name) = file.strip_suffix(&format!("_{}.csv", variant.label())) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    names.dedup();
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: usize) -> LevelRow {
        LevelRow {
            level,
            cells: 64 + level,
            k: 3,
            nu: 1.0 / 3.0,
            mu_total: 2e-7,
            j_discrete: -0.25,
            j_error: f64::INFINITY,
        }
    }

    #[test]
    fn empty_history_is_header_only() {
        assert_eq!(history_csv(&[]), format!("{HISTORY_HEADER}\n"));
        assert!(parse_history_csv(&history_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![row(0), row(1)];
        let text = history_csv(&rows);
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(parse_history_csv(&text).unwrap(), rows);
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(parse_history_csv("nope\n").is_err());
        let text = format!("{HISTORY_HEADER}\n1,2,3\n");
        assert!(parse_history_csv(&text).is_err());
    }

    #[test]
    fn labels_and_overrides() {
        assert_eq!(Variant::ALL[3].stem("exp1"), "exp1_cn_uniform");
        let cfg = ExperimentConfig::preset("exp1").unwrap();
        let o = Overrides {
            fraction: Some(0.2),
            splitting: Some(SplittingName::Full),
            ..Overrides::default()
        };
        let goal = run_config(&cfg, Variant::ALL[0], &o).unwrap();
        assert_eq!((goal.levels, goal.fraction), (10, 0.2));
        assert_eq!(goal.splitting, SplittingScheme::Full);
        let uni = run_config(&cfg, Variant::ALL[1], &o).unwrap();
        assert_eq!((uni.levels, uni.fraction), (5, 1.0));
        let bad = Overrides {
            k_max: Some(0),
            ..Overrides::default()
        };
        assert!(matches!(
            run_config(&cfg, Variant::ALL[0], &bad),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn mesh_dump_parses() {
        let nodes = parse_mesh_dump("0 0.5 1\n0 1\n").unwrap();
        assert_eq!(nodes, vec![vec![0.0, 0.5, 1.0], vec![0.0, 1.0]]);
        assert!(parse_mesh_dump("0 x\n").is_err());
    }
}
