//! Reproducible command-line runs.
//!
//! A single JSON document configures each run: the command, a model block,
//! a twist block, solver settings, and output paths. Flags override file
//! values (`--set key=value` for dotted paths, then the dedicated `--seed`
//! and `--out` flags). Every run writes its artifacts plus a provenance
//! manifest `run.manifest.json`; `reproduce` replays a manifest and
//! byte-compares the regenerated artifacts.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical/resource error,
//! 4 undefined index (the report is still written).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::models::{
    self, build_extended_hubbard, build_hubbard_ssh, build_rice_mele, build_ssh, build_staggered,
    Boundary, Mode, ModelSpec,
};
use crate::quadratic::{self, CellGrouping};
use crate::report::{self, CsvField};
use crate::scan::{self, PathFamily, PathSpec};
use crate::solver::{assemble_capped, ground_state, SolverOptions};
use crate::twist::{
    self, build_twist, Convention, IndexTolerances, IndexValue, ProfileParams, RampShape,
};
use crate::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command selected by the config file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Index,
    Duality,
    Sweep,
    Ensemble,
    Edge,
    Zak,
    Winding,
    Bound,
    Decoupled,
}

fn default_boundary() -> Boundary {
    Boundary::Ring
}

/// Declarative model block: a named builder with parameters, an inline
/// spec, or a spec file, optionally wrapped by disorder or boundary surgery.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "builder")]
pub enum ModelConfig {
    Ssh {
        l: usize,
        s: f64,
        #[serde(default = "default_boundary")]
        boundary: Boundary,
    },
    HubbardSsh {
        l: usize,
        s: f64,
        u: f64,
        #[serde(default = "default_boundary")]
        boundary: Boundary,
    },
    ExtendedHubbard {
        l: usize,
        u: f64,
        j: f64,
        #[serde(default = "default_boundary")]
        boundary: Boundary,
    },
    Staggered {
        l: usize,
        delta: f64,
        #[serde(default)]
        hop: f64,
        #[serde(default = "default_boundary")]
        boundary: Boundary,
    },
    RiceMele {
        l: usize,
        dimer: f64,
        stagger: f64,
        #[serde(default = "default_boundary")]
        boundary: Boundary,
    },
    SpecFile {
        path: String,
    },
    Spec {
        spec: Box<ModelSpec<f64>>,
    },
    Disordered {
        base: Box<ModelConfig>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        hop_amplitude: f64,
        #[serde(default)]
        int_amplitude: f64,
    },
    HalfChain {
        base: Box<ModelConfig>,
    },
    DecoupledCut {
        base: Box<ModelConfig>,
        cut: usize,
        #[serde(default)]
        cross_interaction: f64,
    },
}

impl ModelConfig {
    pub fn build(&self, default_seed: u64) -> Result<ModelSpec<f64>> {
        match self {
            ModelConfig::Ssh { l, s, boundary } => build_ssh(*l, *s, *boundary),
            ModelConfig::HubbardSsh { l, s, u, boundary } => {
                build_hubbard_ssh(*l, *s, *u, *boundary)
            }
            ModelConfig::ExtendedHubbard { l, u, j, boundary } => {
                build_extended_hubbard(*l, *u, *j, *boundary)
            }
            ModelConfig::Staggered {
                l,
                delta,
                hop,
                boundary,
            } => build_staggered(*l, *delta, *hop, *boundary),
            ModelConfig::RiceMele {
                l,
                dimer,
                stagger,
                boundary,
            } => build_rice_mele(*l, *dimer, *stagger, *boundary),
            ModelConfig::SpecFile { path } => {
                let text = fs::read_to_string(path)?;
                ModelSpec::from_json(&text)
            }
            ModelConfig::Spec { spec } => Ok((**spec).clone()),
            ModelConfig::Disordered {
                base,
                seed,
                hop_amplitude,
                int_amplitude,
            } => {
                let inner = base.build(default_seed)?;
                models::add_disorder(
                    &inner,
                    seed.unwrap_or(default_seed),
                    *hop_amplitude,
                    *int_amplitude,
                )
            }
            ModelConfig::HalfChain { base } => {
                let inner = base.build(default_seed)?;
                models::restrict_half_chain(&inner, None)
            }
            ModelConfig::DecoupledCut {
                base,
                cut,
                cross_interaction,
            } => {
                let inner = base.build(default_seed)?;
                let mut dec = models::decouple_at(&inner, *cut)?;
                if *cross_interaction != 0.0 {
                    dec.push_interaction(
                        *cross_interaction,
                        vec![Mode::spinless(cut - 1), Mode::spinless(*cut)],
                    );
                    dec.finalize();
                }
                Ok(dec)
            }
        }
    }

    /// Same builder at a different chain length (for size scans).
    pub fn with_length(&self, new_l: usize) -> Result<ModelConfig> {
        let mut out = self.clone();
        match &mut out {
            ModelConfig::Ssh { l, .. }
            | ModelConfig::HubbardSsh { l, .. }
            | ModelConfig::ExtendedHubbard { l, .. }
            | ModelConfig::Staggered { l, .. }
            | ModelConfig::RiceMele { l, .. } => *l = new_l,
            ModelConfig::Disordered { base, .. }
            | ModelConfig::HalfChain { base }
            | ModelConfig::DecoupledCut { base, .. } => {
                *base = Box::new(base.with_length(new_l)?);
            }
            ModelConfig::SpecFile { .. } | ModelConfig::Spec { .. } => {
                return Err(Error::Config(
                    "explicit specs cannot be rescaled to other sizes".into(),
                ))
            }
        }
        Ok(out)
    }
}

/// Twist block: profile placement plus convention.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwistConfig {
    pub x0: Option<f64>,
    pub window: Option<f64>,
    pub shape: RampShape,
    pub convention: Convention,
}

impl Default for TwistConfig {
    fn default() -> Self {
        TwistConfig {
            x0: None,
            window: None,
            shape: RampShape::Linear,
            convention: Convention::CellA,
        }
    }
}

impl TwistConfig {
    fn params(&self) -> ProfileParams<f64> {
        ProfileParams {
            x0: self.x0,
            window: self.window,
            shape: self.shape,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub dump_matrix: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            dump_matrix: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: PathFamily<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub refine_to: Option<f64>,
}

fn default_grid_points() -> usize {
    21
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default)]
    pub hop_amplitude: f64,
    #[serde(default)]
    pub int_amplitude: f64,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default)]
    pub ramp_width: Option<f64>,
    /// Size at which the sliding-window search runs (defaults to the
    /// largest entry of `sizes`).
    #[serde(default)]
    pub search_size: Option<usize>,
}

fn default_budget() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZakConfig {
    pub nk: usize,
    pub grouping: CellGrouping,
}

impl Default for ZakConfig {
    fn default() -> Self {
        ZakConfig {
            nk: 64,
            grouping: CellGrouping::A,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindingConfig {
    pub family: PathFamily<f64>,
    #[serde(default = "default_winding_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub reverse: bool,
    #[serde(default = "default_magnitude_tol")]
    pub magnitude_tol: f64,
}

fn default_winding_points() -> usize {
    33
}

fn default_magnitude_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoupledConfig {
    pub ramp_width: Option<f64>,
}

impl Default for DecoupledConfig {
    fn default() -> Self {
        DecoupledConfig { ramp_width: None }
    }
}

/// Complete run description. Unknown keys anywhere are configuration
/// errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub twist: TwistConfig,
    #[serde(default)]
    pub solver: SolverOptions<f64>,
    #[serde(default)]
    pub tolerances: IndexTolerances<f64>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub edge: Option<EdgeConfig>,
    #[serde(default)]
    pub zak: Option<ZakConfig>,
    #[serde(default)]
    pub winding: Option<WindingConfig>,
    #[serde(default)]
    pub decoupled: Option<DecoupledConfig>,
}

/// What a finished run produced.
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    /// True when any reported index came out undefined.
    pub undefined_index: bool,
}

#[derive(Serialize, Deserialize)]
struct ArtifactRecord {
    name: String,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    artifact_version: String,
    config: Value,
    config_sha256: String,
    artifacts: Vec<ArtifactRecord>,
    timings_ms: BTreeMap<String, u64>,
}

fn model_of(config: &RunConfig) -> Result<&ModelConfig> {
    config
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs a model block".into()))
}

struct Emitter {
    out_dir: PathBuf,
    artifacts: Vec<String>,
}

impl Emitter {
    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        report::write_json(&self.out_dir.join(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<CsvField>]) -> Result<()> {
        report::write_csv(&self.out_dir.join(name), header, rows)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        report::write_atomic(&self.out_dir.join(name), contents)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

fn opt_f64(x: Option<f64>) -> CsvField {
    match x {
        Some(v) => CsvField::Num(v),
        None => CsvField::Str(String::new()),
    }
}

fn index_field(i: Option<IndexValue>) -> CsvField {
    match i.and_then(IndexValue::as_int) {
        Some(v) => CsvField::Int(v as i64),
        None => CsvField::Str("undefined".into()),
    }
}

/// Execute a parsed config, writing artifacts and the manifest into the
/// output directory.
pub fn execute(config: &RunConfig, out_override: Option<&Path>) -> Result<RunOutcome> {
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    fs::create_dir_all(&out_dir)?;
    let mut emit = Emitter {
        out_dir: out_dir.clone(),
        artifacts: Vec::new(),
    };
    let mut timings: BTreeMap<String, u64> = BTreeMap::new();
    let started = Instant::now();
    let mut undefined = false;

    let params = config.twist.params();
    let tols = config.tolerances;
    let opts = &config.solver;

    match config.command {
        Command::Index => {
            let spec = model_of(config)?.build(config.seed)?;
            let profile = params.resolve(&spec)?;
            let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
            let gs = ground_state(&matrix, opts)?;
            let rep = twist::z2_index(&gs, &matrix, &spec, &profile, config.twist.convention, &tols)?;
            undefined = rep.index.as_int().is_none();
            let digest = report::spec_digest(&spec);
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "index",
                    "spec_digest": digest,
                    "report": rep,
                }),
            )?;
            report::append_csv(
                &out_dir.join("index.csv"),
                &report::INDEX_CSV_HEADER,
                &[report::index_csv_row(&digest, &rep)],
            )?;
            emit.artifacts.push("index.csv".into());
            if config.output.dump_matrix {
                let mut buf = Vec::new();
                matrix.write_triplets(&mut buf)?;
                emit.text("matrix.triplets.txt", &buf)?;
            }
        }
        Command::Duality => {
            let spec = model_of(config)?.build(config.seed)?;
            let profile = params.resolve(&spec)?;
            let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
            let gs = ground_state(&matrix, opts)?;
            let rep = twist::duality_check(&gs, &matrix, &spec, &profile, &tols)?;
            undefined = rep.sum.is_none();
            let digest = report::spec_digest(&spec);
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "duality",
                    "spec_digest": digest,
                    "report": rep,
                }),
            )?;
            report::append_csv(
                &out_dir.join("index.csv"),
                &report::INDEX_CSV_HEADER,
                &[
                    report::index_csv_row(&digest, &rep.cell_a),
                    report::index_csv_row(&digest, &rep.cell_b),
                ],
            )?;
            emit.artifacts.push("index.csv".into());
        }
        Command::Sweep => {
            let sc = config
                .sweep
                .as_ref()
                .ok_or_else(|| Error::Config("sweep command needs a sweep block".into()))?;
            let path = PathSpec::uniform(sc.family.clone(), sc.grid_points);
            let result = scan::sweep(
                &path,
                &params,
                config.twist.convention,
                opts,
                &tols,
                sc.refine_to,
            )?;
            let rows: Vec<Vec<CsvField>> = result
                .rows
                .iter()
                .map(|r| {
                    vec![
                        CsvField::Num(r.s),
                        opt_f64(r.ground_energy),
                        opt_f64(r.gap),
                        opt_f64(r.re),
                        opt_f64(r.im),
                        index_field(r.index),
                        CsvField::Str(r.error.clone().unwrap_or_default()),
                    ]
                })
                .collect();
            emit.csv(
                "sweep.csv",
                &["s", "ground_energy", "gap", "re", "im", "index", "error"],
                &rows,
            )?;
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "sweep",
                    "transitions": result.transitions,
                }),
            )?;
        }
        Command::Ensemble => {
            let ec = config
                .ensemble
                .as_ref()
                .ok_or_else(|| Error::Config("ensemble command needs an ensemble block".into()))?;
            let base = model_of(config)?.build(config.seed)?;
            let result = scan::disorder_ensemble(
                &base,
                ec.hop_amplitude,
                ec.int_amplitude,
                &ec.seeds,
                &params,
                config.twist.convention,
                opts,
                &tols,
            )?;
            let rows: Vec<Vec<CsvField>> = result
                .rows
                .iter()
                .map(|r| {
                    vec![
                        CsvField::Int(r.seed as i64),
                        index_field(r.index),
                        opt_f64(r.re),
                        opt_f64(r.gap),
                        CsvField::Str(r.error.clone().unwrap_or_default()),
                    ]
                })
                .collect();
            emit.csv("ensemble.csv", &["seed", "index", "re", "gap", "error"], &rows)?;
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "ensemble",
                    "count_zero": result.count_zero,
                    "count_one": result.count_one,
                    "count_undefined": result.count_undefined,
                    "min_gap": result.min_gap,
                    "mean_gap": result.mean_gap,
                }),
            )?;
        }
        Command::Edge => {
            let ec = config
                .edge
                .as_ref()
                .ok_or_else(|| Error::Config("edge command needs an edge block".into()))?;
            let model = model_of(config)?;
            let rows = scan::edge_gap_scaling(
                |l| model.with_length(l)?.build(config.seed),
                &ec.sizes,
                &params,
                opts,
                &tols,
            )?;
            let csv_rows: Vec<Vec<CsvField>> = rows
                .iter()
                .map(|r| {
                    vec![
                        CsvField::Int(r.l as i64),
                        index_field(Some(r.bulk_index)),
                        CsvField::Num(r.half_chain_gap),
                    ]
                })
                .collect();
            emit.csv("edge.csv", &["l", "bulk_index", "half_chain_gap"], &csv_rows)?;
            let search_l = ec.search_size.or_else(|| ec.sizes.last().copied());
            let mut search_payload = serde_json::json!(null);
            if let Some(l) = search_l {
                let parent = model.with_length(l)?.build(config.seed)?;
                let half = models::restrict_half_chain(&parent, None)?;
                let matrix = assemble_capped(&half, half.half_filling_sector(), opts.dim_cap)?;
                let gs = ground_state(&matrix, opts)?;
                let width = ec.ramp_width.unwrap_or(l as f64 / 2.0);
                let res =
                    twist::edge_excitation_search(&half, &gs, &matrix, width, ec.budget, None)?;
                search_payload = serde_json::to_value(&res)?;
            }
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "edge",
                    "scaling": rows,
                    "search": search_payload,
                }),
            )?;
        }
        Command::Zak => {
            let zc = config.zak.clone().unwrap_or_default();
            let spec = model_of(config)?.build(config.seed)?;
            let nu = quadratic::zak_phase(&spec, zc.nk, zc.grouping)?;
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "zak",
                    "nk": zc.nk,
                    "grouping": zc.grouping,
                    "nu": nu,
                }),
            )?;
        }
        Command::Winding => {
            let wc = config
                .winding
                .as_ref()
                .ok_or_else(|| Error::Config("winding command needs a winding block".into()))?;
            let mut path = PathSpec::uniform(wc.family.clone(), wc.grid_points);
            if wc.reverse {
                path = path.reversed();
            }
            let convention = match config.twist.convention {
                // the cell conventions also work, but the plain per-site
                // twist is the default object for winding studies
                c => c,
            };
            let result = scan::winding_number(&path, &params, convention, opts, wc.magnitude_tol)?;
            let rows: Vec<Vec<CsvField>> = result
                .samples
                .iter()
                .map(|&(s, re, im)| {
                    vec![CsvField::Num(s), CsvField::Num(re), CsvField::Num(im)]
                })
                .collect();
            emit.csv("winding.csv", &["s", "re", "im"], &rows)?;
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "winding",
                    "winding": result.winding,
                }),
            )?;
        }
        Command::Bound => {
            let spec = model_of(config)?.build(config.seed)?;
            let profile = params.resolve(&spec)?;
            let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
            let gs = ground_state(&matrix, opts)?;
            let op = build_twist(&profile, config.twist.convention, spec.l, spec.spin)?;
            let (lhs, rhs) = twist::lsm_bound(&gs, &matrix, &spec, &op, &profile);
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "bound",
                    "spec_digest": report::spec_digest(&spec),
                    "lhs": lhs,
                    "rhs": rhs,
                    "satisfied": lhs <= rhs + 1e-9,
                    "slope_bound": profile.slope_bound,
                    "window": profile.window,
                    "hop_weight_bound": spec.hop_weight_bound,
                }),
            )?;
        }
        Command::Decoupled => {
            let dc = config.decoupled.clone().unwrap_or_default();
            let spec = model_of(config)?.build(config.seed)?;
            let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
            let gs = ground_state(&matrix, opts)?;
            let width = dc.ramp_width.unwrap_or(spec.l as f64 / 2.0);
            let rep = twist::decoupled_index(&spec, &gs, &matrix, width, &tols)?;
            undefined = rep.index.as_int().is_none();
            let digest = report::spec_digest(&spec);
            emit.json(
                "report.json",
                &serde_json::json!({
                    "command": "decoupled",
                    "spec_digest": digest,
                    "report": rep,
                }),
            )?;
            report::append_csv(
                &out_dir.join("index.csv"),
                &report::INDEX_CSV_HEADER,
                &[report::index_csv_row(&digest, &rep)],
            )?;
            emit.artifacts.push("index.csv".into());
        }
    }

    timings.insert("total".into(), started.elapsed().as_millis() as u64);

    // manifest last, so it can digest the artifacts
    let config_value = serde_json::to_value(config)?;
    let config_sha256 = report::sha256_hex(serde_json::to_string(&config_value)?.as_bytes());
    let mut records = Vec::new();
    for name in &emit.artifacts {
        let bytes = fs::read(out_dir.join(name))?;
        records.push(ArtifactRecord {
            name: name.clone(),
            sha256: report::sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        artifact_version: ARTIFACT_VERSION.into(),
        config: config_value,
        config_sha256,
        artifacts: records,
        timings_ms: timings,
    };
    report::write_json(&out_dir.join("run.manifest.json"), &manifest)?;

    Ok(RunOutcome {
        out_dir,
        artifacts: emit.artifacts,
        undefined_index: undefined,
    })
}

/// Apply one `key=value` override onto a JSON tree, creating intermediate
/// objects along the dotted path. The value is parsed as JSON when
/// possible, else taken as a string.
pub fn apply_set(tree: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override '{assignment}' is not of the form key=value"))
    })?;
    let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!("override path '{path}' crosses a non-object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Load a config file with `--set` and flag overrides applied (flags win).
pub fn load_config(
    path: &Path,
    sets: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut tree: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
    for s in sets {
        apply_set(&mut tree, s)?;
    }
    if let Some(seed) = seed {
        apply_set(&mut tree, &format!("seed={seed}"))?;
    }
    if let Some(out) = out {
        apply_set(&mut tree, &format!("output.dir={}", out.display()))?;
    }
    serde_json::from_value(tree).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

/// Replay a manifest and byte-compare the regenerated artifacts against the
/// recorded digests (the manifest itself is excluded: it carries timings).
pub fn reproduce(manifest_path: &Path, out: Option<&Path>, allow_override: bool) -> Result<()> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
    if manifest.artifact_version != ARTIFACT_VERSION {
        return Err(Error::Config(format!(
            "artifact version mismatch: manifest was written by {} but this binary is {}; \
             refusing to compare numerical output across versions",
            manifest.artifact_version, ARTIFACT_VERSION
        )));
    }
    let recomputed = report::sha256_hex(serde_json::to_string(&manifest.config)?.as_bytes());
    if recomputed != manifest.config_sha256 && !allow_override {
        return Err(Error::Config(
            "manifest config was edited after the run (digest mismatch); \
             pass --override to run the edited config anyway"
                .into(),
        ));
    }
    let config: RunConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| Error::Config(format!("manifest config invalid: {e}")))?;
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("reproduced")
        });
    let outcome = execute(&config, Some(&out_dir))?;
    let mut mismatches = Vec::new();
    for rec in &manifest.artifacts {
        let bytes = fs::read(outcome.out_dir.join(&rec.name))?;
        let digest = report::sha256_hex(&bytes);
        if digest != rec.sha256 {
            mismatches.push(rec.name.clone());
        }
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "reproduced artifacts differ from the recorded run: {}",
            mismatches.join(", ")
        )))
    }
}

/// Exit code for an error per the documented mapping.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) | Error::Symmetry(_) => 2,
        Error::Numerical(_) | Error::Resource(_) | Error::Io(_) => 3,
    }
}

#[derive(Parser)]
#[command(name = "topoindex", version, about = "Twist-operator index laboratory for 1D fermion chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Subcommand)]
pub enum CliCommand {
    /// Execute a run described by a JSON config file.
    Run(RunArgs),
    /// Replay a recorded run and byte-compare its outputs.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted-path override, e.g. --set twist.window=10 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: TOPOINDEX_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct ReproduceArgs {
    /// Path to a run.manifest.json from a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for the replay.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Proceed even if the manifest config was edited.
    #[arg(long = "override")]
    pub allow_override: bool,
}

/// Configure the global worker pool from the flag or TOPOINDEX_THREADS.
pub fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("TOPOINDEX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn write_error_record(out_dir: &Path, err: &Error) {
    let record = serde_json::json!({
        "error": format!("{err}"),
        "exit_code": exit_code_for(err),
    });
    let _ = report::write_json(&out_dir.join("error.json"), &record);
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(cli: Cli) -> i32 {
    match cli.command {
        CliCommand::Run(args) => {
            init_threads(args.threads);
            let config = match load_config(
                &args.config,
                &args.sets,
                args.seed,
                args.out.as_deref(),
            ) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            let out_dir = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&config.output.dir));
            match execute(&config, Some(&out_dir)) {
                Ok(outcome) => {
                    for name in &outcome.artifacts {
                        println!("wrote {}", outcome.out_dir.join(name).display());
                    }
                    if outcome.undefined_index {
                        eprintln!("index undefined; see report.json");
                        4
                    } else {
                        0
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    write_error_record(&out_dir, &e);
                    exit_code_for(&e)
                }
            }
        }
        CliCommand::Reproduce(args) => {
            init_threads(args.threads);
            match reproduce(&args.manifest, args.out.as_deref(), args.allow_override) {
                Ok(()) => {
                    println!("reproduction matched the recorded artifacts");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let mut tree = serde_json::json!({"twist": {"window": 8.0}, "seed": 1});
        apply_set(&mut tree, "twist.window=10").unwrap();
        apply_set(&mut tree, "twist.shape=smoothstep").unwrap();
        apply_set(&mut tree, "seed=7").unwrap();
        assert_eq!(tree["twist"]["window"], serde_json::json!(10));
        assert_eq!(tree["twist"]["shape"], serde_json::json!("smoothstep"));
        assert_eq!(tree["seed"], serde_json::json!(7));
    }

    #[test]
    fn unknown_keys_fail_to_parse() {
        let text = r#"{"command": "index", "bogus": 3}"#;
        let tree: Value = serde_json::from_str(text).unwrap();
        assert!(serde_json::from_value::<RunConfig>(tree).is_err());
    }
}
