use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use carenet_core::fasl::{load_parameters, LoadedParameters};
use carenet_core::pipeline::{self, read_gates, DataDir, DatasetManifest};
use carenet_core::synth::{generate, Scenario};
use chrono::NaiveDate;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub struct Ctx<'a> {
    pub data: DataDir,
    pub config: Option<PathBuf>,
    pub format: Format,
    pub out: &'a mut dyn Write,
}

impl Ctx<'_> {
    pub fn parameters(&self) -> Result<LoadedParameters> {
        let loaded = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                load_parameters(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
            }
            None => self.data.parameters()?,
        };
        Ok(loaded)
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(&mut *self.out, value)?;
        writeln!(self.out)?;
        Ok(())
    }

    fn csv(&mut self, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut *self.out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn emit<T: Serialize>(&mut self, value: &T, header: &[&str], rows: impl FnOnce() -> Vec<Vec<String>>) -> Result<()> {
        match self.format {
            Format::Json => self.json(value),
            Format::Csv => self.csv(header, rows()),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn range(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<Option<(NaiveDate, NaiveDate)>> {
    match (from, to) {
        (Some(f), Some(t)) => Ok(Some((f, t))),
        (None, None) => Ok(None),
        _ => bail!("--from and --to go together"),
    }
}

pub fn ingest(ctx: &mut Ctx, manifest: &DatasetManifest, captures: &[PathBuf]) -> Result<()> {
    if captures.is_empty() {
        bail!("no capture files given");
    }
    let report = pipeline::ingest(&ctx.data, manifest, captures)?;
    let row = vec![
        report.dataset.clone(),
        report.captures.to_string(),
        report.records.to_string(),
        report.rejected.to_string(),
        report.malformed.to_string(),
        report.partitions.to_string(),
    ];
    ctx.emit(
        &report,
        &["dataset", "captures", "records", "rejected", "malformed", "partitions"],
        || vec![row],
    )
}

pub fn features(ctx: &mut Ctx, ds: &str, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<()> {
    let params = ctx.parameters()?;
    let vectors = pipeline::compute_features(
        &ctx.data,
        ds,
        range(from, to)?,
        params.parameters.gate.validity_threshold,
    )?;
    ctx.emit(&vectors, &["user", "date", "valid", "coverage", "feature", "value"], || {
        vectors
            .iter()
            .flat_map(|v| {
                v.values.iter().map(move |(k, x)| {
                    vec![
                        v.user_id.clone(),
                        v.date.to_string(),
                        v.valid.to_string(),
                        v.coverage.to_string(),
                        k.clone(),
                        x.to_string(),
                    ]
                })
            })
            .collect()
    })
}

pub fn score(ctx: &mut Ctx, ds: &str, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<()> {
    let params = ctx.parameters()?;
    let scores = pipeline::score(&ctx.data, ds, &params, range(from, to)?)?;
    let rows: Vec<_> = scores.iter().flat_map(|s| s.likelihoods.iter()).cloned().collect();
    ctx.emit(
        &serde_json::json!({ "config_hash": params.config_hash, "likelihoods": rows }),
        &["user", "date", "criterion", "valid", "likelihood"],
        || {
            rows.iter()
                .map(|l| {
                    vec![
                        l.user_id.clone(),
                        l.date.to_string(),
                        l.criterion.to_string(),
                        l.valid.to_string(),
                        opt(l.likelihood),
                    ]
                })
                .collect()
        },
    )
}

pub fn gate(ctx: &mut Ctx, ds: &str, as_of: NaiveDate, user: Option<&str>) -> Result<()> {
    let params = ctx.parameters()?;
    let hash = params.config_hash.clone();
    if ctx.data.scored_users(ds, &hash)?.is_empty() {
        pipeline::score(&ctx.data, ds, &params, None)?;
    }
    let mut snapshots = Vec::new();
    for u in ctx.data.scored_users(ds, &hash)? {
        if user.is_some_and(|want| want != u) {
            continue;
        }
        let likelihoods = pipeline::read_likelihoods(&ctx.data, ds, &hash, &u)?;
        let gates = read_gates(&ctx.data, ds, &hash, &u)?;
        snapshots.push(pipeline::snapshot_at(&u, ds, &params, &likelihoods, &gates, Some(as_of)));
    }
    if let Some(want) = user {
        if snapshots.is_empty() {
            bail!("no scores for user {want:?} in dataset {ds:?}");
        }
    }
    ctx.emit(
        &snapshots,
        &["user", "date", "criterion", "likelihood", "positives", "observed", "present", "episode"],
        || {
            snapshots
                .iter()
                .flat_map(|s| {
                    s.criteria.iter().map(move |c| {
                        vec![
                            s.user_id.clone(),
                            as_of.to_string(),
                            c.criterion.to_string(),
                            opt(c.likelihood),
                            c.positives.to_string(),
                            c.observed.to_string(),
                            c.present.to_string(),
                            s.episode.to_string(),
                        ]
                    })
                })
                .collect()
        },
    )
}

/// Loads a scenario file, or a bundled scenario by name.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return Ok(Scenario::from_json(&text)?);
    }
    Scenario::builtin(spec).with_context(|| format!("{spec} is neither a file nor a bundled scenario"))
}

pub fn simulate(ctx: &mut Ctx, scenario: &str, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let scenario = load_scenario(scenario)?;
    let seed = seed.unwrap_or(scenario.seed);
    let output = generate(&scenario, seed)?;
    let files = output.write_to(out_dir)?;
    let summary = serde_json::json!({
        "scenario": scenario.name,
        "seed": seed,
        "start_date": scenario.start_date,
        "days": scenario.days,
        "delta_secs": scenario.delta_secs,
        "ledger_entries": output.ledger.len(),
        "files": files,
    });
    let rows = files.iter().map(|f| vec![f.display().to_string()]).collect();
    ctx.emit(&summary, &["file"], || rows)
}

pub fn run(
    ctx: &mut Ctx,
    manifest: &DatasetManifest,
    captures: &[PathBuf],
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> Result<()> {
    let params = ctx.parameters()?;
    let run = pipeline::run_pipeline(&ctx.data, manifest, captures, range(from, to)?, &params)?;
    let rows = run
        .stages
        .iter()
        .map(|s| vec![run.run_id.clone(), s.stage.clone(), s.count.to_string(), s.millis.to_string()])
        .collect();
    ctx.emit(&run, &["run_id", "stage", "count", "millis"], || rows)
}
