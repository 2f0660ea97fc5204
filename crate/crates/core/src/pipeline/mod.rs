//! Stage orchestration: logs, surrogate, search, validation, guidelines
//! and the summary report, all rooted in one output directory.
//!
//! Every stage reads its inputs from disk, checks them against the run
//! manifest, writes its artifacts and records their hashes.

mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flightlog::{self, generate_campaign, read_log, segment, write_log, CampaignOptions, LogSet};
use crate::guideline::{self, pareto_optimize, MoeaParams, RangeGuideline, ValidationRecord, ValidationSet};
use crate::monitor::{classify, PrearmRules, Thresholds, VerdictLabel};
use crate::paramspec::ParameterTable;
use crate::predictor::{PredictorHyperparams, SurrogateModel, ThresholdSplit, MODEL_FILE};
use crate::rng;
use crate::search::{self, PotentialSet, SearchParams};
use crate::simkernel::{run_mission, Injection, Mission, SimOptions};

pub use manifest::{hash_file, sha256_hex, Artifact, RunManifest, StageRecord, RUN_MANIFEST_FILE};

pub const STAGES: [&str; 6] = ["genlogs", "train", "search", "validate", "guideline", "report"];

pub const LOG_DIR: &str = "logs";
pub const POTENTIAL_FILE: &str = "potential.csv";
pub const RECORDS_FILE: &str = "records.json";
pub const RECORDS_CSV: &str = "records.csv";
pub const GUIDELINES_FILE: &str = "guidelines.csv";
pub const FRONT_FILE: &str = "front.csv";
pub const FRONT_PLOT_FILE: &str = "front_plot.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Parameter table, mission and pre-arm rules shared by every stage.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub table: ParameterTable,
    pub mission: Mission,
    pub rules: PrearmRules,
}

impl Inputs {
    pub fn builtin() -> Self {
        Self {
            table: ParameterTable::builtin(),
            mission: Mission::builtin(),
            rules: PrearmRules::builtin(),
        }
    }

    /// Loads whichever files are given; the rest fall back to built-ins.
    pub fn load(table: Option<&Path>, mission: Option<&Path>, prearm: Option<&Path>) -> Result<Self> {
        Ok(Self {
            table: table.map_or_else(|| Ok(ParameterTable::builtin()), ParameterTable::load)?,
            mission: mission.map_or_else(|| Ok(Mission::builtin()), Mission::load)?,
            rules: prearm.map_or_else(|| Ok(PrearmRules::builtin()), PrearmRules::load)?,
        })
    }

    fn hashes(&self) -> Result<(String, String, String)> {
        Ok((
            sha256_hex(self.table.to_csv_string().as_bytes()),
            sha256_hex(self.mission.to_text().as_bytes()),
            sha256_hex(serde_json::to_string(&self.rules)?.as_bytes()),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    /// When a pre-arm-rejected config is swapped in, seconds after start.
    pub injection_time: f64,
    pub thresholds: Thresholds,
    pub sim: SimOptions,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            injection_time: 20.0,
            thresholds: Thresholds::default(),
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub campaign: CampaignOptions,
    pub predictor: PredictorHyperparams,
    pub threshold_split: ThresholdSplit,
    pub search: SearchParams,
    pub bandwidth: Option<f64>,
    pub cluster_sample: usize,
    pub validate: ValidateOptions,
    pub moea: MoeaParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            campaign: CampaignOptions::default(),
            predictor: PredictorHyperparams::default(),
            threshold_split: ThresholdSplit::Train,
            search: SearchParams::default(),
            bandwidth: None,
            cluster_sample: search::DEFAULT_CLUSTER_SAMPLE,
            validate: ValidateOptions::default(),
            moea: MoeaParams::default(),
        }
    }
}

/// Verdict tally over validated configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub total: usize,
    pub counts: BTreeMap<VerdictLabel, usize>,
    pub incorrect: usize,
    /// Incorrect share of the validated set; 0 when it is empty.
    pub tp_ratio: f64,
}

impl Report {
    pub fn from_records(records: &[ValidationRecord]) -> Self {
        let mut counts: BTreeMap<VerdictLabel, usize> = VerdictLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for r in records {
            *counts.get_mut(&r.verdict.label).expect("all labels present") += 1;
        }
        let incorrect = records.iter().filter(|r| r.incorrect()).count();
        let total = records.len();
        let tp_ratio = if total == 0 {
            0.0
        } else {
            incorrect as f64 / total as f64
        };
        Self {
            total,
            counts,
            incorrect,
            tp_ratio,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("validated,{}\n", self.total));
        for (label, n) in &self.counts {
            out.push_str(&format!("{},{n}\n", label.as_str()));
        }
        out.push_str(&format!("incorrect,{}\n", self.incorrect));
        out.push_str(&format!("tp_ratio,{:.6}\n", self.tp_ratio));
        out
    }
}

/// Runs one configuration the way the validation stage does.
pub fn validate_config(
    inputs: &Inputs,
    config: &crate::paramspec::Configuration,
    opts: &ValidateOptions,
    seed: u64,
) -> Result<(crate::monitor::Verdict, bool, bool)> {
    let prearm = inputs.rules.check(&inputs.table, config);
    let sim = SimOptions { seed, ..opts.sim };
    if prearm.accepted {
        let trace = run_mission(&inputs.table, config, &inputs.mission, None, &sim)?;
        Ok((classify(&trace, &prearm, false, &opts.thresholds), true, false))
    } else {
        let inj = Injection {
            time: opts.injection_time,
            config: config.clone(),
        };
        let base = inputs.table.default_configuration();
        let trace = run_mission(&inputs.table, &base, &inputs.mission, Some(&inj), &sim)?;
        Ok((classify(&trace, &prearm, true, &opts.thresholds), false, true))
    }
}

pub struct Pipeline {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub inputs: Inputs,
    manifest: RunManifest,
}

impl Pipeline {
    /// Opens (or starts) a run in `out_dir`. An existing manifest must have
    /// been produced with the same table, mission and pre-arm rules.
    pub fn open(out_dir: impl Into<PathBuf>, seed: u64, inputs: Inputs) -> Result<Self> {
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let (t, m, p) = inputs.hashes()?;
        let manifest = match RunManifest::load(&out_dir)? {
            Some(existing) => {
                if existing.table_sha256 != t || existing.mission_sha256 != m || existing.prearm_sha256 != p {
                    return Err(Error::Precondition(
                        "parameter table, mission or pre-arm rules differ from the ones recorded in the run manifest"
                            .into(),
                    ));
                }
                existing
            }
            None => RunManifest::new(t, m, p),
        };
        Ok(Self {
            out_dir,
            seed,
            inputs,
            manifest,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn require(&self, stages: &[&str], rel: &str) -> Result<PathBuf> {
        for s in stages {
            self.manifest.verify(&self.out_dir, s)?;
        }
        let p = self.path(rel);
        if !p.exists() {
            return Err(Error::io(
                &p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "required input is missing"),
            ));
        }
        Ok(p)
    }

    fn finish(&mut self, stage: &str, started: Instant, files: Vec<PathBuf>) -> Result<()> {
        let secs = started.elapsed().as_secs_f64();
        self.manifest.record(&self.out_dir, stage, self.seed, secs, &files)?;
        self.manifest.save(&self.out_dir)
    }

    pub fn genlogs(&mut self, opts: &CampaignOptions) -> Result<LogSet> {
        let started = Instant::now();
        let opts = CampaignOptions {
            seed: self.seed,
            ..opts.clone()
        };
        let logs = generate_campaign(&self.inputs.table, &self.inputs.mission, &self.inputs.rules, &opts)?;
        let dir = self.path(LOG_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        write_log(&logs, &dir)?;
        let mut files = vec![PathBuf::from(LOG_DIR).join(flightlog::MANIFEST_FILE)];
        files.extend(
            logs.flights
                .iter()
                .map(|f| PathBuf::from(LOG_DIR).join(format!("flight_{}.csv", f.id))),
        );
        self.finish("genlogs", started, files)?;
        Ok(logs)
    }

    fn load_logs(&self) -> Result<LogSet> {
        let dir = self.require(&["genlogs"], LOG_DIR)?;
        read_log(dir)
    }

    pub fn train(&mut self, hp: &PredictorHyperparams, split: ThresholdSplit) -> Result<SurrogateModel> {
        let started = Instant::now();
        let logs = self.load_logs()?;
        let model = SurrogateModel::fit(&logs, &self.inputs.table, hp, split, self.seed)?;
        model.save(self.path(MODEL_FILE))?;
        self.finish("train", started, vec![PathBuf::from(MODEL_FILE)])?;
        Ok(model)
    }

    pub fn search(
        &mut self,
        params: &SearchParams,
        bandwidth: Option<f64>,
        cluster_sample: usize,
    ) -> Result<PotentialSet> {
        let started = Instant::now();
        let logs = self.load_logs()?;
        let model = SurrogateModel::load(self.require(&["train"], MODEL_FILE)?)?;
        model.check_table(&self.inputs.table)?;
        let segments = segment(&logs, model.h)?;
        let (reps, summary) =
            search::choose_representatives(&model, &segments, params, bandwidth, cluster_sample, self.seed)?;
        let mut set = search::run_search(&model, &segments, &reps, &self.inputs.table, params, self.seed)?;
        set.metadata.clusters = Some(summary);
        set.save(self.path(POTENTIAL_FILE))?;
        let meta = Path::new(POTENTIAL_FILE).with_extension("json");
        self.finish("search", started, vec![PathBuf::from(POTENTIAL_FILE), meta])?;
        Ok(set)
    }

    pub fn validate(&mut self, opts: &ValidateOptions) -> Result<ValidationSet> {
        let started = Instant::now();
        let potential = PotentialSet::load(self.require(&["search"], POTENTIAL_FILE)?, &self.inputs.table)?;
        let seed = self.seed;
        let inputs = &self.inputs;
        let records = potential
            .entries
            .par_iter()
            .enumerate()
            .map(|(id, e)| {
                let sim_seed = rng::derive_seed(seed, &[0x7A1, id as u64]);
                let (verdict, prearm_accepted, injected) = validate_config(inputs, &e.config, opts, sim_seed)?;
                Ok(ValidationRecord {
                    id,
                    segment_id: Some(e.segment_id),
                    fitness: Some(e.fitness),
                    config: e.config.clone(),
                    prearm_accepted,
                    injected,
                    verdict,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let set = ValidationSet::new(&self.inputs.table, records);
        set.save(self.path(RECORDS_FILE))?;
        let csv = self.path(RECORDS_CSV);
        std::fs::write(&csv, set.to_csv_string()?).map_err(|e| Error::io(&csv, e))?;
        self.finish(
            "validate",
            started,
            vec![PathBuf::from(RECORDS_FILE), PathBuf::from(RECORDS_CSV)],
        )?;
        Ok(set)
    }

    fn load_records(&self) -> Result<ValidationSet> {
        let set = ValidationSet::load(self.require(&["validate"], RECORDS_FILE)?)?;
        let names: Vec<&str> = self.inputs.table.names().collect();
        if set.parameters != names {
            return Err(Error::Precondition(
                "record file parameters differ from the parameter table".into(),
            ));
        }
        Ok(set)
    }

    pub fn guideline(&mut self, params: &MoeaParams) -> Result<Vec<RangeGuideline>> {
        let started = Instant::now();
        let set = self.load_records()?;
        let front = pareto_optimize(&set.records, &self.inputs.table, params, self.seed)?;
        let outputs = [
            (GUIDELINES_FILE, guideline::guidelines_csv(&self.inputs.table, &front)?),
            (FRONT_FILE, guideline::front_csv(&front)?),
            (FRONT_PLOT_FILE, guideline::plot_csv(&front)?),
        ];
        for (name, text) in &outputs {
            let p = self.path(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        self.finish(
            "guideline",
            started,
            outputs.iter().map(|(n, _)| PathBuf::from(n)).collect(),
        )?;
        Ok(front)
    }

    /// Writes the verdict tally and a separate per-stage timing table.
    pub fn report(&mut self) -> Result<Report> {
        let started = Instant::now();
        let set = self.load_records()?;
        let report = Report::from_records(&set.records);
        let p = self.path(REPORT_FILE);
        std::fs::write(&p, report.to_csv_string()).map_err(|e| Error::io(&p, e))?;
        self.finish("report", started, vec![PathBuf::from(REPORT_FILE)])?;

        let mut timings = String::from("stage,wall_clock_s\n");
        for s in STAGES {
            if let Some(rec) = self.manifest.stages.get(s) {
                timings.push_str(&format!("{s},{:.3}\n", rec.wall_clock_s));
            }
        }
        let t = self.path(TIMINGS_FILE);
        std::fs::write(&t, timings).map_err(|e| Error::io(&t, e))?;
        Ok(report)
    }

    pub fn run_all(&mut self, opts: &RunOptions) -> Result<Report> {
        self.genlogs(&opts.campaign)?;
        self.train(&opts.predictor, opts.threshold_split)?;
        self.search(&opts.search, opts.bandwidth, opts.cluster_sample)?;
        self.validate(&opts.validate)?;
        self.guideline(&opts.moea)?;
        self.report()
    }
}

#[cfg(test)]
mod tests;
