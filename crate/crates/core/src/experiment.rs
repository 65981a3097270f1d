//! End-to-end runs, sweeps, and the selection pipeline.
//!
//! A run composes topology, workload, non-iid shards, sub-pool formation,
//! simulation and accounting for one `(k, lambda_max, seed)` point. Sweeps
//! run the cartesian product of the configured lists and write one summary
//! CSV plus one JSON record per run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{load_mnist, LabeledDataset};
use crate::error::{Error, Result};
use crate::pooling::{form_subpools_with, PoolingPolicy};
use crate::resources::{account, reserve, summarize, CostLedger, CostSummary};
use crate::sim::{simulate, CurvePoint, SimOutcome};
use crate::surrogate::{
    gpr_fit, loo_errors, select_policy, Candidate, PolicyFeatures, PolicyObservation, SurrogateReport, Target,
    WorkloadFeatures,
};
use crate::topology::{generate_topology, partition_noniid, sample_arrival_rates, DataShard, NetworkTopology};

pub const RECORD_FORMAT_VERSION: u32 = 1;

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "k",
    "lambda_max",
    "seed",
    "final_accuracy",
    "final_loss",
    "comm_ru_avg",
    "comp_ru_avg",
    "total_ru_avg",
    "overage_ru",
];

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Datasets {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let train = load_mnist(&config.train_images, &config.train_labels)?;
        let mut test = load_mnist(&config.test_images, &config.test_labels)?;
        if config.test_limit > 0 {
            test = test.head(config.test_limit);
        }
        Ok(Self { train, test })
    }
}

/// RU totals of a run, without the per-second series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub migration_ru: f64,
    pub processing_ru: f64,
    pub exchange_ru: f64,
    pub training_ru: f64,
    pub communication_overage_ru: f64,
    pub computing_overage_ru: f64,
}

impl From<&CostLedger> for LedgerTotals {
    fn from(l: &CostLedger) -> Self {
        Self {
            migration_ru: l.migration_ru,
            processing_ru: l.processing_ru,
            exchange_ru: l.exchange_ru,
            training_ru: l.training_ru,
            communication_overage_ru: l.communication_overage_ru,
            computing_overage_ru: l.computing_overage_ru,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub k: usize,
    pub lambda_max: f64,
    pub seed: u64,
    pub policy: PoolingPolicy,
    pub curve: Vec<CurvePoint>,
    pub ledger: LedgerTotals,
    pub cost: CostSummary,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub wall_clock_s: f64,
    /// Threads used by numeric kernels within the run.
    pub kernel_threads: usize,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: Self = serde_json::from_str(text)?;
        if record.format_version != RECORD_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "run record format {} (expected {RECORD_FORMAT_VERSION})",
                record.format_version
            )));
        }
        Ok(record)
    }

    pub fn summary_row(&self) -> SummaryRow {
        let h = f64::from(self.config.horizon_s);
        SummaryRow {
            k: self.k,
            lambda_max: self.lambda_max,
            seed: self.seed,
            final_accuracy: self.final_accuracy,
            final_loss: self.final_loss,
            comm_ru_avg: self.cost.communication_ru / h,
            comp_ru_avg: self.cost.computing_ru / h,
            total_ru_avg: self.cost.average_ru_per_s,
            overage_ru: self.ledger.communication_overage_ru + self.ledger.computing_overage_ru,
        }
    }

    pub fn file_name(&self) -> String {
        format!("run_k{}_lambda{}_seed{}.json", self.k, self.lambda_max, self.seed)
    }
}

/// One line of the summary CSV, fields in column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub k: usize,
    pub lambda_max: f64,
    pub seed: u64,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub comm_ru_avg: f64,
    pub comp_ru_avg: f64,
    pub total_ru_avg: f64,
    pub overage_ru: f64,
}

/// Everything a run produced, for callers that need more than the record.
pub struct RunArtifacts {
    pub topology: NetworkTopology,
    pub shards: Vec<DataShard>,
    pub policy: PoolingPolicy,
    pub outcome: SimOutcome,
    pub ledger: CostLedger,
    pub record: RunRecord,
}

/// Topology with rates for `(seed, lambda_max)`, as used by every run.
pub fn workload(config: &ExperimentConfig, lambda_max: f64, seed: u64) -> Result<NetworkTopology> {
    let topology = generate_topology(config.n_aps, config.area_side, seed)?;
    sample_arrival_rates(&topology, lambda_max, seed)
}

pub fn execute_run(
    config: &ExperimentConfig,
    data: &Datasets,
    k: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<RunArtifacts> {
    let wrap = |e: Error| Error::Run {
        k,
        lambda_max,
        seed,
        source: Box::new(e),
    };
    let started = Instant::now();
    let topology = workload(config, lambda_max, seed).map_err(wrap)?;
    let shards = partition_noniid(data.train.labels(), config.n_aps, config.shards_per_ap, seed).map_err(wrap)?;
    let policy = form_subpools_with(&topology, k, seed, &config.pooling_options()).map_err(wrap)?;
    let sim = config.sim_config(seed);
    let outcome = simulate(&topology, &policy, &shards, &sim, &data.train, &data.test).map_err(wrap)?;
    let model = config.cost_model();
    let plan = reserve(&topology, &policy, &model, &sim).map_err(wrap)?;
    let ledger = account(&outcome.trace, &plan, &model).map_err(wrap)?;

    let last = *outcome.curve.last().expect("curve has the t=0 point");
    let record = RunRecord {
        format_version: RECORD_FORMAT_VERSION,
        config: config.clone(),
        k,
        lambda_max,
        seed,
        policy: policy.clone(),
        curve: outcome.curve.clone(),
        ledger: LedgerTotals::from(&ledger),
        cost: summarize(&ledger),
        final_accuracy: last.accuracy,
        final_loss: last.loss,
        wall_clock_s: started.elapsed().as_secs_f64(),
        kernel_threads: 1,
    };
    Ok(RunArtifacts {
        topology,
        shards,
        policy,
        outcome,
        ledger,
        record,
    })
}

pub fn run_single(
    config: &ExperimentConfig,
    data: &Datasets,
    k: usize,
    lambda_max: f64,
    seed: u64,
) -> Result<RunRecord> {
    execute_run(config, data, k, lambda_max, seed).map(|a| a.record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub k: usize,
    pub lambda_max: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SummaryRow>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

fn sweep_points(config: &ExperimentConfig) -> Vec<(usize, f64, u64)> {
    let mut points = Vec::new();
    for &k in &config.k {
        for &l in &config.lambda_max {
            for &s in &config.seeds {
                points.push((k, l, s));
            }
        }
    }
    points
}

/// Runs every `(k, lambda_max, seed)` point. Failed runs are reported in
/// `failures` without stopping the sweep. Rows are sorted by
/// `(k, lambda_max, seed)`.
pub fn run_sweep(config: &ExperimentConfig, data: &Datasets) -> Result<SweepResult> {
    config.validate()?;
    let points = sweep_points(config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(usize, f64, u64, Result<RunRecord>)> = pool.install(|| {
        points
            .par_iter()
            .map(|&(k, l, s)| (k, l, s, run_single(config, data, k, l, s)))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, lambda_max, seed, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(RunFailure {
                k,
                lambda_max,
                seed,
                error: e.to_string(),
            }),
        }
    }
    let key = |k: usize, l: f64, s: u64| (k, ordered(l), s);
    records.sort_by_key(|r| key(r.k, r.lambda_max, r.seed));
    failures.sort_by_key(|f| key(f.k, f.lambda_max, f.seed));
    let rows = records.iter().map(RunRecord::summary_row).collect();
    Ok(SweepResult {
        rows,
        records,
        failures,
    })
}

/// Total order on finite floats for sort keys.
fn ordered(v: f64) -> i64 {
    let bits = v.to_bits() as i64;
    if bits < 0 {
        bits ^ i64::MAX
    } else {
        bits
    }
}

pub fn summary_csv_string(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(SUMMARY_COLUMNS).map_err(csv_io)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    fs::write(path, summary_csv_string(rows)?)?;
    Ok(())
}

/// Parses a summary CSV, reporting the offending row and column on error.
pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Csv {
        row: 1,
        column: String::new(),
        msg: e.to_string(),
    })?;
    let names: Vec<&str> = header.iter().collect();
    if names != SUMMARY_COLUMNS {
        let column = SUMMARY_COLUMNS
            .iter()
            .zip(names.iter().chain(std::iter::repeat(&"")))
            .find(|(want, got)| want != got)
            .map(|(want, _)| want.to_string())
            .unwrap_or_else(|| names.get(SUMMARY_COLUMNS.len()).unwrap_or(&"").to_string());
        return Err(Error::Csv {
            row: 1,
            column,
            msg: format!("header must be `{}`", SUMMARY_COLUMNS.join(",")),
        });
    }

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            column: String::new(),
            msg: e.to_string(),
        })?;
        if rec.len() != SUMMARY_COLUMNS.len() {
            return Err(Error::Csv {
                row,
                column: String::new(),
                msg: format!("{} fields, expected {}", rec.len(), SUMMARY_COLUMNS.len()),
            });
        }
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, row: usize, col: usize) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            rec[col].trim().parse().map_err(|e: T::Err| Error::Csv {
                row,
                column: SUMMARY_COLUMNS[col].to_string(),
                msg: format!("`{}`: {e}", &rec[col]),
            })
        }
        let parsed = SummaryRow {
            k: field(&rec, row, 0)?,
            lambda_max: field(&rec, row, 1)?,
            seed: field(&rec, row, 2)?,
            final_accuracy: field(&rec, row, 3)?,
            final_loss: field(&rec, row, 4)?,
            comm_ru_avg: field(&rec, row, 5)?,
            comp_ru_avg: field(&rec, row, 6)?,
            total_ru_avg: field(&rec, row, 7)?,
            overage_ru: field(&rec, row, 8)?,
        };
        if !(0.0..=1.0).contains(&parsed.final_accuracy) {
            return Err(Error::Csv {
                row,
                column: "final_accuracy".into(),
                msg: format!("{} outside [0, 1]", parsed.final_accuracy),
            });
        }
        rows.push(parsed);
    }
    Ok(rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    parse_summary_csv(&fs::read_to_string(path)?)
}

/// Writes `summary.csv`, `runs/*.json` and, if any run failed,
/// `failures.csv` under `dir`.
pub fn write_sweep(dir: &Path, result: &SweepResult) -> Result<()> {
    let runs = dir.join("runs");
    fs::create_dir_all(&runs)?;
    write_summary_csv(&dir.join("summary.csv"), &result.rows)?;
    for r in &result.records {
        fs::write(runs.join(r.file_name()), r.to_json()?)?;
    }
    if !result.failures.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("failures.csv")).map_err(csv_io)?;
        for f in &result.failures {
            w.serialize(f).map_err(csv_io)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| RunRecord::from_json(&fs::read_to_string(p)?))
        .collect()
}

/// Surrogate training data: summary rows joined with the workload
/// statistics regenerated from each row's seed.
pub fn observations(config: &ExperimentConfig, rows: &[SummaryRow]) -> Result<Vec<PolicyObservation>> {
    rows.iter()
        .map(|r| {
            let (rate_mean, rate_std) = workload(config, r.lambda_max, r.seed)?.rate_stats();
            Ok(PolicyObservation {
                features: PolicyFeatures {
                    k: r.k,
                    lambda_max: r.lambda_max,
                    rate_mean,
                    rate_std,
                },
                accuracy: r.final_accuracy,
                avg_ru_per_s: r.total_ru_avg,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub required_accuracy: f64,
    pub workload: WorkloadFeatures,
    pub candidates: Vec<Candidate>,
    pub accuracy_loo_mae: Option<f64>,
    pub cost_loo_mae: Option<f64>,
    pub accuracy_surrogate: String,
    pub cost_surrogate: String,
}

impl SelectionReport {
    pub fn is_feasible(&self) -> bool {
        !self.candidates.is_empty()
    }
}

impl std::fmt::Display for SelectionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "required_accuracy: {}", self.required_accuracy)?;
        writeln!(
            f,
            "workload: lambda_max={} rate_mean={} rate_std={}",
            self.workload.lambda_max, self.workload.rate_mean, self.workload.rate_std
        )?;
        writeln!(f, "\n[accuracy surrogate]\n{}", self.accuracy_surrogate)?;
        writeln!(f, "[cost surrogate]\n{}", self.cost_surrogate)?;
        if self.candidates.is_empty() {
            return writeln!(f, "no candidate meets the requirement");
        }
        writeln!(
            f,
            "rank,k,predicted_accuracy,accuracy_std,predicted_avg_ru_per_s,cost_std"
        )?;
        for (i, c) in self.candidates.iter().enumerate() {
            writeln!(
                f,
                "{},{},{:.4},{:.4},{:.3},{:.3}",
                i + 1,
                c.k,
                c.predicted_accuracy,
                c.accuracy_variance.sqrt(),
                c.predicted_cost,
                c.cost_variance.sqrt()
            )?;
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Fits accuracy and cost surrogates on sweep results and ranks the swept
/// `k` values for the workload at `lambda_max` (default: the largest swept
/// value).
pub fn fit_and_select(
    config: &ExperimentConfig,
    rows: &[SummaryRow],
    required_accuracy: f64,
    lambda_max: Option<f64>,
) -> Result<SelectionReport> {
    if rows.is_empty() {
        return Err(Error::Csv {
            row: 1,
            column: String::new(),
            msg: "no data rows".into(),
        });
    }
    let obs = observations(config, rows)?;
    let hyper = config.gpr_hyperparams();
    let acc = gpr_fit(&obs, Target::Accuracy, &hyper)?;
    let cost = gpr_fit(&obs, Target::Cost, &hyper)?;
    let (acc_loo, cost_loo) = if obs.len() >= 2 {
        (
            Some(mean(&loo_errors(&obs, Target::Accuracy, &hyper)?)),
            Some(mean(&loo_errors(&obs, Target::Cost, &hyper)?)),
        )
    } else {
        (None, None)
    };

    let target_lambda = lambda_max.unwrap_or_else(|| rows.iter().map(|r| r.lambda_max).fold(f64::MIN, f64::max));
    let at_lambda: Vec<&PolicyObservation> = obs.iter().filter(|o| o.features.lambda_max == target_lambda).collect();
    let workload = if at_lambda.is_empty() {
        // unseen lambda_max: use the expected statistics of U(0, lambda_max]
        WorkloadFeatures {
            lambda_max: target_lambda,
            rate_mean: target_lambda / 2.0,
            rate_std: target_lambda / 12f64.sqrt(),
        }
    } else {
        let means: Vec<f64> = at_lambda.iter().map(|o| o.features.rate_mean).collect();
        let stds: Vec<f64> = at_lambda.iter().map(|o| o.features.rate_std).collect();
        WorkloadFeatures {
            lambda_max: target_lambda,
            rate_mean: mean(&means),
            rate_std: mean(&stds),
        }
    };

    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let candidates = select_policy(&acc, &cost, &ks, &workload, required_accuracy)?;

    Ok(SelectionReport {
        required_accuracy,
        workload,
        candidates,
        accuracy_loo_mae: acc_loo,
        cost_loo_mae: cost_loo,
        accuracy_surrogate: SurrogateReport {
            surrogate: &acc,
            loo_mae: acc_loo,
        }
        .to_string(),
        cost_surrogate: SurrogateReport {
            surrogate: &cost,
            loo_mae: cost_loo,
        }
        .to_string(),
    })
}

/// Mean, min and max of a group of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Aggregated series behind the standard figures, grouped across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// `(k, lambda_max, t, accuracy, loss)`
    pub curves: Vec<(usize, f64, u32, Band, Band)>,
    /// `(k, lambda_max, communication, computing)` average RU/s
    pub ru_bars: Vec<(usize, f64, Band, Band)>,
    /// `(lambda_max, k, final accuracy, total average RU/s)`
    pub lambda_tradeoff: Vec<(f64, usize, Band, Band)>,
}

pub fn plot_data(rows: &[SummaryRow], records: &[RunRecord]) -> PlotData {
    let mut by_group: BTreeMap<(usize, i64), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        by_group.entry((r.k, ordered(r.lambda_max))).or_default().push(r);
    }
    let ru_bars = by_group
        .values()
        .map(|g| {
            let comm: Vec<f64> = g.iter().map(|r| r.comm_ru_avg).collect();
            let comp: Vec<f64> = g.iter().map(|r| r.comp_ru_avg).collect();
            (g[0].k, g[0].lambda_max, Band::of(&comm), Band::of(&comp))
        })
        .collect();
    let mut lambda_tradeoff: Vec<_> = by_group
        .values()
        .map(|g| {
            let acc: Vec<f64> = g.iter().map(|r| r.final_accuracy).collect();
            let ru: Vec<f64> = g.iter().map(|r| r.total_ru_avg).collect();
            (g[0].lambda_max, g[0].k, Band::of(&acc), Band::of(&ru))
        })
        .collect();
    lambda_tradeoff.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // (k, lambda_max key, t) -> (lambda_max, accuracies, losses)
    type Points = BTreeMap<(usize, i64, u32), (f64, Vec<f64>, Vec<f64>)>;
    let mut points = Points::new();
    for rec in records {
        for p in &rec.curve {
            let e = points
                .entry((rec.k, ordered(rec.lambda_max), p.t))
                .or_insert_with(|| (rec.lambda_max, Vec::new(), Vec::new()));
            e.1.push(p.accuracy);
            e.2.push(p.loss);
        }
    }
    let curves = points
        .into_iter()
        .map(|((k, _, t), (l, acc, loss))| (k, l, t, Band::of(&acc), Band::of(&loss)))
        .collect();
    PlotData {
        curves,
        ru_bars,
        lambda_tradeoff,
    }
}

/// Writes `curves.csv`, `ru_bars.csv` and `lambda_tradeoff.csv` into `dir`.
pub fn write_plot_data(dir: &Path, data: &PlotData) -> Result<()> {
    fs::create_dir_all(dir)?;
    let band_cols = |name: &str| [format!("{name}_mean"), format!("{name}_min"), format!("{name}_max")];
    let band_vals = |b: &Band| [b.mean.to_string(), b.min.to_string(), b.max.to_string()];

    let mut w = csv::Writer::from_path(dir.join("curves.csv")).map_err(csv_io)?;
    let mut header = vec!["k".to_string(), "lambda_max".into(), "t".into()];
    header.extend(band_cols("accuracy"));
    header.extend(band_cols("loss"));
    w.write_record(&header).map_err(csv_io)?;
    for (k, l, t, acc, loss) in &data.curves {
        let mut rec = vec![k.to_string(), l.to_string(), t.to_string()];
        rec.extend(band_vals(acc));
        rec.extend(band_vals(loss));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("ru_bars.csv")).map_err(csv_io)?;
    let mut header = vec!["k".to_string(), "lambda_max".into()];
    header.extend(band_cols("comm_ru_avg"));
    header.extend(band_cols("comp_ru_avg"));
    w.write_record(&header).map_err(csv_io)?;
    for (k, l, comm, comp) in &data.ru_bars {
        let mut rec = vec![k.to_string(), l.to_string()];
        rec.extend(band_vals(comm));
        rec.extend(band_vals(comp));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("lambda_tradeoff.csv")).map_err(csv_io)?;
    let mut header = vec!["lambda_max".to_string(), "k".into()];
    header.extend(band_cols("final_accuracy"));
    header.extend(band_cols("total_ru_avg"));
    w.write_record(&header).map_err(csv_io)?;
    for (l, k, acc, ru) in &data.lambda_tradeoff {
        let mut rec = vec![l.to_string(), k.to_string()];
        rec.extend(band_vals(acc));
        rec.extend(band_vals(ru));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, seed: u64, acc: f64) -> SummaryRow {
        SummaryRow {
            k,
            lambda_max: 1.0,
            seed,
            final_accuracy: acc,
            final_loss: 0.5,
            comm_ru_avg: 10.0 / k as f64,
            comp_ru_avg: 10.0 * k as f64,
            total_ru_avg: 10.0 / k as f64 + 10.0 * k as f64,
            overage_ru: 1.0,
        }
    }

    #[test]
    fn csv_header_is_the_column_contract() {
        let text = summary_csv_string(&[row(1, 1, 0.9)]).unwrap();
        assert_eq!(text.lines().next().unwrap(), SUMMARY_COLUMNS.join(","));
        let empty = summary_csv_string(&[]).unwrap();
        assert_eq!(empty.trim_end(), SUMMARY_COLUMNS.join(","));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(1, 1, 0.875), row(8, 2, 0.1 + 0.2)];
        let back = parse_summary_csv(&summary_csv_string(&rows).unwrap()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn malformed_csv_names_row_and_column() {
        let mut text = summary_csv_string(&[row(1, 1, 0.9), row(2, 1, 0.8)]).unwrap();
        text = text.replacen("0.8,", "zero,", 1);
        match parse_summary_csv(&text) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "final_accuracy");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_header = "k,lambda,seed\n1,1,1\n";
        match parse_summary_csv(bad_header) {
            Err(Error::Csv { row: 1, column, .. }) => assert_eq!(column, "lambda_max"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_k_is_the_only_candidate_iff_feasible() {
        let cfg = ExperimentConfig::default();
        let rows = vec![row(4, 1, 0.9), row(4, 2, 0.9)];
        let ok = fit_and_select(&cfg, &rows, 0.85, None).unwrap();
        assert_eq!(ok.candidates.iter().map(|c| c.k).collect::<Vec<_>>(), vec![4]);
        let none = fit_and_select(&cfg, &rows, 0.95, None).unwrap();
        assert!(!none.is_feasible());
        assert!(none.to_string().contains("no candidate"));
    }

    #[test]
    fn bands() {
        let b = Band::of(&[1.0, 2.0, 6.0]);
        assert_eq!((b.mean, b.min, b.max), (3.0, 1.0, 6.0));
    }

    #[test]
    fn plot_data_groups_by_k() {
        let rows = vec![row(1, 1, 0.9), row(1, 2, 0.7), row(4, 1, 0.8)];
        let pd = plot_data(&rows, &[]);
        assert_eq!(pd.ru_bars.len(), 2);
        let (_, _, acc, _) = pd.lambda_tradeoff[0];
        assert!((acc.mean - 0.8).abs() < 1e-12);
        assert_eq!((acc.min, acc.max), (0.7, 0.9));
    }

    #[test]
    fn float_sort_key_is_monotone() {
        let mut v = vec![1.0, -2.0, 0.25, 0.0, -0.5];
        v.sort_by_key(|&x| ordered(x));
        assert_eq!(v, vec![-2.0, -0.5, 0.0, 0.25, 1.0]);
    }
}
