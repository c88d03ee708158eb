//! Cross-validated evaluation: section extraction, section cleanliness,
//! leave-subjects-out fold assembly, reference preparation, training-window
//! construction, per-subject metrics, and the experiment driver that ties
//! the whole pipeline together.

use crate::ecg::{self, BeatAnnotation, PanTompkinsConfig};
use crate::error::{Error, Result};
use crate::nn::{
    self, EpochStats, FusionModelParams, ModelConfig, TrainSample, TrainingHyperparams,
};
use crate::pulse::{section_hr, PulseConfig};
use crate::signal::{self, MultiChannelRecord, TimeSeries};
use crate::synth::{HR_MAX_BPM, HR_MIN_BPM};
use crate::template::{build_window_templates, synthesize_reference, TemplateConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Evenly spaced section start times: `i * (duration - section) / (n - 1)`,
/// so the first starts at zero and the last ends flush with the record.
pub fn extract_sections(duration_s: f64, n: usize, section_s: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one section".into()));
    }
    if section_s <= 0.0 || duration_s < section_s {
        return Err(Error::InvalidInput(format!(
            "cannot cut {section_s} s sections from {duration_s} s"
        )));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let step = (duration_s - section_s) / (n - 1) as f64;
    Ok((0..n).map(|i| i as f64 * step).collect())
}

/// A section is clean when it contains at least two R peaks and every
/// implied beat-to-beat rate is physiological.
pub fn section_is_clean(ann: &BeatAnnotation, start_s: f64, end_s: f64) -> bool {
    let peaks: Vec<f64> = ann
        .r_times
        .iter()
        .copied()
        .filter(|t| *t >= start_s && *t <= end_s)
        .collect();
    if peaks.len() < 2 {
        return false;
    }
    peaks.windows(2).all(|w| {
        let hr = 60.0 / (w[1] - w[0]);
        (HR_MIN_BPM..=HR_MAX_BPM).contains(&hr)
    })
}

/// One cross-validation fold over subject ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Leave-two-subjects-out folds: ids are shuffled once, consecutive pairs
/// become the test sets (`count / 2` folds), and within each fold the
/// first remaining subject validates while the rest train. Requires an
/// even count of at least four.
pub fn make_folds(ids: &[String], seed: u64) -> Result<Vec<Fold>> {
    if ids.len() < 4 || ids.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "fold assembly needs an even subject count >= 4, got {}",
            ids.len()
        )));
    }
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != ids.len() {
        return Err(Error::InvalidInput("duplicate subject ids".into()));
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut folds = Vec::with_capacity(ids.len() / 2);
    for pair in shuffled.chunks(2) {
        let test: Vec<String> = pair.to_vec();
        let remaining: Vec<String> =
            shuffled.iter().filter(|s| !test.contains(s)).cloned().collect();
        let val = vec![remaining[0].clone()];
        let train = remaining[1..].to_vec();
        folds.push(Fold { train, val, test });
    }
    Ok(folds)
}

/// Degenerate plan for cohorts too small to fold: everything trains and
/// validates on the first subject and every subject is tested. Bookkeeping
/// only; there is no held-out generalization claim here.
pub fn smoke_plan(ids: &[String]) -> Result<Vec<Fold>> {
    let first = ids
        .first()
        .ok_or_else(|| Error::InvalidInput("smoke plan needs a subject".into()))?;
    Ok(vec![Fold {
        train: vec![first.clone()],
        val: vec![first.clone()],
        test: ids.to_vec(),
    }])
}

/// Mean absolute error, root-mean-square error, and correlation between
/// the z-scored versions of the two sections.
pub fn morphology_metrics(fused: &[f64], reference: &[f64]) -> Result<(f64, f64, f64)> {
    if fused.len() != reference.len() || fused.is_empty() {
        return Err(Error::InvalidInput(format!(
            "section lengths differ: {} vs {}",
            fused.len(),
            reference.len()
        )));
    }
    let a = signal::zscore(fused)?;
    let b = signal::zscore(reference)?;
    let mae = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    let corr = signal::pearson(&a, &b)?;
    Ok((mae, mse.sqrt(), corr))
}

/// Mean and median absolute heart-rate error over sections where both the
/// estimate and the reference exist; sections missing either are excluded
/// pairwise. [`Error::NoData`] when nothing is comparable.
pub fn hr_error(estimates: &[Option<f64>], references: &[Option<f64>]) -> Result<(f64, f64)> {
    if estimates.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "estimate/reference length mismatch: {} vs {}",
            estimates.len(),
            references.len()
        )));
    }
    let mut errors: Vec<f64> = estimates
        .iter()
        .zip(references)
        .filter_map(|(e, r)| match (e, r) {
            (Some(e), Some(r)) => Some((e - r).abs()),
            _ => None,
        })
        .collect();
    if errors.is_empty() {
        return Err(Error::NoData("no section has both an estimate and a reference".into()));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    let median = if errors.len() % 2 == 1 {
        errors[errors.len() / 2]
    } else {
        0.5 * (errors[errors.len() / 2 - 1] + errors[errors.len() / 2])
    };
    Ok((mean, median))
}

/// Where beat times come from when preparing a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeatSource {
    /// Detect R peaks on the ECG channel.
    Ecg,
    /// Use provided beat times directly.
    Provided,
}

/// A record with everything training and evaluation need derived from it.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub record: MultiChannelRecord,
    pub annotation: BeatAnnotation,
    /// Synthesized per-beat reference, zero outside the annotated span.
    pub reference: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub template: TemplateConfig,
    pub detector: PanTompkinsConfig,
    /// Pulse band the channels are filtered to before template extraction.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Pool beats from all optical channels, or use green alone.
    pub pool_channels: bool,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            template: TemplateConfig::default(),
            detector: PanTompkinsConfig::default(),
            band_lo_hz: 0.6,
            band_hi_hz: 3.3,
            pool_channels: true,
        }
    }
}

/// Annotate beats, build window templates from the band-passed optical
/// channels, and synthesize the subject's reference signal.
pub fn prepare_subject(
    record: MultiChannelRecord,
    beats: Option<Vec<f64>>,
    opts: &PrepareOptions,
) -> Result<PreparedSubject> {
    let annotation = match beats {
        Some(times) => BeatAnnotation::from_ground_truth(times),
        None => ecg::detect_r_peaks(&record.ecg, &opts.detector)?,
    };
    if annotation.r_times.len() < 2 {
        return Err(Error::InsufficientBeats(format!(
            "subject {}: {} beats annotated",
            record.subject_id,
            annotation.r_times.len()
        )));
    }

    let filtered: Vec<TimeSeries> = record
        .optical_channels()
        .iter()
        .map(|(_, ch)| crate::dsp::bandpass(ch, opts.band_lo_hz, opts.band_hi_hz))
        .collect::<Result<_>>()?;
    let used: Vec<&TimeSeries> =
        if opts.pool_channels { filtered.iter().collect() } else { vec![&filtered[0]] };

    let templates = build_window_templates(&used, &annotation.r_times, &opts.template)?;
    let reference = synthesize_reference(
        &templates,
        &annotation.r_times,
        record.fs(),
        record.green.t0,
        record.len(),
    )?;
    Ok(PreparedSubject { record, annotation, reference })
}

/// Sample index span covered by the annotation, relative to record start.
fn annotated_span(p: &PreparedSubject) -> (usize, usize) {
    let fs = p.record.fs();
    let base = p.record.green.abs_start_index();
    let first = (p.annotation.r_times[0] * fs).round() as i64 - base;
    let last = (*p.annotation.r_times.last().unwrap() * fs).round() as i64 - base;
    (first.max(0) as usize, last.max(0) as usize)
}

/// Cut aligned training windows every `stride` samples. Inputs are the
/// per-window z-scored raw channels (flat channels fall back to zeros);
/// targets are the z-scored reference, and windows whose reference is
/// degenerate or that poke outside the annotated span are skipped.
pub fn build_training_windows(
    prepared: &PreparedSubject,
    window_len: usize,
    stride: usize,
) -> Result<Vec<TrainSample>> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be positive".into()));
    }
    let n = prepared.record.len();
    if n < window_len {
        return Ok(Vec::new());
    }
    let (span_lo, span_hi) = annotated_span(prepared);
    let channels = prepared.record.optical_channels();
    let mut samples = Vec::new();
    let mut start = 0usize;
    while start + window_len <= n {
        if start >= span_lo && start + window_len <= span_hi {
            let target_slice = &prepared.reference.samples[start..start + window_len];
            if let Ok(target) = signal::zscore(target_slice) {
                let mut input = vec![0.0; channels.len() * window_len];
                for (c, (_, ch)) in channels.iter().enumerate() {
                    let z = signal::zscore_or_zeros(&ch.samples[start..start + window_len]);
                    input[c * window_len..(c + 1) * window_len].copy_from_slice(&z);
                }
                samples.push(TrainSample { input, target });
            }
        }
        start += stride;
    }
    Ok(samples)
}

/// Per-subject evaluation row. All metric fields are f64 so the aggregate
/// row is the exact arithmetic mean of the subject rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMetrics {
    pub subject_id: String,
    pub sections_used: f64,
    pub fused_mae: f64,
    pub fused_rmse: f64,
    pub fused_corr: f64,
    pub green_corr: f64,
    pub red_corr: f64,
    pub ir_corr: f64,
    pub hr_mae_bpm: f64,
    pub hr_medae_bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<SubjectMetrics>,
    /// Arithmetic mean of every field over the rows.
    pub mean: SubjectMetrics,
}

fn mean_of(rows: &[SubjectMetrics]) -> SubjectMetrics {
    let n = rows.len() as f64;
    let avg = |f: fn(&SubjectMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    SubjectMetrics {
        subject_id: "mean".into(),
        sections_used: avg(|r| r.sections_used),
        fused_mae: avg(|r| r.fused_mae),
        fused_rmse: avg(|r| r.fused_rmse),
        fused_corr: avg(|r| r.fused_corr),
        green_corr: avg(|r| r.green_corr),
        red_corr: avg(|r| r.red_corr),
        ir_corr: avg(|r| r.ir_corr),
        hr_mae_bpm: avg(|r| r.hr_mae_bpm),
        hr_medae_bpm: avg(|r| r.hr_medae_bpm),
    }
}

impl EvaluationReport {
    pub fn from_rows(mut rows: Vec<SubjectMetrics>) -> Result<EvaluationReport> {
        if rows.is_empty() {
            return Err(Error::NoData("no subject rows to aggregate".into()));
        }
        rows.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        let mean = mean_of(&rows);
        Ok(EvaluationReport { rows, mean })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionScheme {
    pub section_s: f64,
    pub per_subject: usize,
}

impl Default for SectionScheme {
    fn default() -> Self {
        SectionScheme { section_s: 8.0, per_subject: 10 }
    }
}

/// Score one subject's fused signal against its reference on the clean
/// sections. [`Error::NoData`] when no section qualifies.
pub fn evaluate_subject(
    prepared: &PreparedSubject,
    fused: &TimeSeries,
    scheme: &SectionScheme,
    pulse: &PulseConfig,
) -> Result<SubjectMetrics> {
    if fused.len() != prepared.record.len() {
        return Err(Error::InvalidInput(format!(
            "fused length {} != record length {}",
            fused.len(),
            prepared.record.len()
        )));
    }
    let fs = prepared.record.fs();
    let starts = extract_sections(prepared.record.duration(), scheme.per_subject, scheme.section_s)?;
    let sec_len = (scheme.section_s * fs).round() as usize;

    let mut morph: Vec<(f64, f64, f64)> = Vec::new();
    let mut chan: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut hr_est: Vec<Option<f64>> = Vec::new();
    let mut hr_ref: Vec<Option<f64>> = Vec::new();

    for &start in &starts {
        let end = start + scheme.section_s;
        if !section_is_clean(&prepared.annotation, start, end) {
            continue;
        }
        let a = (start * fs).round() as usize;
        let b = (a + sec_len).min(prepared.record.len());
        let ref_slice = &prepared.reference.samples[a..b];
        let fused_slice = &fused.samples[a..b];

        let m = match morphology_metrics(fused_slice, ref_slice) {
            Ok(m) => m,
            Err(_) => continue, // degenerate section carries no morphology
        };
        morph.push(m);

        for (c, (_, ch)) in prepared.record.optical_channels().iter().enumerate() {
            if let Ok(r) = signal::pearson(&ch.samples[a..b], ref_slice) {
                chan[c].push(r);
            }
        }

        hr_est.push(fused.slice(a, b).ok().and_then(|s| section_hr(&s, pulse).ok()));
        hr_ref.push(ecg::reference_hr(&prepared.annotation, start, end).ok());
    }

    if morph.is_empty() {
        return Err(Error::NoData(format!(
            "subject {}: no clean section",
            prepared.record.subject_id
        )));
    }
    let n = morph.len() as f64;
    let (mae, rmse, corr) = morph.iter().fold((0.0, 0.0, 0.0), |acc, m| {
        (acc.0 + m.0 / n, acc.1 + m.1 / n, acc.2 + m.2 / n)
    });
    let chan_mean = |v: &Vec<f64>| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (hr_mae, hr_medae) = hr_error(&hr_est, &hr_ref)?;

    Ok(SubjectMetrics {
        subject_id: prepared.record.subject_id.clone(),
        sections_used: n,
        fused_mae: mae,
        fused_rmse: rmse,
        fused_corr: corr,
        green_corr: chan_mean(&chan[0]),
        red_corr: chan_mean(&chan[1]),
        ir_corr: chan_mean(&chan[2]),
        hr_mae_bpm: hr_mae,
        hr_medae_bpm: hr_medae,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub hyper: TrainingHyperparams,
    /// Stride between training windows, in samples.
    pub train_stride: usize,
    pub scheme: SectionScheme,
    pub pulse: PulseConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            hyper: TrainingHyperparams::default(),
            train_stride: 512,
            scheme: SectionScheme::default(),
            pulse: PulseConfig::default(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: Fold,
    pub history: Vec<EpochStats>,
    pub params: FusionModelParams,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvaluationReport,
    pub folds: Vec<FoldRun>,
}

fn fold_seed(base: u64, fold_index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold_index as u64 + 1)
}

fn gather_windows(
    subjects: &[PreparedSubject],
    ids: &[String],
    window_len: usize,
    stride: usize,
) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for id in ids {
        let p = subjects
            .iter()
            .find(|p| &p.record.subject_id == id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown subject {id}")))?;
        out.extend(build_training_windows(p, window_len, stride)?);
    }
    if out.is_empty() {
        return Err(Error::NoData("no training windows survived".into()));
    }
    Ok(out)
}

/// Cross-validated experiment: fold the cohort, train one model per fold,
/// fuse and score that fold's test subjects. Every subject is tested
/// exactly once, so the report has one row per subject.
pub fn run_experiment(
    subjects: &[PreparedSubject],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let ids: Vec<String> = subjects.iter().map(|p| p.record.subject_id.clone()).collect();
    let folds = make_folds(&ids, cfg.seed)?;
    run_fold_plan(subjects, &folds, cfg)
}

/// Same pipeline over an externally supplied fold plan.
pub fn run_fold_plan(
    subjects: &[PreparedSubject],
    folds: &[Fold],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let mut rows = Vec::new();
    let mut fold_runs = Vec::new();
    for (k, fold) in folds.iter().enumerate() {
        let seed = fold_seed(cfg.seed, k);
        let train_samples =
            gather_windows(subjects, &fold.train, cfg.model.window_len, cfg.train_stride)?;
        let val_samples =
            gather_windows(subjects, &fold.val, cfg.model.window_len, cfg.train_stride)?;
        let init = nn::init_model(&cfg.model, seed)?;
        let outcome = nn::train(init, &train_samples, &val_samples, &cfg.hyper, seed)
            .map_err(Error::from)?;
        let mut params = outcome.params;
        if let Some(meta) = params.meta.as_mut() {
            meta.train_subjects = fold.train.clone();
        }

        for id in &fold.test {
            let p = subjects
                .iter()
                .find(|p| &p.record.subject_id == id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown subject {id}")))?;
            let fused = nn::fuse(&params, &p.record)?;
            rows.push(evaluate_subject(p, &fused, &cfg.scheme, &cfg.pulse)?);
        }
        fold_runs.push(FoldRun { fold: fold.clone(), history: outcome.history, params });
    }
    Ok(ExperimentOutcome { report: EvaluationReport::from_rows(rows)?, folds: fold_runs })
}

fn row_fields(r: &SubjectMetrics) -> [f64; 9] {
    [
        r.sections_used,
        r.fused_mae,
        r.fused_rmse,
        r.fused_corr,
        r.green_corr,
        r.red_corr,
        r.ir_corr,
        r.hr_mae_bpm,
        r.hr_medae_bpm,
    ]
}

const COLUMNS: [&str; 10] = [
    "subject", "sections", "fused_mae", "fused_rmse", "fused_corr", "green_corr",
    "red_corr", "ir_corr", "hr_mae_bpm", "hr_medae_bpm",
];

/// Tab-separated report, one line per subject plus the mean row.
pub fn render_dsv(report: &EvaluationReport) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for row in report.rows.iter().chain(std::iter::once(&report.mean)) {
        out.push_str(&row.subject_id);
        for v in row_fields(row) {
            out.push_str(&format!("\t{v:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Fixed-width table for terminals.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut cells: Vec<Vec<String>> = vec![COLUMNS.iter().map(|s| s.to_string()).collect()];
    for row in report.rows.iter().chain(std::iter::once(&report.mean)) {
        let mut line = vec![row.subject_id.clone()];
        line.extend(row_fields(row).iter().map(|v| format!("{v:.4}")));
        cells.push(line);
    }
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}", w = w))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_subject, SubjectProfile};

    #[test]
    fn sections_are_evenly_spaced_and_flush() {
        let starts = extract_sections(80.0, 10, 8.0).unwrap();
        let expected: Vec<f64> = (0..10).map(|i| i as f64 * 8.0).collect();
        assert_eq!(starts, expected);
        assert_eq!(extract_sections(60.0, 1, 8.0).unwrap(), vec![0.0]);
        let tight = extract_sections(8.0, 3, 8.0).unwrap();
        assert_eq!(tight, vec![0.0, 0.0, 0.0]);
        assert!(extract_sections(7.0, 3, 8.0).is_err());
        assert!(extract_sections(60.0, 0, 8.0).is_err());
    }

    #[test]
    fn cleanliness_requires_two_peaks_in_band() {
        let ann = BeatAnnotation::from_ground_truth(vec![1.0, 2.0, 3.0, 3.2, 9.0]);
        assert!(section_is_clean(&ann, 0.5, 3.1)); // 1,2,3: 60 bpm
        assert!(!section_is_clean(&ann, 0.5, 3.5)); // 3.0-3.2 implies 300 bpm
        assert!(!section_is_clean(&ann, 4.0, 8.0)); // no peaks
        assert!(!section_is_clean(&ann, 8.0, 10.0)); // single peak
        assert!(!section_is_clean(&ann, 3.0, 9.5)); // 3.2-9.0 implies 10 bpm
    }

    #[test]
    fn folds_partition_without_leakage() {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i:02}")).collect();
        for seed in 0..20 {
            let folds = make_folds(&ids, seed).unwrap();
            assert_eq!(folds.len(), 5);
            let mut tested: Vec<String> = Vec::new();
            for fold in &folds {
                assert_eq!(fold.test.len(), 2);
                assert_eq!(fold.val.len(), 1);
                assert_eq!(fold.train.len(), 7);
                for t in &fold.test {
                    assert!(!fold.train.contains(t));
                    assert!(!fold.val.contains(t));
                }
                assert!(!fold.train.contains(&fold.val[0]));
                let mut all: Vec<&String> =
                    fold.train.iter().chain(&fold.val).chain(&fold.test).collect();
                all.sort();
                all.dedup();
                assert_eq!(all.len(), 10);
                tested.extend(fold.test.clone());
            }
            tested.sort();
            let mut want = ids.clone();
            want.sort();
            assert_eq!(tested, want);
        }
    }

    #[test]
    fn folds_are_seed_deterministic() {
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        assert_eq!(make_folds(&ids, 7).unwrap(), make_folds(&ids, 7).unwrap());
        assert_ne!(make_folds(&ids, 7).unwrap(), make_folds(&ids, 8).unwrap());
    }

    #[test]
    fn fold_preconditions() {
        let three: Vec<String> = (0..3).map(|i| format!("s{i}")).collect();
        assert!(make_folds(&three, 0).is_err());
        let five: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        assert!(make_folds(&five, 0).is_err());
        let dup = vec!["a".to_string(), "a".to_string(), "b".to_string(), "c".to_string()];
        assert!(make_folds(&dup, 0).is_err());
    }

    #[test]
    fn smoke_plan_covers_everything_from_one_subject() {
        let ids = vec!["s0".to_string(), "s1".to_string()];
        let plan = smoke_plan(&ids).unwrap();
        assert_eq!(plan.len(), 1);
        assert_eq!(plan[0].train, vec!["s0".to_string()]);
        assert_eq!(plan[0].val, vec!["s0".to_string()]);
        assert_eq!(plan[0].test, ids);
    }

    #[test]
    fn morphology_of_anticorrelated_sections() {
        let (mae, rmse, corr) = morphology_metrics(&[1.0, -1.0], &[-1.0, 1.0]).unwrap();
        assert!((mae - 2.0).abs() < 1e-12);
        assert!((rmse - 2.0).abs() < 1e-12);
        assert!((corr + 1.0).abs() < 1e-12);
        let (mae, rmse, corr) = morphology_metrics(&[0.0, 2.0, 4.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!(mae < 1e-12 && rmse < 1e-12);
        assert!((corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hr_error_mean_and_median_with_exclusion() {
        let est = vec![Some(61.0), Some(62.0), None, Some(69.0), Some(50.0)];
        let truth = vec![Some(60.0), Some(60.0), Some(60.0), Some(60.0), None];
        // comparable errors: 1, 2, 9
        let (mean, median) = hr_error(&est, &truth).unwrap();
        assert!((mean - 4.0).abs() < 1e-12);
        assert!((median - 2.0).abs() < 1e-12);

        let (_, med_even) = hr_error(
            &[Some(1.0), Some(4.0)],
            &[Some(0.0), Some(0.0)],
        )
        .unwrap();
        assert!((med_even - 2.5).abs() < 1e-12);

        assert!(matches!(
            hr_error(&[None, Some(1.0)], &[Some(2.0), None]),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn aggregate_row_is_the_exact_mean() {
        let mk = |id: &str, x: f64| SubjectMetrics {
            subject_id: id.into(),
            sections_used: x,
            fused_mae: 2.0 * x,
            fused_rmse: 3.0 * x,
            fused_corr: 0.1 * x,
            green_corr: 0.2 * x,
            red_corr: 0.3 * x,
            ir_corr: 0.4 * x,
            hr_mae_bpm: 5.0 * x,
            hr_medae_bpm: 6.0 * x,
        };
        let report = EvaluationReport::from_rows(vec![mk("b", 4.0), mk("a", 2.0)]).unwrap();
        // rows sorted by id, mean exact
        assert_eq!(report.rows[0].subject_id, "a");
        assert_eq!(report.mean.sections_used, 3.0);
        assert_eq!(report.mean.fused_mae, 6.0);
        assert_eq!(report.mean.hr_medae_bpm, 18.0);
        assert!(EvaluationReport::from_rows(vec![]).is_err());
    }

    fn prepared(seed: u64, duration: f64) -> PreparedSubject {
        let profile = SubjectProfile::basic(&format!("t{seed}"), seed, duration);
        let (rec, _) = generate_subject(&profile).unwrap();
        prepare_subject(rec, None, &PrepareOptions::default()).unwrap()
    }

    #[test]
    fn prepared_subject_reference_is_sane() {
        let p = prepared(3, 120.0);
        assert_eq!(p.reference.len(), p.record.len());
        assert!(p.annotation.r_times.len() > 100);
        let (lo, hi) = annotated_span(&p);
        assert!(p.reference.samples[lo..hi].iter().any(|v| *v != 0.0));
        assert!(p.reference.samples[..lo].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn training_windows_respect_span_stride_and_normalization() {
        let p = prepared(5, 120.0);
        let window = 512;
        let stride = 1024;
        let samples = build_training_windows(&p, window, stride).unwrap();
        assert!(!samples.is_empty());
        let (lo, hi) = annotated_span(&p);
        // every window index is a stride multiple inside the span
        let expected = (0..)
            .map(|k| k * stride)
            .take_while(|s| s + window <= p.record.len())
            .filter(|s| *s >= lo && s + window <= hi)
            .count();
        assert_eq!(samples.len(), expected);
        for s in &samples {
            assert_eq!(s.input.len(), 3 * window);
            assert_eq!(s.target.len(), window);
            let m = signal::mean(&s.target);
            assert!(m.abs() < 1e-9);
            assert!((signal::population_std(&s.target) - 1.0).abs() < 1e-9);
            for c in 0..3 {
                let ch = &s.input[c * window..(c + 1) * window];
                assert!(signal::mean(ch).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn evaluating_the_reference_against_itself_is_perfect() {
        let p = prepared(7, 90.0);
        let fused = p.reference.clone();
        let scheme = SectionScheme { section_s: 8.0, per_subject: 6 };
        let m = evaluate_subject(&p, &fused, &scheme, &PulseConfig::default()).unwrap();
        assert!(m.sections_used >= 4.0);
        assert!(m.fused_mae < 1e-9);
        assert!((m.fused_corr - 1.0).abs() < 1e-9);
        assert!(m.hr_mae_bpm < 3.0, "hr mae {}", m.hr_mae_bpm);
        // raw noisy channels correlate, but not perfectly
        assert!(m.green_corr > 0.3 && m.green_corr < 0.999);
    }

    #[test]
    fn report_rendering_includes_all_rows() {
        let mk = |id: &str| SubjectMetrics {
            subject_id: id.into(),
            sections_used: 10.0,
            fused_mae: 0.5,
            fused_rmse: 0.6,
            fused_corr: 0.9,
            green_corr: 0.7,
            red_corr: 0.4,
            ir_corr: 0.6,
            hr_mae_bpm: 1.5,
            hr_medae_bpm: 1.0,
        };
        let report = EvaluationReport::from_rows(vec![mk("s00"), mk("s01")]).unwrap();
        let dsv = render_dsv(&report);
        assert_eq!(dsv.lines().count(), 4);
        assert!(dsv.starts_with("subject\tsections\t"));
        assert!(dsv.contains("\nmean\t"));
        let table = render_table(&report);
        assert_eq!(table.lines().count(), 5);
        assert!(table.contains("s01"));
    }

    #[test]
    fn tiny_experiment_runs_end_to_end() {
        let subjects: Vec<PreparedSubject> =
            (0..4).map(|i| prepared(20 + i, 90.0)).collect();
        let cfg = ExperimentConfig {
            model: ModelConfig {
                in_channels: 3,
                depth: 2,
                base_channels: 2,
                down_kernel: 7,
                up_kernel: 3,
                window_len: 256,
                leaky_slope: 0.2,
            },
            hyper: TrainingHyperparams {
                batch_size: 8,
                max_epochs: 2,
                ..TrainingHyperparams::default()
            },
            train_stride: 512,
            scheme: SectionScheme { section_s: 8.0, per_subject: 4 },
            pulse: PulseConfig::default(),
            seed: 11,
        };
        let out = run_experiment(&subjects, &cfg).unwrap();
        assert_eq!(out.folds.len(), 2);
        assert_eq!(out.report.rows.len(), 4);
        for fold_run in &out.folds {
            assert_eq!(fold_run.history.len(), 2);
            let meta = fold_run.params.meta.as_ref().unwrap();
            assert_eq!(meta.train_subjects, fold_run.fold.train);
        }
        // determinism of the whole experiment
        let again = run_experiment(&subjects, &cfg).unwrap();
        assert_eq!(again.report, out.report);
    }
}
