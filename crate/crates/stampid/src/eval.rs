//! Confusion matrices, accuracy and the repeated-split experiment
//! protocol, with text and CSV report rendering.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{
    augment_image, stratified_split, DataError, DatasetManifest,
};
use crate::features::{extract, FeatureConfig, FeatureKind, FeatureVector};
use crate::imgio::load_image;
use crate::learn::{
    predict_label, train_logreg, train_svm, LabelSpace, LinearModel, ModelKind, Task, TrainConfig,
    TrainError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and prediction lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("experiment needs at least one repeat")]
    NoRepeats,
    #[error("report is not in stampid-report v1 format: {0}")]
    BadReport(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// True-vs-predicted counts; rows are true labels, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![0; n * n],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn count(&self, true_idx: usize, pred_idx: usize) -> u64 {
        self.counts[true_idx * self.labels.len() + pred_idx]
    }

    pub fn row(&self, true_idx: usize) -> &[u64] {
        let n = self.labels.len();
        &self.counts[true_idx * n..(true_idx + 1) * n]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.count(i, i)).sum()
    }

    /// Element-wise sum; panics if label sets differ.
    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.labels, other.labels, "label order mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Counts `(truth, prediction)` pairs into a matrix over the label
/// space's ordering.
pub fn confusion_matrix(
    truth: &[String],
    pred: &[String],
    space: &LabelSpace,
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch(truth.len(), pred.len()));
    }
    let mut cm = ConfusionMatrix::zeros(space.labels().to_vec());
    let n = space.len();
    for (t, p) in truth.iter().zip(pred) {
        let ti = space
            .index_of(t)
            .ok_or_else(|| EvalError::UnknownLabel(t.clone()))?;
        let pi = space
            .index_of(p)
            .ok_or_else(|| EvalError::UnknownLabel(p.clone()))?;
        cm.counts[ti * n + pi] += 1;
    }
    Ok(cm)
}

/// Trace over total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// One train/test repetition inside an [`ExperimentReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
}

/// All repetitions of one experiment plus the pooled matrix and the
/// mean accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub task: Task,
    pub feature_kind: FeatureKind,
    pub model_kind: ModelKind,
    pub repeats: u32,
    pub per_run: Vec<RunResult>,
    pub mean_accuracy: f64,
    pub pooled_matrix: ConfusionMatrix,
}

/// Pipeline switches that sit outside [`TrainConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    /// Train/test ratio for the stratified split.
    pub ratio: f64,
    /// Expand the training side with the five augmentation variants.
    pub augment_train: bool,
    /// Also expand the test side (robustness mode); row sums scale by 5.
    pub eval_augmented: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            ratio: 2.0 / 3.0,
            augment_train: false,
            eval_augmented: false,
        }
    }
}

/// Extracts features for every record once; training and evaluation
/// then gather rows per repeat so repeated splits do not re-extract.
fn extract_all(
    m: &DatasetManifest,
    kind: FeatureKind,
    cfg: &FeatureConfig,
    augment: bool,
) -> Result<Vec<Vec<FeatureVector>>, DataError> {
    m.records()
        .par_iter()
        .map(|record| {
            let img = load_image(&record.path).map_err(|source| DataError::Image {
                path: record.path.clone(),
                source,
            })?;
            let variants = if augment {
                augment_image(&img)
            } else {
                vec![img]
            };
            variants
                .iter()
                .map(|v| {
                    extract(v, kind, cfg).map_err(|source| DataError::Feature {
                        path: record.path.clone(),
                        source,
                    })
                })
                .collect()
        })
        .collect()
}

fn train_dispatch(
    model_kind: ModelKind,
    x: &[FeatureVector],
    y: &[&str],
    space: &LabelSpace,
    cfg: &FeatureConfig,
    tc: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    match model_kind {
        ModelKind::Svm => train_svm(x, y, space, cfg, tc),
        ModelKind::Logreg => train_logreg(x, y, space, cfg, tc),
    }
}

/// Runs `repeats` independent split/train/test repetitions with split
/// seeds `base_seed + r` and pools the confusion matrices.
#[allow(clippy::too_many_arguments)]
pub fn run_experiment(
    m: &DatasetManifest,
    task: Task,
    feature_kind: FeatureKind,
    model_kind: ModelKind,
    cfg: &FeatureConfig,
    tc: &TrainConfig,
    repeats: u32,
    base_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport, EvalError> {
    if repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let space = LabelSpace::new(task, m.labels(task).to_vec())?;
    let needs_augment = opts.augment_train || opts.eval_augmented;
    let features = extract_all(m, feature_kind, cfg, needs_augment)?;

    let gather = |indices: &[usize], augmented: bool| {
        let mut x = Vec::new();
        let mut y: Vec<&str> = Vec::new();
        for &i in indices {
            let label = m.records()[i].label(task);
            if augmented {
                for fv in &features[i] {
                    x.push(fv.clone());
                    y.push(label);
                }
            } else {
                x.push(features[i][0].clone());
                y.push(label);
            }
        }
        (x, y)
    };

    let runs: Vec<Result<RunResult, EvalError>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let split_seed = base_seed + r as u64;
            let split = stratified_split(m, task, opts.ratio, split_seed)?;
            let (train_x, train_y) = gather(&split.train, opts.augment_train);
            let (test_x, test_y) = gather(&split.test, opts.eval_augmented);
            let run_tc = TrainConfig {
                seed: tc.seed.wrapping_add(r as u64),
                ..tc.clone()
            };
            let model = train_dispatch(model_kind, &train_x, &train_y, &space, cfg, &run_tc)?;
            let pred: Vec<String> = test_x
                .iter()
                .map(|x| predict_label(&model, x).map(str::to_owned))
                .collect::<Result<_, _>>()?;
            let truth: Vec<String> = test_y.iter().map(|s| s.to_string()).collect();
            let matrix = confusion_matrix(&truth, &pred, &space)?;
            let accuracy = accuracy(&matrix)?;
            Ok(RunResult {
                seed: split_seed,
                matrix,
                accuracy,
            })
        })
        .collect();

    let per_run: Vec<RunResult> = runs.into_iter().collect::<Result<_, _>>()?;
    let mut pooled = ConfusionMatrix::zeros(space.labels().to_vec());
    for run in &per_run {
        pooled.add(&run.matrix);
    }
    let mean_accuracy =
        per_run.iter().map(|r| r.accuracy).sum::<f64>() / per_run.len() as f64;
    Ok(ExperimentReport {
        task,
        feature_kind,
        model_kind,
        repeats,
        per_run,
        mean_accuracy,
        pooled_matrix: pooled,
    })
}

/// Human-readable report: pooled matrix with label headers, per-run and
/// mean accuracies as percentages with one decimal.
pub fn render_report_text(rep: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "task: {}  feature: {}  model: {}  repeats: {}\n",
        rep.task, rep.feature_kind, rep.model_kind, rep.repeats
    ));
    out.push_str("pooled confusion matrix (rows = true, columns = predicted):\n");
    let labels = rep.pooled_matrix.labels();
    let width = labels
        .iter()
        .map(|l| l.len())
        .chain(
            (0..labels.len()).flat_map(|i| {
                rep.pooled_matrix.row(i).iter().map(|c| c.to_string().len())
            }),
        )
        .max()
        .unwrap_or(1)
        .max(3);
    out.push_str(&" ".repeat(width + 2));
    for l in labels {
        out.push_str(&format!("{l:>w$}  ", w = width));
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{l:>w$}  ", w = width));
        for c in rep.pooled_matrix.row(i) {
            out.push_str(&format!("{c:>w$}  ", w = width));
        }
        out.push('\n');
    }
    for (r, run) in rep.per_run.iter().enumerate() {
        out.push_str(&format!(
            "run {r}  seed {}  accuracy: {:.1}\n",
            run.seed,
            run.accuracy * 100.0
        ));
    }
    out.push_str(&format!("mean accuracy: {:.1}\n", rep.mean_accuracy * 100.0));
    out
}

/// Machine-readable report. Counts and label order round trip
/// losslessly through [`parse_report_csv`].
pub fn render_report_csv(rep: &ExperimentReport) -> String {
    let mut out = String::from("# stampid-report v1\n");
    let labels = rep.pooled_matrix.labels();
    out.push_str(&format!("label,{}\n", labels.join(",")));
    for (i, l) in labels.iter().enumerate() {
        let row: Vec<String> = rep
            .pooled_matrix
            .row(i)
            .iter()
            .map(|c| c.to_string())
            .collect();
        out.push_str(&format!("{l},{}\n", row.join(",")));
    }
    out.push_str("run,seed,accuracy\n");
    for (r, run) in rep.per_run.iter().enumerate() {
        out.push_str(&format!("{r},{},{}\n", run.seed, run.accuracy));
    }
    out.push_str(&format!("mean,{}\n", rep.mean_accuracy));
    out
}

/// Counts, labels and accuracies recovered from a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub pooled_matrix: ConfusionMatrix,
    pub runs: Vec<(u32, u64, f64)>,
    pub mean_accuracy: f64,
}

/// Parses the CSV produced by [`render_report_csv`].
pub fn parse_report_csv(text: &str) -> Result<ParsedReport, EvalError> {
    let bad = |msg: &str| EvalError::BadReport(msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("# stampid-report v1") {
        return Err(bad("missing header"));
    }
    let label_line = lines.next().ok_or_else(|| bad("missing label row"))?;
    let labels: Vec<String> = label_line
        .strip_prefix("label,")
        .ok_or_else(|| bad("malformed label row"))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut matrix = ConfusionMatrix::zeros(labels.clone());
    for i in 0..labels.len() {
        let line = lines.next().ok_or_else(|| bad("missing matrix row"))?;
        let mut fields = line.split(',');
        let row_label = fields.next().ok_or_else(|| bad("empty matrix row"))?;
        if row_label != labels[i] {
            return Err(bad(&format!(
                "matrix row {i} labeled {row_label:?}, expected {:?}",
                labels[i]
            )));
        }
        for j in 0..labels.len() {
            let field = fields.next().ok_or_else(|| bad("short matrix row"))?;
            matrix.counts[i * labels.len() + j] = field
                .parse()
                .map_err(|_| bad(&format!("bad count {field:?}")))?;
        }
        if fields.next().is_some() {
            return Err(bad("overlong matrix row"));
        }
    }
    if lines.next() != Some("run,seed,accuracy") {
        return Err(bad("missing run header"));
    }
    let mut runs = Vec::new();
    let mut mean = None;
    for line in lines {
        if let Some(value) = line.strip_prefix("mean,") {
            mean = Some(value.parse().map_err(|_| bad("bad mean"))?);
            break;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(&format!("bad run row {line:?}")));
        }
        runs.push((
            parts[0].parse().map_err(|_| bad("bad run index"))?,
            parts[1].parse().map_err(|_| bad("bad run seed"))?,
            parts[2].parse().map_err(|_| bad("bad run accuracy"))?,
        ));
    }
    Ok(ParsedReport {
        pooled_matrix: matrix,
        runs,
        mean_accuracy: mean.ok_or_else(|| bad("missing mean row"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space(names: &[&str]) -> LabelSpace {
        LabelSpace::new(Task::Country, names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn to_strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn diagonal_and_off_diagonal_counts() {
        let ls = space(&["A", "B"]);
        let cm = confusion_matrix(
            &to_strings(&["A", "B", "A"]),
            &to_strings(&["A", "B", "A"]),
            &ls,
        )
        .unwrap();
        assert_eq!(cm.row(0), [2, 0]);
        assert_eq!(cm.row(1), [0, 1]);

        let cm = confusion_matrix(&to_strings(&["A", "A"]), &to_strings(&["B", "B"]), &ls).unwrap();
        assert_eq!(cm.row(0), [0, 2]);
        assert_eq!(cm.row(1), [0, 0]);
    }

    #[test]
    fn reference_row_from_synthetic_predictions() {
        let ls = space(&["China", "Japan", "Malaysia", "South-Korea", "Singapore"]);
        let counts = [52usize, 7, 18, 4, 3];
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (j, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                truth.push("China".to_string());
                pred.push(ls.labels()[j].clone());
            }
        }
        let cm = confusion_matrix(&truth, &pred, &ls).unwrap();
        assert_eq!(cm.row(0), [52, 7, 18, 4, 3]);
        assert_eq!(cm.row(0).iter().sum::<u64>(), 84);
    }

    #[test]
    fn confusion_matrix_error_paths() {
        let ls = space(&["A", "B"]);
        assert!(matches!(
            confusion_matrix(&to_strings(&["A"]), &to_strings(&[]), &ls).unwrap_err(),
            EvalError::LengthMismatch(1, 0)
        ));
        assert!(matches!(
            confusion_matrix(&to_strings(&["C"]), &to_strings(&["A"]), &ls).unwrap_err(),
            EvalError::UnknownLabel(_)
        ));
    }

    #[test]
    fn accuracy_extremes() {
        let ls = space(&["A", "B"]);
        let perfect = confusion_matrix(
            &to_strings(&["A", "B"]),
            &to_strings(&["A", "B"]),
            &ls,
        )
        .unwrap();
        assert_eq!(accuracy(&perfect).unwrap(), 1.0);
        let wrong = confusion_matrix(
            &to_strings(&["A", "A", "B", "B"]),
            &to_strings(&["B", "B", "A", "A"]),
            &ls,
        )
        .unwrap();
        assert_eq!(accuracy(&wrong).unwrap(), 0.0);
        assert!(matches!(
            accuracy(&ConfusionMatrix::zeros(vec!["A".into()])).unwrap_err(),
            EvalError::EmptyMatrix
        ));
    }

    /// Pooled five-class country matrix at the reference operating
    /// point: the diagonal is 285 of 507, i.e. 56.2%.
    #[test]
    fn accuracy_on_reference_matrix() {
        let labels = ["China", "Japan", "Malaysia", "South-Korea", "Singapore"];
        let rows: [[u64; 5]; 5] = [
            [49, 11, 12, 9, 3],
            [29, 49, 20, 2, 9],
            [9, 14, 107, 4, 18],
            [15, 5, 19, 19, 3],
            [2, 7, 30, 1, 61],
        ];
        let mut cm = ConfusionMatrix::zeros(labels.iter().map(|s| s.to_string()).collect());
        for (i, row) in rows.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                cm.counts[i * 5 + j] = c;
            }
        }
        let acc = accuracy(&cm).unwrap();
        assert_relative_eq!(acc, 0.562, epsilon = 5e-4);
    }

    #[test]
    fn accuracy_is_one_iff_diagonal() {
        let ls = space(&["A", "B", "C"]);
        let truth = to_strings(&["A", "B", "C", "A"]);
        let cm = confusion_matrix(&truth, &truth, &ls).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        let off = confusion_matrix(&truth, &to_strings(&["A", "B", "C", "B"]), &ls).unwrap();
        assert!(accuracy(&off).unwrap() < 1.0);
    }

    fn tiny_report() -> ExperimentReport {
        let ls = space(&["A", "B"]);
        let truth = to_strings(&["A", "B"]);
        let matrix = confusion_matrix(&truth, &truth, &ls).unwrap();
        let mut pooled = matrix.clone();
        pooled.add(&matrix);
        ExperimentReport {
            task: Task::Country,
            feature_kind: FeatureKind::Hist,
            model_kind: ModelKind::Svm,
            repeats: 2,
            per_run: vec![
                RunResult {
                    seed: 42,
                    matrix: matrix.clone(),
                    accuracy: 1.0,
                },
                RunResult {
                    seed: 43,
                    matrix,
                    accuracy: 1.0,
                },
            ],
            mean_accuracy: 1.0,
            pooled_matrix: pooled,
        }
    }

    #[test]
    fn text_report_contains_percent_accuracy() {
        let text = render_report_text(&tiny_report());
        assert!(text.contains("accuracy: 100.0"), "{text}");
        assert!(text.contains('A') && text.contains('B'));
    }

    #[test]
    fn csv_report_round_trips() {
        let rep = tiny_report();
        let csv = render_report_csv(&rep);
        let parsed = parse_report_csv(&csv).unwrap();
        assert_eq!(parsed.pooled_matrix, rep.pooled_matrix);
        assert_eq!(parsed.runs.len(), 2);
        assert_eq!(parsed.runs[0], (0, 42, 1.0));
        assert_eq!(parsed.mean_accuracy, rep.mean_accuracy);
    }

    #[test]
    fn csv_parser_rejects_malformed_input() {
        assert!(parse_report_csv("nope").is_err());
        let rep = tiny_report();
        let csv = render_report_csv(&rep);
        let truncated: String = csv.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(parse_report_csv(&truncated).is_err());
    }

    #[test]
    fn five_class_csv_has_five_rows_of_five() {
        let ls = space(&["a", "b", "c", "d", "e"]);
        let truth = to_strings(&["a", "b", "c", "d", "e"]);
        let matrix = confusion_matrix(&truth, &truth, &ls).unwrap();
        let rep = ExperimentReport {
            task: Task::Country,
            feature_kind: FeatureKind::Hist,
            model_kind: ModelKind::Svm,
            repeats: 1,
            per_run: vec![RunResult {
                seed: 1,
                matrix: matrix.clone(),
                accuracy: 1.0,
            }],
            mean_accuracy: 1.0,
            pooled_matrix: matrix,
        };
        let csv = render_report_csv(&rep);
        let data_rows: Vec<&str> = csv
            .lines()
            .skip(2)
            .take_while(|l| !l.starts_with("run,"))
            .collect();
        assert_eq!(data_rows.len(), 5);
        for row in data_rows {
            assert_eq!(row.split(',').count(), 6);
            assert_eq!(row.split(',').skip(1).count(), 5);
        }
    }
}
