//! The dual-stage online training loop and the single-stage replay baseline.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::buffer::{compose_combined_batch, pair_exemplars, PairingConfig, ReplayBuffer};
use crate::error::{Error, Result};
use crate::eval::{evaluate, AccuracyMatrix, ConfusionMatrix};
use crate::losses::{
    cross_entropy_loss, equalization_loss, supervised_contrastive_loss, ClassPrior,
    ContrastiveConfig, PriorScope,
};
use crate::model::{Network, Stage};
use crate::numeric::{sgd_step, SgdConfig};
use crate::stream::{
    features_matrix, labels_of, AugmentConfig, Augmenter, LabeledVector, StreamBatch, TaskStream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Contrastive representation stage followed by a classifier-only stage.
    #[default]
    Delta,
    /// Experience replay with end-to-end cross-entropy.
    ErCe,
}

/// Loss of the classifier stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stage2Loss {
    #[default]
    Equalization,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    #[serde(default)]
    pub stage2_loss: Stage2Loss,
    pub pairing: PairingConfig,
    pub buffer_capacity: usize,
    pub sgd: SgdConfig,
    pub contrastive: ContrastiveConfig,
    pub prior_scope: PriorScope,
    pub stage2_steps_per_batch: usize,
    pub augment: AugmentConfig,
    /// Seeds the buffer and the augmenter.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Delta,
            stage2_loss: Stage2Loss::Equalization,
            pairing: PairingConfig::default(),
            buffer_capacity: 200,
            sgd: SgdConfig::default(),
            contrastive: ContrastiveConfig::default(),
            prior_scope: PriorScope::Task,
            stage2_steps_per_batch: 1,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        self.contrastive.validate()?;
        self.augment.validate()?;
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer_capacity must be positive".into()));
        }
        if self.stage2_steps_per_batch == 0 {
            return Err(Error::Config(
                "stage2_steps_per_batch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub stage1_loss: Option<f64>,
    pub stage2_loss: f64,
}

/// Bit-level checks that each stage leaves the other stage's parameters alone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeAudit {
    pub stage1_updates: usize,
    pub stage2_updates: usize,
    pub classifier_changed_in_stage1: usize,
    pub encoder_changed_in_stage2: usize,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub network: Network,
    pub buffer: ReplayBuffer,
    pub prior: ClassPrior,
    cfg: TrainConfig,
    augmenter: Augmenter,
    current_task: Option<usize>,
    step: usize,
    stream_samples: usize,
    consumed: HashSet<(usize, usize)>,
    loss_log: Vec<LossRecord>,
    audit: Option<FreezeAudit>,
}

impl RunState {
    pub fn new(network: Network, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let augmenter = Augmenter::new(AugmentConfig {
            seed: crate::seeds::mix(cfg.seed, 0x0061_7567),
            ..cfg.augment
        })?;
        Ok(Self {
            network,
            buffer: ReplayBuffer::new(cfg.buffer_capacity, cfg.seed)?,
            prior: ClassPrior::new(),
            cfg,
            augmenter,
            current_task: None,
            step: 0,
            stream_samples: 0,
            consumed: HashSet::new(),
            loss_log: Vec::new(),
            audit: None,
        })
    }

    /// Enables per-update parameter fingerprinting.
    pub fn with_freeze_audit(mut self) -> Self {
        self.audit = Some(FreezeAudit::default());
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Number of stream batches consumed.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn stream_samples_consumed(&self) -> usize {
        self.stream_samples
    }

    pub fn current_task(&self) -> Option<usize> {
        self.current_task
    }

    pub fn loss_log(&self) -> &[LossRecord] {
        &self.loss_log
    }

    pub fn freeze_audit(&self) -> Option<FreezeAudit> {
        self.audit
    }

    fn admit(&mut self, batch: &StreamBatch) -> Result<()> {
        if !self.consumed.insert((batch.task, batch.index)) {
            return Err(Error::SinglePass {
                task: batch.task,
                batch: batch.index,
            });
        }
        if self.current_task != Some(batch.task) {
            self.current_task = Some(batch.task);
        }
        Ok(())
    }

    fn finish(&mut self, batch: &StreamBatch, record: LossRecord) {
        self.buffer.reservoir_update(&batch.samples);
        self.stream_samples += batch.len();
        self.step += 1;
        self.loss_log.push(record);
    }

    fn count_labels(&mut self, task: usize, labels: &[usize]) {
        if self.cfg.prior_scope == PriorScope::Batch {
            self.prior.reset_counts();
        }
        self.prior.update(task, labels);
    }
}

/// One dual-stage step on a stream batch.
///
/// Retrieves exemplars, builds the combined batch of originals and augmented
/// views, runs a contrastive update of encoder and projection, updates the
/// class prior with every label of the combined batch, runs the classifier
/// update(s) on frozen embeddings, and finally offers the stream samples to
/// the reservoir.
pub fn delta_step(state: &mut RunState, batch: StreamBatch) -> Result<()> {
    state.admit(&batch)?;
    let task = batch.task;
    let exemplars = pair_exemplars(&batch.samples, &mut state.buffer, &state.cfg.pairing);
    let combined = compose_combined_batch(&batch.samples, &exemplars, &mut state.augmenter);
    let x = features_matrix(&combined.samples)?;
    let labels = combined.labels();
    let net = &mut state.network;

    net.set_stage(Stage::One);
    let classifier_before = state.audit.map(|_| net.classifier_fingerprint());
    let trace = net.encode_traced(&x)?;
    let ptrace = net.project_traced(&trace.embedding)?;
    let contrastive =
        supervised_contrastive_loss(&ptrace.projection, &labels, &state.cfg.contrastive)?;
    let grad_e = net.project_backward(&ptrace, &contrastive.gradient)?;
    net.encode_backward(&trace, &grad_e)?;
    sgd_step(net.all_params_mut(), &state.cfg.sgd);
    if let (Some(audit), Some(before)) = (state.audit.as_mut(), classifier_before) {
        audit.stage1_updates += 1;
        if net.classifier_fingerprint() != before {
            audit.classifier_changed_in_stage1 += 1;
        }
    }

    state.count_labels(task, &labels);

    let net = &mut state.network;
    net.set_stage(Stage::Two);
    let embedding = net.encode(&x)?;
    let mut stage2_loss = f64::NAN;
    for rep in 0..state.cfg.stage2_steps_per_batch {
        let encoder_before = state.audit.map(|_| net.encoder_fingerprint());
        let logits = net.classify(&embedding)?;
        let loss = match state.cfg.stage2_loss {
            Stage2Loss::Equalization => equalization_loss(&logits, &labels, &state.prior)?,
            Stage2Loss::CrossEntropy => {
                cross_entropy_loss(&logits, &labels, &state.prior.seen_mask(logits.cols()))?
            }
        };
        if rep == 0 {
            stage2_loss = loss.value;
        }
        net.classify_backward(&embedding, &loss.gradient)?;
        sgd_step(net.all_params_mut(), &state.cfg.sgd);
        if let (Some(audit), Some(before)) = (state.audit.as_mut(), encoder_before) {
            audit.stage2_updates += 1;
            if net.encoder_fingerprint() != before {
                audit.encoder_changed_in_stage2 += 1;
            }
        }
    }

    state.finish(
        &batch,
        LossRecord {
            step: state.step,
            stage1_loss: Some(contrastive.value),
            stage2_loss,
        },
    );
    Ok(())
}

/// One experience-replay step: cross-entropy on stream samples plus retrieved
/// exemplars, all parameters trained jointly.
pub fn er_ce_step(state: &mut RunState, batch: StreamBatch) -> Result<()> {
    state.admit(&batch)?;
    let mut samples = batch.samples.clone();
    samples.extend(pair_exemplars(
        &batch.samples,
        &mut state.buffer,
        &state.cfg.pairing,
    ));
    let x = features_matrix(&samples)?;
    let labels = labels_of(&samples);
    state.count_labels(batch.task, &labels);

    let net = &mut state.network;
    net.set_stage(Stage::Joint);
    let trace = net.encode_traced(&x)?;
    let logits = net.classify(&trace.embedding)?;
    let loss = cross_entropy_loss(&logits, &labels, &state.prior.seen_mask(logits.cols()))?;
    let grad_e = net.classify_backward(&trace.embedding, &loss.gradient)?;
    net.encode_backward(&trace, &grad_e)?;
    sgd_step(net.all_params_mut(), &state.cfg.sgd);

    state.finish(
        &batch,
        LossRecord {
            step: state.step,
            stage1_loss: None,
            stage2_loss: loss.value,
        },
    );
    Ok(())
}

/// Dispatches to the configured step function.
pub fn train_step(state: &mut RunState, batch: StreamBatch) -> Result<()> {
    match state.cfg.method {
        Method::Delta => delta_step(state, batch),
        Method::ErCe => er_ce_step(state, batch),
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub accuracy: AccuracyMatrix,
    /// Confusion matrix over the classes seen so far, after each task.
    pub confusions: Vec<ConfusionMatrix>,
    pub loss_log: Vec<LossRecord>,
    /// Training-sample count per class label in the stream.
    pub train_counts: Vec<usize>,
    pub generated_samples: usize,
    pub stream_samples_consumed: usize,
    pub steps: usize,
    pub freeze_audit: Option<FreezeAudit>,
    pub elapsed_secs: f64,
    pub final_state: RunState,
}

/// Trains on every task in order and evaluates on the seen-class test samples
/// after each task.
pub fn run_experiment(
    mut tasks: Vec<TaskStream>,
    test_set: &[LabeledVector],
    mut state: RunState,
) -> Result<ExperimentOutcome> {
    let started = Instant::now();
    let width = state.network.config().num_classes_max;
    let mut train_counts = vec![0usize; width];
    for t in &tasks {
        for b in t.batches() {
            for s in &b.samples {
                if s.label >= width {
                    return Err(Error::UnseenLabel { label: s.label });
                }
                train_counts[s.label] += 1;
            }
        }
    }
    let generated_samples = tasks.iter().map(TaskStream::sample_count).sum();

    let mut accuracy = AccuracyMatrix::new();
    let mut confusions = Vec::with_capacity(tasks.len());
    let mut seen: Vec<usize> = Vec::new();
    let mut task_classes: Vec<Vec<usize>> = Vec::new();
    for task in tasks.iter_mut() {
        for batch in task.consume()? {
            train_step(&mut state, batch)?;
        }
        seen.extend_from_slice(task.class_ids());
        seen.sort_unstable();
        task_classes.push(task.class_ids().to_vec());

        let visible: Vec<LabeledVector> = test_set
            .iter()
            .filter(|s| seen.binary_search(&s.label).is_ok())
            .cloned()
            .collect();
        let result = evaluate(&state.network, &visible, &seen)?;
        let row = task_classes
            .iter()
            .map(|classes| {
                result
                    .confusion
                    .accuracy_over(classes)
                    .ok_or(Error::EmptyTestSet)
            })
            .collect::<Result<Vec<_>>>()?;
        accuracy.push_row(row)?;
        confusions.push(result.confusion);
    }

    Ok(ExperimentOutcome {
        accuracy,
        confusions,
        loss_log: state.loss_log.clone(),
        train_counts,
        generated_samples,
        stream_samples_consumed: state.stream_samples,
        steps: state.step,
        freeze_audit: state.audit,
        elapsed_secs: started.elapsed().as_secs_f64(),
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::stream::{
        build_stream, make_balanced_test_split, make_synthetic_source, StreamConfig,
    };

    fn small_model(classes: usize) -> Network {
        Network::new(
            ModelConfig {
                input_dim: 6,
                hidden_dims: vec![12],
                embed_dim: 8,
                proj_dim: 8,
                num_classes_max: classes,
            },
            1,
        )
        .unwrap()
    }

    fn tasks(seed: u64) -> Vec<TaskStream> {
        let src = make_synthetic_source(4, 6, 0.2, seed).unwrap();
        build_stream(&src, &StreamConfig::even(0.2, 4, 40, 2, seed).unwrap()).unwrap()
    }

    #[test]
    fn cold_start_runs_both_stages() {
        let mut t = tasks(0);
        let mut state = RunState::new(small_model(4), TrainConfig::default())
            .unwrap()
            .with_freeze_audit();
        let first = t[0].consume().unwrap().remove(0);
        let n = first.len();
        delta_step(&mut state, first).unwrap();
        let rec = state.loss_log()[0];
        assert!(rec.stage1_loss.unwrap().is_finite() && rec.stage2_loss.is_finite());
        assert_eq!(state.buffer.seen_count(), n as u64);
        // G_t = X_t and its augmentations only
        assert_eq!(state.prior.total(), 2 * n as u64);
        let audit = state.freeze_audit().unwrap();
        assert_eq!(audit.stage1_updates, 1);
        assert_eq!(audit.classifier_changed_in_stage1, 0);
        assert_eq!(audit.encoder_changed_in_stage2, 0);
    }

    #[test]
    fn reuse_is_rejected() {
        let mut t = tasks(1);
        let mut state = RunState::new(small_model(4), TrainConfig::default()).unwrap();
        let batch = t[0].consume().unwrap().remove(0);
        delta_step(&mut state, batch.clone()).unwrap();
        assert!(matches!(
            delta_step(&mut state, batch.clone()),
            Err(Error::SinglePass { task: 0, batch: 0 })
        ));
        assert!(er_ce_step(&mut state, batch).is_err());
    }

    #[test]
    fn seen_count_tracks_stream_only() {
        let mut t = tasks(2);
        let cfg = TrainConfig {
            pairing: PairingConfig {
                exemplars_per_input: 3,
            },
            ..Default::default()
        };
        let mut state = RunState::new(small_model(4), cfg).unwrap();
        let mut expected = 0u64;
        for task in &mut t {
            for b in task.consume().unwrap() {
                expected += b.len() as u64;
                delta_step(&mut state, b).unwrap();
                assert_eq!(state.buffer.seen_count(), expected);
            }
        }
    }

    #[test]
    fn task_scope_prior_matches_recount() {
        let mut t = tasks(3);
        let mut state = RunState::new(small_model(4), TrainConfig::default()).unwrap();
        for b in t[0].consume().unwrap() {
            delta_step(&mut state, b).unwrap();
        }
        // Recount: replay the same randomness with an identical state, collecting G_t labels.
        let mut recount = std::collections::BTreeMap::new();
        let mut shadow = RunState::new(small_model(4), TrainConfig::default()).unwrap();
        for b in tasks(3)[0].batches() {
            let ex = pair_exemplars(&b.samples, &mut shadow.buffer, &shadow.cfg.pairing);
            let g = compose_combined_batch(&b.samples, &ex, &mut shadow.augmenter);
            for l in g.labels() {
                *recount.entry(l).or_insert(0u64) += 1;
            }
            shadow.buffer.reservoir_update(&b.samples);
        }
        assert_eq!(state.prior.counts(), &recount);
    }

    #[test]
    fn batch_scope_prior_covers_one_step() {
        let mut t = tasks(4);
        let cfg = TrainConfig {
            prior_scope: PriorScope::Batch,
            ..Default::default()
        };
        let mut state = RunState::new(small_model(4), cfg).unwrap();
        let batches = t[0].consume().unwrap();
        let last_len = batches.last().unwrap().len();
        for b in batches {
            delta_step(&mut state, b).unwrap();
        }
        assert_eq!(state.prior.total(), 2 * 2 * last_len as u64);
    }

    #[test]
    fn er_ce_without_pairing_is_plain_sgd() {
        let mut t = tasks(5);
        let cfg = TrainConfig {
            method: Method::ErCe,
            pairing: PairingConfig {
                exemplars_per_input: 0,
            },
            ..Default::default()
        };
        let mut state = RunState::new(small_model(4), cfg).unwrap();
        let b = t[0].consume().unwrap().remove(0);
        let n = b.len();
        er_ce_step(&mut state, b).unwrap();
        assert_eq!(state.prior.total(), n as u64);
        assert!(state.loss_log()[0].stage1_loss.is_none());
    }

    #[test]
    fn er_ce_is_deterministic() {
        let run = || {
            let src = make_synthetic_source(4, 6, 0.2, 8).unwrap();
            let test = make_balanced_test_split(&src, 4, 10, 99).unwrap();
            let cfg = TrainConfig {
                method: Method::ErCe,
                ..Default::default()
            };
            let state = RunState::new(small_model(4), cfg).unwrap();
            let out = run_experiment(tasks(8), &test, state).unwrap();
            (out.accuracy, out.final_state.network)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn er_ce_loss_decreases_on_separable_stream() {
        let src = make_synthetic_source(2, 6, 0.05, 11).unwrap();
        let cfg = StreamConfig {
            rho: 1.0,
            num_classes: 2,
            max_per_class: 800,
            num_tasks: 1,
            classes_per_task: vec![2],
            batch_size: 16,
            seed: 11,
            shuffle_classes: false,
        };
        let mut t = build_stream(&src, &cfg).unwrap();
        let train = TrainConfig {
            method: Method::ErCe,
            ..Default::default()
        };
        let mut state = RunState::new(small_model(2), train).unwrap();
        for b in t[0].consume().unwrap().into_iter().take(100) {
            er_ce_step(&mut state, b).unwrap();
        }
        let log = state.loss_log();
        let early: f64 = log[..10].iter().map(|r| r.stage2_loss).sum::<f64>() / 10.0;
        let late: f64 = log[90..].iter().map(|r| r.stage2_loss).sum::<f64>() / 10.0;
        assert!(late < early, "{early} -> {late}");
    }

    #[test]
    fn experiment_shapes_and_counters() {
        let src = make_synthetic_source(4, 6, 0.2, 0).unwrap();
        let test = make_balanced_test_split(&src, 4, 10, 7).unwrap();
        let t = tasks(0);
        let batches: usize = t.iter().map(TaskStream::num_batches).sum();
        let state = RunState::new(small_model(4), TrainConfig::default()).unwrap();
        let out = run_experiment(t, &test, state).unwrap();
        assert_eq!(out.accuracy.num_tasks(), 2);
        for (i, row) in out.accuracy.rows().iter().enumerate() {
            assert_eq!(row.len(), i + 1);
        }
        assert_eq!(out.steps, batches);
        assert_eq!(
            out.loss_log
                .iter()
                .filter(|r| r.stage1_loss.is_some())
                .count(),
            batches
        );
        assert_eq!(out.stream_samples_consumed, out.generated_samples);
        assert_eq!(out.confusions[1].classes(), &[0, 1, 2, 3]);
    }

    #[test]
    fn single_task_schedule() {
        let src = make_synthetic_source(2, 6, 0.2, 0).unwrap();
        let test = make_balanced_test_split(&src, 2, 5, 7).unwrap();
        let t = build_stream(&src, &StreamConfig::even(0.5, 2, 20, 1, 0).unwrap()).unwrap();
        let state = RunState::new(small_model(2), TrainConfig::default()).unwrap();
        let out = run_experiment(t, &test, state).unwrap();
        assert_eq!(out.accuracy.rows().len(), 1);
        assert_eq!(out.accuracy.rows()[0].len(), 1);
    }
}
