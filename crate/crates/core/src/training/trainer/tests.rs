use super::*;
use crate::autograd::grad_check_params;
use crate::model::ModelConfig;
use crate::wordpiece::grapheme_vocab;

fn micro_data(n: usize, seed: u64) -> (WordpieceVocab, Vec<Utterance>) {
    let vocab = grapheme_vocab(['a']).unwrap();
    assert_eq!(vocab.len(), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n)
        .map(|i| {
            let words = rng.gen_range(1..=2);
            let transcript = (0..words).map(|_| "a".repeat(rng.gen_range(1..=2))).collect::<Vec<_>>().join(" ");
            let frames = 2 + transcript.len();
            let mut feats: Vec<f64> = (0..frames * 5).map(|_| rng.gen_range(-0.3..0.3)).collect();
            for (t, ch) in transcript.chars().enumerate() {
                feats[(t + 1) * 5 + if ch == ' ' { 0 } else { 1 }] += 1.5;
            }
            Utterance {
                id: format!("u{i}"),
                features: Tensor::new(vec![frames, 5], feats).unwrap(),
                tokens: vocab.segment(&transcript).ids,
                transcript,
            }
        })
        .collect();
    (vocab, data)
}

fn micro_cfg() -> TrainConfig {
    TrainConfig { batch_size: 4, peak_lr: 0.02, lr_ramp_steps: 5, ss_ramp_steps: 20, ce_steps: 30, ..TrainConfig::default() }
}

#[test]
fn zero_sampling_matches_teacher_forcing_bitwise() {
    let (_, data) = micro_data(1, 1);
    let model = Las::new(ModelConfig::micro(), 2).unwrap();
    let u = &data[0];
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mem = model.listen(&mut tape, &bound, &u.features).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ss = forward_scheduled_sampling(&model, &mut tape, &bound, &mem, &u.tokens, 0.0, &mut rng).unwrap();
    let tf = model.forced_logits(&mut tape, &bound, &mem, &model.teacher_inputs(&u.tokens)).unwrap();
    for (a, b) in ss.iter().zip(&tf) {
        assert_eq!(tape.value(*a), tape.value(*b));
    }
}

#[test]
fn full_sampling_is_seed_reproducible() {
    let (_, data) = micro_data(1, 4);
    let model = Las::new(ModelConfig::micro(), 5).unwrap();
    let run = |seed| {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let mem = model.listen(&mut tape, &bound, &data[0].features).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = forward_scheduled_sampling(&model, &mut tape, &bound, &mem, &data[0].tokens, 1.0, &mut rng).unwrap();
        out.iter().map(|v| tape.value(*v).data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(run(6), run(6));
    assert_eq!(run(6).len(), data[0].tokens.len());
}

#[test]
fn sampling_probability_is_validated() {
    let (_, data) = micro_data(1, 4);
    let model = Las::new(ModelConfig::micro(), 5).unwrap();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let mem = model.listen(&mut tape, &bound, &data[0].features).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = forward_scheduled_sampling(&model, &mut tape, &bound, &mem, &data[0].tokens, 1.5, &mut rng);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn batches_cover_each_epoch_once() {
    let n = 10;
    let mut seen: Vec<usize> = (0..5).flat_map(|s| batch_indices(n, s, 4, 9)).collect();
    seen.truncate(20);
    let mut first: Vec<usize> = seen[..10].to_vec();
    first.sort();
    assert_eq!(first, (0..10).collect::<Vec<_>>());
    let mut second: Vec<usize> = seen[10..20].to_vec();
    second.sort();
    assert_eq!(second, (0..10).collect::<Vec<_>>());
    assert_ne!(&seen[..10], &seen[10..20]);
    assert_eq!(batch_indices(n, 3, 4, 9), batch_indices(n, 3, 4, 9));
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (vocab, data) = micro_data(16, 7);
    let cfg = TrainConfig { ss_target_prob: 0.0, ..micro_cfg() };
    let mut a = Trainer::new(Las::new(ModelConfig::micro(), 8).unwrap(), cfg.clone()).unwrap();
    let recs = a.run(&data, &vocab, None).unwrap();
    assert_eq!(recs.len(), 30);
    let head: f64 = recs[..5].iter().map(|r| r.loss).sum();
    let tail: f64 = recs[25..].iter().map(|r| r.loss).sum();
    assert!(tail < head, "{head} -> {tail}");
    let mut b = Trainer::new(Las::new(ModelConfig::micro(), 8).unwrap(), cfg).unwrap();
    b.run(&data, &vocab, None).unwrap();
    assert_eq!(a.model(), b.model());
}

#[test]
fn resume_continues_bit_exactly() {
    let (vocab, data) = micro_data(8, 10);
    let cfg = TrainConfig { ce_steps: 6, mwer_steps: 2, batch_size: 2, ..micro_cfg() };
    let mut whole = Trainer::new(Las::new(ModelConfig::micro(), 11).unwrap(), cfg.clone()).unwrap();
    whole.run(&data, &vocab, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut part = Trainer::new(Las::new(ModelConfig::micro(), 11).unwrap(), cfg).unwrap();
    for _ in 0..4 {
        part.step(&data, &vocab).unwrap();
    }
    part.save(dir.path()).unwrap();
    let mut resumed = Trainer::resume(dir.path()).unwrap();
    assert_eq!(resumed.state(), part.state());
    resumed.run(&data, &vocab, Some(dir.path())).unwrap();
    assert_eq!(resumed.model(), whole.model());
    let log = fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
    let lines: Vec<StepRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.iter().map(|r| r.step).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
    assert_eq!(lines[2].phase, Phase::Mwer);
    assert!(dir.path().join("checkpoint/model.json").exists());
}

#[test]
fn replicas_match_one_large_batch() {
    let (vocab, data) = micro_data(8, 12);
    let one = TrainConfig { ce_steps: 3, ss_target_prob: 0.0, ..micro_cfg() };
    let two = TrainConfig { replicas: 2, ..one.clone() };
    let mut a = Trainer::new(Las::new(ModelConfig::micro(), 13).unwrap(), one).unwrap();
    let mut b = Trainer::new(Las::new(ModelConfig::micro(), 13).unwrap(), two).unwrap();
    a.run(&data, &vocab, None).unwrap();
    b.run(&data, &vocab, None).unwrap();
    for (x, y) in a.model().params().tensors().iter().zip(b.model().params().tensors()) {
        for (p, q) in x.data().iter().zip(y.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn rejected_steps_leave_parameters_alone() {
    let (vocab, data) = micro_data(4, 14);
    let cfg = TrainConfig { ce_steps: 2, grad_tracker_factor: 1e-9, ..micro_cfg() };
    let mut t = Trainer::new(Las::new(ModelConfig::micro(), 15).unwrap(), cfg).unwrap();
    t.step(&data, &vocab).unwrap();
    let before = t.model().clone();
    let adam_before = t.state().adam.clone();
    let rec = t.step(&data, &vocab).unwrap();
    assert!(!rec.accepted);
    assert_eq!(t.model(), &before);
    assert_eq!(t.state().adam, adam_before);
    assert_eq!(t.state().tracker.rejected_count, 1);
}

#[test]
fn mwer_gradient_on_a_fixed_nbest() {
    let (_, data) = micro_data(1, 16);
    let model = Las::new(ModelConfig::micro(), 17).unwrap();
    let u = &data[0];
    let hyps = [vec![4, 1], vec![5, 4, 1], vec![4, 4, 5, 1]];
    let errors = [1.0, 0.0, 2.0];
    let report = grad_check_params(
        |_, tape, bound| {
            let mem = model.listen(tape, bound, &u.features)?;
            let lps = hyps
                .iter()
                .map(|h| Ok(model.seq_log_prob(tape, bound, &mem, h)?.total))
                .collect::<Result<Vec<_>>>()?;
            let logits = model.forced_logits(tape, bound, &mem, &model.teacher_inputs(&u.tokens))?;
            let ce = ce_loss_smoothed(tape, &logits, &u.tokens, 0.1)?;
            Ok(mwer_loss(tape, &lps, &errors, ce, 0.01)?.loss)
        },
        model.params(),
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}
