use super::*;
use crate::doc::{DocumentRecord, StructureTree};
use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_tree() -> StructureTree {
    let json = r#"{"title": "doc", "front": ["front words here."], "sections": [
        {"title": "one", "paragraphs": ["alpha beta gamma delta."], "subsections": [
            {"title": "one one", "paragraphs": ["nested words."]}
        ]},
        {"title": "two", "paragraphs": ["closing words."]}
    ]}"#;
    StructureTree::from_record(&DocumentRecord::from_json(json).unwrap())
}

fn sample_for(
    tree: &StructureTree,
    config: &ModelConfig,
    seed: u64,
) -> PreparedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tree.num_tokens();
    let src: Vec<usize> = (0..n).map(|_| rng.gen_range(3..config.vocab_size)).collect();
    let tgt: Vec<usize> = (0..6).map(|_| rng.gen_range(3..config.vocab_size)).collect();
    let index = bias_kind(config.placement)
        .map(|kind| build_pos_index(tree, kind, &config.clip, n).unwrap());
    PreparedSample { src, tgt, index }
}

fn tiny_config(placement: Placement, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        d_model: 16,
        n_heads: 2,
        enc_layers: 2,
        dec_layers: 2,
        d_ff: 24,
        clip: ClipBounds { path: 4, lvl: 3, linear: 8 },
        placement,
        seed,
    }
}

#[test]
fn attend_biased_matches_closed_form() {
    // Zero scores with bias (ln 2, 0): weights (2/3, 1/3).
    let q: Array1<f64> = array![0.0, 0.0];
    let keys: Array2<f64> = array![[0.0, 0.0], [0.0, 0.0]];
    let bias: Array1<f64> = array![2.0f64.ln(), 0.0];
    let w = attend_biased(&q, &keys, &bias).unwrap();
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);

    // Zero bias reduces to plain softmax attention.
    let q = array![1.0, -0.5];
    let keys = array![[0.3, 0.4], [-0.2, 0.9], [0.0, 0.0]];
    let zero = Array1::zeros(3);
    let w0 = attend_biased(&q, &keys, &zero).unwrap();
    let scaled = keys.dot(&q) / (2.0f64).sqrt();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    for (a, b) in w0.iter().zip(&exps) {
        assert!((a - b / z).abs() < 1e-12);
    }

    // Shifting every bias entry by a constant leaves the row unchanged.
    let shifted = attend_biased(&q, &keys, &Array1::from_elem(3, 3.7)).unwrap();
    for (a, b) in w0.iter().zip(shifted.iter()) {
        assert!((a - b).abs() < 1e-12);
    }

    // Dimension mismatch.
    assert!(attend_biased(&q, &keys, &Array1::zeros(2)).is_err());
}

#[test]
fn bias_matrix_composes_with_token_position() {
    let tree = fixture_tree();
    let clip = ClipBounds { path: 4, lvl: 3, linear: 8 };
    let mut table = BiasTable::zeros(BiasKind::Full, clip, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    table.values.mapv_inplace(|_| rng.gen_range(-1.0..1.0));

    let n = tree.num_tokens();
    let matrices = bias_matrix_enc(&tree, &table, n).unwrap();
    for _ in 0..20 {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let pos = tree.token_position(i, j).unwrap();
        for (h, m) in matrices.iter().enumerate() {
            let direct = table.values[[h, table.full_slot(pos.path_len, pos.lvl_diff)]];
            assert_eq!(m[[i, j]], direct, "({i},{j}) head {h}");
        }
    }

    // Same-section pair reads the (0, 0) slot.
    let span = tree.nodes()[1].token_span.clone();
    let m0 = &matrices[0];
    assert_eq!(m0[[span.start, span.start + 1]], table.values[[0, table.full_slot(0, 0)]]);

    // All-zero table -> zero matrix.
    let zero_table = BiasTable::zeros(BiasKind::Full, clip, 2);
    for m in bias_matrix_enc(&tree, &zero_table, n).unwrap() {
        assert!(m.iter().all(|v| *v == 0.0));
    }

    // Sequence longer than coverage errors.
    assert!(bias_matrix_enc(&tree, &table, n + 1).is_err());
}

#[test]
fn selected_kind_zeroes_other_pairs() {
    let tree = fixture_tree();
    let clip = ClipBounds::default();
    let mut table = BiasTable::zeros(BiasKind::Selected, clip, 1);
    table.values.fill(1.0);
    let n = tree.num_tokens();
    let m = &bias_matrix_enc(&tree, &table, n).unwrap()[0];
    for i in 0..n {
        for j in 0..n {
            let a = tree.token_owner(i).unwrap();
            let b = tree.token_owner(j).unwrap();
            let expected = if tree.classify_relation(a, b).unwrap().is_selected() {
                1.0
            } else {
                0.0
            };
            assert_eq!(m[[i, j]], expected);
        }
    }
}

#[test]
fn dec_bias_degenerate_weightings() {
    let tree = fixture_tree();
    let clip = ClipBounds { path: 4, lvl: 3, linear: 8 };
    let mut table = BiasTable::zeros(BiasKind::Full, clip, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    table.values.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let n = tree.num_tokens();

    // One-hot alignment picks out a single table entry.
    let star = 4usize;
    let mut one_hot = vec![0.0; n];
    one_hot[star] = 1.0;
    let j = 9usize;
    let pos = tree.token_position(star, j).unwrap();
    let direct = table.values[[1, table.full_slot(pos.path_len, pos.lvl_diff)]];
    let got = bias_vector_dec(&tree, &table, 1, &one_hot, j).unwrap();
    assert!((got - direct).abs() < 1e-12);

    // Uniform weight over two tokens of the same section equals the shared
    // single-token bias.
    let span = tree.nodes()[2].token_span.clone();
    let mut uniform = vec![0.0; n];
    uniform[span.start] = 0.5;
    uniform[span.start + 1] = 0.5;
    let single = bias_vector_dec(&tree, &table, 0, &one_hot_at(span.start, n), j).unwrap();
    let mixed = bias_vector_dec(&tree, &table, 0, &uniform, j).unwrap();
    assert!((mixed - single).abs() < 1e-12);

    // All-zero table -> zero bias everywhere.
    let zeros = BiasTable::zeros(BiasKind::Full, clip, 2);
    for j in 0..n {
        assert_eq!(bias_vector_dec(&tree, &zeros, 0, &uniform, j).unwrap(), 0.0);
    }

    // Alignment length mismatch.
    assert!(bias_vector_dec(&tree, &table, 0, &vec![1.0; n + 1], 0).is_err());
}

fn one_hot_at(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

#[test]
fn dec_bias_sum_matches_matrix_route() {
    // The per-entry weighted sum and the alignment-times-table-matrix
    // product are two routes to the same quantity.
    let tree = fixture_tree();
    let clip = ClipBounds { path: 4, lvl: 3, linear: 8 };
    let mut table = BiasTable::zeros(BiasKind::Full, clip, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    table.values.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let n = tree.num_tokens();
    let matrices = bias_matrix_enc(&tree, &table, n).unwrap();

    for trial in 0..10 {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let alignment: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let h = trial % 3;
        let j = rng.gen_range(0..n);
        let direct = bias_vector_dec(&tree, &table, h, &alignment, j).unwrap();
        let via_matrix: f64 = alignment
            .iter()
            .enumerate()
            .map(|(l, a)| a * matrices[h][[l, j]])
            .sum();
        assert!((direct - via_matrix).abs() < 1e-12, "trial {trial}");
    }
}

#[test]
fn nonzero_tables_change_logits() {
    let tree = fixture_tree();
    for placement in [Placement::Enc, Placement::Dec, Placement::TokLinear] {
        let config = tiny_config(placement, 42);
        let model = Model::new(config.clone()).unwrap();
        let mut biased = model.clone();
        let idx = biased.bias_table_tensor_index().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        biased.store.get_mut(idx).mapv_inplace(|_| rng.gen_range(-0.5..0.5));

        let sample = sample_for(&tree, &config, 17);
        let dec_in = decoder_input(&sample.tgt);
        let plain = model.forward(&sample.src, sample.index.as_ref(), &dec_in).unwrap();
        let shifted = biased.forward(&sample.src, sample.index.as_ref(), &dec_in).unwrap();
        let diff = (&plain.logits - &shifted.logits)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff > 1e-6, "{placement:?}: table had no effect on logits");
    }
}

#[test]
fn clipping_is_total_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let clip = ClipBounds { path: 2, lvl: 1, linear: 3 };
    for _ in 0..50 {
        let doc = crate::doc::synth::random_document(&mut rng, 20, 5);
        let tree = StructureTree::from_record(&doc);
        let n = tree.num_tokens().min(40);
        for kind in [BiasKind::Full, BiasKind::Selected, BiasKind::TokenLinear, BiasKind::SectionLinear] {
            let index = build_pos_index(&tree, kind, &clip, n).unwrap();
            let size = kind.table_size(&clip) as i32;
            for slot in index.slots.iter() {
                assert!(*slot >= -1 && *slot < size, "slot {slot} out of range for {kind:?}");
            }
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let tree = fixture_tree();
    for placement in [Placement::None, Placement::Enc, Placement::Dec] {
        let config = tiny_config(placement, 5);
        let model = Model::new(config.clone()).unwrap();
        let mut sample = sample_for(&tree, &config, 8);
        // Non-zero tables so the bias actually perturbs the rows.
        if let Some(idx) = model.bias_table_tensor_index() {
            let mut model = model.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            model.store.get_mut(idx).mapv_inplace(|_| rng.gen_range(-0.5..0.5));
            check_rows(&model, &mut sample);
            continue;
        }
        check_rows(&model, &mut sample);
    }

    fn check_rows(model: &Model, sample: &mut PreparedSample) {
        let pass = model
            .forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt))
            .unwrap();
        for a in pass.attention_rows() {
            for row in a.rows() {
                let sum: f64 = row.sum();
                assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
            }
        }
        // The head-averaged alignment feeding the decoder bias is itself a
        // distribution over input tokens.
        for layer in 0..model.config.dec_layers {
            let avg = pass.cross_attention_avg(layer);
            for row in avg.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn zero_bias_matches_unbiased_logits() {
    let tree = fixture_tree();
    let baseline_cfg = tiny_config(Placement::None, 42);
    let baseline = Model::new(baseline_cfg.clone()).unwrap();
    for placement in [
        Placement::Enc,
        Placement::Dec,
        Placement::EncSelected,
        Placement::DecSelected,
        Placement::TokLinear,
        Placement::SecLinear,
    ] {
        let config = tiny_config(placement, 42);
        let model = Model::new(config.clone()).unwrap();
        let sample = sample_for(&tree, &config, 17);
        let pass = model
            .forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt))
            .unwrap();
        let base_pass = baseline
            .forward(&sample.src, None, &decoder_input(&sample.tgt))
            .unwrap();
        let max_diff = (&pass.logits - &base_pass.logits)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff < 1e-12, "{placement:?}: max logit diff {max_diff}");
    }
}

#[test]
fn dec_placement_needs_two_layers() {
    let mut config = tiny_config(Placement::Dec, 1);
    config.dec_layers = 1;
    assert!(Model::new(config).is_err());
}

#[test]
fn forward_is_deterministic() {
    let tree = fixture_tree();
    let config = tiny_config(Placement::Enc, 9);
    let sample = sample_for(&tree, &config, 2);
    let a = Model::new(config.clone()).unwrap();
    let b = Model::new(config).unwrap();
    let pa = a.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt)).unwrap();
    let pb = b.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt)).unwrap();
    assert_eq!(pa.logits, pb.logits, "same seed must give bit-identical logits");
}

/// Central finite difference on one parameter element.
fn numeric_grad(
    model: &Model,
    batch: &[PreparedSample],
    tensor: usize,
    element: (usize, usize),
    step: f64,
) -> f64 {
    let mut plus = model.clone();
    plus.store.get_mut(tensor)[element] += step;
    let mut minus = model.clone();
    minus.store.get_mut(tensor)[element] -= step;
    (plus.batch_loss(batch).unwrap() - minus.batch_loss(batch).unwrap()) / (2.0 * step)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn gradients_match_finite_differences() {
    let tree = fixture_tree();
    for placement in [Placement::Enc, Placement::Dec, Placement::TokLinear] {
        let config = tiny_config(placement, 33);
        let mut model = Model::new(config.clone()).unwrap();
        // Random table so decoder-bias gradients are exercised off zero.
        let table_idx = model.bias_table_tensor_index().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        model.store.get_mut(table_idx).mapv_inplace(|_| rng.gen_range(-0.3..0.3));

        let batch = vec![sample_for(&tree, &config, 4), sample_for(&tree, &config, 5)];
        let (_, grads) = model.batch_loss_grads(&batch).unwrap();

        // Bias-table entries actually touched by the batch.
        let touched: Vec<(usize, usize)> = {
            let g = &grads.tensors[table_idx];
            (0..g.nrows())
                .flat_map(|h| (0..g.ncols()).map(move |s| (h, s)))
                .filter(|&(h, s)| g[[h, s]].abs() > 1e-12)
                .collect()
        };
        assert!(!touched.is_empty(), "{placement:?}: no table entry touched");
        for &(h, s) in touched.iter().take(6) {
            let numeric = numeric_grad(&model, &batch, table_idx, (h, s), 1e-4);
            let analytic = grads.tensors[table_idx][[h, s]];
            assert!(
                rel_err(numeric, analytic) < 1e-4,
                "{placement:?} table[{h},{s}]: analytic {analytic} vs numeric {numeric}"
            );
        }

        // One weight matrix per layer type. Under the decoder placement,
        // dec.0.cross.wq sits upstream of the alignment that weights the
        // last layer's bias, so its check covers that gradient path.
        for name in [
            "embed",
            "enc.0.attn.wq",
            "dec.0.cross.wq",
            "dec.1.cross.wk",
            "dec.0.ff.w1",
            "out.w",
            "enc.0.ln1.g",
        ] {
            let idx = model.store.find(name).unwrap();
            let g = &grads.tensors[idx];
            let element = g
                .indexed_iter()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .map(|(e, _)| e)
                .unwrap();
            let numeric = numeric_grad(&model, &batch, idx, element, 1e-4);
            let analytic = g[element];
            assert!(
                rel_err(numeric, analytic) < 1e-4,
                "{placement:?} {name}{element:?}: analytic {analytic} vs numeric {numeric}"
            );
        }

        // An entry never indexed by the batch keeps zero gradient: pick the
        // extreme clipped corner slot, unreachable for this small tree.
        if placement == Placement::Enc {
            let table = model.bias_table().unwrap();
            let corner = table.full_slot(config.clip.path, -config.clip.lvl);
            assert_eq!(grads.tensors[table_idx][[0, corner]], 0.0);
        }
    }
}

#[test]
fn softmax_shift_direction_has_zero_effect() {
    // Adding a constant to a whole bias row cannot change the loss; the
    // directional derivative along the all-ones row direction must vanish.
    let tree = fixture_tree();
    let config = tiny_config(Placement::Enc, 13);
    let mut model = Model::new(config.clone()).unwrap();
    let table_idx = model.bias_table_tensor_index().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    model.store.get_mut(table_idx).mapv_inplace(|_| rng.gen_range(-0.3..0.3));
    let batch = vec![sample_for(&tree, &config, 6)];

    let base = model.batch_loss(&batch).unwrap();
    let mut shifted = model.clone();
    // Shift every table entry of every head by the same constant: each
    // attention row's bias shifts uniformly only for full coverage, which
    // holds for the full-table kind (no -1 slots).
    shifted.store.get_mut(table_idx).mapv_inplace(|v| v + 0.37);
    let after = shifted.batch_loss(&batch).unwrap();
    assert!((base - after).abs() < 1e-9, "{base} vs {after}");

    // And the analytic gradient agrees: its projection on the all-ones
    // direction is ~0.
    let (_, grads) = model.batch_loss_grads(&batch).unwrap();
    let projection: f64 = grads.tensors[table_idx].iter().sum();
    assert!(projection.abs() < 1e-9, "projection {projection}");
}

#[test]
fn training_overfits_and_is_deterministic() {
    let tree = fixture_tree();
    let config = tiny_config(Placement::Enc, 77);
    let samples: Vec<PreparedSample> =
        (0..4).map(|s| sample_for(&tree, &config, 100 + s)).collect();

    let mut model = Model::new(config.clone()).unwrap();
    let trace = train(&mut model, &samples, 60, 0.25).unwrap();
    assert!(trace[trace.len() - 1] < trace[0] * 0.5, "loss did not drop: {trace:?}");

    // Zero learning rate: constant trace.
    let mut frozen = Model::new(config.clone()).unwrap();
    let flat = train(&mut frozen, &samples, 5, 0.0).unwrap();
    assert!(flat.windows(2).all(|w| w[0] == w[1]));

    // Same seed, same trace.
    let mut again = Model::new(config).unwrap();
    let trace2 = train(&mut again, &samples, 60, 0.25).unwrap();
    assert_eq!(trace, trace2);
}

#[test]
fn divergence_reports_step_index() {
    let tree = fixture_tree();
    let config = tiny_config(Placement::None, 3);
    let samples = vec![sample_for(&tree, &config, 1)];
    let mut model = Model::new(config).unwrap();
    let err = train(&mut model, &samples, 200, 1e12).unwrap_err();
    match err {
        crate::error::Error::Diverged { step } => assert!(step < 200, "step {step}"),
        other => panic!("expected divergence, got {other}"),
    }
}

#[test]
fn checkpoint_roundtrip_preserves_model() {
    let tree = fixture_tree();
    let config = tiny_config(Placement::Dec, 21);
    let mut model = Model::new(config.clone()).unwrap();
    let table_idx = model.bias_table_tensor_index().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    model.store.get_mut(table_idx).mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    let vocab = Vocab::build(["alpha", "beta"]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    checkpoint::save(&model, &vocab, &path).unwrap();
    let (loaded, loaded_vocab) = checkpoint::load(&path).unwrap();
    assert_eq!(loaded_vocab.tokens(), vocab.tokens());

    let sample = sample_for(&tree, &config, 31);
    let a = model.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt)).unwrap();
    let b = loaded.forward(&sample.src, sample.index.as_ref(), &decoder_input(&sample.tgt)).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn checkpoint_rejects_out_of_bounds_entries() {
    let config = tiny_config(Placement::Enc, 4);
    let model = Model::new(config).unwrap();
    let vocab = Vocab::build(["x"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    checkpoint::save(&model, &vocab, &path).unwrap();

    // Shrinking the clip bounds in the stored config leaves saved entries
    // outside the table; the load must fail instead of misreading slots.
    let text = std::fs::read_to_string(&path).unwrap();
    let edited = text.replace(r#""path":4"#, r#""path":2"#);
    assert_ne!(text, edited);
    std::fs::write(&path, edited).unwrap();
    let err = checkpoint::load(&path).unwrap_err();
    assert!(err.to_string().contains("clip bounds"), "{err}");
}

#[test]
fn out_of_vocab_ids_are_rejected() {
    let config = tiny_config(Placement::None, 4);
    let model = Model::new(config.clone()).unwrap();
    let err = model.forward(&[config.vocab_size], None, &[0]).unwrap_err();
    assert!(err.to_string().contains("out of vocabulary"), "{err}");
}

#[test]
fn dump_grid_reads_head_average() {
    let tree = fixture_tree();
    let clip = ClipBounds::default();
    let mut table = BiasTable::zeros(BiasKind::Full, clip, 2);
    // Grid entries are 100 x the head average.
    let slot = table.full_slot(1, -1);
    table.values[[0, slot]] = 0.02;
    table.values[[1, slot]] = 0.04;
    let grid = dump_bias_grid(&table, &tree).unwrap();
    // Sections 1 -> 2 in the fixture: parent-child one level apart.
    let pos = tree.tree_position(1, 2).unwrap();
    assert_eq!((pos.path_len, pos.lvl_diff), (1, -1));
    assert!((grid[[1, 2]] - 3.0).abs() < 1e-12);

    // Zero table -> zero grid.
    let zeros = BiasTable::zeros(BiasKind::Full, clip, 2);
    let grid = dump_bias_grid(&zeros, &tree).unwrap();
    assert!(grid.iter().all(|v| *v == 0.0));

    // The grid is antisymmetric in index only: B[p, l] is not forced to be
    // -B[-p, -l].
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut random = BiasTable::zeros(BiasKind::Full, clip, 2);
    random.values.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let grid = dump_bias_grid(&random, &tree).unwrap();
    let csv = bias_grid_csv(&grid);
    assert!(csv.lines().count() == tree.num_sections() + 1);
    assert!((grid[[1, 2]] + grid[[2, 1]]).abs() > 1e-9, "not forced antisymmetric");
}
