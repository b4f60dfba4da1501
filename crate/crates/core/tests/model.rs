use std::cell::Cell;
use std::collections::BTreeMap;

use mavit_core::checkpoint::Checkpoint;
use mavit_core::encoder::{self, MdaVars, StbVars};
use mavit_core::heads::LossTerm;
use mavit_core::synth::{generate, Split, SynthConfig};
use mavit_core::tokenize;
use mavit_core::train::{train, TrainConfig};
use mavit_core::{attention, Ablation, Error, Graph, MaVit, ModalImages, Modality, ModelConfig, Sample, Tensor};

fn tiny_data(train: usize, seed: u64) -> Vec<Sample> {
    let cfg = SynthConfig {
        train,
        dev: 2,
        test: 2,
        image_size: 16,
        patch_size: 4,
        seed,
        ..SynthConfig::default()
    };
    generate(&cfg).unwrap().split(Split::Train).to_vec()
}

fn variant(ablation: Ablation) -> ModelConfig {
    ModelConfig {
        ablation,
        ..ModelConfig::desk()
    }
}

const VARIANTS: [Ablation; 4] = [
    Ablation::FULL,
    Ablation::VIT,
    Ablation { mda: true, cma: false },
    Ablation { mda: false, cma: true },
];

#[test]
fn param_count_matches_formula() {
    for base in [ModelConfig::desk(), ModelConfig::tiny()] {
        for ablation in VARIANTS {
            for mods in [vec![Modality::Rgb, Modality::Depth], vec![Modality::Ir]] {
                let cfg = ModelConfig {
                    ablation,
                    modalities: mods,
                    ..base.clone()
                };
                let model = MaVit::new(cfg.clone(), 1).unwrap();
                assert_eq!(model.count_params(), MaVit::param_formula(&cfg), "{cfg:?}");
            }
        }
    }
}

#[test]
fn matb_delta_is_mda_only() {
    let full = MaVit::new(variant(Ablation::FULL), 0).unwrap().count_params();
    let vit = MaVit::new(variant(Ablation::VIT), 0).unwrap().count_params();
    let mda_only = MaVit::new(variant(Ablation { mda: true, cma: false }), 0)
        .unwrap()
        .count_params();
    let cma_only = MaVit::new(variant(Ablation { mda: false, cma: true }), 0)
        .unwrap()
        .count_params();
    let d = 32;
    assert_eq!(full - vit, 4 * (6 * d * d + 3 * d));
    assert_eq!(full, mda_only, "cross-modal attention adds parameters");
    assert_eq!(cma_only, vit);
    assert!(full > vit);
}

fn canonical_shapes(model: &MaVit) -> Vec<(String, Vec<usize>)> {
    model
        .params()
        .iter()
        .map(|(k, t)| (k.to_string(), t.shape().to_vec()))
        .collect()
}

#[test]
fn ablations_reduce_to_the_plain_baseline() {
    let vit = canonical_shapes(&MaVit::new(variant(Ablation::VIT), 0).unwrap());
    let cma_vit = canonical_shapes(&MaVit::new(variant(Ablation { mda: false, cma: true }), 0).unwrap());
    let mda_vit = canonical_shapes(&MaVit::new(variant(Ablation { mda: true, cma: false }), 0).unwrap());
    let full = MaVit::new(variant(Ablation::FULL), 0).unwrap();
    assert_eq!(cma_vit, vit);
    assert_eq!(mda_vit, canonical_shapes(&full));
    let without_mda: Vec<_> = canonical_shapes(&full)
        .into_iter()
        .filter(|(k, _)| !k.contains(".mda."))
        .collect();
    assert_eq!(without_mda, vit);
    assert!(full
        .params()
        .aliases()
        .all(|(a, t)| a.contains(".cma.") && !t.contains(".cma.")));
    let vit_model = MaVit::new(variant(Ablation::VIT), 0).unwrap();
    assert_eq!(vit_model.params().aliases().count(), 0);
}

#[test]
fn flop_formula_matches_recorded_macs() {
    let data = tiny_data(2, 3);
    let desk_data = generate(&SynthConfig {
        train: 2,
        dev: 2,
        test: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    for ablation in VARIANTS {
        for (cfg, sample) in [
            (
                ModelConfig {
                    ablation,
                    ..ModelConfig::tiny()
                },
                &data[0],
            ),
            (variant(ablation), &desk_data.split(Split::Train)[0]),
        ] {
            let model = MaVit::new(cfg.clone(), 2).unwrap();
            let mut g = Graph::new();
            model.loss(&mut g, sample).unwrap();
            assert_eq!(g.macs(), MaVit::flops_formula(&cfg), "{:?}", cfg.ablation);
        }
    }
}

#[test]
fn mda_block_touches_only_the_cls_row() {
    let model = MaVit::new(ModelConfig::tiny(), 4).unwrap();
    let cfg = model.config();
    let sample = &tiny_data(1, 1)[0];
    let mut g = Graph::new();
    let seq = tokenize::embed(
        &mut g,
        model.params(),
        cfg,
        &sample.images[&Modality::Rgb],
        Modality::Rgb,
    )
    .unwrap();
    let stb = StbVars::bind(&mut g, model.params(), 0).unwrap();
    let z = encoder::stb_forward(&mut g, seq.tokens, &stb, cfg.heads).unwrap();
    let w = MdaVars::bind(&mut g, model.params(), 0).unwrap();
    let (out, mda) = encoder::matb_mda_forward(&mut g, z, &w, cfg.lambda, cfg.heads).unwrap();
    let (before, after) = (g.value(z), g.value(out));
    for r in 1..before.rows() {
        assert_eq!(before.row(r), after.row(r), "row {r}");
    }
    assert_ne!(before.row(0), after.row(0));
    assert!(mda.mask.bits().iter().any(|&b| b));
}

#[test]
fn first_cross_block_has_no_residual() {
    for blocks in [1, 2] {
        let cfg = ModelConfig {
            blocks,
            ..ModelConfig::tiny()
        };
        let model = MaVit::new(cfg.clone(), 6).unwrap();
        let sample = &tiny_data(1, 2)[0];
        let mut g = Graph::new();
        let fwd = model.forward(&mut g, sample, &cfg.modalities).unwrap();
        let got = g.value(fwd.state.cross.unwrap().tokens).clone();

        // recompute the cross path from scratch with plain graph ops
        let mut g = Graph::new();
        let p = model.params();
        let r = tokenize::embed(&mut g, p, &cfg, &sample.images[&Modality::Rgb], Modality::Rgb)
            .unwrap()
            .tokens;
        let d = tokenize::embed(&mut g, p, &cfg, &sample.images[&Modality::Depth], Modality::Depth)
            .unwrap()
            .tokens;
        let (mut zr, mut zd) = (r, d);
        let mut cross: Option<mavit_core::Var> = None;
        for k in 0..blocks {
            let w = StbVars::bind(&mut g, p, k).unwrap();
            let nr = g.layernorm(zr, w.ln1.gain, w.ln1.bias).unwrap();
            let nd = g.layernorm(zd, w.ln1.gain, w.ln1.bias).unwrap();
            let rd = attention::attend(&mut g, nr, nd, &w.proj, cfg.heads).unwrap();
            let dr = attention::attend(&mut g, nd, nr, &w.proj, cfg.heads).unwrap();
            let cat = g.concat_rows(&[rd, dr]).unwrap();
            let mut y = attention::project(&mut g, cat, &w.out).unwrap();
            if let Some(prev) = cross {
                y = g.add(y, prev).unwrap();
            }
            let n = g.layernorm(y, w.ln2.gain, w.ln2.bias).unwrap();
            let m = w.mlp.apply(&mut g, n).unwrap();
            cross = Some(g.add(y, m).unwrap());
            let mda = MdaVars::bind(&mut g, p, k).unwrap();
            let step = |g: &mut Graph, z| {
                let z = encoder::stb_forward(g, z, &w, cfg.heads).unwrap();
                encoder::matb_mda_forward(g, z, &mda, cfg.lambda, cfg.heads).unwrap().0
            };
            zr = step(&mut g, zr);
            zd = step(&mut g, zd);
        }
        assert_eq!(g.value(cross.unwrap()), &got, "blocks={blocks}");
    }
}

struct CountingSource<'a> {
    images: &'a BTreeMap<Modality, Tensor>,
    reads: BTreeMap<Modality, Cell<usize>>,
}

impl<'a> CountingSource<'a> {
    fn new(images: &'a BTreeMap<Modality, Tensor>) -> Self {
        CountingSource {
            images,
            reads: Modality::ALL.iter().map(|&m| (m, Cell::new(0))).collect(),
        }
    }

    fn reads(&self, m: Modality) -> usize {
        self.reads[&m].get()
    }
}

impl ModalImages for CountingSource<'_> {
    fn image(&self, m: Modality) -> Option<&Tensor> {
        self.reads[&m].set(self.reads[&m].get() + 1);
        self.images.get(&m)
    }
}

#[test]
fn single_modality_inference_never_reads_depth() {
    let model = MaVit::new(ModelConfig::tiny(), 8).unwrap();
    let sample = &tiny_data(1, 3)[0];
    let src = CountingSource::new(&sample.images);
    let scores = model.infer(&src, &[Modality::Rgb]).unwrap();
    assert_eq!(src.reads(Modality::Depth), 0);
    assert_eq!(src.reads(Modality::Rgb), 1);
    assert_eq!(scores.len(), 1);
    assert!(scores.cross.is_none());

    // a source that has no depth at all works the same
    let rgb_only: BTreeMap<_, _> = sample
        .images
        .iter()
        .filter(|(m, _)| **m == Modality::Rgb)
        .map(|(m, t)| (*m, t.clone()))
        .collect();
    assert_eq!(model.infer(&rgb_only, &[Modality::Rgb]).unwrap(), scores);
}

#[test]
fn paired_inference_yields_three_scores() {
    let model = MaVit::new(ModelConfig::tiny(), 8).unwrap();
    let sample = &tiny_data(1, 3)[0];
    let before = model.params().clone();
    let s = model.infer(sample, &[Modality::Depth, Modality::Rgb]).unwrap();
    assert_eq!(s.len(), 3);
    for p in [
        s.modal(Modality::Rgb).unwrap(),
        s.modal(Modality::Depth).unwrap(),
        s.cross.unwrap(),
    ] {
        assert!(p > 0.0 && p < 1.0);
    }
    assert_eq!(model.params(), &before);
    let no_cross = MaVit::new(
        ModelConfig {
            ablation: Ablation { mda: true, cma: false },
            ..ModelConfig::tiny()
        },
        8,
    )
    .unwrap();
    assert_eq!(
        no_cross.infer(sample, &[Modality::Rgb, Modality::Depth]).unwrap().len(),
        2
    );
}

#[test]
fn untrained_modality_is_rejected() {
    let model = MaVit::new(ModelConfig::tiny(), 8).unwrap();
    let sample = &tiny_data(1, 3)[0];
    assert!(matches!(
        model.infer(sample, &[Modality::Ir]),
        Err(Error::UnknownModality(_))
    ));
    assert!(model.infer(sample, &[]).is_err());
}

#[test]
fn loss_breakdown_accounts_for_every_term() {
    let model = MaVit::new(ModelConfig::tiny(), 10).unwrap();
    let data = tiny_data(2, 4);
    let b = model.forward_train(&data[0]).unwrap();
    let names: Vec<String> = b.terms.iter().map(|(t, _)| t.to_string()).collect();
    assert_eq!(names, ["cls.R", "cls.D", "cls.cross", "mod.R", "mod.D"]);
    let sum: f64 = b.terms.iter().map(|(_, v)| v).sum();
    assert!((sum - b.total).abs() <= 1e-12);
    assert!(b.warnings.is_empty());
    assert!(b.terms.iter().any(|(t, _)| *t == LossTerm::CrossLiveness));
    let again = model.forward_train(&data[0]).unwrap();
    assert_eq!(again, b);
}

#[test]
fn training_requires_paired_samples() {
    let model = MaVit::new(ModelConfig::tiny(), 10).unwrap();
    let mut s = tiny_data(1, 4).remove(0);
    s.images.remove(&Modality::Depth);
    let err = model.forward_train(&s).unwrap_err();
    assert!(err.to_string().contains("paired"), "{err}");
}

#[test]
fn zero_epochs_leaves_initialization() {
    let mut model = MaVit::new(ModelConfig::tiny(), 12).unwrap();
    let init = model.clone();
    let report = train(
        &mut model,
        &tiny_data(4, 1),
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(report.trace.is_empty());
    assert_eq!(model, init);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let data = tiny_data(32, 5);
    let cfg = TrainConfig {
        epochs: 50,
        max_steps: Some(200),
        seed: 5,
        ..TrainConfig::default()
    };
    let mut a = MaVit::new(ModelConfig::tiny(), 5).unwrap();
    let ra = train(&mut a, &data, &cfg).unwrap();
    let mut b = MaVit::new(ModelConfig::tiny(), 5).unwrap();
    let rb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ra.steps(), 200);
    assert_eq!(ra, rb);
    assert_eq!(a, b);
    let head: f64 = ra.trace[..10].iter().map(|r| r.loss).sum::<f64>() / 10.0;
    let tail: f64 = ra.trace[190..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
    assert!(tail < head, "loss {head} -> {tail}");
}

#[test]
fn non_finite_loss_aborts_with_last_good_parameters() {
    let mut data = tiny_data(8, 6);
    data[3].images.get_mut(&Modality::Rgb).unwrap().data_mut()[0] = f64::NAN;
    let mut model = MaVit::new(ModelConfig::tiny(), 6).unwrap();
    let init = model.clone();
    let abort = train(
        &mut model,
        &data,
        &TrainConfig {
            batch_size: 8,
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap_err();
    assert!(matches!(abort.error, Error::NonFinite(_)));
    assert!(abort.report.trace.is_empty());
    assert_eq!(model, init);
}

#[test]
fn checkpoint_reload_reproduces_forward_bitwise() {
    let mut model = MaVit::new(ModelConfig::tiny(), 13).unwrap();
    let data = tiny_data(8, 7);
    let report = train(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let ck = Checkpoint {
        model: model.clone(),
        seed: 13,
        step: report.steps(),
    };
    let back = Checkpoint::decode(&ck.encode()).unwrap();
    assert_eq!(back.step, 1);
    let both = [Modality::Rgb, Modality::Depth];
    for s in &data {
        assert_eq!(model.infer(s, &both).unwrap(), back.model.infer(s, &both).unwrap());
        assert_eq!(model.forward_train(s).unwrap(), back.model.forward_train(s).unwrap());
    }
}
