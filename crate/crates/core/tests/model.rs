use candle_core::{DType, Device, Tensor};
use nutrifuse_core::embedding::{EmbeddingVector, StubEncoder, TextEncoder};
use nutrifuse_core::model::{
    read_header, Backbone, FusionConfig, InjectionSite, Mode, ModelSpec, NutritionModel,
};
use nutrifuse_core::Error;

fn images(px: usize, b: usize, seed: u64) -> Tensor {
    let n = b * 3 * px * px;
    let v: Vec<f32> = (0..n).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f32 / 500.0) - 1.0).collect();
    Tensor::from_vec(v, (b, 3, px, px), &Device::Cpu).unwrap()
}

fn build(fusion: FusionConfig, enc: &StubEncoder) -> NutritionModel {
    NutritionModel::new(ModelSpec::new(fusion, enc), 7, DType::F32, &Device::Cpu).unwrap()
}

fn bits(t: &Tensor) -> Vec<u32> {
    t.flatten_all().unwrap().to_vec1::<f32>().unwrap().iter().map(|x| x.to_bits()).collect()
}

#[test]
fn every_site_produces_four_outputs() {
    let enc = StubEncoder::new(16, 1);
    for backbone in Backbone::ALL {
        for &site in backbone.sites() {
            let fusion = FusionConfig::tiny(backbone).with_site(site);
            let model = build(fusion.clone(), &enc);
            let px = fusion.input_resolution;
            let emb = enc.encode("bun").unwrap();
            let out = model.forward(&images(px, 2, 1), &[Some(emb), None], Mode::Eval).unwrap();
            assert_eq!(out.predictions.dims(), [2, 4], "{backbone} {site}");
            assert!(out.aux.is_none());
        }
    }
}

#[test]
fn inception_train_mode_has_aux_output() {
    let enc = StubEncoder::new(8, 1);
    let model = build(FusionConfig::tiny(Backbone::InceptionV3), &enc);
    let emb = enc.encode("bun").unwrap();
    let out = model.forward(&images(299, 1, 2), &[Some(emb)], Mode::Train).unwrap();
    assert_eq!(out.aux.unwrap().dims(), [1, 4]);
}

#[test]
fn empty_ingredients_bypass_fusion_bitwise() {
    let enc = StubEncoder::new(16, 1);
    for backbone in Backbone::ALL {
        let fusion = FusionConfig::tiny(backbone);
        let model = build(fusion.clone(), &enc);
        let x = images(fusion.input_resolution, 2, 3);
        let a = model.forward(&x, &[None, None], Mode::Eval).unwrap();
        let b = model.forward_unfused(&x, Mode::Eval).unwrap();
        assert_eq!(bits(&a.predictions), bits(&b.predictions), "{backbone}");
    }
}

#[test]
fn zero_projection_is_identity_for_additive_sites() {
    let enc = StubEncoder::new(16, 1);
    for backbone in [Backbone::Resnet50, Backbone::Resnet101, Backbone::InceptionV3] {
        let fusion = FusionConfig::tiny(backbone);
        let model = build(fusion.clone(), &enc);
        let (w, b) = model.projector_vars();
        w.set(&w.zeros_like().unwrap()).unwrap();
        b.set(&(b.ones_like().unwrap() * -1.0).unwrap()).unwrap();
        let x = images(fusion.input_resolution, 1, 4);
        let fused = model.forward(&x, &[Some(enc.encode("bun").unwrap())], Mode::Eval).unwrap();
        let plain = model.forward_unfused(&x, Mode::Eval).unwrap();
        assert_eq!(bits(&fused.predictions), bits(&plain.predictions), "{backbone}");
    }
}

#[test]
fn fusion_changes_output_for_nonzero_projection() {
    let enc = StubEncoder::new(16, 1);
    let fusion = FusionConfig::tiny(Backbone::Resnet50);
    let model = build(fusion.clone(), &enc);
    let (_, b) = model.projector_vars();
    b.set(&b.ones_like().unwrap()).unwrap();
    let x = images(fusion.input_resolution, 1, 5);
    let fused = model.forward(&x, &[Some(enc.encode("bun").unwrap())], Mode::Eval).unwrap();
    let plain = model.forward_unfused(&x, Mode::Eval).unwrap();
    assert_ne!(bits(&fused.predictions), bits(&plain.predictions));
}

#[test]
fn mixed_batch_rows_match_single_rows() {
    let enc = StubEncoder::new(16, 1);
    for backbone in [Backbone::Resnet50, Backbone::VitBase16] {
        let fusion = FusionConfig::tiny(backbone);
        let model = build(fusion.clone(), &enc);
        let (_, b) = model.projector_vars();
        b.set(&(b.ones_like().unwrap() * 0.5).unwrap()).unwrap();
        let x = images(fusion.input_resolution, 2, 6);
        let e = enc.encode("lettuce").unwrap();
        let both = model.forward(&x, &[Some(e.clone()), None], Mode::Eval).unwrap();
        let both = both.predictions.to_vec2::<f32>().unwrap();
        let first = model.forward(&x.narrow(0, 0, 1).unwrap(), &[Some(e)], Mode::Eval).unwrap();
        let second = model.forward_unfused(&x.narrow(0, 1, 1).unwrap(), Mode::Eval).unwrap();
        let close = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-4 * x.abs().max(1.0));
        assert!(close(&both[0], &first.predictions.to_vec2::<f32>().unwrap()[0]), "{backbone}");
        assert!(close(&both[1], &second.predictions.to_vec2::<f32>().unwrap()[0]), "{backbone}");
    }
}

#[test]
fn wrong_resolution_and_embedding_dim_rejected() {
    let enc = StubEncoder::new(16, 1);
    let model = build(FusionConfig::tiny(Backbone::Resnet50), &enc);
    assert!(matches!(
        model.forward(&images(32, 1, 0), &[None], Mode::Eval),
        Err(Error::Resolution { .. })
    ));
    let bad = EmbeddingVector(vec![0.1; 5]);
    assert!(matches!(
        model.forward(&images(64, 1, 0), &[Some(bad)], Mode::Eval),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(matches!(
        model.forward(&images(64, 2, 0), &[None], Mode::Eval),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let enc = StubEncoder::new(16, 1);
    let dir = tempfile::tempdir().unwrap();
    for backbone in Backbone::ALL {
        let fusion = FusionConfig::tiny(backbone);
        let model = build(fusion.clone(), &enc);
        let path = dir.path().join(format!("{backbone}.safetensors"));
        model.save(&path).unwrap();
        let header = read_header(&path).unwrap();
        assert_eq!(header.fusion, fusion);
        assert_eq!(header.encoder_id, enc.id());
        let back = NutritionModel::load_checked(&path, &fusion, &enc.id(), &Device::Cpu).unwrap();
        let x = images(fusion.input_resolution, 1, 8);
        let e = Some(enc.encode("tomato").unwrap());
        let a = model.forward(&x, &[e.clone()], Mode::Eval).unwrap();
        let b = back.forward(&x, &[e], Mode::Eval).unwrap();
        assert_eq!(bits(&a.predictions), bits(&b.predictions), "{backbone}");
    }
}

#[test]
fn checkpoint_for_other_config_or_encoder_refused() {
    let enc = StubEncoder::new(16, 1);
    let fusion = FusionConfig::tiny(Backbone::Resnet50);
    let model = build(fusion.clone(), &enc);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    model.save(&path).unwrap();
    let other = fusion.clone().with_site(InjectionSite::Block3);
    assert!(matches!(
        NutritionModel::load_checked(&path, &other, &enc.id(), &Device::Cpu),
        Err(Error::ConfigMismatch(_))
    ));
    assert!(matches!(
        NutritionModel::load_checked(&path, &fusion, "other-encoder", &Device::Cpu),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn predict_checks_encoder_identity() {
    let enc = StubEncoder::new(16, 1);
    let model = build(FusionConfig::tiny(Backbone::Resnet50), &enc);
    let other = StubEncoder::new(16, 2);
    let x = images(64, 1, 0);
    assert!(matches!(
        model.predict(&x, &["bun".to_string()], &other),
        Err(Error::ConfigMismatch(_))
    ));
    assert!(model.predict(&x, &["bun".to_string()], &enc).is_ok());
}

#[test]
fn same_seed_same_parameters() {
    let enc = StubEncoder::new(16, 1);
    let fusion = FusionConfig::tiny(Backbone::VitBase16);
    let a = build(fusion.clone(), &enc);
    let b = build(fusion, &enc);
    let x = images(64, 1, 9);
    assert_eq!(
        bits(&a.forward_unfused(&x, Mode::Eval).unwrap().predictions),
        bits(&b.forward_unfused(&x, Mode::Eval).unwrap().predictions)
    );
    assert_eq!(a.store().num_parameters(), b.store().num_parameters());
}
