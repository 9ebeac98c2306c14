use hairseg::data::{load_dataset, synth_generate, synth_samples, SynthOptions};
use hairseg::model::{load_weights, save_weights, Layout, ModelConfig, SegFormer};
use hairseg::rng::Rng;
use hairseg::Error;

/// Parameter count from the architecture definition, written out by hand.
fn expected_params(c: &ModelConfig) -> usize {
    let mut total = 0;
    let mut c_in = c.in_channels;
    for i in 0..4 {
        let d = c.stage_dims[i];
        let k = c.patch_embed[i].kernel;
        let e = c.ffn_expansion * d;
        total += d * c_in * k * k + d + 2 * d;
        let mut block = 2 * d + 4 * (d * d + d) + 2 * d;
        let sr = c.sr_ratios[i];
        if sr > 1 {
            block += d * d * sr * sr + d + 2 * d;
        }
        block += (d * e + e) + (e * 9 + e) + (e * d + d);
        total += c.stage_depths[i] * block + 2 * d;
        c_in = d;
    }
    let dd = c.decoder_dim;
    total += c.stage_dims.iter().map(|&d| d * dd + dd).sum::<usize>();
    total += 4 * dd * dd + 2 * dd + dd * c.num_classes + c.num_classes;
    total
}

#[test]
fn parameter_counts_are_pinned() {
    for c in [ModelConfig::tiny(), ModelConfig::b2()] {
        assert_eq!(Layout::new(&c).param_count(), expected_params(&c));
    }
    assert_eq!(Layout::new(&ModelConfig::tiny()).param_count(), 455_906);
}

#[test]
fn weights_round_trip_and_mismatch() {
    let config = ModelConfig::tiny();
    let model = SegFormer::new(config.clone()).unwrap();
    let params = model.init_params::<f32>(&mut Rng::new(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&path, &config, &params).unwrap();
    assert_eq!(load_weights(&path, &config).unwrap(), params);
    assert_eq!(load_weights(&path, &config.clone().with_dropout(0.0)).unwrap(), params);
    let mut other = config.clone();
    other.decoder_dim = 32;
    assert!(matches!(load_weights(&path, &other), Err(Error::ConfigMismatch { .. })));
}

#[test]
fn generated_dataset_loads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let opts = SynthOptions::default();
    synth_generate(dir.path(), 5, 32, 9, &opts).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded, synth_samples(5, 32, 9, &opts).unwrap());
    let again = tempfile::tempdir().unwrap();
    synth_generate(again.path(), 5, 32, 9, &opts).unwrap();
    for sub in ["images/synth_0003.png", "masks/synth_0003.png"] {
        assert_eq!(std::fs::read(dir.path().join(sub)).unwrap(), std::fs::read(again.path().join(sub)).unwrap());
    }
}

#[test]
fn dataset_problems_are_collected() {
    let dir = tempfile::tempdir().unwrap();
    synth_generate(dir.path(), 3, 32, 1, &SynthOptions::default()).unwrap();
    std::fs::remove_file(dir.path().join("masks/synth_0001.png")).unwrap();
    std::fs::write(dir.path().join("images/synth_0002.png"), b"not a png").unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Dataset(problems)) => {
            assert_eq!(problems.len(), 2, "{problems:?}");
            assert!(problems.iter().any(|p| p.contains("synth_0001")));
            assert!(problems.iter().any(|p| p.contains("synth_0002")));
        }
        other => panic!("expected dataset error, got {other:?}"),
    }
    assert!(matches!(synth_generate(dir.path(), 1, 48, 1, &SynthOptions::default()), Err(Error::Parameter(_))));
}
