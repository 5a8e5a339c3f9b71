//! Pins the forward pass against the shipped golden fixture.
//!
//! Fixture layout (all little-endian): five u32 header fields (input_dim,
//! hidden_dim, output_dim, input_horizon, target_horizon), then the weights
//! as f32 in canonical order, then the input displacement sequence
//! (`input_horizon * input_dim` f32), then the expected predictions
//! (`target_horizon * output_dim` f32). Expected values were produced by an
//! independent scalar implementation at generation time.

use swarmfl::learner::{self, ModelConfig, WeightVector};

#[test]
fn forward_matches_golden_fixture() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/forward_golden.bin");
    let bytes = std::fs::read(&path).expect("golden fixture present");

    let mut offset = 0usize;
    let mut read_u32 = || {
        let v = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        offset += 4;
        v as usize
    };
    let cfg = ModelConfig {
        input_dim: read_u32(),
        hidden_dim: read_u32(),
        output_dim: read_u32(),
        input_horizon: read_u32(),
        target_horizon: read_u32(),
    };
    assert_eq!(cfg, ModelConfig::default(), "fixture matches paper config");

    let mut cursor = 20usize;
    let mut read_f32s = |count: usize| {
        let out: Vec<f64> = bytes[cursor..cursor + 4 * count]
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        cursor += 4 * count;
        out
    };
    let weights = WeightVector(read_f32s(cfg.n_weights()));
    let input = read_f32s(cfg.input_horizon * cfg.input_dim);
    let expected = read_f32s(cfg.target_horizon * cfg.output_dim);
    assert_eq!(cursor, bytes.len(), "no trailing bytes");

    let got = learner::forward(&cfg, &weights, &input);
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(expected.iter()) {
        // Expected values are stored in wire precision.
        assert!(
            (g - e).abs() <= 1e-6,
            "prediction {g} deviates from golden {e}"
        );
    }
}
