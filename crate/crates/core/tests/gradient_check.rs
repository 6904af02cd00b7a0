use apifk_core::log_model::OutcomeLabel;
use apifk_core::predictor::{ConvLayerCfg, ConvNetModel, Example, ModelCfg, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
// Below this magnitude both gradients are treated as zero-ish and compared absolutely.
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn layer(in_features: usize, out_features: usize, kernel: usize, pool: Option<usize>) -> ConvLayerCfg {
    ConvLayerCfg { in_features, out_features, kernel, stride: 1, pool }
}

fn mini_model(seed: u64) -> ConvNetModel {
    let labels = vec![
        OutcomeLabel::Right,
        OutcomeLabel::ErrorCode("A".into()),
        OutcomeLabel::ErrorCode("B".into()),
    ];
    let mut cfg = ModelCfg::for_variant(Variant::Custom, labels);
    cfg.l0 = 30;
    cfg.conv = vec![
        layer(96, 4, 3, Some(2)),
        layer(4, 4, 3, Some(2)),
        layer(4, 4, 2, None),
        layer(4, 4, 2, None),
        layer(4, 4, 2, None),
        layer(4, 4, 2, Some(2)),
    ];
    cfg.fc_hidden = vec![8, 8];
    cfg.dropout = 0.0;
    cfg.init_std = 0.5;
    let mut model = ConvNetModel::initialized(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let blocks = model.blocks().to_vec();
    for b in blocks {
        for p in &mut model.params_mut()[b.bias_offset..b.bias_offset + b.bias_len] {
            *p = rng.gen_range(-0.3..0.3);
        }
    }
    model
}

fn random_text(rng: &mut ChaCha8Rng, model: &ConvNetModel, len: usize) -> String {
    let chars = model.cfg().alphabet.chars();
    (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let model = mini_model(5);
    let examples: Vec<Example> = (0..3)
        .map(|i| Example { input: model.encode_text(&random_text(&mut rng, &model, 30)), label: i % 3 })
        .collect();
    let batch: Vec<&Example> = examples.iter().collect();
    let (_, grad) = model.loss_and_backward::<ChaCha8Rng>(&batch, None).unwrap();

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut nonzero = 0;
    for (i, &analytic) in grad.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + H;
        let up = probe.loss(&batch).unwrap();
        probe.params_mut()[i] = orig - H;
        let down = probe.loss(&batch).unwrap();
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        if analytic.abs() > FLOOR {
            nonzero += 1;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
        assert!(rel < TOL, "param {i}: analytic {analytic}, numeric {numeric}, rel {rel}");
    }
    // The check is vacuous if almost every gradient is zero.
    assert!(nonzero * 4 > model.num_params() / 10, "only {nonzero} non-zero gradients");
    eprintln!("worst relative error {worst:e} over {} params", model.num_params());
}
