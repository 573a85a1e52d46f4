use rand::Rng;
use sccdso_core::qos::{path_loss, NodeUse, SchedulePath};
use sccdso_core::seed;

#[test]
fn path_loss_matches_monte_carlo() {
    let probs = [0.01, 0.05, 0.002, 0.1];
    let path = SchedulePath {
        edges: Vec::new(),
        nodes: probs.iter().map(|&p| NodeUse { loss_prob: p, ..NodeUse::default() }).collect(),
    };
    let trials = 1_000_000;
    let mut rng = seed::rng(77);
    let lost = (0..trials).filter(|_| probs.iter().any(|&p| rng.random_bool(p))).count();
    let estimate = lost as f64 / trials as f64;
    let expected = path_loss(&path);
    let se = (expected * (1.0 - expected) / trials as f64).sqrt();
    assert!((estimate - expected).abs() < 4.0 * se, "{estimate} vs {expected}");
}
