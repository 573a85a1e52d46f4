use sccdso_core::sched::{run_oracle, AcoConfig};

#[test]
fn colony_is_near_optimal_on_small_instances() {
    let report = run_oracle(&AcoConfig::standard(), 100, 8, 4, 0.05).unwrap();
    assert_eq!(report.instances, 100);
    assert!(report.within >= 95, "{} of 100 within 5% (worst {:.3})", report.within, report.worst_ratio);
}
