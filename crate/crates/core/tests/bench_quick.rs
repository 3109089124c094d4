use pgi::bench::{self, BenchConfig};

#[test]
fn quick_mode_passes_within_a_minute() {
    let started = std::time::Instant::now();
    let results = bench::run(&BenchConfig {
        quick: true,
        seeds: vec![7],
    });
    for r in &results {
        println!("{r}");
    }
    assert!(results.iter().all(|r| r.passed));
    assert!(started.elapsed().as_secs() < 60);
}
