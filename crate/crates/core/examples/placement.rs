// placement robustness probe
use cascade_core::synth::{generate, SynthConfig};
fn main() {
    for seed in 0..30u64 {
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        match generate(&cfg, 10) {
            Ok(_) => {}
            Err(e) => println!("seed {seed}: FAILED {e}"),
        }
    }
    println!("placement probe done");
}
