#![no_main]

use brenier::experiments::{GcConfig, PivotalityConfig, PowerConfig, Type1Config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = serde_yaml::from_str::<GcConfig>(text) {
            let _ = c.sampler.validate();
            if c.sampler.dim <= 64 {
                let _ = c.sampler.true_bdf().map(|f| f(&vec![0.0; c.sampler.dim]));
            }
        }
        if let Ok(c) = serde_yaml::from_str::<PivotalityConfig>(text) {
            let _ = c.sampler_a.validate();
            let _ = c.sampler_b.validate();
        }
        let _ = serde_yaml::from_str::<Type1Config>(text).map(|c| c.sampler.validate());
        let _ = serde_yaml::from_str::<PowerConfig>(text).map(|c| c.sampler_y.validate());
    }
});
