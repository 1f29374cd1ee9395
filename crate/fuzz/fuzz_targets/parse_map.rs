#![no_main]

use libfuzzer_sys::fuzz_target;
use zidlab::gridworld::parse_map;
use zidlab::mdpgraph::enumerate_graph;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_map(text) {
        // a parsed map must enumerate or hit the cap, never panic
        let _ = enumerate_graph(&spec, 2_000);
    }
});
