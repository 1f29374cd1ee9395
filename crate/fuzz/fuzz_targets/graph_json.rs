#![no_main]

use libfuzzer_sys::fuzz_target;
use zidlab::mdpgraph::{min_cut_ssb, InducedGraph};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = InducedGraph::from_json(text) {
        let again = InducedGraph::from_json(&g.to_json()).expect("round trip");
        assert_eq!(again.edges.len(), g.edges.len());
        let _ = min_cut_ssb(&g);
    }
});
