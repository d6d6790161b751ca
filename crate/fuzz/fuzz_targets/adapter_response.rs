#![no_main]

use libfuzzer_sys::fuzz_target;
use zoosel::instance::{parse_instance_file, tour_cost};
use zoosel::zoo::parse_response;

const TSP: &str = "NAME : t5\nTYPE : TSP\nDIMENSION : 5\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n\
1 0 0\n2 10 0\n3 10 10\n4 0 10\n5 5 5\nEOF\n";
const CVRP: &str = "NAME : c4\nTYPE : CVRP\nDIMENSION : 5\nCAPACITY : 10\nEDGE_WEIGHT_TYPE : EUC_2D\n\
NODE_COORD_SECTION\n1 0 0\n2 10 0\n3 10 10\n4 0 10\n5 5 5\nDEMAND_SECTION\n1 0\n2 4\n3 4\n4 4\n5 4\n\
DEPOT_SECTION\n1\n-1\nEOF\n";

fuzz_target!(|data: &str| {
    let Ok(plan) = parse_response(data, "x") else {
        return;
    };
    // Costing goes through the validator; it must reject, not panic.
    for text in [TSP, CVRP] {
        let inst = parse_instance_file(text).expect("fixture");
        if let Ok(c) = tour_cost(&inst, &plan) {
            assert!(c.is_finite() && c >= 0.0);
        }
    }
});
