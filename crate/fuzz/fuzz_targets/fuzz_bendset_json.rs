#![no_main]

use libfuzzer_sys::fuzz_target;

// Parse, validate and compile a bending-set document: the full untrusted
// path a plan or replay would take before simulation.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(doc) = wirebend::io::formats::BendSetDoc::parse(text) {
            if let Ok(set) = doc.to_bend_set() {
                let program = wirebend::sim::BendProgram::from_bend_set(&set);
                let _ = program.initial_wire();
            }
        }
    }
});
