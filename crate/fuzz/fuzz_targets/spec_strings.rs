#![no_main]

use annealnet::engine::NoiseModel;
use annealnet::gibbs::TestFunction;
use annealnet::objectives::parse_objective;
use annealnet::spec::SpecString;
use annealnet::topology::GraphModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let Ok(s) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(spec) = SpecString::parse(s) {
        let reparsed = SpecString::parse(&spec.to_string()).expect("display reparses");
        assert_eq!(spec, reparsed);
    }
    // Keep objective and graph sizes small enough to construct quickly.
    if let Ok(obj) = parse_objective(s) {
        if obj.dim() <= 8 {
            let x = vec![0.5; obj.dim()];
            let _ = obj.eval(&x);
        }
    }
    let _ = GraphModel::parse(s, 1 + (n as usize % 16));
    if let Ok(noise) = NoiseModel::parse(s) {
        assert_eq!(NoiseModel::parse(&noise.descriptor()).unwrap(), noise);
    }
    if let Ok(f) = TestFunction::parse(s) {
        let _ = f.eval(&[0.0, 1.0, -1.0]);
    }
});
