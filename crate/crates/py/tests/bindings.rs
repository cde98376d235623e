use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "ivs_py").unwrap();
        ivs_py::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("ivs", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn config_defaults_and_errors() {
    with_module(c"
c = ivs.Config()
assert (c.record_count, c.field_count) == (10000, 10)
assert c.analytic_volume(100) == 1_010_000_000
assert c.to_dict()['record_count'] == 10000
c.mode = 'clean-run'
assert c.mode == 'clean-run'
try:
    ivs.Config('fieldcont=3')
    raise AssertionError('unknown key accepted')
except ValueError as e:
    assert 'line 1' in str(e)
try:
    c.mode = 'sideways'
    raise AssertionError('bad mode accepted')
except ValueError:
    pass
");
}

#[test]
fn generators_and_metrics() {
    with_module(c"
k = ivs.KeyChooser('zipfian', 1000, seed=7, scramble=False)
draws = k.sample(100000)
assert max(set(draws), key=draws.count) == 0
assert ivs.render_key(3).startswith('user') and len(ivs.render_key(3)) == 24
v = ivs.generate_value(1, 5, 2, 64)
assert len(v) == 64 and v == ivs.generate_value(1, 5, 2, 64)
assert v != ivs.generate_value(1, 5, 3, 64)
mean, se, band = ivs.aggregate([10.0, 12.0, 14.0])
assert mean == 12.0 and abs(band[1] - 12.0 - 2.2632) < 1e-3
assert ivs.aggregate([5.0])[1] is None
h = ivs.LatencyHistogram()
h.record_many(list(range(1000, 101000, 1000)))
assert h.count == 100
assert abs(h.quantile(0.5) - 50000) <= h.bucket_width(50000)
assert h.summary()['count'] == 100
");
}

#[test]
fn run_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let code = format!(
        "
c = ivs.Config('recordcount=100\\nextendoperationcount=500\\noperationcount=500\\nepochs=2\\ntrials=1')
reports = ivs.run(c, r'{0}')
assert len(reports) == 1 and [r['epoch'] for r in reports[0]] == [1, 2]
assert reports[0][1]['volume_bytes'] == c.analytic_volume(2)
c.mode = 'clean-run'
clean = ivs.run(c, r'{0}')
assert [r['run']['trace_hash'] for r in clean[0]] == [r['run']['trace_hash'] for r in reports[0]]
assert ivs.verify(r'{0}/main-run/dumps/trial-000') == [0, 1, 2]
",
        tmp.path().display()
    );
    with_module(&std::ffi::CString::new(code).unwrap());
}
