use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyModule;

fn run(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "logogen_py").unwrap();
        logogen_py::logogen_py(&m).unwrap();
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("logogen_py", &m).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn color_functions() {
    run(r#"
import logogen_py as lg
assert len(lg.CLASSES) == 12 and lg.class_names() == lg.CLASSES
assert lg.nearest_x11_name((255, 0, 0)) == "red"
assert lg.x11_to_class("navy") == "blue"
r, g, b = lg.canonical_shade("red")
label = lg.label_rgb(bytes([r, g, b]) * 1024)
assert label.primary == "red" and label.top3 == ["red", "red", "red"], label
pal = lg.kmeans_palette([(0, 0, 0)] * 10 + [(255, 255, 255)] * 5, k=2)
assert pal == [((0, 0, 0), 10), ((255, 255, 255), 5)], pal
try:
    lg.canonical_shade("crimson")
    raise AssertionError("expected ValueError")
except ValueError as e:
    assert "purple" in str(e)
"#);
}

#[test]
fn metrics_from_matrix() {
    run(r#"
import json
import logogen_py as lg
m = [[0] * 12 for _ in range(12)]
red, blue = lg.CLASSES.index("red"), lg.CLASSES.index("blue")
m[red][red], m[red][blue], m[blue][blue] = 3, 1, 4
assert lg.precision(m, "red") == 1.0
assert lg.recall(m, "red") == 0.75
assert lg.precision(m, "green") is None
assert abs(lg.f1(1.0, 0.75) - 6 / 7) < 1e-12
assert lg.f1(None, 0.5) is None
report = json.loads(lg.report_from_matrix(m))
assert report["average"]["skipped_precision"] == 10
"#);
}

#[test]
fn oracle_model_generates_and_evaluates() {
    run(r#"
import json
import logogen_py as lg
model = lg.Model.oracle()
before = model.checksum
seed, images, grid = model.generate("green", count=4, seed=9)
assert seed == 9 and len(images) == 4 and grid[:8] == b"\x89PNG\r\n\x1a\n"
assert model.generate("green", count=4, seed=9)[1] == images
report = json.loads(model.evaluate(n_per_class=4))
assert all(c["f1"] == 1.0 for c in report["per_class"])
assert model.checksum == before
try:
    model.generate("green", count=0)
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#);
}

#[test]
fn train_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.bin");
    run(&format!(
        r#"
import logogen_py as lg
cfg = "data = synthetic:1:0\nbatch_size = 6\nmax_generator_steps = 1\nz_dim = 4\ng_channels = 4,2,2\nd_channels = 2\nq_channels = 2\n"
model = lg.Model.train(cfg)
assert model.generator_steps == 1
model.save({path:?})
loaded = lg.Model.load({path:?})
assert loaded.checksum == model.checksum
assert loaded.checkpoint_id.startswith("tiny.bin:")
corpus = lg.synth_corpus(1, 0)
assert len(corpus) == 12 and all(len(raw) == 3072 for _, _, raw in corpus)
"#,
        path = path.to_str().unwrap()
    ));
}
