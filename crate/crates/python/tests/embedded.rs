//! Exercises the module through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &std::ffi::CStr) {
    Python::attach(|py| {
        let m = PyModule::new(py, "oldroyd_py").unwrap();
        oldroyd_py::register(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("m", m).unwrap();
        if let Err(e) = py.run(code, Some(&globals), None) {
            e.print(py);
            panic!("python code failed");
        }
    });
}

#[test]
fn symmat_functions_round_trip() {
    with_module(
        cr#"
a = m.SymMat([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]])
b = a.log().exp().to_list()
assert max(abs(b[i][j] - a.to_list()[i][j]) for i in range(3) for j in range(3)) < 1e-12
assert abs(a.deviatoric().trace()) < 1e-14
assert a.chi_sigma(2.0).min_eig() >= 2.0 - 1e-12
"#,
    );
}

#[test]
fn errors_map_to_exception_classes() {
    with_module(
        cr#"
assert issubclass(m.ConfigError, m.OldroydError)
try:
    m.Params(b=-1.0)
    raise AssertionError("negative b accepted")
except m.ConfigError:
    pass
try:
    m.SymMat([[1.0, 0.0], [0.0, -1.0]]).log()
    raise AssertionError("log of indefinite matrix")
except ValueError:
    pass
try:
    m.parse_config('{"grid": {"n": 16}, "nope": 1}')
    raise AssertionError("unknown key accepted")
except m.ConfigError as e:
    assert "nope" in str(e)
"#,
    );
}

#[test]
fn simulation_steps_and_reports() {
    with_module(
        cr#"
sim = m.Simulation('{"grid": {"n": 8}, "scenario": "equilibrium", "step": {"dt": 0.001}}')
rho0 = sim.rho()
r = sim.step(3)
assert r["rejections"] == 0
assert abs(sim.time - 0.003) < 1e-15 and sim.shape == (2, 8)
assert max(abs(x - y) for x, y in zip(rho0, sim.rho())) < 1e-12
assert sim.positivity()["min_rho"] > 0
assert sim.relative_entropy(sim)["total"] == 0.0
"#,
    );
}
