use gcrl_py::gcrl_module;
use pyo3::prelude::*;

#[test]
fn module_works_inside_an_interpreter() {
    pyo3::append_to_inittab!(gcrl_module);
    Python::initialize();
    let conf = concat!(env!("CARGO_MANIFEST_DIR"), "/../../conf");
    Python::attach(|py| {
        let gcrl = py.import("gcrl").unwrap();
        let v: Vec<f64> = gcrl.call_method1("critic_variance", (vec![vec![0.0, 0.0, 3.0]],)).unwrap().extract().unwrap();
        assert_eq!(v, vec![2.0]);
        let m: Vec<f64> = gcrl.call_method1("mix_reward", (vec![-1.0], vec![0.5], 0.75)).unwrap().extract().unwrap();
        assert_eq!(m, vec![0.125]);
        let err = gcrl.call_method1("mix_reward", (vec![-1.0, 0.0], vec![0.5], 0.5)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py), "{err}");

        let env = gcrl.getattr("Env").unwrap().call1(("PlanarPush-v0",)).unwrap();
        let obs = env.call_method1("reset", (3u64,)).unwrap();
        let o: Vec<f64> = obs.get_item("observation").unwrap().extract().unwrap();
        assert_eq!(o.len(), 7);
        assert!(gcrl.getattr("Env").unwrap().call1(("Nope-v0",)).is_err());

        let yaml: String = gcrl
            .call_method1("resolve_config", (vec!["++algorithm.weight_critic_var=0.75"], conf))
            .unwrap()
            .extract()
            .unwrap();
        assert!(yaml.contains("weight_critic_var: 0.75"), "{yaml}");
        let bad = gcrl.call_method1("resolve_config", (vec!["algorithm=td3"], conf));
        assert!(bad.is_err());
    });
}
