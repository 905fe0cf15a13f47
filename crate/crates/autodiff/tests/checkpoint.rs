use dsse_autodiff::checkpoint::{from_bytes, load, save, to_bytes};
use dsse_autodiff::{AdamConfig, AdamState, ParamStore, Tensor};
use proptest::prelude::*;
use serde_json::json;

fn store_from(values: &[Vec<f64>]) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, v) in values.iter().enumerate() {
        store.add(format!("p{i}"), Tensor::vector(v.clone())).unwrap();
    }
    store
}

proptest! {
    #[test]
    fn round_trip_is_exact(values in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 1..8), 1..5)) {
        let store = store_from(&values);
        let bytes = to_bytes(&store, None, &json!({"k": 1})).unwrap();
        let back = from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.params.len(), store.len());
        for ((_, n1, t1), (_, n2, t2)) in store.iter().zip(back.params.iter()) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(t1, t2);
        }
        prop_assert_eq!(back.metadata, json!({"k": 1}));
    }
}

#[test]
fn header_is_json_line_with_le_payload() {
    let mut store = ParamStore::new();
    store.add("w", Tensor::matrix(1, 2, vec![1.5, -2.0]).unwrap()).unwrap();
    let bytes = to_bytes(&store, None, &json!(null)).unwrap();
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
    assert_eq!(header["tensors"][0]["name"], "w");
    assert_eq!(header["tensors"][0]["shape"], json!([1, 2]));
    assert_eq!(&bytes[nl + 1..nl + 9], &1.5f64.to_le_bytes());
    assert_eq!(bytes.len(), nl + 1 + 16);
}

#[test]
fn optimizer_state_survives_file_round_trip() {
    let mut store = ParamStore::new();
    store.add("a", Tensor::vector(vec![0.1, 0.2])).unwrap();
    store.add("b", Tensor::scalar(3.0)).unwrap();
    let mut adam = AdamState::new(AdamConfig::default(), &store);
    adam.step(&mut store, &[Tensor::vector(vec![1.0, -1.0]), Tensor::scalar(0.5)], 1e-3).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    save(&path, &store, Some(&adam), &json!({"variant": "dsse"})).unwrap();
    let ck = load(&path).unwrap();
    let restored = ck.adam.expect("adam state");
    assert_eq!(restored.step_count(), 1);
    assert_eq!(restored.config, adam.config);
    assert_eq!(restored.first_moments(), adam.first_moments());
    assert_eq!(restored.second_moments(), adam.second_moments());
    assert_eq!(ck.params.get(ck.params.id("a").unwrap()), store.get(store.id("a").unwrap()));
}

#[test]
fn corrupt_files_are_rejected() {
    assert!(from_bytes(b"no newline").is_err());
    assert!(from_bytes(b"{\"format\":\"x\"}\n").is_err());
    let store = store_from(&[vec![1.0, 2.0]]);
    let mut bytes = to_bytes(&store, None, &json!(null)).unwrap();
    bytes.pop();
    assert!(from_bytes(&bytes).is_err());
}
