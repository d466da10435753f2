use cubeswarm_geonet::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use cubeswarm_geonet::{
    load_checkpoint, save_checkpoint, Activation, Arch, NetConfig, PolicyValueNet,
};
use serde_json::json;

fn net() -> PolicyValueNet<f32> {
    let cfg =
        NetConfig::with_widths(Arch::MrCnn, 5, vec![1, 4, 6, 3], Activation::Relu, true).unwrap();
    PolicyValueNet::new(cfg, 17).unwrap()
}

#[test]
fn round_trip_is_bit_exact() {
    let n = net();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let meta = json!({"target": "line", "max_steps": 300});
    save_checkpoint(&path, &n, &meta).unwrap();
    let (back, m) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(m, meta);
    assert_eq!(back.config(), n.config());
    let bits = |p: &[f32]| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.params()), bits(n.params()));
    assert!(!dir.path().join("net.tmp").exists());
}

#[test]
fn corrupted_files_are_rejected() {
    let n = net();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &n, &json!(null)).unwrap();

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(
        read_checkpoint::<f32, _>(&bad[..]),
        Err(CheckpointError::BadMagic)
    ));

    let mut bad = buf.clone();
    bad[8] = 9;
    assert!(matches!(
        read_checkpoint::<f32, _>(&bad[..]),
        Err(CheckpointError::Version(9))
    ));

    assert!(read_checkpoint::<f32, _>(&buf[..buf.len() - 3]).is_err());

    let mut long = buf.clone();
    long.push(0);
    assert!(matches!(
        read_checkpoint::<f32, _>(&long[..]),
        Err(CheckpointError::Mismatch(_))
    ));

    assert!(read_checkpoint::<f32, _>(&buf[..]).is_ok());
}
