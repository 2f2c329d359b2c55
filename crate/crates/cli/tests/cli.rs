use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_noisecoder");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/gmm_desk.nzt")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("NOISECODER_BRIDGE").output().expect("spawn noisecoder")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Bytes without visible structure, so carriers pass the collapse checks.
fn payload(n: usize, salt: u8) -> Vec<u8> {
    (0..n).map(|i| ((i as u32).wrapping_mul(2_654_435_761) >> 13) as u8 ^ salt).collect()
}

fn value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

/// Temp dir holding `key.cfg` for the desk mixture with MB and seed 7.
fn keyed() -> TempDir {
    let dir = TempDir::new().unwrap();
    let model = format!("gmm:{}", fixture().display());
    let o = run(dir.path(), &["keygen", "--model", &model, "--seed", "7", "--out", "key.cfg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn hide_then_extract_recovers_the_bytes() {
    let dir = keyed();
    let msg: Vec<u8> = (0..32u8).map(|i| i.wrapping_mul(37) ^ 0x5a).collect();
    fs::write(dir.path().join("msg.bin"), &msg).unwrap();
    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--msg", "msg.bin", "--out", "s.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "bpp"), Some("1.000000"));
    assert_eq!(value(&out, "n_bits"), Some("256"));
    assert_eq!(value(&out, "collapse_verdict"), Some("pass"));

    let o = run(dir.path(), &["extract", "--key", "key.cfg", "--img", "s.png", "--out", "r.bin", "--len", "256", "--compare", "msg.bin"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "acc"), Some("1.000000"));
    assert_eq!(fs::read(dir.path().join("r.bin")).unwrap(), msg);
}

#[test]
fn bits_files_round_trip_through_multibits() {
    let dir = keyed();
    let bits: String = (0..512).map(|i| if (i * 7 + i / 3) % 2 == 0 { '1' } else { '0' }).collect();
    fs::write(dir.path().join("m.bits"), &bits).unwrap();
    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--projection", "multibits(2)", "--msg", "m.bits", "--out", "s.nzt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "bpp"), Some("2.000000"));
    let o = run(
        dir.path(),
        &["extract", "--key", "key.cfg", "--projection", "multibits(2)", "--img", "s.nzt", "--out", "r.bits", "--len", "512"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir.path(), &["eval", "acc", "m.bits", "r.bits"]);
    let acc: f64 = value(&stdout(&o), "acc").unwrap().parse().unwrap();
    assert!(acc > 0.9, "acc {acc}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = keyed();
    fs::write(dir.path().join("msg.bin"), b"same bytes every time, please!!").unwrap();
    for out in ["a.png", "b.png"] {
        let o = run(dir.path(), &["hide", "--key", "key.cfg", "--msg", "msg.bin", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(dir.path().join("a.png")).unwrap(), fs::read(dir.path().join("b.png")).unwrap());
}

#[test]
fn over_capacity_exits_2_and_names_the_limit() {
    let dir = keyed();
    // 4 bpp on a 3-channel model with MB.
    fs::write(dir.path().join("big.bin"), vec![0xa5u8; 4 * 16 * 16 / 8]).unwrap();
    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--msg", "big.bin", "--out", "s.png"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[capacity]:"), "{err}");
    assert!(err.contains("use multibits"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(!dir.path().join("s.png").exists());
}

#[test]
fn multichannel_without_codebook_exits_2() {
    let dir = keyed();
    fs::write(dir.path().join("msg.bin"), [1u8; 4]).unwrap();
    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--projection", "multichannel", "--msg", "msg.bin", "--out", "s.png"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn multichannel_with_keygen_codebook() {
    let dir = TempDir::new().unwrap();
    let model = format!("gmm:{}", fixture().display());
    let o = run(
        dir.path(),
        &["keygen", "--model", &model, "--projection", "multichannel", "--codebook", "cb.nzt", "--seed", "3", "--out", "k.cfg"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("cb.nzt").exists());
    fs::write(dir.path().join("msg.bin"), payload(32, 0x3c)).unwrap();
    let o = run(dir.path(), &["hide", "--key", "k.cfg", "--msg", "msg.bin", "--out", "s.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir.path(), &["extract", "--key", "k.cfg", "--img", "s.png", "--out", "r.bin", "--compare", "msg.bin"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "acc"), Some("1.000000"));
}

#[test]
fn missing_inputs_exit_3() {
    let dir = keyed();
    let o = run(dir.path(), &["extract", "--key", "key.cfg", "--img", "nope.png", "--out", "r.bin"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[missing]:"));
    let o = run(dir.path(), &["hide", "--key", "absent.cfg", "--msg", "m", "--out", "o.png"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    for args in [&["frobnicate"][..], &["hide"], &["sample", "--n", "x", "--outdir", "o"]] {
        let o = run(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("error[usage]:"));
    }
    assert!(run(dir.path(), &["--help"]).status.success());
}

#[test]
fn eval_acc_on_a_known_pair() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.bits"), "0110").unwrap();
    fs::write(dir.path().join("b.bits"), "0111").unwrap();
    let o = run(dir.path(), &["eval", "acc", "a.bits", "b.bits"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "acc"), Some("0.750000"));
}

#[test]
fn eval_pe_and_frechet_on_identical_inputs() {
    let dir = keyed();
    let o = run(dir.path(), &["sample", "--key", "key.cfg", "--n", "24", "--outdir", "s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let images: Vec<String> = (0..24).map(|i| format!("s/img_{i:05}.png")).collect();
    let mut args = vec!["eval", "features", "--out", "f.nzt"];
    args.extend(images.iter().map(String::as_str));
    let o = run(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "rows"), Some("24"));

    let o = run(dir.path(), &["eval", "frechet", "f.nzt", "f.nzt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "frechet"), Some("0.000000"));
    let o = run(dir.path(), &["eval", "pe", "f.nzt", "f.nzt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "pe"), Some("0.500000"));
}

#[test]
fn sample_writes_a_manifest_that_hide_reproduces() {
    let dir = keyed();
    let o = run(dir.path(), &["sample", "--key", "key.cfg", "--n", "3", "--outdir", "out", "--jobs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[2].split(' ').collect();
    assert_eq!(fields, ["img_00002.png", "img_00002.bits", "9"]);

    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--seed", "9", "--msg", "out/img_00002.bits", "--out", "again.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("again.png")).unwrap(), fs::read(dir.path().join("out/img_00002.png")).unwrap());

    let o = run(dir.path(), &["sample", "--key", "key.cfg", "--n", "0", "--outdir", "empty"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("empty/manifest.txt")).unwrap(), "");
}

#[test]
fn sample_jobs_do_not_change_outputs() {
    let dir = keyed();
    for (jobs, out) in [("1", "one"), ("3", "three")] {
        let o = run(dir.path(), &["sample", "--key", "key.cfg", "--n", "3", "--outdir", out, "--jobs", jobs, "--format", "nzt"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for i in 0..3 {
        let name = format!("img_{i:05}.nzt");
        assert_eq!(fs::read(dir.path().join("one").join(&name)).unwrap(), fs::read(dir.path().join("three").join(&name)).unwrap());
    }
}

#[test]
fn hide_and_extract_through_a_bridge_server() {
    let dir = TempDir::new().unwrap();
    let model = format!("bridge:cmd:'{BIN}' serve --gmm '{}'", fixture().display());
    fs::write(dir.path().join("msg.bin"), payload(32, 0x96)).unwrap();
    let common = ["--model", &model, "--shape", "3x16x16", "--seed", "11"];
    let mut hide = vec!["hide", "--msg", "msg.bin", "--out", "b.png"];
    hide.extend(common);
    let o = run(dir.path(), &hide);
    assert!(o.status.success(), "{}", stderr(&o));

    let local = format!("gmm:{}", fixture().display());
    let o = run(dir.path(), &["hide", "--model", &local, "--seed", "11", "--msg", "msg.bin", "--out", "l.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("b.png")).unwrap(), fs::read(dir.path().join("l.png")).unwrap());

    let mut extract = vec!["extract", "--img", "b.png", "--out", "r.bin", "--len", "256", "--compare", "msg.bin"];
    extract.extend(common);
    let o = run(dir.path(), &extract);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "acc"), Some("1.000000"));
}

#[test]
fn unreachable_bridge_exits_3() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("msg.bin"), [1u8; 4]).unwrap();
    let o = run(dir.path(), &["hide", "--model", "bridge:tcp:127.0.0.1:1", "--shape", "3x16x16", "--msg", "msg.bin", "--out", "o.png"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[model]:"));
}

#[test]
fn constant_message_collapses_the_carrier() {
    let dir = keyed();
    fs::write(dir.path().join("ones.bits"), "1".repeat(256)).unwrap();
    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--msg", "ones.bits", "--out", "s.png", "--save-noise", "z.nzt"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "collapse_verdict"), Some("fail"));
    assert!(stderr(&o).starts_with("error[collapse]:"));
    assert!(!dir.path().join("s.png").exists());

    let o = run(dir.path(), &["diagnose", "--noise", "z.nzt"]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(dir.path(), &["diagnose", "--key", "key.cfg", "--msg", "ones.bits"]);
    assert_eq!(o.status.code(), Some(4));

    let o = run(dir.path(), &["hide", "--key", "key.cfg", "--msg", "ones.bits", "--out", "s.png", "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("s.png").exists());
}

#[test]
fn diagnose_passes_random_carriers() {
    let dir = keyed();
    let o = run(dir.path(), &["diagnose", "--key", "key.cfg"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(value(&stdout(&o), "collapse_verdict"), Some("pass"));
}

#[test]
fn gmm_fixture_writes_a_loadable_model() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["gmm-fixture", "--out", "g.nzt", "--shape", "1x4x4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "components"), Some("4"));
    use noisecoder::ScoreModel;
    let g = noisecoder::GaussianMixtureModel::load(dir.path().join("g.nzt")).unwrap();
    assert_eq!(g.shape(), noisecoder::Shape::new(1, 4, 4).unwrap());
}
