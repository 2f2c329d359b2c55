use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use noisecoder::bridge::{spawn_tcp_server, Frame, IdentityModel, Session};
use noisecoder::{
    BridgeConfig, BridgeError, BridgeModel, Endpoint, Error, Execution, GaussianMixtureModel, LatentTensor, ProjectionKind,
    Purpose, QuantMode, ScoreModel, Shape, SigmaSchedule, StegoCodec, StegoRng, Trial,
};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/gmm_desk.nzt");

fn tcp(addr: impl std::fmt::Display) -> Endpoint {
    format!("tcp:{addr}").parse().unwrap()
}

fn shape(c: usize, h: usize, w: usize) -> Shape {
    Shape::new(c, h, w).unwrap()
}

/// A hand-scripted server for failure injection.
fn scripted(script: impl FnOnce(&mut BufReader<TcpStream>, &mut TcpStream) + Send + 'static) -> Endpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        script(&mut reader, &mut writer);
    });
    tcp(addr)
}

fn answer_hello(r: &mut BufReader<TcpStream>, w: &mut TcpStream, dims: &[usize], version: &str) {
    let hello = Frame::read_from(r).unwrap().unwrap();
    assert_eq!(hello.header.version.as_deref(), Some("1"));
    let mut reply = Frame::hello(dims);
    reply.header.version = Some(version.into());
    reply.write_to(w).unwrap();
}

#[test]
fn identity_echo_is_bit_exact() {
    let s = shape(3, 8, 8);
    let addr = spawn_tcp_server(IdentityModel(s)).unwrap();
    let model = BridgeModel::connect(BridgeConfig::new(tcp(addr), s)).unwrap();
    let mut rng = StegoRng::new(1, Purpose::Aux);
    for _ in 0..20 {
        let x: Vec<f32> = rng.normals(s.len()).iter().map(|v| (v * 1e3) as f32).collect();
        let y = model.request(&x, 80.0, Some("prompt=a cat;guidance=7.5")).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn mirrored_mixture_agrees_with_in_process() {
    let gmm = GaussianMixtureModel::load(FIXTURE).unwrap();
    let s = gmm.shape();
    let addr = spawn_tcp_server(gmm.clone()).unwrap();
    let remote = BridgeModel::connect(BridgeConfig::new(tcp(addr), s)).unwrap();
    let sigmas = SigmaSchedule::default().sigmas().to_vec();
    let mut rng = StegoRng::new(2, Purpose::Aux);
    let mut worst = 0.0f64;
    for probe in 0..100 {
        let sigma = sigmas[probe % (sigmas.len() - 1)];
        let x = LatentTensor::new(s, rng.normals(s.len()).iter().map(|v| v * sigma.max(0.5)).collect()).unwrap();
        let local = gmm.denoise(&x, sigma, None).unwrap();
        let far = remote.denoise(&x, sigma, None).unwrap();
        worst = worst.max(local.max_abs_diff(&far).unwrap());
    }
    assert!(worst <= 1e-5, "max-abs {worst}");
    assert_eq!(remote.requests(), 100);
}

#[test]
fn hide_extract_through_bridge() {
    let gmm = GaussianMixtureModel::load(FIXTURE).unwrap();
    let s = gmm.shape();
    let addr = spawn_tcp_server(gmm.clone()).unwrap();
    let remote = BridgeModel::connect(BridgeConfig::new(tcp(addr), s)).unwrap();
    let local = StegoCodec::new(gmm, SigmaSchedule::default());
    let far = StegoCodec::new(&remote, SigmaSchedule::default());

    let trial = Trial::new(ProjectionKind::Mb, QuantMode::Float32, 1, 5).channels(1);
    let key = trial.key_for(s, 0).unwrap();
    let message = trial.message_for(s, 0).unwrap();
    let x_local = local.hide(&message, &key, 0).unwrap();
    let x_far = far.hide(&message, &key, 0).unwrap();
    let z_local = local.recover_noise(&x_local).unwrap();
    let z_far = far.recover_noise(&x_far).unwrap();
    let diff = z_local.max_abs_diff(&z_far).unwrap();
    assert!(diff <= 1e-4, "recovered noise differs by {diff}");
    assert_eq!(remote.requests(), 2 * (2 * 40 - 1));
    assert_eq!(far.extract(&x_far, &key, 1).unwrap(), message);
}

#[test]
fn pooled_parallel_trial_matches_sequential() {
    let gmm = GaussianMixtureModel::load(FIXTURE).unwrap();
    let s = gmm.shape();
    let addr = spawn_tcp_server(gmm).unwrap();
    let remote = BridgeModel::connect(BridgeConfig::new(tcp(addr), s).connections(4)).unwrap();
    let codec = StegoCodec::new(&remote, SigmaSchedule::with_steps(12).unwrap());
    let trial = Trial::new(ProjectionKind::Mc, QuantMode::Uint8, 8, 3).channels(1);
    let par = codec.run_trial(&trial, Execution::Parallel).unwrap();
    let seq = codec.run_trial(&trial, Execution::Sequential).unwrap();
    assert_eq!(par.errors(), seq.errors());
    assert_eq!(remote.requests(), 2 * 8 * 2 * (2 * 12 - 1));
}

#[test]
fn cat_subprocess_is_an_identity_server() {
    let s = shape(1, 4, 4);
    let model = BridgeModel::connect(BridgeConfig::new("cmd:cat".parse().unwrap(), s)).unwrap();
    let x = LatentTensor::from_fn(s, |i| i as f64 * 0.25).unwrap();
    assert_eq!(model.denoise(&x, 1.5, None).unwrap(), x);
}

#[test]
fn mixed_shape_conformance() {
    let shapes = [shape(1, 1, 1), shape(3, 16, 16), shape(4, 8, 8)];
    let mut sessions: Vec<Session> = shapes
        .iter()
        .map(|&s| {
            let addr = spawn_tcp_server(IdentityModel(s)).unwrap();
            Session::connect(&tcp(addr), s, Duration::from_secs(10)).unwrap()
        })
        .collect();
    let mut rng = StegoRng::new(4, Purpose::Aux);
    for i in 0..1000 {
        let session = &mut sessions[i % 3];
        let x: Vec<f32> = rng.normals(session.shape().len()).iter().map(|&v| v as f32).collect();
        assert_eq!(session.request(&x, 0.002 + i as f64, None).unwrap(), x);
    }
    drop(sessions);
}

#[test]
fn handshake_shape_mismatch() {
    let addr = spawn_tcp_server(IdentityModel(shape(4, 64, 64))).unwrap();
    let err = BridgeModel::connect(BridgeConfig::new(tcp(addr), shape(3, 64, 64))).err().unwrap();
    assert!(matches!(err, BridgeError::ShapeMismatch { .. }));
    assert!(err.to_string().contains("shape mismatch"));
}

#[test]
fn handshake_version_mismatch() {
    let ep = scripted(|r, w| answer_hello(r, w, &[1, 2, 2], "2"));
    let err = Session::connect(&ep, shape(1, 2, 2), Duration::from_secs(10)).err().unwrap();
    assert!(matches!(err, BridgeError::UnsupportedProtocol(ref v) if v == "2"));
    assert!(err.to_string().contains("unsupported protocol"));
}

#[test]
fn connection_lost_mid_request() {
    let ep = scripted(|r, w| {
        answer_hello(r, w, &[1, 2, 2], "1");
        let _ = noisecoder::bridge::read_header(r);
    });
    let model = BridgeModel::connect(BridgeConfig::new(ep, shape(1, 2, 2))).unwrap();
    let err = model.denoise(&LatentTensor::zeros(shape(1, 2, 2)), 1.0, None).err().unwrap();
    assert!(matches!(err, Error::Bridge(BridgeError::ConnectionLost)), "{err}");
    assert_eq!(err.to_string(), "bridge: connection lost");
}

#[test]
fn request_timeout() {
    let ep = scripted(|r, w| {
        answer_hello(r, w, &[1, 1, 1], "1");
        let _ = Frame::read_from(r);
        thread::sleep(Duration::from_secs(2));
    });
    let mut session = Session::connect(&ep, shape(1, 1, 1), Duration::from_millis(200)).unwrap();
    let err = session.request(&[0.0], 1.0, None).err().unwrap();
    assert!(matches!(err, BridgeError::Timeout(_)), "{err}");
    assert!(session.is_broken());
}

#[test]
fn non_finite_and_malformed_replies() {
    let ep = scripted(|r, w| {
        answer_hello(r, w, &[1, 1, 2], "1");
        let _ = Frame::read_from(r);
        Frame::denoise(&[1, 1, 2], 1.0, None, vec![0.0, f32::INFINITY]).write_to(w).unwrap();
    });
    let mut session = Session::connect(&ep, shape(1, 1, 2), Duration::from_secs(10)).unwrap();
    let nonfinite = session.request(&[0.0, 0.0], 1.0, None).err().unwrap();
    assert!(matches!(nonfinite, BridgeError::NonFinite));

    let ep = scripted(|r, w| {
        answer_hello(r, w, &[1, 1, 2], "1");
        let _ = Frame::read_from(r);
        w.write_all(b"{\"op\":\"denoise\",\"sigma\":1,\"shape\":[1,1,2],\"payload_len\":4}\n\0\0\0\0").unwrap();
    });
    let mut session = Session::connect(&ep, shape(1, 1, 2), Duration::from_secs(10)).unwrap();
    let malformed = session.request(&[0.0, 0.0], 1.0, None).err().unwrap();
    assert!(matches!(malformed, BridgeError::Malformed(_)), "{malformed}");

    let codes = [
        nonfinite.code(),
        malformed.code(),
        BridgeError::Timeout(Duration::ZERO).code(),
        BridgeError::ConnectionLost.code(),
    ];
    let mut unique = codes.to_vec();
    unique.dedup();
    assert_eq!(unique.len(), codes.len());
}

#[test]
fn server_error_keeps_session() {
    let s = shape(1, 1, 1);
    let addr = spawn_tcp_server(IdentityModel(s)).unwrap();
    let mut session = Session::connect(&tcp(addr), s, Duration::from_secs(10)).unwrap();
    let err = session.request(&[0.0, 1.0], 1.0, None).err().unwrap();
    assert!(matches!(err, BridgeError::Server(_)), "{err}");
    assert!(!session.is_broken());
    assert_eq!(session.request(&[2.5], 1.0, None).unwrap(), [2.5]);
}

#[test]
fn environment_overrides_endpoint() {
    std::env::set_var(noisecoder::bridge::ENDPOINT_ENV, "tcp:10.0.0.1:9000");
    let resolved = Endpoint::resolve(Some("cmd:python serve.py")).unwrap();
    std::env::remove_var(noisecoder::bridge::ENDPOINT_ENV);
    assert_eq!(resolved, Some(Endpoint::Tcp("10.0.0.1:9000".into())));
    assert_eq!(Endpoint::resolve(None).unwrap(), None);
}
