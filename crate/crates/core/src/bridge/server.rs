//! Serving side of the protocol for any in-process [`ScoreModel`]. Used for
//! conformance tests and for exposing a mixture model over TCP.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread;

use super::frame::{read_header, read_payload, Frame, Op, PROTOCOL_VERSION};
use super::BridgeError;
use crate::error::Result;
use crate::sampler::ScoreModel;
use crate::tensor::{LatentTensor, Shape};

/// `D(x; σ) = x`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityModel(pub Shape);

impl ScoreModel for IdentityModel {
    fn shape(&self) -> Shape {
        self.0
    }

    fn denoise(&self, x: &LatentTensor, _sigma: f64, _context: Option<&str>) -> Result<LatentTensor> {
        x.expect_shape(self.0)?;
        Ok(x.clone())
    }
}

/// Answers frames until `bye` or end of stream. Bad requests get an error
/// frame and the connection stays open; transport failures end it.
pub fn serve_connection<R, W, M>(mut reader: R, mut writer: W, model: &M) -> Result<(), BridgeError>
where
    R: BufRead,
    W: Write,
    M: ScoreModel + ?Sized,
{
    let dims = model.shape().dims();
    loop {
        let header = match read_header(&mut reader) {
            Ok(Some(h)) => h,
            Ok(None) => return Ok(()),
            Err(BridgeError::Malformed(m)) => {
                Frame::error(format!("malformed frame: {m}")).write_to(&mut writer)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let payload = match read_payload(&mut reader, header.payload_len) {
            Ok(p) => p,
            Err(BridgeError::Malformed(m)) => {
                // The stream cannot be resynchronized after a bad length.
                Frame::error(m).write_to(&mut writer)?;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let frame = Frame { header, payload };
        let reply = match frame.header.op {
            Op::Hello => match frame.header.version.as_deref() {
                Some(PROTOCOL_VERSION) => Frame::hello(&dims),
                other => Frame::error(format!("unsupported protocol {other:?}")),
            },
            Op::Denoise => answer(&frame, &dims, model),
            Op::Bye => return Ok(()),
            Op::Error => continue,
        };
        reply.write_to(&mut writer)?;
    }
}

fn answer<M: ScoreModel + ?Sized>(frame: &Frame, dims: &[usize], model: &M) -> Frame {
    let shape = match frame.validate_denoise() {
        Ok(s) => s,
        Err(e) => return Frame::error(e.to_string()),
    };
    if shape != dims {
        return Frame::error(format!("shape mismatch: server {dims:?}, request {shape:?}"));
    }
    let sigma = frame.header.sigma.expect("validated");
    let x = match LatentTensor::new(model.shape(), frame.payload.iter().map(|&v| f64::from(v)).collect()) {
        Ok(x) => x,
        Err(e) => return Frame::error(e.to_string()),
    };
    match model.denoise(&x, sigma, frame.header.context.as_deref()) {
        Ok(d) => Frame::denoise(dims, sigma, frame.header.context.as_deref(), d.data().iter().map(|&v| v as f32).collect()),
        Err(e) => Frame::error(e.to_string()),
    }
}

/// Accepts connections forever, one thread each.
pub fn serve_tcp<M: ScoreModel + 'static>(listener: TcpListener, model: Arc<M>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = Arc::clone(&model);
        thread::spawn(move || {
            let _ = stream.set_nodelay(true);
            let Ok(read_half) = stream.try_clone() else { return };
            let _ = serve_connection(BufReader::new(read_half), BufWriter::new(stream), model.as_ref());
        });
    }
    Ok(())
}

/// Binds an ephemeral localhost port and serves `model` on a background
/// thread for the life of the process.
pub fn spawn_tcp_server<M: ScoreModel + 'static>(model: M) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let model = Arc::new(model);
    thread::spawn(move || serve_tcp(listener, model));
    Ok(addr)
}
