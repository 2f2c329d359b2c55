use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use noisecoder::codec::{load_image, save_image};
use noisecoder::diagnostics::error_histogram;
use noisecoder::message::{pack_bits, read_bits_file, unpack_bits, write_bits_file};
use noisecoder::metrics::{accuracy, detection_error, frechet_distance, image_features, FeatureSet, ScoreSet};
use noisecoder::parallel::try_map_indexed;
use noisecoder::projection::extract_from_channels;
use noisecoder::{
    check_collapse, bridge, Codebook, Error, Execution, GaussianMixtureModel, LatentTensor, Message, NztTensor, ProjectionKind, Purpose,
    ScoreModel, Shape, StegoCodec, StegoKey, StegoRng, Verdict,
};

use crate::config::{parse_model, parse_shape, Config, ModelSpec};
use crate::failure::{Failure, EXIT_COLLAPSE};
use crate::KeyArgs;

type Codec = StegoCodec<Box<dyn ScoreModel>>;

fn cwd() -> PathBuf {
    std::env::current_dir().unwrap_or_else(|_| PathBuf::from("."))
}

fn config(args: &KeyArgs) -> Result<Config, Failure> {
    let mut cfg = match &args.key {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let base = cwd();
    if let Some(m) = &args.model {
        cfg.model = Some(parse_model(m, &base)?);
    }
    if let Some(p) = &args.projection {
        cfg.set("projection", p, &base)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.steps {
        cfg.steps = n;
    }
    if let Some(s) = &args.shape {
        cfg.shape = Some(parse_shape(s)?);
    }
    if let Some(c) = &args.codebook {
        cfg.codebook = Some(base.join(c));
    }
    if let Some(c) = &args.context {
        cfg.context = Some(c.clone());
    }
    Ok(cfg)
}

/// Key first so that key errors surface before any model connection.
fn open(args: &KeyArgs) -> Result<(Config, StegoKey, Codec), Failure> {
    let cfg = config(args)?;
    let key = cfg.key()?;
    let schedule = cfg.schedule()?;
    let mut codec = StegoCodec::new(cfg.open_model()?, schedule);
    codec.context = cfg.context.clone();
    Ok((cfg, key, codec))
}

fn read_message(path: &Path) -> Result<Vec<u8>, Failure> {
    let what = path.display().to_string();
    let bits = if path.extension().is_some_and(|e| e == "bits") {
        read_bits_file(path)
    } else {
        fs::read(path).map_err(Error::from).and_then(|bytes| pack_bits(&bytes, 8 * bytes.len()))
    };
    bits.map_err(|e| Failure::from(e).context(&what))
}

fn write_message(path: &Path, bits: &[u8]) -> Result<(), Failure> {
    let written = if path.extension().is_some_and(|e| e == "bits") {
        write_bits_file(path, bits)
    } else {
        fs::write(path, unpack_bits(bits)).map_err(Error::from)
    };
    written.map_err(|e| Failure::from(e).context(&path.display().to_string()))
}

fn capacity_error(kind: ProjectionKind, shape: Shape, bits: usize) -> Failure {
    let max_bpp = kind.max_message_channels(shape.channels) * kind.bits_per_element();
    let hint = match kind {
        ProjectionKind::Mn | ProjectionKind::Mb | ProjectionKind::Mc => "; use multibits",
        _ => "",
    };
    Error::Capacity(format!(
        "{:.6} bpp requested but {kind} carries at most {max_bpp} bpp on {shape}{hint}",
        bits as f64 / shape.plane() as f64
    ))
    .into()
}

/// Message channels needed for `bits` payload bits.
fn channels_for(kind: ProjectionKind, shape: Shape, bits: usize) -> Result<usize, Failure> {
    let per_channel = kind.bits_per_element() * shape.plane();
    let channels = bits.div_ceil(per_channel).max(1);
    if channels > kind.max_message_channels(shape.channels) {
        return Err(capacity_error(kind, shape, bits));
    }
    Ok(channels)
}

/// Fills the channels covering `bits` with seeded filler bits.
fn build_message(mut bits: Vec<u8>, key: &StegoKey, shape: Shape, index: u32) -> Result<Message, Failure> {
    if bits.is_empty() {
        return Err(Failure::usage("empty message"));
    }
    let kind = key.projection();
    let channels = channels_for(kind, shape, bits.len())?;
    let total = channels * kind.bits_per_element() * shape.plane();
    bits.extend(StegoRng::for_item(key.seed(), Purpose::Payload, index).bits(total - bits.len()));
    Ok(Message::new(bits, shape.width, shape.height, kind.bits_per_element(), channels)?)
}

fn report_collapse(z: &LatentTensor) -> Result<Verdict, Failure> {
    let report = check_collapse(z)?;
    for line in report.to_lines() {
        println!("{line}");
    }
    Ok(report.verdict())
}

fn collapse_failure() -> Failure {
    Failure::new(EXIT_COLLAPSE, "collapse", "carrier noise failed the collapse checks; pass --force to sample anyway")
}

pub fn hide(args: &KeyArgs, msg: &Path, out: &Path, index: u32, force: bool, save_noise: Option<&Path>) -> Result<(), Failure> {
    let (_, key, codec) = open(args)?;
    let shape = codec.shape();
    let bits = read_message(msg)?;
    let n_bits = bits.len();
    let message = build_message(bits, &key, shape, index)?;
    let z = codec.carrier(&message, &key, index)?;
    println!("bpp={:.6}", n_bits as f64 / shape.plane() as f64);
    println!("n_bits={n_bits}");
    println!("channels_used={}", message.channels_used());
    // Written before the verdict so a failing carrier can be inspected.
    if let Some(path) = save_noise {
        z.write(path)?;
    }
    if report_collapse(&z)? == Verdict::Fail && !force {
        return Err(collapse_failure());
    }
    let x0 = codec.generate(&z)?;
    save_image(&x0, out).map_err(|e| Failure::from(e).context(&out.display().to_string()))?;
    Ok(())
}

pub fn extract(
    args: &KeyArgs,
    img: &Path,
    out: &Path,
    len: Option<usize>,
    compare: Option<&Path>,
    save_noise: Option<&Path>,
) -> Result<(), Failure> {
    let (_, key, codec) = open(args)?;
    let shape = codec.shape();
    let kind = key.projection();
    let x0 = load_image(img).map_err(|e| Failure::from(e).context(&img.display().to_string()))?;
    x0.expect_shape(shape)?;
    let full = kind.max_message_channels(shape.channels) * kind.bits_per_element() * shape.plane();
    let len = len.unwrap_or(full);
    let channels = channels_for(kind, shape, len)?;
    let z = codec.recover_noise(&x0)?;
    if let Some(path) = save_noise {
        z.write(path)?;
    }
    let mut bits = extract_from_channels(&z, &key, channels)?.into_bits();
    bits.truncate(len);
    write_message(out, &bits)?;
    println!("n_bits={}", bits.len());
    if let Some(reference) = compare {
        let reference = read_message(reference)?;
        println!("acc={:.6}", accuracy(&reference, &bits)?);
    }
    Ok(())
}

pub fn sample(args: &KeyArgs, n: usize, outdir: &Path, jobs: usize, channels: usize, format: &str) -> Result<(), Failure> {
    let ext = match format {
        "png" | "nzt" => format,
        other => return Err(Failure::usage(format!("unknown format {other:?}; use png or nzt"))),
    };
    let (cfg, key, codec) = open(args)?;
    let shape = codec.shape();
    let kind = key.projection();
    let per_channel = kind.bits_per_element() * shape.plane();
    if channels == 0 || channels > kind.max_message_channels(shape.channels) {
        return Err(capacity_error(kind, shape, channels * per_channel));
    }
    fs::create_dir_all(outdir).map_err(|e| Failure::missing(format!("{}: {e}", outdir.display())))?;

    let make = |i: usize| -> Result<String, Failure> {
        let seed = cfg.seed.wrapping_add(i as u64);
        let key = key.with_seed(seed);
        let bits = StegoRng::for_item(seed, Purpose::Payload, 0).bits(channels * per_channel);
        let message = Message::new(bits, shape.width, shape.height, kind.bits_per_element(), channels)?;
        let x0 = codec.hide(&message, &key, 0)?;
        let (image, bits) = (format!("img_{i:05}.{ext}"), format!("img_{i:05}.bits"));
        save_image(&x0, outdir.join(&image))?;
        write_bits_file(outdir.join(&bits), message.bits())?;
        Ok(format!("{image} {bits} {seed}"))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::usage(format!("--jobs: {e}")))?;
    let exec = if jobs > 1 { Execution::Parallel } else { Execution::Sequential };
    let lines = pool.install(|| try_map_indexed(n, exec, make))?;

    let manifest = outdir.join("manifest.txt");
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(&manifest, text).map_err(|e| Failure::missing(format!("{}: {e}", manifest.display())))?;
    println!("n_images={n}");
    println!("bpp={:.6}", (channels * kind.bits_per_element()) as f64);
    println!("manifest={}", manifest.display());
    Ok(())
}

pub fn diagnose(args: &KeyArgs, msg: Option<&Path>, noise: Option<&Path>, index: u32) -> Result<(), Failure> {
    let z = match noise {
        Some(path) => LatentTensor::read(path).map_err(|e| Failure::from(e).context(&path.display().to_string()))?,
        None => {
            let (_, key, codec) = open(args)?;
            let shape = codec.shape();
            let kind = key.projection();
            let bits = match msg {
                Some(path) => read_message(path)?,
                None => {
                    let full = kind.max_message_channels(shape.channels) * kind.bits_per_element() * shape.plane();
                    StegoRng::for_item(key.seed(), Purpose::Payload, index).bits(full)
                }
            };
            codec.carrier(&build_message(bits, &key, shape, index)?, &key, index)?
        }
    };
    match report_collapse(&z)? {
        Verdict::Fail => Err(collapse_failure()),
        _ => Ok(()),
    }
}

fn read_nzt(path: &Path) -> Result<NztTensor, Failure> {
    NztTensor::read(path).map_err(|e| Failure::from(e).context(&path.display().to_string()))
}

fn read_features(path: &Path) -> Result<FeatureSet, Failure> {
    let t = read_nzt(path)?;
    match t.dims[..] {
        [rows, dim] => Ok(FeatureSet::new(rows, dim, t.to_f64())?),
        _ => Err(Failure::usage(format!("{}: expected a rows × dim tensor, found dims {:?}", path.display(), t.dims))),
    }
}

pub fn eval_acc(reference: &Path, recovered: &Path) -> Result<(), Failure> {
    let (a, b) = (read_message(reference)?, read_message(recovered)?);
    println!("acc={:.6}", accuracy(&a, &b)?);
    println!("n_bits={}", a.len());
    Ok(())
}

pub fn eval_pe(stego: &Path, cover: &Path) -> Result<(), Failure> {
    let scores = ScoreSet::new(read_nzt(stego)?.to_f64(), read_nzt(cover)?.to_f64())?;
    println!("pe={:.6}", detection_error(&scores)?);
    Ok(())
}

pub fn eval_frechet(a: &Path, b: &Path) -> Result<(), Failure> {
    println!("frechet={:.6}", frechet_distance(&read_features(a)?, &read_features(b)?)?);
    Ok(())
}

pub fn eval_hist(z: &Path, recovered: &Path, bins: usize, out: Option<&Path>) -> Result<(), Failure> {
    let read = |p: &Path| LatentTensor::read(p).map_err(|e| Failure::from(e).context(&p.display().to_string()));
    let hist = error_histogram(&read(z)?, &read(recovered)?, bins)?;
    for line in hist.summary_lines() {
        println!("{line}");
    }
    match out {
        Some(path) => fs::write(path, hist.to_text()).map_err(|e| Failure::missing(format!("{}: {e}", path.display())))?,
        None => print!("{}", hist.to_text()),
    }
    Ok(())
}

pub fn eval_features(out: &Path, images: &[PathBuf]) -> Result<(), Failure> {
    let mut data = Vec::new();
    let mut dim = 0;
    for path in images {
        let x = load_image(path).map_err(|e| Failure::from(e).context(&path.display().to_string()))?;
        let f = image_features(&x);
        if dim != 0 && f.len() != dim {
            return Err(Failure::usage(format!("{}: images must share one shape", path.display())));
        }
        dim = f.len();
        data.extend(f);
    }
    NztTensor::from_f64(vec![images.len(), dim], &data)?.write(out)?;
    println!("rows={}", images.len());
    println!("dim={dim}");
    Ok(())
}

pub fn keygen(args: &KeyArgs, out: &Path) -> Result<(), Failure> {
    let cfg = config(args)?;
    cfg.key().or_else(|e| match e {
        // The codebook named by the key does not exist yet: draw it.
        Failure { code: 3, .. } if cfg.projection.needs_codebook() => {
            let path = cfg.codebook.clone().expect("missing file implies a path");
            let shape = match (cfg.shape, &cfg.model) {
                (Some(s), _) => s,
                (None, Some(ModelSpec::Gmm(_))) => cfg.open_model()?.shape(),
                _ => return Err(Failure::usage("multichannel keys need shape = CxHxW or a gmm model to size the codebook")),
            };
            Codebook::generate(shape.height, shape.width, cfg.seed, 0).write(&path)?;
            println!("codebook={}", path.display());
            cfg.key()
        }
        other => Err(other),
    })?;
    let out_abs = cwd().join(out);
    let base = out_abs.parent().map(Path::to_path_buf).unwrap_or_else(cwd);
    fs::write(out, cfg.to_text(&base)).map_err(|e| Failure::missing(format!("{}: {e}", out.display())))?;
    println!("key={}", out.display());
    Ok(())
}

pub fn codebook(height: usize, width: usize, seed: u64, index: u32, out: &Path) -> Result<(), Failure> {
    if height == 0 || width == 0 {
        return Err(Failure::usage("codebook dimensions must be positive"));
    }
    Codebook::generate(height, width, seed, index).write(out)?;
    println!("codebook={}", out.display());
    Ok(())
}

pub fn gmm_fixture(out: &Path, seed: u64, shape: &str) -> Result<(), Failure> {
    let model = GaussianMixtureModel::desk_fixture(parse_shape(shape)?, seed);
    model.save(out)?;
    println!("components={}", model.components().len());
    println!("fixture={}", out.display());
    Ok(())
}

pub fn serve(gmm: &Path, listen: Option<&str>) -> Result<(), Failure> {
    let model = GaussianMixtureModel::load(gmm).map_err(|e| Failure::from(e).context(&gmm.display().to_string()))?;
    match listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| Failure::missing(format!("{addr}: {e}")))?;
            println!("listening={}", listener.local_addr().map_err(|e| Failure::missing(e.to_string()))?);
            io::stdout().flush().ok();
            bridge::serve_tcp(listener, Arc::new(model)).map_err(|e| Failure::missing(e.to_string()))
        }
        None => {
            let (stdin, stdout) = (io::stdin(), io::stdout());
            Ok(bridge::serve_connection(stdin.lock(), BufWriter::new(stdout.lock()), &model)?)
        }
    }
}
