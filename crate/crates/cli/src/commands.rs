use std::path::Path;

use nlc_core::ar;
use nlc_core::codec::tiles::{compress_tiles, decompress_stream, Archive, Stream};
use nlc_core::codec::{bits_per_pixel, Codec, CompressReport, Container};
use nlc_core::image::RgbImage;
use nlc_core::metrics::{format_quality, quality, QualityReport};
use nlc_core::nn::{NetworkSpec, WeightStore};
use serde_json::json;

use crate::error::{exit, CliError, CliResult};
use crate::io::{read_bytes, read_image, read_model, write_bytes, write_image};
use crate::report::{layer_bytes, layer_rates, print_totals, Totals};
use crate::{ArCheckArgs, CompressArgs, DecompressArgs, EvalArgs, InitWeightsArgs, InspectArgs};

/// Largest evidence gap `ar-check` accepts.
const AR_TOLERANCE: f64 = 1e-12;

fn check_tile(codec: &Codec, tile: usize) -> CliResult<()> {
    let f = codec.weights().network().total_downsampling();
    if tile == 0 || !tile.is_multiple_of(f) {
        return Err(CliError::Usage(format!(
            "--tile {tile} is not a positive multiple of the model's downsampling factor {f}"
        )));
    }
    Ok(())
}

/// Codes `img` as one container when it fits in a tile, else as an archive.
fn encode(codec: &Codec, img: &RgbImage, tile: usize, self_check: bool) -> CliResult<(Vec<u8>, Vec<CompressReport>)> {
    let tiles = compress_tiles(codec, img, tile, self_check)?;
    let reports = tiles.iter().map(|c| c.report.clone()).collect();
    let bytes = if tiles.len() == 1 {
        tiles.into_iter().next().unwrap().bytes
    } else {
        Archive {
            width: img.width() as u32,
            height: img.height() as u32,
            tile: tile as u32,
            tiles: tiles.into_iter().map(|c| c.bytes).collect(),
        }
        .to_bytes()
    };
    Ok((bytes, reports))
}

pub fn compress(a: &CompressArgs, json: bool) -> CliResult<u8> {
    let weights = read_model(&a.model)?;
    let img = read_image(&a.input)?;
    let codec = Codec::with_precision(weights, a.precision)?;
    check_tile(&codec, a.tile)?;
    let (bytes, reports) = encode(&codec, &img, a.tile, a.self_check)?;
    write_bytes(&a.output, &bytes)?;

    let stream = Stream::parse(&bytes)?;
    let totals = Totals::of(&stream, &stream.summaries()?, bytes.len());
    let layers = layer_rates(&reports);
    if json {
        let record = json!({
            "output": a.output,
            "self_check": a.self_check,
            "totals": totals,
            "layers": layers,
        });
        println!("{record}");
        return Ok(exit::OK);
    }
    println!("wrote {}", a.output.display());
    if a.self_check {
        println!("self-check passed: decoder output and scale fields match the encoder");
    }
    if a.report {
        print_totals(&totals);
        println!("{:>6} {:>10} {:>12} {:>14} {:>14}", "layer", "symbols", "actual bits", "estimated bits", "model bits");
        for l in &layers {
            println!(
                "{:>6} {:>10} {:>12} {:>14.1} {:>14.1}",
                format!("z{}", l.level),
                l.symbols,
                l.actual_bits,
                l.estimated_bits,
                l.model_bits
            );
        }
        println!(
            "{:>6} {:>10} {:>12} {:>14.1} {:>14.1}",
            "total",
            layers.iter().map(|l| l.symbols).sum::<usize>(),
            layers.iter().map(|l| l.actual_bits).sum::<usize>(),
            layers.iter().map(|l| l.estimated_bits).sum::<f64>(),
            layers.iter().map(|l| l.model_bits).sum::<f64>()
        );
    }
    Ok(exit::OK)
}

pub fn decompress(a: &DecompressArgs, json: bool) -> CliResult<u8> {
    let codec = Codec::new(read_model(&a.model)?)?;
    let bytes = read_bytes(&a.input)?;
    let img = decompress_stream(&codec, &bytes)?;
    write_image(&a.output, &img)?;
    if json {
        println!("{}", json!({ "output": a.output, "width": img.width(), "height": img.height() }));
    } else {
        println!("wrote {} ({}x{})", a.output.display(), img.width(), img.height());
    }
    Ok(exit::OK)
}

pub fn inspect(a: &InspectArgs, json: bool) -> CliResult<u8> {
    let bytes = read_bytes(&a.input)?;
    let stream = Stream::parse(&bytes)?;
    let summaries = stream.summaries()?;
    let totals = Totals::of(&stream, &summaries, bytes.len());
    let layers = layer_bytes(&summaries);
    let (kind, tile, first) = match &stream {
        Stream::Single(c) => ("container", None, c.clone()),
        Stream::Tiled(archive) => ("archive", Some(archive.tile), Container::from_bytes(&archive.tiles[0])?),
    };
    let h = &first.header;
    if json {
        let record = json!({
            "kind": kind,
            "tile": tile,
            "model_hash": h.model_hash.to_hex(),
            "levels": h.levels,
            "precision": h.precision,
            "cdf_bits": h.cdf_bits,
            "latent_channels": h.latent_channels,
            "scale_levels": h.scale_count,
            "scale_min": h.scale_min,
            "scale_max": h.scale_max,
            "totals": totals,
            "layers": layers,
        });
        println!("{record}");
        return Ok(exit::OK);
    }
    match tile {
        Some(t) => println!("{kind}: {} tiles of {t} px", summaries.len()),
        None => println!("{kind}"),
    }
    println!(
        "model {}  L={}  P={}  M={}  scale table {} levels over [{}, {}]",
        h.model_hash, h.levels, h.precision, h.latent_channels, h.scale_count, h.scale_min, h.scale_max
    );
    if let Stream::Single(c) = &stream {
        println!("padded {}x{}", c.header.padded_width, c.header.padded_height);
        for (r, s) in c.header.layers.iter().zip(&summaries[0].layers) {
            println!("  z{}: {}x{}x{}, {} bytes", s.level, r.channels, r.height, r.width, r.segment_len);
        }
    } else {
        for l in &layers {
            println!("  z{}: {} bytes", l.level, l.bytes);
        }
    }
    print_totals(&totals);
    Ok(exit::OK)
}

fn quality_record(path: &Path, q: &QualityReport) -> serde_json::Value {
    let psnr = if q.psnr.is_infinite() { json!("inf") } else { json!(q.psnr) };
    json!({
        "input": path,
        "psnr": psnr,
        "ms_ssim": q.ms_ssim,
        "bpp": q.bpp,
        "caption": format_quality(q),
    })
}

pub fn eval(a: &EvalArgs, json: bool) -> CliResult<u8> {
    let mut results = Vec::with_capacity(a.input.len());
    if let Some(model) = &a.model {
        let codec = Codec::new(read_model(model)?)?;
        check_tile(&codec, a.tile)?;
        for path in &a.input {
            let img = read_image(path)?;
            let (bytes, _) = encode(&codec, &img, a.tile, false)?;
            let decoded = decompress_stream(&codec, &bytes)?;
            let bpp = bits_per_pixel(bytes.len(), img.width(), img.height());
            results.push((path, quality(&img, &decoded, Some(bpp))?));
        }
    } else {
        if a.reconstructed.len() != a.input.len() {
            return Err(CliError::Usage(format!(
                "{} --input but {} --reconstructed; pass one reconstruction per input or --model",
                a.input.len(),
                a.reconstructed.len()
            )));
        }
        if !a.container.is_empty() && a.container.len() != a.input.len() {
            return Err(CliError::Usage("pass one --container per --input, or none".into()));
        }
        for (i, path) in a.input.iter().enumerate() {
            let img = read_image(path)?;
            let recon = read_image(&a.reconstructed[i])?;
            let bpp = match a.container.get(i) {
                Some(c) => Some(bits_per_pixel(read_bytes(c)?.len(), img.width(), img.height())),
                None => None,
            };
            results.push((path, quality(&img, &recon, bpp)?));
        }
    }
    for (path, q) in &results {
        if json {
            println!("{}", quality_record(path, q));
        } else if results.len() == 1 {
            println!("{}", format_quality(q));
        } else {
            println!("{}  {}", format_quality(q), path.display());
        }
    }
    Ok(exit::OK)
}

pub fn ar_check(a: &ArCheckArgs, json: bool) -> CliResult<u8> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let report = ar::run_check(a.pixels, a.seed, a.trials)?;
    let pass = report.max_gap <= AR_TOLERANCE;
    if json {
        let mut record = serde_json::to_value(&report).expect("report serializes");
        record["pass"] = json!(pass);
        println!("{record}");
    } else {
        println!(
            "T={} trials={} seed={}: max evidence gap {:.3e}, max code-length gap {:.3e} bits, mass error {:.3e}: {}",
            report.pixels,
            report.trials,
            report.seed,
            report.max_gap,
            report.max_code_length_gap_bits,
            report.total_mass_error,
            if pass { "ok" } else { "FAILED" }
        );
    }
    Ok(if pass { exit::OK } else { exit::CHECK_FAILED })
}

pub fn init_weights(a: &InitWeightsArgs, json: bool) -> CliResult<u8> {
    let spec = NetworkSpec::with_channels(a.levels, a.hidden, a.latent)?;
    let weights = WeightStore::random(spec, a.seed)?;
    write_bytes(&a.output, &weights.to_bytes())?;
    let values: usize = weights.params().iter().map(|(_, p)| p.data.len()).sum();
    let hash = weights.hash().to_hex();
    if json {
        println!(
            "{}",
            json!({ "output": a.output, "hash": hash, "levels": a.levels, "parameters": values, "label": weights.label() })
        );
    } else {
        println!(
            "wrote {}: L={} hash {hash}, {values} parameters",
            a.output.display(),
            a.levels
        );
    }
    Ok(exit::OK)
}
