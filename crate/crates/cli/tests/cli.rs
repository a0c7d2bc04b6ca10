use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlc_core::codec::tiles::decompress_stream;
use nlc_core::codec::Codec;
use nlc_core::image::RgbImage;
use nlc_core::nn::WeightStore;
use serde_json::Value;
use tempfile::TempDir;

fn nlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlc"))
        .args(args)
        .env_remove("NLC_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// A small L=2 model and a 40x28 test image.
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        let out = nlc(&[
            "init-weights", "--output", f.s("model.nlw"), "--levels", "2", "--hidden", "8", "--latent", "10", "--seed", "3",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        f.image("img.ppm", 40, 28);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> &str {
        // leak is fine in tests; keeps call sites short
        Box::leak(self.path(name).to_str().unwrap().to_owned().into_boxed_str())
    }

    fn image(&self, name: &str, w: usize, h: usize) -> RgbImage {
        let img = RgbImage::from_fn(w, h, |x, y| [(x * 6) as u8, (y * 9) as u8, ((x * y) % 251) as u8]).unwrap();
        std::fs::write(self.path(name), img.to_ppm()).unwrap();
        img
    }

    fn compress(&self, extra: &[&str]) -> Output {
        let mut args = vec!["compress", "--model", self.s("model.nlw"), "--input", self.s("img.ppm"), "--output", self.s("img.nlc")];
        args.extend_from_slice(extra);
        nlc(&args)
    }
}

fn read_ppm(path: &Path) -> RgbImage {
    RgbImage::from_ppm(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn round_trip_preserves_dimensions_and_matches_the_library() {
    let f = Fixture::new();
    assert_eq!(code(&f.compress(&["--self-check"])), 0);
    let out = nlc(&["decompress", "--model", f.s("model.nlw"), "--input", f.s("img.nlc"), "--output", f.s("rec.ppm")]);
    assert_eq!(code(&out), 0);
    let rec = read_ppm(&f.path("rec.ppm"));
    assert_eq!((rec.width(), rec.height()), (40, 28));

    let weights = WeightStore::from_bytes(&std::fs::read(f.path("model.nlw")).unwrap()).unwrap();
    let codec = Codec::new(weights).unwrap();
    let expected = decompress_stream(&codec, &std::fs::read(f.path("img.nlc")).unwrap()).unwrap();
    assert_eq!(rec, expected);
}

#[test]
fn report_totals_equal_inspect_totals() {
    let f = Fixture::new();
    for tile in ["256", "16"] {
        let out = f.compress(&["--json", "--tile", tile]);
        assert_eq!(code(&out), 0);
        let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
        let out = nlc(&["--json", "inspect", "--input", f.s("img.nlc")]);
        assert_eq!(code(&out), 0);
        let inspect: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(report["totals"], inspect["totals"]);
        let file_len = std::fs::metadata(f.path("img.nlc")).unwrap().len();
        assert_eq!(inspect["totals"]["file_bytes"], file_len);
        let actual: u64 = report["layers"].as_array().unwrap().iter().map(|l| l["actual_bits"].as_u64().unwrap()).sum();
        assert_eq!(actual, inspect["totals"]["payload_bytes"].as_u64().unwrap() * 8);
    }
    // the text report prints the same totals line as inspect
    let text = stdout(&f.compress(&["--report"]));
    let inspect = stdout(&nlc(&["inspect", "--input", f.s("img.nlc")]));
    let totals = |s: &str| s.lines().find(|l| l.contains("container(s)")).unwrap().to_owned();
    assert_eq!(totals(&text), totals(&inspect));
}

#[test]
fn tiled_output_is_independent_of_thread_count() {
    let f = Fixture::new();
    assert_eq!(code(&f.compress(&["--tile", "16", "--threads", "1"])), 0);
    let one = std::fs::read(f.path("img.nlc")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nlc"))
        .args(["compress", "--model", f.s("model.nlw"), "--input", f.s("img.ppm"), "--output", f.s("img.nlc"), "--tile", "16"])
        .env("NLC_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(f.path("img.nlc")).unwrap(), one);
    assert_eq!(&one[..4], b"NLA1");
}

#[test]
fn error_exit_codes() {
    let f = Fixture::new();
    // missing weight file / input
    let out = nlc(&["compress", "--model", f.s("none.nlw"), "--input", f.s("img.ppm"), "--output", f.s("x")]);
    assert_eq!(code(&out), 2);
    let out = nlc(&["compress", "--model", f.s("model.nlw"), "--input", f.s("none.ppm"), "--output", f.s("x")]);
    assert_eq!(code(&out), 2);
    // tile not a multiple of the downsampling factor (8)
    assert_eq!(code(&f.compress(&["--tile", "12"])), 5);

    assert_eq!(code(&f.compress(&[])), 0);
    let bytes = std::fs::read(f.path("img.nlc")).unwrap();
    std::fs::write(f.path("cut.nlc"), &bytes[..bytes.len() - 3]).unwrap();
    let out = nlc(&["decompress", "--model", f.s("model.nlw"), "--input", f.s("cut.nlc"), "--output", f.s("x.ppm")]);
    assert_eq!(code(&out), 3);

    nlc(&["init-weights", "--output", f.s("other.nlw"), "--levels", "2", "--hidden", "8", "--latent", "10", "--seed", "4"]);
    let out = nlc(&["decompress", "--model", f.s("other.nlw"), "--input", f.s("img.nlc"), "--output", f.s("x.ppm")]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model mismatch"));

    assert_eq!(code(&nlc(&["compress", "--bogus"])), 5);
    assert_eq!(code(&nlc(&["--help"])), 0);
}

#[test]
fn eval_caption_and_json_records() {
    let f = Fixture::new();
    f.image("big.ppm", 180, 176);
    let out = nlc(&["eval", "--input", f.s("big.ppm"), "--reconstructed", f.s("big.ppm")]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "inf / 1.0000 / —");

    let out = nlc(&[
        "--json", "eval", "--input", f.s("big.ppm"), "--reconstructed", f.s("big.ppm"), "--input", f.s("img.ppm"),
        "--reconstructed", f.s("img.ppm"),
    ]);
    let lines: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["psnr"], "inf");
    assert_eq!(lines[1]["ms_ssim"], Value::Null);

    // through a model: "dd.dd / d.dddd / d.dddd"
    f.image("mid.ppm", 180, 180);
    let out = nlc(&["eval", "--input", f.s("mid.ppm"), "--model", f.s("model.nlw")]);
    assert_eq!(code(&out), 0);
    let caption = stdout(&out).trim().to_owned();
    let parts: Vec<&str> = caption.split(" / ").collect();
    assert_eq!(parts.len(), 3, "{caption}");
    assert_eq!(parts[0].split_once('.').unwrap().1.len(), 2);
    assert_eq!(parts[1].split_once('.').unwrap().1.len(), 4);
    assert_eq!(parts[2].split_once('.').unwrap().1.len(), 4);

    let out = nlc(&["eval", "--input", f.s("big.ppm"), "--reconstructed", f.s("img.ppm")]);
    assert_eq!(code(&out), 5);
}

#[test]
fn ar_check_exit_codes_and_reproducibility() {
    let a = nlc(&["ar-check", "-t", "4", "--trials", "100"]);
    assert_eq!(code(&a), 0);
    let b = nlc(&["ar-check", "-t", "4", "--trials", "100"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(code(&nlc(&["ar-check", "-t", "13"])), 5);
    let out = nlc(&["--json", "ar-check", "-t", "6", "--seed", "9", "--trials", "5"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["pixels"], 6);
}

#[test]
fn png_input_and_output() {
    let f = Fixture::new();
    f.image("src.ppm", 24, 16);
    let out = nlc(&["decompress", "--model", f.s("model.nlw"), "--input", f.s("src.ppm"), "--output", f.s("x.png")]);
    assert_eq!(code(&out), 3, "a PPM is not a container");
    std::fs::copy(f.path("src.ppm"), f.path("img.ppm")).unwrap();
    assert_eq!(code(&f.compress(&[])), 0);
    let out = nlc(&["decompress", "--model", f.s("model.nlw"), "--input", f.s("img.nlc"), "--output", f.s("rec.png")]);
    assert_eq!(code(&out), 0);
    let out = nlc(&["eval", "--input", f.s("rec.png"), "--reconstructed", f.s("rec.png")]);
    assert_eq!(stdout(&out).trim(), "inf / — / —");
    let out = nlc(&[
        "compress", "--model", f.s("model.nlw"), "--input", f.s("rec.png"), "--output", f.s("again.nlc"),
    ]);
    assert_eq!(code(&out), 0);
}
