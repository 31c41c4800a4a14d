//! Writes seed inputs for the fuzz targets into `fuzz/corpus/<target>/`.
//!
//! cargo run -p curvirom --example fuzz_seeds [-- <corpus dir>]

use std::fs;
use std::path::{Path, PathBuf};

use curvirom::config::RunSettings;
use curvirom::dataset::{generate_lhs, GenerationConfig};
use curvirom::geometry::ParamBounds;
use curvirom::surrogate::{train_thermal, TrainConfig};

fn put(root: &Path, target: &str, name: &str, bytes: &[u8]) {
    let dir = root.join(target);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(name), bytes).unwrap();
}

fn framed(bin: &[u8], json: &[u8]) -> Vec<u8> {
    let mut v = (bin.len() as u32).to_le_bytes().to_vec();
    v.extend_from_slice(bin);
    v.extend_from_slice(json);
    v
}

fn main() {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus"));

    let cfg = GenerationConfig { levels: 2, base_dims: (4, 6), ..GenerationConfig::default() };
    let ds = generate_lhs(6, &ParamBounds::default(), 3, &cfg).unwrap();
    let sur = train_thermal(&ds, &TrainConfig::default()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    ds.save(&tmp.path().join("ds")).unwrap();
    sur.save(&tmp.path().join("sur")).unwrap();
    let read = |rel: &str| fs::read(tmp.path().join(rel)).unwrap();

    // levels 2 -> 1, base 4x6 -> (1, 3)
    let mut blob = vec![1, 1, 3];
    blob.extend(ds.samples()[0].to_blob());
    put(&root, "sample_blob", "two_levels", &blob);
    put(&root, "binio_decode", "sample", &ds.samples()[0].to_blob());
    put(&root, "binio_decode", "empty", &curvirom::binio::encode(&[]));
    put(&root, "dataset_manifest", "manifest.json", &read("ds/manifest.json"));
    put(&root, "surrogate_manifest", "manifest.json", &read("sur/manifest.json"));
    put(&root, "pod_basis", "level0", &framed(&read("sur/level0_basis.bin"), &read("sur/level0_basis.json")));
    put(&root, "gp_model", "level0_gp0", &framed(&read("sur/level0_gp0.bin"), &read("sur/level0_gp0.json")));

    put(&root, "run_config", "defaults.toml", RunSettings::default().to_toml().as_bytes());
    put(&root, "run_config", "overrides.toml", b"seed = 4\nmode = \"single\"\nleft_side = \"blend\"\nbase_dims = \"4x16\"\n");
    put(&root, "geometry_params", "list", b"125, 13, 15, 35, 50");
    put(&root, "geometry_params", "record", b"x1=120, y1=12, y2=10, y3=30, y4=40");
    put(&root, "dims", "plain", b"64x256");
    put(&root, "dims", "spaced", b" 8 X 32 ");
    println!("seeds written under {}", root.display());
}
