//! Synthetic dataset assembly and on-disk layout.
//!
//! A dataset directory holds `x.bct`, `z.bct`, `y.bct`, `phi_true.bct` (when
//! the generator exposes true features) and a `manifest.csv` of key/value
//! rows recording the family, true coefficients, seed, and split sizes.

use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::rng::{draw_normal, SeededRng};
use crate::simulate::{
    build_filters, generate_responses, linear_predictor, sample_gp_images, simple_nn_generate,
    MaternParams, LATTICE_DELTA, LATTICE_FOCALS, SIMPLE_NN_GAMMA,
};
use crate::tensor::Tensor;
use std::path::Path;

/// Which generator produced the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimDesign {
    /// Matern GP images on the 30x30 lattice with inverse-quadratic filters.
    Lattice,
    /// The small two-layer tanh generator over plain vector inputs.
    SimpleNn,
}

impl SimDesign {
    pub fn name(&self) -> &'static str {
        match self {
            SimDesign::Lattice => "lattice",
            SimDesign::SimpleNn => "simple-nn",
        }
    }

    pub fn parse(s: &str) -> Option<SimDesign> {
        match s.to_ascii_lowercase().as_str() {
            "lattice" => Some(SimDesign::Lattice),
            "simple-nn" | "simple_nn" | "simplenn" => Some(SimDesign::SimpleNn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub x: Tensor,
    pub z: Tensor,
    pub y: Tensor,
    pub phi_true: Option<Tensor>,
    pub family: GlmFamily,
    pub design: SimDesign,
    pub gamma: Vec<f64>,
    pub seed: u64,
    pub n_train: usize,
}

impl SimulatedDataset {
    pub fn n(&self) -> usize {
        self.x.outer()
    }

    pub fn train_test(&self) -> Result<(Tensor, Tensor, Tensor, Tensor, Tensor, Tensor)> {
        let n = self.n();
        let t = self.n_train;
        if t == 0 || t >= n {
            return Err(Error::shape("train_test", format!("split {t} of {n}")));
        }
        Ok((
            self.x.take_outer(t)?,
            self.z.take_outer(t)?,
            self.y.take_outer(t)?,
            self.x.slice_outer(t, n)?,
            self.z.slice_outer(t, n)?,
            self.y.slice_outer(t, n)?,
        ))
    }
}

pub const LATTICE_SIDE: usize = 30;

/// Matern parameters of the lattice experiments.
pub fn lattice_matern() -> MaternParams {
    MaternParams { variance: 1.0, smoothness: 0.5, range: 15.0 }
}

/// Number of filters feeding the linear predictor: count responses use the
/// first two (all four would overdisperse the intensities).
pub fn filter_count(family: GlmFamily) -> usize {
    match family {
        GlmFamily::Poisson => 2,
        _ => 4,
    }
}

/// Generates one dataset.
///
/// Lattice: GP images, standard-normal covariates `Z` (width 2), features
/// from the filter bank, responses at `g^{-1}(rowsum(Phi) + Z gamma)` with
/// `gamma = (1, 1)`. SimpleNn: the fixed tanh generator with
/// `gamma = (1, 2)` (Gaussian only).
pub fn simulate_dataset(
    family: GlmFamily,
    design: SimDesign,
    n: usize,
    n_train: usize,
    seed: u64,
) -> Result<SimulatedDataset> {
    if n < 2 || n_train == 0 || n_train >= n {
        return Err(Error::shape(
            "simulate_dataset",
            format!("need 0 < n_train < n, got {n_train} of {n}"),
        ));
    }
    let rng = SeededRng::new(seed);
    match design {
        SimDesign::Lattice => {
            let x = sample_gp_images(LATTICE_SIDE, LATTICE_SIDE, &lattice_matern(), n, &rng)?;
            let z = draw_normal(&mut rng.stream("covariates", 0), &[n, 2]);
            let c = filter_count(family);
            let bank = build_filters(LATTICE_SIDE, LATTICE_SIDE, &LATTICE_FOCALS[..c], LATTICE_DELTA)?;
            let phi = crate::simulate::true_features(&x, &bank)?;
            let gamma = vec![1.0, 1.0];
            let lp = linear_predictor(&phi, &z, &gamma)?;
            let y = generate_responses(&lp, family, &mut rng.stream("response", 0))?;
            Ok(SimulatedDataset {
                x,
                z,
                y: Tensor::new(vec![n], y)?,
                phi_true: Some(phi),
                family,
                design,
                gamma,
                seed,
                n_train,
            })
        }
        SimDesign::SimpleNn => {
            if family != GlmFamily::Gaussian {
                return Err(Error::InvalidConfig(
                    "the simple generator produces Gaussian responses".into(),
                ));
            }
            let (x, z, y) = simple_nn_generate(n, &rng)?;
            Ok(SimulatedDataset {
                x,
                z,
                y,
                phi_true: None,
                family,
                design,
                gamma: SIMPLE_NN_GAMMA.to_vec(),
                seed,
                n_train,
            })
        }
    }
}

fn write_manifest(path: &Path, ds: &SimulatedDataset) -> Result<()> {
    let mut rows = vec![
        ("key".to_string(), "value".to_string()),
        ("family".into(), ds.family.name().into()),
        ("design".into(), ds.design.name().into()),
        ("seed".into(), format!("{}", ds.seed)),
        ("n".into(), format!("{}", ds.n())),
        ("n_train".into(), format!("{}", ds.n_train)),
        ("n_test".into(), format!("{}", ds.n() - ds.n_train)),
    ];
    for (i, g) in ds.gamma.iter().enumerate() {
        rows.push((format!("gamma{}", i + 1), format!("{g}")));
    }
    let text: String = rows.into_iter().map(|(k, v)| format!("{k},{v}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn read_manifest(path: &Path) -> Result<std::collections::HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut map = std::collections::HashMap::new();
    for line in text.lines().skip(1) {
        if let Some((k, v)) = line.split_once(',') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

pub fn save_dataset(dir: &Path, ds: &SimulatedDataset) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
    crate::io::write_tensor(&dir.join("x.bct"), &ds.x)?;
    crate::io::write_tensor(&dir.join("z.bct"), &ds.z)?;
    crate::io::write_tensor(&dir.join("y.bct"), &ds.y)?;
    if let Some(phi) = &ds.phi_true {
        crate::io::write_tensor(&dir.join("phi_true.bct"), phi)?;
    }
    write_manifest(&dir.join("manifest.csv"), ds)
}

pub fn load_dataset(dir: &Path) -> Result<SimulatedDataset> {
    let manifest = read_manifest(&dir.join("manifest.csv"))?;
    let get = |k: &str| -> Result<&String> {
        manifest.get(k).ok_or_else(|| Error::Parse {
            path: dir.join("manifest.csv").display().to_string(),
            detail: format!("missing {k}"),
        })
    };
    let family = GlmFamily::parse(get("family")?).ok_or_else(|| Error::Parse {
        path: dir.display().to_string(),
        detail: "bad family".into(),
    })?;
    let design = SimDesign::parse(get("design")?).ok_or_else(|| Error::Parse {
        path: dir.display().to_string(),
        detail: "bad design".into(),
    })?;
    let seed: u64 = get("seed")?.parse().unwrap_or(0);
    let n_train: usize = get("n_train")?.parse().map_err(|_| Error::Parse {
        path: dir.display().to_string(),
        detail: "bad n_train".into(),
    })?;
    let mut gamma = Vec::new();
    let mut gi = 1;
    while let Some(v) = manifest.get(&format!("gamma{gi}")) {
        gamma.push(v.parse().map_err(|_| Error::Parse {
            path: dir.display().to_string(),
            detail: format!("bad gamma{gi}"),
        })?);
        gi += 1;
    }
    let x = crate::io::read_tensor(&dir.join("x.bct"))?;
    let z = crate::io::read_tensor(&dir.join("z.bct"))?;
    let y = crate::io::read_tensor(&dir.join("y.bct"))?;
    let phi_path = dir.join("phi_true.bct");
    let phi_true = if phi_path.exists() { Some(crate::io::read_tensor(&phi_path)?) } else { None };
    Ok(SimulatedDataset { x, z, y, phi_true, family, design, gamma, seed, n_train })
}
