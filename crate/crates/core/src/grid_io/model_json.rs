//! Model JSON:
//!
//! ```json
//! {"n_samples": 64, "target_p": 0.015625,
//!  "components": [{"pi": 0.5, "mu": [x, y], "sigma": [[a, b], [b, c]]}]}
//! ```
//!
//! Keys are written in that order and every real with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gauss2::{GaussComponent, MixtureModel, SymMat2, Vec2};

use super::fmt_real;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub n_samples: usize,
    pub target_p: f64,
    pub model: MixtureModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n_samples: usize,
    target_p: f64,
    components: Vec<RawComponent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    pi: f64,
    mu: [f64; 2],
    sigma: [[f64; 2]; 2],
}

pub fn model_to_json(file: &ModelFile) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"n_samples\": {},", file.n_samples);
    let _ = writeln!(out, "  \"target_p\": {},", fmt_real(file.target_p));
    out.push_str("  \"components\": [");
    for (m, c) in file.model.components.iter().enumerate() {
        out.push_str(if m == 0 { "\n" } else { ",\n" });
        let _ = write!(
            out,
            "    {{\"pi\": {}, \"mu\": [{}, {}], \"sigma\": [[{}, {}], [{}, {}]]}}",
            fmt_real(c.weight),
            fmt_real(c.mean.x),
            fmt_real(c.mean.y),
            fmt_real(c.cov.a),
            fmt_real(c.cov.b),
            fmt_real(c.cov.b),
            fmt_real(c.cov.c)
        );
    }
    out.push_str("\n  ]\n}\n");
    out
}

pub fn model_from_json(text: &str, path: &Path) -> Result<ModelFile> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let mut components = Vec::with_capacity(raw.components.len());
    for (m, c) in raw.components.iter().enumerate() {
        if c.sigma[0][1] != c.sigma[1][0] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("component {m}: sigma is not symmetric"),
            });
        }
        components.push(GaussComponent::new(
            c.pi,
            Vec2::new(c.mu[0], c.mu[1]),
            SymMat2::new(c.sigma[0][0], c.sigma[0][1], c.sigma[1][1]),
        ));
    }
    Ok(ModelFile {
        n_samples: raw.n_samples,
        target_p: raw.target_p,
        model: MixtureModel::new(components)?,
    })
}

pub fn write_model(file: &ModelFile, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(file)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_file() -> ModelFile {
        ModelFile {
            n_samples: 3,
            target_p: 1.0 / 3.0,
            model: MixtureModel::new(vec![
                GaussComponent::new(0.1, Vec2::new(0.1, -2.5e-7), SymMat2::new(1e-6, -3e-7, 2e-6)),
                GaussComponent::new(0.9, Vec2::new(1.0 / 7.0, 3.0), SymMat2::new(0.25, 0.0, 0.5)),
            ])
            .unwrap(),
        }
    }

    #[test]
    fn reserialization_is_bit_identical() {
        let text = model_to_json(&sample_file());
        let back = model_from_json(&text, Path::new("m.json")).unwrap();
        assert_eq!(back, sample_file());
        assert_eq!(model_to_json(&back), text);
        assert!(text.starts_with("{\n  \"n_samples\": 3,\n  \"target_p\": 3.3333333333333331e-1,"));
    }

    #[test]
    fn malformed_input_reports_line() {
        let text = "{\n  \"n_samples\": 3,\n  \"target_p\": oops\n}";
        match model_from_json(text, Path::new("bad.json")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let asym = r#"{"n_samples": 1, "target_p": 0.5, "components": [{"pi": 1.0, "mu": [0, 0], "sigma": [[1, 0.1], [0.2, 1]]}]}"#;
        assert!(model_from_json(asym, Path::new("a.json")).is_err());
        let unnormalized = r#"{"n_samples": 1, "target_p": 0.5, "components": [{"pi": 0.5, "mu": [0, 0], "sigma": [[1, 0], [0, 1]]}]}"#;
        assert!(model_from_json(unnormalized, Path::new("u.json")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(
            w in 0.01f64..0.99,
            mx in -1e3f64..1e3, my in -1e3f64..1e3,
            a in 1e-8f64..10.0, c in 1e-8f64..10.0, rho in -0.99f64..0.99,
        ) {
            let b = rho * (a * c).sqrt();
            let file = ModelFile {
                n_samples: 2,
                target_p: w,
                model: MixtureModel {
                    components: vec![
                        GaussComponent::new(w, Vec2::new(mx, my), SymMat2::new(a, b, c)),
                        GaussComponent::new(1.0 - w, Vec2::new(my, mx), SymMat2::new(c, -b, a)),
                    ],
                },
            };
            let text = model_to_json(&file);
            let back = model_from_json(&text, Path::new("p.json")).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(model_to_json(&back), text);
        }
    }
}
