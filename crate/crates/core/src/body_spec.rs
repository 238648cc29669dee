//! One-line body descriptions: `ball r=1 cx=0 cy=0 cz=0`, `spheroid a=0.40825 c=6`,
//! `conehull lambda=0.1 sided=one`, `superspheroid a=1 c=3 p=4`,
//! `radialfile path=shape.csv`.
//!
//! Every kind also accepts `cx`, `cy`, `cz` and `shift` (`shift=s` moves the
//! body by `s·e₃`, `shift=x,y,z` by the given vector).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::body::{ConeSides, ConvexBody, RadialField};
use crate::error::{Error, Result};
use crate::sphere_grid::{build_grid, Vec3};

#[derive(Debug, Clone)]
pub struct BodySpec {
    pub kind: String,
    pub params: BTreeMap<String, String>,
}

impl BodySpec {
    pub fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().ok_or_else(|| Error::Parse("empty body spec".into()))?.to_ascii_lowercase();
        let mut params = BTreeMap::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{t}`")))?;
            if params.insert(k.to_ascii_lowercase(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate key `{k}`")));
            }
        }
        Ok(BodySpec { kind, params })
    }

    /// Stable identifier used in CSV rows and output file names.
    pub fn id(&self) -> String {
        let mut s = self.kind.clone();
        for (k, v) in &self.params {
            s.push(' ');
            s.push_str(k);
            s.push('=');
            s.push_str(v);
        }
        s
    }

    pub fn slug(&self) -> String {
        self.id()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect()
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.params
            .get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("`{key}={v}` is not a number"))))
            .transpose()
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.number(key)?.ok_or_else(|| Error::Parse(format!("`{}` needs `{key}=`", self.kind)))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        const COMMON: [&str; 4] = ["cx", "cy", "cz", "shift"];
        match self.params.keys().find(|k| !allowed.contains(&k.as_str()) && !COMMON.contains(&k.as_str())) {
            Some(k) => Err(Error::Parse(format!("unknown key `{k}` for `{}`", self.kind))),
            None => Ok(()),
        }
    }

    fn offset(&self) -> Result<Vec3> {
        let mut c = Vec3::new(
            self.number("cx")?.unwrap_or(0.0),
            self.number("cy")?.unwrap_or(0.0),
            self.number("cz")?.unwrap_or(0.0),
        );
        if let Some(s) = self.params.get("shift") {
            let parts: Vec<f64> = s
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad shift `{s}`"))))
                .collect::<Result<_>>()?;
            c += match parts.as_slice() {
                [z] => Vec3::new(0.0, 0.0, *z),
                [x, y, z] => Vec3::new(*x, *y, *z),
                _ => return Err(Error::Parse(format!("shift needs 1 or 3 components, got `{s}`"))),
            };
        }
        Ok(c)
    }

    /// Builds the body. `seed` drives the convexity test of sampled files.
    pub fn build(&self, seed: u64) -> Result<ConvexBody> {
        let body = match self.kind.as_str() {
            "ball" => {
                self.check_keys(&["r"])?;
                ConvexBody::ball(self.number("r")?.unwrap_or(1.0))?
            }
            "spheroid" => {
                self.check_keys(&["a", "c"])?;
                ConvexBody::spheroid(self.required("a")?, self.required("c")?)?
            }
            "conehull" => {
                self.check_keys(&["lambda", "sided"])?;
                let sides = match self.params.get("sided").map(String::as_str) {
                    None | Some("two") => ConeSides::Two,
                    Some("one") => ConeSides::One,
                    Some(s) => return Err(Error::Parse(format!("sided must be one or two, got `{s}`"))),
                };
                ConvexBody::cone_hull(self.required("lambda")?, sides)?
            }
            "superspheroid" => {
                self.check_keys(&["a", "c", "p"])?;
                ConvexBody::superspheroid(self.required("a")?, self.required("c")?, self.required("p")?)?
            }
            "radialfile" => {
                self.check_keys(&["path"])?;
                let path = self.params.get("path").ok_or_else(|| Error::Parse("radialfile needs `path=`".into()))?;
                load_radial_file(Path::new(path), seed)?
            }
            other => return Err(Error::Parse(format!("unknown body kind `{other}`"))),
        };
        let c = self.offset()?;
        Ok(if c == Vec3::zeros() { body } else { body.translated(c) })
    }
}

/// Reads `theta,phi,rho` rows sampled on a Gauss-Legendre grid (any row
/// order, optional header). The body counts as convex if it passes the
/// sampled convexity test.
pub fn load_radial_file(path: &Path, seed: u64) -> Result<ConvexBody> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let nums: Option<Vec<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        match nums {
            Some(v) if v.len() == 3 => rows.push((v[0], v[1], v[2])),
            _ if rows.is_empty() => continue,
            _ => return Err(Error::Parse(format!("bad row {:?} in {}", rec, path.display()))),
        }
    }
    let distinct = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        xs.len()
    };
    let n_theta = distinct(rows.iter().map(|r| r.0).collect());
    let n_phi = distinct(rows.iter().map(|r| r.1).collect());
    if n_theta * n_phi != rows.len() {
        return Err(Error::Parse(format!(
            "{} rows do not form a {n_theta}x{n_phi} grid",
            rows.len()
        )));
    }
    let grid = Arc::new(build_grid(n_theta, n_phi)?);
    let mut values = vec![f64::NAN; grid.len()];
    for (theta, phi, rho) in rows {
        let i = grid.theta_nodes().iter().position(|t| (t - theta).abs() < 1e-9);
        let j = grid.phi_nodes().iter().position(|p| (p - phi).abs() < 1e-9);
        match (i, j) {
            (Some(i), Some(j)) => values[grid.index(i, j)] = rho - 1.0,
            _ => {
                return Err(Error::Parse(format!(
                    "node ({theta}, {phi}) is not on the {n_theta}x{n_phi} Gauss-Legendre grid"
                )))
            }
        }
    }
    let field = RadialField::new(grid, values)?;
    let probe = ConvexBody::sampled(field.clone(), false);
    let convex = probe.convexity_check(2000, 1e-6, seed)?.pass;
    Ok(ConvexBody::sampled(field, convex))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::UNIT_VOLUME;

    #[test]
    fn parses_the_documented_forms() {
        let b = BodySpec::parse("ball r=1 cx=0 cy=0 cz=0.1").unwrap().build(42).unwrap();
        assert!(b.contains(&Vec3::new(0.0, 0.0, 1.05)).unwrap());
        let s = BodySpec::parse("spheroid a=0.40825 c=6").unwrap();
        assert_eq!(s.id(), "spheroid a=0.40825 c=6");
        assert_eq!(s.slug(), "spheroid_a_0.40825_c_6");
        let g = build_grid(16, 32).unwrap();
        assert!((s.build(42).unwrap().volume(&g).unwrap() - UNIT_VOLUME).abs() < 1e-4);
        let c = BodySpec::parse("conehull lambda=0.1 sided=one").unwrap().build(42).unwrap();
        assert!((c.radial(&Vec3::z()).unwrap() - 1.1).abs() < 1e-12);
        assert!((c.radial(&-Vec3::z()).unwrap() - 1.0).abs() < 1e-12);
        let moved = BodySpec::parse("ball r=1 shift=0.2").unwrap().build(42).unwrap();
        assert!((moved.support(&Vec3::z()).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in ["", "cube s=1", "ball r", "ball r=x", "spheroid a=1", "ball r=1 r=2", "ball q=1", "conehull lambda=0.1 sided=three", "ball r=1 shift=1,2"] {
            let r = BodySpec::parse(bad).and_then(|s| s.build(42));
            assert!(matches!(r, Err(Error::Parse(_))), "{bad}: {r:?}");
        }
        assert!(matches!(BodySpec::parse("ball r=-1").unwrap().build(42), Err(Error::InvalidBody(_))));
    }

    #[test]
    fn radial_file_round_trip() {
        let g = build_grid(12, 24).unwrap();
        let body = ConvexBody::unit_volume_spheroid(1.3).unwrap();
        let dir = std::env::temp_dir().join(format!("isoq-radial-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("shape.csv");
        let mut text = String::from("theta,phi,rho\n");
        for (i, t) in g.theta_nodes().iter().enumerate() {
            for (j, p) in g.phi_nodes().iter().enumerate() {
                let w = g.nodes()[g.index(i, j)];
                text.push_str(&format!("{t:.17e},{p:.17e},{:.17e}\n", body.radial(&w).unwrap()));
            }
        }
        std::fs::write(&path, text).unwrap();
        let spec = BodySpec::parse(&format!("radialfile path={}", path.display())).unwrap();
        let loaded = spec.build(42).unwrap();
        assert!(matches!(loaded, ConvexBody::SampledRadial { claimed_convex: true, .. }));
        let w = g.nodes()[g.index(3, 5)];
        assert!((loaded.radial(&w).unwrap() - body.radial(&w).unwrap()).abs() < 1e-12);
        std::fs::write(&path, "0.1,0.2,1.0\n0.3,0.4,1.0\n0.5,0.6,1.0\n").unwrap();
        assert!(matches!(spec.build(42), Err(Error::Parse(_))));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
