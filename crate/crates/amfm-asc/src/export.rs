//! Plain-text and image export formats: CSV grids (T rows x F columns,
//! shortest round-trip float formatting) and 8-bit binary PGM images with the
//! min/max scale recorded in a sidecar file.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Tensor};
use std::io::Write;
use std::path::Path;

/// Write one channel of a feature map as a CSV grid of `T` rows by `F`
/// columns. Values use Rust's shortest round-trip formatting, so re-reading
/// reproduces every f64 bit-exactly.
pub fn write_grid_csv(
    path: impl AsRef<Path>,
    fm: &FeatureMap,
    batch: usize,
    channel: usize,
) -> Result<()> {
    let (_, _, t, f) = fm.dims();
    let mut out = String::new();
    for ti in 0..t {
        for fi in 0..f {
            if fi > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:?}", fm.at(batch, channel, ti, fi)));
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Read a CSV grid back as a `[1, 1, T, F]` feature map.
pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| {
                    Error::parse(format!(
                        "{}: line {}: bad float `{cell}`: {e}",
                        path.as_ref().display(),
                        ln + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::parse(format!(
                    "{}: ragged grid at line {}",
                    path.as_ref().display(),
                    ln + 1
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(format!(
            "{}: empty grid",
            path.as_ref().display()
        )));
    }
    let t = rows.len();
    let f = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    FeatureMap::new(Tensor::from_vec(vec![1, 1, t, f], data)?)
}

/// Write one channel as a binary (P5) 8-bit PGM, min-max normalized, plus a
/// `<path>.scale.txt` sidecar holding the original min and max so the image
/// stays quantitatively interpretable.
pub fn write_grid_pgm(
    path: impl AsRef<Path>,
    fm: &FeatureMap,
    batch: usize,
    channel: usize,
) -> Result<()> {
    let path = path.as_ref();
    let (_, _, t, f) = fm.dims();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ti in 0..t {
        for fi in 0..f {
            let v = fm.at(batch, channel, ti, fi);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    let mut bytes = Vec::with_capacity(t * f + 32);
    bytes.extend_from_slice(format!("P5\n{f} {t}\n255\n").as_bytes());
    for ti in 0..t {
        for fi in 0..f {
            let v = fm.at(batch, channel, ti, fi);
            let px = if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            };
            bytes.push(px);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    let sidecar = path.with_extension("scale.txt");
    std::fs::write(sidecar, format!("min {lo:?}\nmax {hi:?}\n"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("amfm_export_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(70);
        let fm = FeatureMap::randn(1, 1, 5, 7, 3.0, &mut rng);
        let p = tmp("grid.csv");
        write_grid_csv(&p, &fm, 0, 0).unwrap();
        let back = read_grid_csv(&p).unwrap();
        assert_eq!(back.dims(), (1, 1, 5, 7));
        assert_eq!(back.data(), fm.data());
    }

    #[test]
    fn pgm_has_header_and_scale_sidecar() {
        let mut rng = SeededRng::new(71);
        let fm = FeatureMap::randn(1, 1, 4, 6, 1.0, &mut rng);
        let p = tmp("grid.pgm");
        write_grid_pgm(&p, &fm, 0, 0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n6 4\n255\n"));
        assert_eq!(bytes.len(), b"P5\n6 4\n255\n".len() + 24);
        let scale = std::fs::read_to_string(tmp("grid.scale.txt")).unwrap();
        assert!(scale.starts_with("min "));
        assert!(scale.contains("\nmax "));
    }

    #[test]
    fn flat_channel_renders_black() {
        let fm = FeatureMap::new(Tensor::full(&[1, 1, 2, 2], 5.0)).unwrap();
        let p = tmp("flat.pgm");
        write_grid_pgm(&p, &fm, 0, 0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n2 2\n255\n".len();
        assert!(bytes[header..].iter().all(|&b| b == 0));
    }

    #[test]
    fn bad_csv_is_a_parse_error() {
        let p = tmp("bad.csv");
        std::fs::write(&p, "1.0,2.0\n3.0,oops\n").unwrap();
        assert!(matches!(read_grid_csv(&p), Err(Error::Parse(_))));
        std::fs::write(&p, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(read_grid_csv(&p), Err(Error::Parse(_))));
    }
}
