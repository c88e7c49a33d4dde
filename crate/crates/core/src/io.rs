//! On-disk formats (cube, factors, kernel bank), solver config files, and
//! atomic file writes. Binary layouts are little-endian with f64 payloads.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::fourier::KernelBank;
use crate::objective::RegWeights;
use crate::solver::{SolveReport, SolverConfig};
use crate::tensor::{CpdFactors, HsiCube};

const CUBE_MAGIC: &[u8; 4] = b"HSC1";
const FACTOR_MAGIC: &[u8; 4] = b"HSF1";
const KERNEL_MAGIC: &[u8; 4] = b"HSK1";
const DTYPE_F64: u8 = 2;

/// Writes `bytes` to `path` through a temp file in the same directory plus
/// an atomic rename, so readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn push_dim(bytes: &mut Vec<u8>, value: usize, what: &str) -> Result<()> {
    let v = u32::try_from(value)
        .map_err(|_| Error::InvalidArgument(format!("{} {} does not fit in u32", what, value)))?;
    bytes.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Reader { path, bytes, at: 0 }
    }

    fn fail<T>(&self, detail: impl Into<String>) -> Result<T> {
        Err(Error::format(self.path, detail.into()))
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.at + len > self.bytes.len() {
            return self.fail(format!(
                "truncated: wanted {} bytes at offset {}, file has {}",
                len,
                self.at,
                self.bytes.len()
            ));
        }
        let out = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4], kind: &str) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            return self.fail(format!(
                "bad magic {:?}, expected {:?} ({} file)",
                got, expected, kind
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()? as usize;
        if v == 0 {
            return self.fail(format!("{} must be >= 1", what));
        }
        Ok(v)
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn done(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return self.fail(format!(
                "{} trailing bytes after the payload",
                self.bytes.len() - self.at
            ));
        }
        Ok(())
    }
}

/// Cube file: magic "HSC1", P, Q, N as u32 LE, one dtype byte (2 = f64),
/// then the voxels slice-major (band, then row, then column), each f64 LE.
pub fn write_cube(path: &Path, cube: &HsiCube<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(17 + 8 * cube.values().len());
    bytes.extend_from_slice(CUBE_MAGIC);
    push_dim(&mut bytes, cube.p(), "P")?;
    push_dim(&mut bytes, cube.q(), "Q")?;
    push_dim(&mut bytes, cube.n(), "N")?;
    bytes.push(DTYPE_F64);
    for v in cube.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_cube(path: &Path) -> Result<HsiCube<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(path, &bytes);
    r.magic(CUBE_MAGIC, "cube")?;
    let p = r.dim("P")?;
    let q = r.dim("Q")?;
    let n = r.dim("N")?;
    let dtype = r.take(1)?[0];
    if dtype != DTYPE_F64 {
        return r.fail(format!(
            "unsupported dtype {}, only 2 (f64) is defined",
            dtype
        ));
    }
    let count = p
        .checked_mul(q)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let values = r.f64s(count)?;
    r.done()?;
    HsiCube::from_vec(p, q, n, values)
}

/// Factor file: magic "HSF1", P, Q, N, R as u32 LE, then A (P×R), B (Q×R),
/// C (N×R), each column-major, each entry f64 LE.
pub fn write_factors(path: &Path, factors: &CpdFactors<f64>) -> Result<()> {
    let total = (factors.p() + factors.q() + factors.n()) * factors.rank();
    let mut bytes = Vec::with_capacity(20 + 8 * total);
    bytes.extend_from_slice(FACTOR_MAGIC);
    push_dim(&mut bytes, factors.p(), "P")?;
    push_dim(&mut bytes, factors.q(), "Q")?;
    push_dim(&mut bytes, factors.n(), "N")?;
    push_dim(&mut bytes, factors.rank(), "R")?;
    for m in [&factors.a, &factors.b, &factors.c] {
        push_matrix_colmajor(&mut bytes, m);
    }
    write_atomic(path, &bytes)
}

pub fn read_factors(path: &Path) -> Result<CpdFactors<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(path, &bytes);
    r.magic(FACTOR_MAGIC, "factor")?;
    let p = r.dim("P")?;
    let q = r.dim("Q")?;
    let n = r.dim("N")?;
    let rank = r.dim("R")?;
    let a = read_matrix_colmajor(&mut r, p, rank)?;
    let b = read_matrix_colmajor(&mut r, q, rank)?;
    let c = read_matrix_colmajor(&mut r, n, rank)?;
    r.done()?;
    CpdFactors::new(a, b, c)
}

fn push_matrix_colmajor(bytes: &mut Vec<u8>, m: &Array2<f64>) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            bytes.extend_from_slice(&m[[r, c]].to_le_bytes());
        }
    }
}

fn read_matrix_colmajor(r: &mut Reader<'_>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(r.path, "matrix dimensions overflow"))?;
    let values = r.f64s(count)?;
    let mut m = Array2::zeros((rows, cols));
    let mut it = values.into_iter();
    for c in 0..cols {
        for row in 0..rows {
            m[[row, c]] = it.next().expect("count bytes read");
        }
    }
    Ok(m)
}

/// Kernel-bank file: magic "HSK1", P, Q, N as u32 LE, then N centered P×Q
/// kernel planes row-major, each entry f64 LE. OTFs are recomputed on load.
pub fn write_kernels(path: &Path, bank: &KernelBank<f64>) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 8 * bank.p() * bank.q() * bank.n());
    bytes.extend_from_slice(KERNEL_MAGIC);
    push_dim(&mut bytes, bank.p(), "P")?;
    push_dim(&mut bytes, bank.q(), "Q")?;
    push_dim(&mut bytes, bank.n(), "N")?;
    for i in 0..bank.n() {
        for v in bank.kernel(i).iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn read_kernels(path: &Path) -> Result<KernelBank<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(path, &bytes);
    r.magic(KERNEL_MAGIC, "kernel bank")?;
    let p = r.dim("P")?;
    let q = r.dim("Q")?;
    let n = r.dim("N")?;
    let per_plane = p
        .checked_mul(q)
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let mut planes = Vec::with_capacity(n);
    for _ in 0..n {
        let values = r.f64s(per_plane)?;
        planes.push(Array2::from_shape_vec((p, q), values).expect("length checked"));
    }
    r.done()?;
    KernelBank::from_padded_planes(planes)
}

const CONFIG_KEYS: [&str; 13] = [
    "rank",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda_a",
    "lambda_b",
    "beta",
    "eta",
    "epsilon",
    "max_iter",
    "max_backtrack",
    "seed",
    "init_scale",
];

/// Parses the flat `key = value` solver-config format. `#` starts a comment;
/// blank lines are ignored. Every key must appear exactly once:
/// rank, lambda1, lambda2, lambda3, lambda_a, lambda_b, beta, eta, epsilon,
/// max_iter, max_backtrack, seed, init_scale. `init_scale` accepts a number
/// or the literal `auto`.
pub fn parse_config(text: &str) -> Result<SolverConfig<f64>> {
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!(
                "line {}: unknown key `{}`",
                lineno + 1,
                key
            )));
        }
        if seen.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{}`",
                lineno + 1,
                key
            )));
        }
        if value.is_empty() {
            return Err(Error::Config(format!(
                "line {}: key `{}` has no value",
                lineno + 1,
                key
            )));
        }
        seen.push((key, value));
    }
    for key in CONFIG_KEYS {
        if !seen.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("missing key `{}`", key)));
        }
    }

    let get = |key: &str| -> &str {
        seen.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("presence checked")
    };
    let float = |key: &str| -> Result<f64> {
        get(key)
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("key `{}`: `{}` is not a number", key, get(key))))
    };
    let integer = |key: &str| -> Result<u64> {
        get(key)
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("key `{}`: `{}` is not an integer", key, get(key))))
    };

    let init_scale = match get("init_scale") {
        "auto" => None,
        other => Some(other.parse::<f64>().map_err(|_| {
            Error::Config(format!(
                "key `init_scale`: `{}` is neither a number nor `auto`",
                other
            ))
        })?),
    };

    let config = SolverConfig {
        rank: integer("rank")? as usize,
        reg: RegWeights {
            lambda1: float("lambda1")?,
            lambda2: float("lambda2")?,
            lambda3: float("lambda3")?,
            lambda_a: float("lambda_a")?,
            lambda_b: float("lambda_b")?,
        },
        beta: float("beta")?,
        eta: float("eta")?,
        epsilon: float("epsilon")?,
        max_iter: integer("max_iter")? as usize,
        max_backtrack: integer("max_backtrack")? as usize,
        seed: integer("seed")?,
        init_scale,
    };
    config
        .validate()
        .map_err(|e| Error::Config(format!("invalid config: {}", e)))?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<SolverConfig<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}

/// Renders a per-iteration trace as CSV: one row per iteration with the
/// objective, the three accepted steps, and the three shrink counts.
pub fn trace_csv(report: &SolveReport<f64>) -> String {
    let mut out = String::from("iter,objective,c,d,e,backtracks_a,backtracks_b,backtracks_c\n");
    for (i, ((obj, steps), bts)) in report
        .objective_trace
        .iter()
        .zip(&report.step_trace)
        .zip(&report.backtrack_counts)
        .enumerate()
    {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{},{},{}\n",
            i + 1,
            obj,
            steps[0],
            steps[1],
            steps[2],
            bts[0],
            bts[1],
            bts[2]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{degrade, synth_lowrank, DegradationSpec};
    use tempfile::tempdir;

    #[test]
    fn cube_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cube.hsc");
        let (cube, _) = synth_lowrank::<f64>(7, 5, 3, 2, 31, 1).unwrap();
        write_cube(&path, &cube).unwrap();
        let back = read_cube(&path).unwrap();
        assert_eq!(cube.values(), back.values());
        assert_eq!((back.p(), back.q(), back.n()), (7, 5, 3));
        // exact size: magic + dims + dtype byte + payload
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 17 + 8 * 7 * 5 * 3);
    }

    #[test]
    fn factor_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("factors.hsf");
        let (_, factors) = synth_lowrank::<f64>(6, 4, 3, 2, 32, 1).unwrap();
        write_factors(&path, &factors).unwrap();
        let back = read_factors(&path).unwrap();
        assert_eq!(factors.a, back.a);
        assert_eq!(factors.b, back.b);
        assert_eq!(factors.c, back.c);
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 20 + 8 * ((6 + 4 + 3) * 2) as u64);
    }

    #[test]
    fn factor_payload_is_column_major() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("factors.hsf");
        let factors = CpdFactors::new(
            ndarray::array![[1.0, 3.0], [2.0, 4.0]],
            ndarray::array![[5.0, 6.0]],
            ndarray::array![[7.0, 8.0]],
        )
        .unwrap();
        write_factors(&path, &factors).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let floats: Vec<f64> = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        // A column 0, A column 1, then B, then C
        assert_eq!(floats, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn kernel_round_trip_preserves_planes_and_otfs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bank.hsk");
        let (clean, _) = synth_lowrank::<f64>(8, 8, 3, 2, 33, 1).unwrap();
        let spec = DegradationSpec {
            kernel_size: 3,
            kernel_sigma: 1.0,
            noise_sigma: 0.0,
            seed: 33,
            spectrally_invariant: true,
        };
        let (_, bank) = degrade(&clean, &spec).unwrap();
        write_kernels(&path, &bank).unwrap();
        let back = read_kernels(&path).unwrap();
        assert_eq!((back.p(), back.q(), back.n()), (8, 8, 3));
        for i in 0..3 {
            assert_eq!(bank.kernel(i), back.kernel(i));
            let diff = bank
                .otf(i)
                .iter()
                .zip(back.otf(i).iter())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn corrupt_files_are_rejected_with_format_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.hsc");

        // wrong magic
        write_atomic(&path, b"NOPE").unwrap();
        assert!(matches!(read_cube(&path), Err(Error::Format { .. })));

        // truncated payload
        let (cube, _) = synth_lowrank::<f64>(4, 4, 2, 1, 34, 1).unwrap();
        write_cube(&path, &cube).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 9);
        write_atomic(&path, &bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::Format { .. })));

        // bad dtype
        write_cube(&path, &cube).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[16] = 1;
        write_atomic(&path, &bytes).unwrap();
        let err = read_cube(&path).unwrap_err();
        assert!(err.to_string().contains("dtype"));

        // trailing garbage
        write_cube(&path, &cube).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 4]);
        write_atomic(&path, &bytes).unwrap();
        assert!(matches!(read_cube(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_cube(Path::new("/nonexistent/cube.hsc")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/cube.hsc"));
    }

    #[test]
    fn atomic_write_replaces_existing_content() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("file.bin");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
    }

    const GOOD_CONFIG: &str = "\
# solver settings
rank = 3
lambda1 = 1e-6
lambda2 = 1e-6
lambda3 = 1e-6
lambda_a = 1e-4   # TV on A
lambda_b = 1e-4
beta = 0.5
eta = 0.8
epsilon = 1e-6
max_iter = 500
max_backtrack = 60
seed = 42
init_scale = auto
";

    #[test]
    fn config_parses_with_comments_and_auto_scale() {
        let config = parse_config(GOOD_CONFIG).unwrap();
        assert_eq!(config.rank, 3);
        assert_eq!(config.seed, 42);
        assert_eq!(config.max_iter, 500);
        assert_eq!(config.reg.lambda_a, 1e-4);
        assert!(config.init_scale.is_none());
    }

    #[test]
    fn config_accepts_numeric_init_scale() {
        let text = GOOD_CONFIG.replace("init_scale = auto", "init_scale = 0.25");
        let config = parse_config(&text).unwrap();
        assert_eq!(config.init_scale, Some(0.25));
    }

    #[test]
    fn config_missing_key_names_it() {
        let text = GOOD_CONFIG.replace("seed = 42\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "got: {}", err);
    }

    #[test]
    fn config_unknown_key_names_it() {
        let text = format!("{}momentum = 0.9\n", GOOD_CONFIG);
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("momentum"), "got: {}", err);
    }

    #[test]
    fn config_duplicate_key_is_rejected() {
        let text = format!("{}rank = 4\n", GOOD_CONFIG);
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "got: {}", err);
    }

    #[test]
    fn config_bad_number_is_rejected() {
        let text = GOOD_CONFIG.replace("beta = 0.5", "beta = fast");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("beta"), "got: {}", err);
    }

    #[test]
    fn config_invalid_semantics_are_rejected() {
        let text = GOOD_CONFIG.replace("beta = 0.5", "beta = 1.5");
        assert!(parse_config(&text).is_err());
        let text = GOOD_CONFIG.replace("rank = 3", "rank = 0");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn config_read_reports_path() {
        let err = read_config(Path::new("/nonexistent/solver.conf")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/solver.conf"));
    }

    #[test]
    fn trace_csv_has_header_and_one_row_per_iteration() {
        let (clean, _) = synth_lowrank::<f64>(6, 6, 2, 1, 35, 1).unwrap();
        let spec = DegradationSpec {
            kernel_size: 3,
            kernel_sigma: 1.0,
            noise_sigma: 0.0,
            seed: 35,
            spectrally_invariant: true,
        };
        let (observed, bank) = degrade(&clean, &spec).unwrap();
        let mut config = SolverConfig::new(1);
        config.max_iter = 4;
        config.epsilon = 1e-15;
        let report = crate::solver::solve(&observed, &bank, &config).unwrap();
        let csv = trace_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "iter,objective,c,d,e,backtracks_a,backtracks_b,backtracks_c"
        );
        assert_eq!(lines.len(), 1 + report.iterations_run);
        assert!(lines[1].starts_with("1,"));
    }
}
