//! Exact grid simulation of the Gaussian families by Cholesky factorization,
//! plus independent Brownian drivers with a prescribed variance function.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, linalg::Cholesky};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{CovarianceKernel, GridSpec};
use crate::numeric::{stream_rng, Stream};

/// Diagonal jitter levels, relative to the mean diagonal, tried in order
/// after a failed factorization.
pub const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Lower Cholesky factor of the covariance of `(X_{1/n}, …, X_{m/n})`.
///
/// `X_0 = 0` is not part of the matrix: its row and column vanish for every
/// supported family.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    grid: GridSpec,
    kernel: CovarianceKernel,
    /// Row-major packed lower triangle, row `i` holds `i + 1` entries.
    lower: Vec<f64>,
    jitter_used: f64,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CovarianceFactor {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kernel(&self) -> &CovarianceKernel {
        &self.kernel
    }

    /// Absolute jitter added to the diagonal, 0 if none was needed.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.grid.m()
    }

    /// Entry `L[i][k]`, zero above the diagonal.
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        if k > i {
            0.0
        } else {
            self.lower[row_start(i) + k]
        }
    }

    /// Largest entry of `|L Lᵀ − Σ|` where `Σ` is the unjittered covariance.
    pub fn max_reconstruction_error(&self) -> f64 {
        let m = self.dim();
        let n = self.grid.n() as f64;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let ri = &self.lower[row_start(i)..row_start(i) + i + 1];
            for j in 0..=i {
                let rj = &self.lower[row_start(j)..row_start(j) + j + 1];
                let dot: f64 = ri[..=j].iter().zip(rj).map(|(a, b)| a * b).sum();
                let target = self.kernel.cov((i + 1) as f64 / n, (j + 1) as f64 / n);
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Draws one path from the process stream of `seed`.
    pub fn sample_path(&self, seed: u64) -> SamplePath {
        let m = self.dim();
        let mut rng = stream_rng(seed, Stream::Process);
        let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut values = Vec::with_capacity(m + 1);
        values.push(0.0);
        for i in 0..m {
            let row = &self.lower[row_start(i)..row_start(i) + i + 1];
            let x: f64 = row.iter().zip(&z).map(|(l, z)| l * z).sum();
            values.push(x);
        }
        SamplePath {
            grid: self.grid,
            values,
            seed,
        }
    }
}

/// Factorizes the grid covariance of `kernel`, escalating diagonal jitter
/// only when the plain matrix is numerically indefinite.
pub fn factorize(kernel: &CovarianceKernel, grid: &GridSpec) -> Result<CovarianceFactor> {
    let m = grid.m();
    let n = grid.n() as f64;
    let sigma = DMatrix::from_fn(m, m, |i, j| kernel.cov((i + 1) as f64 / n, (j + 1) as f64 / n));
    let mean_diag = sigma.diagonal().mean();

    let mut attempts = std::iter::once(0.0).chain(JITTER_LEVELS.iter().map(|r| r * mean_diag));
    let (chol, jitter_used) = loop {
        let Some(jitter) = attempts.next() else {
            return Err(Error::NotPositiveSemidefinite {
                kernel: kernel.to_string(),
                n: grid.n(),
                horizon: grid.horizon(),
                max_jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1] * mean_diag,
            });
        };
        let mut a = sigma.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            break (c, jitter);
        }
    };

    let l = chol.l();
    let mut lower = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        for k in 0..=i {
            lower.push(l[(i, k)]);
        }
    }
    Ok(CovarianceFactor {
        grid: *grid,
        kernel: *kernel,
        lower,
        jitter_used,
    })
}

/// One realization of a process on a [`GridSpec`], `values[j] = X_{j/n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SamplePath {
    /// Path built from explicit values; `values[0]` must be 0 and the length
    /// must match the grid.
    pub fn from_values(grid: GridSpec, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != grid.m() + 1 {
            return Err(Error::Domain(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.m() + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::Domain("paths start at 0".into()));
        }
        Ok(SamplePath { grid, values, seed })
    }

    /// `X_{⌊nt⌋/n}`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.index_of(t)?])
    }

    /// Increments `X_{(j+1)/n} − X_{j/n}` for `j < ⌊nt⌋`.
    pub fn increments(&self, t: f64) -> Result<impl Iterator<Item = f64> + '_> {
        let end = self.grid.index_of(t)?;
        Ok(self.values[..=end].windows(2).map(|w| w[1] - w[0]))
    }
}

/// A nondecreasing function of time with value 0 at the origin.
pub trait VarianceFn {
    fn variance(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> VarianceFn for F {
    fn variance(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Brownian path with `Var(B_t) = variance(t)` on the grid, drawn from the
/// driver stream of `seed` so it is independent of any process path drawn
/// with the same seed.
pub fn sample_bm<V: VarianceFn + ?Sized>(variance: &V, grid: &GridSpec, seed: u64) -> Result<SamplePath> {
    let v0 = variance.variance(0.0);
    if v0 != 0.0 {
        return Err(Error::InvalidVariance {
            from: 0.0,
            to: 0.0,
            start: 0.0,
            end: v0,
        });
    }
    let m = grid.m();
    let mut rng = stream_rng(seed, Stream::Driver);
    let mut values = Vec::with_capacity(m + 1);
    values.push(0.0);
    let mut prev = 0.0;
    let mut acc = 0.0;
    for j in 0..m {
        let t = grid.time(j + 1);
        let v = variance.variance(t);
        let dv = v - prev;
        if !(dv >= 0.0) {
            return Err(Error::InvalidVariance {
                from: grid.time(j),
                to: t,
                start: prev,
                end: v,
            });
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        acc += dv.sqrt() * z;
        values.push(acc);
        prev = v;
    }
    Ok(SamplePath { grid: *grid, values, seed })
}

const CACHE_MAGIC: &[u8; 8] = b"GPSTRATF";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FactorKey {
    family: u8,
    params: [u64; 3],
    n: usize,
    horizon: u64,
}

impl FactorKey {
    fn new(kernel: &CovarianceKernel, grid: &GridSpec) -> Self {
        let (family, params) = kernel_params(kernel);
        FactorKey {
            family,
            params: params.map(f64::to_bits),
            n: grid.n(),
            horizon: grid.horizon().to_bits(),
        }
    }

    fn file_name(&self) -> String {
        format!(
            "f{}_{:016x}_{:016x}_{:016x}_n{}_T{:016x}.v{}.bin",
            self.family, self.params[0], self.params[1], self.params[2], self.n, self.horizon, CACHE_VERSION
        )
    }
}

fn kernel_params(kernel: &CovarianceKernel) -> (u8, [f64; 3]) {
    match *kernel {
        CovarianceKernel::Fbm { hurst } => (0, [hurst, 1.0, 0.0]),
        CovarianceKernel::Bbm { hurst, k } => (1, [hurst, k, 0.0]),
        CovarianceKernel::ExtBbm { hurst, k } => (2, [hurst, k, 0.0]),
        CovarianceKernel::Sfbm { h } => (3, [0.0, 0.0, h]),
    }
}

/// Writes a factor in the cache format: magic `GPSTRATF`, version `u32`,
/// family `u8`, then `H, K, h` as `f64`, `n` as `u64`, `T` as `f64`, `m` as
/// `u64`, jitter as `f64`, and the packed lower triangle row by row. All
/// numbers little-endian.
pub fn write_factor<W: Write>(factor: &CovarianceFactor, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Cache(e.to_string());
    let (family, params) = kernel_params(&factor.kernel);
    out.write_all(CACHE_MAGIC).map_err(io)?;
    out.write_all(&CACHE_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&[family]).map_err(io)?;
    for p in params {
        out.write_all(&p.to_le_bytes()).map_err(io)?;
    }
    out.write_all(&(factor.grid.n() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&factor.grid.horizon().to_le_bytes()).map_err(io)?;
    out.write_all(&(factor.grid.m() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&factor.jitter_used.to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(factor.lower.len() * 8);
    for v in &factor.lower {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io)
}

struct ByteCursor<'a>(&'a [u8]);

impl<'a> ByteCursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.0.len() < len {
            return Err(Error::Cache("truncated factor file".into()));
        }
        let (head, tail) = self.0.split_at(len);
        self.0 = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a factor written by [`write_factor`].
pub fn read_factor<R: Read>(mut input: R) -> Result<CovarianceFactor> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::Cache(e.to_string()))?;
    let mut cur = ByteCursor(&bytes);
    if cur.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let family = cur.take(1)?[0];
    let (p0, p1, p2) = (cur.f64()?, cur.f64()?, cur.f64()?);
    let n = cur.u64()? as usize;
    let horizon = cur.f64()?;
    let m = cur.u64()? as usize;
    let jitter_used = cur.f64()?;
    let kernel = match family {
        0 => CovarianceKernel::fbm(p0)?,
        1 => CovarianceKernel::bbm(p0, p1)?,
        2 => CovarianceKernel::ext_bbm(p0, p1)?,
        3 => CovarianceKernel::sfbm(p2)?,
        other => return Err(Error::Cache(format!("unknown family tag {other}"))),
    };
    let grid = GridSpec::new(n, horizon)?;
    if grid.m() != m {
        return Err(Error::Cache("grid size mismatch".into()));
    }
    let raw = cur.take(m * (m + 1) / 2 * 8)?;
    let lower = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(CovarianceFactor {
        grid,
        kernel,
        lower,
        jitter_used,
    })
}

/// Memoizes factors by `(family, parameters, n, T)`, optionally persisting
/// them to a directory.
#[derive(Debug, Default)]
pub struct FactorCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<FactorKey, Arc<CovarianceFactor>>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref()).map_err(|e| Error::Cache(e.to_string()))?;
        Ok(FactorCache {
            dir: Some(dir.as_ref().to_path_buf()),
            memory: Mutex::default(),
        })
    }

    pub fn get(&self, kernel: &CovarianceKernel, grid: &GridSpec) -> Result<Arc<CovarianceFactor>> {
        let key = FactorKey::new(kernel, grid);
        if let Some(f) = self.memory.lock().unwrap().get(&key) {
            return Ok(Arc::clone(f));
        }
        let factor = match self.load(&key)? {
            Some(f) => f,
            None => {
                let f = factorize(kernel, grid)?;
                self.store(&key, &f)?;
                f
            }
        };
        let factor = Arc::new(factor);
        self.memory.lock().unwrap().insert(key, Arc::clone(&factor));
        Ok(factor)
    }

    fn load(&self, key: &FactorKey) -> Result<Option<CovarianceFactor>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(key.file_name());
        match fs::File::open(&path) {
            Ok(file) => read_factor(std::io::BufReader::new(file)).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Cache(format!("{}: {e}", path.display()))),
        }
    }

    fn store(&self, key: &FactorKey, factor: &CovarianceFactor) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(key.file_name());
        let tmp = path.with_extension("tmp");
        let file = fs::File::create(&tmp).map_err(|e| Error::Cache(e.to_string()))?;
        let mut w = std::io::BufWriter::new(file);
        write_factor(factor, &mut w)?;
        w.flush().map_err(|e| Error::Cache(e.to_string()))?;
        drop(w);
        fs::rename(&tmp, &path).map_err(|e| Error::Cache(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::numeric::derive_seed;

    fn reference_kernels() -> Vec<CovarianceKernel> {
        vec![
            CovarianceKernel::fbm(1.0 / 6.0).unwrap(),
            CovarianceKernel::bbm(0.25, 2.0 / 3.0).unwrap(),
            CovarianceKernel::ext_bbm(1.0 / 9.0, 1.5).unwrap(),
            CovarianceKernel::sfbm(1.0 / 3.0).unwrap(),
        ]
    }

    fn sample_var(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn scalar_factors() {
        let bm = CovarianceKernel::fbm(0.5).unwrap();
        let f = factorize(&bm, &GridSpec::new(1, 1.0).unwrap()).unwrap();
        assert_eq!(f.dim(), 1);
        assert_relative_eq!(f.entry(0, 0), 1.0, max_relative = 1e-15);
        assert_eq!(f.jitter_used(), 0.0);

        for kernel in reference_kernels() {
            let f = factorize(&kernel, &GridSpec::new(4, 0.25).unwrap()).unwrap();
            assert_relative_eq!(
                f.entry(0, 0),
                kernel.eval_r(0.25, 0.25).unwrap().sqrt(),
                max_relative = 1e-14
            );
        }

        let fbm = CovarianceKernel::fbm(1.0 / 6.0).unwrap();
        let f = factorize(&fbm, &GridSpec::new(2, 1.0).unwrap()).unwrap();
        assert_relative_eq!(f.entry(0, 0).powi(2), 2f64.powf(-1.0 / 3.0), max_relative = 1e-14);
    }

    #[test]
    fn reconstruction_for_reference_kernels() {
        let grid = GridSpec::new(64, 1.0).unwrap();
        for kernel in reference_kernels() {
            let f = factorize(&kernel, &grid).unwrap();
            let max_diag = (1..=64)
                .map(|i| kernel.eval_r(i as f64 / 64.0, i as f64 / 64.0).unwrap())
                .fold(0.0, f64::max);
            let err = f.max_reconstruction_error();
            assert!(err < 1e-8 * max_diag, "{kernel}: error {err}, jitter {}", f.jitter_used());
        }
    }

    #[test]
    fn paths_are_deterministic_and_start_at_zero() {
        let f = factorize(&CovarianceKernel::sfbm(1.0 / 3.0).unwrap(), &GridSpec::new(32, 2.0).unwrap()).unwrap();
        let a = f.sample_path(42);
        let b = f.sample_path(42);
        assert_eq!(a, b);
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values.len(), 65);
        assert_ne!(a.values, f.sample_path(43).values);
    }

    #[test]
    fn brownian_terminal_variance() {
        let f = factorize(&CovarianceKernel::fbm(0.5).unwrap(), &GridSpec::new(1000, 1.0).unwrap()).unwrap();
        let xs: Vec<f64> = (0..10_000)
            .map(|i| *f.sample_path(derive_seed(1, 0, i)).values.last().unwrap())
            .collect();
        let v = sample_var(&xs);
        assert!((v - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn rough_fbm_terminal_mean() {
        let f = factorize(&CovarianceKernel::fbm(1.0 / 6.0).unwrap(), &GridSpec::new(100, 1.0).unwrap()).unwrap();
        let xs: Vec<f64> = (0..10_000)
            .map(|i| *f.sample_path(derive_seed(2, 0, i)).values.last().unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.04, "mean {mean}");
    }

    #[test]
    fn empirical_covariance_matches_kernel() {
        let grid = GridSpec::new(16, 1.0).unwrap();
        let idx = [4usize, 8, 16];
        for kernel in reference_kernels() {
            let f = factorize(&kernel, &grid).unwrap();
            let draws: Vec<[f64; 3]> = (0..20_000)
                .map(|i| {
                    let p = f.sample_path(derive_seed(3, 0, i));
                    [p.values[idx[0]], p.values[idx[1]], p.values[idx[2]]]
                })
                .collect();
            for a in 0..3 {
                for b in 0..3 {
                    let emp = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / draws.len() as f64;
                    let r = kernel
                        .eval_r(idx[a] as f64 / 16.0, idx[b] as f64 / 16.0)
                        .unwrap();
                    let ok = if r.abs() < 0.1 {
                        (emp - r).abs() < 0.02
                    } else {
                        (emp - r).abs() < 0.05 * r.abs()
                    };
                    assert!(ok, "{kernel}: cov[{a}][{b}] = {emp}, expected {r}");
                }
            }
        }
    }

    #[test]
    fn bm_driver() {
        let grid = GridSpec::new(1, 1.0).unwrap();
        let zero = sample_bm(&|_t: f64| 0.0, &grid, 5).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));

        let xs: Vec<f64> = (0..10_000)
            .map(|i| sample_bm(&|t: f64| t, &grid, derive_seed(4, 0, i)).unwrap().values[1])
            .collect();
        assert!((sample_var(&xs) - 1.0).abs() < 0.05);

        let g = GridSpec::new(10, 1.0).unwrap();
        let c = 0.9;
        let incs: Vec<f64> = (0..5000)
            .flat_map(|i| {
                let p = sample_bm(&|t: f64| c * t, &g, derive_seed(5, 0, i)).unwrap();
                p.values.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
            })
            .collect();
        assert!((sample_var(&incs) - c / 10.0).abs() < 0.004);

        let err = sample_bm(&|t: f64| if t > 0.5 { 0.1 } else { t }, &g, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidVariance { .. }));
    }

    #[test]
    fn process_and_driver_streams_are_uncorrelated() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let f = factorize(&CovarianceKernel::fbm(1.0 / 6.0).unwrap(), &grid).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..10_000 {
            let seed = derive_seed(6, 0, i);
            let x = *f.sample_path(seed).values.last().unwrap();
            let y = sample_bm(&|t: f64| t, &grid, seed).unwrap().values[8];
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 0.03, "corr {corr}");
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kernel = CovarianceKernel::bbm(0.25, 2.0 / 3.0).unwrap();
        let grid = GridSpec::new(12, 1.5).unwrap();
        let cache = FactorCache::with_dir(dir.path()).unwrap();
        let a = cache.get(&kernel, &grid).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);

        let fresh = FactorCache::with_dir(dir.path()).unwrap();
        let b = fresh.get(&kernel, &grid).unwrap();
        assert_eq!(a.lower, b.lower);
        assert_eq!(a.sample_path(9), b.sample_path(9));

        let mut bytes = Vec::new();
        write_factor(&a, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"GPSTRATF");
        bytes[8] = 9;
        assert!(read_factor(&bytes[..]).is_err());
        assert!(read_factor(&bytes[..20]).is_err());
    }
}
