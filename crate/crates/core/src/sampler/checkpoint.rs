//! Binary checkpoint format.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! magic      8 bytes  "MXSLCKPT"
//! version    u32      currently 1
//! iteration  u64      completed iterations
//! stream     u64      RNG stream
//! word_pos   u128     RNG word position
//! state      ModelState (current)
//! chain_id   u64
//! rng_seed   u64
//! saturated  u8
//! violations u64
//! n_draws    u64, then n_draws ModelState records
//! n_rows     u64, n_cols u64, then n_rows * n_cols f64 log-likelihoods
//! ```
//!
//! A `ModelState` is `p u64, k u64, df u64`, `k` active-set masks as `u128`,
//! `k` coefficient vectors (`len u64` then reals), the covariate
//! coefficients (`len u64` then reals), `sigma2 f64`, and `k` reals for tau.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::chain::Checkpoint;
use crate::types::{ChainSamples, ExposureSet, ModelState, ZetaMatrix};

const MAGIC: &[u8; 8] = b"MXSLCKPT";
const VERSION: u32 = 1;
// Upper bound on any single length field, to reject corrupt files early.
const MAX_LEN: u64 = 1 << 34;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u128(&mut self, v: u128) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn reals(&mut self, v: &[f64]) -> Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|x| self.f64(*x))
    }
    fn state(&mut self, s: &ModelState) -> Result<()> {
        self.u64(s.zeta.p() as u64)?;
        self.u64(s.zeta.k() as u64)?;
        self.u64(s.df as u64)?;
        for a in s.zeta.active_sets() {
            self.u128(a.bits())?;
        }
        for b in &s.beta {
            self.reals(b)?;
        }
        self.reals(&s.beta_c)?;
        self.f64(s.sigma2)?;
        s.tau.iter().try_for_each(|t| self.f64(*t))
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_LEN {
            return Err(Error::Checkpoint(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn state(&mut self) -> Result<ModelState> {
        let p = self.len()?;
        let k = self.len()?;
        let df = self.len()?;
        let sets = (0..k)
            .map(|_| self.u128().map(ExposureSet::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let zeta = ZetaMatrix::from_sets(p, sets).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let beta = (0..k).map(|_| self.reals()).collect::<Result<Vec<_>>>()?;
        let beta_c = self.reals()?;
        let sigma2 = self.f64()?;
        let tau = (0..k).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(ModelState {
            zeta,
            df,
            beta,
            beta_c,
            sigma2,
            tau,
        })
    }
}

pub fn write_checkpoint_to<W: Write>(out: W, cp: &Checkpoint) -> Result<()> {
    let mut w = Writer(out);
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u64(cp.iteration as u64)?;
    w.u64(cp.stream)?;
    w.u128(cp.word_pos)?;
    w.state(&cp.state)?;
    let s = &cp.samples;
    w.u64(s.chain_id as u64)?;
    w.u64(s.rng_seed)?;
    w.u8(u8::from(s.saturated))?;
    w.u64(s.violations)?;
    w.u64(s.draws.len() as u64)?;
    for d in &s.draws {
        w.state(d)?;
    }
    let cols = s.loglik.first().map_or(0, Vec::len);
    w.u64(s.loglik.len() as u64)?;
    w.u64(cols as u64)?;
    for row in &s.loglik {
        if row.len() != cols {
            return Err(Error::Checkpoint("ragged log-likelihood matrix".into()));
        }
        row.iter().try_for_each(|v| w.f64(*v))?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_checkpoint_from<R: Read>(input: R) -> Result<Checkpoint> {
    let mut r = Reader(input);
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let iteration = r.len()?;
    let stream = r.u64()?;
    let word_pos = r.u128()?;
    let state = r.state()?;
    let chain_id = r.len()?;
    let rng_seed = r.u64()?;
    let saturated = r.u8()? != 0;
    let violations = r.u64()?;
    let n_draws = r.len()?;
    let draws = (0..n_draws)
        .map(|_| r.state())
        .collect::<Result<Vec<_>>>()?;
    let rows = r.len()?;
    let cols = r.len()?;
    let loglik = (0..rows)
        .map(|_| (0..cols).map(|_| r.f64()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let samples = ChainSamples {
        chain_id,
        rng_seed,
        draws,
        loglik,
        saturated,
        violations,
    };
    samples
        .check()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(Checkpoint {
        samples,
        state,
        iteration,
        stream,
        word_pos,
    })
}

pub fn write_checkpoint(path: &Path, cp: &Checkpoint) -> Result<()> {
    write_checkpoint_to(BufWriter::new(File::create(path)?), cp)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint_from(BufReader::new(File::open(path)?))
}
