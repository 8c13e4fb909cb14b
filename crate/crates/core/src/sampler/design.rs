//! Memoized tensor blocks and cross-products on the training data.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{tensor_product, SplineSpec};
use crate::error::Result;
use crate::sampler::block::BlockFactor;
use crate::types::ExposureSet;

/// Elementary products `X_t^T r` for one fixed vector `r`.
pub type XtMemo = HashMap<ExposureSet, DVector<f64>>;

/// Elementary blocks of a stacked design: `(subset, offset, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub blocks: Vec<(ExposureSet, usize, usize)>,
    pub width: usize,
    /// Column range of each function set within the stacked design.
    pub spans: Vec<(usize, usize)>,
}

impl Layout {
    pub fn new(sets: &[ExposureSet], df: usize) -> Self {
        let mut blocks = Vec::new();
        let mut spans = Vec::with_capacity(sets.len());
        let mut offset = 0;
        for s in sets {
            let start = offset;
            for t in s.nonempty_subsets_ordered() {
                let w = df.pow(t.len() as u32);
                blocks.push((t, offset, w));
                offset += w;
            }
            spans.push((start, offset));
        }
        Layout {
            blocks,
            width: offset,
            spans,
        }
    }
}

// Roughly 256 MB of cached cross-products before the cache is flushed.
const CROSS_CACHE_LIMIT: usize = 32 << 20;
const BLOCK_CACHE_LIMIT: usize = 32 << 20;
const FACTOR_CACHE_LIMIT: usize = 32 << 20;

/// Per-chain design cache. Values depend only on the training exposures, so
/// eviction never changes results.
pub struct DesignCache {
    df: usize,
    marginals: Vec<DMatrix<f64>>,
    blocks: HashMap<ExposureSet, Arc<DMatrix<f64>>>,
    block_floats: usize,
    cross: HashMap<(ExposureSet, ExposureSet), Arc<DMatrix<f64>>>,
    cross_floats: usize,
    factors: HashMap<Vec<ExposureSet>, Arc<BlockFactor>>,
    factor_floats: usize,
    factor_sigma_beta2: f64,
}

impl DesignCache {
    pub fn new(spec: &SplineSpec, x_raw: &DMatrix<f64>) -> Self {
        DesignCache {
            df: spec.df,
            marginals: spec.marginal_designs(x_raw),
            blocks: HashMap::new(),
            block_floats: 0,
            cross: HashMap::new(),
            cross_floats: 0,
            factors: HashMap::new(),
            factor_floats: 0,
            factor_sigma_beta2: f64::NAN,
        }
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn n(&self) -> usize {
        self.marginals.first().map_or(0, DMatrix::nrows)
    }

    pub fn block(&mut self, t: ExposureSet) -> Arc<DMatrix<f64>> {
        if let Some(b) = self.blocks.get(&t) {
            return Arc::clone(b);
        }
        let bases: Vec<&DMatrix<f64>> = t.iter().map(|j| &self.marginals[j]).collect();
        let b = Arc::new(tensor_product(&bases));
        if self.block_floats + b.len() > BLOCK_CACHE_LIMIT {
            self.blocks.clear();
            self.block_floats = 0;
        }
        self.block_floats += b.len();
        self.blocks.insert(t, Arc::clone(&b));
        b
    }

    /// `X_a^T X_b`.
    pub fn cross(&mut self, a: ExposureSet, b: ExposureSet) -> Arc<DMatrix<f64>> {
        let (lo, hi, flip) = if a.bits() <= b.bits() {
            (a, b, false)
        } else {
            (b, a, true)
        };
        let m = match self.cross.get(&(lo, hi)) {
            Some(m) => Arc::clone(m),
            None => {
                let xl = self.block(lo);
                let xh = self.block(hi);
                let m = Arc::new(xl.tr_mul(&xh));
                if self.cross_floats + m.len() > CROSS_CACHE_LIMIT {
                    self.cross.clear();
                    self.cross_floats = 0;
                }
                self.cross_floats += m.len();
                self.cross.insert((lo, hi), Arc::clone(&m));
                m
            }
        };
        if flip {
            Arc::new(m.transpose())
        } else {
            m
        }
    }

    /// Factor of `X^T X + I / sigma_beta2` for the stacked design of `sets`.
    pub fn factor(
        &mut self,
        layout: &Layout,
        sets: &[ExposureSet],
        sigma_beta2: f64,
    ) -> Result<Arc<BlockFactor>> {
        if self.factor_sigma_beta2 != sigma_beta2 {
            self.factors.clear();
            self.factor_floats = 0;
            self.factor_sigma_beta2 = sigma_beta2;
        }
        if let Some(f) = self.factors.get(sets) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(BlockFactor::new(self, layout, sets, sigma_beta2)?);
        let size = layout.width * layout.width;
        if self.factor_floats + size > FACTOR_CACHE_LIMIT {
            self.factors.clear();
            self.factor_floats = 0;
        }
        self.factor_floats += size;
        self.factors.insert(sets.to_vec(), Arc::clone(&f));
        Ok(f)
    }

    /// Gram matrix of the stacked design.
    pub fn gram(&mut self, layout: &Layout) -> DMatrix<f64> {
        let q = layout.width;
        let mut g = DMatrix::zeros(q, q);
        for (i, &(ta, oa, wa)) in layout.blocks.iter().enumerate() {
            for &(tb, ob, wb) in &layout.blocks[i..] {
                let c = self.cross(ta, tb);
                g.view_mut((oa, ob), (wa, wb)).copy_from(&*c);
                if oa != ob {
                    g.view_mut((ob, oa), (wb, wa)).copy_from(&c.transpose());
                }
            }
        }
        g
    }

    /// `X^T r` for the stacked design.
    pub fn xt_vec(&mut self, layout: &Layout, r: &DVector<f64>) -> DVector<f64> {
        self.xt_vec_memo(layout, r, &mut XtMemo::new())
    }

    /// `X^T r`, reusing elementary products stored in `memo` for this `r`.
    pub fn xt_vec_memo(
        &mut self,
        layout: &Layout,
        r: &DVector<f64>,
        memo: &mut XtMemo,
    ) -> DVector<f64> {
        let mut out = DVector::zeros(layout.width);
        for &(t, o, w) in &layout.blocks {
            let v = memo.entry(t).or_insert_with(|| self.block(t).tr_mul(r));
            out.rows_mut(o, w).copy_from(v);
        }
        out
    }

    /// `X_A beta` for one function.
    pub fn fitted(&mut self, set: ExposureSet, beta: &[f64]) -> DVector<f64> {
        let mut f = DVector::zeros(self.n());
        let mut offset = 0;
        for t in set.nonempty_subsets_ordered() {
            let x = self.block(t);
            let w = x.ncols();
            let coef = DVector::from_column_slice(&beta[offset..offset + w]);
            f.gemv(1.0, &*x, &coef, 1.0);
            offset += w;
        }
        f
    }
}
