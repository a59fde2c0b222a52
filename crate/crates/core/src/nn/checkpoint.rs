//! Binary parameter checkpoints: names, shapes, values and optimizer state.

use super::optim::{AmsGrad, AmsGradConfig, MomentState};
use super::tape::{Mat, ParamStore};
use crate::error::{PhriError, Result};
use crate::snapshot::{read_file, Reader, Writer};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PHRIPRM\0";
const VERSION: u32 = 1;

fn write_mat(w: &mut Writer, m: &Mat) {
    w.usize(m.nrows());
    w.usize(m.ncols());
    w.f64s(m.as_standard_layout().as_slice().unwrap());
}

fn read_mat(r: &mut Reader<'_>, path: &Path) -> Result<Mat> {
    let rows = r.usize()?;
    let cols = r.usize()?;
    let vals = r.f64s()?;
    Mat::from_shape_vec((rows, cols), vals)
        .map_err(|e| PhriError::format(path, format!("bad matrix shape: {e}")))
}

pub fn save_checkpoint(path: &Path, params: &ParamStore, opt: Option<&AmsGrad>) -> Result<()> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.usize(params.len());
    for (name, value) in params.names().iter().zip(params.values()) {
        w.str(name);
        write_mat(&mut w, value);
    }
    match opt {
        None => w.u8(0),
        Some(o) => {
            w.u8(1);
            w.f64(o.config.lr);
            w.f64(o.config.beta1);
            w.f64(o.config.beta2);
            w.f64(o.config.eps);
            for s in &o.state {
                w.u64(s.steps);
                write_mat(&mut w, &s.m);
                write_mat(&mut w, &s.v);
                write_mat(&mut w, &s.v_max);
            }
        }
    }
    w.write_to(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Option<AmsGrad>)> {
    let bytes = read_file(path)?;
    let (mut r, version) = Reader::open(&bytes, MAGIC, path)?;
    if version != VERSION {
        return Err(PhriError::format(path, format!("unsupported version {version}")));
    }
    let n = r.usize()?;
    let mut params = ParamStore::new();
    for _ in 0..n {
        let name = r.str()?;
        let value = read_mat(&mut r, path)?;
        params.add(name, value);
    }
    let opt = match r.u8()? {
        0 => None,
        1 => {
            let config = AmsGradConfig {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let mut state = Vec::with_capacity(n);
            for _ in 0..n {
                state.push(MomentState {
                    steps: r.u64()?,
                    m: read_mat(&mut r, path)?,
                    v: read_mat(&mut r, path)?,
                    v_max: read_mat(&mut r, path)?,
                });
            }
            Some(AmsGrad { config, state })
        }
        t => return Err(PhriError::format(path, format!("bad optimizer tag {t}"))),
    };
    r.finish()?;
    Ok((params, opt))
}

/// Copies values from `src` into `dst` by name, checking shapes.
pub fn restore_into(dst: &mut ParamStore, src: &ParamStore) -> Result<()> {
    if dst.len() != src.len() {
        return Err(PhriError::param(format!(
            "checkpoint has {} tensors, model expects {}",
            src.len(),
            dst.len()
        )));
    }
    for id in src.ids() {
        let name = src.name(id);
        let target = dst
            .find(name)
            .ok_or_else(|| PhriError::param(format!("unknown tensor {name} in checkpoint")))?;
        if dst.get(target).dim() != src.get(id).dim() {
            return Err(PhriError::param(format!("shape mismatch for {name}")));
        }
        dst.get_mut(target).assign(src.get(id));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Gradients;

    #[test]
    fn round_trip_with_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamStore::new();
        p.add("a", Mat::from_shape_fn((2, 3), |(i, j)| i as f64 - 0.1 * j as f64));
        p.add("b", Mat::from_elem((1, 1), std::f64::consts::PI));
        let mut opt = AmsGrad::new(&p, AmsGradConfig::default()).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.grads[0].fill(0.3);
        opt.step(&mut p, &g);
        let path = dir.path().join("ck.bin");
        save_checkpoint(&path, &p, Some(&opt)).unwrap();
        let (q, o) = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(o.unwrap(), opt);
    }
}
