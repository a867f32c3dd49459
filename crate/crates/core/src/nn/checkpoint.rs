//! Binary parameter checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! Network record:
//!
//! ```text
//! b"GCRLMLP1"
//! u32            number of layer sizes L
//! u64 x L        layer sizes, input first
//! u8             output activation (0 = identity, 1 = tanh-gaussian head)
//! u64            parameter count P
//! f64 x P        parameters in canonical order
//! ```
//!
//! Adam record:
//!
//! ```text
//! b"GCRLADM1"
//! u64            step
//! f64 x 4        lr, beta1, beta2, eps
//! u64            parameter count P
//! f64 x P        first moments
//! f64 x P        second moments
//! ```

use std::io::{Read, Write};

use super::{AdamState, Mlp, NnError, OutputActivation};

const MLP_MAGIC: &[u8; 8] = b"GCRLMLP1";
const ADAM_MAGIC: &[u8; 8] = b"GCRLADM1";
// Guards allocation when reading a corrupt header.
const MAX_LEN: u64 = 1 << 28;

pub fn write_mlp<W: Write>(net: &Mlp, w: &mut W) -> Result<(), NnError> {
    w.write_all(MLP_MAGIC)?;
    w.write_all(&(net.layer_sizes().len() as u32).to_le_bytes())?;
    for &n in net.layer_sizes() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    let tag: u8 = match net.output_activation() {
        OutputActivation::Identity => 0,
        OutputActivation::TanhGaussianHead => 1,
    };
    w.write_all(&[tag])?;
    write_f64s(w, net.params())
}

pub fn read_mlp<R: Read>(r: &mut R) -> Result<Mlp, NnError> {
    expect_magic(r, MLP_MAGIC)?;
    let n = read_u32(r)? as usize;
    if n > 64 {
        return Err(NnError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        let s = read_u64(r)?;
        if s > MAX_LEN {
            return Err(NnError::Checkpoint(format!("implausible layer size {s}")));
        }
        sizes.push(s as usize);
    }
    let mut tag = [0u8];
    r.read_exact(&mut tag)?;
    let act = match tag[0] {
        0 => OutputActivation::Identity,
        1 => OutputActivation::TanhGaussianHead,
        t => return Err(NnError::Checkpoint(format!("unknown output activation tag {t}"))),
    };
    let mut net = Mlp::zeros(&sizes, act)?;
    let params = read_f64s(r)?;
    net.set_params(&params)?;
    Ok(net)
}

pub fn write_adam<W: Write>(state: &AdamState, w: &mut W) -> Result<(), NnError> {
    w.write_all(ADAM_MAGIC)?;
    w.write_all(&state.step.to_le_bytes())?;
    for x in [state.lr, state.beta1, state.beta2, state.eps] {
        w.write_all(&x.to_le_bytes())?;
    }
    write_f64s(w, &state.m)?;
    write_f64s(w, &state.v)
}

pub fn read_adam<R: Read>(r: &mut R) -> Result<AdamState, NnError> {
    expect_magic(r, ADAM_MAGIC)?;
    let step = read_u64(r)?;
    let lr = read_f64(r)?;
    let beta1 = read_f64(r)?;
    let beta2 = read_f64(r)?;
    let eps = read_f64(r)?;
    let m = read_f64s(r)?;
    let v = read_f64s(r)?;
    if m.len() != v.len() {
        return Err(NnError::Checkpoint("moment buffers differ in length".into()));
    }
    Ok(AdamState {
        step,
        m,
        v,
        lr,
        beta1,
        beta2,
        eps,
    })
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<(), NnError> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>, NnError> {
    let n = read_u64(r)?;
    if n > MAX_LEN {
        return Err(NnError::Checkpoint(format!("implausible vector length {n}")));
    }
    let mut buf = vec![0u8; n as usize * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), NnError> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(NnError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(&[5, 16, 16, 4], OutputActivation::TanhGaussianHead, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        let back = read_mlp(&mut buf.as_slice()).unwrap();
        assert_eq!(back.layer_sizes(), net.layer_sizes());
        assert_eq!(back.output_activation(), net.output_activation());
        assert!(back
            .params()
            .iter()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn adam_round_trip() {
        let mut s = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, 2.0, 3.0];
        s.step(&mut p, &[0.1, -0.2, 0.3]).unwrap();
        let mut buf = Vec::new();
        write_adam(&s, &mut buf).unwrap();
        assert_eq!(read_adam(&mut buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_mlp(&mut &b"NOTMAGIC"[..]).is_err());
        let net = Mlp::zeros(&[2, 2], OutputActivation::Identity).unwrap();
        let mut buf = Vec::new();
        write_mlp(&net, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_mlp(&mut buf.as_slice()).is_err());
    }
}
