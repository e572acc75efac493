use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Image, PatchDataset, Provenance};
use crate::error::{invalid, Error, Result};

const MIN_VARIANCE: f64 = 1e-8;
const MAX_RETRIES: usize = 100;

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Samples `count` random `r x r` windows, rejecting near-constant ones
/// (at most 100 draws per slot).
pub fn sample_patches(images: &[Image], count: usize, r: usize, seed: u64) -> Result<PatchDataset> {
    let channels = images.first().map_or(1, |i| i.channels);
    if count > 0 {
        if images.is_empty() {
            return invalid("no images to sample from");
        }
        if r == 0 {
            return invalid("patch size must be positive");
        }
        if let Some(bad) = images.iter().find(|i| i.height < r || i.width < r || i.channels != channels) {
            return invalid(format!(
                "image {}x{}x{} cannot supply {r}x{r}x{channels} patches",
                bad.height, bad.width, bad.channels
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = r * r * channels;
    let mut out = Array2::zeros((count, d));
    let mut buf = vec![0.0; d];
    for slot in 0..count {
        let mut accepted = false;
        for _ in 0..MAX_RETRIES {
            let img = &images[rng.random_range(0..images.len())];
            let y = rng.random_range(0..=img.height - r);
            let x = rng.random_range(0..=img.width - r);
            img.window_into(y, x, r, &mut buf);
            if variance(&buf) >= MIN_VARIANCE {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::DegenerateData(format!(
                "no non-constant patch found for slot {slot} after {MAX_RETRIES} draws"
            )));
        }
        out.row_mut(slot).assign(&ArrayView1::from(&buf[..]));
    }
    let mut ds = PatchDataset::new(out, r, channels)?;
    ds.provenance = Provenance::new("images", "patches", Some(seed))
        .with_param("count", count)
        .with_param("r", r)
        .with_param("images", images.len());
    Ok(ds)
}
