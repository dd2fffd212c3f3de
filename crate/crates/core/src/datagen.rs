//! Instance generators and the JSONL instance format.
//!
//! The full-set generator builds item sets that tile the bin exactly: item
//! dimensions are drawn from Gaussian-weighted probabilities (down-weighting
//! dimension 1 early on), each accepted item is placed greedily at an
//! edge-contact argmax with random tie-breaking, and a final 1x1 tops the bin
//! off when one cell remains. Random instances sample each dimension
//! uniformly up to half the bin side.
//!
//! One seeded stream drives a whole instance, in this order: a width draw
//! and a height draw per sampling attempt, one tie-break draw per placed
//! item, then the final shuffle.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridBin, ItemSpec, Orientation, Placement, RotatedSize};
use crate::policy::greedy_place_with_rng;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorTag {
    #[serde(rename = "FULL_SET")]
    FullSet,
    #[serde(rename = "RANDOM")]
    Random,
}

/// One instance: bin dimensions and the item arrival order, plus enough
/// metadata to regenerate it bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub gen: GeneratorTag,
    #[serde(rename = "W")]
    pub width: u16,
    #[serde(rename = "H")]
    pub height: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
    pub items: Vec<(u16, u16)>,
}

impl InstanceRecord {
    pub fn total_item_area(&self) -> u64 {
        self.items
            .iter()
            .map(|(w, h)| u64::from(*w) * u64::from(*h))
            .sum()
    }

    /// Items in arrival order with ids starting at `first_id`.
    pub fn items_with_ids(&self, first_id: u32) -> Vec<ItemSpec> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, (w, h))| ItemSpec::new(first_id + i as u32, *w, *h))
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("bin dimensions must be positive".into());
        }
        if self.items.iter().any(|(w, h)| *w == 0 || *h == 0) {
            return Err("item dimensions must be positive".into());
        }
        match self.gen {
            GeneratorTag::FullSet => {
                let bin_area = u64::from(self.width) * u64::from(self.height);
                if self.total_item_area() != bin_area {
                    return Err(format!(
                        "FULL_SET instance area {} does not equal bin area {}",
                        self.total_item_area(),
                        bin_area
                    ));
                }
            }
            GeneratorTag::Random => {
                let (max_w, max_h) = (self.width / 2, self.height / 2);
                if self.items.iter().any(|(w, h)| *w > max_w || *h > max_h) {
                    return Err(format!(
                        "RANDOM instance item exceeds half the bin ({max_w}x{max_h})"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Discrete distribution over dimensions `1..=n`, proportional to
/// `exp(-(d - mu)^2 / (2 sigma^2))` with `mu = (n+1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWeights {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GaussianWeights {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of(&self, d: u16) -> f64 {
        self.probs[usize::from(d) - 1]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u16 {
        let r: f64 = rng.gen();
        for (i, c) in self.cumulative.iter().enumerate() {
            if r < *c {
                return (i + 1) as u16;
            }
        }
        self.probs.len() as u16
    }
}

pub fn gaussian_prob(n: u16, sigma: f64) -> GaussianWeights {
    assert!(n >= 1 && sigma > 0.0);
    let mu = f64::from(n + 1) / 2.0;
    let weights: Vec<f64> = (1..=n)
        .map(|d| (-(f64::from(d) - mu).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut acc = 0.0;
    let cumulative = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    GaussianWeights { probs, cumulative }
}

/// A generated full-set instance together with the greedy placements that
/// realize the exact tiling.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSetOutcome {
    pub record: InstanceRecord,
    pub placements: Vec<Placement>,
}

/// Builds an item set that tiles a `w x h` bin exactly.
///
/// Sampled dimensions are rejected until they pass the size precondition
/// `w_o + h_o <= W + H - max_w - max_h` and the area bound; a 1x1 item is
/// always admissible regardless of the size precondition, which keeps
/// generation live in the corner where the first item spans all but one row
/// or column (the precondition alone would then reject everything and the
/// bin could never be completed). Each accepted item must have a feasible
/// anchor or it is resampled; it is placed at the edge-contact argmax with
/// random tie-breaking.
pub fn generate_full_set(w: u16, h: u16, sigma: f64, seed: u64) -> FullSetOutcome {
    assert!(w >= 1 && h >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width_dist = gaussian_prob(w, sigma);
    let height_dist = gaussian_prob(h, sigma);
    let mut bin = GridBin::new(w, h);
    let mut items: Vec<(u16, u16)> = Vec::new();
    let mut placements: Vec<Placement> = Vec::new();
    let bin_area = u32::from(w) * u32::from(h);
    let mut area = 0u32;
    let mut max_w = 0u16;
    let mut max_h = 0u16;

    while area < bin_area - 1 {
        let (item_w, item_h, decision) = loop {
            let (item_w, item_h) = loop {
                let cand_w = width_dist.sample(&mut rng);
                let cand_h = height_dist.sample(&mut rng);
                let dim_budget = (u32::from(w) + u32::from(h))
                    .saturating_sub(u32::from(max_w) + u32::from(max_h));
                let dims_ok = u32::from(cand_w) + u32::from(cand_h) <= dim_budget
                    || (cand_w == 1 && cand_h == 1);
                let area_ok = area + u32::from(cand_w) * u32::from(cand_h) <= bin_area;
                if dims_ok && area_ok {
                    break (cand_w, cand_h);
                }
            };
            let size = RotatedSize {
                lx: item_w,
                ly: item_h,
            };
            let decision = greedy_place_with_rng(&bin, size, &mut rng);
            if !decision.action.is_no_position(w, h) {
                break (item_w, item_h, decision);
            }
        };
        let x = (decision.action.0 % u32::from(w)) as u16;
        let y = (decision.action.0 / u32::from(w)) as u16;
        let placement = Placement {
            item: ItemSpec::new(items.len() as u32, item_w, item_h),
            orientation: Orientation::Deg0,
            x,
            y,
            seq: items.len() as u32,
        };
        bin.apply_pack(&placement)
            .expect("greedy anchor is feasible");
        items.push((item_w, item_h));
        placements.push(placement);
        area += u32::from(item_w) * u32::from(item_h);
        max_w = max_w.max(item_w);
        max_h = max_h.max(item_h);
    }

    if area == bin_area - 1 {
        // Exactly one free cell remains; fill it.
        let mut hole = None;
        'scan: for y in 0..h {
            for x in 0..w {
                if !bin.occupied_at(x, y) {
                    hole = Some((x, y));
                    break 'scan;
                }
            }
        }
        let (x, y) = hole.expect("one cell must be free");
        let placement = Placement {
            item: ItemSpec::new(items.len() as u32, 1, 1),
            orientation: Orientation::Deg0,
            x,
            y,
            seq: items.len() as u32,
        };
        bin.apply_pack(&placement).unwrap();
        items.push((1, 1));
        placements.push(placement);
    }
    debug_assert!(bin.is_full());

    items.shuffle(&mut rng);
    FullSetOutcome {
        record: InstanceRecord {
            gen: GeneratorTag::FullSet,
            width: w,
            height: h,
            sigma: Some(sigma),
            seed,
            items,
        },
        placements,
    }
}

/// `count` items with each dimension uniform on `1..=floor(side/2)`, so no
/// item exceeds half the bin. Width is drawn before height for each item.
pub fn generate_random_instance(w: u16, h: u16, count: usize, seed: u64) -> InstanceRecord {
    assert!(
        w >= 2 && h >= 2,
        "random instances need a bin of at least 2x2"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..count)
        .map(|_| {
            let item_w = rng.gen_range(1..=w / 2);
            let item_h = rng.gen_range(1..=h / 2);
            (item_w, item_h)
        })
        .collect();
    InstanceRecord {
        gen: GeneratorTag::Random,
        width: w,
        height: h,
        sigma: None,
        seed,
        items,
    }
}

/// One instance per line, in declaration order of the record fields.
pub fn to_jsonl(records: &[InstanceRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses and validates instances, reporting the offending line number.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<InstanceRecord>, DatagenError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord =
            serde_json::from_str(&line).map_err(|source| DatagenError::Json {
                line: i + 1,
                source,
            })?;
        record
            .validate()
            .map_err(|message| DatagenError::Validation {
                line: i + 1,
                message,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads a JSONL instance file, transparently decompressing gzip input
/// (sniffed from the magic bytes).
pub fn read_path(path: &Path) -> Result<Vec<InstanceRecord>, DatagenError> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        read_jsonl(BufReader::new(flate2::read::GzDecoder::new(file)))
    } else {
        read_jsonl(BufReader::new(file))
    }
}

pub fn write_path(path: &Path, records: &[InstanceRecord]) -> Result<(), DatagenError> {
    let mut file = File::create(path)?;
    file.write_all(to_jsonl(records).as_bytes())?;
    Ok(())
}
