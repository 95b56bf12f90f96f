//! Deterministic generator of symbolic datasets with controllable
//! disjunctivity: broad single-feature class regions, small relabeled
//! "pockets" of exceptions nested inside them, and label noise.
//!
//! The instance space is organized by feature 0, whose value fixes the
//! region and therefore the core class. The remaining features echo a
//! region-specific value often enough to carry some weight of their own.
//! Pockets are clusters of 2-5 near-duplicate types (pairwise two value
//! mismatches) placed in the sparse tail of a region and labeled with a
//! different class; rejection sampling keeps ordinary core vectors at a raw
//! mismatch distance of at least 4 from every pocket center, so a pocket
//! member's nearest neighbors are its siblings. Each member also gets one
//! "contact" core type at raw distance 3, close enough to sit in the
//! member's shadow during leave-one-out passes but too far to outvote the
//! siblings. Noise corrupts the label of whole frequency-1 core types.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

use crate::dataset::InstanceBase;
use crate::error::{Error, Result};

/// Probability that a context feature of a core token echoes its region's
/// signature value instead of a uniform draw.
const ECHO_PROB: f64 = 0.55;
/// Minimum raw mismatch distance between two pocket centers.
const POCKET_SEPARATION: usize = 6;
/// Core vectors must be at least this many raw mismatches away from every
/// pocket center.
const POCKET_EXCLUSION: usize = 4;
/// Rejection-sampling attempts before the profile is declared inconsistent.
const MAX_ATTEMPTS: usize = 10_000;

/// Generation profile. The default matches the toolkit's reference dataset:
/// 7 features with 10 values each, 4 rule regions, 20 pockets, 2% noise,
/// 10,000 tokens, seed 42.
#[derive(Debug, Clone, Serialize)]
pub struct PocketsProfile {
    pub n_features: usize,
    pub values_per_feature: usize,
    /// Number of broad regions; each region is one class.
    pub n_core_rules: usize,
    /// Number of exception clusters (2-5 member types each).
    pub n_pockets: usize,
    /// Fraction of tokens whose label is corrupted.
    pub noise_rate: f64,
    pub n_tokens: u64,
    pub seed: u64,
}

impl Default for PocketsProfile {
    fn default() -> Self {
        PocketsProfile {
            n_features: 7,
            values_per_feature: 10,
            n_core_rules: 4,
            n_pockets: 20,
            noise_rate: 0.02,
            n_tokens: 10_000,
            seed: 42,
        }
    }
}

impl PocketsProfile {
    pub fn validate(&self) -> Result<()> {
        if self.n_core_rules < 2 {
            return Err(Error::invalid("need at least 2 core rules (classes)"));
        }
        if self.values_per_feature < self.n_core_rules {
            return Err(Error::invalid(
                "values_per_feature must cover one region key per rule",
            ));
        }
        if self.n_features < 2 {
            return Err(Error::invalid("need at least 2 features"));
        }
        if self.n_pockets > 0 && self.n_features < 4 {
            return Err(Error::invalid(
                "pockets need at least 4 features (one key and three context features)",
            ));
        }
        if self.n_pockets > 0 && self.values_per_feature < 3 {
            return Err(Error::invalid(
                "pockets need at least 3 values per feature",
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::invalid("noise_rate must lie in [0, 1]"));
        }
        if self.n_tokens < 2 * self.n_core_rules as u64 {
            return Err(Error::invalid("too few tokens for the rule regions"));
        }
        Ok(())
    }
}

/// Ground-truth origin of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    Core,
    Pocket,
    Noise,
}

impl std::fmt::Display for TokenRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TokenRole::Core => write!(f, "core"),
            TokenRole::Pocket => write!(f, "pocket"),
            TokenRole::Noise => write!(f, "noise"),
        }
    }
}

/// One generated token: its type in the base plus its role annotation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeneratedToken {
    pub type_index: usize,
    pub role: TokenRole,
}

/// A generated dataset: the deduplicated base plus the token-level role
/// annotation, aligned with the rows of the emitted CSV.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub base: InstanceBase,
    pub tokens: Vec<GeneratedToken>,
}

impl GeneratedData {
    /// One CSV row per token, in generation order.
    pub fn write_data_csv(&self, mut out: impl Write) -> Result<()> {
        for t in &self.tokens {
            let row = self.base.format_row(&self.base.types()[t.type_index]);
            out.write_all(row.as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Sidecar annotation: token index and role, aligned with the data CSV.
    pub fn write_roles_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "token,role")?;
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{},{}", i, t.role)?;
        }
        Ok(())
    }

    /// Token totals per role, in (core, pocket, noise) order.
    pub fn role_counts(&self) -> (u64, u64, u64) {
        let mut core = 0;
        let mut pocket = 0;
        let mut noise = 0;
        for t in &self.tokens {
            match t.role {
                TokenRole::Core => core += 1,
                TokenRole::Pocket => pocket += 1,
                TokenRole::Noise => noise += 1,
            }
        }
        (core, pocket, noise)
    }

    /// Role of each type: a type is a pocket/noise type if its tokens are.
    pub fn type_roles(&self) -> Vec<TokenRole> {
        let mut roles = vec![TokenRole::Core; self.base.n_types()];
        for t in &self.tokens {
            roles[t.type_index] = t.role;
        }
        roles
    }
}

struct Entry {
    vector: Vec<u16>,
    class: usize,
    freq: u64,
    role: TokenRole,
}

fn raw_dist(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn fresh_value(rng: &mut ChaCha8Rng, v: usize, forbidden: &[u16]) -> u16 {
    loop {
        let candidate = rng.gen_range(0..v as u16);
        if !forbidden.contains(&candidate) {
            return candidate;
        }
    }
}

/// Generate a dataset from a profile. Identical profiles (including the
/// seed) produce byte-identical output.
pub fn generate(profile: &PocketsProfile) -> Result<GeneratedData> {
    profile.validate()?;
    let f = profile.n_features;
    let v = profile.values_per_feature;
    let r = profile.n_core_rules;
    let free = f - 1;
    let base_sep = POCKET_SEPARATION.min(f - 1);
    let exclusion = POCKET_EXCLUSION.min(f - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    // region signature values for each context feature
    let mut echo: Vec<Vec<u16>> = Vec::with_capacity(f);
    echo.push((0..r as u16).collect()); // unused for feature 0
    for _ in 1..f {
        let mut values: Vec<u16> = (0..v as u16).collect();
        values.shuffle(&mut rng);
        values.truncate(r);
        echo.push(values);
    }

    let mut entries: Vec<Entry> = Vec::new();
    let mut centers: Vec<Vec<u16>> = Vec::new();

    for _ in 0..profile.n_pockets {
        let region = rng.gen_range(0..r);
        let exc_class = loop {
            let c = rng.gen_range(0..r);
            if c != region {
                break c;
            }
        };
        let max_size = 5.min(free);
        let size = rng.gen_range(2..=max_size.max(2));

        // place the pocket center in the sparse tail of its region
        let mut center = vec![0u16; f];
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            center[0] = region as u16;
            for j in 1..f {
                center[j] = rng.gen_range(0..v as u16);
            }
            if centers.iter().all(|c| raw_dist(c, &center) >= base_sep) {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(
                "inconsistent profile: could not isolate a pocket center",
            ));
        }
        centers.push(center.clone());

        // members: one distinct perturbed context feature each
        let mut features: Vec<usize> = (1..f).collect();
        features.shuffle(&mut rng);
        let member_features = &features[..size];
        let mut members = Vec::with_capacity(size);
        for &feat in member_features {
            let mut vec = center.clone();
            vec[feat] = fresh_value(&mut rng, v, &[center[feat]]);
            let freq = rng.gen_range(2..=5u64);
            members.push(vec.clone());
            entries.push(Entry {
                vector: vec,
                class: exc_class,
                freq,
                role: TokenRole::Pocket,
            });
        }

        // contacts: one core type at raw distance 3 from each member
        for member in &members {
            let mut placed = false;
            for _ in 0..MAX_ATTEMPTS {
                let mut vec = member.clone();
                let mut feats: Vec<usize> = (1..f).collect();
                feats.shuffle(&mut rng);
                for &feat in &feats[..3.min(free)] {
                    let mut forbidden = vec![vec[feat], center[feat]];
                    forbidden.extend(members.iter().map(|m| m[feat]));
                    vec[feat] = fresh_value(&mut rng, v, &forbidden);
                }
                let own = centers.len() - 1;
                if centers
                    .iter()
                    .enumerate()
                    .all(|(i, c)| i == own || raw_dist(c, &vec) >= exclusion)
                {
                    entries.push(Entry {
                        vector: vec,
                        class: region,
                        freq: 2,
                        role: TokenRole::Core,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::invalid(
                    "inconsistent profile: could not place a contact token",
                ));
            }
        }
    }

    let placed_tokens: u64 = entries.iter().map(|e| e.freq).sum();
    if placed_tokens >= profile.n_tokens {
        return Err(Error::invalid(format!(
            "inconsistent profile: pockets and contacts already need {placed_tokens} of {} tokens",
            profile.n_tokens
        )));
    }

    // plain core tokens fill the remaining budget
    let mut remaining = profile.n_tokens - placed_tokens;
    let core_start = entries.len();
    while remaining > 0 {
        let region = rng.gen_range(0..r);
        let mut vec = vec![0u16; f];
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            vec[0] = region as u16;
            for j in 1..f {
                vec[j] = if rng.gen_bool(ECHO_PROB) {
                    echo[j][region]
                } else {
                    rng.gen_range(0..v as u16)
                };
            }
            if centers.iter().all(|c| raw_dist(c, &vec) >= exclusion) {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::invalid(
                "inconsistent profile: core vectors cannot avoid the pockets",
            ));
        }
        let roll: f64 = rng.gen();
        let freq = if roll < 0.70 {
            1
        } else if roll < 0.90 {
            2
        } else if roll < 0.97 {
            3
        } else {
            4
        };
        let freq = freq.min(remaining);
        remaining -= freq;
        entries.push(Entry {
            vector: vec,
            class: region,
            freq,
            role: TokenRole::Core,
        });
    }

    // noise: corrupt whole frequency-1 core types
    let n_noise = (profile.noise_rate * profile.n_tokens as f64).round() as usize;
    if n_noise > 0 {
        let candidates: Vec<usize> = (core_start..entries.len())
            .filter(|&i| entries[i].freq == 1)
            .collect();
        if candidates.len() < n_noise {
            return Err(Error::invalid(format!(
                "inconsistent profile: {} singleton core tokens available for {} noise corruptions",
                candidates.len(),
                n_noise
            )));
        }
        let mut chosen: Vec<usize> = candidates
            .choose_multiple(&mut rng, n_noise)
            .copied()
            .collect();
        chosen.sort_unstable();
        for i in chosen {
            let original = entries[i].class;
            let corrupted = loop {
                let c = rng.gen_range(0..r);
                if c != original {
                    break c;
                }
            };
            entries[i].class = corrupted;
            entries[i].role = TokenRole::Noise;
        }
    }

    // assemble the token stream and the deduplicated base
    let mut base = InstanceBase::empty(f);
    let mut tokens = Vec::with_capacity(profile.n_tokens as usize);
    let mut fields: Vec<String> = vec![String::new(); f];
    for e in &entries {
        for (j, value) in e.vector.iter().enumerate() {
            fields[j] = format!("v{value}");
        }
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        let class = format!("c{}", e.class);
        for _ in 0..e.freq {
            let type_index = base.intern_row(&refs, &class, 1);
            tokens.push(GeneratedToken {
                type_index,
                role: e.role,
            });
        }
    }
    Ok(GeneratedData { base, tokens })
}
