//! Experimental designs in coded units.
//!
//! Every constructor returns a [`Design`]: rows of factor levels with a
//! provenance tag per row. Structured designs use levels in `{-1, 0, +1}`;
//! axial rows may sit at `±α` outside the unit cube and space-filling rows are
//! continuous in `[-1, 1]`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RandomStream};

pub const MIN_FACTORS: usize = 2;
pub const MAX_FACTORS: usize = 20;

/// Level probabilities for modified-DSD screening rows: P(-1), P(0), P(+1).
pub const MDSD_LEVEL_PROBS: [f64; 3] = [0.45, 0.10, 0.45];
const MDSD_MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    P1,
    P2,
    P3,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowTag {
    Center,
    ScreenPair,
    Corner,
    Factorial,
    Axial,
    Foldover,
    Refine,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub row_tags: Vec<RowTag>,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceFilling {
    Lhs,
    Sobol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    StdDsd,
    Ccd,
}

/// Hashable identity of a row; levels compare bitwise.
pub(crate) fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl Design {
    pub fn empty(k: usize, phase: Phase) -> Self {
        Self {
            k,
            rows: Vec::new(),
            row_tags: Vec::new(),
            phase,
        }
    }

    fn with_rows(k: usize, phase: Phase, rows: Vec<Vec<f64>>, tag: RowTag) -> Self {
        let row_tags = vec![tag; rows.len()];
        Self {
            k,
            rows,
            row_tags,
            phase,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_tag(mut self, tag: RowTag) -> Self {
        self.row_tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    pub fn push(&mut self, row: Vec<f64>, tag: RowTag) {
        debug_assert_eq!(row.len(), self.k);
        self.rows.push(row);
        self.row_tags.push(tag);
    }

    pub fn matrix(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.rows)
    }

    /// Drops rows whose levels already occur in `existing` or earlier in self.
    pub fn without_rows_in<'a, I>(mut self, existing: I) -> Self
    where
        I: IntoIterator<Item = &'a Vec<f64>>,
    {
        let mut seen: HashSet<Vec<u64>> = existing.into_iter().map(|r| row_key(r)).collect();
        let mut rows = Vec::new();
        let mut tags = Vec::new();
        for (r, t) in self.rows.into_iter().zip(self.row_tags) {
            if seen.insert(row_key(&r)) {
                rows.push(r);
                tags.push(t);
            }
        }
        self.rows = rows;
        self.row_tags = tags;
        self
    }

    /// Places this design's columns at `coords` of a `k`-factor design, other
    /// coordinates held at 0.
    pub fn embed(&self, k: usize, coords: &[usize]) -> Self {
        assert_eq!(coords.len(), self.k);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut full = vec![0.0; k];
                for (&c, &v) in coords.iter().zip(r) {
                    full[c] = v;
                }
                full
            })
            .collect();
        Self {
            k,
            rows,
            row_tags: self.row_tags.clone(),
            phase: self.phase,
        }
    }

    /// CSV with header `f1..fk`, one row per run.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.k)
            .map(|i| format!("f{i}"))
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for r in &self.rows {
            let line = r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

fn check_k(k: usize, min: usize, max: usize) -> Result<()> {
    if k < min {
        return Err(Error::KTooSmall(k));
    }
    if k > max {
        return Err(Error::KTooLarge(k));
    }
    Ok(())
}

fn sample_level(stream: &mut RandomStream) -> f64 {
    let u = stream.next_uniform();
    if u < MDSD_LEVEL_PROBS[0] {
        -1.0
    } else if u < MDSD_LEVEL_PROBS[0] + MDSD_LEVEL_PROBS[1] {
        0.0
    } else {
        1.0
    }
}

/// Modified definitive screening design with `2k + 3` runs: a center row,
/// `k` mirror pairs `(r, -r)` drawn from the level probabilities, and the two
/// antipodal corners.
pub fn mdsd(k: usize, stream: &mut RandomStream) -> Result<Design> {
    check_k(k, MIN_FACTORS, MAX_FACTORS)?;
    let mut d = Design::empty(k, Phase::P1);
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let center = vec![0.0; k];
    let lo = vec![-1.0; k];
    let hi = vec![1.0; k];
    for r in [&center, &lo, &hi] {
        seen.insert(row_key(r));
    }
    d.push(center, RowTag::Center);

    for _ in 0..k {
        let mut attempts = 0;
        let row = loop {
            if attempts == MDSD_MAX_RESAMPLES {
                return Err(Error::ResampleExhausted(MDSD_MAX_RESAMPLES));
            }
            attempts += 1;
            let r: Vec<f64> = (0..k).map(|_| sample_level(stream)).collect();
            let mirror: Vec<f64> = r.iter().map(|v| -v + 0.0).collect();
            if r.iter().all(|v| *v == 0.0)
                || seen.contains(&row_key(&r))
                || seen.contains(&row_key(&mirror))
            {
                continue;
            }
            break r;
        };
        let mirror: Vec<f64> = row.iter().map(|v| -v + 0.0).collect();
        seen.insert(row_key(&row));
        seen.insert(row_key(&mirror));
        d.push(row, RowTag::ScreenPair);
        d.push(mirror, RowTag::ScreenPair);
    }
    d.push(lo, RowTag::Corner);
    d.push(hi, RowTag::Corner);
    Ok(d)
}

fn two_level_full(k: usize) -> Vec<Vec<f64>> {
    (0..1usize << k)
        .map(|idx| {
            (0..k)
                .map(|j| if idx >> (k - 1 - j) & 1 == 1 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// All `2^k_c` sign combinations in lexicographic order (`-1` before `+1`,
/// first column slowest).
pub fn full_factorial(k_c: usize) -> Result<Design> {
    if k_c == 0 {
        return Err(Error::KTooSmall(0));
    }
    if k_c > 5 {
        return Err(Error::TooManyFactors(k_c));
    }
    Ok(Design::with_rows(
        k_c,
        Phase::P2,
        two_level_full(k_c),
        RowTag::Factorial,
    ))
}

/// Half fraction `2^(k_c-1)` with defining relation `I = x1·x2·…·x_kc`; the
/// last column is the product of the others.
pub fn half_fraction_res_v(k_c: usize) -> Result<Design> {
    if k_c < 5 {
        return Err(Error::ResolutionUnattainable(k_c));
    }
    if k_c > MAX_FACTORS {
        return Err(Error::KTooLarge(k_c));
    }
    let rows = two_level_full(k_c - 1)
        .into_iter()
        .map(|mut r| {
            let prod = r.iter().product();
            r.push(prod);
            r
        })
        .collect();
    Ok(Design::with_rows(k_c, Phase::P2, rows, RowTag::Factorial))
}

/// `±alpha` on each axis in turn.
pub fn star_points(k_c: usize, alpha: f64) -> Result<Design> {
    if k_c == 0 {
        return Err(Error::KTooSmall(0));
    }
    if k_c > 3 {
        return Err(Error::KTooLarge(k_c));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidDesign(format!("axial distance {alpha}")));
    }
    let mut rows = Vec::with_capacity(2 * k_c);
    for i in 0..k_c {
        for s in [-alpha, alpha] {
            let mut r = vec![0.0; k_c];
            r[i] = s;
            rows.push(r);
        }
    }
    Ok(Design::with_rows(k_c, Phase::P2, rows, RowTag::Axial))
}

/// Sign-negation of every non-center row.
pub fn fold_over(d: &Design) -> Design {
    let rows = d
        .rows
        .iter()
        .filter(|r| r.iter().any(|v| *v != 0.0))
        .map(|r| r.iter().map(|v| -v + 0.0).collect())
        .collect();
    Design::with_rows(d.k, Phase::P2, rows, RowTag::Foldover)
}

/// 16-run two-level screen: full factorial for `k <= 4`, otherwise the
/// resolution-IV `2^(k-(k-4))` fraction with generators `E=ABC`, `F=BCD`,
/// `G=ACD`, `H=ABD` (`k <= 8`).
pub fn screening_16(k: usize) -> Result<Design> {
    check_k(k, 1, 8)?;
    if k <= 4 {
        return Ok(Design::with_rows(
            k,
            Phase::Baseline,
            two_level_full(k),
            RowTag::Baseline,
        ));
    }
    const GENERATORS: [[usize; 3]; 4] = [[0, 1, 2], [1, 2, 3], [0, 2, 3], [0, 1, 3]];
    let rows = two_level_full(4)
        .into_iter()
        .map(|mut r| {
            for g in GENERATORS.iter().take(k - 4) {
                let v = g.iter().map(|&c| r[c]).product();
                r.push(v);
            }
            r
        })
        .collect();
    Ok(Design::with_rows(k, Phase::Baseline, rows, RowTag::Baseline))
}

// Joe–Kuo direction numbers (new-joe-kuo-6.21201), dimensions 2..=20:
// (degree s, coefficient a, initial m values).
const SOBOL_PARAMS: [(u32, u32, &[u32]); 19] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
];
const SOBOL_BITS: usize = 32;

fn sobol_directions(dim: usize) -> Result<[u32; SOBOL_BITS]> {
    let mut v = [0u32; SOBOL_BITS];
    if dim == 0 {
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = 1 << (31 - j);
        }
        return Ok(v);
    }
    let &(s, a, m) = SOBOL_PARAMS
        .get(dim - 1)
        .ok_or(Error::DimensionUnsupported(dim + 1))?;
    let s = s as usize;
    for j in 0..s.min(SOBOL_BITS) {
        v[j] = m[j] << (31 - j);
    }
    for j in s..SOBOL_BITS {
        let mut x = v[j - s] ^ (v[j - s] >> s);
        for l in 1..s {
            if (a >> (s - 1 - l)) & 1 == 1 {
                x ^= v[j - l];
            }
        }
        v[j] = x;
    }
    Ok(v)
}

/// Raw Sobol points in `[0,1)^k` for indices `1..=n` in Gray-code order
/// (index 0, the origin, is skipped).
pub fn sobol_points(n: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    let dirs = (0..k).map(sobol_directions).collect::<Result<Vec<_>>>()?;
    Ok((1..=n as u64)
        .map(|i| {
            let idx = i ^ (i >> 1);
            dirs.iter()
                .map(|v| {
                    let mut x = 0u32;
                    for (bit, vb) in v.iter().enumerate() {
                        if idx >> bit & 1 == 1 {
                            x ^= vb;
                        }
                    }
                    x as f64 / 4_294_967_296.0
                })
                .collect()
        })
        .collect())
}

pub fn space_filling(
    kind: SpaceFilling,
    n: usize,
    k: usize,
    stream: &mut RandomStream,
) -> Result<Design> {
    if n == 0 {
        return Err(Error::InvalidDesign("space-filling design needs n >= 1".into()));
    }
    if k == 0 {
        return Err(Error::KTooSmall(0));
    }
    let unit: Vec<Vec<f64>> = match kind {
        SpaceFilling::Sobol => {
            if k > MAX_FACTORS {
                return Err(Error::DimensionUnsupported(k));
            }
            sobol_points(n, k)?
        }
        SpaceFilling::Lhs => {
            check_k(k, 1, MAX_FACTORS)?;
            let mut pts = vec![vec![0.0; k]; n];
            for j in 0..k {
                let perm = stream.next_permutation(n);
                for (i, &cell) in perm.iter().enumerate() {
                    pts[i][j] = (cell as f64 + stream.next_uniform()) / n as f64;
                }
            }
            pts
        }
    };
    let rows = unit
        .into_iter()
        .map(|r| r.into_iter().map(|u| 2.0 * u - 1.0).collect())
        .collect();
    Ok(Design::with_rows(k, Phase::Baseline, rows, RowTag::Baseline))
}

// Paley-type conference matrices of orders 2..12, one string per row.
const CONFERENCE: [(usize, [&str; 12]); 6] = [
    (2, ["0+", "+0", "", "", "", "", "", "", "", "", "", ""]),
    (4, ["0+++", "-0-+", "-+0-", "--+0", "", "", "", "", "", "", "", ""]),
    (
        6,
        ["0+++++", "+0+--+", "++0+--", "+-+0+-", "+--+0+", "++--+0", "", "", "", "", "", ""],
    ),
    (
        8,
        [
            "0+++++++", "-0--+-++", "-+0--+-+", "-++0--+-", "--++0--+", "-+-++0--", "--+-++0-",
            "---+-++0", "", "", "", "",
        ],
    ),
    (
        10,
        [
            "0+++++++++", "+0+++--+--", "++0+-+--+-", "+++0--+--+", "++--0+++--", "+-+-+0+-+-",
            "+--+++0--+", "++--+--0++", "+-+--+-+0+", "+--+--+++0", "", "",
        ],
    ),
    (
        12,
        [
            "0+++++++++++", "-0-+---+++-+", "-+0-+---+++-", "--+0-+---+++", "-+-+0-+---++",
            "-++-+0-+---+", "-+++-+0-+---", "--+++-+0-+--", "---+++-+0-+-", "----+++-+0-+",
            "-+---+++-+0-", "--+---+++-+0",
        ],
    ),
];

pub(crate) fn conference_matrix(k: usize) -> Option<Vec<Vec<f64>>> {
    CONFERENCE.iter().find(|(n, _)| *n == k).map(|(n, rows)| {
        rows[..*n]
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| match c {
                        '+' => 1.0,
                        '-' => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect()
    })
}

/// Standard DSD (center row, then conference rows `C`, then `-C`) or a
/// face-centered CCD (factorial core capped at 16 runs, `2k` axial rows at
/// distance 1, one center row).
pub fn baseline_design(kind: BaselineKind, k: usize) -> Result<Design> {
    match kind {
        BaselineKind::StdDsd => {
            if k % 2 == 1 || k == 0 || k > 12 {
                return Err(Error::InvalidDesign(format!(
                    "standard DSD needs an even k <= 12, got {k}"
                )));
            }
            let c = conference_matrix(k).expect("stored for every even k <= 12");
            let mut d = Design::empty(k, Phase::Baseline);
            d.push(vec![0.0; k], RowTag::Center);
            for r in &c {
                d.push(r.clone(), RowTag::ScreenPair);
            }
            for r in &c {
                d.push(r.iter().map(|v| -v + 0.0).collect(), RowTag::ScreenPair);
            }
            Ok(d)
        }
        BaselineKind::Ccd => {
            check_k(k, 1, 6)?;
            let core = match k {
                1..=4 => full_factorial(k)?,
                5 => half_fraction_res_v(5)?,
                _ => screening_16(k)?,
            };
            let mut d = Design::empty(k, Phase::Baseline);
            for r in core.rows {
                d.push(r, RowTag::Factorial);
            }
            let axial = star_points_unbounded(k, 1.0);
            for r in axial {
                d.push(r, RowTag::Axial);
            }
            d.push(vec![0.0; k], RowTag::Center);
            Ok(d.without_rows_in(std::iter::empty()))
        }
    }
}

fn star_points_unbounded(k: usize, alpha: f64) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(2 * k);
    for i in 0..k {
        for s in [-alpha, alpha] {
            let mut r = vec![0.0; k];
            r[i] = s;
            rows.push(r);
        }
    }
    rows
}
