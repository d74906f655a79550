use std::collections::BTreeSet;

use super::AnalysisError;

/// How two feature frames are compared against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Frames match only when bitwise equal; the threshold is ignored.
    Identity,
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Identity if a == b => 0.0,
            Metric::Identity => f64::INFINITY,
        }
    }
}

/// Variable Markov oracle over frames `O[1..=T]`. State 0 is the empty
/// prefix; state `t` has consumed frame `t`. `lrs[t]` is the longest suffix
/// of frames `..=t` matching, frame by frame within the threshold, a span
/// ending earlier, and `sfx[t]` is the earliest end of such a span.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    sfx: Vec<Option<usize>>,
    rsfx: Vec<Vec<usize>>,
    trn: Vec<Vec<usize>>,
    lrs: Vec<usize>,
    /// Cluster id per state; state 0 carries `usize::MAX`.
    symbol: Vec<usize>,
    clusters: usize,
    run: Vec<usize>,
    data: Vec<Vec<f64>>,
    theta: f64,
    metric: Metric,
}

impl Oracle {
    /// Number of frames `T` (states are `0..=T`).
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sfx(&self, state: usize) -> Option<usize> {
        self.sfx[state]
    }

    pub fn rsfx(&self, state: usize) -> &[usize] {
        &self.rsfx[state]
    }

    pub fn trn(&self, state: usize) -> &[usize] {
        &self.trn[state]
    }

    pub fn lrs(&self) -> &[usize] {
        &self.lrs
    }

    /// Cluster of frame `state` (1-based).
    pub fn symbol(&self, state: usize) -> usize {
        self.symbol[state]
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn frame(&self, state: usize) -> &[f64] {
        &self.data[state - 1]
    }

    fn similar(&self, a: usize, b: usize) -> bool {
        self.metric.distance(&self.data[a - 1], &self.data[b - 1]) <= self.theta
    }

    fn push(&mut self, frame: Vec<f64>) {
        let i = self.data.len() + 1;
        self.data.push(frame);
        self.trn.push(Vec::new());
        self.rsfx.push(Vec::new());
        self.trn[i - 1].push(i);
        let new = &self.data[i - 1];

        let mut k = self.sfx[i - 1];
        let mut matched = None;
        while let Some(state) = k {
            let mut best: Option<(usize, f64)> = None;
            for &j in &self.trn[state] {
                let d = self.metric.distance(&self.data[j - 1], new);
                if d <= self.theta && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            if let Some((j, _)) = best {
                matched = Some(j);
                break;
            }
            self.trn[state].push(i);
            k = self.sfx[state];
        }
        let symbol = match matched {
            Some(j) => self.symbol[j],
            None => {
                self.clusters += 1;
                self.clusters - 1
            }
        };

        // run[j]: length of the common suffix of frames ..=i and ..=j.
        let mut run = vec![0; i];
        for (j, r) in run.iter_mut().enumerate().skip(1) {
            if self.similar(i, j) {
                *r = self.run[j - 1] + 1;
            }
        }
        let lrs = run.iter().copied().max().unwrap_or(0);
        let sfx = if lrs == 0 { 0 } else { run.iter().position(|&r| r == lrs).expect("maximum is attained") };
        self.run = run;
        self.sfx.push(Some(sfx));
        self.lrs.push(lrs);
        self.symbol.push(symbol);
        self.rsfx[sfx].push(i);
    }
}

/// Builds the oracle incrementally. Under [`Metric::Identity`] the forward
/// transitions are those of the factor oracle of the symbol sequence.
pub fn build_oracle(features: &[Vec<f64>], theta: f64, metric: Metric) -> Result<Oracle, AnalysisError> {
    if features.is_empty() {
        return Err(AnalysisError::EmptySequence);
    }
    if theta.is_nan() || theta < 0.0 {
        return Err(AnalysisError::Theta(theta));
    }
    let dim = features[0].len();
    if let Some(index) = features.iter().position(|f| f.len() != dim) {
        return Err(AnalysisError::Dimension { index, expected: dim, found: features[index].len() });
    }
    let mut oracle = Oracle {
        sfx: vec![None],
        rsfx: vec![Vec::new()],
        trn: vec![Vec::new()],
        lrs: vec![0],
        symbol: vec![usize::MAX],
        clusters: 0,
        run: vec![0],
        data: Vec::with_capacity(features.len()),
        theta,
        metric,
    };
    for f in features {
        oracle.push(f.clone());
    }
    Ok(oracle)
}

/// Embeds symbols as one-dimensional frames for use with [`Metric::Identity`].
pub fn symbol_frames<T: Into<f64> + Copy>(symbols: &[T]) -> Vec<Vec<f64>> {
    symbols.iter().map(|&s| vec![s.into()]).collect()
}

/// Per-frame information rate in bits: the alphabet code length
/// `log2(clusters seen so far)` minus the cost `log2((t+1)/(lrs[t]+1))` of
/// pointing back into the past, floored at zero.
pub fn ir_profile(oracle: &Oracle) -> Vec<f64> {
    let mut seen = BTreeSet::new();
    (1..=oracle.len())
        .map(|t| {
            seen.insert(oracle.symbol[t]);
            let plain = (seen.len() as f64).log2();
            let context = ((t + 1) as f64).log2() - ((oracle.lrs[t] + 1) as f64).log2();
            (plain - context).max(0.0)
        })
        .collect()
}

pub fn compute_ir(oracle: &Oracle) -> f64 {
    ir_profile(oracle).iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrCurve {
    pub thetas: Vec<f64>,
    pub ir_totals: Vec<f64>,
    pub best_theta: f64,
}

impl IrCurve {
    pub fn best_index(&self) -> usize {
        self.thetas.iter().position(|&t| t == self.best_theta).expect("best theta is on the grid")
    }
}

/// Builds one oracle per threshold and keeps the first threshold with the
/// largest total IR. Thresholds are evaluated on up to `jobs` threads.
pub fn sweep_theta(features: &[Vec<f64>], grid: &[f64], metric: Metric, jobs: usize) -> Result<IrCurve, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(AnalysisError::UnsortedGrid);
    }
    let jobs = jobs.clamp(1, grid.len());
    let chunk = grid.len().div_ceil(jobs);
    let ir_totals: Vec<f64> = if jobs == 1 {
        grid.iter().map(|&t| build_oracle(features, t, metric).map(|o| compute_ir(&o))).collect::<Result<_, _>>()?
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = grid
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|&t| build_oracle(features, t, metric).map(|o| compute_ir(&o)))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(grid.len());
            for h in handles {
                all.extend(h.join().expect("sweep worker panicked")?);
            }
            Ok::<_, AnalysisError>(all)
        })?
    };
    let mut best = 0;
    for (i, &v) in ir_totals.iter().enumerate() {
        if v > ir_totals[best] {
            best = i;
        }
    }
    Ok(IrCurve { thetas: grid.to_vec(), best_theta: grid[best], ir_totals })
}

/// `count` evenly spaced thresholds between the 5th and 95th percentiles of
/// pairwise distances among at most `max_frames` evenly strided frames.
/// Duplicate values collapse, so a degenerate spread yields a single value.
pub fn theta_grid(features: &[Vec<f64>], metric: Metric, count: usize, max_frames: usize) -> Result<Vec<f64>, AnalysisError> {
    if features.is_empty() {
        return Err(AnalysisError::EmptySequence);
    }
    let stride = features.len().div_ceil(max_frames.max(2));
    let sample: Vec<&Vec<f64>> = features.iter().step_by(stride.max(1)).collect();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            let v = metric.distance(sample[i], sample[j]);
            if v.is_finite() {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return Ok(vec![0.0]);
    }
    d.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        let pos = p * (d.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
    };
    let (lo, hi) = (pct(0.05), pct(0.95));
    let count = count.max(1);
    let mut grid: Vec<f64> = if count == 1 {
        vec![lo]
    } else {
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    };
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Motif {
    pub len: usize,
    /// End states (1-based, ascending) of non-overlapping occurrences.
    pub ends: Vec<usize>,
}

impl Motif {
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ends.iter().map(|&e| (e + 1 - self.len, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatternSet {
    pub motifs: Vec<Motif>,
}

impl PatternSet {
    /// Number of distinct frames inside at least one occurrence.
    pub fn covered_frames(&self) -> usize {
        let mut frames = BTreeSet::new();
        for m in &self.motifs {
            for (a, b) in m.spans() {
                frames.extend(a..=b);
            }
        }
        frames.len()
    }
}

/// Repeated motifs of at least `min_len` frames. States are visited from the
/// end; each unclaimed state with a long enough repeated suffix seeds a motif
/// whose occurrences are the suffix-link relatives sharing that suffix.
pub fn find_patterns(oracle: &Oracle, min_len: usize) -> PatternSet {
    let min_len = min_len.max(1);
    let n = oracle.len();
    let mut claimed = vec![false; n + 1];
    let mut motifs = Vec::new();
    for i in (1..=n).rev() {
        let Some(s) = oracle.sfx[i].filter(|&s| s > 0) else { continue };
        let len = oracle.lrs[i].min(i - s);
        if len < min_len || claimed[i + 1 - len..=i].iter().any(|&c| c) {
            continue;
        }
        let mut root = s;
        while oracle.lrs[root] >= len {
            root = oracle.sfx[root].expect("lrs > 0 implies a suffix link");
        }
        let mut ends = vec![root];
        let mut stack = vec![root];
        while let Some(state) = stack.pop() {
            for &c in &oracle.rsfx[state] {
                if oracle.lrs[c] >= len {
                    ends.push(c);
                    stack.push(c);
                }
            }
        }
        ends.sort_unstable();
        let mut kept: Vec<usize> = Vec::new();
        for e in ends {
            let free = e >= len && !claimed[e + 1 - len..=e].iter().any(|&c| c);
            if free && kept.last().is_none_or(|&p| e >= p + len) {
                kept.push(e);
            }
        }
        if kept.len() >= 2 {
            for &e in &kept {
                claimed[e + 1 - len..=e].iter_mut().for_each(|c| *c = true);
            }
            motifs.push(Motif { len, ends: kept });
        }
    }
    motifs.sort_by(|a, b| b.len.cmp(&a.len).then(a.ends.cmp(&b.ends)));
    PatternSet { motifs }
}
