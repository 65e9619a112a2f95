use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn new(onset: f64, offset: f64) -> Self {
        Self { onset, offset }
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Per-class event intervals in seconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventList {
    pub classes: Vec<Vec<Event>>,
}

impl EventList {
    pub fn new(n_classes: usize) -> Self {
        Self { classes: vec![Vec::new(); n_classes] }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn push(&mut self, class: usize, onset: f64, offset: f64) {
        self.classes[class].push(Event::new(onset, offset));
    }

    pub fn is_sorted(&self) -> bool {
        self.classes.iter().all(|c| c.windows(2).all(|p| p[0].onset <= p[1].onset))
    }

    pub fn sort(&mut self) {
        for c in &mut self.classes {
            c.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
        }
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    /// Iterates `(class, event)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Event)> {
        self.classes.iter().enumerate().flat_map(|(c, evs)| evs.iter().map(move |e| (c, e)))
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            classes: self
                .classes
                .iter()
                .map(|c| c.iter().map(|e| Event::new(e.onset + dt, e.offset + dt)).collect())
                .collect(),
        }
    }
}

/// Turns every maximal run of ones in a row-major `n_frames x n_classes` grid
/// into an event `(start * hop, (end + 1) * hop)`.
pub fn decode_events(binary: &[u8], n_frames: usize, n_classes: usize, frame_hop_s: f64) -> EventList {
    assert_eq!(binary.len(), n_frames * n_classes, "grid shape mismatch");
    let mut out = EventList::new(n_classes);
    for c in 0..n_classes {
        let mut start = None;
        for t in 0..=n_frames {
            let on = t < n_frames && binary[t * n_classes + c] != 0;
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    out.push(c, s as f64 * frame_hop_s, t as f64 * frame_hop_s);
                    start = None;
                }
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_run() {
        let ev = decode_events(&[0, 1, 1, 0], 4, 1, 0.064);
        assert_eq!(ev.classes[0].len(), 1);
        let e = ev.classes[0][0];
        assert!((e.onset - 0.064).abs() < 1e-12 && (e.offset - 0.192).abs() < 1e-12);
    }

    #[test]
    fn all_zero_is_empty() {
        assert_eq!(decode_events(&[0; 12], 6, 2, 0.1).total(), 0);
    }

    fn brute_force(col: &[u8]) -> Vec<(usize, usize)> {
        // Every index i with col[i]=1 and (i==0 or col[i-1]=0) starts a run;
        // its end is the last index before the next zero.
        let mut runs = Vec::new();
        for i in 0..col.len() {
            if col[i] == 1 && (i == 0 || col[i - 1] == 0) {
                let mut j = i;
                while j + 1 < col.len() && col[j + 1] == 1 {
                    j += 1;
                }
                runs.push((i, j + 1));
            }
        }
        runs
    }

    #[test]
    fn matches_brute_force_scanner() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let c = rng.gen_range(1..4);
            let p: f64 = rng.gen_range(0.1..0.9);
            let grid: Vec<u8> = (0..30 * c).map(|_| rng.gen_bool(p) as u8).collect();
            let ev = decode_events(&grid, 30, c, 0.5);
            for k in 0..c {
                let col: Vec<u8> = (0..30).map(|t| grid[t * c + k]).collect();
                let expect: Vec<Event> = brute_force(&col)
                    .into_iter()
                    .map(|(s, e)| Event::new(s as f64 * 0.5, e as f64 * 0.5))
                    .collect();
                assert_eq!(ev.classes[k], expect);
            }
        }
    }
}
