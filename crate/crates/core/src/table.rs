//! Dense per-step tables over the finite state-action space.

use serde::{Deserialize, Serialize};

/// A real-valued table indexed by `(state, action)`, stored row-major.
///
/// Serialized as nested arrays `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    /// Builds a table from a flat row-major vector. Panics on a length mismatch.
    pub fn from_flat(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "flat table length");
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        Self::try_from(rows.to_vec()).expect("ragged rows")
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// `max_a f(s, a)` for every state.
    pub fn state_max(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Greedy action at `s`, ties broken towards the lowest action index.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        debug_assert!(self.same_shape(other));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for QTable {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err("ragged state-action table".into());
        }
        Ok(Self {
            n_states,
            n_actions,
            values: rows.into_iter().flatten().collect(),
        })
    }
}

impl From<QTable> for Vec<Vec<f64>> {
    fn from(t: QTable) -> Self {
        if t.n_actions == 0 {
            return vec![Vec::new(); t.n_states];
        }
        t.values.chunks(t.n_actions).map(<[f64]>::to_vec).collect()
    }
}

/// Transition kernel of one step: a distribution over next states for every `(s, a)`.
///
/// Serialized as nested arrays `[s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct TransitionKernel {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    /// Kernel with every row equal to the point mass on `next(s, a)`.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        next: impl Fn(usize, usize) -> usize,
    ) -> Self {
        let mut probs = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                probs[(s * n_actions + a) * n_states + next(s, a)] = 1.0;
            }
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_states as f64; n_states * n_actions * n_states],
        }
    }

    pub fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), n_states * n_actions * n_states, "flat kernel length");
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// The next-state distribution `P(· | s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.probs[start..start + self.n_states]
    }

    pub fn same_shape(&self, other: &TransitionKernel) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// `sup_{s,a} ||P(·|s,a) - Q(·|s,a)||_1`.
    pub fn sup_l1_distance(&self, other: &TransitionKernel) -> f64 {
        debug_assert!(self.same_shape(other));
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                worst = worst.max(l1_distance(self.row(s, a), other.row(s, a)));
            }
        }
        worst
    }

    /// `(P v)(s, a) = sum_{s'} P(s'|s,a) v(s')`.
    pub fn expect(&self, v: &[f64]) -> QTable {
        let mut out = QTable::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.set(s, a, dot(self.row(s, a), v));
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for TransitionKernel {
    type Error = String;

    fn try_from(rows: Vec<Vec<Vec<f64>>>) -> Result<Self, Self::Error> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for per_state in rows {
            if per_state.len() != n_actions {
                return Err("ragged transition kernel: action count".into());
            }
            for row in per_state {
                if row.len() != n_states {
                    return Err("transition row length differs from state count".into());
                }
                probs.extend(row);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }
}

impl From<TransitionKernel> for Vec<Vec<Vec<f64>>> {
    fn from(k: TransitionKernel) -> Self {
        (0..k.n_states)
            .map(|s| (0..k.n_actions).map(|a| k.row(s, a).to_vec()).collect())
            .collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
