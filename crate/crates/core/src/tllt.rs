//! Teaching-to-learn, learning-to-teach propagation: a teacher picks the
//! easiest unlabeled batch each round by reliability (Gaussian-field
//! conditional entropy) plus discriminability (commute-time margin between
//! the two nearest classes), a student propagates one walk step over the
//! batch, and the student's feedback sizes the next batch.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg;
use crate::propagation::PropagationResult;

/// Teacher-side knobs of the curriculum loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    /// Steepness of the feedback sigmoid.
    pub gamma_fb: f64,
    /// Ridge added to the graph Laplacian so the Gaussian-field precision is
    /// positive definite.
    pub epsilon_gmrf: f64,
    /// Batch size of the first round.
    pub s_initial: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            gamma_fb: 1.0,
            epsilon_gmrf: 1e-6,
            s_initial: 1,
        }
    }
}

impl TeacherConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma_fb > 0.0 && self.epsilon_gmrf > 0.0) || self.s_initial == 0 {
            return Err(Error::InvalidParameter(
                "teacher config fields must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One teacher/student round: the selected batch, its hardened labels, the
/// requested batch size and the feedback value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurriculumRound {
    pub round: usize,
    pub selected: Vec<usize>,
    pub assigned: Vec<usize>,
    pub batch_size: usize,
    pub feedback: f64,
}

/// Mutable state of the curriculum loop.
#[derive(Debug, Clone)]
pub struct CurriculumState {
    initial_labeled: Vec<usize>,
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    /// Nodes selected in any earlier round; their rows keep refreshing.
    touched: BTreeSet<usize>,
    scores: LabelMatrix,
    round: usize,
    assigned: Vec<Option<usize>>,
    pub history: Vec<CurriculumRound>,
}

impl CurriculumState {
    pub fn new(data: &Dataset) -> Self {
        let initial_labeled = data.labeled_indices();
        let labeled: BTreeSet<usize> = initial_labeled.iter().copied().collect();
        let unlabeled: BTreeSet<usize> = data.unlabeled_indices().into_iter().collect();
        let assigned = data.labels().to_vec();
        Self {
            initial_labeled,
            labeled,
            unlabeled,
            touched: BTreeSet::new(),
            scores: data.seed_matrix(),
            round: 0,
            assigned,
            history: Vec::new(),
        }
    }

    pub fn scores(&self) -> &LabelMatrix {
        &self.scores
    }

    pub fn labeled(&self) -> &BTreeSet<usize> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// The seed labels; their score rows never change.
    pub fn initial_labeled(&self) -> &[usize] {
        &self.initial_labeled
    }

    pub fn assigned_class(&self, node: usize) -> Option<usize> {
        self.assigned[node]
    }

    /// Unlabeled nodes adjacent to at least one labeled node, ascending.
    pub fn frontier(&self, g: &Graph) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for &l in &self.labeled {
            for &(j, _) in g.neighbors(l) {
                if self.unlabeled.contains(&j) {
                    out.insert(j);
                }
            }
        }
        out.into_iter().collect()
    }

    /// Current labeled nodes grouped per class, using assigned labels.
    pub fn class_sets(&self, num_classes: usize) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); num_classes];
        for &i in &self.labeled {
            if let Some(c) = self.assigned[i] {
                sets[c].push(i);
            }
        }
        sets
    }
}

/// Conditional covariance block of the batch under the Gaussian field with
/// precision `L + eps I`, conditioned on the labeled set; shared by the
/// public reliability score and the greedy selector so both see identical
/// numbers.
struct FieldCovariance {
    /// Position of each unlabeled node within the covariance, by node id.
    position: Vec<Option<usize>>,
    /// Full conditional covariance `(Q_UU)^{-1}`.
    covariance: DMatrix<f64>,
}

impl FieldCovariance {
    fn build(g: &Graph, labeled: &BTreeSet<usize>, eps: f64) -> Result<Self> {
        let free_nodes: Vec<usize> = (0..g.n()).filter(|i| !labeled.contains(i)).collect();
        let mut position = vec![None; g.n()];
        for (pos, &i) in free_nodes.iter().enumerate() {
            position[i] = Some(pos);
        }
        let u = free_nodes.len();
        let laplacian = g.laplacian();
        let mut q_uu = DMatrix::zeros(u, u);
        for (r, &i) in free_nodes.iter().enumerate() {
            for (c, &j) in free_nodes.iter().enumerate() {
                q_uu[(r, c)] = laplacian[(i, j)];
            }
            q_uu[(r, r)] += eps;
        }
        let covariance = q_uu
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Gaussian-field precision".into()))?;
        Ok(Self {
            position,
            covariance,
        })
    }

    /// `-1/2 ln((2 pi e)^{|S|} det Sigma_S)`; errors when the covariance
    /// block is not positive definite.
    fn reliability(&self, batch: &[usize]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let positions: Vec<usize> = batch
            .iter()
            .map(|&x| {
                self.position[x].ok_or_else(|| {
                    Error::InvalidParameter(format!("node {x} is already labeled"))
                })
            })
            .collect::<Result<_>>()?;
        let s = positions.len();
        let block = DMatrix::from_fn(s, s, |r, c| {
            self.covariance[(positions[r], positions[c])]
        });
        let chol = block.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite {
                smallest_eigenvalue: linalg::smallest_eigenvalue(&DMatrix::from_fn(s, s, |r, c| {
                    self.covariance[(positions[r], positions[c])]
                })),
            }
        })?;
        let log_det: f64 = (0..s).map(|i| 2.0 * chol.l()[(i, i)].ln()).sum();
        let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
        Ok(-0.5 * (s as f64 * two_pi_e.ln() + log_det))
    }
}

/// Reliability of a candidate batch: the negative conditional entropy of its
/// labels given the labeled set, under a Gaussian field with precision
/// `L + eps I`. Larger means less conditional uncertainty.
pub fn reliability(g: &Graph, batch: &[usize], labeled: &[usize], eps: f64) -> Result<f64> {
    let labeled_set: BTreeSet<usize> = labeled.iter().copied().collect();
    if let Some(&x) = batch.iter().find(|x| labeled_set.contains(x)) {
        return Err(Error::InvalidParameter(format!(
            "batch node {x} is already labeled"
        )));
    }
    FieldCovariance::build(g, &labeled_set, eps)?.reliability(batch)
}

/// Commute-time margins of a batch: for each node, the gap between its mean
/// commute times to the two nearest labeled classes, summed over the batch.
/// Nonnegative by construction; additive over disjoint batches. With fewer
/// than two labeled classes the margin is undefined and 0 is returned.
pub fn discriminability(g: &Graph, batch: &[usize], class_sets: &[Vec<usize>]) -> Result<f64> {
    let nonempty: Vec<&Vec<usize>> = class_sets.iter().filter(|s| !s.is_empty()).collect();
    if nonempty.len() < 2 {
        log::warn!("discriminability needs two labeled classes; returning 0");
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &x in batch {
        let mut times: Vec<f64> = nonempty
            .iter()
            .map(|set| g.commute_time_to_set(x, set))
            .collect::<Result<_>>()?;
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        total += times[1] - times[0];
    }
    Ok(total)
}

/// Greedily selects `s` frontier nodes maximizing reliability plus
/// discriminability, adding the best marginal candidate each step (ties to
/// the lowest node index). Exact for `s = 1`.
pub fn select_batch(
    g: &Graph,
    frontier: &[usize],
    labeled: &[usize],
    class_sets: &[Vec<usize>],
    s: usize,
    eps: f64,
) -> Result<Vec<usize>> {
    if frontier.is_empty() {
        return Err(Error::Disconnected(
            "selection frontier is empty; remaining unlabeled nodes are unreachable".into(),
        ));
    }
    if s == 0 || s > frontier.len() {
        return Err(Error::InvalidParameter(format!(
            "batch size {s} must lie in 1..={}",
            frontier.len()
        )));
    }
    let labeled_set: BTreeSet<usize> = labeled.iter().copied().collect();
    let field = FieldCovariance::build(g, &labeled_set, eps)?;
    // Margins are computed against the classes reachable from each
    // candidate; commute times to other components are infinite and carry
    // no ordering information.
    let margins: std::collections::BTreeMap<usize, f64> = frontier
        .iter()
        .map(|&x| {
            let local_sets: Vec<Vec<usize>> = class_sets
                .iter()
                .map(|set| {
                    set.iter()
                        .copied()
                        .filter(|&l| g.same_component(x, l))
                        .collect()
                })
                .collect();
            Ok((x, discriminability(g, &[x], &local_sets)?))
        })
        .collect::<Result<_>>()?;

    let mut selected: Vec<usize> = Vec::with_capacity(s);
    let mut selected_margin = 0.0;
    for _ in 0..s {
        let mut best: Option<(f64, usize)> = None;
        for &x in frontier {
            if selected.contains(&x) {
                continue;
            }
            let mut candidate = selected.clone();
            candidate.push(x);
            candidate.sort_unstable();
            let score = field.reliability(&candidate)? + selected_margin + margins[&x];
            match best {
                Some((best_score, _)) if score <= best_score => {}
                _ => best = Some((score, x)),
            }
        }
        let (_, chosen) = best.expect("frontier has a candidate");
        selected_margin += margins[&chosen];
        selected.push(chosen);
    }
    selected.sort_unstable();
    Ok(selected)
}

/// One student update: rows of previously selected nodes and of the current
/// batch are replaced by `P_i F` (computed against the pre-update scores),
/// initial labels stay clamped, untouched unlabeled rows stay zero. Batch
/// nodes are then hardened to their argmax class and moved to the labeled
/// set.
pub fn learner_step(p: &DMatrix<f64>, state: &mut CurriculumState, batch: &[usize]) -> Result<()> {
    for &x in batch {
        if !state.unlabeled.contains(&x) {
            return Err(Error::InvalidParameter(format!(
                "batch node {x} is not unlabeled"
            )));
        }
    }
    let previous = state.scores.clone();
    let mut rows: BTreeSet<usize> = state.touched.clone();
    rows.extend(batch.iter().copied());
    for &i in &rows {
        let updated = p.row(i) * &previous;
        state.scores.row_mut(i).copy_from(&updated);
    }
    for &x in batch {
        let class = linalg::argmax_slice(state.scores.row(x).iter().cloned());
        state.assigned[x] = Some(class);
        state.unlabeled.remove(&x);
        state.labeled.insert(x);
        state.touched.insert(x);
    }
    state.round += 1;
    Ok(())
}

/// Feedback in (-1, 1): a sigmoid of how much class mass the batch rows
/// accumulated relative to the uninformative level `s / c`.
pub fn feedback(batch_scores: &DMatrix<f64>, gamma_fb: f64, batch_size: usize) -> f64 {
    let c = batch_scores.ncols().max(1);
    let mass: f64 = batch_scores.iter().map(|v| v * v).sum();
    let drive = mass - batch_size as f64 / c as f64;
    2.0 / (1.0 + (-gamma_fb * drive).exp()) - 1.0
}

/// Result of a full curriculum run.
#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub result: PropagationResult,
    pub history: Vec<CurriculumRound>,
}

/// Runs the full teaching-to-learn loop until every node is classified.
/// Batch sizing follows `s = max(1, ceil(b * max(g, 0)))` with `b` the
/// frontier size, so progress is guaranteed even under negative feedback.
/// Unlabeled nodes cut off from the labeled set are assigned the class of
/// their Euclidean-nearest labeled sample, with a warning.
pub fn tllt_run(data: &Dataset, g: &Graph, cfg: &TeacherConfig) -> Result<CurriculumOutcome> {
    cfg.validate()?;
    if g.n() != data.n() {
        return Err(Error::InvalidParameter(
            "graph and dataset sizes disagree".into(),
        ));
    }
    let labeled_classes: BTreeSet<usize> = data.labels().iter().flatten().copied().collect();
    if labeled_classes.len() < 2 {
        return Err(Error::MissingLabels(
            "curriculum propagation needs labels in at least two classes".into(),
        ));
    }
    let p = g.random_walk_matrix();
    let mut state = CurriculumState::new(data);
    let mut batch_target = cfg.s_initial;

    for _ in 0..data.n() + 1 {
        if state.unlabeled.is_empty() {
            break;
        }
        let frontier = state.frontier(g);
        if frontier.is_empty() {
            assign_stranded_nodes(data, &mut state, cfg);
            break;
        }
        let batch_size = batch_target.min(frontier.len());
        let class_sets = state.class_sets(data.num_classes());
        let batch = select_batch(
            g,
            &frontier,
            &state.labeled.iter().copied().collect::<Vec<_>>(),
            &class_sets,
            batch_size,
            cfg.epsilon_gmrf,
        )?;
        learner_step(&p, &mut state, &batch)?;

        let batch_scores = rows_of(&state.scores, &batch);
        let g_t = feedback(&batch_scores, cfg.gamma_fb, batch.len());
        state.history.push(CurriculumRound {
            round: state.round,
            selected: batch.clone(),
            assigned: batch
                .iter()
                .map(|&x| state.assigned[x].expect("batch node was hardened"))
                .collect(),
            batch_size,
            feedback: g_t,
        });

        let next_frontier = state.frontier(g).len();
        batch_target = ((next_frontier as f64 * g_t.max(0.0)).ceil() as usize).max(1);
    }

    debug_assert!(state.unlabeled.is_empty());
    let predicted: Vec<usize> = (0..data.n())
        .map(|i| state.assigned[i].expect("every node is classified"))
        .collect();
    let rounds = state.round;
    Ok(CurriculumOutcome {
        result: PropagationResult {
            scores: state.scores.clone(),
            predicted,
            iterations: rounds,
            converged: true,
        },
        history: state.history,
    })
}

/// Residual nodes with no path to the labeled set: label each by its
/// Euclidean-nearest labeled sample and record one synthetic round.
fn assign_stranded_nodes(data: &Dataset, state: &mut CurriculumState, cfg: &TeacherConfig) {
    let stranded: Vec<usize> = state.unlabeled.iter().copied().collect();
    log::warn!(
        "{} unlabeled nodes are disconnected from the labeled set; \
         falling back to nearest labeled samples",
        stranded.len()
    );
    let labeled: Vec<usize> = state.labeled.iter().copied().collect();
    let mut assigned_classes = Vec::with_capacity(stranded.len());
    for &x in &stranded {
        let nearest = labeled
            .iter()
            .copied()
            .min_by(|&a, &b| {
                data.distance(x, a)
                    .partial_cmp(&data.distance(x, b))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .expect("labeled set is nonempty");
        let class = state.assigned[nearest].expect("labeled node carries a class");
        state.assigned[x] = Some(class);
        for c in 0..data.num_classes() {
            state.scores[(x, c)] = if c == class { 1.0 } else { 0.0 };
        }
        assigned_classes.push(class);
    }
    for &x in &stranded {
        state.unlabeled.remove(&x);
        state.labeled.insert(x);
        state.touched.insert(x);
    }
    state.round += 1;
    let batch_scores = rows_of(&state.scores, &stranded);
    let g_t = feedback(&batch_scores, cfg.gamma_fb, stranded.len());
    state.history.push(CurriculumRound {
        round: state.round,
        selected: stranded,
        assigned: assigned_classes,
        batch_size: 0,
        feedback: g_t,
    });
}

fn rows_of(scores: &LabelMatrix, nodes: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(nodes.len(), scores.ncols());
    for (r, &i) in nodes.iter().enumerate() {
        out.row_mut(r).copy_from(&scores.row(i));
    }
    out
}

/// Serializes the round history as JSON lines. With ground truth, each
/// record carries the accuracy over all nodes assigned so far.
pub fn history_json_lines(history: &[CurriculumRound], truth: Option<&[usize]>) -> String {
    #[derive(Serialize)]
    struct Record<'a> {
        t: usize,
        selected: &'a [usize],
        assigned: &'a [usize],
        batch_size: usize,
        feedback: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        accuracy_so_far: Option<f64>,
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut out = String::new();
    for round in history {
        if let Some(truth) = truth {
            for (&node, &class) in round.selected.iter().zip(&round.assigned) {
                total += 1;
                if truth[node] == class {
                    correct += 1;
                }
            }
        }
        let record = Record {
            t: round.round,
            selected: &round.selected,
            assigned: &round.assigned,
            batch_size: round.batch_size,
            feedback: round.feedback,
            accuracy_so_far: truth.map(|_| correct as f64 / total.max(1) as f64),
        };
        out.push_str(&serde_json::to_string(&record).expect("history serializes"));
        out.push('\n');
    }
    out
}
