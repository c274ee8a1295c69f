use crate::lattice::BeliefMap;

/// Record of one refinement run.
///
/// `energies[0]` is the energy of the initial state and `energies[t]` the energy
/// after step `t`, so `energies.len() == iterations + 1`.
#[derive(Debug, Clone)]
pub struct RunTrajectory {
    pub energies: Vec<f64>,
    pub snapshots: Option<Vec<BeliefMap>>,
    pub final_map: BeliefMap,
}

impl RunTrajectory {
    pub fn iterations(&self) -> usize {
        self.energies.len() - 1
    }

    /// True if no step raised the energy by more than `tol`.
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Applies `step` `iterations` times, evaluating `energy` on the initial state and
/// after every step.
pub fn iterate(
    initial: &BeliefMap,
    iterations: usize,
    keep_snapshots: bool,
    mut step: impl FnMut(&BeliefMap) -> crate::Result<BeliefMap>,
    energy: impl Fn(&BeliefMap) -> crate::Result<f64>,
) -> crate::Result<RunTrajectory> {
    let mut energies = Vec::with_capacity(iterations + 1);
    let mut snapshots = keep_snapshots.then(|| Vec::with_capacity(iterations + 1));
    let mut current = initial.clone();
    energies.push(energy(&current)?);
    if let Some(s) = snapshots.as_mut() {
        s.push(current.clone());
    }
    for _ in 0..iterations {
        current = step(&current)?;
        energies.push(energy(&current)?);
        if let Some(s) = snapshots.as_mut() {
            s.push(current.clone());
        }
    }
    Ok(RunTrajectory { energies, snapshots, final_map: current })
}
