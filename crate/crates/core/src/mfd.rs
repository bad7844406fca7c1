//! Most favorable distribution: the empirical samples moved onto the fairness manifold.

use std::io::Write;
use std::path::Path;

use crate::domain::{fairness_gap, sigmoid_score, Dataset, LogisticModel};
use crate::error::{Error, Result};
use crate::projection::{squared_projection_odd, squared_projection_opp, ProjectionResult};
use crate::scalar::Real;

/// Relative tolerance on the fairness gaps left by a transport plan.
pub const RESIDUAL_TOLERANCE: f64 = 1e-4;

/// Atoms `x̂ᵢ − Δᵢ` of the most favorable distribution with their origins.
///
/// Atom `j < N` is sample `j`. A sample whose inner problem has two optimal
/// minimizers contributes a second atom, appended after the first `N`, and the
/// two atoms share that sample's mass according to `weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T> {
    pub origins: Dataset<T>,
    pub destinations: Dataset<T>,
    pub displacement_norms: Vec<T>,
    /// Mass of each atom in units of `1/N`.
    pub weights: Vec<T>,
    /// Input row of each atom.
    pub sources: Vec<usize>,
    pub projection: ProjectionResult<T>,
}

impl<T: Real> TransportPlan<T> {
    pub fn sensitive(&self) -> &[u8] {
        self.origins.sensitive()
    }

    pub fn labels(&self) -> &[u8] {
        self.origins.labels()
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Number of input samples.
    pub fn samples(&self) -> usize {
        self.projection.k_star.len()
    }

    /// `(1/N) Σ wⱼ ‖Δⱼ‖²`.
    pub fn cost(&self) -> T {
        let n = T::from_count(self.samples());
        self.displacement_norms
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * v * v)
            .sum::<T>()
            / n
    }

    /// Weighted fairness gap of the destinations within label group `y`.
    pub fn gap(&self, model: &LogisticModel<T>, y: u8) -> Result<T> {
        let mut sum = [T::zero(); 2];
        let mut mass = [T::zero(); 2];
        for j in 0..self.len() {
            if self.labels()[j] != y {
                continue;
            }
            let a = self.sensitive()[j] as usize;
            sum[a] = sum[a] + self.weights[j] * sigmoid_score(model, self.destinations.row(j))?;
            mass[a] = mass[a] + self.weights[j];
        }
        if !(mass[0] > T::zero() && mass[1] > T::zero()) {
            return fairness_gap(&self.destinations, model, y);
        }
        Ok(sum[1] / mass[1] - sum[0] / mass[0])
    }

    /// Writes one row per atom: origin coordinates, destination coordinates, `a`, `y`, `‖Δ‖`, weight.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let d = self.origins.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        header.extend((1..=d).map(|j| format!("dest_x{j}")));
        header.extend(["a", "y", "norm", "weight"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.origins.row(i).iter().map(|v| v.as_f64().to_string()).collect();
            rec.extend(self.destinations.row(i).iter().map(|v| v.as_f64().to_string()));
            rec.push(self.sensitive()[i].to_string());
            rec.push(self.labels()[i].to_string());
            rec.push(self.displacement_norms[i].as_f64().to_string());
            rec.push(self.weights[i].as_f64().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })
    }
}

/// Equal opportunity: only `y = 1` rows move.
pub fn most_favorable_opp<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>) -> Result<TransportPlan<T>> {
    let proj = squared_projection_opp(data, model)?;
    build(data, model, proj, &[1])
}

/// Equalized odds: both label groups move, each with its own multiplier.
pub fn most_favorable_odd<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>) -> Result<TransportPlan<T>> {
    let proj = squared_projection_odd(data, model)?;
    build(data, model, proj, &[1, 0])
}

fn build<T: Real>(
    data: &Dataset<T>,
    model: &LogisticModel<T>,
    proj: ProjectionResult<T>,
    groups: &[u8],
) -> Result<TransportPlan<T>> {
    let d = data.dim();
    let mut origins = data.features().to_vec();
    let mut dest: Vec<T> = origins.iter().zip(&proj.displacements).map(|(&x, &delta)| x - delta).collect();
    let mut sensitive = data.sensitive().to_vec();
    let mut labels = data.labels().to_vec();
    let mut weights = vec![T::one(); data.len()];
    let mut sources: Vec<usize> = (0..data.len()).collect();
    let mut displacements = proj.displacements.clone();
    for s in &proj.splits {
        let x = data.row(s.row);
        weights[s.row] = T::one() - s.share;
        weights.push(s.share);
        sources.push(s.row);
        origins.extend_from_slice(x);
        dest.extend(x.iter().zip(&s.displacement).map(|(&x, &delta)| x - delta));
        displacements.extend_from_slice(&s.displacement);
        sensitive.push(data.sensitive()[s.row]);
        labels.push(data.labels()[s.row]);
    }
    let displacement_norms = displacements
        .chunks(d.max(1))
        .map(|c| c.iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    let plan = TransportPlan {
        origins: Dataset::from_flat(origins, d, sensitive.clone(), labels.clone())?,
        destinations: Dataset::from_flat(dest, d, sensitive, labels)?,
        displacement_norms,
        weights,
        sources,
        projection: proj,
    };
    for &y in groups {
        let before = fairness_gap(data, model, y)?.as_f64();
        let after = plan.gap(model, y)?.as_f64();
        let tolerance = RESIDUAL_TOLERANCE * before.abs().max(1.0);
        if !(after.abs() <= tolerance) {
            return Err(Error::ResidualGap {
                y,
                residual: after,
                tolerance,
            });
        }
    }
    Ok(plan)
}

/// Fairness gaps `(y = 1, y = 0)` of the destination atoms, weighted by their mass.
pub fn verify_plan<T: Real>(plan: &TransportPlan<T>, model: &LogisticModel<T>) -> Result<(T, T)> {
    Ok((plan.gap(model, 1)?, plan.gap(model, 0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_per_cell() -> Dataset<f64> {
        Dataset::from_rows(
            vec![vec![1.0, 0.5], vec![-0.5, 0.2], vec![0.3, -1.0], vec![0.8, 0.1]],
            vec![1, 0, 1, 0],
            vec![1, 1, 0, 0],
        )
        .unwrap()
    }

    #[test]
    fn odd_moves_every_row_along_beta() {
        let d = one_per_cell();
        let m = LogisticModel::new(vec![1.0, -2.0], 0.1).unwrap();
        let plan = most_favorable_odd(&d, &m).unwrap();
        let (g1, g0) = verify_plan(&plan, &m).unwrap();
        assert!(g1.abs() < 1e-4 && g0.abs() < 1e-4);
        for i in 0..4 {
            let delta = plan.projection.displacement(i);
            assert!(plan.displacement_norms[i] > 0.0);
            let cross = delta[0] * m.beta()[1] - delta[1] * m.beta()[0];
            assert!(cross.abs() < 1e-12);
        }
        let rel = (plan.cost() - plan.projection.r_squared).abs() / plan.projection.r_squared;
        assert!(rel < 1e-6);
        assert_eq!(plan.sensitive(), d.sensitive());
        assert_eq!(plan.labels(), d.labels());
    }

    #[test]
    fn opp_leaves_negatives_in_place() {
        let d = one_per_cell();
        let m = LogisticModel::new(vec![1.0, -2.0], 0.1).unwrap();
        let plan = most_favorable_opp(&d, &m).unwrap();
        assert_eq!(plan.destinations.row(2), d.row(2));
        assert_eq!(plan.destinations.row(3), d.row(3));
        assert_eq!(plan.displacement_norms[2], 0.0);
        assert!(verify_plan(&plan, &m).unwrap().0.abs() < 1e-4);
    }

    #[test]
    fn identity_plan_on_fair_data() {
        let d = Dataset::from_rows(
            vec![vec![1.0], vec![1.0], vec![-2.0], vec![-2.0]],
            vec![1, 0, 1, 0],
            vec![1, 1, 0, 0],
        )
        .unwrap();
        let m = LogisticModel::new(vec![0.7], 0.0).unwrap();
        let plan = most_favorable_odd(&d, &m).unwrap();
        assert_eq!(plan.destinations, d);
        assert_eq!(verify_plan(&plan, &m).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn csv_export_layout() {
        let d = one_per_cell();
        let m = LogisticModel::new(vec![1.0, -2.0], 0.1).unwrap();
        let plan = most_favorable_opp(&d, &m).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,dest_x1,dest_x2,a,y,norm,weight");
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn kinks_split_mass_between_minimizers() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from_seed(30);
        let mut split_plans = 0;
        for _ in 0..200 {
            let n = rng.random_range(8..30);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
            let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let y: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
            let d = Dataset::from_rows(rows, a, y).unwrap();
            let m = LogisticModel::new(vec![rng.random_range(0.5..3.0)], rng.random_range(-1.0..1.0)).unwrap();
            let plan = most_favorable_opp(&d, &m).unwrap();
            if plan.projection.splits.is_empty() {
                continue;
            }
            split_plans += 1;
            assert_eq!(plan.len(), d.len() + plan.projection.splits.len());
            for s in &plan.projection.splits {
                assert!(s.share > 0.0 && s.share < 1.0);
                assert_ne!(s.k, plan.projection.k_star[s.row]);
                assert_eq!(plan.weights[s.row], 1.0 - s.share);
            }
            assert!(verify_plan(&plan, &m).unwrap().0.abs() < 1e-12);
            let r = plan.projection.r_squared;
            assert!((plan.cost() - r).abs() < 1e-9 * r);
        }
        assert!(split_plans > 0);
    }
}
