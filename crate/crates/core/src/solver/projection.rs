use super::SolverError;

/// Euclidean projection of `v` onto `{0 ≤ x ≤ caps, Σx = budget}`.
///
/// The projection is `x_i = clamp(v_i - λ, 0, u_i)` for the unique shift `λ`
/// making the sum equal to the budget; `λ` is found by bisection, then
/// recomputed in closed form on the identified free set, and the last
/// rounding residual is spread over the free coordinates.
pub fn project_capped_simplex(v: &[f64], budget: f64, caps: &[f64]) -> Result<Vec<f64>, SolverError> {
    assert_eq!(v.len(), caps.len(), "caps must match the vector length");
    let cap_total: f64 = caps.iter().sum();
    if !(cap_total >= budget * (1.0 - 1e-12)) || !(budget >= 0.0) {
        return Err(SolverError::Infeasible(format!("capacity {cap_total} below budget {budget}")));
    }
    let clamp = |lambda: f64| -> Vec<f64> {
        v.iter().zip(caps).map(|(vi, ui)| (vi - lambda).clamp(0.0, *ui)).collect()
    };
    let total = |lambda: f64| -> f64 { v.iter().zip(caps).map(|(vi, ui)| (vi - lambda).clamp(0.0, *ui)).sum() };

    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    // total(hi) = 0 ≤ B and total(lo) ≥ min(Σu, B) = B.
    let mut hi = vmax;
    let mut lo = vmin - budget;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);

    // Closed form on the free set.
    let (mut free_sum, mut free_count, mut capped_sum) = (0.0, 0usize, 0.0);
    for (vi, ui) in v.iter().zip(caps) {
        let xi = vi - lambda;
        if xi >= *ui {
            capped_sum += ui;
        } else if xi > 0.0 {
            free_sum += vi;
            free_count += 1;
        }
    }
    if free_count > 0 {
        let exact = (free_sum + capped_sum - budget) / free_count as f64;
        if (total(exact) - budget).abs() <= (total(lambda) - budget).abs() {
            lambda = exact;
        }
    }
    let mut x = clamp(lambda);

    let residual = budget - x.iter().sum::<f64>();
    if residual != 0.0 {
        let movable = |i: usize| if residual > 0.0 { x[i] < caps[i] } else { x[i] > 0.0 };
        let mut targets: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0 && x[i] < caps[i]).collect();
        if targets.is_empty() {
            targets = (0..x.len()).filter(|&i| movable(i)).collect();
        }
        if !targets.is_empty() {
            let share = residual / targets.len() as f64;
            for i in targets {
                x[i] = (x[i] + share).clamp(0.0, caps[i]);
            }
        }
    }
    Ok(x)
}
