//! Integer apportionment helpers shared by training sampling and split construction.

/// Split `budget` across `parts` slots as evenly as possible; the first
/// `budget % parts` slots receive one extra unit.
pub fn even_split(budget: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    let base = budget / parts;
    let extra = budget % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Largest-remainder apportionment of `total` seats proportional to `weights`.
///
/// Each slot gets `floor(total * w / W)`; leftover seats go to the largest
/// fractional remainders, lower index first on ties. Zero total weight yields all zeros.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut seats = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as u128 * w as u128;
        seats.push((exact / sum) as usize);
        remainders.push((exact % sum, i));
    }
    let leftover = total - seats.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover) {
        seats[i] += 1;
    }
    seats
}
