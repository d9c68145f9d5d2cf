use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Grid geometry shared by every heightmap of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub cell_size: f64,
}

impl Default for GridSpec {
    /// 64×48 cells at 5 mm.
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            cell_size: 0.005,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Table area covered by the grid, m².
    pub fn area(&self) -> f64 {
        self.cells() as f64 * self.cell_size * self.cell_size
    }

    /// Center of cell `(col, row)` in meters.
    #[inline]
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_size,
            (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.width == 0 || self.height == 0 {
            return Err(SimError::InvalidGrid("zero-sized grid".into()));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(SimError::InvalidGrid(format!(
                "cell size {} must be positive",
                self.cell_size
            )));
        }
        Ok(())
    }
}

/// Top-down surface heights in meters, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub values: Vec<f64>,
}

impl Heightmap {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            width: grid.width,
            height: grid.height,
            cell_size: grid.cell_size,
            values: vec![0.0; grid.cells()],
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.grid().validate()?;
        if self.values.len() != self.width * self.height {
            return Err(SimError::InvalidGrid(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.width,
                self.height
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SimError::InvalidGrid(format!(
                "cell {i} has invalid height {}",
                self.values[i]
            )));
        }
        Ok(())
    }

    /// Text form: a `HMAP <width> <height> <cell_size>` header followed by one
    /// line per row of space-separated heights, 9 significant digits each.
    pub fn to_text(&self) -> String {
        let mut out = format!("HMAP {} {} {}\n", self.width, self.height, self.cell_size);
        for row in self.values.chunks(self.width) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{}", round_sig9(*v)).expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| SimError::Parse("empty heightmap".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "HMAP" {
            return Err(SimError::Parse(format!("bad header {header:?}")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| SimError::Parse(format!("{s:?}: {e}")))
        };
        let width = num(parts[1])?;
        let height = num(parts[2])?;
        let cell_size: f64 = parts[3]
            .parse()
            .map_err(|e| SimError::Parse(format!("{:?}: {e}", parts[3])))?;
        let mut values = Vec::with_capacity(width * height);
        let mut rows = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|e| SimError::Parse(format!("{tok:?}: {e}")))?,
                );
            }
            if values.len() - before != width {
                return Err(SimError::Parse(format!(
                    "row {rows} has {} values, expected {width}",
                    values.len() - before
                )));
            }
            rows += 1;
        }
        if rows != height {
            return Err(SimError::Parse(format!("{rows} rows, expected {height}")));
        }
        let map = Self {
            width,
            height,
            cell_size,
            values,
        };
        map.validate()?;
        Ok(map)
    }
}

/// Rounds to 9 significant decimal digits.
pub fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

/// Gaussian bump `amplitude · exp(-‖p - center‖² / (2 radius²))` sampled at
/// cell centers.
pub fn render_footprint(grid: GridSpec, center: (f64, f64), radius: f64, amplitude: f64) -> Heightmap {
    let mut map = Heightmap::zeros(grid);
    if amplitude == 0.0 {
        return map;
    }
    let inv = 1.0 / (2.0 * radius * radius);
    for row in 0..grid.height {
        for col in 0..grid.width {
            let (x, y) = grid.cell_center(col, row);
            let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
            map.values[row * grid.width + col] = amplitude * (-r2 * inv).exp();
        }
    }
    map
}

/// Negative area-weighted L1 distance between two heightmaps; always ≤ 0.
pub fn reward(observed: &Heightmap, predicted: &Heightmap) -> Result<f64, SimError> {
    if observed.width != predicted.width
        || observed.height != predicted.height
        || observed.cell_size != predicted.cell_size
        || observed.values.len() != predicted.values.len()
    {
        return Err(SimError::GridMismatch {
            observed: (observed.width, observed.height, observed.cell_size),
            predicted: (predicted.width, predicted.height, predicted.cell_size),
        });
    }
    let l1: f64 = observed
        .values
        .iter()
        .zip(&predicted.values)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(-l1 * observed.cell_size * observed.cell_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_amplitude_is_flat() {
        let m = render_footprint(GridSpec::default(), (0.1, 0.1), 0.03, 0.0);
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn peak_at_center() {
        let g = GridSpec::default();
        let (cx, cy) = g.cell_center(20, 17);
        let m = render_footprint(g, (cx, cy), 0.03, 0.05);
        assert!((m.get(20, 17) - 0.05).abs() < 1e-15);
        // off-cell center: peak within one cell of discretization
        let m = render_footprint(g, (cx + 0.002, cy - 0.001), 0.03, 0.05);
        let slope = 0.05 * (1.0 - (-(g.cell_size.powi(2)) / (2.0 * 0.03f64.powi(2))).exp());
        assert!((m.max_value() - 0.05).abs() <= slope);
    }

    #[test]
    fn volume_matches_gaussian_integral() {
        let g = GridSpec::default();
        for cells in [6.0, 8.0, 10.0] {
            let radius = cells * g.cell_size;
            let amp = 0.04;
            let m = render_footprint(g, (0.16, 0.12), radius, amp);
            let vol: f64 = m.values.iter().sum::<f64>() * g.cell_size * g.cell_size;
            let want = 2.0 * std::f64::consts::PI * amp * radius * radius;
            assert!((vol - want).abs() / want < 0.02, "{cells}: {vol} vs {want}");
        }
    }

    #[test]
    fn reward_examples() {
        let g = GridSpec::default();
        let a = render_footprint(g, (0.16, 0.12), 0.03, 0.05);
        assert_eq!(reward(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.values.iter_mut().for_each(|v| *v += 0.01);
        let r = reward(&a, &b).unwrap();
        assert!((r - (-0.01 * g.area())).abs() < 1e-12);
        let other = Heightmap::zeros(GridSpec {
            width: 10,
            ..g
        });
        assert!(matches!(reward(&a, &other), Err(SimError::GridMismatch { .. })));
    }

    #[test]
    fn text_round_trip() {
        let g = GridSpec {
            width: 7,
            height: 3,
            cell_size: 0.005,
        };
        let m = render_footprint(g, (0.017, 0.008), 0.01, 0.0423456789123);
        let text = m.to_text();
        assert!(text.starts_with("HMAP 7 3 0.005\n"));
        let back = Heightmap::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        for (a, b) in m.values.iter().zip(&back.values) {
            assert!((a - b).abs() <= 5e-9 * a.abs());
        }
        assert!(Heightmap::from_text("HMAP 2 1 0.1\n0.1\n").is_err());
        assert!(Heightmap::from_text("HMAP 1 1 0.1\n-0.5\n").is_err());
        assert!(Heightmap::from_text("MAP 1 1 0.1\n0.5\n").is_err());
    }

    fn small_map() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0.0f64..0.1, 12),
            proptest::collection::vec(0.0f64..0.1, 12),
        )
    }

    proptest! {
        #[test]
        fn reward_symmetric_and_shift_invariant((a, b) in small_map(), shift in 0.0f64..0.05) {
            let mk = |v: Vec<f64>| Heightmap { width: 4, height: 3, cell_size: 0.01, values: v };
            let (ma, mb) = (mk(a.clone()), mk(b.clone()));
            let r = reward(&ma, &mb).unwrap();
            prop_assert!(r <= 0.0);
            prop_assert_eq!(r, reward(&mb, &ma).unwrap());
            let sa = mk(a.iter().map(|v| v + shift).collect());
            let sb = mk(b.iter().map(|v| v + shift).collect());
            prop_assert!((reward(&sa, &sb).unwrap() - r).abs() < 1e-15);
        }
    }
}
