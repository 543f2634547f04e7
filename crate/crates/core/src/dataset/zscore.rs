use serde::{Deserialize, Serialize};

use super::Feature;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Mean and population standard deviation of one series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
    /// Set when the series has (numerically) zero spread; such series
    /// normalize to all zeros.
    pub constant: bool,
}

impl SeriesStats {
    pub fn fit(series: &[f64]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyInput("zscore fit"));
        }
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        // Summation rounding leaves a residual spread of a few ulps on
        // constant input.
        let constant = std <= 1e-12 * mean.abs().max(1.0);
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (x - self.mean) / self.std
        }
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        if self.constant {
            self.mean
        } else {
            z * self.std + self.mean
        }
    }

    pub fn apply(&self, series: &[f64]) -> Vec<f64> {
        series.iter().map(|&x| self.normalize(x)).collect()
    }
}

/// Z-scores `series`. Without `stats`, the statistics are fitted on `series`
/// itself; with `stats`, they are applied unchanged.
pub fn zscore_fit_apply(series: &[f64], stats: Option<SeriesStats>) -> Result<(Vec<f64>, SeriesStats)> {
    if series.is_empty() {
        return Err(Error::EmptyInput("zscore_fit_apply"));
    }
    let stats = match stats {
        Some(s) => s,
        None => SeriesStats::fit(series)?,
    };
    Ok((stats.apply(series), stats))
}

/// Per (product, feature) statistics fitted on the training time range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub products: Vec<String>,
    pub features: Vec<Feature>,
    /// Indexed `[product][feature]`.
    pub stats: Vec<Vec<SeriesStats>>,
}

impl NormalizationStats {
    pub fn get(&self, product: usize, feature: Feature) -> Option<&SeriesStats> {
        let f = self.features.iter().position(|&x| x == feature)?;
        self.stats.get(product)?.get(f)
    }

    /// Fits statistics for every series of a `[products, features, time]`
    /// cube using only the first `fit_len` time steps.
    pub fn fit_cube(
        products: &[String],
        features: &[Feature],
        cube: &Tensor,
        fit_len: usize,
    ) -> Result<Self> {
        let [n, f, t] = cube.shape()[..] else {
            return Err(Error::dim("fit_cube", cube.shape(), &[products.len(), features.len(), 0]));
        };
        if n != products.len() || f != features.len() {
            return Err(Error::dim("fit_cube", cube.shape(), &[products.len(), features.len(), t]));
        }
        if fit_len == 0 || fit_len > t {
            return Err(Error::Config(format!(
                "fit range {fit_len} outside 1..={t} time steps"
            )));
        }
        let stats = (0..n)
            .map(|p| {
                (0..f)
                    .map(|k| {
                        let start = (p * f + k) * t;
                        SeriesStats::fit(&cube.data()[start..start + fit_len])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            products: products.to_vec(),
            features: features.to_vec(),
            stats,
        })
    }

    /// Z-scores every series of a cube shaped like the one fitted.
    pub fn apply_cube(&self, cube: &Tensor) -> Result<Tensor> {
        let [n, f, t] = cube.shape()[..] else {
            return Err(Error::dim("apply_cube", cube.shape(), &[]));
        };
        if n != self.products.len() || f != self.features.len() {
            return Err(Error::dim(
                "apply_cube",
                cube.shape(),
                &[self.products.len(), self.features.len(), t],
            ));
        }
        let mut out = cube.clone();
        for (series, s) in out
            .data_mut()
            .chunks_mut(t)
            .zip(self.stats.iter().flatten())
        {
            for v in series {
                *v = s.normalize(*v);
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("product,feature,mean,std,constant\n");
        for (p, row) in self.products.iter().zip(&self.stats) {
            for (f, s) in self.features.iter().zip(row) {
                out.push_str(&format!("{p},{f},{},{},{}\n", s.mean, s.std, s.constant));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_series() {
        let (z, s) = zscore_fit_apply(&[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((z[0] + expected).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        assert!((z[2] - expected).abs() < 1e-12);
        assert!((z[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn constant_series_flags_and_zeros() {
        let (z, s) = zscore_fit_apply(&[5.0, 5.0, 5.0], None).unwrap();
        assert!(s.constant);
        assert_eq!(z, vec![0.0; 3]);
        let (z, s) = zscore_fit_apply(&[0.1; 7], None).unwrap();
        assert!(s.constant);
        assert_eq!(z, vec![0.0; 7]);
        assert_eq!(s.denormalize(0.3), s.mean);
    }

    #[test]
    fn refit_is_idempotent() {
        let (z, _) = zscore_fit_apply(&[3.0, 9.5, -1.0, 4.25, 0.0], None).unwrap();
        let (z2, s2) = zscore_fit_apply(&z, None).unwrap();
        assert!(s2.mean.abs() < 1e-9 && (s2.std - 1.0).abs() < 1e-9);
        for (a, b) in z.iter().zip(&z2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn applies_given_stats() {
        let stats = SeriesStats {
            mean: 10.0,
            std: 2.0,
            constant: false,
        };
        let (z, s) = zscore_fit_apply(&[12.0, 8.0], Some(stats)).unwrap();
        assert_eq!(z, vec![1.0, -1.0]);
        assert_eq!(s, stats);
        assert_eq!(stats.denormalize(1.0), 12.0);
    }

    #[test]
    fn cube_stats_use_prefix_only() {
        let cube = Tensor::new(vec![1, 2, 4], vec![1.0, 3.0, 100.0, 100.0, 2.0, 2.0, 2.0, 7.0]).unwrap();
        let names = vec!["A".to_string()];
        let feats = vec![Feature::SalesOrder, Feature::Production];
        let stats = NormalizationStats::fit_cube(&names, &feats, &cube, 2).unwrap();
        let s = stats.get(0, Feature::SalesOrder).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(stats.get(0, Feature::Production).unwrap().constant);
        let z = stats.apply_cube(&cube).unwrap();
        assert_eq!(&z.data()[..4], &[-1.0, 1.0, 98.0, 98.0]);
        assert_eq!(&z.data()[4..], &[0.0; 4]);
        assert!(NormalizationStats::fit_cube(&names, &feats, &cube, 5).is_err());
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            zscore_fit_apply(&[], None),
            Err(Error::EmptyInput(_))
        ));
    }
}
