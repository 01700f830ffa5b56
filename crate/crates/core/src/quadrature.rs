//! Adaptive Gauss–Kronrod (7/15) integration on a finite interval.

// Nodes and weights are tabulated to more digits than f64 keeps.
#![allow(clippy::excessive_precision)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: usize = 50;

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// `∫_a^b f`, bisecting until each panel's Kronrod–Gauss gap is below
/// `rel_tol` times the running integral estimate.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let (whole, _) = gk15(&f, a, b);
    recurse(&f, a, b, rel_tol, whole.abs(), 0)
}

fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, scale: f64, depth: usize) -> f64 {
    let (est, err) = gk15(f, a, b);
    if err <= rel_tol * scale.max(est.abs()) || err == 0.0 || depth >= MAX_DEPTH {
        return est;
    }
    let mid = 0.5 * (a + b);
    recurse(f, a, mid, rel_tol, scale, depth + 1) + recurse(f, mid, b, rel_tol, scale, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        // ∫_0^1 e^{-1/x} dx = E_2(1), flat near 0.
        let v = integrate(|x: f64| (-1.0 / x).exp(), 0.0, 1.0, 1e-12);
        // E_2(1) = e^{-1} - E_1(1)
        let expected = (-1.0f64).exp() - 0.219_383_934_395_520_3;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }
}
