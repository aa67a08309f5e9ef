//! Batched exponentials for softmax evaluation.
//!
//! The likelihood spends most of its time exponentiating utility gaps, all
//! of which are nonpositive after max-subtraction. `exp_inplace` evaluates
//! e^x with Cody-Waite argument reduction and a degree-12 polynomial (a few
//! ulp of relative error), in AVX2+FMA lanes when the CPU has them. The
//! polynomial path is used on every target, so results do not depend on the
//! host libm.

const LOG2_E: f64 = std::f64::consts::LOG2_E;
#[allow(clippy::excessive_precision)]
const LN2_HI: f64 = 6.931_471_803_691_238_16e-1;
#[allow(clippy::excessive_precision)]
const LN2_LO: f64 = 1.908_214_929_270_587_70e-10;

/// Results below the normal f64 range flush to zero (both paths agree).
const UNDERFLOW: f64 = -708.0;

/// Taylor coefficients 1/k! for k = 2..=12, consumed by Horner evaluation.
const COEFFS: [f64; 11] = [
    0.5,
    1.0 / 6.0,
    1.0 / 24.0,
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5_040.0,
    1.0 / 40_320.0,
    1.0 / 362_880.0,
    1.0 / 3_628_800.0,
    1.0 / 39_916_800.0,
    1.0 / 479_001_600.0,
];

/// Scalar path. Mirrors the SIMD lane operation for operation (all fused
/// multiply-adds), so remainders and full lanes round identically.
#[inline]
fn exp_scalar(x: f64) -> f64 {
    if x < UNDERFLOW {
        return 0.0;
    }
    // x = n ln2 + r with |r| <= ln2 / 2.
    let n = (x * LOG2_E).round();
    let r1 = (-n).mul_add(LN2_HI, x);
    let r = (-n).mul_add(LN2_LO, r1);
    let mut poly = COEFFS[10];
    for c in COEFFS[..10].iter().rev() {
        poly = poly.mul_add(r, *c);
    }
    let expr = 1.0 + poly.mul_add(r * r, r);
    // 2^n by exponent construction; the cutoff keeps the biased exponent
    // positive and nonpositive softmax arguments keep it from overflowing.
    let n = n as i64;
    expr * f64::from_bits(((n + 1023).max(0) as u64) << 52)
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use super::{COEFFS, LN2_HI, LN2_LO, LOG2_E, UNDERFLOW};
    use std::arch::x86_64::*;

    /// # Safety
    /// Requires AVX2 and FMA.
    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn exp_inplace(values: &mut [f64]) {
        let mut chunks = values.chunks_exact_mut(4);
        for chunk in &mut chunks {
            let x = _mm256_loadu_pd(chunk.as_ptr());
            let n = _mm256_round_pd::<{ _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC }>(
                _mm256_mul_pd(x, _mm256_set1_pd(LOG2_E)),
            );
            let r = _mm256_fnmadd_pd(
                n,
                _mm256_set1_pd(LN2_LO),
                _mm256_fnmadd_pd(n, _mm256_set1_pd(LN2_HI), x),
            );
            let mut poly = _mm256_set1_pd(COEFFS[10]);
            for c in COEFFS[..10].iter().rev() {
                poly = _mm256_fmadd_pd(poly, r, _mm256_set1_pd(*c));
            }
            let r2 = _mm256_mul_pd(r, r);
            let expr = _mm256_add_pd(
                _mm256_set1_pd(1.0),
                _mm256_fmadd_pd(poly, r2, r),
            );
            // 2^n: shift the biased exponent into place. Arguments at or
            // below the underflow cutoff are zeroed afterwards; softmax
            // arguments are <= 0 so overflow cannot happen.
            let biased = _mm256_add_epi64(
                _mm256_cvtpd_epi64_compat(n),
                _mm256_set1_epi64x(1023),
            );
            // Clamp the biased exponent at zero: values that deep are
            // handled by the underflow mask.
            let biased = _mm256_max_epi64_compat(biased, _mm256_setzero_si256());
            let scale = _mm256_castsi256_pd(_mm256_slli_epi64::<52>(biased));
            let result = _mm256_mul_pd(expr, scale);
            let keep = _mm256_cmp_pd::<_CMP_GE_OQ>(x, _mm256_set1_pd(UNDERFLOW));
            let result = _mm256_and_pd(result, keep);
            _mm256_storeu_pd(chunk.as_mut_ptr(), result);
        }
        for v in chunks.into_remainder() {
            *v = super::exp_scalar(*v);
        }
    }

    /// Convert doubles holding small integers to i64 lanes (AVX2 has no
    /// direct instruction; go through i32).
    #[inline]
    #[target_feature(enable = "avx2")]
    unsafe fn _mm256_cvtpd_epi64_compat(v: __m256d) -> __m256i {
        let as_i32 = _mm256_cvtpd_epi32(v);
        _mm256_cvtepi32_epi64(as_i32)
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    unsafe fn _mm256_max_epi64_compat(a: __m256i, b: __m256i) -> __m256i {
        let gt = _mm256_cmpgt_epi64(a, b);
        _mm256_blendv_epi8(b, a, gt)
    }
}

#[cfg(target_arch = "x86_64")]
fn have_avx2() -> bool {
    use std::sync::OnceLock;
    static AVAILABLE: OnceLock<bool> = OnceLock::new();
    *AVAILABLE
        .get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
}

/// Replaces every element with its exponential.
pub fn exp_inplace(values: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if have_avx2() {
        unsafe { avx::exp_inplace(values) };
        return;
    }
    for v in values.iter_mut() {
        *v = exp_scalar(*v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_std_exp_to_a_few_ulp() {
        let mut values: Vec<f64> = Vec::new();
        let mut x = -60.0;
        while x <= 0.0 {
            values.push(x);
            x += 0.0173;
        }
        values.extend_from_slice(&[0.0, -1e-12, -300.0, -707.9]);
        let mut out = values.clone();
        exp_inplace(&mut out);
        for (&x, &got) in values.iter().zip(&out) {
            let want = x.exp();
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-14, "x = {x}: got {got:e}, want {want:e}, rel {rel:e}");
        }
        // Below the cutoff both paths flush to zero.
        let mut tail = vec![-708.1, -745.0, -1.0e4];
        exp_inplace(&mut tail);
        assert_eq!(tail, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn scalar_and_simd_paths_agree_bitwise_on_typical_range() {
        // Softmax arguments live in roughly [-40, 0]; both paths use the
        // same reduction and polynomial so lanes must agree with scalars.
        let values: Vec<f64> = (0..1023).map(|i| -(i as f64) * 0.037).collect();
        let mut simd = values.clone();
        exp_inplace(&mut simd);
        for (&x, &s) in values.iter().zip(&simd) {
            assert_eq!(s.to_bits(), exp_scalar(x).to_bits(), "x = {x}");
        }
    }
}
