mod common;

use common::{brute_overlap, ssim_direct};
use hairseg::metrics::{dice, evaluate_pair, iou, psnr, ssim, MaskPair, SsimParams};
use hairseg::rng::Rng;
use proptest::prelude::*;

fn mask_from_bits(bits: u32, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((bits >> i) & 1) as u8).collect()
}

#[test]
fn overlap_matches_set_enumeration_up_to_3x3() {
    let mut pairs = 0u64;
    for h in 1..=3 {
        for w in 1..=3 {
            let n = h * w;
            for a in 0..1u32 << n {
                for b in 0..1u32 << n {
                    let (p, t) = (mask_from_bits(a, n), mask_from_bits(b, n));
                    let (ri, rd) = brute_overlap(&p, &t, w);
                    let pair = MaskPair::new(h, w, p, t).unwrap();
                    assert_eq!(iou(&pair).unwrap(), ri, "{h}×{w} {a:b} {b:b}");
                    assert_eq!(dice(&pair).unwrap(), rd, "{h}×{w} {a:b} {b:b}");
                    pairs += 1;
                }
            }
        }
    }
    let expected: u64 = (1..=3).flat_map(|h| (1..=3).map(move |w| 1u64 << (2 * h * w))).sum();
    assert_eq!(pairs, expected);
}

#[test]
fn overlap_matches_on_random_8x8() {
    let mut rng = Rng::new(8);
    for i in 0..10_000 {
        // Vary the foreground rate so single-class and empty cases appear.
        let rate = [0.0, 0.02, 0.3, 0.5, 0.98, 1.0][i % 6];
        let mut draw = || (0..64).map(|_| u8::from(rng.uniform() < rate)).collect::<Vec<_>>();
        let (p, t) = (draw(), draw());
        let (ri, rd) = brute_overlap(&p, &t, 8);
        let pair = MaskPair::new(8, 8, p, t).unwrap();
        assert!((iou(&pair).unwrap() - ri).abs() <= 1e-12);
        assert!((dice(&pair).unwrap() - rd).abs() <= 1e-12);
    }
}

#[test]
fn zero_union_class_is_excluded() {
    let pair = MaskPair::new(2, 2, vec![0; 4], vec![0; 4]).unwrap();
    assert_eq!(iou(&pair).unwrap(), 1.0);
    assert_eq!(dice(&pair).unwrap(), 1.0);
    let pair = MaskPair::new(1, 4, vec![1, 1, 0, 0], vec![1, 0, 0, 0]).unwrap();
    // Class 0: 2/3, class 1: 1/2.
    assert!((iou(&pair).unwrap() - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
}

#[test]
fn psnr_closed_form() {
    let t = [0.0; 4];
    let p = [1.0, 0.0, 0.0, 0.0];
    let v = psnr(&p, &t).unwrap();
    assert!((v - 10.0 * 4f64.log10()).abs() < 1e-9);
    assert!((v - 6.0206).abs() < 1e-4);
    assert_eq!(psnr(&t, &t).unwrap(), 100.0);
}

#[test]
fn perfect_prediction() {
    let mut rng = Rng::new(3);
    let m: Vec<u8> = (0..32 * 32).map(|_| u8::from(rng.uniform() < 0.2)).collect();
    let pair = MaskPair::new(32, 32, m.clone(), m).unwrap();
    let r = evaluate_pair(&pair, &SsimParams::default(), None).unwrap();
    assert_eq!((r.iou, r.dice, r.psnr_db, r.ssim, r.lpips), (1.0, 1.0, 100.0, 1.0, None));
}

#[test]
fn ssim_matches_direct_window() {
    let params = SsimParams::default();
    let mut rng = Rng::new(21);
    for (h, w) in [(11, 11), (16, 23), (32, 32)] {
        let x: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + 0.2 * rng.normal(0.0, 1.0)).clamp(0.0, 1.0)).collect();
        let direct = ssim_direct(&x, &y, h, w, 11, 1.5, params.c1(), params.c2());
        let fast = ssim(&x, &y, h, w, &params).unwrap();
        assert!((fast - direct).abs() < 1e-6, "{h}×{w}: {fast} vs {direct}");
    }
    assert!(ssim(&[0.0; 100], &[0.0; 100], 10, 10, &params).is_err());
}

proptest! {
    #[test]
    fn dice_dominates_iou(h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let rate = rng.uniform();
        let mut draw = || (0..h * w).map(|_| u8::from(rng.uniform() < rate)).collect::<Vec<_>>();
        let pair = MaskPair::new(h, w, draw(), draw()).unwrap();
        let (j, d) = (iou(&pair).unwrap(), dice(&pair).unwrap());
        prop_assert!(d + 1e-15 >= j);
        prop_assert!((0.0..=1.0).contains(&j) && (0.0..=1.0).contains(&d));
    }

    #[test]
    fn dice_is_mean_of_per_class_identity(n in 1usize..40, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let rate = rng.uniform();
        let mut draw = || (0..n).map(|_| u8::from(rng.uniform() < rate)).collect::<Vec<_>>();
        let (p, t) = (draw(), draw());
        let mut terms = Vec::new();
        for class in 0..2u8 {
            let inter = p.iter().zip(&t).filter(|(&a, &b)| a == class && b == class).count();
            let union = p.iter().zip(&t).filter(|(&a, &b)| a == class || b == class).count();
            if union > 0 {
                let j = inter as f64 / union as f64;
                terms.push(2.0 * j / (1.0 + j));
            }
        }
        let expected = terms.iter().sum::<f64>() / terms.len() as f64;
        let pair = MaskPair::new(1, n, p, t).unwrap();
        prop_assert!((dice(&pair).unwrap() - expected).abs() < 1e-12);
    }
}
