#![allow(dead_code)]

pub mod oracle;

use proptest::prelude::*;
use refex_core::synth::{generate_page, GeneratedPage, LayoutKind, NoiseProfile, PageTemplate};

pub fn layout_kind() -> impl Strategy<Value = LayoutKind> {
    proptest::sample::select(LayoutKind::ALL.to_vec())
}

/// A generated page, clean or heavily perturbed.
pub fn generated_page() -> impl Strategy<Value = GeneratedPage> {
    (any::<u64>(), layout_kind(), any::<bool>()).prop_map(|(seed, kind, heavy)| {
        let noise = if heavy { NoiseProfile::heavy() } else { NoiseProfile::none() };
        generate_page(seed, 1, &PageTemplate::new(kind, noise)).expect("valid template")
    })
}
