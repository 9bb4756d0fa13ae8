use proptest::prelude::*;

use scnn::harness::config::parse_layers;
use scnn::harness::{Network, NetworkConfig};
use scnn::packed::{pack, packed_sym_conv};
use scnn::tensor::{DenseTensor, PairTensor};
use scnn::{
    conv2d_forward, self_cartesian, sym_gen_layer_forward, SequenceFeatures, SymGenKernel, SymPresKernel,
    SymmetryCheck,
};

fn rng(seed: u64) -> scnn::Rng {
    scnn::Rng::new(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generating_output_symmetric(seed in any::<u64>(), l in 1usize..9, n in 1usize..4, ci in 0usize..3, f in 1usize..4) {
        let mut r = rng(seed);
        let c = [1, 3, 5][ci];
        let x = SequenceFeatures::new(DenseTensor::uniform(&[l, n], 2.0, &mut r).unwrap()).unwrap();
        let k = SymGenKernel::random(c, n, f, 1.0, &mut r).unwrap();
        let (out, _) = sym_gen_layer_forward(&self_cartesian(&x), &k, SymmetryCheck::Checked).unwrap();
        prop_assert!(out.tensor().asymmetry().unwrap() <= 1e-12);
    }

    #[test]
    fn packed_conv_matches_full(seed in any::<u64>(), l in 1usize..10, m in 1usize..4, ci in 0usize..3, f in 1usize..4) {
        let mut r = rng(seed);
        let c = [1, 3, 5][ci];
        let raw = DenseTensor::uniform(&[l, l, m], 1.0, &mut r).unwrap();
        let sym = raw.zip_map(&raw.transpose_spatial().unwrap(), |a, b| a + b).unwrap();
        let z = PairTensor::symmetric(sym, 0.0).unwrap();
        let k = SymPresKernel::random(c, m, f, 1.0, &mut r).unwrap();
        let full = conv2d_forward(z.tensor(), &k.expand()).unwrap();
        let packed = packed_sym_conv(&pack(&z).unwrap(), &k).unwrap();
        prop_assert!(packed.unpack().tensor().max_abs_diff(&full).unwrap() <= 1e-12);
        prop_assert_eq!(pack(&packed.unpack()).unwrap(), packed);
    }

    #[test]
    fn scnn_network_symmetric(seed in any::<u64>(), l in 2usize..10) {
        let cfg = NetworkConfig {
            layers: parse_layers("gen:3:3:relu,pres:3:3:none,pres:1:1:sigmoid").unwrap(),
            n: 4,
            ..NetworkConfig::default()
        };
        let mut r = rng(seed);
        let net = Network::init(&cfg, &mut r).unwrap();
        let x = SequenceFeatures::new(DenseTensor::uniform(&[l, 4], 1.0, &mut r).unwrap()).unwrap();
        prop_assert!(net.forward(&x).unwrap().tensor().asymmetry().unwrap() <= 1e-11);
    }
}
